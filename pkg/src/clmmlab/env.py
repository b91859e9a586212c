"""Hourly liquidity-provision environment.

One step = one hour. The agent observes market features plus its account
(cash c, center tick m, width w, position value l) and picks an action in
{0..n_actions}: 0 holds the current interval, a >= 1 reallocates the whole
budget c + l into a fresh interval of half-width a tick-spacings centered
on the snapped current tick. The hour then elapses along an intra-hour
price path; fees, LVR and value changes accrue on the (possibly new)
position.

Rewards:
    hedged    r = -gas * [a != 0] + fee + lvr        (lvr <= 0)
    unhedged  r = -gas * [a != 0] + fee + dv

Cash never compounds into the position while holding: fees pile up in c
and are reinvested only at the next reallocation. Gas is charged in the
reward, not deducted from the invested budget, so the episode PnL
decomposes exactly as sum(fee) - gas * n_realloc + sum(lvr or dv).

Intra-hour path models:
    candle      close_t -> open -> low -> high -> close for an up candle
                (close >= open), high before low for a down candle
    open-close  close_t -> open -> close
    swap-replay close_t -> open -> (event prices) -> close, falling back
                to open-close for hours with no recorded events
"""

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .accounting import lvr_over_path
from .amm import (
    LiquidityPosition,
    PoolSpec,
    band_for_center,
    liquidity_for_budget,
    price_to_tick,
    snap_tick,
)
from .features import (
    OBSERVATION_DIM,
    WARMUP_CANDLES,
    FeatureScaler,
    assemble_observation,
    compute_feature_matrix,
)
from .marketdata import Candle

PATH_MODELS = ("candle", "open-close", "swap-replay")
REWARD_MODES = ("hedged", "unhedged")

TRACE_CSV_HEADER = [
    "t", "action", "fee", "lvr", "gas", "dv", "reward",
    "cash", "center_tick", "width", "value", "close",
]


def hour_path(
    prev_close: float,
    candle: Candle,
    model: str = "candle",
    events: Optional[Sequence[float]] = None,
) -> List[float]:
    """Price points visited while one candle elapses, starting at prev_close.

    The candle model walks open -> low -> high -> close for an up candle
    and open -> high -> low -> close for a down candle; swap-replay splices
    in recorded event prices and falls back to open-close without them.
    """
    if model == "candle":
        if candle.close >= candle.open:
            mids = [candle.low, candle.high]
        else:
            mids = [candle.high, candle.low]
        return [prev_close, candle.open, mids[0], mids[1], candle.close]
    if model == "swap-replay" and events:
        return [prev_close, candle.open, *events, candle.close]
    return [prev_close, candle.open, candle.close]


@dataclass(frozen=True)
class EnvConfig:
    pool: PoolSpec = field(default_factory=PoolSpec)
    l0: float = 250.0
    n_actions: int = 10
    gas: float = 1.0
    path_model: str = "candle"
    reward_mode: str = "hedged"
    episode_length: int = 1000
    warmup: int = WARMUP_CANDLES
    compute_features: bool = True
    obs_mode: str = "scaled"

    def __post_init__(self):
        if self.l0 <= 0.0:
            raise ValueError(f"l0 must be positive, got {self.l0}")
        if self.n_actions < 1:
            raise ValueError(f"n_actions must be >= 1, got {self.n_actions}")
        if self.episode_length < 1:
            raise ValueError(f"episode_length must be >= 1, got {self.episode_length}")
        if self.gas < 0.0:
            raise ValueError(f"gas must be >= 0, got {self.gas}")
        if self.path_model not in PATH_MODELS:
            raise ValueError(f"path_model must be one of {PATH_MODELS}, got {self.path_model!r}")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}, got {self.reward_mode!r}")
        if self.obs_mode not in ("scaled", "raw"):
            raise ValueError(f"obs_mode must be 'scaled' or 'raw', got {self.obs_mode!r}")


class LPEnv:
    """Single-position liquidity provision over a fixed candle series.

    The candle array is shared and never mutated; every episode is a
    deterministic function of (config, offset, action sequence).
    """

    def __init__(
        self,
        candles: Sequence[Candle],
        config: Optional[EnvConfig] = None,
        feature_matrix: Optional[np.ndarray] = None,
        scaler: Optional[FeatureScaler] = None,
        swap_paths: Optional[Dict[int, Sequence[float]]] = None,
    ):
        self.config = config or EnvConfig()
        self.candles = list(candles)
        if len(self.candles) < self.config.warmup + 2:
            raise ValueError(
                f"need at least warmup + 2 = {self.config.warmup + 2} candles, "
                f"got {len(self.candles)}"
            )
        self.scaler = scaler
        self.swap_paths = swap_paths or {}
        if self.config.compute_features:
            if feature_matrix is None:
                feature_matrix = compute_feature_matrix(self.candles)
            if feature_matrix.shape != (len(self.candles), OBSERVATION_DIM - 4):
                raise ValueError(
                    f"feature matrix shape {feature_matrix.shape} does not match "
                    f"{len(self.candles)} candles"
                )
        self.features = feature_matrix
        self._closes = np.array([c.close for c in self.candles])
        self._t = -1
        self._steps_taken = 0
        self.done = True
        self.cash = 0.0
        self.position: Optional[LiquidityPosition] = None
        self.center_tick = 0
        self.width = 0

    # -- episode plumbing ------------------------------------------------

    def min_offset(self) -> int:
        return self.config.warmup

    def max_offset(self) -> int:
        """Largest reset offset with a full episode of data after it."""
        return len(self.candles) - 1 - self.config.episode_length

    def sample_offset(self, rng: np.random.Generator) -> int:
        lo, hi = self.min_offset(), self.max_offset()
        if hi < lo:
            raise ValueError("series too short for a full episode after warmup")
        return int(rng.integers(lo, hi + 1))

    def reset(self, offset: int) -> Optional[np.ndarray]:
        if offset < self.min_offset():
            raise ValueError(
                f"offset {offset} is inside the {self.config.warmup}-candle warmup"
            )
        if offset > self.max_offset():
            raise ValueError(
                f"offset {offset} leaves fewer than episode_length="
                f"{self.config.episode_length} hours of data"
            )
        self._t = offset
        self._steps_taken = 0
        self.done = False
        self.cash = 0.0
        close = self.candles[offset].close
        self._open_position(close, width=1, budget=self.config.l0)
        return self._observe()

    def _open_position(self, price: float, width: int, budget: float) -> None:
        spacing = self.config.pool.tick_spacing
        center = snap_tick(price_to_tick(price), spacing)
        pa, pb = band_for_center(center, width, spacing)
        liq = liquidity_for_budget(budget, price, pa, pb)
        self.position = LiquidityPosition(pa, pb, liq)
        self.center_tick = center
        self.width = width

    # -- state access ----------------------------------------------------

    @property
    def t(self) -> int:
        return self._t

    def position_value(self, price: Optional[float] = None) -> float:
        if self.position is None:
            return 0.0
        if price is None:
            price = self.candles[self._t].close
        return self.position.value(price)

    def _observe(self) -> Optional[np.ndarray]:
        if not self.config.compute_features:
            return None
        close = self.candles[self._t].close
        return assemble_observation(
            self.features[self._t],
            cash=self.cash,
            center_tick=self.center_tick,
            width=self.width,
            value=self.position_value(close),
            mode=self.config.obs_mode,
            l0=self.config.l0,
            close=close,
            tick_spacing=self.config.pool.tick_spacing,
            n_actions=self.config.n_actions,
            scaler=self.scaler,
        )

    # -- dynamics ----------------------------------------------------------

    def _hour_path(self, prev_close: float, candle: Candle, hour_index: int) -> List[float]:
        return hour_path(prev_close, candle, self.config.path_model,
                         self.swap_paths.get(hour_index))

    def step(self, action: int) -> Tuple[Optional[np.ndarray], float, bool, Dict]:
        if self.done:
            raise RuntimeError("episode is done; call reset() first")
        action = int(action)
        if action < 0 or action > self.config.n_actions:
            raise ValueError(
                f"action {action} outside 0..{self.config.n_actions}"
            )
        t = self._t
        close_t = self.candles[t].close
        gas = 0.0
        if action >= 1:
            budget = self.cash + self.position_value(close_t)
            self._open_position(close_t, width=action, budget=budget)
            self.cash = 0.0
            gas = self.config.gas

        nxt = self.candles[t + 1]
        path = self._hour_path(close_t, nxt, t + 1)
        lvr, steps = lvr_over_path(self.position, path, fee_tier=self.config.pool.fee_tier)
        fee = sum(s.fee for s in steps)
        dv = sum(s.value_change for s in steps)
        hedge = sum(s.hedge_pnl for s in steps)

        if self.config.reward_mode == "hedged":
            reward = -gas + fee + lvr
        else:
            reward = -gas + fee + dv

        self.cash += fee
        self._t = t + 1
        self._steps_taken += 1
        self.done = self._steps_taken >= self.config.episode_length
        value = self.position_value(nxt.close)
        info = {
            "t": self._t,
            "action": action,
            "fee": fee,
            "lvr": lvr,
            "gas": gas,
            "dv": dv,
            "hedge_pnl": hedge,
            "reallocated": action >= 1,
            "cash": self.cash,
            "center_tick": self.center_tick,
            "width": self.width,
            "value": value,
            "close": nxt.close,
            "reward": reward,
        }
        return self._observe(), reward, self.done, info


def relative_pnl(rewards: Sequence[float], l0: float) -> float:
    """Episode PnL as a fraction of the initial fund."""
    if l0 <= 0.0:
        raise ValueError(f"l0 must be positive, got {l0}")
    return float(sum(rewards)) / l0


def write_trace_csv(infos: Sequence[Dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for info in infos:
            writer.writerow([
                info["t"], info["action"], repr(info["fee"]), repr(info["lvr"]),
                repr(info["gas"]), repr(info["dv"]), repr(info["reward"]),
                repr(info["cash"]), info["center_tick"], info["width"],
                repr(info["value"]), repr(info["close"]),
            ])

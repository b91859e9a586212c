"""Classical liquidity-provision baselines.

Two strategies:

* tau-reset: hold a width-tau interval and reallocate (full budget, same
  width) whenever the close leaves the interval.
* exponential-weights (EWA): every t_re hours, split the whole wealth
  across simultaneous positions of widths 1..N in proportion to
  softmax(eta * cumulative per-width reward). Per-width rewards are
  measured on unit-budget reference positions of each width so weights
  are scale-free; gas is charged once per reallocation event, not per
  width.

Default hyperparameters for the benchmark pools, periods, and fund sizes
ship in TAU_DEFAULTS / EWA_DEFAULTS.
"""

import math
from dataclasses import dataclass
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
from .env import LPEnv, hour_path
from .marketdata import Candle


def policy_tau_reset(tau: int, position: Optional[LiquidityPosition],
                     close: float) -> int:
    """Reallocate to width tau when the price sits outside the interval."""
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    if position is None:
        return tau
    if close < position.price_lower or close > position.price_upper:
        return tau
    return 0


def run_tau_reset(env: LPEnv, tau: int, offset: int):
    """Roll the tau-reset policy through one episode; returns (rewards, infos)."""
    env.reset(offset)
    rewards: List[float] = []
    infos: List[Dict] = []
    done = False
    while not done:
        close = env.candles[env.t].close
        a = policy_tau_reset(tau, env.position, close)
        _, r, done, info = env.step(a)
        rewards.append(r)
        infos.append(info)
    return rewards, infos


@dataclass(frozen=True)
class EWAConfig:
    n_widths: int = 10
    eta: float = 1.0
    t_re: int = 24

    def __post_init__(self):
        if self.n_widths < 1:
            raise ValueError(f"n_widths must be >= 1, got {self.n_widths}")
        if self.eta <= 0.0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.t_re < 1:
            raise ValueError(f"t_re must be >= 1, got {self.t_re}")


def ewa_weights(cumulative_rewards: Sequence[float], eta: float) -> np.ndarray:
    """Stable softmax of eta * cumulative rewards; sums to 1."""
    z = eta * np.asarray(cumulative_rewards, dtype=float)
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


def _open_width_positions(
    close: float,
    budgets: Sequence[float],
    pool: PoolSpec,
) -> List[LiquidityPosition]:
    center = snap_tick(price_to_tick(close), pool.tick_spacing)
    out = []
    for n, budget in enumerate(budgets, start=1):
        pa, pb = band_for_center(center, n, pool.tick_spacing)
        out.append(LiquidityPosition(pa, pb, liquidity_for_budget(budget, close, pa, pb)))
    return out


def run_ewa(
    candles: Sequence[Candle],
    offset: int,
    horizon: int,
    config: EWAConfig,
    pool: Optional[PoolSpec] = None,
    l0: float = 250.0,
    gas: float = 1.0,
    path_model: str = "candle",
):
    """Replay the exponential-weights strategy over candles[offset:offset+horizon].

    The trigger is the literal periodic rule mod(t, t_re) == 0 for hours
    t = 1..horizon; decisions use close prices and rewards observed so
    far. Hour 0 performs a gas-free uniform initial split.

    Returns (per-hour info dicts, final weights).
    """
    pool = pool or PoolSpec()
    n = config.n_widths
    if offset < 0 or offset + horizon >= len(candles):
        raise ValueError(
            f"need candles through index {offset + horizon}, have {len(candles)}"
        )
    close0 = candles[offset].close
    positions = _open_width_positions(close0, [l0 / n] * n, pool)
    references = _open_width_positions(close0, [1.0] * n, pool)
    cash = 0.0
    cum_rewards = np.zeros(n)
    weights = np.full(n, 1.0 / n)
    infos: List[Dict] = []

    for t in range(1, horizon + 1):
        idx = offset + t
        prev_close = candles[idx - 1].close
        gas_paid = 0.0
        reallocated = False
        if t % config.t_re == 0:
            weights = ewa_weights(cum_rewards, config.eta)
            wealth = cash + sum(p.value(prev_close) for p in positions)
            positions = _open_width_positions(prev_close, wealth * weights, pool)
            references = _open_width_positions(prev_close, [1.0] * n, pool)
            cash = 0.0
            gas_paid = gas
            reallocated = True

        path = hour_path(prev_close, candles[idx], path_model)
        fee = 0.0
        lvr = 0.0
        dv = 0.0
        for pos in positions:
            lvr_n, steps = lvr_over_path(pos, path, fee_tier=pool.fee_tier)
            fee += sum(s.fee for s in steps)
            dv += sum(s.value_change for s in steps)
            lvr += lvr_n
        for k, ref in enumerate(references):
            lvr_r, steps_r = lvr_over_path(ref, path, fee_tier=pool.fee_tier)
            cum_rewards[k] += sum(s.fee for s in steps_r) + lvr_r

        cash += fee
        reward = fee + lvr - gas_paid
        value = sum(p.value(candles[idx].close) for p in positions)
        infos.append({
            "t": t,
            "action": 1 if reallocated else 0,
            "fee": fee,
            "lvr": lvr,
            "gas": gas_paid,
            "dv": dv,
            "hedge_pnl": lvr - dv,
            "reallocated": reallocated,
            "cash": cash,
            "center_tick": 0,
            "width": 0,
            "value": value,
            "close": candles[idx].close,
            "reward": reward,
        })
    return infos, weights


# Benchmark defaults, keyed by (pool, period, l0). Pools are the two
# ETH stablecoin 0.3% pools, periods 1..4, fund sizes 250/500/1000.
TAU_DEFAULTS: Dict[Tuple[str, int, int], int] = {
    ("usdc", 1, 250): 6, ("usdc", 1, 500): 4, ("usdc", 1, 1000): 1,
    ("usdc", 2, 250): 5, ("usdc", 2, 500): 2, ("usdc", 2, 1000): 1,
    ("usdc", 3, 250): 6, ("usdc", 3, 500): 3, ("usdc", 3, 1000): 2,
    ("usdc", 4, 250): 4, ("usdc", 4, 500): 3, ("usdc", 4, 1000): 1,
    ("usdt", 1, 250): 6, ("usdt", 1, 500): 4, ("usdt", 1, 1000): 1,
    ("usdt", 2, 250): 5, ("usdt", 2, 500): 2, ("usdt", 2, 1000): 1,
    ("usdt", 3, 250): 10, ("usdt", 3, 500): 3, ("usdt", 3, 1000): 1,
    ("usdt", 4, 250): 4, ("usdt", 4, 500): 3, ("usdt", 4, 1000): 1,
}

EWA_DEFAULTS: Dict[Tuple[str, int, int], Tuple[int, float, int]] = {
    ("usdc", 1, 250): (10, 1.0, 21), ("usdc", 1, 500): (10, 1.0, 14),
    ("usdc", 1, 1000): (10, 1.0, 6),
    ("usdc", 2, 250): (10, 10.0, 24), ("usdc", 2, 500): (10, 10.0, 24),
    ("usdc", 2, 1000): (10, 10.0, 9),
    ("usdc", 3, 250): (10, 1.0, 22), ("usdc", 3, 500): (10, 4.0, 15),
    ("usdc", 3, 1000): (10, 1.0, 13),
    ("usdc", 4, 250): (10, 7.0, 24), ("usdc", 4, 500): (10, 1.0, 21),
    ("usdc", 4, 1000): (10, 1.0, 18),
    ("usdt", 1, 250): (10, 1.0, 21), ("usdt", 1, 500): (10, 1.0, 6),
    ("usdt", 1, 1000): (10, 1.0, 6),
    ("usdt", 2, 250): (10, 10.0, 24), ("usdt", 2, 500): (10, 10.0, 24),
    ("usdt", 2, 1000): (10, 10.0, 12),
    ("usdt", 3, 250): (10, 1.0, 22), ("usdt", 3, 500): (10, 7.0, 22),
    ("usdt", 3, 1000): (10, 10.0, 3),
    ("usdt", 4, 250): (10, 7.0, 21), ("usdt", 4, 500): (10, 1.0, 21),
    ("usdt", 4, 1000): (10, 1.0, 21),
}


def ewa_config_for(pool: str, period: int, l0: int) -> EWAConfig:
    n, eta, t_re = EWA_DEFAULTS[(pool, period, l0)]
    return EWAConfig(n_widths=n, eta=eta, t_re=t_re)

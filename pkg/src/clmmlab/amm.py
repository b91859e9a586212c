"""Concentrated-liquidity pool math on decimal-adjusted float prices.

Prices live on a geometric tick grid, price(i) = 1.0001**i.  A position with
liquidity L on the band [pa, pb] holds reserves

    p <= pa:        x = L*(1/sqrt(pa) - 1/sqrt(pb)),  y = 0
    pa < p < pb:    x = L*(1/sqrt(p)  - 1/sqrt(pb)),  y = L*(sqrt(p) - sqrt(pa))
    p >= pb:        x = 0,                            y = L*(sqrt(pb) - sqrt(pa))

and is worth V(p) = p*x + y in quote units.  Fees accrue on the part of a
price move that lies inside the band: the trader pays delta/(1-delta) of the
swapped amount, which in quote units works out to

    fee = delta/(1-delta) * L * |sqrt(p2) - sqrt(p1)|

on the clipped segment.  This form telescopes over any refinement of the
move, so fee accrual is independent of how finely a path is sampled.

Everything here is 64-bit float; we are after research-grade accuracy on
human-readable prices, not wei-exact chain state.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

TICK_BASE = 1.0001
LOG_TICK_BASE = math.log(TICK_BASE)

# (fee tier, tick spacing) pairs deployed on the factory
STANDARD_FEE_TIERS = {0.01: 200, 0.003: 60, 0.0005: 10}


def tick_to_price(tick: float) -> float:
    """Price of a (possibly fractional) tick index."""
    return math.exp(tick * LOG_TICK_BASE)


def price_to_tick(price: float) -> float:
    """Real-valued tick index of a price. Inverse of tick_to_price."""
    if price <= 0.0:
        raise ValueError(f"price must be positive, got {price}")
    return math.log(price) / LOG_TICK_BASE


def _round_half_away(x: float) -> int:
    # round() does banker's rounding; the grid wants half-away-from-zero
    if x >= 0.0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def snap_tick(tick: float, spacing: int) -> int:
    """Nearest multiple of `spacing`, ties rounding away from zero."""
    if spacing < 1:
        raise ValueError(f"tick spacing must be >= 1, got {spacing}")
    return spacing * _round_half_away(tick / spacing)


@dataclass(frozen=True)
class PoolSpec:
    """Static pool parameters.

    fee_tier is the swap fee delta as a fraction, tick_spacing the coarseness
    of usable ticks, decimal_shift the signed power of ten that turns the raw
    token ratio into the human-readable price this module works in.
    """

    fee_tier: float = 0.003
    tick_spacing: int = 60
    decimal_shift: int = 0

    def __post_init__(self):
        if not 0.0 < self.fee_tier < 1.0:
            raise ValueError(f"fee_tier must be in (0, 1), got {self.fee_tier}")
        if self.tick_spacing < 1:
            raise ValueError(f"tick_spacing must be >= 1, got {self.tick_spacing}")

    @classmethod
    def for_fee_tier(cls, fee_tier: float, decimal_shift: int = 0) -> "PoolSpec":
        """PoolSpec with the factory-standard spacing for a deployed fee tier."""
        if fee_tier not in STANDARD_FEE_TIERS:
            raise ValueError(
                f"no standard tick spacing for fee tier {fee_tier}; "
                f"known tiers: {sorted(STANDARD_FEE_TIERS)}"
            )
        return cls(fee_tier, STANDARD_FEE_TIERS[fee_tier], decimal_shift)


@dataclass(frozen=True)
class Reserves:
    x: float  # base token (the volatile leg)
    y: float  # quote token


@dataclass(frozen=True)
class LiquidityPosition:
    """Liquidity L active on the price band [price_lower, price_upper].

    Positions minted through the env are always tick-aligned (built via
    from_ticks); the raw constructor exists so the math can be exercised on
    arbitrary bands.
    """

    price_lower: float
    price_upper: float
    liquidity: float

    def __post_init__(self):
        if self.price_lower <= 0.0:
            raise ValueError(f"price_lower must be positive, got {self.price_lower}")
        if self.price_upper <= self.price_lower:
            raise ValueError(
                f"need price_lower < price_upper, got [{self.price_lower}, {self.price_upper}]"
            )
        if self.liquidity < 0.0:
            raise ValueError(f"liquidity must be >= 0, got {self.liquidity}")

    @classmethod
    def from_ticks(
        cls, tick_lower: int, tick_upper: int, liquidity: float, spacing: int = 1
    ) -> "LiquidityPosition":
        if tick_lower % spacing or tick_upper % spacing:
            raise ValueError(
                f"ticks ({tick_lower}, {tick_upper}) not multiples of spacing {spacing}"
            )
        if tick_lower >= tick_upper:
            raise ValueError(f"need tick_lower < tick_upper, got {tick_lower} >= {tick_upper}")
        return cls(tick_to_price(tick_lower), tick_to_price(tick_upper), liquidity)

    def reserves(self, price: float) -> Reserves:
        return reserves(self.liquidity, self.price_lower, self.price_upper, price)

    def value(self, price: float) -> float:
        return position_value(self.liquidity, self.price_lower, self.price_upper, price)


def _check_price(p: float) -> None:
    if p <= 0.0 or not math.isfinite(p):
        raise ValueError(f"price must be positive and finite, got {p}")


def reserves(liquidity: float, price_lower: float, price_upper: float, price: float) -> Reserves:
    """Token amounts backing the position at the given price."""
    _check_price(price)
    sa = math.sqrt(price_lower)
    sb = math.sqrt(price_upper)
    if price <= price_lower:
        return Reserves(liquidity * (1.0 / sa - 1.0 / sb), 0.0)
    if price >= price_upper:
        return Reserves(0.0, liquidity * (sb - sa))
    sp = math.sqrt(price)
    return Reserves(liquidity * (1.0 / sp - 1.0 / sb), liquidity * (sp - sa))


def position_value(liquidity: float, price_lower: float, price_upper: float, price: float) -> float:
    """Mark-to-market value p*x + y in quote units."""
    r = reserves(liquidity, price_lower, price_upper, price)
    return price * r.x + r.y


def value_change(
    liquidity: float, price_lower: float, price_upper: float, p_from: float, p_to: float
) -> float:
    """V(p_to) - V(p_from)."""
    return position_value(liquidity, price_lower, price_upper, p_to) - position_value(
        liquidity, price_lower, price_upper, p_from
    )


def fee_one_move(
    liquidity: float,
    price_lower: float,
    price_upper: float,
    p_from: float,
    p_to: float,
    fee_tier: float,
) -> float:
    """Fee earned by the position while price moves p_from -> p_to.

    Only the part of the move inside [price_lower, price_upper] earns.  Moves
    entirely outside the band, or merely touching a boundary from outside,
    earn zero.
    """
    _check_price(p_from)
    _check_price(p_to)
    lo, hi = (p_from, p_to) if p_from <= p_to else (p_to, p_from)
    if hi <= price_lower or lo >= price_upper:
        return 0.0
    c_lo = max(lo, price_lower)
    c_hi = min(hi, price_upper)
    rate = fee_tier / (1.0 - fee_tier)
    return rate * liquidity * (math.sqrt(c_hi) - math.sqrt(c_lo))


def fee_over_path(
    liquidity: float,
    price_lower: float,
    price_upper: float,
    path: Sequence[float],
    fee_tier: float,
) -> float:
    """Total fee over consecutive moves of a sampled price path."""
    if len(path) == 0:
        raise ValueError("price path is empty")
    total = 0.0
    for p_from, p_to in zip(path, path[1:]):
        total += fee_one_move(liquidity, price_lower, price_upper, p_from, p_to, fee_tier)
    return total


def liquidity_for_budget(
    budget: float, price: float, price_lower: float, price_upper: float
) -> float:
    """Liquidity bought by `budget` quote units at the current price.

    Inverts V(p) = budget for the band; the resulting position is worth
    exactly the budget at `price`.
    """
    if budget < 0.0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    _check_price(price)
    sa = math.sqrt(price_lower)
    sb = math.sqrt(price_upper)
    if price <= price_lower:
        denom = price * (1.0 / sa - 1.0 / sb)
    elif price >= price_upper:
        denom = sb - sa
    else:
        sp = math.sqrt(price)
        denom = price * (1.0 / sp - 1.0 / sb) + (sp - sa)
    return budget / denom


def band_for_center(center_tick: int, width: int, spacing: int) -> Tuple[float, float]:
    """Price bounds of a width-w band of tick intervals around a center tick."""
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    if center_tick % spacing:
        raise ValueError(f"center tick {center_tick} not a multiple of spacing {spacing}")
    half = width * spacing
    return tick_to_price(center_tick - half), tick_to_price(center_tick + half)


def clip_path_to_band(
    path: Sequence[float], price_lower: float, price_upper: float
) -> List[Tuple[float, float]]:
    """Clipped (from, to) segments of each move that lie inside the band."""
    out = []
    for p_from, p_to in zip(path, path[1:]):
        lo, hi = (p_from, p_to) if p_from <= p_to else (p_to, p_from)
        if hi <= price_lower or lo >= price_upper:
            continue
        c_lo = max(lo, price_lower)
        c_hi = min(hi, price_upper)
        if p_from <= p_to:
            out.append((c_lo, c_hi))
        else:
            out.append((c_hi, c_lo))
    return out

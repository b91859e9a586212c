"""Hedged LP accounting: fees, rebalancing loss, hedge leg, mark-to-market.

The rebalancing portfolio holds x(p_t) base tokens and rebalances at every
sample point; relative to it the position loses

    lvr_step = V(p_{t+1}) - V(p_t) - x(p_t) * (p_{t+1} - p_t)
             = p_{t+1} * (x_{t+1} - x_t) + (y_{t+1} - y_t)

per move (the two forms are algebraically identical).  Because V is concave
with V'(p) = x(p), every increment is <= 0.  A short of x(p_t) base tokens
rebalanced on the same clock earns hedge_pnl = -sum x(p_t) dp, so over any
path

    sum dV = sum x(p_t) dp + lvr_total,   i.e.   hedge_pnl = lvr_total - sum dV.

A hedged position's economics therefore reduce to fees earned minus gas
minus |lvr|, with all directional exposure netted out.
"""

import csv
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .amm import LiquidityPosition, fee_one_move


@dataclass(frozen=True)
class LedgerStep:
    """Accounting for one price move p_before -> p_after."""

    p_before: float
    p_after: float
    fee: float
    lvr: float          # non-positive up to float noise
    hedge_pnl: float    # -x(p_before) * (p_after - p_before)
    value_change: float


@dataclass(frozen=True)
class PeriodSummary:
    total_fee: float
    total_lvr_magnitude: float  # positive, as reported
    total_gas: float
    total_hedge_pnl: float
    total_value_change: float
    pnl_hedged: float    # fee - gas - |lvr|
    pnl_unhedged: float  # fee - gas + sum dV


def lvr_over_path(
    position: LiquidityPosition, path: Sequence[float], fee_tier: float = 0.0
) -> Tuple[float, List[LedgerStep]]:
    """Per-move ledger over a sampled path.

    Returns (lvr_total, steps).  Fees are included per move when a fee tier
    is given; fee_tier=0 leaves them at zero, so the same walk serves both
    pure-LVR queries and full accrual.
    """
    if len(path) == 0:
        raise ValueError("price path is empty")
    L = position.liquidity
    pa, pb = position.price_lower, position.price_upper
    steps = []
    lvr_total = 0.0
    r_prev = position.reserves(path[0])
    for p_before, p_after in zip(path, path[1:]):
        r_next = position.reserves(p_after)
        lvr = p_after * (r_next.x - r_prev.x) + (r_next.y - r_prev.y)
        dv = (p_after * r_next.x + r_next.y) - (p_before * r_prev.x + r_prev.y)
        hedge = -r_prev.x * (p_after - p_before)
        fee = fee_one_move(L, pa, pb, p_before, p_after, fee_tier) if fee_tier else 0.0
        steps.append(LedgerStep(p_before, p_after, fee, lvr, hedge, dv))
        lvr_total += lvr
        r_prev = r_next
    return lvr_total, steps


def hedge_pnl_over_path(position: LiquidityPosition, path: Sequence[float]) -> float:
    """PnL of the short hedge leg: -sum x(p_t) * (p_{t+1} - p_t)."""
    if len(path) == 0:
        raise ValueError("price path is empty")
    total = 0.0
    for p_before, p_after in zip(path, path[1:]):
        x = position.reserves(p_before).x
        total += -x * (p_after - p_before)
    return total


def instantaneous_lvr_rate(position: LiquidityPosition, price: float, sigma: float) -> float:
    """Quoted leak rate of a hedged in-range position per unit time.

    Returns sigma^2 * p^2 * V''(p) with V''(p) = -L / (2 p^{3/2}) inside the
    band, zero outside; both boundaries use the in-range branch.  Note the
    quote follows the convention that drops Ito's one-half, so the expected
    one-step LVR of the discrete ledger over a short dt is rate * dt / 2.
    """
    if price <= 0.0:
        raise ValueError(f"price must be positive, got {price}")
    if price < position.price_lower or price > position.price_upper:
        return 0.0
    return -0.5 * position.liquidity * sigma * sigma * math.sqrt(price)


def summarize(
    steps: Sequence[LedgerStep], gas_events: int, gas_unit_cost: float
) -> PeriodSummary:
    """Roll per-move ledger rows up into period totals."""
    if gas_events < 0:
        raise ValueError(f"gas_events must be >= 0, got {gas_events}")
    if gas_unit_cost < 0.0:
        raise ValueError(f"gas_unit_cost must be >= 0, got {gas_unit_cost}")
    total_fee = sum(s.fee for s in steps)
    lvr_signed = sum(s.lvr for s in steps)
    total_gas = gas_events * gas_unit_cost
    total_hedge = sum(s.hedge_pnl for s in steps)
    total_dv = sum(s.value_change for s in steps)
    return PeriodSummary(
        total_fee=total_fee,
        total_lvr_magnitude=-lvr_signed,
        total_gas=total_gas,
        total_hedge_pnl=total_hedge,
        total_value_change=total_dv,
        pnl_hedged=total_fee - total_gas + lvr_signed,
        pnl_unhedged=total_fee - total_gas + total_dv,
    )


LEDGER_CSV_HEADER = ["t", "p_before", "p_after", "fee", "lvr", "hedge_pnl", "dv"]


def write_ledger_csv(steps: Sequence[LedgerStep], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LEDGER_CSV_HEADER)
        for t, s in enumerate(steps):
            w.writerow([t, repr(s.p_before), repr(s.p_after), repr(s.fee),
                        repr(s.lvr), repr(s.hedge_pnl), repr(s.value_change)])

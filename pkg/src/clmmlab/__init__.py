"""clmmlab: a desk-scale laboratory for concentrated-liquidity market making."""

from .amm import (
    LiquidityPosition,
    PoolSpec,
    Reserves,
    fee_one_move,
    fee_over_path,
    liquidity_for_budget,
    position_value,
    price_to_tick,
    reserves,
    snap_tick,
    tick_to_price,
)
from .accounting import (
    LedgerStep,
    PeriodSummary,
    hedge_pnl_over_path,
    instantaneous_lvr_rate,
    lvr_over_path,
    summarize,
)

__version__ = "0.1.0"

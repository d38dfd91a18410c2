"""Piecewise semimartingales of stochastic dimension on a discrete grid.

Paths whose dimension changes at reset times, their dissection into
fixed-dimension pieces, pasted stochastic integrals, event-driven market
simulation, self-financing wealth and pasted deflators.
"""

from .deflator import (
    CheckpointAccumulator,
    DeflatorProcess,
    MartingaleTestReport,
    Mode,
    NoDeflatorError,
    build_piecewise_deflator,
    deflate_and_test,
    deflator_for_scenario,
    martingale_test,
    values_at,
)
from .dissection import (
    DissectedPiece,
    ResetSequenceError,
    ScenarioCell,
    dissect_path,
    dissect_strategy,
    integrate_dissected,
    reassemble,
    refine_resets,
    repiece,
    scenario_cells,
)
from .integration import GainsPath, integrate, jump_exposure, stop, stop_path
from .market import MarketSpec, PieceCapError, SimulatedScenario, simulate, simulate_scenarios
from .paths import (
    DimensionedVector,
    GridError,
    PathPiece,
    PiecewisePath,
    RawPathRecord,
    TimeGrid,
    Violation,
    local_norm,
    minimal_reset_sequence,
    right_limit_at,
    validate_path,
    value_at,
)
from .portfolio import (
    AdmissibilityReport,
    Verdict,
    WealthProcess,
    admissibility_report,
    in_nonnegative_class,
    wealth_process,
)
from .strategies import (
    BuyHold,
    ConstantShare,
    DimensionMismatchError,
    EqualWeight,
    Holdings,
    LookaheadError,
    RuleStrategy,
    ShortOne,
    StepStrategy,
    ZeroStrategy,
    named_rule,
)
from .strict_local import StrictLocalMartSpec, simulate_strict_local_mart

__version__ = "0.1.0"

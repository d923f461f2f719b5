"""convblock: energy-aware loop blocking for convolutional layers.

Analytical access/energy model for blocked convolution loop nests, an
execution simulator that cross-checks every analytical count, schedule
search (exhaustive and beam) for co-designed or fixed memory hierarchies,
multicore partitioning, and whole-network buffer-hierarchy co-design.
"""

from .model import (
    ALL_DIMS,
    BUFFER_KINDS,
    BlockingString,
    BlockingSyntaxError,
    ConvblockError,
    EnergyTable,
    InfeasiblePartitionError,
    LayerShape,
    Loop,
    MemLevel,
    MemoryHierarchy,
    OB_UPDATE_ACCESSES,
    UnschedulableError,
    builtin_benchmarks,
    diannao_baseline,
    divisors,
    parse_blocking,
    render_blocking,
    unblocked_string,
    validate_blocking,
)
from .analysis import (
    AccessProfile,
    BufferAlloc,
    BufferEnergy,
    EnergyReport,
    PackingPlan,
    PoolAssignment,
    access_counts,
    analyze_chains,
    codesign_width,
    derive_buffers,
    energy_per_access,
    pack_buffers,
    schedule_energy,
)
from .simulate import SimLevel, SimTrace, check_equivalence, lru_replay, simulate
from .optimize import (
    ScheduleResult,
    SearchConfig,
    enumerate_orders,
    extent_chains,
    optimize,
    optimize_beam,
    optimize_exhaustive,
    optimize_fixed,
    unblocked_result,
)
from .parallel import (
    CSV_COLUMNS,
    MulticorePlan,
    SCHEMES,
    apply_partition,
    broadcast_energy,
    multicore_report,
    plans_to_csv,
    scheme_sharing_largest_buffer,
    shuffle_energy,
)
from .codesign import (
    DEFAULT_CODESIGN_CFG,
    DesignPoint,
    hierarchy_from_signature,
    joint_select,
    layer_pareto,
    schedule_signature,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_DIMS",
    "AccessProfile",
    "BUFFER_KINDS",
    "BlockingString",
    "BlockingSyntaxError",
    "BufferAlloc",
    "BufferEnergy",
    "CSV_COLUMNS",
    "ConvblockError",
    "DEFAULT_CODESIGN_CFG",
    "DesignPoint",
    "EnergyReport",
    "EnergyTable",
    "InfeasiblePartitionError",
    "LayerShape",
    "Loop",
    "MemLevel",
    "MemoryHierarchy",
    "MulticorePlan",
    "OB_UPDATE_ACCESSES",
    "PackingPlan",
    "PoolAssignment",
    "SCHEMES",
    "ScheduleResult",
    "SearchConfig",
    "SimLevel",
    "SimTrace",
    "UnschedulableError",
    "access_counts",
    "analyze_chains",
    "apply_partition",
    "broadcast_energy",
    "builtin_benchmarks",
    "check_equivalence",
    "codesign_width",
    "derive_buffers",
    "diannao_baseline",
    "divisors",
    "energy_per_access",
    "enumerate_orders",
    "extent_chains",
    "hierarchy_from_signature",
    "joint_select",
    "layer_pareto",
    "lru_replay",
    "multicore_report",
    "optimize",
    "optimize_beam",
    "optimize_exhaustive",
    "optimize_fixed",
    "pack_buffers",
    "parse_blocking",
    "plans_to_csv",
    "render_blocking",
    "schedule_energy",
    "schedule_signature",
    "scheme_sharing_largest_buffer",
    "shuffle_energy",
    "simulate",
    "unblocked_result",
    "unblocked_string",
    "validate_blocking",
]

"""Reachability analysis for autonomous linear hybrid automata.

Flowpipe construction with syntactic variable-set separation: variables are
partitioned into discrete, clock, and general sub-spaces that are analyzed
independently and recombined as a projective (cross-product) representation.
"""

from .linalg import (
    DimensionError,
    LinearProgram,
    LpInfeasible,
    LpOptimum,
    LpUnbounded,
    affine_step,
    homogenize,
    inf_norm,
    lp_feasible,
    lp_optimize,
    mat_exp,
)
from .automaton import (
    AffineFlow,
    AffineReset,
    HybridAutomaton,
    Jump,
    Location,
    ParseError,
    ReachSettings,
    UnsafeSpec,
    format_model,
    parse_model,
    validate,
)
from .decomposition import (
    DecomposedAutomaton,
    NotSeparableError,
    SubSpace,
    VariablePartition,
    classify,
    decompose,
    dependency_graph,
    projective_of,
)
from .geometry import (
    Box,
    Condition,
    GeometryError,
    HPolytope,
    StateSet,
    aggregate,
    box_directions,
    convert,
    octagonal_directions,
    template_eval,
)
from .reach import (
    BloatingBox,
    FlowpipeSegment,
    ReachResult,
    ReachTask,
    analyze,
    bloating_box,
    first_segment,
    flow_step,
    jump_successor,
    next_segment,
    safety_check,
)

__all__ = [
    "DimensionError", "LinearProgram", "LpInfeasible", "LpOptimum",
    "LpUnbounded", "affine_step", "homogenize", "inf_norm", "lp_feasible",
    "lp_optimize", "mat_exp",
    "AffineFlow", "AffineReset", "HybridAutomaton", "Jump", "Location",
    "ParseError", "ReachSettings", "UnsafeSpec", "format_model",
    "parse_model", "validate",
    "DecomposedAutomaton", "NotSeparableError", "SubSpace",
    "VariablePartition", "classify", "decompose", "dependency_graph",
    "projective_of",
    "Box", "Condition", "GeometryError", "HPolytope", "StateSet",
    "aggregate", "box_directions", "convert", "octagonal_directions",
    "template_eval",
    "BloatingBox", "FlowpipeSegment", "ReachResult", "ReachTask", "analyze",
    "bloating_box", "first_segment", "flow_step", "jump_successor",
    "next_segment", "safety_check",
]

__version__ = "0.1.0"

"""Nested host-parasite ultrametric trees and the space they form.

The main entry points are re-exported here; see the submodules for the rest.
"""

from .complex import (
    BoundExceededError,
    ComplexModel,
    LinkGraph,
    NestedRankedTopology,
    build_complex,
    census,
    check_cube_condition,
    enumerate_orthants,
    find_3_cycles,
    has_3_cycle,
    link_graph,
)
from .metric import (
    GeodesicPath,
    SigmaPoint,
    SigmaSpace,
    TypeMismatchError,
    cat0_midpoint_check,
    cone_distance,
    distance,
    forget,
    frechet_mean,
    geodesic,
    nest,
    sigma_coordinates,
    tree_from_sigma,
)
from .nesting import (
    AnnotatedNestingSequence,
    IncompatibleError,
    LeafMap,
    NestedTree,
    NestingSequence,
    canonical_nesting_sequence,
    check_compatibility,
    cospeciation_events,
    is_admissible,
    nesting_sequence,
)
from .trees import (
    NewickError,
    RankedTopology,
    TauPoint,
    UltrametricMatrix,
    UltrametricTree,
    count_ranked_topologies,
    enumerate_ranked_topologies,
    parse_newick,
    realize_matrix,
    tau_coordinates,
    to_distance_matrix,
    tree_from_tau,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedNestingSequence",
    "BoundExceededError",
    "ComplexModel",
    "GeodesicPath",
    "IncompatibleError",
    "LeafMap",
    "LinkGraph",
    "NestedRankedTopology",
    "NestedTree",
    "NestingSequence",
    "NewickError",
    "RankedTopology",
    "SigmaPoint",
    "SigmaSpace",
    "TauPoint",
    "TypeMismatchError",
    "UltrametricMatrix",
    "UltrametricTree",
    "build_complex",
    "canonical_nesting_sequence",
    "cat0_midpoint_check",
    "census",
    "check_compatibility",
    "check_cube_condition",
    "cone_distance",
    "cospeciation_events",
    "count_ranked_topologies",
    "distance",
    "enumerate_orthants",
    "enumerate_ranked_topologies",
    "find_3_cycles",
    "forget",
    "frechet_mean",
    "geodesic",
    "has_3_cycle",
    "is_admissible",
    "link_graph",
    "nest",
    "nesting_sequence",
    "parse_newick",
    "realize_matrix",
    "sigma_coordinates",
    "tau_coordinates",
    "to_distance_matrix",
    "tree_from_sigma",
    "tree_from_tau",
]

from .acquisition import ehvi
from .pareto import (
    MAXIMIZE,
    MINIMIZE,
    ObjectiveSpec,
    ParetoFront,
    ReferencePoint,
    clipped_hypervolume2d,
    dominates,
    hypervolume2d,
    infer_reference_point,
    nondominated,
    normalize,
    pareto_update,
)

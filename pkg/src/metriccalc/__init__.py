"""First-order calculus on finite metric measure spaces."""

__version__ = "0.1.0"

from .space import (FiniteMetricMeasureSpace, ScalarField, ScaleLadder, SpaceError, ball,
                    ball_average, density_ratio, doubling_profile, landmark_generators,
                    local_density_check, make_space)
from .lipcalc import (glip, independence_seminorm, independence_test, lip_field, lip_norm,
                      lip_profile, local_lipschitz, mcshane_extend, varlip)
from .derivation import (ComponentTable, Derivation, apply, combine, component_table,
                         dq_derivation, leibniz_residual, locality_residual, operator_norm)
from .modalg import (DualBasisRecord, KernelSelection, NotFound, Stratification, dual_basis,
                     find_nonsingular_minor, kernel_select, pointwise_rank, stratify)
from .mds import (Atlas, Chart, CotangentField, PartialDerivativeTable, build_atlas, cot_norm,
                  differential, dimension_probe, inequality_report, partial_derivatives,
                  representation_residual, sobolev_norm)
from .kernels import BACKEND

__all__ = [
    "FiniteMetricMeasureSpace", "ScalarField", "ScaleLadder", "SpaceError", "ball",
    "ball_average", "density_ratio", "doubling_profile", "landmark_generators",
    "local_density_check", "make_space", "glip", "independence_seminorm", "independence_test",
    "lip_field", "lip_norm", "lip_profile", "local_lipschitz", "mcshane_extend", "varlip",
    "ComponentTable", "Derivation", "apply", "combine", "component_table", "dq_derivation",
    "leibniz_residual", "locality_residual", "operator_norm", "DualBasisRecord",
    "KernelSelection", "NotFound", "Stratification", "dual_basis", "find_nonsingular_minor",
    "kernel_select", "pointwise_rank", "stratify", "Atlas", "Chart", "CotangentField",
    "PartialDerivativeTable", "build_atlas", "cot_norm", "differential", "dimension_probe",
    "inequality_report", "partial_derivatives", "representation_residual", "sobolev_norm",
    "BACKEND",
]

"""hildadyn: dynamical classification of Hilda asteroids in the planar
circular and elliptic restricted three-body problems."""

from .constants import ConstantsTable, DEFAULTS, load_constants, save_constants
from .model import (
    ModelSpec,
    PhaseState,
    EquilibriumSet,
    effective_potential,
    effective_potential_gradient,
    jacobi_constant,
    crtbp_field,
    ertbp_field,
    ertbp_invariant_relation,
    hill_region_contains,
    lagrange_points,
    mirror_state,
)
from .integrate import (
    CollisionRule,
    Trajectory,
    integrate,
    find_crossings,
    sample_uniform,
    integrate_and_sample,
    section_crossings,
    strobo_states,
)

__version__ = "0.1.0"

"""Birkhoff normal forms for truncated Klein-Gordon equations on spheres.

The package builds the spectral-cluster structure of the sphere, assembles
the truncated Hamiltonian in complex mode coordinates, normalizes it degree
by degree, and measures the dynamical payoff: cluster actions of the
original flow stay nearly constant over long times for small data.
"""

__version__ = "0.1.0"

from .polyalg import (
    HomPoly,
    MonomialKey,
    State,
    WeightReport,
    class_norm,
    evaluate,
    gradient,
    key,
    mu_S,
    norm_inf,
    poisson_bracket,
    poly_from_dict,
    poly_from_json,
    poly_to_dict,
    poly_to_json,
    reality_check,
    symmetrize_real,
    vector_field,
)
from .spectrum import (
    ClusterParams,
    DivisorQuery,
    Mode,
    ScanReport,
    SphereParams,
    Spectrum,
    build_sphere_spectrum,
    divisor_bound_scan,
    mass_scan,
    small_divisor,
)
from .normalform import (
    NearResonantMassError,
    NormalFormResult,
    SplitResult,
    action_poly,
    birkhoff,
    bracket_with_G2,
    check_action_commutation,
    g2_poly,
    is_resonant_key,
    key_divisor,
    lie_transform,
    resonant_split,
    solve_homological,
)
from .kgmodel import (
    Nonlinearity,
    PolyHamiltonian,
    RealState,
    UnsupportedManifoldError,
    actions,
    from_complex,
    g2_value,
    nonlinear_energy_quadrature,
    sobolev_norm,
    taylor_hamiltonian,
    to_complex,
    weighted_energy,
)
from .dynamics import (
    DivergenceError,
    DriftTable,
    FlowError,
    IntegratorConfig,
    NearIdentityFit,
    Trajectory,
    apply_inverse_transform,
    apply_transform,
    drift_experiment,
    generator_flow,
    integrate,
    linear_flow,
    near_identity_check,
    random_unit_state,
)

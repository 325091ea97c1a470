"""Entropic optimal transport with differentiated Sinkhorn-Knopp iterations."""

from .errors import (
    ConditioningError,
    DomainError,
    KernelUnderflowError,
    NumericalError,
    OracleError,
    SinkdiffError,
    SpectralDegeneracyError,
    ValidationError,
)
from .jacobians import (
    JacobianBundle,
    Linearization,
    f_theta_jvp,
    jacobian_F_x,
    left_eigenvector,
    plan_theta_jvp,
    plan_x_jvp,
    reduced_jacobian,
)
from .kernels import BACKEND
from .limit import (
    FixedPointSpectrum,
    PlanDerivative,
    fixed_point_spectrum,
    limit_plan_derivative,
    resolvent_apply,
    spectral_pseudo_inverse_apply,
)
from .oracle import FdConfig, fd_iterate_derivative, fd_jacobian_F_x, fd_limit_derivative
from .piggyback import (
    DerivativeTrace,
    piggyback_step,
    plan_derivative_at,
    reduced_piggyback_step,
    run_with_derivatives,
)
from .problem import (
    InstanceTangent,
    Parametrization,
    TransportInstance,
    generate_point_cloud_instance,
    load_instance,
    make_direct_marginal_parametrization,
    make_epsilon_parametrization,
    make_softmax_marginal_parametrization,
    save_instance,
)
from .sinkhorn import (
    SinkhornState,
    SolveReport,
    center,
    contraction_ratio,
    gibbs_kernel,
    hilbert_distance,
    plan,
    solve,
    step,
    step_lse,
    variation_seminorm,
)

__version__ = "0.1.0"

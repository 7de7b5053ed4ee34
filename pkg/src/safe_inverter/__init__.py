"""Current-magnitude safety filter for a grid-forming inverter."""

from .controllers import (
    LqrWeights,
    SafeGainCertificate,
    SynthesisError,
    check_eigvec_inequality,
    check_norm_expansion,
    feedback_law,
    lqr_gain,
    safe_gain_from_lambda,
    synthesize_safe_gain,
)
from .experiments import (
    Design,
    ExperimentReport,
    boundary_sweep,
    design_controllers,
    linspace,
    nonlinear_compare,
    random_sweep,
)
from .laws import CbfFiltered, LinearFeedback
from .plant import (
    LinearPlant,
    PlantParams,
    Reference,
    build_linear_plant,
    linear_deriv,
    nonlinear_deriv,
    power_output,
    solve_linear_reference,
    solve_nonlinear_reference,
)
from .safety_filter import (
    BarrierConfig,
    FilterStep,
    barrier_h,
    closed_form_filter,
    filter_coefficients,
    lyapunov_v,
)
from .sim import SimConfig, SimulationError, Trajectory, simulate, simulate_batch, trajectory_cost

__version__ = "0.1.0"

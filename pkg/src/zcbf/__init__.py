"""Neural control-barrier-function synthesis via a bounded Zubov-type PDE.

Train a bounded barrier network with physics-informed losses, invert it
to a reciprocal barrier, and wrap reference controllers with a
minimal-norm safety filter. See the README for the CLI and file
formats.
"""

__version__ = "0.1.0"

from .barrier import (  # noqa: F401
    FilterDiagnostics,
    SafetyFilterConfig,
    filtered_control,
    h_from_b,
    lie_derivatives,
    min_norm_correction,
    qp_filtered_control,
    safety_measure,
    w_to_b,
)
from .dynamics import (  # noqa: F401
    ControlAffineSystem,
    DomainBox,
    QuadrotorGains,
    RegionSpec,
    pendulum_system,
    quadrotor_system,
    region_contains,
    unicycle_system,
)
from .net import (  # noqa: F401
    BarrierNet,
    DualEval,
    forward,
    forward_with_input_grad,
    init,
    load_checkpoint,
    loss_param_grad,
    save_checkpoint,
)
from .sim import SimConfig, Trajectory, rk4_step, rollout  # noqa: F401
from .zubov import (  # noqa: F401
    LossReport,
    SampleBank,
    TrainConfig,
    bc_target,
    beta,
    closed_loop_field,
    losses,
    phi,
    residual,
    train,
)

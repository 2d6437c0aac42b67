"""Entanglement of two-mode light after lossy or amplifying linear optical devices."""

from .entanglement import (
    MODE_SPLIT,
    Bipartition,
    EntanglementReport,
    Measure,
    bell_output_bound,
    lewenstein_sanpera,
    log_negativity,
    measure_entanglement,
    monotonicity_check,
    negativity,
    reduced_entropy,
    relative_entropy_entanglement,
)
from .errors import *  # noqa: F401,F403
from .fock_space import (
    BellKind,
    DensityOperator,
    FockState,
    ModeLayout,
    make_bell_state,
    make_tmsv,
    partial_trace,
    thermal_state,
)
from .fourport import DeviceSpec, FiberSpec, LambdaMatrix, apply_channel, fiber_transmission, make_lambda
from .gaussian import (
    GaussianState,
    ScalarDevice,
    ThresholdInputs,
    is_separable_ppt,
    lmax_fiber,
    max_gain,
    nth_threshold,
    tmsv_covariance,
    transform_moments,
    transform_moments_device,
)

__version__ = "0.1.0"

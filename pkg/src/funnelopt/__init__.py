"""Step-size adaptation meta-optimizer with exponentiated-gradient-trained
per-coordinate gains and per-group step-size scales, plus test problems,
a distribution-shift data harness, and comparison baselines."""

from .egu_core import (
    DEFAULT_CLAMP,
    ExponentClamp,
    egu_update,
    incorrect_egu_update,
    relative_entropy,
)
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    FunnelOptError,
    InputError,
    NumericalError,
)
from .funnel import (
    FunnelConfig,
    FunnelState,
    bias_corrected_ema,
    funnel_init,
    funnel_step,
    gain_update,
    hypergrad_scale_update,
    scale_update,
)
from .preconditioners import PreconditionerKind, init_preconditioner, precondition
from .problems import (
    Batch,
    Problem,
    finite_difference_grad,
    logistic_regression_problem,
    quadratic_problem,
    rosenbrock_problem,
)
from .datashift import (
    FeatureDataset,
    ImageDataset,
    ShiftSchedule,
    disjoint_split,
    load_idx,
    make_shift_variant,
    next_batch,
    synthetic_shift_stream,
)
from .config import ExperimentConfig, load_config, parse_config
from .harness import (
    gradcheck_report,
    run_experiment,
    run_gradcheck,
    run_sweep,
    train_run,
)

__version__ = "0.1.0"

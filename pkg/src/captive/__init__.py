"""Simulation toolkit for jump-diffusions confined to moving bounded domains."""

from .boundary import BoundaryFn, snap_distances, validate_pair
from .coefficients import (
    Custom,
    Martingale,
    MeanReverting,
    PureJump,
    TrigonometricSine,
    Zero,
    check_admissibility,
    compose,
)
from .drivers import JumpSpec, RandomSource
from .errors import (
    CaptiveError,
    ConfigurationError,
    DomainError,
    NumericalError,
    StateError,
    StatisticalError,
    UsageError,
)
from .simulator import (
    EnsembleSummary,
    PathSample,
    SimConfig,
    check_absorption,
    check_captivity,
    run_ensemble,
    simulate_path,
    validate_monotone_bounds,
)

from .corridors import (
    CorridorModel,
    corridor_occupancy,
    corridor_target,
    run_corridor_ensemble,
    simulate_corridor_path,
    update_monitor,
)
from .geometry import PolarTrajectory, annulus_check, radial_histogram, to_cartesian
from .transforms import BoundedMap, MonotoneMap, captive_from_bounded, map_path
from .transitions import (
    TransitionQuery,
    estimate_transition_mc,
    s_set,
    transition_probability,
)

__version__ = "0.1.0"

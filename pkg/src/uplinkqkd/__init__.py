"""Decoy-state WCP QKD simulator for ultra-high-loss free-space uplinks."""

from .errors import BracketError, ConfigError, ParameterError, SyncLostError
from .keyrate import (
    ChannelObservables,
    ProtocolParams,
    SinglePhotonBounds,
    binary_entropy,
    channel_model,
    decoy_bounds,
    model_observables,
    secure_key_rate,
)
from .photonics import (
    DetectorConfig,
    PhaseWindow,
    PulseSchedule,
    SourceConfig,
    TallyCounts,
    eta_from_total_loss,
    generate_pulse_train,
    observables_from_tallies,
    simulate_detections,
    tally,
)
from .timetags import TimetagStream, read_timetags, write_timetags
from .clocksync import (
    AlignmentResult,
    ClockModel,
    align_timetags,
    apply_clock_drift,
    bandwidth_estimate,
    generate_clock_tags,
)
from .windows import (
    BackgroundModel,
    WindowSweep,
    background_error_count,
    fold_histogram,
    sweep_and_optimize,
)
from .linkmodel import (
    FadingModel,
    LinkBudgetParams,
    PassProfile,
    fading_equivalence_experiment,
    lognormal_samples,
    pass_profile,
    range_from_elevation,
    total_loss,
)
from .passes import (
    RateCurve,
    key_per_pass,
    max_tolerable_loss,
    rate_vs_loss,
    stability_run,
)

__version__ = "0.1.0"

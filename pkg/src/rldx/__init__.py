"""Fault diagnosis for deep-RL training runs.

Ingests a stream of training-trace events, runs staged diagnostic routines
over the learning dynamics, and emits actionable warnings.  Ships with a
fault-injection testbed (gridworld + tiny DQN) that exercises every
diagnostic, and a CLI (``rldx``) for offline checking, live watching,
fault injection and overhead benchmarking.
"""

from rldx.events import (
    Diagnosis,
    EpisodeEnd,
    EpisodeStart,
    ExplorationValue,
    McDropoutSamples,
    ModelUpdate,
    OrderingError,
    ParseError,
    QTargetBatch,
    RunEnd,
    RunMeta,
    RunStart,
    Scope,
    Stage,
    StageLayout,
    Step,
    TargetSync,
    TensorStats,
    TraceEvent,
    UnsupportedEventError,
    VersionError,
    parse_event,
    serialize_event,
    tensor_digest,
    tensor_stats,
    validate_stream,
)
from rldx.stats import (
    InsufficientDataError,
    LinearFit,
    Series,
    kl_divergence,
    linear_fit,
    max_abs_second_derivative,
    mc_dropout_dispersion,
    normalized_entropy,
    rmse,
    strictly_monotone_decreasing,
    windowed_std,
)
from rldx.rl_checks import AgentSnapshot, EpisodeData, RlThresholds
from rldx.nn_checks import NnThresholds
from rldx.engine import CheckConfig, RegistrationError, Report, Session, SeriesStore, run_session
from rldx.testbed import FAULTS, GridWorld, TinyMlp, env_step, expected_diagnoses, run_training

__version__ = "0.1.0"

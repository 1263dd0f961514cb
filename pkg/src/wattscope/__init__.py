"""Non-intrusive disaggregation of server aggregate power into per-job
estimates: synthetic trace generation, workload characterization, a
sliding-window neural disaggregator with a keyed model library, drift
monitoring, and an evaluation harness."""

__version__ = "0.1.0"

from .errors import WattscopeError
from .trace import (
    BaseloadPolicy,
    JobSeries,
    ServerTrace,
    SyntheticJobSpec,
    TraceFormat,
    generate_synthetic_job,
    load_server_trace,
    parse_job_trace,
    save_server_trace,
    synthesize_server,
)
from .powermodel import PowerCurve, fit_power_curve, power_of, reference_curve
from .characterize import ClassTriple, JobProfile, Level, cov, detect_periods, profile
from .nn import NetworkConfig, TrainedModel, desk_config, forward, grad_check, train
from .baselines import CoModel, MeanModel, co_fit, co_predict, mean_fit, mean_predict
from .library import ModelKey, ModelLibrary, key_distance
from .disagg import DisaggResult, StreamDisaggregator, disaggregate
from .monitor import MonitorEvent, MonitorState, observe
from .eval import MetricsReport, ScenarioConfig, mae, nmae, run_experiment

__all__ = [
    "WattscopeError",
    "BaseloadPolicy",
    "JobSeries",
    "ServerTrace",
    "SyntheticJobSpec",
    "TraceFormat",
    "generate_synthetic_job",
    "load_server_trace",
    "parse_job_trace",
    "save_server_trace",
    "synthesize_server",
    "PowerCurve",
    "fit_power_curve",
    "power_of",
    "reference_curve",
    "ClassTriple",
    "JobProfile",
    "Level",
    "cov",
    "detect_periods",
    "profile",
    "NetworkConfig",
    "TrainedModel",
    "desk_config",
    "forward",
    "grad_check",
    "train",
    "CoModel",
    "MeanModel",
    "co_fit",
    "co_predict",
    "mean_fit",
    "mean_predict",
    "ModelKey",
    "ModelLibrary",
    "key_distance",
    "DisaggResult",
    "StreamDisaggregator",
    "disaggregate",
    "MonitorEvent",
    "MonitorState",
    "observe",
    "MetricsReport",
    "ScenarioConfig",
    "mae",
    "nmae",
    "run_experiment",
]

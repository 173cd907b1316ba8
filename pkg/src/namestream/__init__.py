"""Streaming name disambiguation with open-set class discovery.

Records arrive one at a time; each is assigned to a known person or to a
newly discovered one under a Dirichlet process Gaussian mixture, with either
a one-pass collapsed sampler or a particle filter carrying assignment
uncertainty forward. Uncertain assignments can be escalated to a human and
the answer folded back into the particle ensemble.
"""

from .active import (
    ActiveConfig,
    QueryEvent,
    apply_feedback,
    decide_random,
    effective_support,
    entropy,
    should_query,
)
from .demo import make_demo_records, record_to_json, write_demo_jsonl
from .dpgmm import (
    ClassStats,
    ModelState,
    NIWHyper,
    Posterior,
    PredictiveParams,
    class_stats_downdate,
    class_stats_update,
    crp_log_weights,
    estimate_hyperparams,
    posterior_over_classes,
    predictive_params,
    studentt_logpdf,
)
from .errors import (
    ConfigError,
    DataError,
    DegeneracyError,
    NamestreamError,
    NumericalError,
)
from .evaluation import (
    ALIGNMENT_RULE,
    ExperimentConfig,
    ExperimentReport,
    HARD_SYNTHETIC,
    PreparedData,
    RunResult,
    SweepResult,
    SyntheticConfig,
    align_labels,
    count_distinct,
    make_synthetic,
    mean_f1,
    power_counts,
    prepare_from_records,
    run_experiment,
    run_one,
    sweep,
    sweep_records,
)
from .gibbs import GibbsRun, gibbs_run, gibbs_step
from .nnmf import NnmfResult, load_basis, nnls_project, nnmf_fit, save_basis
from .particle import (
    Ensemble,
    Particle,
    PfRun,
    StepResult,
    enp,
    pf_init,
    pf_predict,
    pf_propagate,
    pf_resample,
    pf_run,
    pf_step,
)
from .persist import (
    EventLog,
    load_snapshot,
    read_events,
    replay_events,
    save_snapshot,
    start_event_log,
)
from .records import (
    BinaryFeatureVector,
    FeatureVocabulary,
    RawRecord,
    StreamSplit,
    build_vocabulary,
    featurize,
    featurize_matrix,
    parse_records,
    temporal_split,
    title_tokens,
)

__version__ = "0.1.0"

__all__ = [
    "ALIGNMENT_RULE",
    "ActiveConfig",
    "BinaryFeatureVector",
    "ClassStats",
    "ConfigError",
    "DataError",
    "DegeneracyError",
    "Ensemble",
    "EventLog",
    "ExperimentConfig",
    "ExperimentReport",
    "FeatureVocabulary",
    "GibbsRun",
    "HARD_SYNTHETIC",
    "ModelState",
    "NIWHyper",
    "NamestreamError",
    "NnmfResult",
    "NumericalError",
    "Particle",
    "PfRun",
    "Posterior",
    "PredictiveParams",
    "PreparedData",
    "QueryEvent",
    "RawRecord",
    "RunResult",
    "StepResult",
    "StreamSplit",
    "SweepResult",
    "SyntheticConfig",
    "align_labels",
    "apply_feedback",
    "build_vocabulary",
    "class_stats_downdate",
    "class_stats_update",
    "count_distinct",
    "crp_log_weights",
    "decide_random",
    "effective_support",
    "enp",
    "entropy",
    "estimate_hyperparams",
    "featurize",
    "featurize_matrix",
    "gibbs_run",
    "gibbs_step",
    "load_basis",
    "load_snapshot",
    "make_demo_records",
    "make_synthetic",
    "mean_f1",
    "nnls_project",
    "nnmf_fit",
    "parse_records",
    "power_counts",
    "pf_init",
    "pf_predict",
    "pf_propagate",
    "pf_resample",
    "pf_run",
    "pf_step",
    "posterior_over_classes",
    "predictive_params",
    "prepare_from_records",
    "read_events",
    "record_to_json",
    "replay_events",
    "run_experiment",
    "run_one",
    "save_basis",
    "save_snapshot",
    "should_query",
    "start_event_log",
    "studentt_logpdf",
    "sweep",
    "sweep_records",
    "temporal_split",
    "title_tokens",
    "write_demo_jsonl",
]

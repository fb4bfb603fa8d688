"""Multi-level feature fusion heads and rehearsal-based continual learning on
cached multi-depth embeddings from frozen backbones."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    CorruptionError,
    DataError,
    FormatError,
    MlffError,
    NumericError,
    ProtocolError,
)
from .model import (
    FusionConfig,
    LinearProbeHead,
    MLFFHead,
    MLPProbeHead,
    build_head,
    build_probe,
    param_count,
    probe_param_count,
    train_epochs,
)
from .estimators import LinearProbe, MLFFClassifier, MLPProbe
from .store import (
    DatasetManifest,
    EmbeddingRecord,
    SynthSpec,
    Task,
    TaskStream,
    augment_dataset,
    augment_gaussian,
    partition_tasks,
    read_dataset,
    synth_generate,
    write_dataset,
)
from .checkpoint import load_head, save_head
from .rehearsal import (
    BufferEntry,
    RehearsalBuffer,
    entries_from_records,
    knn_shapley,
    select_aser,
    select_balanced_random,
    select_fps,
    select_grasp,
    select_mean,
)
from .metrics import compute_af1, compute_ff1, macro_f1
from .driver import (
    ExperimentConfig,
    MetricsReport,
    evaluate_head,
    export_report_csv,
    load_report,
    run_experiment,
    save_report,
)

__all__ = [
    "MlffError",
    "ConfigurationError",
    "DataError",
    "NumericError",
    "FormatError",
    "CorruptionError",
    "ProtocolError",
    "FusionConfig",
    "MLFFHead",
    "LinearProbeHead",
    "MLPProbeHead",
    "build_head",
    "build_probe",
    "param_count",
    "probe_param_count",
    "train_epochs",
    "MLFFClassifier",
    "LinearProbe",
    "MLPProbe",
    "DatasetManifest",
    "EmbeddingRecord",
    "SynthSpec",
    "Task",
    "TaskStream",
    "write_dataset",
    "read_dataset",
    "partition_tasks",
    "synth_generate",
    "augment_gaussian",
    "augment_dataset",
    "save_head",
    "load_head",
    "BufferEntry",
    "RehearsalBuffer",
    "entries_from_records",
    "knn_shapley",
    "select_balanced_random",
    "select_fps",
    "select_mean",
    "select_grasp",
    "select_aser",
    "macro_f1",
    "compute_af1",
    "compute_ff1",
    "ExperimentConfig",
    "MetricsReport",
    "run_experiment",
    "evaluate_head",
    "save_report",
    "load_report",
    "export_report_csv",
]

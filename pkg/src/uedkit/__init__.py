"""Zero-shot self-supervised unknown-emitter detection toolkit."""

from . import dataio, detector, harness, interpret, metrics, modality, nn, numerics, ssl, synth
from .dataio import Dataset, SplitSpec, make_split, read_dataset, write_dataset
from .detector import ClusterDetector, Decision, classify_batch, fit_detector, score_sample
from .errors import (
    DataFormatError,
    DegenerateInputError,
    DimensionError,
    ScoringError,
    TrainingError,
    UedError,
    UndefinedMetricError,
    ValidationError,
)
from .harness import (
    PipelineConfig,
    Protocol,
    dm_protocol,
    run_cluster_sweep,
    run_protocol,
    select_best_epoch,
    sm_protocol,
)
from .interpret import kan_node_importance, kan_spline_export, lime_fit
from .metrics import EvalReport, f1_binary, nmi, roc_auc
from .modality import (
    ConstellationGrid,
    IQTrace,
    constellation_transform,
    normalize_iq,
)
from .numerics import KMeansModel, kmeans_assign, kmeans_fit, svd_topk
from .rng import Rng
from .ssl import TrainConfig, augment_noise, augment_rotate, contrastive_loss
from .synth import EmitterProfile, ScenarioConfig, make_emitter, synth_dataset, synth_trace

__version__ = "0.1.0"

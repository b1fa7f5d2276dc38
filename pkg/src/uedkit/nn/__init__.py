from . import engine
from .accounting import ParamCount, count_flops, count_params
from .base import Module
from .checkpoint import (
    build_extractor,
    extractor_config,
    input_shape_for,
    load_checkpoint,
    load_model,
    save_checkpoint,
    save_model,
)
from .engine import Tensor, no_grad
from .kan import KanLayer, KanLayerConfig, bspline_bases
from .layers import BatchNorm, Conv1d, Conv2d, Linear
from .losses import cross_entropy, mse
from .models import (
    CnnConfig,
    CnnDecoder,
    CnnEncoder,
    FeatureExtractor,
    KanDecoder,
    KanEncoder,
    PcaExtractor,
    cnn1d_config,
    cnn2d_config,
    make_bypass,
)
from .optim import Adam, AdamState, adam_step

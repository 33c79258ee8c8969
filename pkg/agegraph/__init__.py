from .contrastive import EmbeddingBundle, LossConfig, loss_total
from .encoder import AttentionField, EncoderParams, encode
from .graph import ImageSample, PatchGraph, build_knn_graph
from .params import ModelConfig, ParamStore, init_params
from .tensor import ComputationTape, Tensor
from .training import Metrics, TrainConfig, evaluate, run_training

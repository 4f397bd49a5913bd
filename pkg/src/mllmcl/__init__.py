"""Mutual learning and large-margin contrastive learning for ASR-robust
intent classification, on a small numpy encoder."""

from .config import TrainConfig, load_config
from .corpus import Corpus, NoiseConfig, PairedExample, Vocab, synthesize_corpus, synthesize_splits
from .encoder import EmbeddingBatch, ModelParams, init_params
from .losses import LossResult, MarginConfig

__version__ = "0.1.0"

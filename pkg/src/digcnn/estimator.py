"""scikit-learn compatible wrapper around vocabulary building, training and decoding."""

from __future__ import annotations

from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .autodiff import INFER
from .corpus import Vocabulary, build_vocab
from .decode import ParseTree, eisner_decode, greedy_decode, reduce_to_arc_scores
from .errors import ConfigError
from .evaluate import evaluate
from .model import ModelConfig, forward
from .train import Checkpoint, TrainConfig, train
from .validation import check_sentences

_MODEL_KEYS = ("word_emb_dim", "pos_emb_dim", "hidden_channels", "conv_radius",
               "layers_per_block", "num_blocks", "input_dropout", "block_dropout", "input_radius")
_TRAIN_KEYS = ("epochs", "batch_size", "learning_rate", "optimizer", "clip_norm", "seed",
               "eval_every", "dtype", "n_jobs", "max_seconds", "punct_convention")


class DIGCNNParser(BaseEstimator):
    """Graph-based dependency parser built on dilated iterated 2-D convolutions.

    ``fit`` takes a sequence of :class:`~digcnn.corpus.TokenSentence` with gold
    heads and labels (or a CoNLL path); ``predict`` returns one
    :class:`~digcnn.decode.ParseTree` per sentence.  ``decoder`` selects greedy
    per-token argmax or Eisner projective decoding.
    """

    def __init__(self, word_emb_dim=100, pos_emb_dim=25, hidden_channels=128, conv_radius=1,
                 layers_per_block=4, num_blocks=2, input_dropout=0.15, block_dropout=0.25,
                 input_radius=0, epochs=30, batch_size=8, learning_rate=1e-3, optimizer="adam",
                 clip_norm=5.0, seed=0, eval_every=0, dtype="float64", n_jobs=1, max_seconds=None,
                 punct_convention="ud", min_count=1, decoder="greedy", single_root=False):
        self.word_emb_dim = word_emb_dim
        self.pos_emb_dim = pos_emb_dim
        self.hidden_channels = hidden_channels
        self.conv_radius = conv_radius
        self.layers_per_block = layers_per_block
        self.num_blocks = num_blocks
        self.input_dropout = input_dropout
        self.block_dropout = block_dropout
        self.input_radius = input_radius
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.clip_norm = clip_norm
        self.seed = seed
        self.eval_every = eval_every
        self.dtype = dtype
        self.n_jobs = n_jobs
        self.max_seconds = max_seconds
        self.punct_convention = punct_convention
        self.min_count = min_count
        self.decoder = decoder
        self.single_root = single_root

    def _model_config(self, num_labels) -> ModelConfig:
        return ModelConfig(num_labels=num_labels, **{k: getattr(self, k) for k in _MODEL_KEYS})

    def _train_config(self) -> TrainConfig:
        return TrainConfig(**{k: getattr(self, k) for k in _TRAIN_KEYS})

    def fit(self, X, y=None, X_dev=None):
        """Build the vocabulary from ``X`` and train; ``y`` is unused (gold lives in ``X``)."""
        sentences = check_sentences(X, require_gold=True)
        if not sentences:
            raise ConfigError("cannot fit on an empty corpus")
        vocab = build_vocab(sentences, min_count=self.min_count)
        config = self._model_config(max(vocab.n_labels, 1))
        train_set = [vocab.encode(s) for s in sentences]
        dev_set = []
        if X_dev is not None:
            dev_set = [vocab.encode(s) for s in check_sentences(X_dev, require_gold=True)]
        ckpt, log = train(train_set, dev_set, config, self._train_config(), vocab)
        self._set_fitted(ckpt)
        self.metrics_log_ = log
        return self

    def _set_fitted(self, ckpt: Checkpoint):
        self.vocab_: Vocabulary = ckpt.vocab
        self.config_: ModelConfig = ckpt.config
        self.params_ = ckpt.params
        self.n_parameters_ = ckpt.params.parameter_count()

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, **kwargs) -> "DIGCNNParser":
        params = {k: getattr(ckpt.config, k) for k in _MODEL_KEYS}
        params.update(kwargs)
        est = cls(**params)
        est._set_fitted(ckpt)
        return est

    def to_checkpoint(self) -> Checkpoint:
        check_is_fitted(self, "params_")
        return Checkpoint(self.config_, self.vocab_, self.params_)

    def _encode(self, X):
        sentences = check_sentences(X)
        return [s if s.encoded else self.vocab_.encode(s) for s in sentences]

    def predict_scores(self, X) -> List[np.ndarray]:
        """Last block's ``N x N x D`` score array for each sentence."""
        check_is_fitted(self, "params_")
        return [forward(s, self.params_, self.config_, INFER)[-1].data for s in self._encode(X)]

    def predict(self, X) -> List[ParseTree]:
        if self.decoder not in ("greedy", "eisner"):
            raise ConfigError(f"decoder must be 'greedy' or 'eisner', got {self.decoder!r}")
        trees = []
        for scores in self.predict_scores(X):
            if self.decoder == "greedy":
                trees.append(greedy_decode(scores))
            else:
                trees.append(eisner_decode(reduce_to_arc_scores(scores), single_root=self.single_root))
        return trees

    def score(self, X, y=None) -> float:
        """Unlabeled attachment score as a fraction in [0, 1]."""
        gold = self._encode(check_sentences(X, require_gold=True))
        report = evaluate(gold, self.predict(gold), self.punct_convention)
        return report.uas / 100.0

"""Per-block averaged likelihood training, optimizers and checkpoints."""

from __future__ import annotations

import io
import json
import logging
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import INFER, TRAIN, Tensor
from .corpus import TokenSentence, Vocabulary
from .decode import greedy_decode
from .errors import (
    ConfigError,
    ContractViolation,
    DivergenceError,
    NotACheckpointError,
    ShapeMismatchError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)
from .evaluate import evaluate
from .model import ModelConfig, ModelParams, dependent_log_probs, forward, init_params

logger = logging.getLogger(__name__)

DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    clip_norm: Optional[float] = 5.0
    seed: int = 0
    eval_every: int = 0  # sentences between dev evaluations; 0 means once per epoch
    dtype: str = "float64"
    n_jobs: int = 1
    max_seconds: Optional[float] = None
    punct_convention: str = "ud"

    def __post_init__(self):
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigError(f"epochs must be a positive integer, got {self.epochs!r}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}, got {self.dtype!r}")
        if self.eval_every < 0 or self.n_jobs < 1:
            raise ConfigError("eval_every must be >= 0 and n_jobs >= 1")
        self.epochs, self.batch_size, self.seed = int(self.epochs), int(self.batch_size), int(self.seed)
        self.eval_every, self.n_jobs = int(self.eval_every), int(self.n_jobs)


# loss -------------------------------------------------------------------


def block_loss(scores: Tensor, gold: TokenSentence) -> Tensor:
    """Mean negative log-likelihood of the gold (head, label) pairs under one block's scores."""
    lp = dependent_log_probs(scores)
    t = gold.n - 1
    picked = lp[np.arange(t), np.asarray(gold.gold_heads), np.asarray(gold.gold_labels)]
    return ad.scale(ad.total(picked), -1.0 / t)


def sentence_loss(per_block_scores: Sequence[Tensor], gold: TokenSentence) -> Tensor:
    """Average over block applications of the per-token negative log-likelihood."""
    if gold.gold_heads is None or gold.gold_labels is None:
        raise ContractViolation("sentence_loss needs gold heads and labels")
    if not per_block_scores:
        raise ContractViolation("sentence_loss needs at least one block's scores")
    if min(gold.gold_labels) < 0:
        raise ContractViolation("gold label missing from the vocabulary")
    return ad.stack_mean([block_loss(s, gold) for s in per_block_scores])


def sentence_gradients(sentence, params: ModelParams, config: ModelConfig, mode, rng):
    """Loss and per-parameter gradients for one sentence, on a private parameter view."""
    view = params.view()
    loss = sentence_loss(forward(sentence, view, config, mode, rng), sentence)
    ad.backward(loss)
    return float(loss.data), [t.grad for t in view.tensors()]


# optimizers ---------------------------------------------------------------


class SGD:
    def __init__(self, params: ModelParams, lr: float):
        self.params, self.lr = params, lr

    def step(self, grads):
        for t, g in zip(self.params.tensors(), grads):
            t.data -= self.lr * g


class Adam:
    def __init__(self, params: ModelParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params, self.lr = params, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(t.data) for t in params.tensors()]
        self.v = [np.zeros_like(t.data) for t in params.tensors()]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params.tensors(), grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def clip_grads(grads, max_norm):
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))
    if max_norm is not None and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        grads = [g * factor for g in grads]
    return grads, norm


# checkpoints --------------------------------------------------------------

MAGIC = b"DIGC"
VERSION = 1
DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    params: ModelParams
    version: int = VERSION

    def to_bytes(self) -> bytes:
        blob = json.dumps(
            {"model_config": self.config.to_dict(), "vocabulary": self.vocab.dumps()},
            sort_keys=True, separators=(",", ":"), ensure_ascii=False,
        ).encode("utf-8")
        out = io.BytesIO()
        out.write(MAGIC)
        out.write(struct.pack("<I", self.version))
        out.write(struct.pack("<Q", len(blob)))
        out.write(blob)
        named = self.params.named_tensors()
        out.write(struct.pack("<I", len(named)))
        for name, t in named.items():
            raw = name.encode("utf-8")
            arr = t.data
            out.write(struct.pack("<H", len(raw)))
            out.write(raw)
            out.write(struct.pack("<BB", DTYPE_CODES[arr.dtype], arr.ndim))
            out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            out.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
        return out.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        reader = _Reader(data)
        if reader.take(4, "magic") != MAGIC:
            raise NotACheckpointError("not a checkpoint (bad magic bytes)")
        (version,) = reader.unpack("<I", "version")
        if version != VERSION:
            raise UnsupportedVersionError(f"unsupported checkpoint version {version} (expected {VERSION})")
        (blob_len,) = reader.unpack("<Q", "header length")
        header = json.loads(reader.take(blob_len, "header").decode("utf-8"))
        config = ModelConfig.from_dict(header["model_config"])
        vocab = Vocabulary.loads(header["vocabulary"])
        (count,) = reader.unpack("<I", "parameter count")
        arrays = {}
        for _ in range(count):
            (name_len,) = reader.unpack("<H", "name length")
            name = reader.take(name_len, "name").decode("utf-8")
            code, rank = reader.unpack("<BB", f"{name} dtype/rank")
            if code not in CODE_DTYPES:
                raise ShapeMismatchError(f"{name}: unknown dtype code {code}")
            shape = reader.unpack(f"<{rank}I", f"{name} dims")
            dtype = CODE_DTYPES[code]
            size = int(np.prod(shape)) * dtype.itemsize
            arr = np.frombuffer(reader.take(size, f"{name} values"), dtype=dtype).reshape(shape)
            arrays[name] = arr.astype(dtype.newbyteorder("="))
        if reader.pos != len(data):
            raise ShapeMismatchError(f"{len(data) - reader.pos} trailing bytes after last parameter")
        params = ModelParams.from_arrays(arrays, copy=False)
        params.check(config, vocab.n_words, vocab.n_tags)
        return cls(config, vocab, params, version)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(f"checkpoint truncated while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    with open(path, "wb") as f:
        f.write(ckpt.to_bytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        return Checkpoint.from_bytes(f.read())


# training loop --------------------------------------------------------------


def predict_trees(sentences, params: ModelParams, config: ModelConfig):
    return [greedy_decode(forward(s, params, config, INFER)[-1]) for s in sentences]


def _sentence_rng(seed, epoch, index):
    return np.random.default_rng([seed, epoch, index])


def train(train_set: Sequence[TokenSentence], dev_set: Sequence[TokenSentence],
          model_config: ModelConfig, train_config: TrainConfig, vocab: Vocabulary,
          params: Optional[ModelParams] = None) -> Tuple[Checkpoint, List[str]]:
    """Mini-batch training on :func:`sentence_loss`.

    Returns the checkpoint with the best dev LAS (greedy decoding), or the
    final parameters when ``dev_set`` is empty, together with the metrics log
    as ``epoch<TAB>step<TAB>metric<TAB>value`` lines.
    """
    if not train_set:
        raise ContractViolation("training set is empty")
    tc = train_config
    dtype = DTYPES[tc.dtype]
    rng = np.random.default_rng(tc.seed)
    if params is None:
        params = init_params(model_config, vocab.n_words, vocab.n_tags, rng, dtype)
    else:
        params.check(model_config, vocab.n_words, vocab.n_tags)
    opt = Adam(params, tc.learning_rate) if tc.optimizer == "adam" else SGD(params, tc.learning_rate)
    pool = ThreadPoolExecutor(tc.n_jobs) if tc.n_jobs > 1 else None
    log: List[str] = []
    best_las, best_params = -1.0, None
    start = time.monotonic()
    step = seen = 0

    def record(epoch, metric, value):
        log.append(f"{epoch}\t{step}\t{metric}\t{value!r}")

    def run_dev(epoch):
        nonlocal best_las, best_params
        if not dev_set:
            return
        report = evaluate(dev_set, predict_trees(dev_set, params, model_config), tc.punct_convention)
        record(epoch, "dev_uas", report.uas)
        record(epoch, "dev_las", report.las)
        logger.info("epoch %d step %d dev UAS %.2f LAS %.2f", epoch, step, report.uas, report.las)
        if report.las > best_las:
            best_las, best_params = report.las, params.copy()

    out_of_time = False
    try:
        for epoch in range(1, tc.epochs + 1):
            order = rng.permutation(len(train_set))
            for lo in range(0, len(order), tc.batch_size):
                batch = order[lo : lo + tc.batch_size]
                jobs = [(train_set[i], _sentence_rng(tc.seed, epoch, int(i))) for i in batch]
                if pool is None:
                    results = [sentence_gradients(s, params, model_config, TRAIN, r) for s, r in jobs]
                else:
                    results = list(pool.map(lambda j: sentence_gradients(j[0], params, model_config, TRAIN, j[1]), jobs))
                step += 1
                # fixed sentence-order reduction
                loss = 0.0
                grads = [np.zeros_like(t.data) for t in params.tensors()]
                for value, gs in results:
                    loss += value
                    for acc, g in zip(grads, gs):
                        if g is not None:
                            acc += g
                loss /= len(batch)
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite loss {loss} at epoch {epoch}, batch {step}")
                grads = [g / len(batch) for g in grads]
                grads, _ = clip_grads(grads, tc.clip_norm)
                opt.step(grads)
                record(epoch, "train_loss", loss)
                previous, seen = seen, seen + len(batch)
                if tc.eval_every and previous // tc.eval_every != seen // tc.eval_every:
                    run_dev(epoch)
                if tc.max_seconds is not None and time.monotonic() - start > tc.max_seconds:
                    out_of_time = True
                    break
            if not tc.eval_every or out_of_time:
                run_dev(epoch)
            if out_of_time:
                logger.info("time budget of %.0f s reached in epoch %d", tc.max_seconds, epoch)
                break
    finally:
        if pool is not None:
            pool.shutdown()
    final = best_params if best_params is not None else params
    return Checkpoint(model_config, vocab, final), log

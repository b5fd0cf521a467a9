"""Dilated iterated graph CNN over the (dependent, head) grid of a sentence."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import INFER, TRAIN, Conv2dKernel, Tensor
from .corpus import TokenSentence
from .errors import ConfigError, ContractViolation, ShapeMismatchError


@dataclass
class ModelConfig:
    word_emb_dim: int = 100
    pos_emb_dim: int = 25
    hidden_channels: int = 128
    conv_radius: int = 1
    layers_per_block: int = 4
    num_blocks: int = 2
    num_labels: int = 1
    input_dropout: float = 0.15
    block_dropout: float = 0.25
    # radius of the pair-grid input convolution; 0 makes it a per-cell projection
    input_radius: int = 0

    def __post_init__(self):
        for name in ("word_emb_dim", "pos_emb_dim", "hidden_channels", "conv_radius",
                     "layers_per_block", "num_blocks", "num_labels"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
            setattr(self, name, int(value))
        if int(self.input_radius) != self.input_radius or self.input_radius < 0:
            raise ConfigError(f"input_radius must be a non-negative integer, got {self.input_radius!r}")
        self.input_radius = int(self.input_radius)
        for name in ("input_dropout", "block_dropout"):
            value = float(getattr(self, name))
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {value}")
            setattr(self, name, value)

    @property
    def token_dim(self) -> int:
        return self.word_emb_dim + self.pos_emb_dim

    def dilations(self) -> List[int]:
        """Dilation of each in-block layer, ending with the extra dilation-1 layer."""
        return [2 ** k for k in range(self.layers_per_block)] + [1]

    def block_radius(self) -> int:
        return self.conv_radius * (2 ** self.layers_per_block - 1) + self.conv_radius

    def receptive_radius(self) -> int:
        """Grid distance (per axis) beyond which an input cell cannot reach an output cell."""
        return self.input_radius + self.num_blocks * self.block_radius()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class ModelParams:
    """All learned tensors.  Block layers are shared by every block application."""

    def __init__(self, word_embeddings, pos_embeddings, input_conv, block_layers, output_weight, output_bias):
        self.word_embeddings: Tensor = word_embeddings
        self.pos_embeddings: Tensor = pos_embeddings
        self.input_conv: Conv2dKernel = input_conv
        self.block_layers: List[Conv2dKernel] = list(block_layers)
        self.output_weight: Tensor = output_weight
        self.output_bias: Tensor = output_bias

    def named_tensors(self) -> Dict[str, Tensor]:
        named = {
            "word_embeddings": self.word_embeddings,
            "pos_embeddings": self.pos_embeddings,
            "input_conv.weight": self.input_conv.weight,
            "input_conv.bias": self.input_conv.bias,
        }
        for k, layer in enumerate(self.block_layers):
            named[f"block.{k}.weight"] = layer.weight
            named[f"block.{k}.bias"] = layer.bias
        named["output.weight"] = self.output_weight
        named["output.bias"] = self.output_bias
        return named

    def tensors(self) -> List[Tensor]:
        return list(self.named_tensors().values())

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.tensors())

    def zero_grad(self):
        for t in self.tensors():
            t.zero_grad()

    def view(self) -> "ModelParams":
        """Fresh leaf tensors sharing this model's arrays, with their own grads."""
        return self.from_arrays({k: t.data for k, t in self.named_tensors().items()}, copy=False)

    def copy(self) -> "ModelParams":
        return self.from_arrays({k: t.data for k, t in self.named_tensors().items()}, copy=True)

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], copy=True) -> "ModelParams":
        def leaf(name):
            if name not in arrays:
                raise ShapeMismatchError(f"missing parameter {name!r}")
            a = np.array(arrays[name]) if copy else arrays[name]
            return Tensor(a, requires_grad=True, name=name)

        n_layers = sum(1 for k in arrays if k.startswith("block.") and k.endswith(".weight"))
        layers = [
            Conv2dKernel(leaf(f"block.{k}.weight"), leaf(f"block.{k}.bias"), 2 ** k if k < n_layers - 1 else 1)
            for k in range(n_layers)
        ]
        return cls(
            leaf("word_embeddings"),
            leaf("pos_embeddings"),
            Conv2dKernel(leaf("input_conv.weight"), leaf("input_conv.bias"), 1),
            layers,
            leaf("output.weight"),
            leaf("output.bias"),
        )

    def check(self, config: ModelConfig, n_words: int, n_tags: int) -> None:
        """Raise :class:`ShapeMismatchError` unless shapes agree with ``config``."""
        expected = expected_shapes(config, n_words, n_tags)
        named = self.named_tensors()
        if list(named) != list(expected):
            raise ShapeMismatchError(f"parameter names {list(named)} != expected {list(expected)}")
        for name, shape in expected.items():
            if named[name].shape != shape:
                raise ShapeMismatchError(f"{name}: shape {named[name].shape} != expected {shape}")


def expected_shapes(config: ModelConfig, n_words: int, n_tags: int) -> Dict[str, tuple]:
    k_in = 2 * config.input_radius + 1
    k = 2 * config.conv_radius + 1
    hid = config.hidden_channels
    shapes = {
        "word_embeddings": (n_words, config.word_emb_dim),
        "pos_embeddings": (n_tags, config.pos_emb_dim),
        "input_conv.weight": (k_in, k_in, 2 * config.token_dim, hid),
        "input_conv.bias": (hid,),
    }
    for layer in range(config.layers_per_block + 1):
        shapes[f"block.{layer}.weight"] = (k, k, hid, hid)
        shapes[f"block.{layer}.bias"] = (hid,)
    shapes["output.weight"] = (hid, config.num_labels)
    shapes["output.bias"] = (config.num_labels,)
    return shapes


def parameter_count(config: ModelConfig, n_words: int, n_tags: int) -> int:
    """Closed-form parameter count; independent of ``num_blocks``."""
    k_in = 2 * config.input_radius + 1
    k = 2 * config.conv_radius + 1
    hid = config.hidden_channels
    return (
        n_words * config.word_emb_dim
        + n_tags * config.pos_emb_dim
        + k_in * k_in * 2 * config.token_dim * hid + hid
        + (config.layers_per_block + 1) * (k * k * hid * hid + hid)
        + hid * config.num_labels + config.num_labels
    )


def init_params(config: ModelConfig, n_words: int, n_tags: int, rng, dtype=np.float64) -> ModelParams:
    """Random initialisation: He-normal convolutions, zero biases."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    shapes = expected_shapes(config, n_words, n_tags)
    arrays = {}
    for name, shape in shapes.items():
        if name.endswith("bias"):
            arrays[name] = np.zeros(shape)
        elif name.endswith("embeddings"):
            arrays[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[1]), shape)
        elif name == "output.weight":
            arrays[name] = rng.normal(0.0, np.sqrt(1.0 / shape[0]), shape)
        else:
            fan_in = shape[0] * shape[1] * shape[2]
            arrays[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
    return ModelParams.from_arrays({k: v.astype(dtype) for k, v in arrays.items()}, copy=False)


# forward pass -----------------------------------------------------------


def embed_tokens(sentence: TokenSentence, params: ModelParams) -> Tensor:
    """``N x (word_dim + pos_dim)`` matrix; row 0 holds the root symbols."""
    if not sentence.encoded:
        raise ContractViolation("sentence has no vocabulary indices; encode it first")
    words = ad.embedding(params.word_embeddings, sentence.word_ids)
    tags = ad.embedding(params.pos_embeddings, sentence.pos_ids)
    return ad.concat([words, tags], axis=-1)


def build_edge_input(tokens: Tensor) -> Tensor:
    """``N x N x 2d`` grid whose cell ``(d, h)`` is ``[x_d ; x_h]``."""
    if tokens.ndim != 2:
        raise ContractViolation(f"tokens must be N x d, got shape {tokens.shape}")
    n, dim = tokens.shape
    if n < 2:
        raise ContractViolation(f"need the root plus at least one token, got N={n}")
    x = tokens.data
    grid = np.empty((n, n, 2 * dim), dtype=x.dtype)
    grid[:, :, :dim] = x[:, None, :]
    grid[:, :, dim:] = x[None, :, :]

    def grad_fn(g):
        return (g[:, :, :dim].sum(axis=1) + g[:, :, dim:].sum(axis=0),)

    return ad._result(grid, (tokens,), grad_fn)


def block_forward(grid: Tensor, layers: List[Conv2dKernel]) -> Tensor:
    """One block: every layer is a dilated convolution followed by ReLU."""
    if grid.shape[-1] != layers[0].in_channels:
        raise ContractViolation(
            f"block input has {grid.shape[-1]} channels, block expects {layers[0].in_channels}"
        )
    out = grid
    for layer in layers:
        out = ad.relu(ad.conv2d_dilated(out, layer))
    return out


def forward(sentence: TokenSentence, params: ModelParams, config: ModelConfig,
            mode: str = INFER, rng: Optional[np.random.Generator] = None) -> List[Tensor]:
    """Score tensors ``N x N x D``, one per block application.

    Entry ``[d, h, l]`` scores "token h is the head of token d with label l".
    Consumers that need a single prediction use the last element.
    """
    if mode not in (TRAIN, INFER):
        raise ConfigError(f"mode must be {TRAIN!r} or {INFER!r}, got {mode!r}")
    grid = build_edge_input(embed_tokens(sentence, params))
    grid = ad.dropout(grid, config.input_dropout, mode, rng)
    hidden = ad.conv2d_dilated(grid, params.input_conv)
    outputs = []
    for _ in range(config.num_blocks):
        hidden = block_forward(hidden, params.block_layers)
        hidden = ad.dropout(hidden, config.block_dropout, mode, rng)
        outputs.append(ad.affine(hidden, params.output_weight, params.output_bias))
    return outputs


def decode_mask(n: int) -> np.ndarray:
    """``N x N`` boolean, true where (dependent, head) is a legal arc."""
    mask = ~np.eye(n, dtype=bool)
    mask[0, :] = False
    return mask


def dependent_log_probs(scores: Tensor) -> Tensor:
    """Per-dependent log-probabilities over (head, label) pairs, dependents 1..N-1.

    Shape ``(N-1) x N x D``; masked pairs hold ``-inf``.
    """
    n, _, d = scores.shape
    flat = ad.reshape(scores[1:], n - 1, n * d)
    mask = np.repeat(decode_mask(n)[1:], d, axis=1)
    return ad.reshape(ad.log_softmax_masked(flat, mask), n - 1, n, d)

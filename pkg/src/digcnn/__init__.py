"""Dilated iterated graph CNN dependency parser."""

from .autodiff import Conv2dKernel, Tensor, backward, conv2d_dilated
from .corpus import TokenSentence, Vocabulary, build_vocab, is_eval_punct, read_conll, write_conll
from .decode import ArcScoreMatrix, ParseTree, eisner_decode, greedy_decode, is_projective, reduce_to_arc_scores
from .estimator import DIGCNNParser
from .evaluate import EvalReport, evaluate
from .model import ModelConfig, ModelParams, forward, init_params
from .train import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, sentence_loss, train

__version__ = "0.1.0"

__all__ = [
    "ArcScoreMatrix", "Checkpoint", "Conv2dKernel", "DIGCNNParser", "EvalReport", "ModelConfig",
    "ModelParams", "ParseTree", "Tensor", "TokenSentence", "TrainConfig", "Vocabulary", "backward",
    "build_vocab", "conv2d_dilated", "eisner_decode", "evaluate", "forward", "greedy_decode",
    "init_params", "is_eval_punct", "is_projective", "load_checkpoint", "read_conll",
    "reduce_to_arc_scores", "save_checkpoint", "sentence_loss", "train", "write_conll",
]

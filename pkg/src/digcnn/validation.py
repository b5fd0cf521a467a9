"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

import os
from typing import List

from .corpus import ROOT, TokenSentence, read_conll
from .errors import ContractViolation, DataError


def check_sentences(X, require_gold: bool = False, mode: str = "parse") -> List[TokenSentence]:
    """Normalise ``X`` to a list of :class:`TokenSentence` and validate it.

    ``X`` may also be a path to a CoNLL file.
    """
    if isinstance(X, (str, os.PathLike)):
        X = read_conll(X, mode="train" if require_gold else mode)
    if isinstance(X, TokenSentence):
        raise ContractViolation("expected a sequence of sentences, got a single TokenSentence")
    sentences = list(X)
    for k, s in enumerate(sentences):
        if not isinstance(s, TokenSentence):
            raise ContractViolation(f"item {k} is {type(s).__name__}, not TokenSentence")
        check_sentence(s, k, require_gold)
    return sentences


def check_sentence(s: TokenSentence, k: int = 0, require_gold: bool = False) -> None:
    n = s.n
    if n < 2:
        raise DataError(f"sentence {k} has no real tokens")
    if s.forms[0] != ROOT:
        raise DataError(f"sentence {k} does not start with the dummy root")
    if len(s.upos) != n or len(s.xpos) != n:
        raise DataError(f"sentence {k}: tag arrays do not match {n} positions")
    for name in ("word_ids", "pos_ids"):
        ids = getattr(s, name)
        if ids is not None and len(ids) != n:
            raise DataError(f"sentence {k}: {name} has {len(ids)} entries for {n} positions")
    if s.gold_heads is None:
        if require_gold:
            raise DataError(f"sentence {k} has no gold heads")
        return
    if len(s.gold_heads) != n - 1:
        raise DataError(f"sentence {k}: {len(s.gold_heads)} gold heads for {n - 1} tokens")
    for i, h in enumerate(s.gold_heads, start=1):
        if not 0 <= h < n or h == i:
            raise DataError(f"sentence {k}: token {i} has invalid head {h}")

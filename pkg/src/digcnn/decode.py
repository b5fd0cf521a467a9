"""Decoders turning score tensors into head/label assignments."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np

from .errors import ContractViolation

NEG_INF = -np.inf


@dataclass
class ParseTree:
    """Heads and labels of real tokens: ``heads[i]`` belongs to position ``i + 1``."""

    heads: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.heads = np.asarray(self.heads, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.heads.shape != self.labels.shape:
            raise ContractViolation("heads and labels must have the same length")

    @property
    def n(self) -> int:
        return len(self.heads) + 1

    def __eq__(self, other):
        return (
            isinstance(other, ParseTree)
            and np.array_equal(self.heads, other.heads)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass
class ArcScoreMatrix:
    """``scores[d, h]``: best label log-probability for arc ``h -> d``; ``-inf`` where masked."""

    scores: np.ndarray
    best_label: np.ndarray

    @property
    def n(self) -> int:
        return self.scores.shape[0]


def _legal(n):
    legal = ~np.eye(n, dtype=bool)
    legal[0] = False
    return legal


def _as_array(scores):
    return np.asarray(getattr(scores, "data", scores))


def greedy_decode(scores) -> ParseTree:
    """Independent argmax over (head, label) for every dependent.

    Ties go to the lowest head index, then the lowest label.  The result need
    not be a tree.
    """
    s = _as_array(scores)
    n, _, d = s.shape
    masked = np.where(_legal(n)[:, :, None], s, NEG_INF)[1:].reshape(n - 1, n * d)
    best = masked.argmax(axis=1)
    return ParseTree(best // d, best % d)


def _log_softmax_rows(s):
    n, _, d = s.shape
    masked = np.where(_legal(n)[:, :, None], s, NEG_INF)
    flat = masked[1:].reshape(n - 1, n * d)
    top = flat.max(axis=1, keepdims=True)
    lp = flat - top - np.log(np.exp(flat - top).sum(axis=1, keepdims=True))
    out = np.full(s.shape, NEG_INF)
    out[1:] = lp.reshape(n - 1, n, d)
    return out


def reduce_to_arc_scores(scores) -> ArcScoreMatrix:
    """Collapse labels: each cell keeps its best label's log-probability."""
    lp = _log_softmax_rows(_as_array(scores).astype(np.float64))
    best_label = lp.argmax(axis=2)
    arcs = lp.max(axis=2)
    arcs[~_legal(lp.shape[0])] = NEG_INF
    return ArcScoreMatrix(arcs, best_label)


def tree_score(arcs, heads) -> float:
    a = _as_array(getattr(arcs, "scores", arcs))
    heads = np.asarray(heads)
    return float(a[np.arange(1, len(heads) + 1), heads].sum())


# Eisner ---------------------------------------------------------------


def _eisner_chart(w):
    """Span DP over positions ``0..n-1`` with arc weights ``w[h, d]``.

    Returns complete/incomplete charts and back-pointers.  Direction 1 means
    the head is the span's left end, 0 the right end.
    """
    n = w.shape[0]
    complete = np.full((n, n, 2), NEG_INF)
    incomplete = np.full((n, n, 2), NEG_INF)
    complete_bp = np.zeros((n, n, 2), dtype=np.int64)
    incomplete_bp = np.zeros((n, n, 2), dtype=np.int64)
    for i in range(n):
        complete[i, i, 0] = complete[i, i, 1] = 0.0
    for width in range(1, n):
        for s in range(n - width):
            t = s + width
            # incomplete: arc between s and t, split at r
            split = complete[s, s:t, 1] + complete[s + 1 : t + 1, t, 0]
            r = int(np.argmax(split))
            incomplete[s, t, 0] = split[r] + w[t, s]
            incomplete[s, t, 1] = split[r] + w[s, t]
            incomplete_bp[s, t, 0] = incomplete_bp[s, t, 1] = s + r
            # complete, head at t
            left = complete[s, s:t, 0] + incomplete[s:t, t, 0]
            r = int(np.argmax(left))
            complete[s, t, 0] = left[r]
            complete_bp[s, t, 0] = s + r
            # complete, head at s
            right = incomplete[s, s + 1 : t + 1, 1] + complete[s + 1 : t + 1, t, 1]
            r = int(np.argmax(right))
            complete[s, t, 1] = right[r]
            complete_bp[s, t, 1] = s + 1 + r
    return complete, incomplete, complete_bp, incomplete_bp


def _backtrack(heads, complete_bp, incomplete_bp, s, t, direction, is_complete):
    stack = [(s, t, direction, is_complete)]
    while stack:
        s, t, direction, is_complete = stack.pop()
        if s == t:
            continue
        if is_complete:
            r = complete_bp[s, t, direction]
            if direction == 0:
                stack.append((s, r, 0, True))
                stack.append((r, t, 0, False))
            else:
                stack.append((s, r, 1, False))
                stack.append((r, t, 1, True))
        else:
            r = incomplete_bp[s, t, direction]
            if direction == 0:
                heads[s] = t
            else:
                heads[t] = s
            stack.append((s, r, 1, True))
            stack.append((r + 1, t, 0, True))


def eisner_decode(arcs: ArcScoreMatrix, single_root: bool = False) -> ParseTree:
    """Highest-scoring projective tree rooted at position 0.

    By default the root may take several dependents; ``single_root`` allows
    exactly one.
    """
    a = np.array(arcs.scores, dtype=np.float64)
    n = a.shape[0]
    if n < 2:
        raise ContractViolation(f"need N >= 2, got {n}")
    a[~_legal(n)] = NEG_INF
    w = a.T  # w[h, d]
    heads = np.full(n, -1, dtype=np.int64)
    if not single_root:
        _, _, cbp, ibp = _eisner_chart(w)
        _backtrack(heads, cbp, ibp, 0, n - 1, 1, True)
    else:
        # DP over the real tokens only, then attach exactly one of them to the root
        complete, _, cbp, ibp = _eisner_chart(w[1:, 1:])
        m = n - 1
        totals = np.array([complete[0, r, 0] + complete[r, m - 1, 1] + w[0, r + 1] for r in range(m)])
        r = int(np.argmax(totals))
        sub = np.full(m, -1, dtype=np.int64)
        _backtrack(sub, cbp, ibp, 0, r, 0, True)
        _backtrack(sub, cbp, ibp, r, m - 1, 1, True)
        heads[1:] = sub + 1
        heads[r + 1] = 0
    heads = heads[1:]
    labels = arcs.best_label[np.arange(1, n), heads]
    return ParseTree(heads, labels)


# tree properties ------------------------------------------------------


def _full_heads(tree) -> np.ndarray:
    heads = tree.heads if isinstance(tree, ParseTree) else np.asarray(tree)
    return np.concatenate([[-1], heads]).astype(np.int64)


def is_tree(tree) -> bool:
    """Every token reaches the root 0 without revisiting a node."""
    heads = _full_heads(tree)
    n = len(heads)
    if np.any(heads[1:] < 0) or np.any(heads[1:] >= n) or np.any(heads[1:] == np.arange(1, n)):
        return False
    for d in range(1, n):
        seen, node = set(), d
        while node != 0:
            if node in seen:
                return False
            seen.add(node)
            node = heads[node]
    return True


def is_projective(tree) -> bool:
    """True iff no two arcs cross when drawn above the sentence."""
    if not is_tree(tree):
        raise ContractViolation("is_projective needs an acyclic tree rooted at 0")
    heads = _full_heads(tree)
    spans = [(min(d, h), max(d, h)) for d, h in enumerate(heads) if d > 0]
    for (a, b), (c, d) in itertools.combinations(spans, 2):
        if a < c < b < d or c < a < d < b:
            return False
    return True


def projective_trees(n: int) -> Iterator[np.ndarray]:
    """Every projective tree over positions ``0..n-1`` rooted at 0, by exhaustion.

    Yields real-token head arrays.  Intended as a test oracle; the count grows
    exponentially.
    """
    for heads in itertools.product(range(n), repeat=n - 1):
        heads = np.asarray(heads)
        if is_tree(heads) and is_projective(heads):
            yield heads


def brute_force_best(arcs, single_root: bool = False):
    """Best projective tree and its score by exhaustive enumeration."""
    a = np.asarray(getattr(arcs, "scores", arcs))
    best, best_heads = NEG_INF, None
    for heads in projective_trees(a.shape[0]):
        if single_root and np.count_nonzero(heads == 0) != 1:
            continue
        score = tree_score(a, heads)
        if best_heads is None or score > best:
            best, best_heads = score, heads
    return best_heads, best

"""Attachment scores."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .corpus import TokenSentence, is_eval_punct
from .errors import ContractViolation


@dataclass
class EvalReport:
    uas: float
    las: float
    counted_tokens: int
    total_tokens: int
    convention: str
    per_sentence: Optional[List[tuple]] = field(default=None, repr=False)

    def lines(self) -> List[str]:
        return [f"UAS\t{self.uas:.2f}", f"LAS\t{self.las:.2f}"]


def evaluate(gold: Sequence[TokenSentence], pred, convention: str = "ud",
             include_punct: bool = False, per_sentence: bool = False) -> EvalReport:
    """UAS and LAS in percent over non-punctuation tokens.

    ``pred`` is a sequence of ParseTrees aligned with ``gold``; gold label
    indices and predicted label indices must come from the same vocabulary.
    """
    if len(gold) != len(pred):
        raise ContractViolation(f"{len(gold)} gold sentences but {len(pred)} predictions")
    counted = total = head_ok = both_ok = 0
    breakdown = [] if per_sentence else None
    for k, (s, tree) in enumerate(zip(gold, pred)):
        if s.gold_heads is None or s.gold_labels is None:
            raise ContractViolation(f"gold sentence {k} has no heads/labels")
        if len(tree.heads) != s.n - 1:
            raise ContractViolation(f"sentence {k}: {len(tree.heads)} predicted heads for {s.n - 1} tokens")
        s_counted = s_heads = s_both = 0
        for i in range(1, s.n):
            total += 1
            if not include_punct and is_eval_punct(s.token(i), convention):
                continue
            s_counted += 1
            if tree.heads[i - 1] == s.gold_heads[i - 1]:
                s_heads += 1
                if tree.labels[i - 1] == s.gold_labels[i - 1]:
                    s_both += 1
        counted += s_counted
        head_ok += s_heads
        both_ok += s_both
        if breakdown is not None:
            breakdown.append((s_counted, s_heads, s_both))
    uas = 100.0 * head_ok / counted if counted else 0.0
    las = 100.0 * both_ok / counted if counted else 0.0
    return EvalReport(uas, las, counted, total, convention, breakdown)

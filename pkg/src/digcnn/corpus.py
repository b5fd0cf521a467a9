"""CoNLL-U / CoNLL-X treebank reading and writing, vocabularies, punctuation rules."""

from __future__ import annotations

import io
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence

from .errors import ContractViolation, DataError, ParseError

ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)

ROOT = "<root>"
UNK = "<unk>"
ROOT_INDEX = 0
UNK_INDEX = 1
UNKNOWN_LABEL = -1

PTB_PUNCT = frozenset({"``", "''", ":", ",", "."})

VOCAB_HEADER = "# digcnn-vocabulary\tversion\t1"


@dataclass
class Token:
    form: str
    upos: str
    xpos: str
    head: Optional[int] = None
    label: Optional[str] = None


@dataclass
class TokenSentence:
    """A sentence whose position 0 is the dummy root.

    ``forms``, ``upos``, ``xpos`` and the id arrays have length ``n`` (root
    included).  ``gold_heads`` and ``gold_labels`` cover the real tokens only,
    so ``gold_heads[i]`` is the head of position ``i + 1``.
    """

    forms: List[str]
    upos: List[str]
    xpos: List[str]
    deprels: Optional[List[str]] = None
    gold_heads: Optional[List[int]] = None
    gold_labels: Optional[List[int]] = None
    word_ids: Optional[List[int]] = None
    pos_ids: Optional[List[int]] = None
    rows: List[List[str]] = field(default_factory=list, repr=False)
    extra: List[tuple] = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return len(self.forms)

    @property
    def pos(self) -> List[str]:
        """Tag used as model input: UPOS, or XPOS where UPOS is absent."""
        return [u if u != "_" else x for u, x in zip(self.upos, self.xpos)]

    @property
    def has_gold(self) -> bool:
        return self.gold_heads is not None

    @property
    def encoded(self) -> bool:
        return self.word_ids is not None

    def token(self, i: int) -> Token:
        head = label = None
        if self.gold_heads is not None and i > 0:
            head = self.gold_heads[i - 1]
        if self.deprels is not None and i > 0:
            label = self.deprels[i - 1]
        return Token(self.forms[i], self.upos[i], self.xpos[i], head, label)


class Vocabulary:
    """Dense index maps for words, POS tags and arc labels.

    Words and tags reserve index 0 for the root symbol and index 1 for
    unknowns.  Labels have no reserved entries.
    """

    KINDS = ("word", "pos", "label")

    def __init__(self, min_count: int = 1):
        self.min_count = int(min_count)
        self.words = {ROOT: ROOT_INDEX, UNK: UNK_INDEX}
        self.tags = {ROOT: ROOT_INDEX, UNK: UNK_INDEX}
        self.labels: dict = {}

    def __eq__(self, other):
        return (
            isinstance(other, Vocabulary)
            and self.words == other.words
            and self.tags == other.tags
            and self.labels == other.labels
        )

    def __repr__(self):
        return f"Vocabulary(words={len(self.words)}, tags={len(self.tags)}, labels={len(self.labels)})"

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def n_tags(self) -> int:
        return len(self.tags)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def label_names(self) -> List[str]:
        names = [None] * len(self.labels)
        for name, i in self.labels.items():
            names[i] = name
        return names

    def extend(self, sentences: Iterable[TokenSentence]) -> "Vocabulary":
        """Add unseen symbols in first-occurrence order."""
        sentences = list(sentences)
        counts = Counter(f.lower() for s in sentences for f in s.forms[1:])
        for s in sentences:
            for form in s.forms[1:]:
                key = form.lower()
                if key not in self.words and counts[key] >= self.min_count:
                    self.words[key] = len(self.words)
            for tag in s.pos[1:]:
                self.tags.setdefault(tag, len(self.tags))
            for label in s.deprels or ():
                if label != "_":
                    self.labels.setdefault(label, len(self.labels))
        return self

    def encode(self, sentence: TokenSentence) -> TokenSentence:
        """Return a copy of ``sentence`` with vocabulary indices filled in."""
        word_ids = [ROOT_INDEX] + [self.words.get(f.lower(), UNK_INDEX) for f in sentence.forms[1:]]
        pos_ids = [ROOT_INDEX] + [self.tags.get(t, UNK_INDEX) for t in sentence.pos[1:]]
        labels = None
        if sentence.deprels is not None:
            labels = [self.labels.get(l, UNKNOWN_LABEL) for l in sentence.deprels]
        return replace(sentence, word_ids=word_ids, pos_ids=pos_ids, gold_labels=labels)

    # serialization ----------------------------------------------------

    def dumps(self) -> str:
        lines = [VOCAB_HEADER, f"meta\t0\tmin_count={self.min_count}"]
        for kind, table in zip(self.KINDS, (self.words, self.tags, self.labels)):
            for surface, index in sorted(table.items(), key=lambda kv: kv[1]):
                lines.append(f"{kind}\t{index}\t{surface}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        if not lines or lines[0] != VOCAB_HEADER:
            raise DataError("not a digcnn vocabulary (bad header)")
        vocab = cls()
        tables = {"word": {}, "pos": {}, "label": {}}
        for lineno, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("expected kind<TAB>index<TAB>surface", "<vocabulary>", lineno)
            kind, index, surface = parts
            if kind == "meta":
                if surface.startswith("min_count="):
                    vocab.min_count = int(surface.split("=", 1)[1])
                continue
            if kind not in tables:
                raise ParseError(f"unknown entry kind {kind!r}", "<vocabulary>", lineno)
            tables[kind][surface] = int(index)
        for kind, table in tables.items():
            if sorted(table.values()) != list(range(len(table))):
                raise DataError(f"vocabulary {kind} indices are not dense")
        vocab.words, vocab.tags, vocab.labels = tables["word"], tables["pos"], tables["label"]
        return vocab

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            return cls.loads(f.read())


def build_vocab(sentences: Iterable[TokenSentence], min_count: int = 1) -> Vocabulary:
    return Vocabulary(min_count=min_count).extend(sentences)


# reading --------------------------------------------------------------


def _parse_block(lines, path, mode):
    comments, rows, extra = [], [], []
    for lineno, text in lines:
        if text.startswith("#"):
            comments.append(text)
            continue
        cols = text.split("\t")
        if len(cols) < 8:
            raise ParseError(f"expected at least 8 tab-separated columns, found {len(cols)}", path, lineno)
        tid = cols[ID]
        if "-" in tid or "." in tid:
            extra.append((len(rows) + 1, text))
            continue
        try:
            position = int(tid)
        except ValueError:
            raise ParseError(f"malformed token ID {tid!r}", path, lineno) from None
        if position != len(rows) + 1:
            raise ParseError(f"token ID {position} out of sequence (expected {len(rows) + 1})", path, lineno)
        rows.append((lineno, cols))

    n = len(rows) + 1
    heads, deprels = [], []
    for lineno, cols in rows:
        raw = cols[HEAD]
        if raw == "_" and mode == "parse":
            heads = None
            continue
        try:
            head = int(raw)
        except ValueError:
            raise ParseError(f"malformed HEAD {raw!r}", path, lineno) from None
        if not 0 <= head < n:
            raise DataError(f"{path}:{lineno}: HEAD {head} out of range [0, {n})")
        if head == int(cols[ID]):
            raise DataError(f"{path}:{lineno}: token {head} is its own head")
        if heads is not None:
            heads.append(head)
    if heads is not None:
        deprels = [cols[DEPREL] for _, cols in rows]
    sentence = TokenSentence(
        forms=[ROOT] + [c[FORM] for _, c in rows],
        upos=[ROOT] + [c[UPOS] for _, c in rows],
        xpos=[ROOT] + [c[XPOS] for _, c in rows],
        deprels=deprels if heads is not None else None,
        gold_heads=heads,
        rows=[list(c) for _, c in rows],
        extra=[("#", c) for c in comments] + extra,
    )
    return sentence


def iter_blocks(handle, path="<stream>"):
    block = []
    for lineno, line in enumerate(handle, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            if block:
                yield block
                block = []
            continue
        block.append((lineno, line))
    if block:
        yield block


def read_conll(path, vocab: Optional[Vocabulary] = None, mode: str = "train") -> List[TokenSentence]:
    """Read every sentence of a CoNLL file.

    With a vocabulary, ``train`` mode first extends it with the file's symbols
    and ``parse`` mode maps unseen symbols to the unknown index; in both cases
    the returned sentences are encoded.  Without one, sentences carry strings
    only.
    """
    if mode not in ("train", "parse"):
        raise ContractViolation(f"mode must be 'train' or 'parse', got {mode!r}")
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, encoding="utf-8") as f:
        sentences = []
        for block in iter_blocks(f, path):
            if all(text.startswith("#") for _, text in block):
                continue
            sentences.append(_parse_block(block, path, mode))
    if mode == "train":
        for lineno, s in enumerate(sentences):
            if s.gold_heads is None:
                raise DataError(f"{path}: sentence {lineno + 1} lacks gold heads")
    if vocab is not None:
        if mode == "train":
            vocab.extend(sentences)
        sentences = [vocab.encode(s) for s in sentences]
    return sentences


# writing --------------------------------------------------------------


def format_conll(sentences: Sequence[TokenSentence], trees, label_names: Sequence[str]) -> str:
    if len(sentences) != len(trees):
        raise ContractViolation(f"{len(sentences)} sentences but {len(trees)} trees")
    out = io.StringIO()
    for s, tree in zip(sentences, trees):
        if len(tree.heads) != s.n - 1:
            raise ContractViolation(f"tree has {len(tree.heads)} heads for {s.n - 1} tokens")
        comments = [text for kind, text in s.extra if kind == "#"]
        inserts = [(pos, text) for pos, text in s.extra if pos != "#"]
        for text in comments:
            out.write(text + "\n")
        for i in range(1, s.n):
            for pos, text in inserts:
                if pos == i:
                    out.write(text + "\n")
            cols = list(s.rows[i - 1]) if s.rows else _bare_row(s, i)
            cols[HEAD] = str(int(tree.heads[i - 1]))
            label = int(tree.labels[i - 1])
            cols[DEPREL] = label_names[label] if 0 <= label < len(label_names) else "_"
            out.write("\t".join(cols) + "\n")
        out.write("\n")
    return out.getvalue()


def _bare_row(s, i):
    return [str(i), s.forms[i], "_", s.upos[i], s.xpos[i], "_", "_", "_", "_", "_"]


def write_conll(sentences: Sequence[TokenSentence], trees, path, label_names: Sequence[str]) -> None:
    """Write ``sentences`` with HEAD and DEPREL replaced by ``trees``."""
    text = format_conll(sentences, trees, label_names)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


# evaluation punctuation ----------------------------------------------


def is_eval_punct(token: Token, convention: str = "ud") -> bool:
    if convention == "ptb":
        return token.xpos in PTB_PUNCT
    if convention == "ud":
        return token.upos == "PUNCT"
    raise ContractViolation(f"unknown punctuation convention {convention!r}")

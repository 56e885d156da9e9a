"""Tokenization, vocabulary, and context-window generation.

Two window paradigms are supported: SYMMETRIC takes k posts on each side
of the center (offline setting), BEFORE_ONLY takes only the k preceding
posts (the realistic online setting where replies can only depend on
what came before).
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable

from .ingest import Thread

PAD = 0
UNK = 1

SYMMETRIC = "symmetric"
BEFORE_ONLY = "before"
PARADIGMS = (SYMMETRIC, BEFORE_ONLY)

_STRIP_CHARS = string.punctuation


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip surrounding punctuation."""
    out = []
    for tok in text.lower().split():
        tok = tok.strip(_STRIP_CHARS)
        if tok:
            out.append(tok)
    return out


@dataclass
class Vocab:
    token_to_index: dict[str, int]
    index_to_token: list[str]
    counts: dict[str, int]
    min_count: int = 1

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, UNK)


def build_vocab(threads: list[Thread], min_count: int = 1) -> Vocab:
    """Vocabulary over all posts of all threads.

    Tokens with corpus frequency >= min_count are kept; indices are
    assigned by descending frequency, ties broken lexicographically.
    Index 0 is PAD, index 1 is UNK.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counter: Counter[str] = Counter()
    for thread in threads:
        for post in thread.posts:
            counter.update(tokenize(post.text))
    kept = sorted(
        ((tok, c) for tok, c in counter.items() if c >= min_count),
        key=lambda kv: (-kv[1], kv[0]),
    )
    index_to_token = ["<pad>", "<unk>"] + [tok for tok, _ in kept]
    token_to_index = {tok: i + 2 for i, (tok, _) in enumerate(kept)}
    return Vocab(
        token_to_index=token_to_index,
        index_to_token=index_to_token,
        counts=dict(kept),
        min_count=min_count,
    )


def encode_text(vocab: Vocab, text: str, max_len: int) -> list[int]:
    """Token indices for a post; OOV -> UNK, truncated to max_len."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return [vocab.index(tok) for tok in tokenize(text)[:max_len]]


def save_vocab(vocab: Vocab, fp: IO[str]) -> None:
    """One ``token<TAB>index<TAB>count`` line per entry, after a header."""
    fp.write(f"#vocab\tmin_count={vocab.min_count}\tsize={len(vocab)}\n")
    fp.write(f"<pad>\t{PAD}\t0\n<unk>\t{UNK}\t0\n")
    for idx in range(2, len(vocab)):
        tok = vocab.index_to_token[idx]
        fp.write(f"{tok}\t{idx}\t{vocab.counts[tok]}\n")


def load_vocab(fp: IO[str]) -> Vocab:
    header = fp.readline().strip().split("\t")
    if len(header) != 3 or header[0] != "#vocab":
        raise ValueError("bad vocabulary header")
    min_count = int(header[1].split("=")[1])
    size = int(header[2].split("=")[1])
    index_to_token: list[str] = [""] * size
    token_to_index: dict[str, int] = {}
    counts: dict[str, int] = {}
    for line in fp:
        if not line.strip():
            continue
        tok, idx_s, count_s = line.rstrip("\n").split("\t")
        idx = int(idx_s)
        index_to_token[idx] = tok
        if idx >= 2:
            token_to_index[tok] = idx
            counts[tok] = int(count_s)
    return Vocab(token_to_index, index_to_token, counts, min_count)


@dataclass(frozen=True)
class ContextWindow:
    center: int
    members: tuple[int, ...]
    paradigm: str
    k: int


def build_windows(thread: Thread, paradigm: str, k: int) -> list[ContextWindow]:
    """One window per post with a non-empty member set, ordered by center.

    Windows whose member set would be empty (e.g. post 0 under
    BEFORE_ONLY) are omitted: a context embedding over zero posts is
    undefined.
    """
    if paradigm not in PARADIGMS:
        raise ValueError(f"unknown paradigm {paradigm!r}")
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(thread)
    windows = []
    for i in range(n):
        before = range(max(0, i - k), i)
        if paradigm == BEFORE_ONLY:
            members = tuple(before)
        else:
            after = range(i + 1, min(n, i + k + 1))
            members = tuple(before) + tuple(after)
        if members:
            windows.append(ContextWindow(center=i, members=members, paradigm=paradigm, k=k))
    return windows

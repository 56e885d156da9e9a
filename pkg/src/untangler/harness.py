"""Synthetic-conversation oracle and evaluation utilities.

Real chat corpora with annotated reply structure are scarce, so the
pipeline is evaluated against generated threads: each conversation draws
its post times from its own self-exciting process, its texts from a
topic-specific token pool, and its reply links from a recency-weighted
parent distribution.  Interleaving the conversations by global time
order produces a flat thread with a known gold standard.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .ingest import Post, Thread
from .temporal import HawkesModel, simulate


@dataclass
class SynthConfig:
    topic_pools: list[list[str]]          # pairwise disjoint token pools
    hawkes: list[HawkesModel]             # per-conversation burst dynamics
    posts_per_conversation: tuple[int, int] = (20, 40)
    gap_seconds: float = 3600.0           # offset between conversation starts
    tokens_per_post: tuple[int, int] = (3, 8)
    temperature: float = 1.0              # reply recency weight, 1/seconds

    @property
    def n_conversations(self) -> int:
        return len(self.topic_pools)

    def validate(self) -> None:
        if not self.topic_pools:
            raise ValueError("need at least one topic pool")
        if len(self.hawkes) != len(self.topic_pools):
            raise ValueError("need one Hawkes model per conversation")
        seen: set[str] = set()
        for pool in self.topic_pools:
            if not pool:
                raise ValueError("topic pools must be non-empty")
            if seen & set(pool):
                raise ValueError("topic pools must be pairwise disjoint")
            seen |= set(pool)
        if self.posts_per_conversation[0] < 1:
            raise ValueError("posts_per_conversation must be >= 1")


@dataclass
class GoldStandard:
    parents: dict[int, int]  # child index -> parent index (roots absent)
    labels: dict[int, int]   # post index -> conversation id

    def to_json(self) -> str:
        payload = {
            "parents": {str(c): p for c, p in sorted(self.parents.items())},
            "labels": {str(i): l for i, l in sorted(self.labels.items())},
        }
        return json.dumps(payload, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, data: str) -> "GoldStandard":
        payload = json.loads(data)
        return cls(
            parents={int(c): int(p) for c, p in payload["parents"].items()},
            labels={int(i): int(l) for i, l in payload["labels"].items()},
        )


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    ari: float
    predicted_conversations: int
    gold_conversations: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "ari": self.ari,
            "predicted_conversations": self.predicted_conversations,
            "gold_conversations": self.gold_conversations,
        }


def _sample_times(model: HawkesModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """First `count` events of the process, extending the horizon as needed."""
    horizon = max(10.0, 2.0 * count / max(model.mu, 1e-3))
    for _ in range(60):
        times = simulate(model, horizon, rng, max_events=count)
        if times.size >= count:
            return times
        horizon *= 2.0
    raise RuntimeError("could not draw enough events; check Hawkes parameters")


def generate(config: SynthConfig, seed: int = 0) -> tuple[Thread, GoldStandard]:
    """Deterministic synthetic thread plus its gold reply structure."""
    config.validate()
    rng = np.random.default_rng(seed)
    records = []  # (time, conv, local_idx, local_parent, text)
    for conv, (pool, model) in enumerate(zip(config.topic_pools, config.hawkes)):
        lo, hi = config.posts_per_conversation
        n_posts = int(rng.integers(lo, hi + 1))
        times = _sample_times(model, n_posts, rng) + conv * config.gap_seconds
        for j in range(n_posts):
            parent = None
            if j > 0:
                dt = times[j] - times[:j]
                logits = -dt * config.temperature
                w = np.exp(logits - logits.max())
                parent = int(rng.choice(j, p=w / w.sum()))
            k = int(rng.integers(config.tokens_per_post[0], config.tokens_per_post[1] + 1))
            text = " ".join(rng.choice(pool, size=k, replace=True))
            records.append((float(times[j]), conv, j, parent, text))
    records.sort(key=lambda r: (r[0], r[1], r[2]))
    final_index = {(conv, j): idx for idx, (_, conv, j, _, _) in enumerate(records)}
    posts = [
        Post(id=f"c{conv}p{j}", timestamp=t, text=text, author=f"user{conv}")
        for t, conv, j, _, text in records
    ]
    parents = {
        final_index[(conv, j)]: final_index[(conv, parent)]
        for _, conv, j, parent, _ in records
        if parent is not None
    }
    labels = {final_index[(conv, j)]: conv for _, conv, j, _, _ in records}
    return Thread(posts=posts, name=f"synthetic-{seed}"), GoldStandard(parents, labels)


def edge_prf(predicted: dict[int, int], gold: dict[int, int]) -> tuple[float, float, float]:
    """Precision/recall/F1 over parent->child edges."""
    hits = sum(1 for c, p in predicted.items() if gold.get(c) == p)
    if not predicted:
        precision = 1.0 if not gold else 0.0
    else:
        precision = hits / len(predicted)
    if not gold:
        recall = 1.0 if not predicted else 0.0
    else:
        recall = hits / len(gold)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def partition_ari(predicted: dict[int, int], gold: dict[int, int]) -> float:
    """Adjusted Rand index via the pair-counting contingency formula."""
    if set(predicted) != set(gold):
        raise ValueError("partitions must label the same posts")
    n = len(gold)
    if n == 0:
        return 1.0
    table: dict[tuple[int, int], int] = {}
    a: dict[int, int] = {}
    b: dict[int, int] = {}
    for i in predicted:
        key = (predicted[i], gold[i])
        table[key] = table.get(key, 0) + 1
        a[predicted[i]] = a.get(predicted[i], 0) + 1
        b[gold[i]] = b.get(gold[i], 0) + 1
    index = sum(comb(c, 2) for c in table.values())
    sum_a = sum(comb(c, 2) for c in a.values())
    sum_b = sum(comb(c, 2) for c in b.values())
    expected = sum_a * sum_b / comb(n, 2)
    maximum = (sum_a + sum_b) / 2.0
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


def _cosine_distances(embeddings: np.ndarray) -> np.ndarray:
    emb = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(emb, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = emb / safe[:, None]
    unit[norms == 0] = 0.0
    d = 1.0 - np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(d, 0.0)
    return d


def agglomerative(embeddings: np.ndarray, n_clusters: int) -> np.ndarray:
    """Bottom-up average-linkage clustering under cosine distance.

    Merges the closest active pair until n_clusters remain; distance
    ties are broken by the lexicographically smallest cluster-index
    pair, and the merged cluster keeps the smaller index, so the result
    is fully deterministic.  Labels are 0..n_clusters-1 in order of each
    cluster's smallest member.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    n = emb.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty embedding matrix")
    if not 1 <= n_clusters <= n:
        raise ValueError("n_clusters must be in [1, n]")
    dist = _cosine_distances(emb)
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    active = set(range(n))
    while len(active) > n_clusters:
        best = None
        for i, j in itertools.combinations(sorted(active), 2):
            d = dist[i, j]
            if best is None or d < best[0] - 1e-15:
                best = (d, i, j)
        _, i, j = best
        ni, nj = len(members[i]), len(members[j])
        # Lance-Williams update for average linkage
        for k in active:
            if k in (i, j):
                continue
            d = (ni * dist[i, k] + nj * dist[j, k]) / (ni + nj)
            dist[i, k] = dist[k, i] = d
        members[i].extend(members[j])
        del members[j]
        active.remove(j)
    labels = np.zeros(n, dtype=np.int64)
    for label, i in enumerate(sorted(active, key=lambda c: min(members[c]))):
        labels[members[i]] = label
    return labels


def project_3d(embeddings: np.ndarray, seed: int = 0) -> np.ndarray:
    """Top-3 principal components via power iteration with deflation.

    Deterministic (seeded start vectors).  Degenerate data (all rows
    identical) projects to all-zero coordinates.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] < 3:
        raise ValueError("need at least 3 rows to project")
    centered = emb - emb.mean(axis=0)
    cov = centered.T @ centered
    d = cov.shape[0]
    rng = np.random.default_rng(seed)
    comps = []
    for _ in range(min(3, d)):
        if np.abs(cov).max() < 1e-12:
            comps.append(np.zeros(d))
            continue
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        for _ in range(1000):
            w = cov @ v
            norm = np.linalg.norm(w)
            if norm < 1e-15:
                break
            w /= norm
            done = min(np.linalg.norm(w - v), np.linalg.norm(w + v)) < 1e-13
            v = w
            if done:
                break
        comps.append(v)
        lam = float(v @ cov @ v)
        cov = cov - lam * np.outer(v, v)
    while len(comps) < 3:
        comps.append(np.zeros(d))
    basis = np.stack(comps, axis=1)  # (d, 3)
    return centered @ basis

"""Similarity graph construction and two-stage pruning.

Stage 1 zeroes every similarity below the global average and restricts
edges to the detected temporal ranges (block-diagonal copy).  Edges are
then oriented forward in time (earlier post -> later post).  Stage 2
thins the resulting DAG to a forest: when a post is reachable from both
a node and one of that node's descendants, the shallower link is
dropped, so every post keeps at most one parent -- its chronologically
latest surviving candidate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .temporal import Range


def similarity_matrix(embeddings: np.ndarray) -> np.ndarray:
    """Symmetric n x n cosine matrix with zero diagonal.

    All-zero embedding rows (empty posts) get zero similarity to every
    other post and therefore never take part in edges.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ValueError("embeddings must be an n x d matrix")
    norms = np.linalg.norm(emb, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = emb / safe[:, None]
    unit[norms == 0] = 0.0
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(sim, 0.0)
    return sim


def average_score(sim: np.ndarray) -> float:
    """Mean over the strictly-upper-triangle entries.

    Self-similarities are identically 1 and would inflate the pruning
    threshold, so the diagonal (and the mirrored lower triangle) is
    excluded.  Isolated here so the reading is easy to revise.
    """
    n = sim.shape[0]
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, k=1)
    return float(sim[iu].mean())


def _check_partition(ranges: list[Range], n: int) -> None:
    if n == 0:
        return
    if not ranges:
        raise ValueError("ranges must not be empty for a non-empty matrix")
    lo = 0
    for r in ranges:
        if r.lo != lo or r.hi <= r.lo:
            raise ValueError("ranges must be contiguous, non-empty, and cover [0, n)")
        lo = r.hi
    if lo != n:
        raise ValueError("ranges must cover [0, n)")


def prune_average(sim: np.ndarray, ranges: list[Range]) -> np.ndarray:
    """Average-threshold pruning restricted to range blocks.

    One pass: (1) compute the global average over the strict upper
    triangle, (2) zero entries strictly below it, (3) keep only entries
    whose both endpoints fall inside a single range.
    """
    sim = np.asarray(sim, dtype=np.float64)
    n = sim.shape[0]
    _check_partition(ranges, n)
    avg = average_score(sim)
    thresholded = np.where(sim < avg, 0.0, sim)
    pruned = np.zeros_like(sim)
    for r in ranges:
        pruned[r.lo:r.hi, r.lo:r.hi] = thresholded[r.lo:r.hi, r.lo:r.hi]
    return pruned


@dataclass
class ReplyGraph:
    """Directed weighted edges parent -> child over posts 0..n-1.

    Every edge satisfies parent < child in canonical (chronological)
    order, so the graph is acyclic by construction.
    """

    n: int
    parent: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    child: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    weight: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float64))

    @property
    def n_edges(self) -> int:
        return int(self.parent.size)

    def edge_dict(self) -> dict[tuple[int, int], float]:
        return {(int(u), int(v)): float(w)
                for u, v, w in zip(self.parent, self.child, self.weight)}

    def children(self, u: int) -> list[int]:
        return sorted(int(v) for p, v in zip(self.parent, self.child) if p == u)

    def roots(self) -> list[int]:
        has_parent = np.zeros(self.n, dtype=bool)
        has_parent[self.child] = True
        return [i for i in range(self.n) if not has_parent[i]]


def orient(pruned: np.ndarray) -> ReplyGraph:
    """Turn retained similarities into forward-in-time directed edges.

    For every nonzero entry (i, j) with i < j the edge i -> j is added
    with that weight; canonical index order encodes the time ordering,
    so an earlier post can never become a child of a later one.
    """
    pruned = np.asarray(pruned, dtype=np.float64)
    n = pruned.shape[0]
    upper = np.triu(pruned, k=1)
    rows, cols = np.nonzero(upper)
    return ReplyGraph(n=n, parent=rows.astype(np.int64), child=cols.astype(np.int64),
                      weight=upper[rows, cols])


def thin(graph: ReplyGraph) -> ReplyGraph:
    """Drop redundant grandchild links so every node keeps <= 1 parent.

    Scanning nodes in ascending order and removing, for each already
    visited node, the children it shares with the current node leaves
    each child exactly one incoming edge: the one from its largest
    (chronologically latest) parent.  That closed form is what is
    computed here; the scan itself is exercised against this in tests.
    """
    if graph.n_edges == 0:
        return ReplyGraph(n=graph.n)
    order = np.lexsort((graph.parent, graph.child))
    child_sorted = graph.child[order]
    # last position within each run of equal children = max parent
    last = np.flatnonzero(np.r_[child_sorted[1:] != child_sorted[:-1], True])
    keep = order[last]
    keep = keep[np.argsort(graph.parent[keep] * graph.n + graph.child[keep])]
    return ReplyGraph(n=graph.n, parent=graph.parent[keep].copy(),
                      child=graph.child[keep].copy(), weight=graph.weight[keep].copy())


@dataclass
class Conversation:
    root: int
    members: list[int]           # ascending post indices, root included
    parents: dict[int, int]      # child -> parent, within members


def extract_conversations(graph: ReplyGraph) -> list[Conversation]:
    """One conversation per tree of the forest, ordered by root index."""
    if graph.child.size != np.unique(graph.child).size:
        raise ValueError("graph is not a forest: a node has in-degree > 1")
    parent_of = {int(v): int(u) for u, v in zip(graph.parent, graph.child)}
    root_of = np.arange(graph.n, dtype=np.int64)
    for v in range(graph.n):  # parents precede children, one pass suffices
        if v in parent_of:
            root_of[v] = root_of[parent_of[v]]
    members_by_root: dict[int, list[int]] = {}
    for i in range(graph.n):
        members_by_root.setdefault(int(root_of[i]), []).append(i)
    conversations = []
    for root in sorted(members_by_root):
        members = members_by_root[root]
        parents = {c: parent_of[c] for c in members if c in parent_of}
        conversations.append(Conversation(root=root, members=members, parents=parents))
    return conversations


def export_graph(graph: ReplyGraph, fmt: str) -> bytes:
    """Serialize to Graphviz DOT or a JSON edge list."""
    edges = sorted(graph.edge_dict().items())
    if fmt == "dot":
        lines = ["digraph replies {"]
        lines += [f"  {i};" for i in range(graph.n)]
        lines += [f'  {u} -> {v} [label="{w:.4f}"];' for (u, v), w in edges]
        lines.append("}")
        return ("\n".join(lines) + "\n").encode("utf-8")
    if fmt == "json":
        payload = {
            "n": graph.n,
            "edges": [{"parent": u, "child": v, "w": w} for (u, v), w in edges],
            "roots": graph.roots(),
        }
        return (json.dumps(payload, sort_keys=True) + "\n").encode("utf-8")
    raise ValueError(f"unknown export format {fmt!r}")


def parse_graph_json(data) -> ReplyGraph:
    """Inverse of export_graph(..., 'json')."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    payload = json.loads(data)
    edges = payload.get("edges", [])
    return ReplyGraph(
        n=int(payload["n"]),
        parent=np.array([e["parent"] for e in edges], dtype=np.int64),
        child=np.array([e["child"] for e in edges], dtype=np.int64),
        weight=np.array([e["w"] for e in edges], dtype=np.float64),
    )

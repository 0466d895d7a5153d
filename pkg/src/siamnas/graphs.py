"""Cell graph encoding: edge-labeled cells to (adjacency, feature) matrices.

A cell is a DAG over data nodes whose edges carry operation labels
(the NAS-Bench-201 convention). The predictor wants per-node features, so
each labeled edge (u, v, op) is expanded into an op node x with u->x->v;
data nodes become pass-through tokens (INPUT / OUTPUT / internal skip).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import DimensionError

INPUT_TOKEN = "[input]"
OUTPUT_TOKEN = "[output]"
INTERNAL_TOKEN = "[internal]"

# vocabulary entries that can stand in for a pass-through data node
_SKIP_NAMES = ("skip_connect", "skip", "identity")


class EncodingError(ValueError):
    """Raised when a cell cannot be encoded (cycle, bad structure)."""


class VocabularyError(ValueError):
    """Raised when a cell uses an operation outside the vocabulary."""


@dataclass(frozen=True)
class CellSpec:
    """Edge-labeled cell: nodes are indexed topologically, src < dst."""

    num_nodes: int
    edges: tuple[tuple[int, int, str], ...]
    op_vocab: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        object.__setattr__(self, "op_vocab", tuple(self.op_vocab))
        seen = set()
        for src, dst, op in self.edges:
            if not (0 <= src < dst < self.num_nodes):
                raise EncodingError(
                    f"edge ({src},{dst}) violates src < dst < num_nodes")
            if (src, dst) in seen:
                raise EncodingError(f"duplicate edge ({src},{dst})")
            seen.add((src, dst))
            if op not in self.op_vocab:
                raise VocabularyError(
                    f"unknown op '{op}', vocabulary: {list(self.op_vocab)}")

    def canonical(self) -> "CellSpec":
        """Same cell with edges in sorted order (edge order is irrelevant)."""
        return CellSpec(self.num_nodes, tuple(sorted(self.edges)), self.op_vocab)


@dataclass(frozen=True)
class CellGraph:
    """Numeric encoding: n x n adjacency plus n x d one-hot features.

    Matrices may be padded with all-zero rows beyond ``n`` so batches over a
    search space are rectangular; ``n`` is the real (unpadded) node count.
    """

    adjacency: np.ndarray
    features: np.ndarray
    n: int

    def __eq__(self, other):
        return (isinstance(other, CellGraph) and self.n == other.n
                and np.array_equal(self.adjacency, other.adjacency)
                and np.array_equal(self.features, other.features))


def feature_layout(op_vocab: tuple[str, ...]) -> dict[str, int]:
    """Column index per token. d = |vocab| + 2, or +3 when no skip-style op
    exists to represent internal pass-through data nodes."""
    layout = {op: i for i, op in enumerate(op_vocab)}
    d = len(op_vocab)
    layout[INPUT_TOKEN] = d
    layout[OUTPUT_TOKEN] = d + 1
    skip = next((s for s in _SKIP_NAMES if s in op_vocab), None)
    if skip is not None:
        layout[INTERNAL_TOKEN] = layout[skip]
    else:
        layout[INTERNAL_TOKEN] = d + 2
    return layout


def feature_dim(op_vocab: tuple[str, ...]) -> int:
    return max(feature_layout(tuple(op_vocab)).values()) + 1


def encoded_size(spec: CellSpec) -> int:
    """Node count after op-node expansion."""
    return spec.num_nodes + len(spec.edges)


def validate_dag(adjacency: np.ndarray):
    """Return None when a topological order exists, else one cycle as a
    list of node indices [v0, v1, ..., v0]."""
    adj = np.asarray(adjacency)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise DimensionError(f"adjacency must be square, got {adj.shape}")
    n = adj.shape[0]
    indeg = (adj != 0).sum(axis=0).astype(int)
    ready = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    indeg = indeg.copy()
    while ready:
        u = ready.pop()
        seen += 1
        for v in np.nonzero(adj[u])[0]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(int(v))
    if seen == n:
        return None
    # find a concrete cycle among the leftover nodes via DFS
    left = {i for i in range(n) if indeg[i] > 0}
    start = min(left)
    path, on_path = [], {}
    node = start
    while node not in on_path:
        on_path[node] = len(path)
        path.append(node)
        node = int(next(v for v in np.nonzero(adj[node])[0] if v in left))
    return path[on_path[node]:] + [node]


def _topo_order(num_nodes: int, succ: dict, pred: dict, output_key) -> list:
    """Kahn's algorithm with deterministic tie-breaks; the OUTPUT node is
    deferred so it always lands last."""
    indeg = {k: len(pred[k]) for k in succ}
    ready = sorted(k for k in succ if indeg[k] == 0)
    order = []
    while ready:
        pick = next((k for k in ready if k != output_key), ready[0])
        ready.remove(pick)
        order.append(pick)
        for v in succ[pick]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
        ready.sort()
    if len(order) != len(succ):
        raise EncodingError("cycle detected during cell expansion")
    return order


def encode_cell(spec: CellSpec, pad_to: int | None = None) -> CellGraph:
    """Expand an edge-labeled cell into a CellGraph.

    Deterministic: permuting the edge list yields an identical encoding.
    """
    spec = spec.canonical()
    layout = feature_layout(spec.op_vocab)
    d = feature_dim(spec.op_vocab)

    # graph keys: ('d', i) for data nodes, ('e', k) for op nodes
    keys = [("d", i) for i in range(spec.num_nodes)]
    keys += [("e", k) for k in range(len(spec.edges))]
    succ = {k: [] for k in keys}
    pred = {k: [] for k in keys}
    for k, (src, dst, _op) in enumerate(spec.edges):
        succ[("d", src)].append(("e", k))
        pred[("e", k)].append(("d", src))
        succ[("e", k)].append(("d", dst))
        pred[("d", dst)].append(("e", k))

    order = _topo_order(spec.num_nodes, succ, pred, ("d", spec.num_nodes - 1))
    index = {key: i for i, key in enumerate(order)}
    n = len(order)
    size = n if pad_to is None else pad_to
    if size < n:
        raise EncodingError(f"pad_to={pad_to} smaller than cell size {n}")

    adjacency = np.zeros((size, size))
    for u, vs in succ.items():
        for v in vs:
            adjacency[index[u], index[v]] = 1.0
    features = np.zeros((size, d))
    for i in range(spec.num_nodes):
        if i == 0:
            token = INPUT_TOKEN
        elif i == spec.num_nodes - 1:
            token = OUTPUT_TOKEN
        else:
            token = INTERNAL_TOKEN
        features[index[("d", i)], layout[token]] = 1.0
    for k, (_s, _t, op) in enumerate(spec.edges):
        features[index[("e", k)], layout[op]] = 1.0

    upper = np.triu(adjacency, k=1)
    if not np.array_equal(adjacency, upper):
        raise EncodingError("expanded adjacency is not strictly upper-triangular")
    return CellGraph(adjacency=adjacency, features=features, n=n)

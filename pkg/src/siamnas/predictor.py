"""Two-branch graph-convolutional accuracy predictor.

A shared GCN trunk feeds two heads: the basic branch scores an architecture
from its adjacency/feature matrices alone, the estimation branch
additionally fuses an early-loss code through adjacency-masked
cross-attention (EFM). Optional adjacency-masked self-attention (NSAM)
sits between the trunk and the heads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .autodiff import Tape, Node, AdamState, adam_step, DimensionError
from .codes import EstimationCode, CODE_LENGTH
from .graphs import CellGraph


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class PredictorConfig:
    max_nodes: int
    feature_dim: int
    hidden_dim: int = 64
    trunk_layers: int = 3
    use_nsam: bool = False
    code_length: int = CODE_LENGTH
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.hidden_dim < 4:
            raise ValueError("hidden_dim must be >= 4")
        if self.trunk_layers < 1:
            raise ValueError("trunk_layers must be >= 1")
        if self.code_length != CODE_LENGTH:
            raise ValueError(f"code_length must be {CODE_LENGTH}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class Prediction:
    value: float
    branch: str

    @property
    def clamped(self) -> float:
        return float(min(1.0, max(0.0, self.value)))


def _uniform_init(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: PredictorConfig, rng) -> dict[str, np.ndarray]:
    """All trainable matrices, keyed by name. Trunk weights are shared by
    both branches; EFM/upsample weights belong to the estimation branch."""
    n, d, c = config.max_nodes, config.feature_dim, config.hidden_dim
    p: dict[str, np.ndarray] = {}
    dims_in = [d] + [c] * (config.trunk_layers - 1)
    for i, din in enumerate(dims_in):
        p[f"trunk_w{i}"] = _uniform_init(rng, din, (din, c))
    if config.use_nsam:
        for name in ("q", "k", "v", "o"):
            p[f"nsam_w{name}"] = _uniform_init(rng, c, (c, c))
    for name in ("q", "k", "v", "o"):
        p[f"efm_w{name}"] = _uniform_init(rng, c, (c, c))
    p["upsample_w"] = _uniform_init(rng, config.code_length,
                                    (config.code_length, n * c))
    p["upsample_b"] = np.zeros((1, n * c))
    p["head_basic_w"] = _uniform_init(rng, c, (c, 1))
    p["head_basic_b"] = np.zeros((1, 1))
    p["head_est_w"] = _uniform_init(rng, c, (c, 1))
    p["head_est_b"] = np.zeros((1, 1))
    return p


def normalized_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Row-normalized A + I; the self-loop guarantees row sums >= 1."""
    a_hat = adjacency + np.eye(adjacency.shape[0])
    return a_hat / a_hat.sum(axis=1, keepdims=True)


def gcn_layer(tape: Tape, a_hat: Node, h: Node, w: Node) -> Node:
    """relu(normalize(A + I) @ H @ W); ``a_hat`` is pre-normalized."""
    return tape.relu(tape.matmul(tape.matmul(a_hat, h), w))


def masked_attention(tape: Tape, q: Node, k: Node, v: Node, h: Node,
                     w_out: Node, a_hat: Node, mask: np.ndarray) -> Node:
    """Shared wiring of EFM and NSAM: adjacency-masked attention scores,
    skip connection from H, then a closing graph convolution."""
    scores = tape.matmul(q, tape.transpose(k))
    masked = tape.hadamard(scores, tape.const(mask))
    weights = tape.row_softmax(masked, mask)
    fused = tape.add(tape.matmul(weights, v), h)
    return gcn_layer(tape, a_hat, fused, w_out)


class SiamesePredictor:
    """Trainable two-branch predictor over CellGraphs.

    Confined to one worker while training; prediction over a frozen
    parameter snapshot is side-effect free apart from the forward counter.
    """

    def __init__(self, config: PredictorConfig, seed: int = 0,
                 params: dict[str, np.ndarray] | None = None):
        self.config = config
        rng = np.random.default_rng(seed)
        self.params = params if params is not None else init_params(config, rng)
        self.opt_state = AdamState()
        self.forward_count = 0  # instrumentation: branch evaluations
        # graphs are immutable once built, so a_hat and the attention mask
        # can be memoized per graph object (keyed by identity; the stored
        # reference keeps the id from being recycled)
        self._graph_cache: dict[int, tuple] = {}

    # -- forward graph construction ----------------------------------------

    def _leaves(self, tape: Tape) -> dict[str, Node]:
        return {name: tape.var(value) for name, value in self.params.items()}

    def _check_graph(self, g: CellGraph) -> None:
        n, d = self.config.max_nodes, self.config.feature_dim
        if g.adjacency.shape != (n, n) or g.features.shape != (n, d):
            raise DimensionError(
                f"graph shapes {g.adjacency.shape}/{g.features.shape} do not "
                f"match config ({n}, {d})")

    def _graph_mats(self, g: CellGraph) -> tuple[np.ndarray, np.ndarray]:
        entry = self._graph_cache.get(id(g))
        if entry is None or entry[0] is not g:
            mask = g.adjacency + np.eye(g.adjacency.shape[0])
            entry = (g, normalized_adjacency(g.adjacency), mask)
            self._graph_cache[id(g)] = entry
        return entry[1], entry[2]

    def _trunk(self, tape: Tape, leaves, g: CellGraph):
        a_hat_mat, mask = self._graph_mats(g)
        a_hat = tape.const(a_hat_mat)
        h = tape.const(g.features)
        for i in range(self.config.trunk_layers):
            h = gcn_layer(tape, a_hat, h, leaves[f"trunk_w{i}"])
        if self.config.use_nsam:
            h = self._nsam(tape, leaves, h, a_hat, mask)
        return h, a_hat, mask

    def _nsam(self, tape: Tape, leaves, h: Node, a_hat: Node,
              mask: np.ndarray) -> Node:
        q = gcn_layer(tape, a_hat, h, leaves["nsam_wq"])
        k = gcn_layer(tape, a_hat, h, leaves["nsam_wk"])
        v = gcn_layer(tape, a_hat, h, leaves["nsam_wv"])
        return masked_attention(tape, q, k, v, h, leaves["nsam_wo"],
                                a_hat, mask)

    def _efm(self, tape: Tape, leaves, h: Node, e: Node, a_hat: Node,
             mask: np.ndarray) -> Node:
        q = gcn_layer(tape, a_hat, h, leaves["efm_wq"])
        k = gcn_layer(tape, a_hat, e, leaves["efm_wk"])
        v = gcn_layer(tape, a_hat, h, leaves["efm_wv"])
        return masked_attention(tape, q, k, v, h, leaves["efm_wo"],
                                a_hat, mask)

    def _upsample(self, tape: Tape, leaves, code: EstimationCode) -> Node:
        if not code.normalized:
            raise ValueError("estimation codes must be normalized before use")
        flat = tape.add(tape.matmul(tape.const(code.as_array()),
                                    leaves["upsample_w"]),
                        leaves["upsample_b"])
        return tape.reshape(flat, (self.config.max_nodes,
                                   self.config.hidden_dim))

    def _head(self, tape: Tape, leaves, h: Node, branch: str) -> Node:
        pooled = tape.mean_pool_rows(h)
        return tape.add(tape.matmul(pooled, leaves[f"head_{branch}_w"]),
                        leaves[f"head_{branch}_b"])

    def _forward_basic_node(self, tape, leaves, g: CellGraph) -> Node:
        self._check_graph(g)
        h, _a_hat, _mask = self._trunk(tape, leaves, g)
        return self._head(tape, leaves, h, "basic")

    def _forward_estimation_node(self, tape, leaves, g: CellGraph,
                                 code: EstimationCode) -> Node:
        self._check_graph(g)
        h, a_hat, mask = self._trunk(tape, leaves, g)
        e = self._upsample(tape, leaves, code)
        fused = self._efm(tape, leaves, h, e, a_hat, mask)
        return self._head(tape, leaves, fused, "est")

    # -- public API ---------------------------------------------------------

    def forward_basic(self, g: CellGraph) -> Prediction:
        tape = Tape()
        leaves = {name: tape.var(v, requires_grad=False)
                  for name, v in self.params.items()}
        out = self._forward_basic_node(tape, leaves, g)
        self.forward_count += 1
        return Prediction(float(out.value[0, 0]), "basic")

    def forward_estimation(self, g: CellGraph, code: EstimationCode) -> Prediction:
        tape = Tape()
        leaves = {name: tape.var(v, requires_grad=False)
                  for name, v in self.params.items()}
        out = self._forward_estimation_node(tape, leaves, g, code)
        self.forward_count += 1
        return Prediction(float(out.value[0, 0]), "estimation")

    def batch_loss_node(self, tape: Tape, leaves,
                        batch: list[tuple[CellGraph, EstimationCode, float]]) -> Node:
        """Joint loss: MSE of the basic branch plus MSE of the estimation
        branch, each averaged over the batch."""
        if not batch:
            raise ValueError("batch must be nonempty")
        total: Node | None = None
        inv = 1.0 / len(batch)
        for g, code, y in batch:
            target = np.array([[y]])
            lb = tape.mse_loss(self._forward_basic_node(tape, leaves, g), target)
            le = tape.mse_loss(
                self._forward_estimation_node(tape, leaves, g, code), target)
            term = tape.scale(tape.add(lb, le), inv)
            total = term if total is None else tape.add(total, term)
        return total

    def train_step(self, batch) -> float:
        tape = Tape()
        leaves = self._leaves(tape)
        loss = self.batch_loss_node(tape, leaves, batch)
        tape.backward(loss)
        grads = {name: (node.grad if node.grad is not None
                        else np.zeros_like(node.value))
                 for name, node in leaves.items()}
        adam_step(self.params, grads, self.opt_state,
                  lr=self.config.learning_rate)
        return float(loss.value[0, 0])

    # -- checkpointing ------------------------------------------------------

    def save(self, path) -> None:
        payload = {
            "format_version": 1,
            "config": asdict(self.config),
            "params": {name: {"shape": list(v.shape),
                              "data": v.ravel().tolist()}
                       for name, v in sorted(self.params.items())},
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "SiamesePredictor":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format_version") != 1:
            raise CheckpointError(
                f"unsupported checkpoint version {payload.get('format_version')}")
        config = PredictorConfig(**payload["config"])
        params = {name: np.array(entry["data"],
                                 dtype=np.float64).reshape(entry["shape"])
                  for name, entry in payload["params"].items()}
        return cls(config, params=params)

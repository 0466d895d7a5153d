"""Tabular benchmark stores: JSONL load/save, FLOPs subsetting, synthesis.

A store is the single source of ground truth: per-architecture cell spec,
final accuracies, epoch losses (estimation-code source), FLOPs, and
optional zero-cost proxy columns. Stores are immutable after load.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import CellSpec, encoded_size

FORMAT_VERSION = 1

_HEADER_REQUIRED = ("format_version", "op_vocab", "max_nodes", "datasets")
_RECORD_REQUIRED = ("id", "num_nodes", "edges", "metrics", "flops_m", "params_m")


class LoadError(ValueError):
    """Raised when a benchmark file fails validation; carries line numbers."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations[:5])
                         + (f" (+{len(violations) - 5} more)"
                            if len(violations) > 5 else ""))


class SubsetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetMetrics:
    final_test_acc: float
    epoch_losses: tuple[float, ...]


@dataclass(frozen=True)
class BenchRecord:
    id: str
    cell: CellSpec
    metrics: dict[str, DatasetMetrics]
    flops_m: float
    params_m: float
    proxies: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class BenchStore:
    records: tuple[BenchRecord, ...]
    op_vocab: tuple[str, ...]
    max_nodes: int
    datasets: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        index = {}
        for rec in self.records:
            if rec.id in index:
                raise LoadError([f"duplicate record id '{rec.id}'"])
            index[rec.id] = rec
        object.__setattr__(self, "_by_id", index)

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, rec_id: str) -> BenchRecord:
        return self._by_id[rec_id]

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def accuracy(self, rec_id: str, dataset: str) -> float:
        return self._by_id[rec_id].metrics[dataset].final_test_acc

    def best(self, dataset: str) -> BenchRecord:
        return max(self.records,
                   key=lambda r: r.metrics[dataset].final_test_acc)


# -- validation / IO --------------------------------------------------------


def _validate_record(obj: dict, op_vocab, datasets, line: int, errs: list[str]):
    for key in _RECORD_REQUIRED:
        if key not in obj:
            errs.append(f"line {line}: missing field '{key}'")
            return None
    try:
        cell = CellSpec(num_nodes=int(obj["num_nodes"]),
                        edges=tuple((int(s), int(d), str(op))
                                    for s, d, op in obj["edges"]),
                        op_vocab=op_vocab)
    except Exception as exc:
        errs.append(f"line {line}: invalid cell: {exc}")
        return None
    metrics = {}
    for ds, m in obj["metrics"].items():
        if ds not in datasets:
            errs.append(f"line {line}: dataset '{ds}' not declared in header")
            return None
        acc = float(m["final_test_acc"])
        losses = tuple(float(x) for x in m["epoch_losses"])
        if not 0.0 <= acc <= 1.0:
            errs.append(f"line {line}: accuracy {acc} outside [0,1]")
            return None
        if len(losses) < 3:
            errs.append(f"line {line}: fewer than 3 epoch losses")
            return None
        if any(x < 0 for x in losses):
            errs.append(f"line {line}: negative epoch loss")
            return None
        metrics[ds] = DatasetMetrics(acc, losses)
    flops = float(obj["flops_m"])
    if flops <= 0:
        errs.append(f"line {line}: flops_m must be positive")
        return None
    return BenchRecord(id=str(obj["id"]), cell=cell, metrics=metrics,
                       flops_m=flops, params_m=float(obj["params_m"]),
                       proxies={k: float(v)
                                for k, v in obj.get("proxies", {}).items()})


def load_jsonl(path) -> BenchStore:
    """Load and validate a benchmark file; aborts if any record is invalid."""
    errs: list[str] = []
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    if not lines:
        raise LoadError(["empty search space"])
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise LoadError([f"line 1: parse error: {exc}"]) from exc
    for key in _HEADER_REQUIRED:
        if key not in header:
            raise LoadError([f"line 1: header missing '{key}'"])
    if header["format_version"] != FORMAT_VERSION:
        raise LoadError([f"line 1: unsupported format_version "
                         f"{header['format_version']}"])
    op_vocab = tuple(header["op_vocab"])
    datasets = tuple(header["datasets"])
    max_nodes = int(header["max_nodes"])
    metadata = {k: v for k, v in header.items() if k not in _HEADER_REQUIRED}

    records, seen = [], set()
    for line_no, raw in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            errs.append(f"line {line_no}: parse error: {exc}")
            continue
        rec = _validate_record(obj, op_vocab, datasets, line_no, errs)
        if rec is None:
            continue
        if rec.id in seen:
            errs.append(f"line {line_no}: duplicate id '{rec.id}'")
            continue
        if encoded_size(rec.cell) > max_nodes:
            errs.append(f"line {line_no}: encoded size exceeds max_nodes")
            continue
        seen.add(rec.id)
        records.append(rec)
    if errs:
        raise LoadError(errs)
    if not records:
        raise LoadError(["empty search space"])
    return BenchStore(records=tuple(records), op_vocab=op_vocab,
                      max_nodes=max_nodes, datasets=datasets,
                      metadata=metadata)


def write_jsonl(store: BenchStore, path) -> None:
    header = {"format_version": FORMAT_VERSION,
              "op_vocab": list(store.op_vocab),
              "max_nodes": store.max_nodes,
              "datasets": list(store.datasets)}
    header.update(store.metadata)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec in store.records:
            obj = {"id": rec.id,
                   "num_nodes": rec.cell.num_nodes,
                   "edges": [[s, d, op] for s, d, op in rec.cell.edges],
                   "metrics": {ds: {"final_test_acc": m.final_test_acc,
                                    "epoch_losses": list(m.epoch_losses)}
                               for ds, m in rec.metrics.items()},
                   "flops_m": rec.flops_m,
                   "params_m": rec.params_m}
            if rec.proxies:
                obj["proxies"] = dict(rec.proxies)
            fh.write(json.dumps(obj) + "\n")


def subset_by_flops(store: BenchStore, max_flops_m: float) -> BenchStore:
    """New store with records strictly under ``max_flops_m`` MFLOPs."""
    if max_flops_m <= 0:
        raise ValueError("max_flops_m must be positive")
    kept = tuple(r for r in store.records if r.flops_m < max_flops_m)
    if not kept:
        raise SubsetError(f"no records below {max_flops_m} MFLOPs")
    meta = dict(store.metadata)
    meta.pop("planted_optimum_id", None)
    return BenchStore(records=kept, op_vocab=store.op_vocab,
                      max_nodes=store.max_nodes, datasets=store.datasets,
                      metadata=meta)


# -- synthetic generator ----------------------------------------------------

SYNTHETIC_DATASET = "synthetic"


def _planted_score(edges, vocab_size: int) -> float:
    """Fixed target function: a weak additive per-op term plus a strong
    synergy term for each pair of ops sharing a data node, so additive
    shortcuts misrank the best cells and accurate ranking needs enough
    trained samples to resolve the pairwise structure."""
    op_scores = np.linspace(-0.8, 0.8, vocab_size)
    total = 0.0
    for src, dst, op in edges:
        total += op_scores[op] * (1.0 + 0.3 * src)
    for _u, v, a in edges:
        for v2, _w, b in edges:
            if v2 == v:  # op a feeds op b through a shared data node
                total += 1.5 * math.sin(1.7 * (a + 1) * (b + 2)
                                        + 0.9 * (b + 1))
    return total


def gen_synthetic(seed: int, size: int, nodes: int = 4,
                  vocab_size: int = 5) -> BenchStore:
    """Random-DAG benchmark with a planted accuracy function.

    The accuracy is a squashed, position-weighted sum of per-op scores plus
    Gaussian noise; epoch losses form a decreasing geometric sequence whose
    limit anticorrelates with the clean accuracy, so estimation codes are
    informative by construction. A noisy 'synflow' proxy column is included.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if nodes < 2:
        raise ValueError("need at least 2 data nodes")
    rng = np.random.default_rng(seed)
    vocab = tuple(f"op{i}" for i in range(vocab_size))
    flop_cost = np.linspace(2.0, 22.0, vocab_size)
    pairs = [(i, j) for i in range(nodes) for j in range(i + 1, nodes)]

    seen_cells: set = set()
    records = []
    best_acc, best_id = -1.0, None
    max_enc = 0
    attempts = 0
    while len(records) < size:
        attempts += 1
        if attempts > 200 * size:
            raise ValueError("search space too small for requested size")
        edges_idx = []
        for (i, j) in pairs:
            if (i, j) == (0, nodes - 1) or rng.random() < 0.7:
                edges_idx.append((i, j, int(rng.integers(vocab_size))))
        key = tuple(edges_idx)
        if key in seen_cells:
            continue
        seen_cells.add(key)
        idx = len(records)
        rec_id = f"syn-{idx:06d}"

        score = _planted_score(edges_idx, vocab_size)
        # compress into [0.05, 0.85]; noise shrinks toward the top so the
        # optimum is structure-determined (good cells train stably) while
        # the bulk of the space stays noisy enough for codes to matter
        sig = 1.0 / (1.0 + math.exp(-0.3 * score))
        acc_clean = 0.05 + 0.8 * sig
        acc = float(np.clip(
            acc_clean + rng.normal(0.0, 0.005 + 0.07 * (1.0 - sig)), 0.0, 1.0))

        # tie the loss floor to the noisy accuracy: codes then carry signal
        # about the residual the cell structure alone cannot explain
        loss_limit = max(0.0, 1.6 * (1.0 - acc) + rng.normal(0.0, 0.01))
        start = 2.3 + rng.normal(0.0, 0.05)
        losses = tuple(loss_limit + (start - loss_limit) * 0.5 ** k
                       for k in range(1, 9))
        flops = float(sum(flop_cost[op] for _s, _d, op in edges_idx) + 3.0)
        synflow = acc_clean + rng.normal(0.0, 0.2)

        cell = CellSpec(num_nodes=nodes,
                        edges=tuple((s, d, vocab[op])
                                    for s, d, op in edges_idx),
                        op_vocab=vocab)
        max_enc = max(max_enc, encoded_size(cell))
        rec = BenchRecord(
            id=rec_id, cell=cell,
            metrics={SYNTHETIC_DATASET: DatasetMetrics(acc, losses)},
            flops_m=flops, params_m=flops / 20.0,
            proxies={"synflow": float(synflow)})
        records.append(rec)
        if acc > best_acc:
            best_acc, best_id = acc, rec_id
    return BenchStore(records=tuple(records), op_vocab=vocab,
                      max_nodes=max_enc, datasets=(SYNTHETIC_DATASET,),
                      metadata={"planted_optimum_id": best_id})

"""Emit benchmark JSONL plus a manifest from parsed archive entries.

Output follows the tabular-benchmark store schema: one header line with
format_version / op_vocab / max_nodes / datasets, then one record per
architecture with per-dataset final test accuracy (as a fraction) and
the first epochs of training loss. Accuracies and losses are averaged
across the seeds recorded for each dataset.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

from . import __version__
from .archive import OP_VOCAB, ArchEntry, load_archive, parse_arch_str

FORMAT_VERSION = 1

# requested dataset name -> (archive result key, accuracy series) per mode
_SOURCES = {
    "test": {
        "cifar10": ("cifar10", "ori-test"),
        "cifar100": ("cifar100", "x-test"),
        "ImageNet16-120": ("ImageNet16-120", "x-test"),
    },
    "valid": {
        "cifar10": ("cifar10-valid", "x-valid"),
        "cifar100": ("cifar100", "x-valid"),
        "ImageNet16-120": ("ImageNet16-120", "x-valid"),
    },
}


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ExportManifest:
    archive_sha256: str
    record_count: int
    excluded: tuple[str, ...]
    datasets: tuple[str, ...]
    loss_epochs: int
    accuracy: str  # 'test' or 'valid'
    tool_version: str

    def as_dict(self) -> dict:
        d = asdict(self)
        d["excluded"] = list(self.excluded)
        d["datasets"] = list(self.datasets)
        return d


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _mean(values):
    return sum(values) / len(values)


def _dataset_metrics(entry: ArchEntry, source_key: str, eval_set: str,
                     loss_epochs: int):
    """(accuracy fraction, mean loss series) or None when the entry lacks
    ``loss_epochs`` recorded losses for any seed."""
    by_seed = entry.results.get(source_key)
    if not by_seed:
        raise ExportError(
            f"arch {entry.index}: dataset '{source_key}' not in archive")
    seeds = sorted(by_seed)
    if any(len(by_seed[s].train_losses) < loss_epochs for s in seeds):
        return None
    acc = _mean([by_seed[s].final_accuracy(eval_set) for s in seeds]) / 100.0
    losses = [
        _mean([by_seed[s].train_losses[epoch] for s in seeds])
        for epoch in range(loss_epochs)
    ]
    return acc, losses


def export(archive_path, out_path, datasets=("cifar10",), loss_epochs=3,
           accuracy="test") -> ExportManifest:
    """Convert an archive; returns the manifest written next to the JSONL."""
    if loss_epochs < 3:
        raise ExportError("loss_epochs must be >= 3")
    if accuracy not in _SOURCES:
        raise ExportError(f"accuracy must be one of {sorted(_SOURCES)}")
    datasets = tuple(datasets)
    sources = _SOURCES[accuracy]
    for name in datasets:
        if name not in sources:
            raise ExportError(f"unknown dataset '{name}', "
                              f"choose from {sorted(sources)}")

    entries = load_archive(archive_path)
    lines, excluded = [], []
    max_nodes = 0
    for entry in entries:
        num_nodes, edges = parse_arch_str(entry.arch_str)
        rec_id = f"nb201-{entry.index:06d}"
        metrics = {}
        for name in datasets:
            source_key, eval_set = sources[name]
            got = _dataset_metrics(entry, source_key, eval_set, loss_epochs)
            if got is None:
                metrics = None
                break
            acc, losses = got
            if not 0.0 <= acc <= 1.0:
                raise ExportError(
                    f"{rec_id}: accuracy {acc} outside [0,1] after "
                    f"percent conversion")
            metrics[name] = {"final_test_acc": acc, "epoch_losses": losses}
        if metrics is None:
            excluded.append(rec_id)
            continue
        # FLOPs differ per dataset (input sizes); report the first
        # requested dataset's cost
        primary = _first_seed_result(entry, sources[datasets[0]][0])
        flop, params = primary.flop, primary.params
        max_nodes = max(max_nodes, num_nodes + len(edges))
        lines.append(json.dumps({
            "id": rec_id,
            "num_nodes": num_nodes,
            "edges": [[s, d, op] for s, d, op in edges],
            "metrics": metrics,
            "flops_m": flop,
            "params_m": params,
        }))
    if not lines:
        raise ExportError("no exportable architectures "
                          f"({len(excluded)} excluded)")

    header = json.dumps({
        "format_version": FORMAT_VERSION,
        "op_vocab": list(OP_VOCAB),
        "max_nodes": max_nodes,
        "datasets": list(datasets),
    })
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for line in lines:
            fh.write(line + "\n")

    manifest = ExportManifest(
        archive_sha256=_sha256(archive_path),
        record_count=len(lines),
        excluded=tuple(excluded),
        datasets=datasets,
        loss_epochs=loss_epochs,
        accuracy=accuracy,
        tool_version=__version__)
    with open(f"{out_path}.manifest.json", "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(manifest.as_dict(), fh, indent=2)
        fh.write("\n")
    return manifest


def _first_seed_result(entry: ArchEntry, source_key: str):
    by_seed = entry.results[source_key]
    return by_seed[sorted(by_seed)[0]]

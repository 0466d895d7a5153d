"""Read NAS-Bench-201 pickle archives into plain records.

The archive is a torch-saved dict with 'meta_archs' (architecture
strings), 'arch2infos' (per-index training results, one entry per
hyperparameter schedule) and 'evaluated_indexes'. Each info dict carries
'arch_str' and 'all_results' keyed by (dataset, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

OP_VOCAB = ("none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3",
            "avg_pool_3x3")

_REQUIRED_KEYS = ("meta_archs", "arch2infos", "evaluated_indexes")
# newest schedule first: 200-epoch results when present, else 12-epoch
_SCHEDULE_KEYS = ("full", "200", "less", "12")


class ArchiveError(ValueError):
    """Raised for unreadable, truncated, or structurally invalid archives."""


class ArchStringError(ValueError):
    pass


def parse_arch_str(arch_str: str):
    """'|op~0|+|op~0|op~1|+...' to (num_nodes, ((src, dst, op), ...)).

    Segment i describes the inputs of data node i+1; 'op~j' is an edge
    from node j carrying that operation.
    """
    segments = arch_str.split("+")
    if not segments or not all(s.startswith("|") and s.endswith("|")
                               for s in segments):
        raise ArchStringError(f"malformed architecture string '{arch_str}'")
    edges = []
    for i, segment in enumerate(segments):
        dst = i + 1
        entries = [e for e in segment.split("|") if e]
        if not entries:
            raise ArchStringError(
                f"node {dst} has no inputs in '{arch_str}'")
        for entry in entries:
            op, sep, src_str = entry.rpartition("~")
            if not sep or not src_str.isdigit():
                raise ArchStringError(
                    f"malformed edge '{entry}' in '{arch_str}'")
            src = int(src_str)
            if src >= dst:
                raise ArchStringError(
                    f"edge {src}->{dst} is not forward in '{arch_str}'")
            edges.append((src, dst, op))
    return len(segments) + 1, tuple(sorted(edges))


@dataclass(frozen=True)
class ArchResult:
    """One (architecture, dataset, seed) training record."""

    train_losses: tuple[float, ...]
    eval_accuracies: dict[str, float]  # name -> percentage
    flop: float
    params: float

    def final_accuracy(self, eval_set: str) -> float:
        """Last-epoch accuracy (percent) for names like 'ori-test@199'."""
        best_epoch, value = -1, None
        for name, acc in self.eval_accuracies.items():
            prefix, sep, epoch = name.partition("@")
            if prefix != eval_set:
                continue
            epoch_no = int(epoch) if sep and epoch.lstrip("-").isdigit() else 0
            if epoch_no > best_epoch:
                best_epoch, value = epoch_no, float(acc)
        if value is None:
            raise ArchiveError(f"no '{eval_set}' accuracy recorded")
        return value


def _as_loss_series(raw) -> tuple[float, ...]:
    if isinstance(raw, dict):
        return tuple(float(raw[k]) for k in sorted(raw, key=int))
    return tuple(float(x) for x in raw)


def _parse_result(raw: dict) -> ArchResult:
    try:
        return ArchResult(
            train_losses=_as_loss_series(raw["train_losses"]),
            eval_accuracies={str(k): float(v)
                             for k, v in raw["eval_acc1es"].items()},
            flop=float(raw["flop"]),
            params=float(raw["params"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ArchiveError(f"malformed result entry: {exc}") from exc


@dataclass(frozen=True)
class ArchEntry:
    index: int
    arch_str: str
    # dataset -> seed -> result
    results: dict[str, dict[int, ArchResult]]


def _pick_schedule(info_by_schedule: dict) -> dict:
    for key in _SCHEDULE_KEYS:
        if key in info_by_schedule:
            return info_by_schedule[key]
    raise ArchiveError(
        f"no known schedule key among {sorted(info_by_schedule)}")


def _parse_entry(index: int, info_by_schedule: dict) -> ArchEntry:
    info = _pick_schedule(info_by_schedule)
    try:
        arch_str = str(info["arch_str"])
        all_results = info["all_results"]
    except (KeyError, TypeError) as exc:
        raise ArchiveError(f"arch {index}: missing field {exc}") from exc
    results: dict[str, dict[int, ArchResult]] = {}
    for key, raw in all_results.items():
        dataset, seed = key
        results.setdefault(str(dataset), {})[int(seed)] = _parse_result(raw)
    return ArchEntry(index=index, arch_str=arch_str, results=results)


def load_archive(path) -> list[ArchEntry]:
    """Parse every evaluated architecture, ordered by archive index."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise ArchiveError(f"cannot read archive {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ArchiveError("archive root is not a dict")
    for key in _REQUIRED_KEYS:
        if key not in payload:
            raise ArchiveError(f"archive missing '{key}'")
    arch2infos = payload["arch2infos"]
    entries = []
    for index in sorted(int(i) for i in payload["evaluated_indexes"]):
        if index not in arch2infos:
            raise ArchiveError(
                f"evaluated index {index} absent from arch2infos "
                f"(truncated archive?)")
        entries.append(_parse_entry(index, arch2infos[index]))
    if not entries:
        raise ArchiveError("archive contains no evaluated architectures")
    return entries

"""Rank-correlation and distribution analyses over benchmark stores.

Quantifies how informative early-loss codes (and zero-cost proxy columns)
are about final accuracy, globally and per accuracy decile, and exports
plot-ready FLOPs/accuracy rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bench import BenchStore
from .codes import CODE_LENGTH

CODE_REDUCTIONS = ("neg_third_loss", "neg_mean_loss")


class AnalysisError(ValueError):
    pass


def _prep(x, y) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64).ravel()
    ya = np.asarray(y, dtype=np.float64).ravel()
    if xa.size != ya.size:
        raise AnalysisError(f"length mismatch: {xa.size} vs {ya.size}")
    if xa.size < 2:
        raise AnalysisError("need at least 2 samples")
    return xa, ya


def _tie_pairs(values: np.ndarray) -> int:
    _uniq, counts = np.unique(values, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(x, y) -> float:
    """Tie-corrected Kendall tau-b via pairwise sign counting."""
    xa, ya = _prep(x, y)
    n = xa.size
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xa)
    n2 = _tie_pairs(ya)
    if n0 == n1 or n0 == n2:
        raise AnalysisError("tau undefined for a constant argument")
    diff = 0
    for i in range(n - 1):
        sx = np.sign(xa[i + 1:] - xa[i])
        sy = np.sign(ya[i + 1:] - ya[i])
        diff += int(np.sum(sx * sy))
    return diff / math.sqrt((n0 - n1) * (n0 - n2))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(x, y) -> float:
    """Spearman rho: Pearson correlation of average ranks."""
    xa, ya = _prep(x, y)
    rx = _average_ranks(xa)
    ry = _average_ranks(ya)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = math.sqrt(float(np.sum(dx * dx)) * float(np.sum(dy * dy)))
    if denom == 0.0:
        raise AnalysisError("rho undefined for a constant argument")
    return float(np.sum(dx * dy)) / denom


@dataclass(frozen=True)
class BinStat:
    lo: float
    hi: float
    count: int
    kendall_tau: float | None
    spearman_rho: float | None


@dataclass(frozen=True)
class CorrelationReport:
    metric: str
    kendall_tau: float
    spearman_rho: float
    sample_count: int
    bins: tuple[BinStat, ...] = ()

    def as_dict(self) -> dict:
        return {
            "metric": self.metric,
            "kendall_tau": self.kendall_tau,
            "spearman_rho": self.spearman_rho,
            "sample_count": self.sample_count,
            "bins": [{"lo": b.lo, "hi": b.hi, "count": b.count,
                      "kendall_tau": b.kendall_tau,
                      "spearman_rho": b.spearman_rho}
                     for b in self.bins],
        }


def _decile_bins(x: np.ndarray, y: np.ndarray) -> tuple[BinStat, ...]:
    """Correlations within accuracy deciles; degenerate bins report None."""
    edges = np.quantile(y, np.linspace(0.0, 1.0, 11))
    bins = []
    for k in range(10):
        lo, hi = edges[k], edges[k + 1]
        if k < 9:
            mask = (y >= lo) & (y < hi)
        else:
            mask = (y >= lo) & (y <= hi)
        count = int(mask.sum())
        tau = rho = None
        if count >= 2:
            try:
                tau = kendall_tau(x[mask], y[mask])
                rho = spearman_rho(x[mask], y[mask])
            except AnalysisError:
                pass
        bins.append(BinStat(float(lo), float(hi), count, tau, rho))
    return tuple(bins)


def _report(metric: str, x: np.ndarray, y: np.ndarray) -> CorrelationReport:
    return CorrelationReport(metric=metric,
                             kendall_tau=kendall_tau(x, y),
                             spearman_rho=spearman_rho(x, y),
                             sample_count=int(x.size),
                             bins=_decile_bins(x, y))


def reduce_code(losses, reduction: str) -> float:
    """Scalar summary of a code; negated so larger means better."""
    if reduction == "neg_third_loss":
        return -float(losses[CODE_LENGTH - 1])
    if reduction == "neg_mean_loss":
        return -float(np.mean(losses[:CODE_LENGTH]))
    raise AnalysisError(f"unknown reduction '{reduction}', "
                        f"choose from {CODE_REDUCTIONS}")


def code_correlation(store: BenchStore, dataset: str,
                     reduction: str = "neg_third_loss") -> CorrelationReport:
    """Correlation of the reduced estimation code with final accuracy."""
    missing = [r.id for r in store.records
               if dataset not in r.metrics
               or len(r.metrics[dataset].epoch_losses) < CODE_LENGTH]
    if missing:
        raise AnalysisError(
            f"records lacking {CODE_LENGTH} epoch losses: {missing[:5]}")
    x = np.array([reduce_code(r.metrics[dataset].epoch_losses, reduction)
                  for r in store.records])
    y = np.array([r.metrics[dataset].final_test_acc for r in store.records])
    return _report(f"code:{reduction}", x, y)


def proxy_correlation(store: BenchStore, dataset: str,
                      proxy_name: str) -> CorrelationReport:
    """Same report shape as code_correlation for a zero-cost proxy column."""
    available = sorted({name for r in store.records for name in r.proxies})
    missing = [r.id for r in store.records if proxy_name not in r.proxies]
    if missing:
        raise AnalysisError(
            f"proxy '{proxy_name}' absent for {len(missing)} records; "
            f"available proxies: {available}")
    x = np.array([r.proxies[proxy_name] for r in store.records])
    y = np.array([r.metrics[dataset].final_test_acc for r in store.records])
    return _report(f"proxy:{proxy_name}", x, y)


def distribution_rows(store: BenchStore, dataset: str) -> list[tuple[str, float, float]]:
    """(id, flops_m, accuracy) per record, sorted by id."""
    return sorted((r.id, r.flops_m, r.metrics[dataset].final_test_acc)
                  for r in store.records)

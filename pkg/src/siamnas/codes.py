"""Early-loss estimation codes, their normalization, and budget accounting.

A code is the first three epoch losses of an architecture's training run.
Acquiring one for an architecture outside the training pool costs 0.3% of a
full training; the ledger tracks everything in full-training-equivalents
(FTE) so budget comparisons against plain N+K search stay honest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CODE_LENGTH = 3
COST_PER_CODE = 0.003  # 3 epochs on a 1/10 data slice vs 100 full epochs


class MissingDataError(KeyError):
    """Raised when a record lacks the epoch losses needed for a code."""


class NormalizerStateError(RuntimeError):
    """Raised on use-before-fit or double normalization."""


@dataclass(frozen=True)
class EstimationCode:
    losses: tuple[float, float, float]
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "losses", tuple(float(x) for x in self.losses))
        if len(self.losses) != CODE_LENGTH:
            raise ValueError(f"code must have {CODE_LENGTH} losses")
        if not all(np.isfinite(self.losses)):
            raise ValueError("code losses must be finite")
        if not self.normalized and any(x < 0 for x in self.losses):
            raise ValueError("raw losses must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array([self.losses], dtype=np.float64)


@dataclass
class BudgetLedger:
    """Accumulated search cost in full-training-equivalents.

    spent == predictor_samples * 1.0 + codes_acquired * cost_per_code
             + final_topk_trains * 1.0, and never decreases.
    """

    cost_per_code: float = COST_PER_CODE
    predictor_samples: int = 0
    codes_acquired: int = 0
    final_topk_trains: int = 0
    spent: float = 0.0

    def charge_sample(self, count: int = 1) -> None:
        self.predictor_samples += count
        self.spent += 1.0 * count

    def charge_code(self, count: int = 1) -> None:
        self.codes_acquired += count
        self.spent += self.cost_per_code * count

    def charge_topk(self, count: int = 1) -> None:
        self.final_topk_trains += count
        self.spent += 1.0 * count

    def derived_spent(self) -> float:
        return (self.predictor_samples * 1.0
                + self.codes_acquired * self.cost_per_code
                + self.final_topk_trains * 1.0)

    def verify(self) -> None:
        if abs(self.spent - self.derived_spent()) > 1e-9:
            raise AssertionError(
                f"ledger identity violated: spent={self.spent} "
                f"breakdown={self.derived_spent()}")

    def summary(self) -> dict:
        self.verify()
        return {
            "fte_spent": self.spent,
            "predictor_samples": self.predictor_samples,
            "codes_acquired": self.codes_acquired,
            "final_topk_trains": self.final_topk_trains,
            "cost_per_code": self.cost_per_code,
        }


def extract_code(record, dataset: str,
                 ledger: BudgetLedger | None = None,
                 pool_ids=frozenset()) -> EstimationCode:
    """First three epoch losses of ``record`` on ``dataset``.

    Codes of pool members are free (their losses are a byproduct of the full
    training already paid for); anything else charges 0.003 FTE.
    """
    metrics = record.metrics.get(dataset)
    if metrics is None or len(metrics.epoch_losses) < CODE_LENGTH:
        raise MissingDataError(
            f"record '{record.id}' has no {CODE_LENGTH} epoch losses "
            f"for dataset '{dataset}'")
    if ledger is not None and record.id not in pool_ids:
        ledger.charge_code()
    return EstimationCode(tuple(metrics.epoch_losses[:CODE_LENGTH]))


class CodeNormalizer:
    """Per-component z-score, fit on the training pool only."""

    def __init__(self):
        self.mean: np.ndarray | None = None
        self.std: np.ndarray | None = None
        self.degenerate_components: tuple[int, ...] = ()

    def fit(self, codes: list[EstimationCode]) -> "CodeNormalizer":
        if not codes:
            raise ValueError("cannot fit normalizer on an empty pool")
        data = np.array([c.losses for c in codes], dtype=np.float64)
        self.mean = data.mean(axis=0)
        std = data.std(axis=0)
        self.degenerate_components = tuple(np.nonzero(std <= 0)[0].astype(int))
        std = np.where(std > 0, std, 1.0)
        self.std = std
        return self

    def normalize(self, code: EstimationCode) -> EstimationCode:
        if self.mean is None:
            raise NormalizerStateError("normalizer not fit")
        if code.normalized:
            raise NormalizerStateError("code is already normalized")
        vals = (np.array(code.losses) - self.mean) / self.std
        return EstimationCode(tuple(vals), normalized=True)

"""Two-stage ranking search and batch-top-sampled predictor training.

Siamese ranking scores the whole space with the cheap basic branch, then
resorts only the top c with the estimation branch (paying 0.003 FTE per
code). Batch top sampling grows the training pool from random seeds toward
the high-accuracy region by periodically ranking a random subspace.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bench import BenchStore, BenchRecord
from .codes import (BudgetLedger, CodeNormalizer, EstimationCode,
                    extract_code)
from .graphs import encode_cell
from .predictor import PredictorConfig, SiamesePredictor
from . import graphs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchConfig:
    n_pool: int
    k_top: int
    c_bts: int = 30
    c_eval: int = 60
    update_freq: int = 10
    init_fraction: float = 0.5
    warmup_fraction: float = 0.3
    max_iters: int = 2000
    batch_size: int = 16
    runs: int = 1
    seed: int = 0
    sampling: str = "bts"  # "bts" ranks a random 1/f subspace, "fts" all

    def __post_init__(self):
        if not 0 < self.init_fraction <= 1:
            raise ValueError("init_fraction must be in (0, 1]")
        if not 0 < self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must be in (0, 1)")
        if self.n_pool < 1 or self.k_top < 1:
            raise ValueError("n_pool and k_top must be positive")
        if self.sampling not in ("bts", "fts"):
            raise ValueError("sampling must be 'bts' or 'fts'")


@dataclass(frozen=True)
class RankedList:
    """Record ids best-predicted first, with the prediction that produced
    each final position and the stage it came from."""

    ids: tuple[str, ...]
    predicted: dict[str, float]
    stage: dict[str, str]  # id -> "basic" | "resorted"

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ranked ids must be unique")


@dataclass
class SamplingPool:
    """Trained records available for predictor fitting."""

    capacity: int
    ids: list[str] = field(default_factory=list)
    provenance: dict[str, str] = field(default_factory=dict)

    def __contains__(self, rec_id: str) -> bool:
        return rec_id in self.provenance

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def id_set(self) -> frozenset:
        return frozenset(self.provenance)

    def add(self, rec_id: str, provenance: str) -> bool:
        if rec_id in self.provenance or len(self.ids) >= self.capacity:
            return False
        self.ids.append(rec_id)
        self.provenance[rec_id] = provenance
        return True


class PredictorAdapter:
    """Binds a predictor to a store: encodes cells (cached, padded to the
    space maximum) and normalizes codes before the estimation branch."""

    def __init__(self, predictor: SiamesePredictor, store: BenchStore,
                 dataset: str, normalizer: CodeNormalizer):
        self.predictor = predictor
        self.store = store
        self.dataset = dataset
        self.normalizer = normalizer
        self._graphs: dict[str, graphs.CellGraph] = {}

    @property
    def forward_count(self) -> int:
        return self.predictor.forward_count

    def encode(self, record: BenchRecord) -> graphs.CellGraph:
        g = self._graphs.get(record.id)
        if g is None:
            g = encode_cell(record.cell, pad_to=self.store.max_nodes)
            self._graphs[record.id] = g
        return g

    def predict_basic(self, record: BenchRecord) -> float:
        return self.predictor.forward_basic(self.encode(record)).value

    def predict_estimation(self, record: BenchRecord,
                           code: EstimationCode) -> float:
        normalized = code if code.normalized else self.normalizer.normalize(code)
        return self.predictor.forward_estimation(self.encode(record),
                                                 normalized).value


class OraclePredictor:
    """Test stub: both branches return the recorded ground truth."""

    def __init__(self, dataset: str):
        self.dataset = dataset
        self.forward_count = 0

    def predict_basic(self, record: BenchRecord) -> float:
        self.forward_count += 1
        return record.metrics[self.dataset].final_test_acc

    def predict_estimation(self, record, code) -> float:
        self.forward_count += 1
        return record.metrics[self.dataset].final_test_acc


def siamese_rank(store: BenchStore, dataset: str, ids, predictor, c: int,
                 ledger: BudgetLedger | None = None,
                 pool_ids=frozenset()) -> RankedList:
    """Rank ``ids`` with the basic branch, then resort the top c by the
    estimation branch. Codes for non-pool members are charged to the ledger;
    membership of the top-c block is unchanged, only its internal order."""
    ids = list(ids)
    if c > len(ids):
        raise ValueError(f"c={c} exceeds space size {len(ids)}")
    basic = {i: predictor.predict_basic(store.by_id(i)) for i in ids}
    order = sorted(ids, key=lambda i: (-basic[i], i))
    top = order[:c]
    est = {}
    for i in top:
        code = extract_code(store.by_id(i), dataset, ledger, pool_ids)
        est[i] = predictor.predict_estimation(store.by_id(i), code)
    resorted = sorted(top, key=lambda i: (-est[i], i))
    final = tuple(resorted + order[c:])
    predicted = {i: (est[i] if i in est else basic[i]) for i in ids}
    stage = {i: ("resorted" if i in est else "basic") for i in ids}
    return RankedList(ids=final, predicted=predicted, stage=stage)


@dataclass
class BtsStats:
    """Per-update-event instrumentation from btsTrain."""

    events: list[dict] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


def _addition_quotas(total: int, events: int) -> list[int]:
    """Distribute ``total`` pool additions over ``events`` update events,
    earliest events first, so the budget is met exactly."""
    if events == 0:
        return []
    base, rem = divmod(total, events)
    return [base + 1 if k < rem else base for k in range(events)]


def _fit_normalizer(store, dataset, pool: SamplingPool) -> CodeNormalizer:
    codes = [extract_code(store.by_id(i), dataset) for i in pool.ids]
    return CodeNormalizer().fit(codes)


def bts_train(store: BenchStore, dataset: str, config: SearchConfig,
              pred_config: PredictorConfig, rng: np.random.Generator,
              ledger: BudgetLedger,
              predictor: SiamesePredictor | None = None
              ) -> tuple[PredictorAdapter, SamplingPool, BtsStats]:
    """Train a predictor with batch top sampling (Alg.: random warm-up pool,
    then periodic subspace ranking feeding top candidates into the pool)."""
    space_ids = store.ids()
    n = config.n_pool
    if n > len(space_ids):
        raise ValueError(f"pool budget {n} exceeds space size {len(space_ids)}")
    if predictor is None:
        predictor = SiamesePredictor(pred_config,
                                     seed=int(rng.integers(2 ** 31)))
    pool = SamplingPool(capacity=n)
    n_init = min(math.ceil(config.init_fraction * n), n)
    for rec_id in rng.choice(space_ids, size=n_init, replace=False):
        pool.add(str(rec_id), "random")
        ledger.charge_sample()

    adapter = PredictorAdapter(predictor, store, dataset,
                               _fit_normalizer(store, dataset, pool))

    phase1 = math.floor(config.warmup_fraction * config.max_iters)
    update_iters = [i for i in range(phase1, config.max_iters)
                    if i % config.update_freq == 0]
    quotas = _addition_quotas(n - n_init, len(update_iters))
    if not update_iters and n > n_init:
        log.warning("no update events fit in the schedule; pool stays at "
                    "%d of %d", n_init, n)
    quota_by_iter = dict(zip(update_iters, quotas))
    stats = BtsStats()

    batch_cache: dict[str, tuple] = {}

    def batch_item(rec_id: str):
        item = batch_cache.get(rec_id)
        if item is None:
            rec = store.by_id(rec_id)
            raw = extract_code(rec, dataset)  # pool member: free
            item = (adapter.encode(rec), raw,
                    rec.metrics[dataset].final_test_acc)
            batch_cache[rec_id] = item
        return item

    for i in range(config.max_iters):
        quota = quota_by_iter.get(i)
        if quota is not None:
            if config.sampling == "bts":
                sub_size = max(1, len(space_ids) // config.update_freq)
                subspace = [str(s) for s in rng.choice(
                    space_ids, size=sub_size, replace=False)]
            else:
                subspace = list(space_ids)
            before = adapter.forward_count
            ranked = siamese_rank(store, dataset, subspace, adapter,
                                  min(config.c_bts, len(subspace)),
                                  ledger, pool.id_set)
            added = 0
            for cand in ranked.ids:
                if added >= quota or len(pool) >= n:
                    break
                if cand in pool:
                    continue  # duplicate: skipped, no budget consumed
                pool.add(cand, "top_sampled")
                ledger.charge_sample()
                added += 1
            if added < quota:
                log.info("update event at iter %d added %d/%d (candidates "
                         "exhausted)", i, added, quota)
            adapter.normalizer = _fit_normalizer(store, dataset, pool)
            stats.events.append({"iteration": i,
                                 "subspace_size": len(subspace),
                                 "basic_forwards": len(subspace),
                                 "forwards": adapter.forward_count - before,
                                 "added": added})
        replace_draw = config.batch_size > len(pool)
        if replace_draw:
            log.info("batch size %d exceeds pool size %d; sampling with "
                     "replacement", config.batch_size, len(pool))
        batch_ids = rng.choice(pool.ids, size=config.batch_size,
                               replace=replace_draw)
        batch = []
        for rec_id in batch_ids:
            g, raw, y = batch_item(str(rec_id))
            batch.append((g, adapter.normalizer.normalize(raw), y))
        stats.losses.append(predictor.train_step(batch))
    return adapter, pool, stats


def evaluate_top_k(store: BenchStore, dataset: str, predictor, k: int,
                   c_eval: int, ledger: BudgetLedger,
                   pool_ids=frozenset()) -> tuple[float, str, RankedList]:
    """Rank the space (resorting the top c_eval), fully train the top k
    (1 FTE each), and return the best ground truth found."""
    if k > len(store):
        raise ValueError(f"k={k} exceeds space size {len(store)}")
    ranked = siamese_rank(store, dataset, store.ids(), predictor,
                          min(c_eval, len(store)), ledger, pool_ids)
    chosen = ranked.ids[:k]
    ledger.charge_topk(len(chosen))
    best_id = max(chosen, key=lambda i: (store.accuracy(i, dataset), i))
    return store.accuracy(best_id, dataset), best_id, ranked


@dataclass(frozen=True)
class RunResult:
    run_index: int
    seed: int
    best_acc: float
    best_id: str
    pool_size: int
    fte_spent: float
    ledger: dict


@dataclass(frozen=True)
class RunReport:
    results: tuple[RunResult, ...]
    mean_best_acc: float
    std_best_acc: float

    @classmethod
    def from_results(cls, results) -> "RunReport":
        accs = np.array([r.best_acc for r in results])
        return cls(tuple(results), float(accs.mean()),
                   float(accs.std(ddof=0)))


def _single_run(args) -> RunResult:
    store, dataset, config, pred_config, run_index, run_seed = args
    rng = np.random.default_rng(run_seed)
    ledger = BudgetLedger()
    adapter, pool, _stats = bts_train(store, dataset, config, pred_config,
                                      rng, ledger)
    best_acc, best_id, _ranked = evaluate_top_k(
        store, dataset, adapter, config.k_top, config.c_eval, ledger,
        pool.id_set)
    ledger.verify()
    return RunResult(run_index=run_index, seed=int(run_seed),
                     best_acc=best_acc, best_id=best_id,
                     pool_size=len(pool), fte_spent=ledger.spent,
                     ledger=ledger.summary())


def run_seeds(config: SearchConfig) -> list[int]:
    """Per-run seeds derived from the single config seed."""
    children = np.random.SeedSequence(config.seed).spawn(config.runs)
    return [int(c.generate_state(1)[0]) for c in children]


def run_search(store: BenchStore, dataset: str, config: SearchConfig,
               pred_config: PredictorConfig, workers: int = 1) -> RunReport:
    """``runs`` independent seeded repetitions of bts_train + evaluate_top_k.
    Results are merged by run index, so worker count never changes output."""
    tasks = [(store, dataset, config, pred_config, i, s)
             for i, s in enumerate(run_seeds(config))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_single_run, tasks))
    else:
        results = [_single_run(t) for t in tasks]
    results.sort(key=lambda r: r.run_index)
    return RunReport.from_results(results)


@dataclass(frozen=True)
class SweepRow:
    mode: str
    total_budget: int
    n: int
    k: int
    mean_best_acc: float
    std_best_acc: float
    runs: int


def nk_sweep(store: BenchStore, dataset: str, config: SearchConfig,
             pred_config: PredictorConfig, budgets, mode: str,
             fixed: int = 30, workers: int = 1) -> list[SweepRow]:
    """Budget curve: hold N (mode 'fixN') or K (mode 'fixK') at ``fixed``
    and give the remainder of each total budget to the other variable."""
    if mode not in ("fixN", "fixK"):
        raise ValueError("mode must be 'fixN' or 'fixK'")
    rows = []
    for total in budgets:
        if total < fixed + 1:
            log.warning("budget %d too small for fixed=%d; skipped",
                        total, fixed)
            continue
        if mode == "fixN":
            n, k = fixed, total - fixed
        else:
            n, k = total - fixed, fixed
        cfg = replace(config, n_pool=n, k_top=k)
        report = run_search(store, dataset, cfg, pred_config, workers=workers)
        rows.append(SweepRow(mode=mode, total_budget=total, n=n, k=k,
                             mean_best_acc=report.mean_best_acc,
                             std_best_acc=report.std_best_acc,
                             runs=config.runs))
    return rows

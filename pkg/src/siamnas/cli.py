"""Command-line entry point for reproducible, config-driven runs.

Data goes to files (CSV/JSON/JSONL) plus rendered PNG figures alongside;
progress and diagnostics go to stderr. All randomness flows from the
config seed, so reruns with identical inputs are byte-identical on the
delimited outputs.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import analysis, bench, plots
from .predictor import PredictorConfig
from .search import SearchConfig, nk_sweep, run_search
from .graphs import feature_dim

_SEARCH_KEYS = {
    "n_pool": int, "k_top": int, "c_bts": int, "c_eval": int,
    "update_freq": int, "init_fraction": float, "warmup_fraction": float,
    "max_iters": int, "batch_size": int, "runs": int, "sampling": str,
}
_PREDICTOR_KEYS = {
    "hidden_dim": int, "trunk_layers": int, "use_nsam": bool,
    "learning_rate": float,
}
_TOP_KEYS = {"benchmark": str, "dataset": str, "out_dir": str, "seed": int}


class ConfigError(ValueError):
    pass


def load_run_config(path):
    """Validated run config: benchmark/dataset/seed plus search and
    predictor settings. Unknown keys are rejected."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {**_TOP_KEYS, **_SEARCH_KEYS, **_PREDICTOR_KEYS}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    for key in ("benchmark", "dataset", "seed", "n_pool", "k_top"):
        if key not in raw:
            raise ConfigError(f"config missing required key '{key}'")
    for key, value in raw.items():
        want = known[key]
        if want is float and isinstance(value, int):
            continue
        if not isinstance(value, want) or (want is int and isinstance(value, bool) and key != "use_nsam"):
            raise ConfigError(f"config key '{key}' must be {want.__name__}")
    search = SearchConfig(seed=int(raw["seed"]),
                          **{k: t(raw[k]) for k, t in _SEARCH_KEYS.items()
                             if k in raw})
    predictor = {k: t(raw[k]) for k, t in _PREDICTOR_KEYS.items() if k in raw}
    return raw["benchmark"], raw["dataset"], raw.get("out_dir", "out"), \
        search, predictor


def _predictor_config(store: bench.BenchStore, overrides: dict) -> PredictorConfig:
    return PredictorConfig(max_nodes=store.max_nodes,
                           feature_dim=feature_dim(store.op_vocab),
                           **overrides)


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


@click.group()
def cli():
    """Predictor-based architecture search over tabular benchmarks."""
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command("gen-synthetic")
@click.option("--seed", type=int, required=True)
@click.option("--size", type=int, required=True)
@click.option("--nodes", type=int, default=4, show_default=True)
@click.option("--vocab", type=int, default=5, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen_synthetic_cmd(seed, size, nodes, vocab, out):
    """Generate a synthetic benchmark with a planted optimum."""
    store = bench.gen_synthetic(seed=seed, size=size, nodes=nodes,
                                vocab_size=vocab)
    bench.write_jsonl(store, out)
    click.echo(f"wrote {len(store)} records to {out}", err=True)


@cli.command("validate")
@click.argument("benchmark", type=click.Path(exists=True, dir_okay=False))
def validate_cmd(benchmark):
    """Validate a benchmark JSONL file; nonzero exit on violations."""
    try:
        store = bench.load_jsonl(benchmark)
    except bench.LoadError as exc:
        for violation in exc.violations:
            click.echo(f"violation: {violation}", err=True)
        raise SystemExit(1)
    click.echo(f"ok: {len(store)} records, "
               f"{len(store.op_vocab)} ops, datasets {list(store.datasets)}",
               err=True)


@cli.command("search")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
def search_cmd(config_path, workers, plot):
    """Run the full search pipeline; writes report.csv + ledger.json."""
    bench_path, dataset, out_dir, search_cfg, pred_over = \
        load_run_config(config_path)
    store = bench.load_jsonl(bench_path)
    pred_cfg = _predictor_config(store, pred_over)
    report = run_search(store, dataset, search_cfg, pred_cfg, workers=workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "report.csv",
               ["run_index", "seed", "best_acc", "best_id", "pool_size",
                "fte_spent"],
               [(r.run_index, r.seed, r.best_acc, r.best_id, r.pool_size,
                 r.fte_spent) for r in report.results])
    with open(out / "ledger.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"mean_best_acc": report.mean_best_acc,
                   "std_best_acc": report.std_best_acc,
                   "runs": [r.ledger for r in report.results]}, fh, indent=2)
        fh.write("\n")
    if plot:
        plots.render_search_report(report.results, out / "report.png")
    click.echo(f"mean best acc {report.mean_best_acc:.4f} "
               f"(std {report.std_best_acc:.4f}) over "
               f"{len(report.results)} runs -> {out}", err=True)


@cli.command("sweep")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["fixN", "fixK"]), required=True)
@click.option("--budgets", required=True,
              help="comma-separated total budgets, e.g. 60,110,160,210")
@click.option("--fixed", type=int, default=30, show_default=True,
              help="value held constant for the fixed variable")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
def sweep_cmd(config_path, mode, budgets, fixed, workers, plot):
    """Budget trade-off curve between pool size N and final top K."""
    bench_path, dataset, out_dir, search_cfg, pred_over = \
        load_run_config(config_path)
    budget_list = sorted(int(b) for b in budgets.split(","))
    store = bench.load_jsonl(bench_path)
    pred_cfg = _predictor_config(store, pred_over)
    rows = nk_sweep(store, dataset, search_cfg, pred_cfg, budget_list, mode,
                    fixed=fixed, workers=workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"sweep_{mode}.csv"
    _write_csv(path,
               ["mode", "total_budget", "n", "k", "mean_best_acc",
                "std_best_acc", "runs"],
               [(r.mode, r.total_budget, r.n, r.k, r.mean_best_acc,
                 r.std_best_acc, r.runs) for r in rows])
    if plot:
        plots.render_sweep(rows, out / f"sweep_{mode}.png")
    click.echo(f"wrote {len(rows)} sweep rows to {path}", err=True)


@cli.command("subset")
@click.option("--max-flops", type=float, required=True)
@click.option("--in", "in_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
def subset_cmd(max_flops, in_path, out_path):
    """Keep only records strictly under a MFLOPs threshold."""
    store = bench.load_jsonl(in_path)
    sub = bench.subset_by_flops(store, max_flops)
    bench.write_jsonl(sub, out_path)
    click.echo(f"kept {len(sub)}/{len(store)} records below "
               f"{max_flops} MFLOPs", err=True)


@cli.command("correlate")
@click.option("--bench", "bench_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", required=True)
@click.option("--metric", default="code", show_default=True,
              help="'code' or 'proxy:<name>'")
@click.option("--reduction", default="neg_third_loss", show_default=True,
              type=click.Choice(analysis.CODE_REDUCTIONS))
@click.option("--out-dir", default="out", show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
def correlate_cmd(bench_path, dataset, metric, reduction, out_dir, plot):
    """Rank correlation of prior knowledge against final accuracy."""
    store = bench.load_jsonl(bench_path)
    if metric == "code":
        report = analysis.code_correlation(store, dataset, reduction)
        x = [analysis.reduce_code(r.metrics[dataset].epoch_losses, reduction)
             for r in store.records]
    elif metric.startswith("proxy:"):
        name = metric.split(":", 1)[1]
        report = analysis.proxy_correlation(store, dataset, name)
        x = [r.proxies[name] for r in store.records]
    else:
        raise ConfigError(f"metric must be 'code' or 'proxy:<name>', "
                          f"got '{metric}'")
    y = [r.metrics[dataset].final_test_acc for r in store.records]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "correlation.json", "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(report.as_dict(), fh, indent=2)
        fh.write("\n")
    _write_csv(out / "correlation_bins.csv",
               ["bin_lo", "bin_hi", "count", "kendall_tau", "spearman_rho"],
               [(b.lo, b.hi, b.count,
                 "" if b.kendall_tau is None else b.kendall_tau,
                 "" if b.spearman_rho is None else b.spearman_rho)
                for b in report.bins])
    if plot:
        plots.render_correlation(x, y, report, out / "correlation.png")
    click.echo(f"{report.metric}: tau={report.kendall_tau:.4f} "
               f"rho={report.spearman_rho:.4f} over {report.sample_count} "
               f"records -> {out}", err=True)


@cli.command("distribution")
@click.option("--bench", "bench_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", required=True)
@click.option("--out-dir", default="out", show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
def distribution_cmd(bench_path, dataset, out_dir, plot):
    """FLOPs/accuracy rows for distribution plots."""
    store = bench.load_jsonl(bench_path)
    rows = analysis.distribution_rows(store, dataset)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "distribution.csv", ["id", "flops_m", "accuracy"], rows)
    if plot:
        plots.render_distribution(rows, out / "distribution.png")
    click.echo(f"wrote {len(rows)} rows to {out / 'distribution.csv'}",
               err=True)


def main():
    try:
        cli(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except SystemExit:
        raise
    except Exception as exc:  # one-line machine-parseable failure reason
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()

"""Builders for miniature archives shaped like the real one."""

import torch

EDGE_SLOTS = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))


def arch_string(ops):
    """Six edge operations (archive edge order) to an architecture string."""
    return (f"|{ops[0]}~0|+|{ops[1]}~0|{ops[2]}~1|"
            f"+|{ops[3]}~0|{ops[4]}~1|{ops[5]}~2|")


def result(acc=85.0, losses=(2.3, 1.8, 1.5), flop=15.6, params=0.8,
           eval_set="ori-test", final_epoch=199):
    return {
        "train_losses": {i: float(x) for i, x in enumerate(losses)},
        "eval_acc1es": {f"{eval_set}@{final_epoch}": float(acc)},
        "flop": float(flop),
        "params": float(params),
    }


def entry(arch_str, results, schedule="full"):
    """results: {(dataset, seed): result dict}"""
    return {schedule: {"arch_str": arch_str, "all_results": results}}


def save_archive(path, entries, meta_archs=None, evaluated=None):
    """entries: {index: entry dict}"""
    payload = {
        "meta_archs": meta_archs if meta_archs is not None
        else [e[next(iter(e))]["arch_str"] for e in entries.values()],
        "arch2infos": entries,
        "evaluated_indexes": (list(entries)
                              if evaluated is None else evaluated),
    }
    torch.save(payload, path)
    return path

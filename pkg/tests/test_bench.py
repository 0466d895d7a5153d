import json

import numpy as np
import pytest

from siamnas.analysis import spearman_rho
from siamnas.bench import (LoadError, SubsetError, gen_synthetic, load_jsonl,
                           subset_by_flops, write_jsonl)


@pytest.fixture
def store():
    return gen_synthetic(7, 120)


class TestSynthetic:
    def test_same_seed_identical(self):
        assert gen_synthetic(5, 40) == gen_synthetic(5, 40)

    def test_third_loss_anticorrelates_with_accuracy(self):
        store = gen_synthetic(9, 1000)
        third = [-r.metrics["synthetic"].epoch_losses[2] for r in store.records]
        acc = [r.metrics["synthetic"].final_test_acc for r in store.records]
        assert spearman_rho(third, acc) > 0.6

    def test_planted_optimum_recorded(self, store):
        best = store.best("synthetic")
        assert store.metadata["planted_optimum_id"] == best.id

    def test_cells_unique(self, store):
        keys = {r.cell.canonical().edges for r in store.records}
        assert len(keys) == len(store)

    def test_size_validation(self):
        with pytest.raises(ValueError):
            gen_synthetic(1, 0)


class TestJsonl:
    def test_roundtrip(self, store, tmp_path):
        path = tmp_path / "bench.jsonl"
        write_jsonl(store, path)
        assert load_jsonl(path) == store

    def test_rewrite_byte_identical(self, store, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_jsonl(store, p1)
        write_jsonl(load_jsonl(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(LoadError, match="empty search space"):
            load_jsonl(path)

    def test_violations_carry_line_numbers(self, store, tmp_path):
        path = tmp_path / "bad.jsonl"
        write_jsonl(store, path)
        lines = path.read_text().splitlines()
        rec = json.loads(lines[3])
        rec["metrics"]["synthetic"]["final_test_acc"] = 1.7
        lines[3] = json.dumps(rec)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(LoadError, match="line 4") as exc_info:
            load_jsonl(path)
        assert any("outside [0,1]" in v for v in exc_info.value.violations)

    def test_duplicate_id_rejected(self, store, tmp_path):
        path = tmp_path / "dup.jsonl"
        write_jsonl(store, path)
        lines = path.read_text().splitlines()
        lines.append(lines[1])
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(LoadError, match="duplicate"):
            load_jsonl(path)

    def test_missing_header_key_rejected(self, store, tmp_path):
        path = tmp_path / "hdr.jsonl"
        write_jsonl(store, path)
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        del header["op_vocab"]
        lines[0] = json.dumps(header)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(LoadError, match="op_vocab"):
            load_jsonl(path)


class TestSubset:
    def test_infinite_threshold_is_identity(self, store):
        sub = subset_by_flops(store, float("inf"))
        assert sub.records == store.records

    def test_threshold_filters_strictly(self, store):
        sub = subset_by_flops(store, 35.0)
        assert all(r.flops_m < 35.0 for r in sub.records)
        assert len(sub) < len(store)

    def test_below_minimum_rejected(self, store):
        low = min(r.flops_m for r in store.records)
        with pytest.raises(SubsetError, match="no records below"):
            subset_by_flops(store, low * 0.5)

    def test_original_store_untouched(self, store):
        before = len(store)
        subset_by_flops(store, 35.0)
        assert len(store) == before

import json

import numpy as np
import pytest

from hlwlab import allocator
from hlwlab.channel import LiFiPhyConfig, WiFiPhyConfig
from hlwlab.errors import ConfigError, IntegrityError, ModelMismatchError, SchemaError
from hlwlab.pipeline import (TrainConfig, fit_normalizer, generate_dataset,
                             load_checkpoint, load_dataset, meta_path,
                             model_from_checkpoint, save_checkpoint,
                             split_train_val, train, history_to_csv)
from hlwlab.scenario import scenario_from_record

from conftest import scale1_room


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory, phy):
    path = tmp_path_factory.mktemp("data") / "small.jsonl"
    generate_dataset(scale1_room(n_ue=4), *phy, n_samples=30,
                     label_method="optimizer", seed=17, out_path=path)
    return path


class TestGenerateDataset:
    def test_byte_identical_for_fixed_seed(self, tmp_path, phy):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        generate_dataset(scale1_room(n_ue=3), *phy, n_samples=8,
                         label_method="optimizer", seed=5, out_path=a)
        generate_dataset(scale1_room(n_ue=3), *phy, n_samples=8,
                         label_method="optimizer", seed=5, out_path=b)
        assert a.read_bytes() == b.read_bytes()

    def test_meta_sidecar(self, small_dataset):
        meta = json.loads(meta_path(small_dataset).read_text())
        assert meta["n_samples"] == 30
        assert meta["n_a"] == 10 and meta["n_f"] == 2 and meta["n_u"] == 4
        assert meta["label_method"] == "optimizer"

    def test_labels_survive_projection_unchanged(self, small_dataset):
        for rec in load_dataset(small_dataset):
            sc, labels = scenario_from_record(rec)
            projected = allocator.project_feasible(labels, sc).serving_rows(sc)
            assert np.array_equal(projected, labels)

    def test_worker_count_does_not_change_output(self, tmp_path, phy):
        a = tmp_path / "w1.jsonl"
        b = tmp_path / "w2.jsonl"
        generate_dataset(scale1_room(n_ue=3), *phy, n_samples=6,
                         label_method="heuristic", seed=2, out_path=a, workers=1)
        generate_dataset(scale1_room(n_ue=3), *phy, n_samples=6,
                         label_method="heuristic", seed=2, out_path=b, workers=2)
        assert a.read_bytes() == b.read_bytes()

    def test_record_count(self, small_dataset):
        assert len(load_dataset(small_dataset)) == 30


class TestNormalizer:
    def test_training_features_in_unit_interval(self, small_dataset):
        records = load_dataset(small_dataset)
        train_idx, _ = split_train_val(len(records), seed=0)
        norm = fit_normalizer(records, train_idx)
        from hlwlab.scenario import build_graph
        for i in train_idx:
            sc, labels = scenario_from_record(records[i])
            g = build_graph(sc, labels, norm)
            ue_feats = g.features[: sc.n_ue]
            assert ue_feats.min() >= -1e-12 and ue_feats.max() <= 1 + 1e-12

    def test_validation_features_clamped(self, small_dataset):
        records = load_dataset(small_dataset)
        norm = fit_normalizer(records, [0])       # deliberately narrow ranges
        from hlwlab.scenario import build_graph
        for rec in records:
            sc, labels = scenario_from_record(rec)
            g = build_graph(sc, labels, norm)
            assert g.features.min() >= -0.5 and g.features.max() <= 1.5

    def test_degenerate_range_widened(self):
        rec = {"ue": [{"sinr": [1.0, 1.0], "req_bps": 5e7}]}
        with pytest.warns(UserWarning):
            norm = fit_normalizer([rec])
        assert norm.sinr_db_max > norm.sinr_db_min
        assert norm.rate_max_bps > norm.rate_min_bps

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            fit_normalizer([])


class TestSplit:
    def test_5000_gives_4000_1000(self):
        tr, va = split_train_val(5000, seed=1)
        assert len(tr) == 4000 and len(va) == 1000

    def test_5_gives_4_1(self):
        tr, va = split_train_val(5, seed=1)
        assert len(tr) == 4 and len(va) == 1

    def test_disjoint_exhaustive(self):
        tr, va = split_train_val(103, seed=2)
        both = np.sort(np.concatenate([tr, va]))
        assert np.array_equal(both, np.arange(103))

    def test_deterministic(self):
        assert np.array_equal(split_train_val(50, 3)[0], split_train_val(50, 3)[0])

    def test_too_small_rejected(self):
        with pytest.raises(ConfigError):
            split_train_val(4, seed=0)


class TestTraining:
    def test_overfits_ten_samples(self, small_dataset):
        # capacity sanity: memorize 10 samples (multi-head matters here; a
        # single attention pattern per layer plateaus an order higher)
        records = load_dataset(small_dataset)[:10]
        cfg = TrainConfig(epochs=500, batch_size=1, seed=0, lr=2e-2,
                          lr_decay=0.995, early_stop_patience=500)
        ckpt, history = train("gat", records, cfg,
                              model_overrides={"hidden_dim": 64, "n_heads": 8,
                                               "dropout_p": 0.0})
        assert history[-1]["train_mse"] < 1e-3

    def test_deterministic_history(self, small_dataset):
        records = load_dataset(small_dataset)
        cfg = TrainConfig(epochs=3, batch_size=8, seed=9)
        _, h1 = train("gat", records, cfg)
        _, h2 = train("gat", records, cfg)
        assert h1 == h2

    def test_unlabeled_rejected(self, tmp_path, phy):
        path = tmp_path / "nolabel.jsonl"
        generate_dataset(scale1_room(n_ue=3), *phy, n_samples=6,
                         label_method=None, seed=1, out_path=path)
        with pytest.raises(ConfigError):
            train("gat", load_dataset(path), TrainConfig(epochs=1))

    def test_history_csv(self, small_dataset, tmp_path):
        records = load_dataset(small_dataset)
        _, history = train("gat", records, TrainConfig(epochs=2, batch_size=8))
        out = tmp_path / "hist.csv"
        history_to_csv(history, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "epoch,lr,train_mse,val_mse,val_sum_rate_bps"
        assert len(lines) == 4            # header + untrained row + 2 epochs

    def test_dnn_trains(self, small_dataset):
        records = load_dataset(small_dataset)
        ckpt, history = train("dnn", records, TrainConfig(epochs=3, batch_size=8))
        assert ckpt["model_kind"] == "dnn"
        assert all(np.isfinite(row["train_mse"]) for row in history)

    def test_lr_decays_per_epoch(self, small_dataset):
        records = load_dataset(small_dataset)
        _, history = train("gat", records,
                           TrainConfig(epochs=3, batch_size=8, lr=1e-3,
                                       lr_decay=0.5))
        lrs = [row["lr"] for row in history]
        assert lrs == pytest.approx([1e-3, 1e-3, 5e-4, 2.5e-4])


class TestCheckpoints:
    def test_roundtrip_identical_predictions(self, small_dataset, tmp_path):
        from hlwlab.gatmodel import GraphBatch, gat_predict
        from hlwlab.scenario import build_graph
        records = load_dataset(small_dataset)
        ckpt, _ = train("gat", records, TrainConfig(epochs=2, batch_size=8))
        path = tmp_path / "ck.json"
        save_checkpoint(path, ckpt)
        loaded = load_checkpoint(path)
        _, cfg1, params1, norm1 = model_from_checkpoint(ckpt)
        _, cfg2, params2, norm2 = model_from_checkpoint(loaded)
        sc, _ = scenario_from_record(records[0])
        b1 = GraphBatch.from_graph(build_graph(sc, norm=norm1))
        b2 = GraphBatch.from_graph(build_graph(sc, norm=norm2))
        p1 = gat_predict(b1, params1, cfg1)
        p2 = gat_predict(b2, params2, cfg2)
        assert np.array_equal(p1, p2)

    def test_save_load_save_stable(self, small_dataset, tmp_path):
        records = load_dataset(small_dataset)
        ckpt, _ = train("gat", records, TrainConfig(epochs=1, batch_size=8))
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_checkpoint(p1, ckpt)
        save_checkpoint(p2, load_checkpoint(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_corrupt_file_reports_offset(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"schema_version": 1, oops')
        with pytest.raises(SchemaError, match="byte"):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "old.json"
        path.write_text('{"schema_version": 0}')
        with pytest.raises(SchemaError):
            load_checkpoint(path)

    def test_norm_hash_mismatch(self, small_dataset, tmp_path):
        records = load_dataset(small_dataset)
        ckpt, _ = train("gat", records, TrainConfig(epochs=1, batch_size=8))
        ckpt["norm_meta"]["rate_max_bps"] += 1.0
        path = tmp_path / "tampered.json"
        save_checkpoint(path, ckpt)
        with pytest.raises(IntegrityError):
            load_checkpoint(path)

    def test_gat_checkpoint_evaluates_on_other_ue_count(self, small_dataset,
                                                        tmp_path, phy):
        records = load_dataset(small_dataset)          # n_u = 4
        ckpt, _ = train("gat", records, TrainConfig(epochs=2, batch_size=8))
        other = tmp_path / "more_ues.jsonl"
        generate_dataset(scale1_room(n_ue=9), *phy, n_samples=5,
                         label_method="heuristic", seed=3, out_path=other)
        from hlwlab import metrics
        report = metrics.evaluate("gat", load_dataset(other), checkpoint=ckpt,
                                  bootstrap=0)
        assert len(report.rows) == 5

    def test_dnn_checkpoint_rejects_other_ue_count(self, small_dataset,
                                                   tmp_path, phy):
        records = load_dataset(small_dataset)
        ckpt, _ = train("dnn", records, TrainConfig(epochs=1, batch_size=8))
        other = tmp_path / "more.jsonl"
        generate_dataset(scale1_room(n_ue=9), *phy, n_samples=3,
                         label_method="heuristic", seed=4, out_path=other)
        from hlwlab import metrics
        with pytest.raises(ModelMismatchError):
            metrics.evaluate("dnn", load_dataset(other), checkpoint=ckpt,
                             bootstrap=0)

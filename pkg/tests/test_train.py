import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import affnet.train as tr
from affnet.autodiff import ParamStore
from affnet.data import Dataset, synth_splits
from affnet.errors import ConfigError, NonFiniteError, TrainingDiverged
from affnet.network import build_affnet, micro_config, read_checkpoint, save_checkpoint
from affnet.train import (CSV_HEADER, AdamWState, RunMetrics, StepRecord, TrainConfig, adamw_step,
                          augment_batch, epoch_order, load_config, lr_at, parse_config_text, train_loop)


def scalar_store(p, g):
    st_ = ParamStore(np.float64)
    st_.add("p", np.array([p], dtype=np.float64))
    st_.grad("p")[...] = g
    return st_


def tiny_setup(n_train=96, n_test=64, seed=0, **train_overrides):
    train, test = synth_splits(3, n_train, n_test)
    cfg = TrainConfig(total_epochs=1, batch_size=32, warmup_steps=1, seed=seed).replace(**train_overrides)
    model = build_affnet(micro_config(stage_blocks=[1, 1, 1], num_classes=2), seed=seed)
    return model, train, test, cfg


class TestSchedule:
    def test_examples(self):
        cfg = TrainConfig(warmup_steps=10)
        assert lr_at(0, cfg, 100) == 0.0
        assert lr_at(10, cfg, 100) == cfg.base_lr
        assert abs(lr_at(99, cfg, 100) - cfg.min_lr) <= 1e-12
        assert lr_at(5, cfg, 100) == pytest.approx(cfg.base_lr / 2)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            lr_at(100, TrainConfig(), 100)

    @given(st.integers(0, 50), st.integers(2, 400))
    def test_shape(self, warmup, extra):
        cfg = TrainConfig(warmup_steps=warmup)
        total = warmup + extra
        lrs = [lr_at(s, cfg, total) for s in range(total)]
        assert all(0 <= v <= cfg.base_lr + 1e-15 for v in lrs)
        assert all(v >= cfg.min_lr - 1e-15 for v in lrs[warmup:])
        assert all(a >= b - 1e-15 for a, b in zip(lrs[warmup:], lrs[warmup + 1:]))
        assert all(a <= b for a, b in zip(lrs[:warmup], lrs[1:warmup + 1]))

    def test_continuous_at_junction(self):
        cfg = TrainConfig(warmup_steps=100)
        total = 10_000
        step_up = lr_at(100, cfg, total) - lr_at(99, cfg, total)
        step_down = lr_at(100, cfg, total) - lr_at(101, cfg, total)
        assert 0 < step_up <= cfg.base_lr / 100 + 1e-15
        assert 0 <= step_down < step_up


class TestAdamW:
    def test_first_step(self):
        s = scalar_store(1.0, 1.0)
        adamw_step(s, AdamWState(), lr=0.1, weight_decay=0.0)
        assert s["p"][0] == pytest.approx(1 - 0.1 / (1 + 1e-8), abs=1e-15)
        assert s["p"][0] == pytest.approx(0.9000000009999999, abs=1e-15)

    def test_pure_decay(self):
        s = scalar_store(3.0, 0.0)
        adamw_step(s, AdamWState(), lr=0.1, weight_decay=0.05)
        assert s["p"][0] == pytest.approx(3.0 * (1 - 0.005), abs=1e-15)

    def test_zero_gradient_identity(self, rng):
        s = ParamStore(np.float64)
        s.add("a", rng.standard_normal((3, 4)))
        before = s["a"].copy()
        adamw_step(s, AdamWState(), lr=0.1, weight_decay=0.0)
        np.testing.assert_array_equal(s["a"], before)

    def test_decay_precedes_moments(self):
        # with decay first the update is p(1 - lr wd) - lr * g / (|g| + eps)
        s = scalar_store(2.0, -0.5)
        adamw_step(s, AdamWState(), lr=0.01, weight_decay=0.1)
        assert s["p"][0] == pytest.approx(2.0 * (1 - 0.001) + 0.01 * 0.5 / (0.5 + 1e-8), abs=1e-14)

    def test_matches_reference_loop(self, rng):
        gs = rng.standard_normal((5, 3))
        p = rng.standard_normal(3)
        s = ParamStore(np.float64)
        s.add("w", p.copy())
        state = AdamWState()
        m = np.zeros(3)
        v = np.zeros(3)
        for t, g in enumerate(gs, start=1):
            s.grad("w")[...] = g
            adamw_step(s, state, 0.01, 0.05)
            p = p - 0.01 * 0.05 * p
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            p = p - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(s["w"], p, rtol=1e-13)

    def test_nan_names_parameter(self):
        s = scalar_store(1.0, np.nan)
        with pytest.raises(NonFiniteError, match="'p'"):
            adamw_step(s, AdamWState(), 0.1, 0.0)
        assert s["p"][0] == 1.0


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.weight_decay, cfg.label_smoothing, cfg.batch_size, cfg.total_epochs) == (0.05, 0.1, 64, 5)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            TrainConfig(min_lr=1.0, base_lr=0.1)
        with pytest.raises(ConfigError):
            TrainConfig(optimizer="sgd")
        with pytest.raises(ConfigError):
            TrainConfig(precision="f16")

    def test_parse(self):
        m, t = parse_config_text("# comment\nmixer = identity\nbase_lr=0.01\nstage_blocks=1,2,1\n"
                                 "record_wall_ms=true\n")
        assert m.mixer.value == "identity" and m.stage_blocks == [1, 2, 1]
        assert t.base_lr == 0.01 and t.record_wall_ms is True

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("learning_rate=0.1")

    def test_bad_value(self):
        with pytest.raises(ConfigError):
            parse_config_text("batch_size=many")

    def test_env_seed(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("seed=3\n")
        assert load_config(p, environ={})[1].seed == 3
        assert load_config(p, environ={"AFF_SEED": "11"})[1].seed == 11
        with pytest.raises(ConfigError):
            load_config(p, environ={"AFF_SEED": "x"})


class TestMetrics:
    def test_csv(self):
        m = RunMetrics()
        m.append(StepRecord(0, 0, 0.0, 0.5, 0.25))
        m.append(StepRecord(1, 0, 0.001, 0.25, 0.5, eval_acc=0.75))
        lines = m.to_csv().splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[2] == "1,0,0.001,0.25,0.5,0.75,"
        assert m.final_eval_acc == 0.75

    def test_steps_increase(self):
        m = RunMetrics()
        m.append(StepRecord(3, 0, 0.0, 0.0, 0.0))
        with pytest.raises(ValueError):
            m.append(StepRecord(3, 0, 0.0, 0.0, 0.0))


class TestLoop:
    def test_epoch_order_pure(self):
        np.testing.assert_array_equal(epoch_order(4, 2, 100), epoch_order(4, 2, 100))
        assert not np.array_equal(epoch_order(4, 2, 100), epoch_order(4, 3, 100))
        assert sorted(epoch_order(4, 2, 100)) == list(range(100))

    def test_augment_flip_keeps_synth_labels(self, rng):
        train, _ = synth_splits(2, 64, 2)
        flipped = augment_batch(train.images, rng, crop=False, flip=True)
        from affnet.data import synth_label
        for img, y in zip(flipped, train.labels):
            ys, xs = np.nonzero(img[0] > 1)
            cells = sorted({(a // 2, b // 2) for a, b in zip(ys, xs)})
            assert synth_label(*cells[0], *cells[1]) == y

    def test_augment_crop_shape(self, rng):
        x = rng.standard_normal((5, 3, 8, 8))
        assert augment_batch(x, rng, crop=True, flip=True).shape == x.shape

    def test_zero_epochs(self, tmp_path):
        model, train, test, cfg = tiny_setup(total_epochs=0)
        init = {k: v.copy() for k, v in model.store.items()}
        metrics = train_loop(model, train, test, cfg, tmp_path)
        assert len(metrics) == 0
        assert (tmp_path / "metrics.csv").read_text() == CSV_HEADER + "\n"
        saved = read_checkpoint(tmp_path / "model.affw")
        for k, v in init.items():
            np.testing.assert_array_equal(saved[k], v)

    def test_run_records(self, tmp_path):
        model, train, test, cfg = tiny_setup(total_epochs=2)
        metrics = train_loop(model, train, test, cfg, tmp_path)
        assert [r.step for r in metrics.records] == list(range(6))
        assert len(metrics.eval_accs) == 2
        total = cfg.total_steps(len(train))
        for r in metrics.records:
            assert r.lr == lr_at(r.step, cfg, total)
            assert r.wall_ms is None

    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            model, train, test, cfg = tiny_setup()
            train_loop(model, train, test, cfg, tmp_path / name)
        for f in ("metrics.csv", "model.affw"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_changes_run(self, tmp_path):
        outs = []
        for seed in (0, 1):
            model, train, test, cfg = tiny_setup(seed=seed)
            outs.append(train_loop(model, train, test, cfg).to_csv())
        assert outs[0] != outs[1]

    def test_nan_aborts_with_last_good(self, tmp_path, monkeypatch):
        model, train, test, cfg = tiny_setup()
        real = tr.train_step
        calls = []

        def flaky(*args):
            calls.append(1)
            if len(calls) == 2:
                return float("nan"), float("nan")
            return real(*args)

        monkeypatch.setattr(tr, "train_step", flaky)
        with pytest.raises(TrainingDiverged, match="step 1"):
            train_loop(model, train, test, cfg, tmp_path)
        saved = read_checkpoint(tmp_path / "last_good.affw")
        assert all(np.all(np.isfinite(v)) for v in saved.values())
        for k, v in model.store.items():
            np.testing.assert_array_equal(saved[k], v)
        assert not (tmp_path / "metrics.csv").exists()

    def test_precision_mismatch(self):
        model, train, test, cfg = tiny_setup(precision="f64")
        with pytest.raises(ConfigError):
            train_loop(model, train, test, cfg)

    def test_warmup_must_fit(self):
        model, train, test, cfg = tiny_setup(warmup_steps=50)
        with pytest.raises(ConfigError):
            train_loop(model, train, test, cfg)

    def test_shuffled_label_control(self):
        train, test = synth_splits(5, 2000, 1000)
        perm = np.random.default_rng(0).permutation(len(train))
        shuffled = Dataset(train.images, train.labels[perm], 2, "shuffled", True, False)
        model = build_affnet(micro_config(num_classes=2), seed=0)
        cfg = TrainConfig(total_epochs=2, warmup_steps=10)
        metrics = train_loop(model, shuffled, test, cfg)
        assert abs(metrics.final_eval_acc - 0.5) <= 0.05

"""Growth-loop tests: line search, schedules, stop reasons, baselines, writers."""

import dataclasses
import warnings

import numpy as np
import pytest

from grownet.data import Dataset
from grownet.rbf import RbfChain, chain_trace, insert_chain
from grownet.train import (
    RBF_OPS,
    RUN_LOG_COLUMNS,
    STOP_MAX_ITERS,
    STOP_THRESHOLD,
    STOP_VALIDATION,
    STRATEGIES,
    Adam,
    Sgd,
    TrainConfig,
    grow_auto,
    grow_baseline,
    grow_semi,
    line_search,
    ops_for,
    write_events,
    write_run_log,
    write_summary,
)


def scalar_ds(x, y, name=""):
    return Dataset(np.asarray(x, float).reshape(-1, 1),
                   np.asarray(y, float).reshape(-1, 1), name=name)


def tiny_cfg(**over):
    base = dict(n=1, m=1, max_iters=2, init_layers=1, epochs_base=3,
                epochs_step=2, batch=64, lr=0.03, eps=0.001, eps_threshold=0.0,
                tau1=0.001, sigma_n=0.01, seed=0)
    base.update(over)
    return TrainConfig(**base)


@pytest.fixture
def chain_data(rng):
    x = rng.uniform(-2.0, 2.0, size=60)
    y = np.sin(2.0 * x)
    xv = rng.uniform(-2.0, 2.0, size=20)
    return scalar_ds(x, y, "train"), scalar_ds(xv, np.sin(2.0 * xv), "val")


class TestTrainConfig:
    def test_defaults_validate(self):
        cfg = TrainConfig()
        assert cfg.validate() is cfg

    @pytest.mark.parametrize("field,value", [
        ("n", 0), ("m", 0), ("max_iters", -1), ("init_layers", -1),
        ("epochs_base", -1), ("epochs_step", -1), ("patience", -1),
        ("batch", 0), ("lr", 0.0), ("tau1", -1.0), ("eps", 0.0),
        ("eps_s", 1.5), ("sparsity", 1.0), ("optimizer", "rmsprop"),
        ("sigma_n", -0.1),
    ])
    def test_rejects_bad_field(self, field, value):
        cfg = dataclasses.replace(TrainConfig(), **{field: value})
        with pytest.raises(ValueError, match=field.replace("_", ".")):
            cfg.validate()


class TestOptimizers:
    def test_sgd_step_is_plain_descent(self):
        p = [np.array([1.0, 2.0])]
        Sgd(p, 0.1).step(p, [np.array([10.0, -10.0])])
        np.testing.assert_allclose(p[0], [0.0, 3.0], atol=1e-15)

    def test_adam_first_step_matches_hand_formula(self):
        p = [np.array([1.0, -2.0])]
        g = [np.array([0.5, 0.25])]
        opt = Adam(p, 0.01)
        opt.step(p, g)
        m = 0.1 * g[0]
        v = 0.001 * g[0] ** 2
        want = np.array([1.0, -2.0]) - 0.01 * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
        np.testing.assert_allclose(p[0], want, atol=1e-12)

    def test_adam_never_moves_parameters_with_zero_gradients(self):
        p = [np.array([3.0, 4.0])]
        opt = Adam(p, 0.5)
        for _ in range(5):
            opt.step(p, [np.zeros(2)])
        np.testing.assert_array_equal(p[0], [3.0, 4.0])

    def test_ops_for_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            ops_for("transformer")


class TestLineSearch:
    def make_target(self, eps_true):
        # Labels generated by a chain that already contains the candidate
        # layer at scale eps_true: J(eps) is then minimized at exactly
        # eps_true along the insertion path.
        base = RbfChain(np.array([[0.2, -0.1, 0.5]]))
        phi = np.array([3.0, 0.0, 4.0]) / 5.0
        target = insert_chain(base, 1, phi, eps_true)
        x = np.linspace(-2.0, 2.0, 80)
        ds = scalar_ds(x, target.predict(x))
        return base, phi, ds

    def test_stops_within_one_step_of_minimum(self):
        base, phi, ds = self.make_target(0.0314)
        eps, loss, capped = line_search(RBF_OPS, base, ds, 1, phi,
                                        eps0=0.001, tau1=0.001)
        assert not capped
        assert eps == pytest.approx(0.0314, abs=0.0011)
        assert loss <= RBF_OPS.loss(insert_chain(base, 1, phi, 0.001), ds)

    def test_eps_never_shrinks_below_start(self):
        base, phi, ds = self.make_target(0.0)
        eps, _, capped = line_search(RBF_OPS, base, ds, 1, phi,
                                     eps0=0.05, tau1=0.01)
        assert eps == pytest.approx(0.05)
        assert not capped

    def test_cap_warns_and_flags(self):
        base, phi, ds = self.make_target(1.0)
        with pytest.warns(UserWarning, match="cap"):
            eps, _, capped = line_search(RBF_OPS, base, ds, 1, phi,
                                         eps0=0.001, tau1=0.001, cap=5)
        assert capped
        assert eps == pytest.approx(0.001 + 5 * 0.001)

    def test_validates_positive_steps(self):
        base, phi, ds = self.make_target(0.01)
        with pytest.raises(ValueError, match="eps0 and tau1"):
            line_search(RBF_OPS, base, ds, 1, phi, eps0=0.0, tau1=0.001)
        with pytest.raises(ValueError, match="eps0 and tau1"):
            line_search(RBF_OPS, base, ds, 1, phi, eps0=0.001, tau1=-1.0)


class TestScheduler:
    def test_phase_epoch_counts_follow_schedule(self, chain_data):
        train_ds, val_ds = chain_data
        cfg = tiny_cfg(max_iters=2, epochs_base=3, epochs_step=2)
        _, log = grow_semi(cfg, train_ds, val_ds, kind="rbf")
        phases = {}
        for epoch, phase, *_ in log.rows:
            phases[phase] = phases.get(phase, 0) + 1
        # Phase i trains epochs_base + epochs_step * (i - 1) epochs.
        assert phases == {1: 3, 2: 5, 3: 7}
        assert log.summary["epochs_total"] == 15
        assert [r[0] for r in log.rows] == list(range(1, 16))

    def test_rows_record_layer_growth(self, chain_data):
        train_ds, val_ds = chain_data
        cfg = tiny_cfg(max_iters=2)
        _, log = grow_semi(cfg, train_ds, val_ds, kind="rbf")
        layer_by_phase = {phase: layers for _, phase, _, _, layers, _ in log.rows}
        assert layer_by_phase == {1: 1, 2: 2, 3: 3}
        params_by_phase = {phase: p for _, phase, _, _, _, p in log.rows}
        assert params_by_phase == {1: 3, 2: 6, 3: 9}


class TestStopReasons:
    def test_max_iterations(self, chain_data):
        train_ds, val_ds = chain_data
        model, log = grow_semi(tiny_cfg(max_iters=1), train_ds, val_ds, kind="rbf")
        assert log.summary["stop_reason"] == STOP_MAX_ITERS
        assert log.summary["insertions"] == 1
        assert len(log.events) == 1

    def test_below_threshold_on_perfect_fit(self):
        # Labels equal the initial chain's predictions: the scan finds no
        # positive eigenvalue anywhere, so growth stops before inserting.
        x = np.linspace(-2.0, 2.0, 50)
        chain0 = RbfChain(np.zeros((1, 3)))
        train_ds = scalar_ds(x, chain0.predict(x))
        val_ds = scalar_ds(x[:10], chain0.predict(x[:10]))
        cfg = tiny_cfg(sigma_n=0.0, eps_threshold=0.0, lr=1e-12)
        model, log = grow_semi(cfg, train_ds, val_ds, kind="rbf")
        assert log.summary["stop_reason"] == STOP_THRESHOLD
        assert log.summary["insertions"] == 0
        assert model.layer_count == 1

    def test_below_threshold_on_small_score(self, chain_data):
        train_ds, val_ds = chain_data
        cfg = tiny_cfg(eps_threshold=1e9)
        model, log = grow_semi(cfg, train_ds, val_ds, kind="rbf")
        assert log.summary["stop_reason"] == STOP_THRESHOLD
        assert log.summary["insertions"] == 0

    def test_validation_worsened(self):
        # Train labels carry a residual bump that the scan wants to fit; the
        # validation labels are the identity the initial chain already
        # matches, so the insertion worsens validation and growth stops.
        x = np.linspace(-2.0, 2.0, 60)
        y = x + 0.5 * np.exp(-2.0 * (x - 0.5) ** 2)
        train_ds = scalar_ds(x, y)
        xv = np.linspace(-2.0, 2.0, 20)
        val_ds = scalar_ds(xv, xv)
        cfg = tiny_cfg(sigma_n=0.0, lr=1e-12, max_iters=5, eps=0.01, tau1=0.01)
        model, log = grow_semi(cfg, train_ds, val_ds, kind="rbf")
        assert log.summary["stop_reason"] == STOP_VALIDATION
        assert log.summary["insertions"] == 1
        # The returned model is the best-validation one: the pre-insertion fit.
        assert log.summary["returned_iteration"] == 1
        assert model.layer_count == 1

    def test_guided_events_decrease_training_loss(self, chain_data):
        train_ds, val_ds = chain_data
        for grow in (grow_semi, grow_auto):
            _, log = grow(tiny_cfg(max_iters=2, patience=2), train_ds, val_ds,
                          kind="rbf")
            assert log.events, "expected at least one insertion"
            for event in log.events:
                assert event.post_loss < event.pre_loss


class TestGrowAuto:
    def test_patience_counts_stall_epochs(self, chain_data):
        train_ds, val_ds = chain_data
        # lr too small to improve validation: each phase stops after exactly
        # `patience` consecutive non-improving epochs.
        cfg = tiny_cfg(lr=1e-30, max_iters=0, patience=3, eps_threshold=0.0)
        _, log = grow_auto(cfg, train_ds, val_ds, kind="rbf")
        assert log.summary["stop_reason"] == STOP_MAX_ITERS
        assert log.summary["epochs_total"] == 3

    def test_inserts_and_grows(self, chain_data):
        train_ds, val_ds = chain_data
        cfg = tiny_cfg(max_iters=2, patience=2)
        model, log = grow_auto(cfg, train_ds, val_ds, kind="rbf")
        assert log.summary["method"] == "auto"
        for event in log.events:
            assert event.m == 1  # scalar chain has a single block
            assert event.method == "auto"

    def test_model_can_be_supplied(self, chain_data):
        train_ds, val_ds = chain_data
        start = RbfChain(np.array([[0.1, 0.0, 0.2], [0.0, 0.1, -0.1]]))
        cfg = tiny_cfg(max_iters=1)
        model, log = grow_semi(cfg, train_ds, val_ds, kind="rbf",
                               model=start.clone())
        assert log.summary["hidden_layers"] >= 2


class TestBaselines:
    def test_unknown_strategy_rejected(self, chain_data):
        train_ds, val_ds = chain_data
        with pytest.raises(ValueError, match="strategy"):
            grow_baseline("dropout", tiny_cfg(), train_ds, val_ds, kind="rbf")

    def test_random_insertion_uses_config_eps(self, chain_data):
        train_ds, val_ds = chain_data
        cfg = tiny_cfg(max_iters=2, eps=0.001)
        model, log = grow_baseline("random-insertion", cfg, train_ds, val_ds,
                                   kind="rbf")
        assert log.summary["method"] == "random-insertion"
        for event in log.events:
            assert event.eps_final == 0.001
            assert event.m == 1
            assert event.score is None
            assert not event.line_search_capped

    def test_net2deeper_with_zero_noise_is_exact_identity(self, chain_data):
        train_ds, val_ds = chain_data
        cfg = tiny_cfg(max_iters=2, sigma_n=0.0, lr=1e-12)
        _, log = grow_baseline("net2deeper", cfg, train_ds, val_ds, kind="rbf")
        for event in log.events:
            assert event.post_loss == event.pre_loss  # bit-identical

    def test_net2deeper_noise_perturbs_insertion(self, chain_data):
        train_ds, val_ds = chain_data
        cfg = tiny_cfg(max_iters=1, sigma_n=0.05, lr=1e-12)
        _, log = grow_baseline("net2deeper", cfg, train_ds, val_ds, kind="rbf")
        assert log.events[0].post_loss != log.events[0].pre_loss

    def test_forward_thinking_freezes_trained_layers(self, chain_data):
        train_ds, val_ds = chain_data
        cfg = tiny_cfg(max_iters=2, epochs_base=4, epochs_step=0)
        model, log = grow_baseline("forward-thinking", cfg, train_ds, val_ds,
                                   kind="rbf")
        # Appends at the end each time; only the newest layer stays trainable.
        # The returned model is the best-validation phase, so its depth can be
        # anywhere in 1..3; once an insertion happened, the trainable pattern
        # is all-frozen-but-last.
        assert 1 <= log.summary["hidden_layers"] <= 3
        if log.summary["returned_iteration"] > 1:
            assert list(model.trainable_rows[:-1]) == [False] * (
                model.layer_count - 1)
            assert model.trainable_rows[-1]
        for event in log.events:
            assert event.inserted_at == event.iteration  # always the last slot

    def test_forward_thinking_frozen_rows_do_not_move(self):
        x = np.linspace(-2.0, 2.0, 40)
        y = np.sin(2.0 * x)
        train_ds = scalar_ds(x, y)
        val_ds = scalar_ds(x[:10], y[:10])
        # Freeze row 0 by hand and train: the frozen row must stay
        # bit-identical while the trainable row moves.
        model = RbfChain(np.array([[0.3, -0.2, 0.4], [0.1, 0.2, -0.3]]))
        model.trainable_rows[0] = False
        cfg = tiny_cfg(lr=0.05)
        before = model.thetas.copy()
        opt = RBF_OPS.start_phase(model, cfg)
        for _ in range(3):
            RBF_OPS.epoch(model, train_ds, opt, cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(model.thetas[0], before[0])
        assert not np.array_equal(model.thetas[1], before[1])

    def test_fixed_trains_final_architecture_in_one_phase(self, chain_data):
        train_ds, val_ds = chain_data
        cfg = tiny_cfg(max_iters=2, init_layers=1, epochs_base=3, epochs_step=2)
        model, log = grow_baseline("fixed", cfg, train_ds, val_ds, kind="rbf")
        assert log.summary["method"] == "fixed"
        assert log.summary["stop_reason"] == STOP_MAX_ITERS
        assert log.summary["insertions"] == 0
        assert model.layer_count == 3  # init_layers + max_iters
        # One phase spanning the whole schedule: 3 + 5 + 7 epochs.
        assert log.summary["epochs_total"] == 15
        assert {phase for _, phase, *_ in log.rows} == {1}

    def test_strategy_list_is_exhaustive(self):
        assert STRATEGIES == ("random-insertion", "net2deeper",
                              "forward-thinking", "fixed")


class TestFnnGrowth:
    def test_semi_grows_network_and_logs(self, rng):
        inputs = rng.standard_normal((40, 2))
        labels = (inputs @ np.array([[0.7], [-0.4]])) ** 2
        train_ds = Dataset(inputs, labels, name="train")
        val_ds = Dataset(inputs[:12], labels[:12], name="val")
        cfg = TrainConfig(n=4, m=2, max_iters=2, init_layers=1, epochs_base=4,
                          epochs_step=2, batch=64, lr=0.01, eps=0.001,
                          eps_threshold=1e-6, tau1=0.001, sigma_n=0.2, seed=1)
        model, log = grow_semi(cfg, train_ds, val_ds, kind="fnn")
        assert model.hidden_count >= 1
        assert log.summary["stop_reason"] in (STOP_MAX_ITERS, STOP_VALIDATION,
                                              STOP_THRESHOLD)
        for event in log.events:
            assert 1 <= event.inserted_at
            assert 1 <= event.m <= 2
            assert len(event.lambdas) == len(event.scores)
            assert event.post_loss < event.pre_loss

    def test_sgd_epoch_matches_hand_update(self):
        x = np.linspace(-1.0, 1.0, 30)
        y = np.tanh(x)
        train_ds = scalar_ds(x, y)
        chain = RbfChain(np.array([[0.3, -0.2, 0.4]]))
        grads = chain_trace(chain, x, y).param_grads
        cfg = tiny_cfg(optimizer="sgd", lr=0.1, batch=64)
        model = chain.clone()
        opt = RBF_OPS.start_phase(model, cfg)
        RBF_OPS.epoch(model, train_ds, opt, cfg, np.random.default_rng(0))
        np.testing.assert_allclose(model.thetas, chain.thetas - 0.1 * grads,
                                   atol=1e-14)


class TestDeterminism:
    def test_identical_runs_identical_logs(self, chain_data):
        train_ds, val_ds = chain_data
        cfg = tiny_cfg(max_iters=2)
        _, log1 = grow_semi(cfg, train_ds, val_ds, kind="rbf")
        _, log2 = grow_semi(cfg, train_ds, val_ds, kind="rbf")
        assert log1.rows == log2.rows
        for e1, e2 in zip(log1.events, log2.events):
            d1, d2 = e1.to_dict(), e2.to_dict()
            d1.pop("wall_time")
            d2.pop("wall_time")
            assert d1 == d2
        s1 = dict(log1.summary)
        s2 = dict(log2.summary)
        assert s1 == s2

    def test_different_seeds_differ(self, chain_data):
        train_ds, val_ds = chain_data
        _, log1 = grow_semi(tiny_cfg(seed=0), train_ds, val_ds, kind="rbf")
        _, log2 = grow_semi(tiny_cfg(seed=1), train_ds, val_ds, kind="rbf")
        assert log1.rows != log2.rows


class TestWriters:
    def test_run_log_round_trips_exact_floats(self, tmp_path, chain_data):
        train_ds, val_ds = chain_data
        _, log = grow_semi(tiny_cfg(max_iters=1), train_ds, val_ds, kind="rbf")
        path = tmp_path / "run_log.csv"
        write_run_log(log, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(RUN_LOG_COLUMNS)
        assert len(lines) == 1 + len(log.rows)
        first = lines[1].split(",")
        epoch, phase, tl, vl, layers, params = log.rows[0]
        assert int(first[0]) == epoch and int(first[1]) == phase
        assert float(first[2]) == tl  # repr round-trip is exact
        assert float(first[3]) == vl
        assert int(first[4]) == layers and int(first[5]) == params

    def test_events_are_json_lines(self, tmp_path, chain_data):
        import json

        train_ds, val_ds = chain_data
        _, log = grow_semi(tiny_cfg(max_iters=2), train_ds, val_ds, kind="rbf")
        path = tmp_path / "events.jsonl"
        write_events(log, path)
        lines = path.read_text().splitlines()
        assert len(lines) == len(log.events)
        blob = json.loads(lines[0])
        assert blob["method"] == "semi"
        assert set(blob) == {
            "method", "iteration", "inserted_at", "eps_final", "m",
            "pre_loss", "post_loss", "lambdas", "scores", "score",
            "line_search_capped", "wall_time",
        }

    def test_summary_writer_is_stable(self, tmp_path):
        import json

        path = tmp_path / "summary.json"
        write_summary({"b": 1, "a": [1, 2]}, path)
        text = path.read_text()
        assert json.loads(text) == {"a": [1, 2], "b": 1}
        write_summary({"a": [1, 2], "b": 1}, path)
        assert path.read_text() == text  # key order never leaks into bytes

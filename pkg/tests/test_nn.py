import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from gradcheck import check, random_coords, tiny_problem
from eegmove import seeding
from eegmove.nn import (
    Adam,
    AdamState,
    CheckpointError,
    ModelConfig,
    StaleCacheError,
    Tape,
    adam_step,
    attention_forward,
    backward,
    bce_loss,
    fit,
    forward,
    init_params,
    load_checkpoint,
    lstm_cell_forward,
    param_shapes,
    predict,
    save_checkpoint,
)
from eegmove.nn.checkpoint import dumps, loads


class TestConfig:
    def test_defaults(self):
        cfg = ModelConfig.cross_subject()
        assert (cfg.hidden, cfg.depth, cfg.batch_size, cfg.epochs) == (256, 3, 32, 100)
        assert cfg.dropout == (0.0, 0.2, 0.1, 0.2)
        intra = ModelConfig.intra_subject()
        assert (intra.batch_size, intra.epochs, intra.dropout) == (2, 10, (0.7, 0.2, 0.1, 0.1))

    def test_round_trip(self):
        cfg = ModelConfig(hidden=4, attention="vector", attention_dim=3)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize(
        "kwargs",
        [{"depth": 0}, {"dropout": (0.1, 0.2)}, {"dropout": (0, 1.0, 0, 0)}, {"attention": "dot"},
         {"attention": "vector"}, {"dtype": "int8"}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ModelConfig(**kwargs)

    def test_param_shapes(self):
        shapes = dict(param_shapes(ModelConfig(input_dim=297, hidden=256)))
        assert shapes["lstm0.W_i"] == (256, 553)
        assert shapes["lstm1.W_o"] == (256, 512)
        assert shapes["attn.W_s"] == (256,)
        assert shapes["dense.w"] == (256,)


class TestInit:
    def test_forget_bias_and_limits(self):
        cfg = ModelConfig(input_dim=10, hidden=6, depth=1, dropout=(0, 0))
        model = init_params(cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(model.params["lstm0.b_f"], 1.0)
        np.testing.assert_array_equal(model.params["lstm0.b_i"], 0.0)
        limit = np.sqrt(6 / (16 + 6))
        assert np.abs(model.params["lstm0.W_c"]).max() <= limit

    def test_seeded(self):
        cfg = ModelConfig(input_dim=4, hidden=3, depth=1, dropout=(0, 0))
        a = init_params(cfg, seeding.rng(1, seeding.INIT, 0))
        b = init_params(cfg, seeding.rng(1, seeding.INIT, 0))
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])


class TestCell:
    def test_matches_gate_equations(self):
        gen = np.random.default_rng(0)
        cfg = ModelConfig(input_dim=3, hidden=4, depth=1, dropout=(0, 0))
        model = init_params(cfg, gen)
        p = model.layer(0)
        x, h, c = gen.standard_normal(3), gen.standard_normal(4), gen.standard_normal(4)
        hx = np.r_[h, x]
        i = expit(p.W_i @ hx + p.b_i)
        f = expit(p.W_f @ hx + p.b_f)
        g = np.tanh(p.W_c @ hx + p.b_c)
        o = expit(p.W_o @ hx + p.b_o)
        c_new = f * c + i * g
        h_new = o * np.tanh(c_new)
        got_h, got_c = lstm_cell_forward(x, h, c, p)
        np.testing.assert_allclose(got_h, h_new, rtol=1e-13)
        np.testing.assert_allclose(got_c, c_new, rtol=1e-13)


class TestAttention:
    def test_scalar_matches_loop(self):
        gen = np.random.default_rng(1)
        H = gen.standard_normal((7, 5))
        W, b = gen.standard_normal(5), 0.3
        u = np.array([np.tanh(W @ h + b) for h in H])
        alpha = np.exp(u) / np.exp(u).sum()
        v, got_alpha = attention_forward(H, W, b)
        np.testing.assert_allclose(got_alpha, alpha, rtol=1e-13)
        np.testing.assert_allclose(v, sum(a * h for a, h in zip(alpha, H)), rtol=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_weights_are_simplex(self, seed):
        gen = np.random.default_rng(seed)
        _, alpha = attention_forward(gen.standard_normal((4, 7, 3)) * 10, gen.standard_normal(3), 0.0)
        assert np.all(alpha >= 0)
        np.testing.assert_allclose(alpha.sum(-1), 1.0, rtol=1e-12)

    def test_forward_exposes_alpha(self):
        model, X, _ = tiny_problem()
        _, cache = forward(model, X)
        assert cache.alpha.shape == (3, 7)


class TestForward:
    def test_output_range_and_shape(self):
        model, X, _ = tiny_problem()
        p, _ = forward(model, X)
        assert p.shape == (3,)
        assert np.all((p > 0) & (p < 1))

    def test_single_segment(self):
        model, X, _ = tiny_problem()
        p, _ = forward(model, X[0])
        np.testing.assert_allclose(p, forward(model, X[:1])[0])

    def test_eval_is_deterministic(self):
        model, X, _ = tiny_problem()
        np.testing.assert_array_equal(forward(model, X)[0], forward(model, X)[0])

    def test_bad_shape(self):
        model, X, _ = tiny_problem()
        with pytest.raises(ValueError, match="expected input"):
            forward(model, X[:, :, :4])

    def test_dropout_needs_rng(self):
        model, X, _ = tiny_problem()
        with pytest.raises(ValueError, match="needs an rng"):
            forward(model, X, train=True)


class TestLoss:
    def test_bce_known_values(self):
        assert bce_loss([0.5, 0.5], [0, 1]) == pytest.approx(np.log(2))
        assert bce_loss([0.9], [1]) == pytest.approx(-np.log(0.9))

    def test_bce_clamped(self):
        assert np.isfinite(bce_loss([0.0, 1.0], [1, 0]))
        assert bce_loss([0.0], [1]) == pytest.approx(-np.log(1e-12))


class TestGradients:
    @pytest.mark.parametrize("attention", ["scalar", "vector"])
    def test_full_check(self, attention):
        model, X, y = tiny_problem(attention)
        coords = [(k, i) for k, v in model.params.items() for i in range(v.size)]
        assert check(model, X, y, coords).max() < 1e-4

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_random_instances(self, seed):
        model, X, y = tiny_problem(seed=seed)
        coords = random_coords(model, 20, np.random.default_rng(seed))
        assert check(model, X, y, coords).max() < 1e-4

    def test_stale_cache(self):
        model, X, y = tiny_problem()
        _, cache = forward(model, X)
        Adam().step(model, backward(forward(model, X)[1], y))
        with pytest.raises(StaleCacheError):
            backward(cache, y)

    def test_label_shape(self):
        model, X, _ = tiny_problem()
        _, cache = forward(model, X)
        with pytest.raises(ValueError, match="do not match"):
            backward(cache, [0, 1])


class TestTape:
    def test_reverse_replay(self):
        tape = Tape()
        tape.put("x", np.array(2.0))
        tape.put("y", tape.values["x"] ** 2)
        tape.record("square", lambda t: t.adjoint("x").__iadd__(2 * t.values["x"] * t.adjoint("y")))
        tape.put("z", 3 * tape.values["y"])
        tape.record("scale", lambda t: t.adjoint("y").__iadd__(3 * t.adjoint("z")))
        adj = tape.backward("z", np.array(1.0))
        assert float(adj["x"]) == 12.0
        assert tape.replayed == ["scale", "square"]
        with pytest.raises(RuntimeError):
            tape.backward("z", np.array(1.0))


class TestAdam:
    def test_matches_reference(self):
        theta = {"w": np.array([1.0, -2.0])}
        state = AdamState()
        m = v = np.zeros(2)
        ref = np.array([1.0, -2.0])
        for t in range(1, 6):
            g = np.array([0.5 * t, -1.0])
            adam_step(theta, {"w": g}, state, lr=0.1)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref = ref - 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(theta["w"], ref, rtol=1e-14)
        assert state.t == 5

    def test_first_step_is_lr_sign(self):
        theta = {"w": np.zeros(3)}
        adam_step(theta, {"w": np.array([3.0, -0.01, 0.0])}, AdamState(), lr=0.01)
        np.testing.assert_allclose(theta["w"], [-0.01, 0.01, 0.0], atol=1e-7)


class TestTraining:
    def test_learns_separable(self):
        gen = np.random.default_rng(0)
        y = np.repeat([0, 1], 40)
        X = gen.standard_normal((80, 7, 5)) * 0.3
        X[:, :, 0] += 2 * y[:, None] - 1
        cfg = ModelConfig(input_dim=5, hidden=8, depth=1, dropout=(0, 0), epochs=30, batch_size=16, lr=0.01)
        model = init_params(cfg, np.random.default_rng(1))
        history = fit(model, X, y, seed=0)
        assert history[-1] < history[0]
        assert np.mean((predict(model, X) >= 0.5) == y) == 1.0

    def test_reproducible(self):
        model, X, y = tiny_problem(batch=10)
        a, b = model.copy(), model.copy()
        ha = fit(a, X, y, seed=4, epochs=2, batch_size=4)
        hb = fit(b, X, y, seed=4, epochs=2, batch_size=4)
        assert ha == hb
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])

    def test_predict_empty(self):
        model, _, _ = tiny_problem()
        assert predict(model, np.zeros((0, 7, 5))).shape == (0,)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model, X, y = tiny_problem(attention="vector")
        opt = Adam()
        opt.step(model, backward(forward(model, X, train=True, rng=np.random.default_rng(0))[1], y))
        path = tmp_path / "m.alsm"
        save_checkpoint(model, path, opt.state)
        loaded, state = load_checkpoint(path)
        assert loaded.config == model.config
        np.testing.assert_array_equal(predict(loaded, X), predict(model, X))
        assert state.t == 1
        np.testing.assert_array_equal(state.m["attn.u"], opt.state.m["attn.u"])

    def test_no_state(self):
        model, _, _ = tiny_problem()
        _, state = loads(dumps(model))
        assert state is None

    def test_errors(self):
        model, _, _ = tiny_problem()
        data = dumps(model)
        with pytest.raises(CheckpointError, match="bad magic"):
            loads(b"XXXX" + data[4:])
        with pytest.raises(CheckpointError, match="version 2"):
            loads(data[:4] + (2).to_bytes(4, "little") + data[8:])
        with pytest.raises(CheckpointError, match="truncated"):
            loads(data[:-8])
        with pytest.raises(CheckpointError, match="prefix"):
            loads(data[:5])

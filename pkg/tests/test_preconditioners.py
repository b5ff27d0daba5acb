"""Internal-optimizer tests against straight-line reimplementations."""

import numpy as np
import pytest

from funnelopt.errors import ConfigError, DimensionError
from funnelopt.preconditioners import (
    PreconditionerKind,
    init_preconditioner,
    precondition,
)

SHAPES = {"a": 3, "b": 2}


def _grads(gen, shapes=SHAPES):
    return {name: gen.standard_normal(size) for name, size in shapes.items()}


class TestInit:
    def test_identity_has_no_accumulators(self):
        state = init_preconditioner(PreconditionerKind("identity_sgd"), {"w": 3})
        assert state.step == 0
        assert not state.sq_sum and not state.second_moment
        assert not state.first_moment and not state.output_ema

    def test_adagrad_starts_at_zero(self):
        state = init_preconditioner(PreconditionerKind("adagrad"), {"w": 2})
        np.testing.assert_array_equal(state.sq_sum["w"], [0.0, 0.0])

    def test_adam_starts_at_zero(self):
        state = init_preconditioner(PreconditionerKind("adam"), {"w": 2})
        np.testing.assert_array_equal(state.first_moment["w"], [0.0, 0.0])
        np.testing.assert_array_equal(state.second_moment["w"], [0.0, 0.0])
        assert state.step == 0

    def test_bad_kind_and_constants(self):
        with pytest.raises(ConfigError):
            PreconditionerKind("sgd")
        with pytest.raises(ConfigError):
            PreconditionerKind("adam", epsilon=0.0)
        with pytest.raises(ConfigError):
            PreconditionerKind("adam", second_moment_decay=1.0)


class TestIdentity:
    def test_passthrough(self):
        state = init_preconditioner(PreconditionerKind("identity_sgd"), {"w": 2})
        out = precondition(state, {"w": np.array([3.0, -1.0])})
        np.testing.assert_array_equal(out["w"], [3.0, -1.0])
        assert state.step == 1

    def test_returns_a_copy(self):
        state = init_preconditioner(PreconditionerKind("identity_sgd"), {"w": 1})
        g = {"w": np.array([2.0])}
        out = precondition(state, g)
        out["w"][0] = 99.0
        assert g["w"][0] == 2.0


class TestAdagrad:
    def test_single_step_closed_form(self):
        state = init_preconditioner(PreconditionerKind("adagrad"), {"w": 1})
        out = precondition(state, {"w": np.array([1.0])})
        np.testing.assert_array_equal(state.sq_sum["w"], [1.0])
        # accumulate-then-divide with eps outside the root, bit-exact
        assert out["w"][0] == 1.0 / (1.0 + 1e-8)

    def test_accumulator_nondecreasing(self):
        gen = np.random.default_rng(5)
        state = init_preconditioner(PreconditionerKind("adagrad"), SHAPES)
        prev = {k: v.copy() for k, v in state.sq_sum.items()}
        for _ in range(50):
            precondition(state, _grads(gen))
            for name in SHAPES:
                assert (state.sq_sum[name] >= prev[name]).all()
                prev[name] = state.sq_sum[name].copy()

    def test_constant_gradient_norm_nonincreasing(self):
        state = init_preconditioner(PreconditionerKind("adagrad"), {"w": 4})
        g = {"w": np.array([0.5, -1.0, 2.0, 0.1])}
        norms = []
        for _ in range(30):
            out = precondition(state, {"w": g["w"].copy()})
            norms.append(np.linalg.norm(out["w"]))
        assert all(b <= a + 1e-15 for a, b in zip(norms, norms[1:]))

    def test_zero_gradient_fixed(self):
        for tag in ("identity_sgd", "adagrad", "adagrad_ema", "rmsprop", "adam"):
            state = init_preconditioner(PreconditionerKind(tag), {"w": 3})
            out = precondition(state, {"w": np.zeros(3)})
            np.testing.assert_array_equal(out["w"], np.zeros(3))

    def test_shape_mismatch(self):
        state = init_preconditioner(PreconditionerKind("adagrad"), {"w": 3})
        with pytest.raises(DimensionError):
            precondition(state, {"w": np.zeros(2)})
        with pytest.raises(DimensionError):
            precondition(state, {"v": np.zeros(3)})


class TestAdagradEma:
    def test_decay_zero_equals_plain_adagrad(self):
        gen = np.random.default_rng(9)
        plain = init_preconditioner(PreconditionerKind("adagrad"), SHAPES)
        ema = init_preconditioner(PreconditionerKind("adagrad_ema", ema_decay=0.0), SHAPES)
        for _ in range(20):
            g = _grads(gen)
            a = precondition(plain, {k: v.copy() for k, v in g.items()})
            b = precondition(ema, {k: v.copy() for k, v in g.items()})
            for name in SHAPES:
                np.testing.assert_array_equal(a[name], b[name])

    def test_matches_straight_line_recurrence(self):
        gen = np.random.default_rng(13)
        decay, eps = 0.9, 1e-8
        state = init_preconditioner(
            PreconditionerKind("adagrad_ema", ema_decay=decay, epsilon=eps), {"w": 4}
        )
        acc = np.zeros(4)
        ema = np.zeros(4)
        for t in range(1, 16):
            g = gen.standard_normal(4)
            out = precondition(state, {"w": g.copy()})
            acc += g * g
            ema = decay * ema + (1 - decay) * (g / (np.sqrt(acc) + eps))
            np.testing.assert_allclose(out["w"], ema / (1 - decay**t), rtol=1e-14)


class TestRmspropAdam:
    def test_rmsprop_matches_straight_line_recurrence(self):
        gen = np.random.default_rng(17)
        rho, eps = 0.99, 1e-8
        state = init_preconditioner(
            PreconditionerKind("rmsprop", second_moment_decay=rho, epsilon=eps), {"w": 3}
        )
        v = np.zeros(3)
        for _ in range(25):
            g = gen.standard_normal(3)
            out = precondition(state, {"w": g.copy()})
            v = rho * v + (1 - rho) * g * g
            np.testing.assert_allclose(out["w"], g / (np.sqrt(v) + eps), rtol=1e-14)

    def test_adam_matches_straight_line_recurrence(self):
        gen = np.random.default_rng(21)
        b1, b2, eps = 0.9, 0.999, 1e-8
        state = init_preconditioner(PreconditionerKind("adam"), {"w": 3})
        m = np.zeros(3)
        v = np.zeros(3)
        for t in range(1, 26):
            g = gen.standard_normal(3)
            out = precondition(state, {"w": g.copy()})
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            expected = (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            np.testing.assert_allclose(out["w"], expected, rtol=1e-14)

    def test_outputs_finite(self):
        gen = np.random.default_rng(23)
        for tag in ("identity_sgd", "adagrad", "adagrad_ema", "rmsprop", "adam"):
            state = init_preconditioner(PreconditionerKind(tag), SHAPES)
            for _ in range(30):
                g = {k: v * 10.0 ** gen.integers(-6, 7) for k, v in _grads(gen).items()}
                out = precondition(state, g)
                for arr in out.values():
                    assert np.isfinite(arr).all()

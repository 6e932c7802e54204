import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from utda.errors import InvalidArgument, InvalidState, NumericError
from utda.numcore import (Adam, MlpSpec, hard_threshold_topl, mlp_backward, mlp_forward, mlp_init,
                          rng_stream, sample_matrix, soft_threshold, softplus, softplus_inv,
                          spectral_norm_sq)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


# -- soft threshold

def test_soft_threshold_examples():
    np.testing.assert_array_equal(soft_threshold(np.array([1.5]), 0.5), [1.0])
    np.testing.assert_array_equal(soft_threshold(np.array([0.3, -0.3]), 0.5), [0.0, 0.0])
    np.testing.assert_allclose(soft_threshold(np.array([-2.0, 0.7]), np.array([1.0, 0.2])),
                               [-1.0, 0.5], atol=1e-15)


def test_soft_threshold_rejects_negative_beta():
    with pytest.raises(InvalidArgument):
        soft_threshold(np.ones(3), -0.1)


def test_soft_threshold_sign_of_zero():
    assert soft_threshold(np.array([0.0]), 0.0)[0] == 0.0


@given(arrays(np.float64, 16, elements=finite), arrays(np.float64, 16, elements=finite),
       st.floats(0, 50))
def test_soft_threshold_is_contraction(u, v, beta):
    d = np.linalg.norm(soft_threshold(u, beta) - soft_threshold(v, beta))
    assert d <= np.linalg.norm(u - v) * (1 + 1e-12) + 1e-12


@given(arrays(np.float64, 12, elements=finite), st.floats(0, 50))
def test_soft_threshold_matches_formula(v, beta):
    ref = np.sign(v) * np.maximum(np.abs(v) - beta, 0.0)
    np.testing.assert_allclose(soft_threshold(v, beta), ref, rtol=0, atol=1e-12)


# -- top-L

def test_topl_examples():
    vals, sup = hard_threshold_topl(np.array([3.0, -5.0, 1.0, 0.0]), 2)
    np.testing.assert_array_equal(vals, [3, -5, 0, 0])
    assert list(sup) == [0, 1]
    vals, sup = hard_threshold_topl(np.ones(3), 3)
    np.testing.assert_array_equal(vals, np.ones(3))
    assert list(sup) == [0, 1, 2]
    vals, sup = hard_threshold_topl(np.array([2.0, -2.0, 0.5]), 1)
    assert list(sup) == [0]


@pytest.mark.parametrize("L", [0, 4])
def test_topl_invalid_L(L):
    with pytest.raises(InvalidArgument):
        hard_threshold_topl(np.ones(3), L)


def test_topl_matches_stable_sort_oracle():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        # coarse values force plenty of ties and exact zeros
        v = rng.integers(-4, 5, n).astype(float)
        L = int(rng.integers(1, n + 1))
        vals, sup = hard_threshold_topl(v, L)
        oracle = np.sort(np.argsort(-np.abs(v), kind="stable")[:L])
        assert list(sup) == list(oracle)
        assert len(sup) == L
        ref = np.zeros(n)
        ref[oracle] = v[oracle]
        np.testing.assert_array_equal(vals, ref)


# -- spectral norm

def test_spectral_norm_examples():
    assert spectral_norm_sq(2 * np.eye(3)) == pytest.approx(4.0, rel=1e-12)
    assert spectral_norm_sq(np.diag([3.0, 1.0])) == pytest.approx(9.0, rel=1e-12)


def test_spectral_norm_matches_eigensolver():
    M = rng_stream(11).standard_normal((30, 100))
    ref = np.linalg.eigvalsh(M.T @ M)[-1]
    assert spectral_norm_sq(M) == pytest.approx(ref, rel=1e-8)


def test_spectral_norm_nonconvergence_carries_iterate():
    M = rng_stream(2).standard_normal((30, 100))
    with pytest.raises(NumericError) as exc:
        spectral_norm_sq(M, tol=0.0, max_iter=3)
    assert exc.value.last_iterate is not None


# -- sampling

def test_sample_matrix_column_normalized():
    M = sample_matrix(rng_stream(0), 30, 100, column_normalize=True)
    np.testing.assert_allclose(np.linalg.norm(M, axis=0), 1.0, atol=1e-12)


def test_sample_matrix_cauchy_median():
    M = sample_matrix(rng_stream(1), 1000, 1000, "standard_cauchy")
    assert abs(np.median(np.abs(M)) - 1.0) < 0.01


def test_sample_matrix_deterministic():
    a = sample_matrix(rng_stream(9, 3), 7, 5, "uniform", low=-1, high=2)
    b = sample_matrix(rng_stream(9, 3), 7, 5, "uniform", low=-1, high=2)
    assert a.tobytes() == b.tobytes()
    assert a.min() >= -1 and a.max() < 2


def test_rng_streams_differ_by_path():
    assert rng_stream(1, 1).random() != rng_stream(1, 2).random()


@pytest.mark.parametrize("kw", [dict(rows=0, cols=3), dict(rows=3, cols=3, dist="laplace"),
                                dict(rows=3, cols=3, dist="uniform")])
def test_sample_matrix_validation(kw):
    with pytest.raises(InvalidArgument):
        sample_matrix(rng_stream(0), **kw)


@given(st.floats(1e-6, 30))
def test_softplus_inverse(y):
    assert softplus(softplus_inv(y)) == pytest.approx(y, rel=1e-9)


# -- MLP

def test_mlp_zero_net():
    spec = MlpSpec((4, 3, 2))
    params = {k: np.zeros_like(v) for k, v in mlp_init(spec, rng_stream(0)).items()}
    out, _ = mlp_forward(spec, params, np.ones(4))
    np.testing.assert_array_equal(out, np.zeros(2))


def test_mlp_single_affine():
    spec = MlpSpec((2, 1))
    out, _ = mlp_forward(spec, {"W0": np.array([[1.0, 2.0]]), "b0": np.array([3.0])},
                         np.array([1.0, 1.0]))
    np.testing.assert_array_equal(out, [6.0])


def test_mlp_softplus_output_at_zero():
    spec = MlpSpec((2, 1), "softplus")
    out, _ = mlp_forward(spec, {"W0": np.zeros((1, 2)), "b0": np.zeros(1)}, np.ones(2))
    assert out[0] == pytest.approx(np.log(2.0), abs=1e-15)


def test_mlp_shape_errors():
    spec = MlpSpec((3, 2))
    params = mlp_init(spec, rng_stream(0))
    with pytest.raises(InvalidArgument):
        mlp_forward(spec, params, np.ones(4))
    with pytest.raises(InvalidArgument):
        mlp_forward(MlpSpec((3, 5)), params, np.ones(3))
    with pytest.raises(InvalidArgument):
        MlpSpec((3,))


def test_mlp_backward_finite_differences():
    rng = rng_stream(4)
    spec = MlpSpec((5, 7, 3))
    params = mlp_init(spec, rng)
    x = rng.standard_normal((4, 5))
    w = rng.standard_normal((4, 3))

    def f():
        return float(np.sum(mlp_forward(spec, params, x)[0] * w))

    _, cache = mlp_forward(spec, params, x)
    gx, grads = mlp_backward(cache, w)
    h = 1e-5
    worst = 0.0
    for name, P in params.items():
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + h
            fp = f()
            P[idx] = old - h
            fm = f()
            P[idx] = old
            fd = (fp - fm) / (2 * h)
            worst = max(worst, abs(fd - grads[name][idx]) / max(abs(fd), 1e-6))
    assert worst < 1e-5
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        assert gx[idx] == pytest.approx((fp - fm) / (2 * h), rel=1e-5, abs=1e-9)


def test_mlp_backward_zero_and_identity():
    spec = MlpSpec((3, 3))
    params = {"W0": np.eye(3), "b0": np.zeros(3)}
    _, cache = mlp_forward(spec, params, np.ones((2, 3)))
    gx, grads = mlp_backward(cache, np.zeros((2, 3)))
    assert all(not g.any() for g in grads.values()) and not gx.any()
    g = np.arange(6.0).reshape(2, 3)
    _, cache = mlp_forward(spec, params, np.ones((2, 3)))
    np.testing.assert_array_equal(mlp_backward(cache, g)[0], g)


def test_mlp_backward_stale_cache():
    spec = MlpSpec((3, 2))
    _, cache = mlp_forward(spec, mlp_init(spec, rng_stream(0)), np.ones(3))
    mlp_backward(cache, np.ones(2))
    with pytest.raises(InvalidState):
        mlp_backward(cache, np.ones(2))
    with pytest.raises(InvalidState):
        mlp_backward(object(), np.ones(2))


# -- Adam

def test_adam_zero_grad():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam()
    opt.step(p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])
    assert opt.t == 1


def test_adam_one_step_closed_form():
    p = {"w": np.array([0.0])}
    Adam().step(p, {"w": np.array([1.0])})
    assert p["w"][0] == pytest.approx(-1e-3 / (1.0 + 1e-8), rel=1e-12)


def test_adam_deterministic():
    runs = []
    for _ in range(2):
        rng = rng_stream(3)
        p = {"w": rng.standard_normal(5)}
        opt = Adam(lr=0.01)
        for _ in range(20):
            opt.step(p, {"w": rng.standard_normal(5)})
        runs.append(p["w"].tobytes())
    assert runs[0] == runs[1]


def test_adam_non_finite_names_block():
    with pytest.raises(NumericError, match="bad"):
        Adam().step({"bad": np.zeros(2)}, {"bad": np.array([np.nan, 0.0])})

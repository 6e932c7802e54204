import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from utda.errors import InvalidArgument
from utda.metrics import (DB_FLOOR, count_params_flops, delta_m, hit_rate, nmse_db,
                          relative_error_pr, s_metric, snr_db, table_descriptor, threshold_ops)

vec = arrays(np.float64, 8, elements=st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3))
scale = st.floats(0.01, 100) | st.floats(-100, -0.01)


# -- NMSE

def test_nmse_examples():
    x = np.array([1.0, 0.0])
    assert nmse_db(x, x) == DB_FLOOR == -100.0
    assert nmse_db(x, np.array([0.5, 0.0])) == pytest.approx(-6.0206, abs=1e-4)
    assert nmse_db(x, np.zeros(2)) == 0.0


def test_nmse_zero_reference():
    with pytest.raises(InvalidArgument):
        nmse_db(np.zeros(3), np.ones(3))


@given(vec, vec, scale)
def test_nmse_joint_scale_invariance(x, xh, t):
    assert nmse_db(t * x, t * xh) == pytest.approx(nmse_db(x, xh), abs=1e-9)


# -- hit rate

def test_hit_rate_examples():
    x = np.array([1.0, 0.0, 2.0, 0.0])
    assert hit_rate(x, x, 0.3) == 1.0
    assert hit_rate(x, np.array([1.2, 0.0, 1.0, 0.0]), 0.3) == 0.5
    assert hit_rate(x, np.zeros(4), 0.3) == 0.0


def test_hit_rate_uses_magnitude_for_negative_entries():
    x = np.array([-1.0, 0.0])
    assert hit_rate(x, np.array([-0.98, 0.0]), 0.05) == 1.0


def test_hit_rate_rejects_L_zero():
    with pytest.raises(InvalidArgument):
        hit_rate(np.ones(3), np.ones(3), 0.3, L=0)


# -- relative error

def test_relative_error_examples():
    x = np.array([1.0, 0.0])
    assert relative_error_pr(x, -x) == -100.0
    assert relative_error_pr(x, np.zeros(2)) == 0.0
    assert relative_error_pr(x, np.array([0.9, 0.0])) == pytest.approx(-20.0, abs=1e-9)


def test_relative_error_zero_reference():
    with pytest.raises(InvalidArgument):
        relative_error_pr(np.zeros(2), np.ones(2))


@given(vec, vec, scale)
def test_relative_error_scale_and_sign_invariance(x, xh, t):
    ref = relative_error_pr(x, xh)
    assert relative_error_pr(t * x, t * xh) == pytest.approx(ref, abs=1e-9)
    assert relative_error_pr(x, -xh) == pytest.approx(ref, abs=1e-9)


# -- delta_m

def test_delta_m_examples():
    same = {"W": np.ones((2, 2))}
    assert delta_m([same, same])["W"] == 0.0
    assert delta_m([{"a": np.array(1.0)}, {"a": np.array(3.0)}])["a"] == pytest.approx(0.5)


def test_delta_m_errors():
    with pytest.raises(InvalidArgument):
        delta_m([{"a": np.ones(2)}, {"a": np.ones(3)}])
    with pytest.raises(InvalidArgument):
        delta_m([{"a": np.ones(2)}, {"b": np.ones(2)}])
    with pytest.raises(InvalidArgument):
        delta_m([{"a": np.ones(2)}])


@given(st.lists(arrays(np.float64, 4, elements=st.floats(0.5, 5)), min_size=2, max_size=5),
       st.floats(0.01, 100), st.randoms())
def test_delta_m_scale_invariant_and_permutation_equivariant(blocks, t, rnd):
    doms = [{"a": b} for b in blocks]
    base = delta_m(doms)["a"]
    assert delta_m([{"a": t * b} for b in blocks])["a"] == pytest.approx(base, rel=1e-6, abs=1e-9)
    rnd.shuffle(doms)
    assert delta_m(doms)["a"] == pytest.approx(base, rel=1e-12, abs=1e-15)


# -- S(W)

def test_s_metric_examples():
    assert s_metric(np.eye(3)) == pytest.approx(np.sqrt(3))
    W = np.random.default_rng(0).standard_normal((5, 4))
    assert s_metric(3.7 * W) == pytest.approx(s_metric(W))
    with pytest.raises(InvalidArgument):
        s_metric(np.zeros((2, 2)))


# -- complexity

def test_table_counts():
    lista = count_params_flops(table_descriptor("lista", 784, 500, 15))
    ptda = count_params_flops(table_descriptor("ptda", 784, 500, 15, (751, 375, 125, 64)))
    ddtda = count_params_flops(table_descriptor("ddtda", 784, 500, 15, (750, 375, 125, 64)))
    assert lista == (1_007_440, 15_099_840)
    assert ptda[0] == 1_721_697
    assert ddtda[0] == 1_720_070
    assert abs(lista[1] - 15.098e6) / 15.098e6 < 2e-4


def test_threshold_ops_reported_separately():
    assert threshold_ops(table_descriptor("lista", 784, 500, 15)) == 15 * 784


def test_counts_match_serialized_scalars():
    from utda.modelio import model_bytes, model_from_bytes
    from utda.na_lista import CsProblem, lista_init
    from utda.numcore import rng_stream, sample_matrix
    A = sample_matrix(rng_stream(0), 20, 40, column_normalize=True)
    for source in ("fixed", "ptda", "ddtda"):
        m = lista_init(CsProblem.from_matrix(A), 5, source, rng=rng_stream(1))
        again = model_from_bytes(model_bytes(m))
        assert count_params_flops(m)[0] == m.param_count() == again.param_count()


def test_table_descriptor_errors():
    with pytest.raises(InvalidArgument):
        table_descriptor("cnn", 10, 5, 2)
    with pytest.raises(InvalidArgument):
        table_descriptor("ptda", 10, 5, 2)


def test_snr_db_zero():
    clean = np.array([[1.0, 1.0]])
    assert snr_db(clean, clean + np.array([[1.0, -1.0]]))[0] == pytest.approx(0.0)

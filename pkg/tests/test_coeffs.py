import math

import numpy as np
import pytest

from smwfb import (
    ArModel,
    CoefficientEstimator,
    CoefficientSet,
    ExcitationSpec,
    FilterBankCoefficients,
    WhitenerConfig,
    apply_direct_form,
    assemble_direct_form,
    generate_ar,
    solve_prefilter_a,
    whiten,
)
from smwfb.oracle import delay_rows, ls_filter_coeffs


def _estimate(x, cfg, **kw):
    est = CoefficientEstimator(cfg, **kw)
    out, st = whiten(x, cfg, on_block=est.update)
    return est, out, st


def _ar2(n, seed=0, rho=0.9, theta=math.pi / 3):
    return generate_ar(ArModel(rho, theta), ExcitationSpec.gaussian(seed=seed), n).samples


def test_zero_coefficients_give_identity_bank():
    cfg = WhitenerConfig(2, 4)
    fb = assemble_direct_form(CoefficientSet.zeros(2, 4), cfg)
    np.testing.assert_array_equal(fb.A, np.eye(2))
    assert len(fb.H) == 2 and all(not h.any() for h in fb.H)


def test_identity_bank_passes_polyphase_samples():
    fb = FilterBankCoefficients(3, 3, np.eye(3), (np.zeros((3, 3)),))
    x = np.arange(1.0, 11.0)  # x(0..9)
    out = apply_direct_form(fb, x)
    assert out.shape == (4, 3)
    np.testing.assert_array_equal(out[2], [x[6], x[5], x[4]])
    np.testing.assert_array_equal(out[0], [x[0], 0.0, 0.0])


def test_impulse_response_reads_out_the_matrices():
    rng = np.random.default_rng(1)
    A = np.triu(rng.standard_normal((2, 2)), 1) + np.eye(2)
    H = tuple(rng.standard_normal((2, 2)) for _ in range(3))
    fb = FilterBankCoefficients(2, 6, A, H)
    out = apply_direct_form(fb, np.r_[1.0, np.zeros(10)])
    np.testing.assert_array_equal(out[0], A[:, 0])
    for p in range(1, 4):
        np.testing.assert_array_equal(out[p], H[p - 1][:, 0])
    assert not out[4:].any()


def test_lag_matrices_follow_index_map():
    x = _ar2(1 + 2 * 300)
    cfg = WhitenerConfig(2, 4)
    est, _, st = _estimate(x, cfg)
    fb = est.direct_form()
    for i in range(2):
        h, a, _ = ls_filter_coeffs(x, 2, i, 4, st.block)
        for p in (1, 2):
            np.testing.assert_allclose(fb.H[p - 1][i], h[(p - 1) * 2: p * 2], rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(fb.a(i), a, rtol=1e-6, atol=1e-9)


def test_json_round_trip():
    x = _ar2(1 + 3 * 100, seed=2)
    est, _, _ = _estimate(x, WhitenerConfig(3, 6))
    fb = est.direct_form()
    back = FilterBankCoefficients.from_json(fb.to_json())
    np.testing.assert_array_equal(back.A, fb.A)
    for a, b in zip(back.H, fb.H):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        FilterBankCoefficients.from_json(fb.to_json().replace('"layout_version": 1', '"layout_version": 9'))


def test_direct_form_validation():
    with pytest.raises(ValueError):
        FilterBankCoefficients(2, 2, np.array([[1.0, 0.0], [0.5, 1.0]]), (np.zeros((2, 2)),))
    with pytest.raises(ValueError):
        FilterBankCoefficients(2, 4, np.eye(2), (np.zeros((2, 2)),))
    with pytest.raises(ValueError):
        assemble_direct_form(CoefficientSet.zeros(2, 3), WhitenerConfig(2, 3))


def test_converged_bank_reproduces_lattice_outputs():
    x = _ar2(1 + 2 * 4000, seed=3)
    cfg = WhitenerConfig(2, 4, scalar_section=False)
    est, out, _ = _estimate(x, cfg)
    direct = apply_direct_form(est.direct_form(), x)
    # the final block uses exactly the final coefficients
    np.testing.assert_allclose(direct[-1], out[-1], rtol=1e-8)
    tail = slice(-len(out) // 10, None)
    err = np.sqrt(np.mean((direct[tail] - out[tail]) ** 2) / np.mean(out[tail] ** 2))
    assert err <= 1e-2


def test_order_recursion_matches_oracle_at_every_order():
    x = _ar2(1 + 3 * 60, seed=4)
    cfg = WhitenerConfig(3, 5)
    est, _, st = _estimate(x, cfg)
    for i in range(3):
        for p in range(6):
            h, a, _ = ls_filter_coeffs(x, 3, i, p, st.block)
            np.testing.assert_allclose(est.coeffs.h(i, p), h, rtol=1e-6, atol=1e-9)
            np.testing.assert_allclose(est.coeffs.a(i, p), a, rtol=1e-6, atol=1e-9)


def test_residual_identity():
    M, N = 3, 4
    x = _ar2(1 + M * 80, seed=5)
    est, out, st = _estimate(x, WhitenerConfig(M, N))
    n = st.block
    for i in range(M):
        X = delay_rows(x, M, n, range(M, M + N))[:, -1]
        C = delay_rows(x, M, n, range(i + 1, M))[:, -1]
        e = x[M * n - i] + est.coeffs.h(i) @ X + est.coeffs.a(i) @ C
        assert e == pytest.approx(out[-1, i], rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("alpha", [0.1, 10.0])
def test_coefficients_are_scale_free(alpha):
    x = _ar2(1 + 2 * 200, seed=6)
    cfg = WhitenerConfig(2, 4)
    e1, _, _ = _estimate(x, cfg, a_interval=1)
    e2, _, _ = _estimate(alpha * x, cfg, a_interval=1)
    for i in range(2):
        np.testing.assert_allclose(e2.coeffs.h(i), e1.coeffs.h(i), rtol=1e-8, atol=1e-12)
        np.testing.assert_allclose(e2.coeffs.a(i), e1.coeffs.a(i), rtol=1e-8, atol=1e-12)
        np.testing.assert_allclose(e2.a_direct[i], e1.a_direct[i], rtol=1e-8, atol=1e-12)


def test_white_input_gives_small_coefficients():
    n = 5000
    x = np.random.default_rng(7).standard_normal(1 + 2 * n)
    est, _, _ = _estimate(x, WhitenerConfig(2, 4), a_interval=n)
    for i in range(2):
        assert np.max(np.abs(est.coeffs.h(i))) <= 3 / math.sqrt(n)
        assert np.max(np.abs(est.a_direct[i]), initial=0.0) <= 3 / math.sqrt(n)


def test_full_rate_section_learns_ar1():
    rng = np.random.default_rng(8)
    w = rng.standard_normal(1001)
    x = np.empty_like(w)
    x[0] = w[0]
    for k in range(1, w.size):
        x[k] = w[k] + 0.5 * x[k - 1]
    est, _, _ = _estimate(x, WhitenerConfig(2, 2))
    assert est.coeffs.c[1][0] == pytest.approx(-0.5, abs=0.05)


def test_direct_cross_band_solve():
    M, n = 2, 150
    x = _ar2(1 + M * n, seed=9)
    h, a, _ = ls_filter_coeffs(x, M, 0, 4, n)
    a_direct, deficient = solve_prefilter_a(x, h, M, 0)
    assert not deficient
    np.testing.assert_allclose(a_direct, a, rtol=1e-8)
    assert solve_prefilter_a(x, np.zeros(4), M, M - 1)[0].size == 0


def test_accumulator_matches_batch_solve():
    M, N = 3, 3
    x = _ar2(1 + M * 64, seed=10)
    est, _, st = _estimate(x, WhitenerConfig(M, N), a_interval=1)
    for i in range(M):
        a, _ = solve_prefilter_a(x, est.coeffs.h(i), M, i, st.block)
        np.testing.assert_allclose(est.a_direct[i], a, rtol=1e-8, atol=1e-12)
    assert est.a_direct[M - 1].size == 0


def test_trajectory_csv():
    x = _ar2(1 + 2 * 5, seed=11)
    est, _, _ = _estimate(x, WhitenerConfig(2, 2), record=True)
    lines = est.trajectory_csv().splitlines()
    assert lines[0] == "block,channel,order,value"
    assert len(lines) == 1 + 6 * 2 * 2


def test_block_sequence_is_checked():
    cfg = WhitenerConfig(2, 2)
    est = CoefficientEstimator(cfg)
    x = _ar2(11, seed=12)
    _, st = whiten(x, cfg)
    with pytest.raises(ValueError):
        est.update(st)

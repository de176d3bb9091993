"""Acceptance criteria, each at its stated tolerance.

Every test records one verdict through the ``record`` fixture; the terminal
summary prints a PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest

from smwfb import WhitenerConfig, WhitenerState, op_counters
from smwfb.experiments import default_config, run_experiment
from smwfb.lattice import reference_op_counts
from smwfb.metrics import convergence_report
from smwfb.oracle import check_inner_product_update, check_pseudo_inverse_update, check_space_identities
from smwfb.verification import verify_coefficients, verify_lattice

SWEEP = [(M, N) for M in (2, 3, 4) for N in range(1, 9)]


def test_criterion_1_oracle_equivalence(record):
    t = time.perf_counter()
    reports = [verify_lattice(M, N, blocks=32, trials=20, seed=0) for M, N in SWEEP]
    elapsed = time.perf_counter() - t
    worst = max(r["max_rel_err"] for r in reports)
    bad = [(r["M"], r["N"], r["failing"]) for r in reports if not r["passed"]]
    ok = not bad and elapsed <= 30.0
    record(1, ok, f"max rel err {worst:.2e} over {len(SWEEP)} shapes, {elapsed:.1f} s")
    assert not bad, bad
    assert elapsed <= 30.0


def test_criterion_2_coefficient_equivalence(record):
    t = time.perf_counter()
    reports = [verify_coefficients(M, N, blocks=32, trials=20, seed=0) for M, N in SWEEP]
    elapsed = time.perf_counter() - t
    worst = max(max(r["worst"].values()) for r in reports)
    ok = all(r["passed"] for r in reports) and elapsed <= 30.0
    record(2, ok, f"max rel err {worst:.2e}, {elapsed:.1f} s")
    assert all(r["passed"] for r in reports)
    assert elapsed <= 30.0


@pytest.mark.parametrize("theta,published", [(math.pi / 2.8, 14.5564), (math.pi / 1.75, 10.5967)],
                         ids=["pi/2.8", "pi/1.75"])
def test_criterion_3_coding_gain_table(record, theta, published):
    t = time.perf_counter()
    summary = run_experiment(default_config(1, theta=theta, seeds=10, samples=20001))
    elapsed = time.perf_counter() - t
    mean = summary["rows"][0]["mean_db"]
    ok = abs(mean - published) <= 1.5 and elapsed <= 60.0
    record(3, ok, f"theta={theta:.4f}: {mean:.3f} dB vs {published} dB")
    assert abs(mean - published) <= 1.5
    assert elapsed <= 60.0


def test_criterion_4_gain_flat_in_M(record):
    t = time.perf_counter()
    summary = run_experiment(default_config(3, sweep=(2, 3, 4, 5, 6)))
    elapsed = time.perf_counter() - t
    means = [r["mean_db"] for r in summary["rows"]]
    ok = all(abs(m - 11.8) <= 1.5 for m in means) and summary["spread_db"] <= 1.5 and elapsed <= 180.0
    record(4, ok, "means " + ", ".join(f"{m:.2f}" for m in means) + f" dB, spread {summary['spread_db']:.3f} dB")
    assert all(abs(m - 11.8) <= 1.5 for m in means)
    assert summary["spread_db"] <= 1.5
    assert elapsed <= 180.0


def test_criterion_5_convergence(record):
    summary = run_experiment(default_config(4, seeds=5))
    blocks = [r["converged_block"] for r in summary["runs"]]
    ok = all(b is not None and 0 <= b <= 40 for b in blocks)
    record(5, ok, "5% band reached at blocks " + ", ".join(map(str, blocks)) + " (need <= 40)")
    assert ok


def test_criterion_6_whitening(record):
    summary = run_experiment(default_config(5))
    rows = summary["signals"]
    assert [r["signal"] for r in rows] == list(range(1, 10))
    flat = min(min(r["output_flatness"]) for r in rows)
    rho = max(max(r["max_output_autocorr"]) for r in rows)
    gain = all(min(r["output_flatness"]) > r["input_flatness"] for r in rows)
    ok = flat >= 0.9 and rho <= 0.1 and gain
    record(6, ok, f"min output flatness {flat:.3f}, max |autocorr| {rho:.3f}, above input: {gain}")
    assert ok


def test_criterion_7_am_gm(record):
    summary = run_experiment(default_config(3, sweep=(2, 3, 4, 5, 6)))
    ratio = max(r["max_am_gm"] for r in summary["rows"])
    record(7, ratio <= 1.15, f"max AM/GM ratio {ratio:.4f}")
    assert ratio <= 1.15


def test_criterion_8_update_identities(record):
    rng = np.random.default_rng(8)
    worst = {"inner_product": 0.0, "space": 0.0, "pseudo_inverse": 0.0}
    for _ in range(100):
        L = int(rng.integers(3, 13))
        k = int(rng.integers(0, L - 1))
        nu, x, w, nxt = rng.standard_normal((4, L))
        V = rng.standard_normal((k, L))
        lhs, rhs, _ = check_inner_product_update(nu, V, w, nxt)
        worst["inner_product"] = max(worst["inner_product"], abs(lhs - rhs))
        worst["space"] = max(worst["space"], check_space_identities(nu, x, V, w)["max"])
        n = int(rng.integers(1, L))
        Vn = rng.standard_normal((n, L))
        lhs, rhs = check_pseudo_inverse_update(rng.standard_normal(L), Vn, x)
        worst["pseudo_inverse"] = max(worst["pseudo_inverse"], float(np.max(np.abs(lhs - rhs))))
    ok = max(worst.values()) <= 1e-10
    record(8, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_9_op_counts(record):
    rng = np.random.default_rng(9)
    details, ok = [], True
    for M in (2, 4):
        for N in (4, 8):
            counts = set()
            for trial in range(3):
                st = WhitenerState(WhitenerConfig(M, N, scalar_section=False))
                st.push_origin(rng.standard_normal() if trial else 0.0)
                for _ in range(20):
                    st.process_block(rng.standard_normal(M) * (trial + 1))
                    c = op_counters(st)
                    counts.add((c["adds"], c["mults"]))
            ref = reference_op_counts(M, N)
            adds, mults = counts.pop()
            ok &= not counts  # data independent
            ok &= 0.5 <= adds / ref["adds"] <= 2.0 and 0.5 <= mults / ref["mults"] <= 2.0
            details.append(f"M{M}N{N} {adds}/{ref['adds']} adds {mults}/{ref['mults']} mults")
    record(9, ok, "; ".join(details))
    assert ok

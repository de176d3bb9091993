"""Lattice-versus-oracle equivalence runs.

Each quantity is compared as ``|lattice - oracle| / max(|oracle|, floor)``
with ``floor = abs_tol / rel_tol``, so a single threshold ``rel_tol`` enforces
the relative bound away from zero and the absolute bound ``abs_tol`` near it.
"""

from __future__ import annotations

import json

import numpy as np

from .coeffs import CoefficientEstimator
from .lattice import WhitenerConfig, WhitenerState, snapshot_registers
from .oracle import ls_filter_coeffs, oracle_registers

__all__ = ["verify_lattice", "verify_coefficients", "LIMITS", "FAULTS"]

LIMITS = {"M": 6, "N": 12, "blocks": 128}

# register paths accepted by the fault-injection hook
FAULTS = (
    "scalar.e", "scalar.r", "scalar.delta", "scalar.R_e", "scalar.R_r", "scalar.D_er",
    "prefilter.epsilon", "prefilter.gamma", "prefilter.delta_hat",
    "prefilter.R_epsilon", "prefilter.R_gamma", "prefilter.D_epsilon_gamma",
    "channel.e", "channel.r", "channel.delta", "channel.R_e", "channel.R_r", "channel.D_er",
)


def _check_bounds(M, N, blocks, trials):
    if not 2 <= M <= LIMITS["M"]:
        raise ValueError(f"M must lie in 2..{LIMITS['M']}")
    if not 1 <= N <= LIMITS["N"]:
        raise ValueError(f"N must lie in 1..{LIMITS['N']}")
    if not 1 <= blocks <= LIMITS["blocks"]:
        raise ValueError(f"blocks must lie in 1..{LIMITS['blocks']}")
    if trials < 1:
        raise ValueError("trials must be >= 1")


def _draw(M, blocks, trials, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((trials, 1 + M * blocks))


def _flatten(snap, prefix=""):
    """``{"channel.R_e": array(..., M, N+1)}``-style view of a register dump."""
    out = {}
    if "scalar" in snap:
        for k, v in snap["scalar"].items():
            out[f"scalar.{k}"] = [np.asarray(v, dtype=np.float64)]
    for sec in ("prefilter", "channel"):
        for k in snap[sec][0]:
            out[f"{sec}.{k}"] = [np.asarray(ch[k], dtype=np.float64) for ch in snap[sec]]
    return out


def verify_lattice(M: int, N: int, blocks: int = 32, trials: int = 20, seed: int = 0, *,
                   rel_tol: float = 1e-8, abs_tol: float = 1e-10, inject: str | None = None) -> dict:
    """Compare every register with the projection oracle.

    Every block from the end of the exact start-up on is checked; before that
    the data matrix is a rank-deficient staircase and float64 projections are
    not a trustworthy reference.

    ``inject`` names a register path from :data:`FAULTS`; that lattice value
    is corrupted in trial 0 at the last block, which must make the run fail.
    """
    _check_bounds(M, N, blocks, trials)
    if inject is not None and inject not in FAULTS:
        raise ValueError(f"unknown fault target {inject!r}")
    x = _draw(M, blocks, trials, seed)
    cfg = WhitenerConfig(M, N)
    states = [WhitenerState(cfg) for _ in range(trials)]
    floor = abs_tol / rel_tol
    worst = {}
    first = None
    for n in range(blocks + 1):
        for t, st in enumerate(states):
            if n == 0:
                st.push_origin(x[t, 0])
            else:
                st.process_block(x[t, 1 + M * (n - 1): 1 + M * n])
        if not all(st.initialized for st in states):
            continue
        if first is None:
            first = n
        snaps = [_flatten(snapshot_registers(st)) for st in states]
        ref = _flatten(oracle_registers(x[:, : 1 + M * n], M, N, n))
        for key, ref_parts in ref.items():
            for ch, o in enumerate(ref_parts):
                lat = np.stack([s[key][ch] for s in snaps])
                if inject == key and n == blocks and ch == 0:
                    lat = lat.copy()
                    lat[0, -1] += 1e-3 * (1.0 + abs(lat[0, -1]))
                err = np.abs(lat - o) / np.maximum(np.abs(o), floor)
                j = np.unravel_index(int(np.argmax(err)), err.shape)
                e = float(err[j])
                if key not in worst or e > worst[key]["rel_err"]:
                    worst[key] = {
                        "rel_err": e, "block": n, "trial": int(j[0]), "channel": ch, "order": int(j[-1]),
                        "lattice": float(lat[j]), "oracle": float(o[j]),
                    }
    if first is None:
        raise ValueError("run too short to finish the exact start-up")
    max_err = max(w["rel_err"] for w in worst.values())
    failing = sorted(k for k, w in worst.items() if w["rel_err"] > rel_tol)
    return {
        "M": M, "N": N, "blocks": blocks, "trials": trials, "seed": seed, "first_block": first,
        "rel_tol": rel_tol, "abs_tol": abs_tol, "max_rel_err": max_err,
        "passed": not failing, "failing": failing, "worst": worst,
    }


def verify_coefficients(M: int, N: int, blocks: int = 32, trials: int = 20, seed: int = 0, *,
                        rel_tol: float = 1e-6) -> dict:
    """Lattice-derived ``h_i`` and directly solved ``a_i`` versus the oracle.

    Instances whose regressor matrix is rank deficient at a block are skipped
    there, since the least-squares weights are not unique.
    """
    _check_bounds(M, N, blocks, trials)
    x = _draw(M, blocks, trials, seed)
    cfg = WhitenerConfig(M, N)
    worst = {"h": 0.0, "a": 0.0, "a_lattice": 0.0}
    checked = 0
    states = [WhitenerState(cfg) for _ in range(trials)]
    ests = [CoefficientEstimator(cfg, a_interval=1) for _ in range(trials)]
    for n in range(blocks + 1):
        for t, (st, est) in enumerate(zip(states, ests)):
            if n == 0:
                st.push_origin(x[t, 0])
            else:
                st.process_block(x[t, 1 + M * (n - 1): 1 + M * n])
            est.update(st)
        for i in range(M):
            # one oracle solve for all trials at this block
            h, a, rank = ls_filter_coeffs(x[:, : 1 + M * n], M, i, N, n)
            for t in np.flatnonzero(rank >= M - 1 - i + N):
                checked += 1
                ht, at = h[t], a[t]
                scale = max(1.0, float(np.max(np.abs(ht), initial=0.0)), float(np.max(np.abs(at), initial=0.0)))
                cs, est = ests[t].coeffs, ests[t]
                worst["h"] = max(worst["h"], float(np.max(np.abs(cs.h(i) - ht), initial=0.0)) / scale)
                worst["a_lattice"] = max(worst["a_lattice"], float(np.max(np.abs(cs.a(i) - at), initial=0.0)) / scale)
                worst["a"] = max(worst["a"], float(np.max(np.abs(est.a_direct[i] - at), initial=0.0)) / scale)
    return {
        "M": M, "N": N, "blocks": blocks, "trials": trials, "checked": checked,
        "rel_tol": rel_tol, "worst": worst, "passed": checked > 0 and max(worst.values()) <= rel_tol,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)

"""Brute-force projection-operator reference.

Everything here is dense linear algebra over explicit data vectors: the
projection onto the row space of ``V`` is ``pinv(V) @ V`` and all residuals
are row vectors times ``I - P``. It is slow (cubic in the block count) and
exists only to check the lattice and the coefficient recursions.

All functions accept a leading batch axis on the signal so many random
trials can be checked with one batched SVD.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .signals import Signal

__all__ = [
    "RCOND",
    "ProjectionResult",
    "projector",
    "perp",
    "residual_projection",
    "delay_rows",
    "table1_quantity",
    "error_vector",
    "oracle_registers",
    "ls_filter_coeffs",
    "check_inner_product_update",
    "check_space_identities",
    "check_pseudo_inverse_update",
    "VerificationReport",
]

# singular values below RCOND * sigma_max count as zero
RCOND = 1e-12


def projector(V: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the row space of ``V`` (shape ``(..., r, L)``)."""
    V = np.asarray(V, dtype=np.float64)
    L = V.shape[-1]
    if V.shape[-2] == 0:
        return np.zeros(V.shape[:-2] + (L, L))
    return np.linalg.pinv(V, rcond=RCOND) @ V


def perp(V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    L = V.shape[-1]
    return np.eye(L) - projector(V)


def _rank(V: np.ndarray):
    """Numerical rank; an int, or an int array over leading batch axes."""
    batch = V.shape[:-2]
    if V.shape[-2] == 0 or V.shape[-1] == 0:
        return np.zeros(batch, dtype=int) if batch else 0
    s = np.linalg.svd(V, compute_uv=False)
    r = np.sum(s > RCOND * s[..., :1], axis=-1)
    return r if batch else int(r)


@dataclass
class ProjectionResult:
    """Least-squares fit ``residual = v + params @ V`` with residual orthogonal to ``V``."""

    residual: np.ndarray
    params: np.ndarray
    rank: int


def residual_projection(v, V) -> ProjectionResult:
    v = np.asarray(v, dtype=np.float64)
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    if V.size == 0:
        return ProjectionResult(v.copy(), np.zeros(0), 0)
    if V.shape[1] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: v has {v.shape[-1]} entries, V rows have {V.shape[1]}")
    params = -v @ np.linalg.pinv(V, rcond=RCOND)
    return ProjectionResult(v + params @ V, params, _rank(V))


def delay_rows(x: np.ndarray, M: int, n: int, delays) -> np.ndarray:
    """Rows ``x(M*k - d)`` for ``k = 0..n`` and each ``d`` in ``delays``.

    ``x`` may carry leading batch axes; the result has shape
    ``x.shape[:-1] + (len(delays), n + 1)``.
    """
    x = np.asarray(x, dtype=np.float64)
    delays = np.asarray(list(delays), dtype=np.int64).reshape(-1)
    idx = M * np.arange(n + 1)[None, :] - delays[:, None]
    if idx.size and idx.max() >= x.shape[-1]:
        raise ValueError(f"insufficient samples: need x({idx.max()}), have {x.shape[-1]}")
    out = np.where(idx >= 0, x[..., np.clip(idx, 0, None)], 0.0)
    return out


def _pin(n: int) -> np.ndarray:
    p = np.zeros(n + 1)
    p[-1] = 1.0
    return p


def _as_array(data) -> np.ndarray:
    return data.samples if isinstance(data, Signal) else np.asarray(data, dtype=np.float64)


def _vectors(kind: str, x, M: int, i: int, order: int, n: int):
    """(nu, U, w) of the residual definition, as explicit arrays."""
    pi = _pin(n)
    batch = x.shape[:-1]
    pi_b = np.broadcast_to(pi, batch + (n + 1,))
    if kind in ("epsilon", "gamma", "delta_hat"):
        U = delay_rows(x, M, n, range(i + 1, i + order + 1))
        if kind == "epsilon":
            nu = delay_rows(x, M, n, [i])[..., 0, :]
        elif kind == "gamma":
            nu = delay_rows(x, M, n, [i + order + 1])[..., 0, :]
        else:
            nu = pi_b
        return nu, U, pi_b
    if kind in ("e", "r", "delta"):
        # full-rate section: M = 1, time index n
        U = delay_rows(x, 1, n, range(1, order + 1))
        if kind == "e":
            nu = delay_rows(x, 1, n, [0])[..., 0, :]
        elif kind == "r":
            nu = delay_rows(x, 1, n, [order + 1])[..., 0, :]
        else:
            nu = pi_b
        return nu, U, pi_b
    if kind in ("e_i", "r_i", "delta_i"):
        Pc = perp(delay_rows(x, M, n, range(i + 1, M)))
        U = delay_rows(x, M, n, range(M, M + order)) @ Pc
        if kind == "e_i":
            raw = delay_rows(x, M, n, [i])[..., 0, :]
        elif kind == "r_i":
            # backward target is the next lag row, delay M + order
            raw = delay_rows(x, M, n, [M + order])[..., 0, :]
        else:
            raw = pi_b
        nu = np.einsum("...l,...lk->...k", raw, Pc)
        w = np.einsum("...l,...lk->...k", pi_b, Pc)
        return nu, U, w
    raise ValueError(f"unknown quantity kind {kind!r}")


def error_vector(kind: str, data, M: int, i: int, order: int, n: int) -> np.ndarray:
    """Full residual history ``nu P_perp[U]`` of a named residual quantity."""
    x = _as_array(data)
    nu, U, _ = _vectors(kind, x, M, i, order, n)
    return np.einsum("...l,...lk->...k", nu, perp(U))


def table1_quantity(kind: str, data, M: int, i: int, order: int, n: int):
    """``nu P_perp[U] w^T`` for the named auxiliary quantity at block ``n``.

    kinds: ``epsilon``, ``gamma``, ``delta_hat`` (cross-band, order ``q``),
    ``e_i``, ``r_i``, ``delta_i`` (channel, order ``p``), and the full-rate
    ``e``, ``r``, ``delta`` where ``n`` is the sample time.
    """
    x = _as_array(data)
    if order < 0 or not 0 <= i:
        raise ValueError("order and channel index must be non-negative")
    nu, U, w = _vectors(kind, x, M, i, order, n)
    val = np.einsum("...l,...lk,...k->...", nu, perp(U), w)
    return float(val) if np.ndim(val) == 0 else val


def _section(x, M, n, target_delays, window, likelihood_only=False):
    """Residual vectors for several targets on one window, plus likelihood."""
    Pp = perp(delay_rows(x, M, n, window))
    T = delay_rows(x, M, n, target_delays)
    res = T @ Pp
    lik = Pp[..., -1, -1]
    return res, lik


def oracle_registers(data, M: int, N: int, n: int, scalar: bool = True) -> dict:
    """Every register of the whitener at block ``n``, recomputed from scratch.

    Mirrors :func:`smwfb.lattice.snapshot_registers`: residuals are the
    latest entries of the error vectors, ``R``/``D`` are inner products of
    whole error vectors. Channel-section quantities use the nested
    constrained projection literally.
    """
    x = _as_array(data)
    out = {"M": M, "N": N, "block": n, "prefilter": [], "channel": []}
    if scalar:
        t = M * n
        cols = {k: [] for k in ("e", "r", "delta", "R_e", "R_r", "D_er")}
        for p in range(N + 1):
            ev = error_vector("e", x, 1, 0, p, t)
            rv = error_vector("r", x, 1, 0, p, t)
            cols["e"].append(ev[..., -1])
            cols["r"].append(rv[..., -1])
            cols["delta"].append(table1_quantity("delta", x, 1, 0, p, t))
            cols["R_e"].append(np.sum(ev * ev, -1))
            cols["R_r"].append(np.sum(rv * rv, -1))
            cols["D_er"].append(np.sum(ev * rv, -1))
        out["scalar"] = {k: np.stack(v, -1) for k, v in cols.items()}
    for i in range(M):
        cols = {k: [] for k in ("epsilon", "gamma", "delta_hat", "R_epsilon", "R_gamma", "D_epsilon_gamma")}
        for q in range(M - i):
            window = range(i + 1, i + q + 1)
            res, lik = _section(x, M, n, [i, i + q + 1], window)
            ev, gv = res[..., 0, :], res[..., 1, :]
            cols["epsilon"].append(ev[..., -1])
            cols["gamma"].append(gv[..., -1])
            cols["delta_hat"].append(lik)
            cols["R_epsilon"].append(np.sum(ev * ev, -1))
            cols["R_gamma"].append(np.sum(gv * gv, -1))
            cols["D_epsilon_gamma"].append(np.sum(ev * gv, -1))
        out["prefilter"].append({k: np.stack(v, -1) for k, v in cols.items()})
        cols = {k: [] for k in ("e", "r", "delta", "R_e", "R_r", "D_er")}
        # nested constrained projection P_perp[C] P_perp[X P_perp[C]]
        Pc = perp(delay_rows(x, M, n, range(i + 1, M)))
        T = delay_rows(x, M, n, range(i, M + N + 1)) @ Pc
        lag = T[..., M - i:, :]
        pin_c = Pc[..., -1, :]
        for p in range(N + 1):
            P = perp(lag[..., :p, :])
            ev = np.einsum("...l,...lk->...k", T[..., 0, :], P)
            rv = np.einsum("...l,...lk->...k", lag[..., p, :], P)
            cols["e"].append(ev[..., -1])
            cols["r"].append(rv[..., -1])
            cols["delta"].append(np.einsum("...k,...kl,...l->...", pin_c, P, pin_c))
            cols["R_e"].append(np.sum(ev * ev, -1))
            cols["R_r"].append(np.sum(rv * rv, -1))
            cols["D_er"].append(np.sum(ev * rv, -1))
        out["channel"].append({k: np.stack(v, -1) for k, v in cols.items()})
    return out


def ls_filter_coeffs(data, M: int, i: int, N: int, n: int):
    """Direct constrained least-squares solution for channel ``i``.

    Returns ``(h, a, rank)``: ``h`` weights the lag rows ``x(Mn-M-r)``,
    ``r = 0..N-1``, and ``a`` weights the constraint rows ``x(Mn-j)``,
    ``j = i+1..M-1``, so that ``x(Mn-i) + h X + a C`` is the channel output.
    ``h`` comes from the generalized inverse of the constraint-projected lag
    matrix; ``a`` then follows from the normal equations of the constraint.
    """
    x = _as_array(data)
    C = delay_rows(x, M, n, range(i + 1, M))
    X = delay_rows(x, M, n, range(M, M + N))
    target = delay_rows(x, M, n, [i])[..., 0, :]
    batch = x.shape[:-1]
    if N:
        Pc = perp(C)
        tc = np.einsum("...l,...lk->...k", target, Pc)
        h = -np.einsum("...l,...lr->...r", tc, np.linalg.pinv(X @ Pc, rcond=RCOND))
    else:
        h = np.zeros(batch + (0,))
    rank = _rank(np.concatenate([C, X], axis=-2))
    if C.shape[-2]:
        resid = target + np.einsum("...r,...rl->...l", h, X)
        a = -np.einsum("...l,...lc->...c", resid, np.linalg.pinv(C, rcond=RCOND))
    else:
        a = np.zeros(batch + (0,))
    return h, a, rank


# -- projection update identities -----------------------------------------------------


def check_inner_product_update(nu, V, w, nu_next):
    """Both sides of the order-update of ``nu P_perp[V] w^T`` when the row
    ``nu_next`` is appended to ``V``. Returns ``(lhs, rhs, degenerate)``."""
    nu, w, nu_next = (np.asarray(a, dtype=np.float64) for a in (nu, w, nu_next))
    V = np.asarray(V, dtype=np.float64).reshape(-1, nu.size)
    Pv = perp(V)
    lhs = nu @ perp(np.vstack([V, nu_next])) @ w
    den = nu_next @ Pv @ nu_next
    scale = nu_next @ nu_next
    degenerate = bool(den <= 1e-12 * max(scale, 1e-300))
    corr = 0.0 if degenerate else (nu @ Pv @ nu_next) * (nu_next @ Pv @ w) / den
    rhs = nu @ Pv @ w - corr
    return float(lhs), float(rhs), degenerate


def check_space_identities(nu, x, V, w) -> dict:
    """Numerical discrepancies of the projection identities used to couple
    channels (projector invariance, its nested-projection form, and the
    constrained-projection split)."""
    nu, x, w = (np.asarray(a, dtype=np.float64) for a in (nu, x, w))
    L = nu.size
    V = np.asarray(V, dtype=np.float64).reshape(-1, L)
    Pv_perp = perp(V)
    xv = (x @ Pv_perp)[None, :]
    # x in span(V): the remainder is rounding noise, not a direction
    if np.linalg.norm(xv) <= 1e-12 * max(np.linalg.norm(x), 1e-300):
        xv = np.zeros_like(xv)
    P_xv_perp = perp(xv)
    # P[V P_perp[x P_perp[V]]] == P[V]
    invariance = np.max(np.abs(projector(V @ P_xv_perp) - projector(V))) if V.shape[0] else 0.0
    # nu P_perp[xv] P_perp[V P_perp[xv]] w == nu P_perp[x] P_perp[V P_perp[x]] w
    Px_perp = perp(x[None, :])
    lhs_c = nu @ P_xv_perp @ perp(V @ P_xv_perp) @ w
    rhs_c = nu @ Px_perp @ perp(V @ Px_perp) @ w
    # nu P_perp[x] P_perp[V P_perp[x]] w == nu P_perp[V] w - nu P[x P_perp[V]] w
    rhs_split = nu @ Pv_perp @ w - nu @ projector(xv) @ w
    return {
        "projector_invariance": float(invariance),
        "nested_projection": float(abs(lhs_c - rhs_c)),
        "constrained_split": float(abs(rhs_c - rhs_split)),
        "split_second_term": float(abs(nu @ projector(xv) @ w)),
        "max": float(max(invariance, abs(lhs_c - rhs_c), abs(rhs_c - rhs_split))),
    }


def _pinv_constrained(V, x):
    """``K_n[x]``: pseudo-inverse of ``V P_perp[x]`` (rows of V projected off x)."""
    Vx = V @ perp(x[None, :]) if np.any(x) else V
    return np.linalg.pinv(Vx, rcond=RCOND)


def check_pseudo_inverse_update(z, V, x):
    """Both sides of the two-step pseudo-inverse update.

    ``V`` has ``n`` rows; the update grows ``z K_{n-1}[0]`` to ``z K_n[0]``
    with the last row of ``V``, then projects off ``x`` to reach
    ``z K_n[x]``. Returns ``(lhs, rhs)`` row vectors of length ``n``.
    """
    z, x = np.asarray(z, float), np.asarray(x, float)
    V = np.atleast_2d(np.asarray(V, float))
    Vp, vn = V[:-1], V[-1]
    lhs = z @ _pinv_constrained(V, x)
    K0_prev = np.linalg.pinv(Vp, rcond=RCOND) if Vp.shape[0] else np.zeros((z.size, 0))
    P_prev = perp(Vp) if Vp.shape[0] else np.eye(z.size)
    g = vn @ P_prev @ vn
    step = np.concatenate([-(vn @ K0_prev), [1.0]])
    zK0 = np.concatenate([z @ K0_prev, [0.0]]) + (z @ P_prev @ vn) / g * step
    Pn = perp(V)
    K0 = np.linalg.pinv(V, rcond=RCOND)
    gx = x @ Pn @ x
    rhs = zK0 + (z @ Pn @ x) / gx * (-(x @ K0)) if gx > 1e-300 else zK0
    return lhs, rhs


@dataclass
class VerificationReport:
    """Per-quantity worst errors of a lattice-versus-oracle comparison."""

    M: int
    N: int
    blocks: int
    trials: int
    seed: int
    worst: dict
    max_rel_err: float
    passed: bool
    failures: list

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)

"""Filter-bank parameters recovered from the lattice quotients.

Each lattice residual is a linear combination of delayed inputs, and every
residual recursion in the lattice carries over to the weight vectors:

* right extension  ``A[m+1] = [A[m], 0] - kf[m] [B[m], 1]``
* left extension   ``B_i[m] = [0, B_{i+1}[m-1]] - kb_{i+1}[m-1] [1, A_{i+1}[m-1]]``

with ``A_i[m]`` the forward weights of channel ``i`` over delays
``i+1 .. i+m`` and ``B_i[m]`` the backward weights of delay ``i+m+1`` over the
same window. The top channel borrows channel 0 of the previous block, exactly
as the lattice does. ``h_i`` and ``g_i`` are the lag parts of the full-order
vectors and ``a_i`` is the cross-band part.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .lattice import WhitenerConfig, WhitenerState
from .signals import Signal

__all__ = [
    "CoefficientSet",
    "CoefficientEstimator",
    "FilterBankCoefficients",
    "update_coefficients",
    "solve_prefilter_a",
    "PrefilterAccumulator",
    "assemble_direct_form",
    "apply_direct_form",
    "LAYOUT_VERSION",
]

LAYOUT_VERSION = 1


def _empty_chain(L: int) -> list:
    return [np.zeros(m) for m in range(L + 1)]


@dataclass
class CoefficientSet:
    """Weight vectors of every residual in the bank after one block.

    ``fwd[i][m]`` and ``bwd[i][m]`` hold channel ``i``'s forward and backward
    weights at window size ``m`` (length ``m``). ``c[p]``/``d[p]`` are the
    full-rate section's predictors. ``skipped`` counts order updates frozen
    because their quotient denominator was numerically zero.
    """

    M: int
    N: int
    block: int = -1
    fwd: list = field(default_factory=list)
    bwd: list = field(default_factory=list)
    c: list = field(default_factory=list)
    d: list = field(default_factory=list)
    skipped: int = 0

    @classmethod
    def zeros(cls, M: int, N: int) -> "CoefficientSet":
        fwd = [_empty_chain(M - 1 + N - i) for i in range(M)]
        bwd = [_empty_chain(M - 1 + N - i) for i in range(M)]
        return cls(M, N, -1, fwd, bwd, _empty_chain(N), _empty_chain(N))

    def h(self, i: int, p: int | None = None) -> np.ndarray:
        """Lag weights ``h_i^p`` on ``x(Mn-M) .. x(Mn-M-p+1)``."""
        p = self.N if p is None else p
        k = self.M - 1 - i
        return self.fwd[i][k + p][k:].copy()

    def g(self, i: int, p: int | None = None) -> np.ndarray:
        p = self.N if p is None else p
        k = self.M - 1 - i
        return self.bwd[i][k + p][k:].copy()

    def a(self, i: int, p: int | None = None) -> np.ndarray:
        """Cross-band weights ``a_i`` on ``x(Mn-i-1) .. x(Mn-M+1)``."""
        p = self.N if p is None else p
        k = self.M - 1 - i
        return self.fwd[i][k + p][:k].copy()

    def a_hat(self, i: int, q: int) -> np.ndarray:
        if not 0 <= q <= self.M - 1 - i:
            raise ValueError("cross-band order out of range")
        return self.fwd[i][q].copy()

    def b_hat(self, i: int, q: int) -> np.ndarray:
        if not 0 <= q <= self.M - 1 - i:
            raise ValueError("cross-band order out of range")
        return self.bwd[i][q].copy()

    def copy(self) -> "CoefficientSet":
        cp = lambda ch: [[v.copy() for v in row] for row in ch]
        return CoefficientSet(
            self.M, self.N, self.block, cp(self.fwd), cp(self.bwd),
            [v.copy() for v in self.c], [v.copy() for v in self.d], self.skipped,
        )


def _extend(vec, tail):
    out = np.empty(vec.size + 1)
    out[:-1] = vec
    out[-1] = tail
    return out


def _prepend(head, vec):
    out = np.empty(vec.size + 1)
    out[0] = head
    out[1:] = vec
    return out


def _chain_update(fwd, bwd, kf, src_fwd, src_bwd, src_kb, L):
    """Rebuild one channel's weight chain in place of ``fwd``/``bwd``."""
    skipped = 0
    for m in range(L + 1):
        if m > 0:
            bwd[m] = _prepend(0.0, src_bwd[m - 1]) - src_kb[m - 1] * _prepend(1.0, src_fwd[m - 1])
        if m < L:
            if kf[m] == 0.0:
                skipped += 1
            fwd[m + 1] = _extend(fwd[m], 0.0) - kf[m] * _extend(bwd[m], 1.0)
    return skipped


def update_coefficients(state: WhitenerState, coeffs: CoefficientSet) -> CoefficientSet:
    """Weights after the block ``state`` just processed.

    ``coeffs`` must be the set returned for the previous block (or
    :meth:`CoefficientSet.zeros` before block 0); the top channel and the
    full-rate backward predictor depend on it.
    """
    M, N = state.cfg.M, state.cfg.N
    if (coeffs.M, coeffs.N) != (M, N):
        raise ValueError("coefficient set does not match the whitener shape")
    if state.block != coeffs.block + 1:
        raise ValueError("update_coefficients must run once after every block")
    ch = state.channels
    new = CoefficientSet.zeros(M, N)
    new.block = state.block
    skipped = 0
    for i in range(M - 1, -1, -1):
        L = M - 1 + N - i
        if i + 1 < M:
            src = (new.fwd[i + 1], new.bwd[i + 1], ch.kb[i + 1])
        else:
            src = (coeffs.fwd[0], coeffs.bwd[0], ch.pkb)
        skipped += _chain_update(new.fwd[i], new.bwd[i], ch.kf[i], *src, L)
    c, d = coeffs.c, coeffs.d
    for kf, pkb in state.scalar_trace:
        nc, nd = _empty_chain(N), _empty_chain(N)
        _chain_update(nc, nd, kf, c, d, pkb, N)
        c, d = nc, nd
    new.c, new.d = c, d
    new.skipped = coeffs.skipped + skipped
    return new


# -- cross-band row by direct solve -----------------------------------------


def _block_rows(x: np.ndarray, M: int, n: int, delays) -> np.ndarray:
    """Rows ``[x(Mk - d)]_{k=0..n}`` with zeros before time 0."""
    k = np.arange(n + 1)
    out = np.zeros((len(delays), n + 1))
    for r, d in enumerate(delays):
        t = M * k - d
        ok = t >= 0
        out[r, ok] = x[t[ok]]
    return out


def solve_prefilter_a(x, h, M: int, i: int, n: int | None = None):
    """Cross-band row ``a_i`` for given lag weights ``h``.

    Solves ``min || x(Mn-i) + h X + a C ||`` over the block times ``0..n``,
    ``C`` holding delays ``i+1 .. M-1`` and ``X`` the ``len(h)`` lags from
    ``M``. Returns ``(a, rank_deficient)``; a singular Gram matrix falls back
    to the pseudo-inverse.
    """
    xs = x.samples if isinstance(x, Signal) else np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if n is None:
        n = (xs.size - 1) // M
    C = _block_rows(xs, M, n, range(i + 1, M))
    if C.shape[0] == 0:
        return np.zeros(0), False
    X = _block_rows(xs, M, n, range(M, M + h.size))
    t = _block_rows(xs, M, n, [i])[0]
    return _solve(C @ C.T, C @ t + C @ X.T @ h)


def _solve(G, rhs):
    rank = np.linalg.matrix_rank(G, tol=1e-12 * max(np.trace(G), 1e-300))
    if rank == G.shape[0]:
        return -np.linalg.solve(G, rhs), False
    return -(np.linalg.pinv(G, rcond=1e-12) @ rhs), True


class PrefilterAccumulator:
    """Running Gram sums for the cross-band solve, one per channel.

    Equivalent to :func:`solve_prefilter_a` on the whole history without
    keeping the data.
    """

    def __init__(self, M: int, N: int, lam: float = 1.0):
        self.M, self.N, self.lam = M, N, lam
        self.hist = np.zeros(M + N)  # x(Mn - d), d = 0..M+N-1
        k = [M - 1 - i for i in range(M)]
        self.Gcc = [np.zeros((kk, kk)) for kk in k]
        self.Gct = [np.zeros(kk) for kk in k]
        self.Gcx = [np.zeros((kk, N)) for kk in k]

    def push(self, newest_first: np.ndarray):
        """Add block time ``n`` given ``x(Mn), x(Mn-1), .., x(Mn-M+1)``."""
        M = self.M
        self.hist[M:] = self.hist[:-M]
        self.hist[:M] = newest_first
        lags = self.hist[M:]
        for i in range(M):
            c = self.hist[i + 1: M]
            if self.lam != 1.0:
                self.Gcc[i] *= self.lam
                self.Gct[i] *= self.lam
                self.Gcx[i] *= self.lam
            self.Gcc[i] += np.outer(c, c)
            self.Gct[i] += c * self.hist[i]
            self.Gcx[i] += np.outer(c, lags)

    def solve(self, i: int, h) -> tuple:
        if self.Gcc[i].shape[0] == 0:
            return np.zeros(0), False
        return _solve(self.Gcc[i], self.Gct[i] + self.Gcx[i] @ np.asarray(h, dtype=np.float64))


class CoefficientEstimator:
    """Drives :func:`update_coefficients` alongside a whitener.

    Call :meth:`update` after every processed block. Every ``a_interval``
    blocks the cross-band rows are also re-solved directly from running Gram
    sums (``a_direct``); ``record=True`` keeps per-block ``h`` trajectories.
    """

    def __init__(self, cfg: WhitenerConfig, *, a_interval: int = 16, record: bool = False):
        if a_interval < 1:
            raise ValueError("a_interval must be >= 1")
        self.cfg = cfg
        self.a_interval = a_interval
        self.coeffs = CoefficientSet.zeros(cfg.M, cfg.N)
        self.acc = PrefilterAccumulator(cfg.M, cfg.N, cfg.lam)
        self.a_direct = [np.zeros(cfg.M - 1 - i) for i in range(cfg.M)]
        self.rank_deficient = [False] * cfg.M
        self.record = record
        self.trajectory = []  # rows (block, channel, order, value)

    def update(self, state: WhitenerState, newest_first=None) -> CoefficientSet:
        """``newest_first`` is the block ``x(Mn) .. x(Mn-M+1)``; needed only
        for the direct cross-band solve and read from ``state`` otherwise."""
        self.coeffs = update_coefficients(state, self.coeffs)
        if newest_first is None:
            newest_first = state.last_block[::-1]
        self.acc.push(np.asarray(newest_first, dtype=np.float64))
        n = state.block
        if n % self.a_interval == 0:
            for i in range(self.cfg.M):
                self.a_direct[i], self.rank_deficient[i] = self.acc.solve(i, self.coeffs.h(i))
        if self.record:
            for i in range(self.cfg.M):
                for j, v in enumerate(self.coeffs.h(i)):
                    self.trajectory.append((n, i, j, float(v)))
        return self.coeffs

    def h_matrix(self) -> np.ndarray:
        return np.array([self.coeffs.h(i) for i in range(self.cfg.M)])

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "channel", "order", "value"])
        for b, i, j, v in self.trajectory:
            w.writerow([b, i, j, repr(v)])
        return buf.getvalue()

    def direct_form(self) -> "FilterBankCoefficients":
        return assemble_direct_form(self.coeffs, self.cfg)


# -- direct form --------------------------------------------------------------


@dataclass(frozen=True)
class FilterBankCoefficients:
    """``e(Mn) = A x(Mn) + sum_p H(p) x(M(n-p))`` for ``p = 1..N/M``.

    ``x(Mn) = [x(Mn), x(Mn-1), .., x(Mn-M+1)]`` and ``N`` is the lag order,
    so ``H(p)[i, k]`` weights delay ``pM + k``.
    """

    M: int
    N: int
    A: np.ndarray
    H: tuple

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        H = tuple(np.array(h, dtype=np.float64) for h in self.H)
        if A.shape != (self.M, self.M):
            raise ValueError("A must be M x M")
        if not (np.allclose(np.diag(A), 1.0) and np.all(np.tril(A, -1) == 0)):
            raise ValueError("A must be unit upper triangular")
        if self.N % self.M or len(H) != self.N // self.M:
            raise ValueError("need N/M lag matrices")
        if any(h.shape != (self.M, self.M) for h in H):
            raise ValueError("H(p) must be M x M")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "H", H)

    def h(self, i: int) -> np.ndarray:
        return np.concatenate([H[i] for H in self.H]) if self.H else np.zeros(0)

    def a(self, i: int) -> np.ndarray:
        return self.A[i, i + 1:].copy()

    def to_json(self) -> str:
        return json.dumps({
            "layout_version": LAYOUT_VERSION, "M": self.M, "N": self.N,
            "A": self.A.tolist(), "H": [h.tolist() for h in self.H],
        })

    @classmethod
    def from_json(cls, text: str) -> "FilterBankCoefficients":
        d = json.loads(text)
        if d.get("layout_version") != LAYOUT_VERSION:
            raise ValueError(f"unsupported layout version {d.get('layout_version')!r}")
        return cls(int(d["M"]), int(d["N"]), np.array(d["A"]), tuple(np.array(h) for h in d["H"]))


def assemble_direct_form(coeffs: CoefficientSet, cfg: WhitenerConfig, a=None) -> FilterBankCoefficients:
    """Pack ``h_i`` into ``H(p)`` and ``a_i`` into ``A``.

    ``a`` optionally overrides the cross-band rows (e.g. a direct solve).
    """
    M, N = cfg.M, cfg.N
    if N % M:
        raise ValueError(f"lag order {N} is not a multiple of M={M}")
    A = np.eye(M)
    H = [np.zeros((M, M)) for _ in range(N // M)]
    for i in range(M):
        A[i, i + 1:] = coeffs.a(i) if a is None else a[i]
        h = coeffs.h(i)
        for p in range(N // M):
            H[p][i] = h[p * M: (p + 1) * M]
    return FilterBankCoefficients(M, N, A, tuple(H))


def apply_direct_form(fb: FilterBankCoefficients, s) -> np.ndarray:
    """Block outputs ``e(Mn)`` of the fixed bank, ``n = 0..(len-1)//M``.

    Row ``n`` holds ``e_i(Mn - i)``; ``s[0]`` is ``x(0)`` and earlier samples
    are zero.
    """
    xs = s.samples if isinstance(s, Signal) else np.asarray(s, dtype=np.float64)
    M = fb.M
    nblk = (xs.size - 1) // M if xs.size else -1
    X = _block_rows(xs, M, nblk, range(M)).T  # (nblk+1, M), row n = x(Mn)
    out = X @ fb.A.T
    for p, H in enumerate(fb.H, start=1):
        if p <= nblk:
            out[p:] += X[:-p] @ H.T
    return out

"""Batch start-up of the lattice registers in extended precision.

While the data matrix is still a staircase, the highest-order residuals are
tiny differences of order-one numbers and the order recursion loses about
``log10(1/x(0)^2)`` digits per order. Once every window has left that regime
the registers are recomputed here by Gram-Schmidt on the weighted data
matrix, then the recursion takes over.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np

DPS = 60
# relative energy below which a residual counts as exactly zero
ZERO = mp.mpf(10) ** (-40)


def _rows(x, M, n, delays, w):
    out = []
    for d in delays:
        row = []
        for k in range(n + 1):
            t = M * k - d
            row.append(x[t] * w[k] if t >= 0 else mp.mpf(0))
        out.append(row)
    return out


def _dot(a, b):
    return mp.fsum(p * q for p, q in zip(a, b))


def _sweep(v, q, qq):
    c = _dot(v, q) / qq
    return [a - c * b for a, b in zip(v, q)]


def exact_registers(x, M, N, n, lam, eps, energy):
    """Registers of a ``(M, M+N)`` lattice core at block ``n``.

    ``x`` holds ``x(0) .. x(Mn)``. Returns a dict of ``(M, M+N)`` float arrays
    keyed like the core attributes.
    """
    W = M + N
    out = {k: np.zeros((M, W)) for k in ("f", "b", "lik", "dlt", "rf", "rb", "kf", "kb")}
    with mp.workdps(DPS):
        xs = [mp.mpf(float(v)) for v in x]
        lam_m = mp.mpf(lam)
        w = [mp.sqrt(lam_m ** (n - k)) for k in range(n + 1)]
        thresh = mp.mpf(eps) * mp.mpf(energy)
        for i in range(M):
            L = M - 1 + N - i
            rows = _rows(xs, M, n, range(i, i + L + 2), w)
            fr = list(rows[0])
            pr = [mp.mpf(0)] * n + [mp.mpf(1)]
            basis = []  # orthogonal, unnormalized, with squared norms
            for m in range(L + 1):
                br = list(rows[m + 1])
                for q, qq in basis:
                    br = _sweep(br, q, qq)
                lik = pr[-1]
                rf, rb, dl = _dot(fr, fr), _dot(br, br), _dot(fr, br)
                scale = _dot(rows[0], rows[0]) + _dot(rows[m + 1], rows[m + 1])
                if lik <= ZERO:
                    lik = mp.mpf(0)
                    f = b = mp.mpf(0)
                else:
                    f, b = fr[-1], br[-1]
                if rf <= ZERO * scale:
                    rf = mp.mpf(0)
                if rb <= ZERO * scale:
                    rb = mp.mpf(0)
                if abs(dl) <= ZERO * scale:
                    dl = mp.mpf(0)
                vals = {"f": f, "b": b, "lik": lik, "dlt": dl, "rf": rf, "rb": rb,
                        "kf": dl / rb if rb > thresh else 0, "kb": dl / rf if rf > thresh else 0}
                for k, v in vals.items():
                    out[k][i, m] = float(v)
                # the backward target of this window is the next regressor
                if rb > 0:
                    basis.append((br, rb))
                    fr = _sweep(fr, br, rb)
                    pr = _sweep(pr, br, rb)
    return out

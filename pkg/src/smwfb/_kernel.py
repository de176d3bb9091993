"""Inner loop of the order- and time-recursive lattice.

Every quantity lives on a *window* of contiguous delays. Channel ``i`` at
unified order ``m`` uses the window of delays ``i+1 .. i+m``:

* ``f[i, m]``   forward residual of delay ``i`` on the window,
* ``b[i, m]``   backward residual of delay ``i+m+1`` on the window,
* ``lik[i, m]`` likelihood variable ``pi P_perp pi^T`` of the window,
* ``dlt``, ``rf``, ``rb`` the growing-memory inner products
  ``<f, b>``, ``<f, f>``, ``<b, b>`` over the whole residual history,
* ``kf = dlt / rb`` and ``kb = dlt / rf`` the two reflection quotients.

Right-extending a window uses the channel's own backward residual. Left
extension (adding delay ``i+1``) uses channel ``i+1``; for the top channel
it uses channel 0 of the previous block, since shifting every delay by ``M``
is exactly one block of time. That closes the loop without a full-rate
section, and is why channels run from ``M-1`` down to 0.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is optional
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def block_update(xd, f, b, lik, dlt, rf, rb, kf, kb, pf, pb, pkb, zmask, M, N, lam, eps, lik_floor, energy):
    """Advance all channels by one block.

    ``xd[d]`` is ``x(Mn - d)`` for ``d = 0..M``. Arrays are ``(M, M+N)`` and
    updated in place; ``pf``, ``pb``, ``pkb`` receive channel 0 of the
    previous block, which the top channel reads. ``energy`` is the running
    input energy used to decide when a denominator is numerically zero.
    ``zmask[i, m]`` flags windows whose likelihood variable is exactly zero
    during start-up; rounding would otherwise leave a tiny positive value.
    Returns ``(adds, mults)``; divisions count as multiplications.
    """
    adds = 0
    mults = 0
    thresh = eps * energy
    W = f.shape[1]
    for m in range(W):
        pf[m] = f[0, m]
        pb[m] = b[0, m]
        pkb[m] = kb[0, m]
    for i in range(M - 1, -1, -1):
        L = M - 1 + N - i
        f[i, 0] = xd[i]
        b[i, 0] = xd[i + 1]
        lik[i, 0] = 1.0
        for m in range(L + 1):
            if m > 0:
                if i + 1 < M:
                    b[i, m] = b[i + 1, m - 1] - kb[i + 1, m - 1] * f[i + 1, m - 1]
                else:
                    b[i, m] = pb[m - 1] - pkb[m - 1] * pf[m - 1]
                adds += 1
                mults += 1
            ll = lik[i, m]
            if zmask[i, m] or ll <= lik_floor:
                ll = 0.0
                lik[i, m] = 0.0
                # pinning vector lies in the window: residuals vanish exactly
                f[i, m] = 0.0
                b[i, m] = 0.0
                inv = 0.0
            else:
                inv = 1.0 / ll
            mults += 1
            fi = f[i, m]
            bi = b[i, m]
            if lam != 1.0:
                dlt[i, m] *= lam
                rf[i, m] *= lam
                rb[i, m] *= lam
                mults += 3
            rb_old = rb[i, m]
            dlt[i, m] += fi * bi * inv
            rf[i, m] += fi * fi * inv
            rb[i, m] += bi * bi * inv
            adds += 3
            mults += 6
            kf[i, m] = dlt[i, m] / rb[i, m] if rb[i, m] > thresh else 0.0
            kb[i, m] = dlt[i, m] / rf[i, m] if rf[i, m] > thresh else 0.0
            mults += 2
            if m < L:
                f[i, m + 1] = fi - kf[i, m] * bi
                # product form of ll - b^2/rb: no cancellation when the
                # result is tiny, and exactly zero when rb_old is
                if rb[i, m] > thresh:
                    lik[i, m + 1] = ll * (rb_old / rb[i, m])
                else:
                    lik[i, m + 1] = ll
                adds += 1
                mults += 3
    return adds, mults

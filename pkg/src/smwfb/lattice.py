"""Streaming exact least-squares whitening filter bank.

Per block of ``M`` new samples the whitener emits ``e_i(Mn - i)`` for
``i = 0..M-1``: the growing-memory least-squares error of predicting
``x(Mn - i)`` from the ``M - 1 - i`` newer-in-block samples
``x(Mn - i - 1) .. x(Mn - M + 1)`` (the cross-band constraint) together with
``N`` lags ``x(Mn - M) .. x(Mn - M - N + 1)``. Sums run over the block times
``k = 0..n``; block 0 holds only ``x(0)``.

Registers are kept in one array per kind, indexed ``[channel, m]`` where
``m`` counts regressors in the window. The cross-band (prefilter) section of
channel ``i`` is ``m = q`` for ``q <= M-1-i``; the channel section at order
``p`` is ``m = M-1-i+p``. The two views share the entry ``q = M-1-i``,
``p = 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._exact import exact_registers
from ._kernel import block_update
from .signals import Signal

__all__ = [
    "WhitenerConfig",
    "WhitenerState",
    "ChannelOutputs",
    "init_state",
    "process_block",
    "snapshot_registers",
    "op_counters",
    "whiten",
    "reference_op_counts",
]

# likelihood variables at or below this are treated as exactly zero; exact
# zeros come from the structural mask and the product-form update
LIK_FLOOR = 0.0


@dataclass(frozen=True)
class WhitenerConfig:
    M: int
    N: int
    lam: float = 1.0
    eps_reg: float = 1e-12
    scalar_section: bool = True

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError("M must be an integer >= 2")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be an integer >= 1")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        if not self.eps_reg >= 0.0:
            raise ValueError("eps_reg must be >= 0")


@dataclass(frozen=True)
class ChannelOutputs:
    block: int
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self):
        return len(self.values)


class _Core:
    """Register arrays of one lattice (``M`` channels, lag order ``N``)."""

    KINDS = ("f", "b", "lik", "dlt", "rf", "rb", "kf", "kb")

    def __init__(self, M: int, N: int):
        self.M, self.N = M, N
        W = M + N
        for k in self.KINDS:
            setattr(self, k, np.zeros((M, W)))
        self.lik[:] = 1.0  # nothing projected yet
        self.pf = np.zeros(W)
        self.pb = np.zeros(W)
        self.pkb = np.zeros(W)
        self.zmask = np.zeros((M, W), dtype=np.bool_)
        self.n = -1  # index of the last processed block
        self.t0 = None  # time of the first nonzero sample
        self.hist = []  # samples x(0), x(1), .. kept until the exact start-up
        self.started = False

    def step(self, xd, lam, eps, energy):
        M = self.M
        self.n += 1
        if self.t0 is None:
            nz = np.flatnonzero(xd[:M])
            if nz.size:
                self.t0 = M * self.n - int(nz[-1])
        _structural_zeros(M, self.N, self.n, self.t0, self.zmask)
        ops = block_update(
            xd, self.f, self.b, self.lik, self.dlt, self.rf, self.rb, self.kf, self.kb,
            self.pf, self.pb, self.pkb, self.zmask, M, self.N, lam, eps, LIK_FLOOR, energy,
        )
        if not self.started:
            if self.n == 0:
                self.hist.append(float(xd[0]))
            else:
                self.hist.extend(xd[M - 1::-1].tolist())
            if self.t0 is not None and M * self.n - (M + self.N) >= self.t0 and not self.zmask.any():
                # last block of the staircase: replace by the batch solution
                regs = exact_registers(self.hist, M, self.N, self.n, lam, eps, energy)
                for k, v in regs.items():
                    getattr(self, k)[:] = v
                self.started = True
                self.hist = []
        return ops

    def copy(self):
        c = object.__new__(_Core)
        c.M, c.N, c.n, c.t0, c.started = self.M, self.N, self.n, self.t0, self.started
        c.hist = list(self.hist)
        for k in self.KINDS + ("pf", "pb", "pkb", "zmask"):
            setattr(c, k, getattr(self, k).copy())
        return c


def _generic_rank(starts, last):
    """Generic rank of rows supported on columns ``[s, last]``."""
    col, r = last, 0
    for s in sorted(starts, reverse=True):
        if s <= col:
            r += 1
            col -= 1
    return r


def _structural_zeros(M, N, n, t0, mask):
    """Flag windows whose pinning vector lies in the data row space.

    Row delay ``d`` is nonzero at block ``k`` only once ``Mk - d >= t0``, so
    during start-up the data matrix is a staircase. For data that is generic
    after ``t0`` the pinning vector is in the row space exactly when the last
    column raises the rank, which a matching count decides without touching
    the samples.
    """
    W = M + N
    if t0 is None or M * n > t0 + 2 * M * W:
        mask[:] = False
        return
    for i in range(M):
        starts = []
        mask[i, 0] = False
        for m in range(1, W):
            d = i + m
            starts.append(max(0, -(-(d + t0) // M)))
            mask[i, m] = _generic_rank(starts, n) > _generic_rank(starts, n - 1)


class WhitenerState:
    """All lattice registers of one stream.

    Mutated only by :meth:`process_block`. ``block`` is the index of the last
    processed block (``-1`` before anything was seen).
    """

    def __init__(self, cfg: WhitenerConfig):
        self.cfg = cfg
        self.channels = _Core(cfg.M, cfg.N)
        # full-rate section: a one-channel lattice fed sample by sample
        self.scalar = _Core(1, cfg.N) if cfg.scalar_section else None
        self.block = -1
        self.x_prev = 0.0
        self.energy = 0.0
        self.last_ops = (0, 0)
        self.total_ops = (0, 0)
        self.scalar_trace = []
        self.last_block = np.zeros(cfg.M)

    @property
    def initialized(self) -> bool:
        """True once every section has finished its exact start-up."""
        return self.channels.started and (self.scalar is None or self.scalar.started)

    def _check(self, samples) -> np.ndarray:
        s = np.asarray(samples, dtype=np.float64).ravel()
        if s.size != self.cfg.M:
            raise ValueError(f"expected {self.cfg.M} samples per block, got {s.size}")
        if not np.all(np.isfinite(s)):
            raise ValueError("non-finite input sample")
        return s

    def _advance(self, s: np.ndarray) -> ChannelOutputs:
        cfg = self.cfg
        M, N = cfg.M, cfg.N
        adds = mults = 0
        if self.scalar is not None:
            prev = self.x_prev
            trace = []
            for v in s:
                self.energy += v * v
                a, m = self.scalar.step(np.array([v, prev]), cfg.lam, cfg.eps_reg, self.energy)
                adds += a
                mults += m
                prev = v
                trace.append((self.scalar.kf[0].copy(), self.scalar.pkb.copy()))
            # per-sample reflection quotients, replayed by the coefficient estimator
            self.scalar_trace = trace
        else:
            self.energy += float(s @ s)
        xd = np.empty(M + 1)
        xd[:M] = s[::-1]
        xd[M] = self.x_prev
        a, m = self.channels.step(xd, cfg.lam, cfg.eps_reg, self.energy)
        adds += a
        mults += m
        self.x_prev = float(s[-1])
        self.last_block = s.copy()
        self.block += 1
        self.last_ops = (adds, mults)
        self.total_ops = (self.total_ops[0] + adds, self.total_ops[1] + mults)
        return ChannelOutputs(self.block, self.outputs(N))

    def push_origin(self, x0: float) -> ChannelOutputs:
        """Process block 0, which carries only the sample ``x(0)``."""
        if self.block != -1:
            raise RuntimeError("origin sample already processed")
        s = np.zeros(self.cfg.M)
        s[-1] = x0
        return self._advance(self._check(s))

    def process_block(self, samples) -> ChannelOutputs:
        """Consume ``x(M(n-1)+1) .. x(Mn)`` in time order; ``x(0)`` defaults to 0."""
        s = self._check(samples)
        if self.block == -1:
            self.push_origin(0.0)
        return self._advance(s)

    def outputs(self, order: int | None = None) -> np.ndarray:
        """``e_i^order(Mn - i)`` for every channel at the current block."""
        M, N = self.cfg.M, self.cfg.N
        p = N if order is None else order
        if not 0 <= p <= N:
            raise ValueError(f"order must lie in 0..{N}")
        return np.array([self.channels.f[i, M - 1 - i + p] for i in range(M)])

    def copy(self) -> "WhitenerState":
        c = object.__new__(WhitenerState)
        c.__dict__.update(self.__dict__)
        c.channels = self.channels.copy()
        c.scalar = self.scalar.copy() if self.scalar is not None else None
        return c


def init_state(cfg: WhitenerConfig) -> WhitenerState:
    return WhitenerState(cfg)


def process_block(state: WhitenerState, samples) -> ChannelOutputs:
    return state.process_block(samples)


def snapshot_registers(state: WhitenerState) -> dict:
    """Read-only copy of every register by section, channel and order.

    Layout matches :func:`smwfb.oracle.oracle_registers`. Values are plain
    floats so the dump serializes to JSON exactly.
    """
    M, N = state.cfg.M, state.cfg.N
    c = state.channels
    out = {"M": M, "N": N, "block": state.block, "prefilter": [], "channel": []}
    if state.scalar is not None:
        s = state.scalar
        sl = slice(0, N + 1)
        out["scalar"] = {
            "e": s.f[0, sl].tolist(), "r": s.b[0, sl].tolist(), "delta": s.lik[0, sl].tolist(),
            "R_e": s.rf[0, sl].tolist(), "R_r": s.rb[0, sl].tolist(), "D_er": s.dlt[0, sl].tolist(),
        }
    for i in range(M):
        q = slice(0, M - i)
        out["prefilter"].append({
            "epsilon": c.f[i, q].tolist(), "gamma": c.b[i, q].tolist(),
            "delta_hat": c.lik[i, q].tolist(), "R_epsilon": c.rf[i, q].tolist(),
            "R_gamma": c.rb[i, q].tolist(), "D_epsilon_gamma": c.dlt[i, q].tolist(),
        })
        p = slice(M - 1 - i, M + N - i)
        out["channel"].append({
            "e": c.f[i, p].tolist(), "r": c.b[i, p].tolist(), "delta": c.lik[i, p].tolist(),
            "R_e": c.rf[i, p].tolist(), "R_r": c.rb[i, p].tolist(), "D_er": c.dlt[i, p].tolist(),
        })
    return out


def snapshot_json(state: WhitenerState) -> str:
    return json.dumps(snapshot_registers(state))


def op_counters(state: WhitenerState) -> dict:
    """Additions and multiplications executed by the last :func:`process_block`."""
    adds, mults = state.last_ops
    return {"adds": adds, "mults": mults, "total_adds": state.total_ops[0], "total_mults": state.total_ops[1]}


def reference_op_counts(M: int, N: int) -> dict:
    """Reference per-block counts ``(7+6M)N+7M`` additions and
    ``(14+12M)N+14M`` multiplications of the analysis lattice."""
    return {"adds": (7 + 6 * M) * N + 7 * M, "mults": (14 + 12 * M) * N + 14 * M}


def whiten(x, cfg: WhitenerConfig, *, orders=None, state: WhitenerState | None = None, on_block=None):
    """Run the whitener over a whole signal.

    ``x[0]`` is the origin sample; the remaining samples are consumed in
    blocks of ``M`` (a trailing partial block is dropped). Returns
    ``(outputs, state)`` where ``outputs[n, i] = e_i(Mn - i)`` at order ``N``,
    or, when ``orders`` is given, ``outputs[n, i, j]`` at ``orders[j]``.
    ``on_block(state)`` is called after every block, including block 0.
    """
    xs = x.samples if isinstance(x, Signal) else np.asarray(x, dtype=np.float64)
    st = state if state is not None else WhitenerState(cfg)
    M = cfg.M
    nblk = (xs.size - 1) // M
    shape = (nblk + 1, M) if orders is None else (nblk + 1, M, len(orders))
    out = np.zeros(shape)
    if st.block == -1:
        st.push_origin(float(xs[0]) if xs.size else 0.0)
    else:
        raise ValueError("whiten() needs a fresh state")

    def grab(n):
        if on_block is not None:
            on_block(st)
        if orders is None:
            out[n] = st.outputs()
        else:
            out[n] = np.stack([st.outputs(p) for p in orders], -1)

    grab(0)
    for n in range(1, nblk + 1):
        st._advance(st._check(xs[1 + M * (n - 1): 1 + M * n]))
        grab(n)
    return out, st

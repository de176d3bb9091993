"""Pre-windowed test signals and decimated data vectors.

Samples are indexed from 0; every negative index reads as 0. The decimated
data vector for delay ``d`` at block ``n`` holds ``x(M*k - d)`` for the block
times ``k = 0..n``; entries whose argument is negative are implicit zeros and
are not stored.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sps

__all__ = [
    "Signal",
    "ArModel",
    "ExcitationSpec",
    "DataVector",
    "DataMatrix",
    "draw_excitation",
    "apply_rational_filter",
    "generate_ar",
    "make_data_vector",
    "make_data_matrix",
    "TEST_FILTERS",
    "COLORED_SIGNALS",
    "colored_signal",
]

# root magnitude at or above this is treated as unstable
_STABILITY_MARGIN = 1.0 - 1e-12


@dataclass(frozen=True)
class Signal:
    """Finite pre-windowed real sequence ``x(0..len-1)``."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64).ravel()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    def at(self, k: int) -> float:
        """Value at sample index ``k``; zero for ``k < 0``."""
        if k < 0:
            return 0.0
        if k >= self.samples.size:
            raise IndexError(f"sample {k} not available (length {self.samples.size})")
        return float(self.samples[k])

    def append(self, values) -> "Signal":
        return Signal(np.concatenate([self.samples, np.asarray(values, dtype=np.float64).ravel()]))

    # -- serialization -------------------------------------------------

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x"])
        for v in self.samples:
            w.writerow([repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "Signal":
        if isinstance(source, (str, Path)) and Path(source).exists():
            text = Path(source).read_text()
        else:
            text = str(source)
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["x"]:
            raise ValueError("expected a single CSV column with header 'x'")
        return cls(np.array([float(r[0]) for r in rows[1:] if r], dtype=np.float64))

    def to_bytes(self) -> bytes:
        return self.samples.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Signal":
        if len(data) % 8:
            raise ValueError("binary stream length is not a multiple of 8")
        return cls(np.frombuffer(data, dtype="<f8").copy())


@dataclass(frozen=True)
class ArModel:
    """All-pole (optionally pole-zero) coloring model.

    Either give ``pole_radius``/``pole_angle`` for a resonant AR(2) pair at
    ``rho * exp(+-j theta)``, or give ``denominator`` explicitly.
    """

    pole_radius: float | None = None
    pole_angle: float | None = None
    denominator_coeffs: tuple[float, ...] | None = None
    numerator: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.denominator_coeffs is None:
            if self.pole_radius is None or self.pole_angle is None:
                raise ValueError("give pole_radius and pole_angle, or denominator_coeffs")
            if not 0.0 <= self.pole_radius < 1.0:
                raise ValueError("pole_radius must lie in [0, 1)")
        _check_stable(self.denominator)

    @property
    def denominator(self) -> np.ndarray:
        if self.denominator_coeffs is not None:
            return np.asarray(self.denominator_coeffs, dtype=np.float64)
        rho, theta = self.pole_radius, self.pole_angle
        # (1 - rho e^{j theta} z^-1)(1 - rho e^{-j theta} z^-1)
        return np.array([1.0, -2.0 * rho * math.cos(theta), rho * rho])

    def variance(self, excitation_var: float = 1.0) -> float:
        """Stationary output variance for white excitation (AR(2) closed form,
        otherwise via the impulse response)."""
        a = self.denominator / self.denominator[0]
        if len(a) == 3 and len(self.numerator) == 1:
            a1, a2 = a[1], a[2]
            b0 = self.numerator[0] / self.denominator[0]
            return b0 * b0 * excitation_var * (1 + a2) / ((1 - a2) * ((1 + a2) ** 2 - a1 * a1))
        imp = np.zeros(1 << 16)
        imp[0] = 1.0
        h = sps.lfilter(self.numerator, self.denominator, imp)
        return excitation_var * float(h @ h)


_DISTRIBUTIONS = ("gaussian", "uniform", "exponential", "gamma")


@dataclass(frozen=True)
class ExcitationSpec:
    """White excitation: ``gaussian(mean, var)``, ``uniform(lo, hi)``,
    ``exponential(mean)`` or ``gamma(shape, scale)``."""

    distribution: str
    params: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        d, p = self.distribution, self.params
        if d not in _DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {d!r}; choose from {_DISTRIBUTIONS}")
        need = {"gaussian": 2, "uniform": 2, "exponential": 1, "gamma": 2}[d]
        if len(p) != need:
            raise ValueError(f"{d} takes {need} parameter(s), got {len(p)}")
        if d == "gaussian" and not p[1] > 0:
            raise ValueError("gaussian variance must be > 0")
        if d == "uniform" and not p[1] > p[0]:
            raise ValueError("uniform requires hi > lo")
        if d == "exponential" and not p[0] > 0:
            raise ValueError("exponential mean must be > 0")
        if d == "gamma" and not (p[0] > 0 and p[1] > 0):
            raise ValueError("gamma shape and scale must be > 0")

    @classmethod
    def gaussian(cls, mean=0.0, var=1.0, seed=0):
        return cls("gaussian", (float(mean), float(var)), seed)

    @classmethod
    def uniform(cls, lo=-1.0, hi=1.0, seed=0):
        return cls("uniform", (float(lo), float(hi)), seed)

    @classmethod
    def exponential(cls, mean=1.5, seed=0):
        return cls("exponential", (float(mean),), seed)

    @classmethod
    def gamma(cls, shape=2.0, scale=1.0, seed=0):
        return cls("gamma", (float(shape), float(scale)), seed)

    def with_seed(self, seed: int) -> "ExcitationSpec":
        return ExcitationSpec(self.distribution, self.params, seed)

    @property
    def mean(self) -> float:
        d, p = self.distribution, self.params
        if d == "uniform":
            return 0.5 * (p[0] + p[1])
        if d == "gamma":
            return p[0] * p[1]
        return p[0]

    @property
    def variance(self) -> float:
        d, p = self.distribution, self.params
        if d == "gaussian":
            return p[1]
        if d == "uniform":
            return (p[1] - p[0]) ** 2 / 12.0
        if d == "exponential":
            return p[0] ** 2
        return p[0] * p[1] ** 2


def draw_excitation(spec: ExcitationSpec, length: int) -> Signal:
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    d, p = spec.distribution, spec.params
    if d == "gaussian":
        x = rng.normal(p[0], math.sqrt(p[1]), length)
    elif d == "uniform":
        x = rng.uniform(p[0], p[1], length)
    elif d == "exponential":
        x = rng.exponential(p[0], length)
    else:
        x = rng.gamma(p[0], p[1], length)
    return Signal(x)


def _check_stable(denominator) -> None:
    den = np.trim_zeros(np.asarray(denominator, dtype=np.float64), "b")
    if den.size == 0 or den[0] == 0.0:
        raise ValueError("denominator[0] must be nonzero")
    if den.size > 1:
        roots = np.roots(den)
        if np.any(np.abs(roots) >= _STABILITY_MARGIN):
            raise ValueError(f"unstable denominator: root magnitudes {np.abs(roots)}")


def apply_rational_filter(input: Signal, numerator: Sequence[float], denominator: Sequence[float]) -> Signal:
    """Causal direct-form recursion with zero initial state."""
    _check_stable(denominator)
    x = input.samples if isinstance(input, Signal) else np.asarray(input, dtype=np.float64)
    return Signal(sps.lfilter(np.asarray(numerator, float), np.asarray(denominator, float), x))


def generate_ar(model: ArModel, excitation: ExcitationSpec, length: int) -> Signal:
    w = draw_excitation(excitation, length)
    return apply_rational_filter(w, model.numerator, model.denominator)


# Coloring filters of the nine test signals, in powers of z^-1.
TEST_FILTERS = {
    # 1 - 0.8461 z^-1 + 0.9506 z^-2
    "H1": ((1.0, -0.8461, 0.9506), (1.0,)),
    # (z - 1.2) / (z^2 - 0.975 z + 0.9506)
    "H2": ((0.0, 1.0, -1.2), (1.0, -0.975, 0.9506)),
    # (z^2 - 2.95 z + 1.90) / (z^3 - 1.7750 z^2 + 1.7306 z - 0.7605)
    "H3": ((0.0, 1.0, -2.95, 1.90), (1.0, -1.7750, 1.7306, -0.7605)),
}

# signal number -> (excitation, filter name)
COLORED_SIGNALS = {
    1: (ExcitationSpec.gaussian(0.0, 1.0), "H1"),
    2: (ExcitationSpec.uniform(-1.0, 1.0), "H1"),
    3: (ExcitationSpec.exponential(1.5), "H1"),
    4: (ExcitationSpec.gaussian(0.0, 1.0), "H2"),
    5: (ExcitationSpec.uniform(-1.0, 1.0), "H2"),
    6: (ExcitationSpec.exponential(1.5), "H2"),
    7: (ExcitationSpec.gaussian(0.0, 1.0), "H3"),
    8: (ExcitationSpec.uniform(-1.0, 1.0), "H3"),
    9: (ExcitationSpec.exponential(1.5), "H3"),
}


def colored_signal(number: int, length: int, seed: int = 0) -> Signal:
    """One of the nine colored test signals (distribution x coloring filter)."""
    try:
        exc, name = COLORED_SIGNALS[number]
    except KeyError:
        raise ValueError(f"signal number must be 1..9, got {number}") from None
    num, den = TEST_FILTERS[name]
    return apply_rational_filter(draw_excitation(exc.with_seed(seed), length), num, den)


# -- decimated data vectors -------------------------------------------------


@dataclass(frozen=True)
class DataVector:
    """``x(M*k - i)`` for ``k = start..n``; earlier entries are implicit zeros."""

    entries: np.ndarray
    M: int
    i: int
    n: int
    start: int = field(default=0)

    def dense(self) -> np.ndarray:
        """Entries over the full block range ``k = 0..n``."""
        out = np.zeros(self.n + 1)
        out[self.start:] = self.entries
        return out


@dataclass(frozen=True)
class DataMatrix:
    """Stack of ``p`` data vectors; row ``r`` is one sample older than row ``r-1``."""

    rows: tuple[DataVector, ...]
    top_index: int
    p: int

    def dense(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, 0))
        return np.vstack([r.dense() for r in self.rows])


def _first_block(M: int, d: int) -> int:
    return -(-d // M) if d > 0 else 0


def make_data_vector(s: Signal, M: int, i: int, n: int) -> DataVector:
    """Decimated, delayed data vector ``x(M*k - i)``, ``k = 0..n``."""
    if M < 1 or i < 0:
        raise ValueError("need M >= 1 and i >= 0")
    if n < 0:
        return DataVector(np.zeros(0), M, i, n, 0)
    start = min(_first_block(M, i), n + 1)
    idx = M * np.arange(start, n + 1) - i
    if idx.size and idx[-1] >= len(s):
        raise ValueError(f"sample {idx[-1]} needed but signal has length {len(s)}")
    return DataVector(s.samples[idx].copy(), M, i, n, start)


def make_data_matrix(s: Signal, top_index: int, p: int, *, M: int = 1, n: int | None = None) -> DataMatrix:
    """Rows whose latest entries are ``x(top_index - r)``, ``r = 0..p-1``.

    ``n`` is the block index fixing the ambient length; for ``M == 1`` it
    defaults to ``top_index``.
    """
    if p < 0:
        raise ValueError("p must be >= 0")
    if n is None:
        if M != 1:
            raise ValueError("block index n is required when M > 1")
        n = top_index
    d0 = M * n - top_index
    rows = tuple(make_data_vector(s, M, d0 + r, n) for r in range(p))
    return DataMatrix(rows, top_index, p)

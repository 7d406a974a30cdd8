"""Channel and signal generation, the real-valued model, and tree metrics.

The detection tree is ordered from the last transmit element ``x_m`` down to
``x_1``.  A node at depth ``l`` fixes the tail ``x_{m-l+1}, ..., x_m``; its
branch metric is the squared residual of row ``m-l+1`` of ``y - R x`` and its
path metric is the running sum of branch metrics along the way down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DegenerateChannelError, InvalidParameterError, InvalidSymbolError

__all__ = [
    "Constellation",
    "BPSK",
    "QPSK",
    "QAM16",
    "get_constellation",
    "ComplexChannelInstance",
    "RealSystem",
    "PartialPath",
    "random_base_channel",
    "generate_varying_channel",
    "to_real_system",
    "draw_symbols",
    "simulate_system",
    "branch_metric",
    "path_metric",
    "snr_to_noise_variance",
    "slice_to_alphabet",
]

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class Constellation:
    """Square QAM alphabet described by its PAM levels.

    ``BPSK`` is the one real-only member: its transmit symbols are the PAM
    levels themselves and the real model keeps ``m = N_T``.
    """

    pam_levels: tuple[float, ...]
    modulation_name: str

    def __post_init__(self):
        levels = np.asarray(self.pam_levels, dtype=float)
        if levels.size < 2:
            raise InvalidParameterError("a PAM alphabet needs at least two levels")
        if np.any(np.diff(levels) <= 0):
            raise InvalidParameterError("PAM levels must be strictly increasing")
        if not np.allclose(levels, -levels[::-1]):
            raise InvalidParameterError("PAM levels must be symmetric about zero")

    @property
    def is_real(self) -> bool:
        return self.modulation_name.upper() == "BPSK"

    @property
    def size(self) -> int:
        """Number of PAM levels, i.e. the action count per tree layer."""
        return len(self.pam_levels)

    @cached_property
    def levels(self) -> np.ndarray:
        arr = np.array(self.pam_levels, dtype=float)
        arr.flags.writeable = False
        return arr

    @property
    def real_symbol_energy(self) -> float:
        """Mean energy of one real component."""
        return float(np.mean(self.levels ** 2))

    @property
    def symbol_energy(self) -> float:
        """Mean transmit-symbol energy sigma_x^2 of the (complex) alphabet."""
        if self.is_real:
            return self.real_symbol_energy
        a, b = np.meshgrid(self.levels, self.levels)
        return float(np.mean(a ** 2 + b ** 2))

    def index_of(self, value: float) -> int:
        idx = np.flatnonzero(self.levels == value)
        if idx.size == 0:
            raise InvalidSymbolError(f"{value!r} is not a level of {self.modulation_name}")
        return int(idx[0])


BPSK = Constellation((-1.0, 1.0), "BPSK")
QPSK = Constellation((-1.0, 1.0), "QPSK")
QAM16 = Constellation((-3.0, -1.0, 1.0, 3.0), "16QAM")

_CONSTELLATIONS = {c.modulation_name.upper(): c for c in (BPSK, QPSK, QAM16)}


def get_constellation(name: str) -> Constellation:
    try:
        return _CONSTELLATIONS[name.strip().upper()]
    except KeyError:
        raise InvalidParameterError(
            f"unknown modulation {name!r}; expected one of {sorted(_CONSTELLATIONS)}"
        ) from None


@dataclass(frozen=True)
class ComplexChannelInstance:
    """Base channel ``H_c`` plus the per-symbol variation settings.

    ``rng_seed`` seeds the stream of variation matrices ``W_c^j``.  For a
    real (BPSK) channel ``H_c`` has zero imaginary part.
    """

    H_c: np.ndarray
    epsilon: float
    rng_seed: int

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidParameterError(f"epsilon must lie in [0, 1], got {self.epsilon}")

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.H_c)


def _gaussian_matrix(rng: np.random.Generator, shape, real: bool) -> np.ndarray:
    if real:
        return rng.standard_normal(shape)
    # CN(0, 1): unit total variance, half per component
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def random_base_channel(n_t: int, n_r: int, constellation: Constellation,
                        epsilon: float, seed: int) -> ComplexChannelInstance:
    """Draw ``H_c`` with unit-variance i.i.d. Gaussian entries."""
    rng = np.random.default_rng([seed, 0])
    H_c = _gaussian_matrix(rng, (n_r, n_t), constellation.is_real)
    return ComplexChannelInstance(H_c, epsilon, seed)


def generate_varying_channel(base: ComplexChannelInstance, j: int) -> np.ndarray:
    """Channel seen by the ``j``-th symbol vector: sqrt(1-eps^2) H_c + eps W_c^j."""
    if not 0.0 <= base.epsilon <= 1.0:
        raise InvalidParameterError(f"epsilon must lie in [0, 1], got {base.epsilon}")
    if j < 1:
        raise InvalidParameterError(f"symbol index j must be >= 1, got {j}")
    eps = base.epsilon
    if eps == 0.0:
        return base.H_c.copy()
    rng = np.random.default_rng([base.rng_seed, 1, j])
    W = _gaussian_matrix(rng, base.H_c.shape, base.is_real)
    if eps == 1.0:
        return W
    return math.sqrt(1.0 - eps * eps) * base.H_c + eps * W


def snr_to_noise_variance(snr_db: float, n_t: int, sigma_x2: float) -> float:
    """Noise variance sigma_w^2 such that N_T sigma_x^2 / sigma_w^2 = SNR."""
    if not math.isfinite(snr_db):
        raise InvalidParameterError("snr_db must be finite")
    return n_t * sigma_x2 / 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True, eq=False)
class RealSystem:
    """Real-valued detection instance ``y' = H x + w`` and its QR form.

    ``sigma_w2`` is the noise variance per real dimension.  ``x_true`` is
    carried along for scoring only; detectors never read it.
    """

    H: np.ndarray
    y_prime: np.ndarray
    Q_mat: np.ndarray
    R: np.ndarray
    y: np.ndarray
    sigma_w2: float
    constellation: Constellation
    x_true: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @cached_property
    def Hty(self) -> np.ndarray:
        return self.H.T @ self.y_prime

    @cached_property
    def r_rows(self) -> list[list[float]]:
        # plain-float rows, reversed so row[k][j] multiplies the j-th recovered symbol
        m = self.m
        return [[float(self.R[k, m - 1 - j]) for j in range(m - 1 - k)] for k in range(m)]

    @cached_property
    def r_diag(self) -> list[float]:
        return [float(v) for v in np.diag(self.R)]

    @cached_property
    def y_list(self) -> list[float]:
        return [float(v) for v in self.y]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def to_real_system(H_c: np.ndarray, y_c: np.ndarray, sigma_w2: float,
                   constellation: Constellation,
                   x_true: np.ndarray | None = None) -> RealSystem:
    """Stack a complex model into the real one and QR-decompose it.

    ``sigma_w2`` is the noise variance of the complex (or, for BPSK, real)
    model.  ``x_true`` is the real-model transmit vector, if known.
    """
    if not sigma_w2 > 0:
        raise InvalidParameterError("sigma_w2 must be positive")
    H_c = np.asarray(H_c)
    y_c = np.asarray(y_c)
    if H_c.ndim != 2 or y_c.shape != (H_c.shape[0],):
        raise InvalidParameterError(
            f"inconsistent shapes: H_c {H_c.shape}, y_c {y_c.shape}")
    if constellation.is_real:
        H = np.real(H_c).astype(float)
        y_prime = np.real(y_c).astype(float)
        sigma_real = float(sigma_w2)
    else:
        Hr, Hi = np.real(H_c), np.imag(H_c)
        H = np.block([[Hr, -Hi], [Hi, Hr]])
        y_prime = np.concatenate([np.real(y_c), np.imag(y_c)])
        sigma_real = float(sigma_w2) / 2.0
    n, m = H.shape
    if n < m:
        raise InvalidParameterError(f"need n >= m for the QR form, got n={n}, m={m}")

    Q_mat, R = np.linalg.qr(H, mode="reduced")
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    Q_mat = Q_mat * signs
    R = signs[:, None] * R
    R = np.triu(R)
    if np.min(np.abs(np.diag(R))) < DEGENERATE_TOL:
        raise DegenerateChannelError("channel matrix is rank deficient")

    if x_true is not None:
        x_true = _freeze(x_true)
    return RealSystem(
        H=_freeze(H),
        y_prime=_freeze(y_prime),
        Q_mat=_freeze(Q_mat),
        R=_freeze(R),
        y=_freeze(Q_mat.T @ y_prime),
        sigma_w2=sigma_real,
        constellation=constellation,
        x_true=x_true,
    )


def draw_symbols(constellation: Constellation, n_t: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Uniform transmit vector in the real model (length m)."""
    m = n_t if constellation.is_real else 2 * n_t
    return constellation.levels[rng.integers(0, constellation.size, size=m)]


def simulate_system(H_c: np.ndarray, constellation: Constellation, snr_db: float,
                    rng: np.random.Generator,
                    sigma_w2: float | None = None) -> RealSystem:
    """Transmit a random symbol vector through ``H_c`` and build the real system.

    ``sigma_w2`` overrides the SNR-derived noise variance when given.
    """
    n_r, n_t = H_c.shape
    x = draw_symbols(constellation, n_t, rng)
    if sigma_w2 is None:
        sigma_w2 = snr_to_noise_variance(snr_db, n_t, constellation.symbol_energy)
    if constellation.is_real:
        x_c = x
        w_c = math.sqrt(sigma_w2) * rng.standard_normal(n_r)
        y_c = np.real(H_c) @ x_c + w_c
    else:
        x_c = x[:n_t] + 1j * x[n_t:]
        w_c = math.sqrt(sigma_w2 / 2.0) * (rng.standard_normal(n_r)
                                           + 1j * rng.standard_normal(n_r))
        y_c = H_c @ x_c + w_c
    return to_real_system(H_c, y_c, sigma_w2, constellation, x_true=x)


@dataclass(frozen=True)
class PartialPath:
    """Recovered tail of the symbol vector, in recovery order.

    ``symbols[0]`` is ``x_m`` and ``symbols[-1]`` the most recent element.
    """

    symbols: tuple[float, ...] = ()
    cum_metric: float = 0.0
    last_branch: float = 0.0

    @property
    def step(self) -> int:
        return len(self.symbols)

    def extend(self, sys: RealSystem, candidate: float) -> "PartialPath":
        b = branch_metric(sys, self, candidate)
        return PartialPath(self.symbols + (float(candidate),), self.cum_metric + b, b)

    def tail(self) -> np.ndarray:
        """The recovered elements ``(x_{m-l+1}, ..., x_m)`` in index order."""
        return np.array(self.symbols[::-1], dtype=float)

    @classmethod
    def from_tail(cls, sys: RealSystem, tail: Sequence[float]) -> "PartialPath":
        path = cls()
        for value in reversed(list(tail)):
            path = path.extend(sys, value)
        return path


def _branch(sys: RealSystem, symbols: Sequence[float], candidate: float) -> float:
    step = len(symbols)
    k = sys.m - 1 - step
    acc = sys.y_list[k]
    row = sys.r_rows[k]
    for j in range(step):
        acc -= row[j] * symbols[j]
    # same operation order as tree expansion, so both give identical floats
    acc -= sys.r_diag[k] * candidate
    return acc * acc


def branch_metric(sys: RealSystem, path: PartialPath, candidate: float) -> float:
    """Branch metric of extending ``path`` by ``candidate``.

    ``(y_k - sum_{i>=k} r_{k,i} x_i)^2`` with ``k = m - path.step`` and
    ``x_k = candidate``.
    """
    if path.step >= sys.m:
        raise InvalidParameterError("path is already complete")
    return _branch(sys, path.symbols, float(candidate))


def path_metric(sys: RealSystem, symbols: Sequence[float]) -> float:
    """Accumulated metric ``d(x_k^m)`` of an index-ordered tail ``x_k..x_m``.

    A full-length vector gives ``||y - R x||^2``; an empty one gives 0.
    """
    tail = [float(v) for v in np.asarray(symbols, dtype=float).ravel()]
    if len(tail) > sys.m:
        raise InvalidParameterError("path longer than the system dimension")
    levels = set(sys.constellation.pam_levels)
    for v in tail:
        if v not in levels:
            raise InvalidSymbolError(f"{v!r} is not a level of "
                                     f"{sys.constellation.modulation_name}")
    recovered: list[float] = []
    total = 0.0
    for v in reversed(tail):
        total += _branch(sys, recovered, v)
        recovered.append(v)
    return total


def slice_to_alphabet(values: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Nearest PAM level per component; ties go to the smaller level."""
    levels = constellation.levels
    values = np.asarray(values, dtype=float)
    dist = np.abs(values[..., None] - levels)
    # argmin returns the first minimum, i.e. the smaller level on ties
    return levels[np.argmin(dist, axis=-1)]


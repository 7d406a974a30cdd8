"""Exact ML detection and the linear MMSE baseline."""

from __future__ import annotations

import itertools

import numpy as np

from .errors import CapacityError, NumericalError
from .signal_model import RealSystem, slice_to_alphabet

__all__ = ["ML_SEARCH_CAP", "detect_ml", "detect_ml_exhaustive", "mmse_estimate", "detect_mmse"]

ML_SEARCH_CAP = 2 ** 20


def _check_cap(sys: RealSystem, cap: int) -> None:
    size = sys.constellation.size ** sys.m
    if size > cap:
        raise CapacityError(f"search space {size} exceeds cap {cap}")


def detect_ml(sys: RealSystem, cap: int = ML_SEARCH_CAP) -> np.ndarray:
    """Minimise ``d(x_1^m)`` by depth-first branch and bound.

    Children are visited in PAM order and the incumbent is replaced only on a
    strict improvement, so the result is the first minimiser in enumeration
    order, identical to plain exhaustive search.
    """
    _check_cap(sys, cap)
    m = sys.m
    levels = [float(v) for v in sys.constellation.levels]
    y, diag, rows = sys.y_list, sys.r_diag, sys.r_rows

    best = [np.inf]
    best_path: list[list[float]] = [[]]
    path: list[float] = []

    def descend(depth: int, metric: float) -> None:
        k = m - 1 - depth
        row = rows[k]
        interference = y[k]
        for j in range(depth):
            interference -= row[j] * path[j]
        for v in levels:
            r = interference - diag[k] * v
            d = metric + r * r
            if d >= best[0]:
                continue
            path.append(v)
            if depth + 1 == m:
                best[0] = d
                best_path[0] = list(path)
            else:
                descend(depth + 1, d)
            path.pop()

    descend(0, 0.0)
    # recovery order is x_m first
    return np.array(best_path[0][::-1])


def detect_ml_exhaustive(sys: RealSystem, cap: int = ML_SEARCH_CAP) -> np.ndarray:
    """Unpruned enumeration of ``Q^m``, used as the reference for ``detect_ml``."""
    _check_cap(sys, cap)
    levels = sys.constellation.levels
    # product over (x_m, ..., x_1) so that the enumeration order matches the tree
    cands = np.array(list(itertools.product(levels, repeat=sys.m)))[:, ::-1]
    resid = sys.y[None, :] - cands @ sys.R.T
    metrics = np.einsum("ij,ij->i", resid, resid)
    return cands[int(np.argmin(metrics))].copy()


def mmse_estimate(sys: RealSystem) -> np.ndarray:
    """Unsliced linear MMSE estimate ``(H^T H + s I)^-1 H^T y'``.

    ``s`` is the ratio of per-real-dimension noise and symbol variances.
    """
    H = sys.H
    ratio = sys.sigma_w2 / sys.constellation.real_symbol_energy
    A = H.T @ H + ratio * np.eye(sys.m)
    try:
        x_hat = np.linalg.solve(A, H.T @ sys.y_prime)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"MMSE solve failed: {exc}") from exc
    if not np.all(np.isfinite(x_hat)):
        raise NumericalError("MMSE solve produced non-finite values")
    return x_hat


def detect_mmse(sys: RealSystem) -> np.ndarray:
    return slice_to_alphabet(mmse_estimate(sys), sys.constellation)

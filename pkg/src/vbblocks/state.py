"""Posterior-state containers for variable nodes.

Scale-type quantities (variances, truncated-Gaussian squared scales,
Dirichlet pseudo-counts) are stored together with their logarithm, and the
log is the canonical coordinate: the flat parameter encoding used by the
line search reads and writes the log field directly, which makes
encode/decode round trips bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .messages import VARIANCE_FLOOR, truncated_gaussian_moments


def _vec(x, n: int) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape != (n,):
        raise ValueError(f"expected shape ({n},), got {a.shape}")
    return a.copy()


class GaussianState:
    """Factorial posterior q(s) = N(mean, var) per sample; an observed node
    is a clamped point mass (variance exactly zero)."""

    __slots__ = ("mean", "_var", "_log_var", "observed")

    def __init__(self, n: int, mean=0.0, var=1.0):
        self.mean = _vec(mean, n)
        self.observed = False
        self.set_var(_vec(var, n))

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    @property
    def var(self) -> np.ndarray:
        return self._var

    @property
    def log_var(self) -> np.ndarray:
        return self._log_var

    def set_var(self, var) -> None:
        v = np.maximum(_vec(var, self.n), VARIANCE_FLOOR)
        self._var = v
        self._log_var = np.log(v)

    def set_log_var(self, log_var) -> None:
        lv = _vec(log_var, self.n)
        self._log_var = lv
        self._var = np.exp(lv)

    def clamp(self, values) -> None:
        self.mean = _vec(values, self.n)
        self._var = np.zeros(self.n)
        self._log_var = np.full(self.n, -np.inf)
        self.observed = True


class RectifiedState:
    """Truncated-Gaussian posterior on [0, inf): q(s) proportional to
    N(s | loc, scale2) for s >= 0."""

    __slots__ = ("loc", "_scale2", "_log_scale2")

    def __init__(self, n: int, loc=0.0, scale2=1.0):
        self.loc = _vec(loc, n)
        self.set_scale2(_vec(scale2, n))

    @property
    def n(self) -> int:
        return self.loc.shape[0]

    @property
    def scale2(self) -> np.ndarray:
        return self._scale2

    @property
    def log_scale2(self) -> np.ndarray:
        return self._log_scale2

    def set_scale2(self, scale2) -> None:
        s = np.maximum(_vec(scale2, self.n), VARIANCE_FLOOR)
        self._scale2 = s
        self._log_scale2 = np.log(s)

    def set_log_scale2(self, log_scale2) -> None:
        ls = _vec(log_scale2, self.n)
        self._log_scale2 = ls
        self._scale2 = np.exp(ls)

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        return truncated_gaussian_moments(self.loc, self._scale2)


class MixtureState:
    """Per-sample categorical responsibilities plus a single Gaussian
    posterior for the value."""

    __slots__ = ("value", "resp")

    def __init__(self, n: int, k: int):
        self.value = GaussianState(n)
        self.resp = np.full((n, k), 1.0 / k)

    @property
    def n(self) -> int:
        return self.value.n

    @property
    def k(self) -> int:
        return self.resp.shape[1]

    def set_resp(self, resp) -> None:
        r = np.asarray(resp, dtype=float)
        if r.shape != self.resp.shape:
            raise ValueError(f"expected shape {self.resp.shape}, got {r.shape}")
        self.resp = r.copy()


class DirichletState:
    """Posterior pseudo-counts of the mixture weights."""

    __slots__ = ("_counts", "_log_counts")

    def __init__(self, k: int, counts=1.0):
        self.set_counts(_vec(counts, k))

    @property
    def k(self) -> int:
        return self._counts.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    @property
    def log_counts(self) -> np.ndarray:
        return self._log_counts

    def set_counts(self, counts) -> None:
        c = np.asarray(counts, dtype=float)
        if np.any(c <= 0):
            raise ValueError("Dirichlet pseudo-counts must stay positive")
        self._counts = c.copy()
        self._log_counts = np.log(c)

    def set_log_counts(self, log_counts) -> None:
        lc = np.asarray(log_counts, dtype=float).copy()
        self._log_counts = lc
        self._counts = np.exp(lc)


@dataclass
class EvidenceSchedule:
    """Fading virtual likelihood used to steer initialisation: the weight
    decays linearly from 1 to exactly 0 over ``fade_sweeps`` sweeps."""

    target: float
    precision: float
    fade_sweeps: int
    sweep: int = 0

    def __post_init__(self):
        if self.precision <= 0:
            raise ValueError("evidence precision must be positive")
        if self.fade_sweeps < 1:
            raise ValueError("fade_sweeps must be a positive integer")

    @property
    def weight(self) -> float:
        return max(0.0, 1.0 - self.sweep / self.fade_sweeps)

    def advance(self) -> None:
        self.sweep += 1

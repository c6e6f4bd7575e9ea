"""Sufficient-statistics algebra for the building-block network.

Forward messages carry the moments a node exposes to its descendants:
the expected value, the variance and (for nodes that may serve as a
variance parent) the expected exponential ``<e^s>``.  Backward messages
carry the coefficients of a parent's moments in its children's expected
cost: every child cost in this framework is affine either in
``(<s>, <s^2>)`` or in ``(<s>, <e^s>)``, so a pair of coefficients is a
lossless encoding of the likelihood potential.

All functions are pure and operate on numpy arrays so that the per-sample
dimension of vector nodes is handled by broadcasting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

VARIANCE_FLOOR = 1e-300

_LOG_2PI = float(np.log(2.0 * np.pi))


def _arr(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass
class ForwardStats:
    """Moments a node output exposes downstream.

    ``exp`` is ``None`` for nodes that cannot serve as a variance parent
    (products, nonlinearities, rectified and mixture variables).
    """

    mean: np.ndarray
    var: np.ndarray
    exp: np.ndarray | None = None

    def __post_init__(self):
        self.mean = _arr(self.mean)
        self.var = _arr(self.var)
        if self.exp is not None:
            self.exp = _arr(self.exp)

    @property
    def second_moment(self) -> np.ndarray:
        return self.var + self.mean**2

    def __len__(self) -> int:
        return max(self.mean.shape[0], self.var.shape[0])


def constant_stats(value) -> ForwardStats:
    """A fixed value c has moments (c, 0, e^c)."""
    v = _arr(value)
    return ForwardStats(v, np.zeros_like(v), np.exp(v))


@dataclass
class MeanPotential:
    """Coefficients of ``<theta^2>`` (quad) and ``<theta>`` (lin) in a
    child cost, addressed to a mean-route parent."""

    quad: np.ndarray
    lin: np.ndarray

    def __post_init__(self):
        self.quad = _arr(self.quad)
        self.lin = _arr(self.lin)


@dataclass
class VarPotential:
    """Coefficients of ``<e^theta>`` (exp_coef) and ``<theta>`` (lin) in a
    child cost, addressed to a variance-route parent."""

    exp_coef: np.ndarray
    lin: np.ndarray

    def __post_init__(self):
        self.exp_coef = _arr(self.exp_coef)
        self.lin = _arr(self.lin)


class MissingExpStat(ValueError):
    """A variance-route computation needed <e^s> from a node that does not
    provide it."""


# ---------------------------------------------------------------------------
# forward moments
# ---------------------------------------------------------------------------

def forward_gaussian(mean, var) -> ForwardStats:
    """Moments of a Gaussian posterior: (m, v, exp(m + v/2))."""
    mean = _arr(mean)
    var = _arr(var)
    return ForwardStats(mean, var, np.exp(mean + 0.5 * var))


def forward_sum(inputs: list[ForwardStats]) -> ForwardStats:
    """Sum of independent inputs: means and variances add, expected
    exponentials multiply (when every input provides one)."""
    if not inputs:
        raise ValueError("sum node needs at least one input")
    mean = sum(s.mean for s in inputs)
    var = sum(s.var for s in inputs)
    if all(s.exp is not None for s in inputs):
        exp = inputs[0].exp
        for s in inputs[1:]:
            exp = exp * s.exp
    else:
        exp = None
    return ForwardStats(mean, var, exp)


def forward_product(a: ForwardStats, b: ForwardStats) -> ForwardStats:
    """Product of two independent inputs; no expected exponential."""
    mean = a.mean * b.mean
    var = a.mean**2 * b.var + b.mean**2 * a.var + a.var * b.var
    return ForwardStats(mean, var, None)


def forward_nonlin_expsquare(mean, var) -> ForwardStats:
    """Moments of exp(-s^2) for Gaussian s.

    E[exp(-L s^2)] = (1 + 2 L v)^(-1/2) exp(-L m^2 / (1 + 2 L v)), applied
    with L = 1 for the mean and L = 2 for the second moment.
    """
    m = _arr(mean)
    v = _arr(var)
    r1 = 1.0 + 2.0 * v
    r2 = 1.0 + 4.0 * v
    first = np.exp(-(m**2) / r1) / np.sqrt(r1)
    second = np.exp(-2.0 * m**2 / r2) / np.sqrt(r2)
    return ForwardStats(first, np.maximum(second - first**2, 0.0), None)


def _norm_pdf(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def norm_cdf(x):
    return special.ndtr(x)


def pdf_over_cdf(alpha) -> np.ndarray:
    """phi(alpha)/Phi(alpha), evaluated in log space so the far negative
    tail (alpha < -6, where Phi underflows) stays finite and accurate."""
    a = _arr(alpha)
    return np.exp(-0.5 * a * a - 0.5 * _LOG_2PI - special.log_ndtr(a))


def forward_nonlin_cut(mean, var) -> ForwardStats:
    """Moments of max(s, 0) for Gaussian s; a zero-variance input passes
    through as the point mass max(m, 0)."""
    m = _arr(mean)
    v = _arr(var)
    sd = np.sqrt(v)
    out_mean = np.where(m > 0, m, 0.0)
    out_second = out_mean**2
    pos = sd > 0
    if np.any(pos):
        alpha = np.divide(m, sd, out=np.zeros_like(m + sd), where=pos)
        cdf = norm_cdf(alpha)
        pdf = _norm_pdf(alpha)
        first = m * cdf + sd * pdf
        second = (m**2 + v) * cdf + m * sd * pdf
        out_mean = np.where(pos, first, out_mean)
        out_second = np.where(pos, second, out_second)
    return ForwardStats(out_mean, np.maximum(out_second - out_mean**2, 0.0), None)


def truncated_gaussian_moments(loc, scale2) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of N(loc, scale2) restricted to [0, inf)."""
    loc = _arr(loc)
    scale2 = _arr(scale2)
    sd = np.sqrt(scale2)
    alpha = loc / sd
    lam = pdf_over_cdf(alpha)
    mean = loc + sd * lam
    var = scale2 * np.maximum(1.0 - alpha * lam - lam**2, 0.0)
    return mean, var


# ---------------------------------------------------------------------------
# backward potential transformations
# ---------------------------------------------------------------------------

def backward_mean_through_sum(p: MeanPotential, sibling_mean_total) -> MeanPotential:
    """Re-address a mean potential on a sum output to one summand.

    <(s + r)^2> = <s^2> + 2 <s> <r> + <r^2> for independent summands, so the
    quadratic coefficient is unchanged and the sibling means fold into the
    linear one.
    """
    sib = _arr(sibling_mean_total)
    return MeanPotential(p.quad, p.lin + 2.0 * p.quad * sib)


def backward_mean_through_product(p: MeanPotential, other: ForwardStats) -> MeanPotential:
    """Re-address a mean potential on a product output to one factor:
    <(s1 s2)^2> = <s1^2><s2^2> and <s1 s2> = <s1><s2>."""
    return MeanPotential(p.quad * other.second_moment, p.lin * other.mean)


def backward_var_through_sum(p: VarPotential, sibling_exp_total) -> VarPotential:
    """Re-address a variance potential on a sum output to one summand:
    <e^(a+b)> = <e^a><e^b> for independent summands."""
    sib = _arr(sibling_exp_total)
    return VarPotential(p.exp_coef * sib, p.lin)


def gaussian_child_potentials(
    child_stats: ForwardStats,
    mean_parent: ForwardStats,
    var_parent: ForwardStats,
) -> tuple[MeanPotential, VarPotential]:
    """Potentials a Gaussian child N(s | m, e^-v) exerts on its parents.

    The expected negative log density per sample is

        1/2 <e^v> [(<s> - <m>)^2 + Var(s) + Var(m)] - 1/2 <v> + 1/2 log 2 pi

    which is affine in (<m>, <m^2>) and in (<v>, <e^v>).
    """
    if var_parent.exp is None:
        raise MissingExpStat("variance parent does not provide <e^v>")
    pe = var_parent.exp
    mean_pot = MeanPotential(0.5 * pe, -pe * child_stats.mean)
    spread = (child_stats.mean - mean_parent.mean) ** 2 + child_stats.var + mean_parent.var
    var_pot = VarPotential(0.5 * spread, np.full_like(spread, -0.5))
    return mean_pot, var_pot


def gaussian_nll(child_stats: ForwardStats, mean_parent: ForwardStats,
                 var_parent: ForwardStats) -> np.ndarray:
    """Per-sample <-log N(s | m, e^-v)> under the factorial posterior."""
    if var_parent.exp is None:
        raise MissingExpStat("variance parent does not provide <e^v>")
    spread = (child_stats.mean - mean_parent.mean) ** 2 + child_stats.var + mean_parent.var
    return 0.5 * var_parent.exp * spread - 0.5 * var_parent.mean + 0.5 * _LOG_2PI


# ---------------------------------------------------------------------------
# delay shifting
# ---------------------------------------------------------------------------

def shift_delay_forward(seq: ForwardStats, init: ForwardStats, length: int) -> ForwardStats:
    """Delay a time-indexed signal by one step: output(1) is the initial
    distribution, output(t) = input(t-1)."""

    def shift(a: np.ndarray | None, b: np.ndarray | None):
        if a is None or b is None:
            return None
        a = np.broadcast_to(a, (length,))
        return np.concatenate([b[:1], a[: length - 1]])

    return ForwardStats(
        shift(seq.mean, init.mean),
        shift(seq.var, init.var),
        shift(seq.exp, init.exp if seq.exp is not None else None),
    )


def shift_delay_backward(values: np.ndarray, length: int) -> np.ndarray:
    """Adjoint of the forward shift for per-slot potential coefficients:
    a potential at output slot t belongs to input slot t-1; slot 1 routes
    to the initial-distribution parent and is dropped here."""
    values = np.broadcast_to(_arr(values), (length,))
    return np.concatenate([values[1:], np.zeros(1)])

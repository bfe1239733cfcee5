"""Partition sums, topological pressure, and the Bowen-equation root.

Pressure is estimated from weighted periodic-orbit sums
P(f, phi, n) = sum_{x in Fix(f^n)} exp(S_n phi(x)). Successive log
differences log P(n) - log P(n-1) cancel the bounded multiplicative
constant in the growth bound, unlike log P(n)/n which carries an O(1/n)
bias. The stable-dimension root solve reuses cached Birkhoff sums of the
stable potential, so each pressure evaluation is a single log-sum-exp.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import NoSignChange, PressureNotConverged
from .orbits import birkhoff_sums, fixed_points
from .potentials import stable_potential
from .stable_structure import HORIZON_DEFAULT


@dataclass(frozen=True)
class PartitionSum:
    n: int
    value: float
    log_value: float


@dataclass(frozen=True, eq=False)
class PressureEstimate:
    value: float
    per_n: tuple  # (n, log P(f,phi,n)/n)
    method: str
    uncertainty: float
    log_values: tuple


@dataclass(frozen=True, eq=False)
class BowenRoot:
    t_star: float
    bracket: tuple
    residual: float
    evaluations: tuple  # (t, g(t), uncertainty) in evaluation order


def partition_sum(model, potential, n):
    """Log-sum-exp accumulation of Birkhoff weights over Fix(f^n)."""
    pts = fixed_points(model, n).points
    sums = birkhoff_sums(model, potential, pts, n)
    log_value = float(logsumexp(sums))
    return PartitionSum(n=n, value=float(np.exp(log_value)), log_value=log_value)


def pressure(model, potential, n_max):
    """Pressure estimate from successive partition-sum log differences."""
    if n_max < 3:
        raise ValueError("n_max must be >= 3")
    logs = [partition_sum(model, potential, n).log_value for n in range(1, n_max + 1)]
    per_n = tuple((n, logs[n - 1] / n) for n in range(1, n_max + 1))
    diff_last = logs[-1] - logs[-2]
    diff_prev = logs[-2] - logs[-3]
    return PressureEstimate(value=diff_last, per_n=per_n, method="slope_extrapolation",
                            uncertainty=abs(diff_last - diff_prev), log_values=tuple(logs))


def _stable_sums(model, n, horizon):
    key = ("stable_sums", n, horizon)
    sums = model._cache.get(key)
    if sums is None:
        pts = fixed_points(model, n).points
        sums = birkhoff_sums(model, stable_potential(model, horizon), pts, n)
        model._cache[key] = sums
    return sums


def bowen_root(model, n_max=8, d=None, horizon=HORIZON_DEFAULT, t_max=4.0,
               t_tol=1e-3, max_uncertainty=0.02):
    """Solve P(t * log|Df_s|) = log d for t by noise-aware bisection.

    The map t -> g(t) = P(t Phi^s) - log d is strictly decreasing since
    Phi^s < 0 on hyperbolic models, so a sign change on [0, t_max] brackets
    a unique root. A midpoint whose |g| falls below twice the estimator
    uncertainty cannot be signed reliably and is accepted as the root.
    """
    if n_max < 3:
        raise ValueError("n_max must be >= 3")
    if d is None:
        d = model.degree
    log_d = float(np.log(d))
    key = ("bowen_root", n_max, d, horizon, t_max, t_tol)
    cached = model._cache.get(key)
    if cached is not None:
        return cached
    sums = {n: _stable_sums(model, n, horizon) for n in (n_max - 2, n_max - 1, n_max)}
    evaluations = []

    def g(t):
        logs = [float(logsumexp(t * sums[n])) for n in (n_max - 2, n_max - 1, n_max)]
        value = logs[2] - logs[1] - log_d
        unc = abs((logs[2] - logs[1]) - (logs[1] - logs[0]))
        evaluations.append((t, value, unc))
        return value, unc

    def done(t, value):
        root = BowenRoot(t_star=t, bracket=(t, t), residual=abs(value),
                         evaluations=tuple(evaluations))
        model._cache[key] = root
        return root

    g_lo, unc_lo = g(0.0)
    if unc_lo > max_uncertainty:
        raise PressureNotConverged(
            f"pressure uncertainty {unc_lo:.4f} exceeds {max_uncertainty} at n_max={n_max}")
    if abs(g_lo) <= 2 * unc_lo:
        return done(0.0, g_lo)
    if g_lo < 0:
        raise NoSignChange(f"P(0) - log d = {g_lo:.4f} < 0; no root in [0, {t_max}]")
    g_hi, unc_hi = g(t_max)
    if abs(g_hi) <= 2 * unc_hi:
        return done(t_max, g_hi)
    if g_hi > 0:
        raise NoSignChange(f"pressure at t={t_max} still above log d; widen the bracket")
    lo, hi = 0.0, t_max
    while hi - lo > t_tol:
        mid = 0.5 * (lo + hi)
        g_mid, unc_mid = g(mid)
        if abs(g_mid) <= 2 * unc_mid:
            return done(mid, g_mid)
        if g_mid > 0:
            lo = mid
        else:
            hi = mid
    t_star = 0.5 * (lo + hi)
    g_star, _ = g(t_star)
    root = BowenRoot(t_star=t_star, bracket=(lo, hi), residual=abs(g_star),
                     evaluations=tuple(evaluations))
    model._cache[key] = root
    return root

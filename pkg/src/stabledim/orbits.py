"""Periodic-point enumeration and Birkhoff sums.

Linear toral fixed points are enumerated exactly: solutions of
(A^n - I) y in Z^2 correspond to lattice residues of Z^2/(A^n - I)Z^2,
computed in integer arithmetic and reduced to [0,1)^2 without rounding
ambiguity. Perturbed models continue each exact solution through a Newton
homotopy in eps.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import torus
from .errors import BudgetExceeded, ContinuationFailure
from .models import (HOMOTOPY_STEP, ProductAttractorCircle, ProductPowerToral,
                     ToralLinear, ToralPerturbed, lattice_residues)

ATOM_BUDGET = 10**7
# Per-step shooting residuals bottom out near machine precision; verifying
# f^n directly amplifies point error by lam_u^n, so the per-step target must
# sit at the floor for the 1e-9 periodicity contract to hold at n ~ 9.
PERIODIC_TOL = 2e-14
PERIODIC_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class PeriodicOrbitSet:
    n: int
    points: np.ndarray
    method: str

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class BirkhoffSum:
    value: float
    n: int
    base_point: np.ndarray


def _int_mat_pow(a, n):
    """Exact 2x2 integer matrix power (Python ints, no overflow)."""
    result = [[1, 0], [0, 1]]
    base = [[int(a[0][0]), int(a[0][1])], [int(a[1][0]), int(a[1][1])]]
    k = n
    while k:
        if k & 1:
            result = _int_mat_mul(result, base)
        base = _int_mat_mul(base, base)
        k >>= 1
    return result


def _int_mat_mul(a, b):
    return [[a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]]]


def linear_fixed_count(A, n):
    """|det(A^n - I)| via exact integer arithmetic."""
    p = _int_mat_pow([[A.a11, A.a12], [A.a21, A.a22]], n)
    b = [[p[0][0] - 1, p[0][1]], [p[1][0], p[1][1] - 1]]
    return abs(b[0][0] * b[1][1] - b[0][1] * b[1][0])


def predicted_fixed_count(model, n):
    if isinstance(model, (ToralLinear, ToralPerturbed)):
        return linear_fixed_count(model.A, n)
    if isinstance(model, ProductAttractorCircle):
        return 2 ** n - 1
    if isinstance(model, ProductPowerToral):
        return (model.k ** n - 1) * linear_fixed_count(model.A, n)
    raise TypeError(f"unsupported model {model!r}")


def _linear_toral_fixed(A, n):
    """All y in [0,1)^2 with A^n y = y (mod 1), exactly."""
    p = _int_mat_pow([[A.a11, A.a12], [A.a21, A.a22]], n)
    b11, b12 = p[0][0] - 1, p[0][1]
    b21, b22 = p[1][0], p[1][1] - 1
    det = b11 * b22 - b12 * b21
    reps = lattice_residues([[b11, b12], [b21, b22]])
    adj = np.array([[b22, -b12], [-b21, b11]], dtype=np.int64)
    m = abs(det)
    sgn = 1 if det > 0 else -1
    # guard int64 products: |adj| * |reps| stays far below 2^63 at budget scale
    if float(np.abs(adj).max()) * float(max(m, 1)) >= 2**62:
        raise BudgetExceeded("integer enumeration would overflow int64")
    num = (sgn * (reps @ adj.T)) % m
    return num.astype(float) / float(m)


def _circle_fixed(k, n):
    m = k ** n - 1
    return (np.arange(m, dtype=float) / float(m))[:, None]


def _sorted(points):
    order = np.lexsort(points.T[::-1])
    return points[order]


def _solve2(m, rhs):
    """Batched 2x2 solve m @ x = rhs; m: (N,2,2), rhs: (N,2)."""
    det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
    x0 = (m[:, 1, 1] * rhs[:, 0] - m[:, 0, 1] * rhs[:, 1]) / det
    x1 = (-m[:, 1, 0] * rhs[:, 0] + m[:, 0, 0] * rhs[:, 1]) / det
    return np.stack([x0, x1], axis=1)


def _newton_periodic_orbit(model, orbit, tol=PERIODIC_TOL, max_iter=40):
    """Multiple-shooting Newton for period-n orbits of a 2D model.

    `orbit` has shape (n, N, 2): stage i holds f^i of the N candidate
    points. Working with per-step residuals keeps every wrap small, which
    single shooting on f^n cannot guarantee once lam_u^n * (step in eps)
    exceeds the torus size. The Newton system is condensed onto stage 0
    through the cocycle P = J_{n-1} ... J_0.
    """
    y = torus.wrap(np.array(orbit, dtype=float))
    n, count = y.shape[0], y.shape[1]
    prev = np.inf
    worst = np.inf
    for _ in range(max_iter):
        nxt = model.apply(y.reshape(-1, 2)).reshape(y.shape)
        res = torus.delta(nxt, np.roll(y, -1, axis=0))
        worst = float(np.abs(res).max())
        if worst < tol:
            return y
        if worst >= 0.7 * prev:
            if worst < PERIODIC_FLOOR:
                return y
            break
        prev = worst
        prod = np.broadcast_to(np.eye(2), (count, 2, 2)).copy()
        acc = np.zeros((count, 2))
        stage_jac = []
        for i in range(n):
            jac = model.differential(y[i])
            stage_jac.append(jac.astype(np.float32))  # reused below; f32 is ample
            acc = np.einsum("nij,nj->ni", jac, acc) + res[i]
            prod = jac @ prod
        prod[:, 0, 0] -= 1.0
        prod[:, 1, 1] -= 1.0
        delta = _solve2(prod, -acc)
        for i in range(n):
            y[i] = torus.wrap(y[i] + delta)
            delta = np.einsum("nij,nj->ni", stage_jac[i], delta) + res[i]
    raise ContinuationFailure(
        f"period-{n} Newton stalled at residual {worst:.3e}")


def _continue_periodic(A, n, pts, eps_target, step=HOMOTOPY_STEP):
    """Continue exact eps=0 period-n points through a Newton homotopy in eps."""
    pts = np.asarray(pts, dtype=float)
    if eps_target == 0.0:
        return pts
    linear = ToralLinear(A)
    orbit = np.empty((n,) + pts.shape)
    orbit[0] = pts
    for i in range(1, n):
        orbit[i] = linear.apply(orbit[i - 1])
    steps = int(math.ceil(eps_target / step))
    for i in range(1, steps + 1):
        e = min(eps_target, i * step)
        orbit = _newton_periodic_orbit(ToralPerturbed(A, e), orbit)
    return orbit[0]


def fixed_points(model, n):
    """The complete solution set of f^n(y) = y on the basic set."""
    if n < 1:
        raise ValueError("n must be >= 1")
    key = ("fixed_points", n)
    cached = model._cache.get(key)
    if cached is not None:
        return cached
    count = predicted_fixed_count(model, n)
    if count > ATOM_BUDGET:
        raise BudgetExceeded(f"{count} periodic points exceed the budget {ATOM_BUDGET}")
    if isinstance(model, ToralLinear):
        pts = _linear_toral_fixed(model.A, n)
        method = "exact_lattice"
    elif isinstance(model, ToralPerturbed):
        pts = _continue_periodic(model.A, n, _linear_toral_fixed(model.A, n), model.eps)
        method = "newton_continuation" if model.eps > 0 else "exact_lattice"
    elif isinstance(model, ProductAttractorCircle):
        ang = _circle_fixed(2, n)
        pts = np.concatenate([np.zeros_like(ang), ang], axis=1)
        method = "exact_lattice"
    elif isinstance(model, ProductPowerToral):
        ang = _circle_fixed(model.k, n)[:, 0]
        toral = _linear_toral_fixed(model.A, n)
        if model.eps > 0:
            toral = _continue_periodic(model.A, n, toral, model.eps)
        na, nt = ang.shape[0], toral.shape[0]
        pts = np.empty((na * nt, 3))
        pts[:, 0] = np.repeat(ang, nt)
        pts[:, 1:] = np.tile(toral, (na, 1))
        method = "newton_continuation" if model.eps > 0 else "exact_lattice"
    else:
        raise TypeError(f"unsupported model {model!r}")
    out = PeriodicOrbitSet(n=n, points=_sorted(pts), method=method)
    model._cache[key] = out
    return out


def birkhoff_sums(model, potential, pts, n):
    """n-term orbit sums of the potential, batched: sum_{i<n} phi(f^i x)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    birkhoff = getattr(potential, "birkhoff", None)
    if birkhoff is not None:
        return birkhoff(pts, n)
    total = np.zeros(pts.shape[0])
    cur = torus.wrap(pts)
    for _ in range(n):
        total += potential(cur)
        cur = model.apply(cur)
    return total


def birkhoff_sum(model, potential, x, n):
    x = np.asarray(x, dtype=float)
    value = float(birkhoff_sums(model, potential, x[None, :], n)[0])
    return BirkhoffSum(value=value, n=n, base_point=x)


def periodic_birkhoff_sums(model, potential, pts, n):
    """Birkhoff sums over a point set that f permutes, e.g. Fix(f^n).

    Evaluates the potential once per point and accumulates along the
    permutation induced by f (nearest-point lookup), instead of n separate
    evaluations per orbit point. Falls back to the generic scan if the set
    is not recognized as f-invariant.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if getattr(potential, "birkhoff", None) is not None:
        return potential.birkhoff(pts, n)
    if n <= 1 or pts.shape[0] <= 2:
        return birkhoff_sums(model, potential, pts, n)
    from scipy.spatial import cKDTree
    tree = cKDTree(torus.wrap(pts), boxsize=1.0)
    gap, perm = tree.query(model.apply(pts))
    counts = np.bincount(perm, minlength=pts.shape[0])
    if gap.max() > 1e-8 or counts.max() != 1:
        return birkhoff_sums(model, potential, pts, n)
    phi = potential(pts)
    total = phi.copy()
    idx = perm
    for _ in range(n - 1):
        total += phi[idx]
        idx = perm[idx]
    return total


def newton_continuation(model, seed, n, eps_target, step=HOMOTOPY_STEP):
    """Continue a period-n point of the eps=0 model to eps_target.

    The path advances eps in small steps, polishing with Newton at each
    step, so the iterate never leaves the quadratic basin.
    """
    if not isinstance(model, (ToralPerturbed, ToralLinear)):
        raise TypeError("continuation applies to toral models")
    if eps_target > 0.05:
        raise ValueError("eps_target outside the supported range")
    seed = np.asarray(seed, dtype=float)
    out = _continue_periodic(model.A, n, seed[None, :], eps_target, step)
    return out[0]

"""Equilibrium-measure atoms and stable conditional-measure diagnostics.

Atoms are weighted periodic points: Fix(f^n) carrying normalized weights
exp(S_n phi). Conditional measures on local stable manifolds are realized
empirically as tube projections: atoms within a thin tube around an
integrated stable segment are projected to arc-length coordinates and
renormalized. Dimension diagnostics are log-log regressions of ball mass
against radius on those slices.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from . import torus
from .errors import (EmptyBall, EmptyComponent, EmptySlice, InsufficientAtoms)
from .models import ProductPowerToral
from .orbits import ATOM_BUDGET, birkhoff_sums, fixed_points, predicted_fixed_count
from .potentials import (Potential, scaled_potential, stable_potential,
                         zero_potential)
from .stable_structure import (HORIZON_DEFAULT, StableDirection,
                               stable_direction, stable_directions)
from .thermo import bowen_root, pressure

SLICE_HORIZON = 15
SLICE_STEPS = 200  # Euler steps per side of a stable segment


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    points: np.ndarray
    weights: np.ndarray
    n: int
    potential_tag: str

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class SliceMeasure:
    """Atoms in a stable-segment tube, projected to arc-length coordinates.

    positions are sorted; cum_weights[i] is the total weight of the first i
    positions, so interval masses are two searchsorted lookups.
    """

    center: np.ndarray
    direction: StableDirection
    r: float
    w: float
    positions: np.ndarray
    weights: np.ndarray
    cum_weights: np.ndarray

    def __len__(self):
        return self.positions.shape[0]

    def ball_mass(self, y, rho):
        lo = np.searchsorted(self.positions, y - rho, side="left")
        hi = np.searchsorted(self.positions, y + rho, side="right")
        return float(self.cum_weights[hi] - self.cum_weights[lo])


@dataclass(frozen=True, eq=False)
class DimensionFit:
    slope: float
    intercept: float
    rho_grid: np.ndarray
    masses: np.ndarray
    r2: float
    spread_constant: float


@dataclass(frozen=True, eq=False)
class GeometricVerdict:
    exponent: float
    c_hat: float
    passed: bool
    threshold: float
    median_slope: float
    slopes: tuple
    slices_used: int
    slices_skipped: int


@dataclass(frozen=True, eq=False)
class ACDiagnostic:
    delta_s: float
    stable_dim_e: int
    is_repellor_verdict: bool
    slice_ac_verdict: bool
    median_slope: float


def make_slice_measure(center, direction, r, w, positions, weights):
    order = np.argsort(positions, kind="stable")
    positions = np.asarray(positions, dtype=float)[order]
    weights = np.asarray(weights, dtype=float)[order]
    weights = weights / weights.sum()
    cum = np.concatenate([[0.0], np.cumsum(weights)])
    return SliceMeasure(center=np.asarray(center, dtype=float), direction=direction,
                        r=float(r), w=float(w), positions=positions,
                        weights=weights, cum_weights=cum)


def equilibrium_atoms(model, potential, n):
    """Weighted periodic points approximating the equilibrium measure."""
    key = ("atoms", potential.tag, n)
    cached = model._cache.get(key)
    if cached is not None:
        return cached
    pts = fixed_points(model, n).points
    sums = birkhoff_sums(model, potential, pts, n)
    weights = np.exp(sums - logsumexp(sums))
    out = AtomicMeasure(points=pts, weights=weights, n=n, potential_tag=potential.tag)
    model._cache[key] = out
    return out


def stable_dimension(model, n_max=8, horizon=HORIZON_DEFAULT):
    """Root of the pressure equation; the model's stable dimension estimate."""
    return bowen_root(model, n_max=n_max, horizon=horizon).t_star


def stable_equilibrium_potential(model, n_max=8, horizon=HORIZON_DEFAULT):
    delta = stable_dimension(model, n_max=n_max, horizon=horizon)
    return scaled_potential(stable_potential(model, horizon), delta)


def stable_equilibrium_atoms(model, n, n_max=8, horizon=HORIZON_DEFAULT):
    """Atoms of the stable equilibrium measure (potential delta_s * Phi^s)."""
    return equilibrium_atoms(model, stable_equilibrium_potential(model, n_max, horizon), n)


def ball_mass(measure, center, rho):
    """Total atom weight within torus distance rho of the center."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    mask = torus.dist(measure.points, np.asarray(center, dtype=float)) <= rho
    return float(measure.weights[mask].sum())


def dyadic_grid(r, levels=7):
    """Dyadic radii r/4 * 2^-j, j = 0..levels-1, decreasing."""
    return (r / 4.0) * 0.5 ** np.arange(levels)


def _bowen_mask(model, atom_orbit, center, order, eps):
    """Atoms whose first `order` iterates stay eps-close to those of center.

    atom_orbit: stack [atoms, f(atoms), ..., f^order(atoms)].
    Closeness is tested at steps 0..order inclusive.
    """
    center_orbit = model.orbit(np.asarray(center, dtype=float)[None, :], order)
    mask = np.ones(atom_orbit.shape[1], dtype=bool)
    for i in range(order + 1):
        mask &= torus.dist(atom_orbit[i], center_orbit[i][0]) < eps
    return mask


def bowen_ball_check(model, n, k, eps=0.25, sample_size=20, seed=0,
                     n_atoms=None, n_max=8, horizon=HORIZON_DEFAULT):
    """Empirical stable-equilibrium mass of order-(n+k) dynamical balls
    against the contraction-rate prediction |Df_s^m|^delta / d^m.

    Returns a report dict with per-sample ratios empirical/predicted.
    """
    m = n + k
    if m < 1:
        raise ValueError("need n + k >= 1")
    if n_atoms is None:
        n_atoms = m + 4
    atoms = stable_equilibrium_atoms(model, n_atoms, n_max=n_max, horizon=horizon)
    delta = stable_dimension(model, n_max=n_max, horizon=horizon)
    atom_orbit = model.orbit(atoms.points, m)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(atoms), size=sample_size, replace=False, p=atoms.weights)
    log_d = math.log(model.degree)
    phi = stable_potential(model, horizon)
    ratios = []
    skipped = 0
    for j in idx:
        z = atoms.points[j]
        mask = _bowen_mask(model, atom_orbit, z, m, eps)
        empirical = float(atoms.weights[mask].sum())
        if empirical == 0.0:
            skipped += 1
            continue
        s_m = float(birkhoff_sums(model, phi, z[None, :], m)[0])
        predicted = math.exp(delta * s_m - m * log_d)
        ratios.append(empirical / predicted)
    if not ratios:
        raise EmptyBall(f"all {sample_size} order-{m} balls were empty")
    ratios = np.array(ratios)
    return {
        "order": m,
        "eps": eps,
        "n_atoms": n_atoms,
        "delta_s": delta,
        "ratios": ratios.tolist(),
        "min_ratio": float(ratios.min()),
        "max_ratio": float(ratios.max()),
        "samples_used": int(ratios.size),
        "samples_skipped": skipped,
        "seed": seed,
    }


def slice_conditional(measure, model, center, r, w=None, horizon=SLICE_HORIZON):
    """Project tube atoms onto an integrated stable segment through center.

    The segment is grown by Euler steps of length r/SLICE_STEPS along the
    stable direction field (sign-aligned step to step); for models with a
    constant stable field this is the exact straight segment. Atoms within
    perpendicular distance w of the segment are assigned the arc-length
    coordinate of their projection.
    """
    center = np.asarray(center, dtype=float)
    if w is None:
        w = r / 20.0
    if not 0 < w < r <= 0.45:
        raise ValueError("need 0 < w < r <= 0.45")
    direction = stable_direction(model, center, horizon)
    h = r / SLICE_STEPS
    dim = center.shape[0]

    def _walk(sign):
        pts = np.empty((SLICE_STEPS + 1, dim))
        tans = np.empty((SLICE_STEPS + 1, dim))
        cur = center.copy()  # lift coordinates, no wrap
        ref = sign * direction.vector
        pts[0], tans[0] = cur, sign * ref
        for i in range(1, SLICE_STEPS + 1):
            e = stable_directions(model, torus.wrap(cur)[None, :], horizon)[0]
            if np.dot(e, ref) < 0:
                e = -e
            cur = cur + h * e
            ref = e
            pts[i] = cur
            tans[i] = sign * e
        return pts, tans

    fwd_pts, fwd_tans = _walk(+1.0)
    bwd_pts, bwd_tans = _walk(-1.0)
    vertices = np.concatenate([bwd_pts[::-1], fwd_pts[1:]], axis=0)
    tangents = np.concatenate([bwd_tans[::-1], fwd_tans[1:]], axis=0)
    arcs = np.linspace(-r, r, 2 * SLICE_STEPS + 1)

    cand_mask = torus.dist(measure.points, center) <= r + 2 * w
    cand_pts = measure.points[cand_mask]
    cand_wts = measure.weights[cand_mask]
    if cand_pts.shape[0] == 0:
        raise EmptySlice("no atoms near the slice center")
    tree = cKDTree(torus.wrap(vertices), boxsize=1.0)
    _, idx = tree.query(torus.wrap(cand_pts))
    disp = torus.delta(cand_pts, torus.wrap(vertices[idx]))
    along = np.einsum("ni,ni->n", disp, tangents[idx])
    arc = arcs[idx] + along
    perp_sq = np.einsum("ni,ni->n", disp, disp) - along ** 2
    keep = (perp_sq <= w * w) & (np.abs(arc) <= r)
    if not keep.any():
        raise EmptySlice("no atoms inside the stable tube")
    return make_slice_measure(center, direction, r, w, arc[keep], cand_wts[keep])


def pointwise_dimension_fit(slc, y, rho_grid=None, min_atoms=50):
    """Least-squares slope of log(ball mass) vs log(radius) on a slice.

    Zero-mass radii are dropped rather than clamped, matching the liminf
    convention for pointwise dimensions.
    """
    if len(slc) < min_atoms:
        raise InsufficientAtoms(f"slice holds {len(slc)} atoms; need {min_atoms}")
    if rho_grid is None:
        rho_grid = dyadic_grid(slc.r)
    rho_grid = np.asarray(rho_grid, dtype=float)
    if np.any(np.diff(rho_grid) >= 0):
        raise ValueError("rho_grid must be strictly decreasing")
    masses = np.array([slc.ball_mass(y, rho) for rho in rho_grid])
    pos = masses > 0
    if pos.sum() < 2:
        raise InsufficientAtoms("fewer than two radii carry mass")
    lx = np.log(rho_grid[pos])
    ly = np.log(masses[pos])
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    ratio = masses[pos] / rho_grid[pos] ** slope
    return DimensionFit(slope=float(slope), intercept=float(intercept),
                        rho_grid=rho_grid, masses=masses, r2=r2,
                        spread_constant=float(ratio.max() / ratio.min()))


def _slice_survey(model, measure, exponent, slices, points_per_slice, r, w,
                  rho_grid, rng, horizon=SLICE_HORIZON, min_atoms=50):
    """Slopes and mass/rho^exponent ratios over sampled slices and points."""
    if rho_grid is None:
        rho_grid = dyadic_grid(r)
    centers_idx = rng.choice(len(measure), size=min(slices, len(measure)),
                             replace=False, p=measure.weights)
    slopes = []
    ratios = []
    skipped = 0
    used = 0
    for ci in centers_idx:
        try:
            slc = slice_conditional(measure, model, measure.points[ci], r, w, horizon)
        except EmptySlice:
            skipped += 1
            continue
        if len(slc) < min_atoms:
            skipped += 1
            continue
        eligible = np.nonzero(np.abs(slc.positions) <= r / 2)[0]
        if eligible.size == 0:
            skipped += 1
            continue
        take = min(points_per_slice, eligible.size)
        ys = slc.positions[rng.choice(eligible, size=take, replace=False)]
        used += 1
        for y in ys:
            fit = pointwise_dimension_fit(slc, y, rho_grid, min_atoms=min_atoms)
            slopes.append(fit.slope)
            for rho, mass in zip(fit.rho_grid, fit.masses):
                if mass > 0:
                    ratios.append(mass / rho ** exponent)
    if not slopes:
        raise InsufficientAtoms("no usable slices; increase n or tube width")
    return slopes, ratios, used, skipped


def geometric_probability_check(model, n, slices=20, points_per_slice=10,
                                rho_grid=None, r=0.2, w=None, threshold=10.0,
                                delta_s=None, seed=0, n_max=8,
                                horizon=HORIZON_DEFAULT):
    """Uniform comparability of slice ball masses with rho^delta_s.

    C_hat is the max/min of mass(B(y, rho))/rho^delta_s over sampled slice
    points and dyadic radii; geometric behaviour keeps it bounded.
    """
    if delta_s is None:
        delta_s = stable_dimension(model, n_max=n_max, horizon=horizon)
    atoms = stable_equilibrium_atoms(model, n, n_max=n_max, horizon=horizon)
    rng = np.random.default_rng(seed)
    slopes, ratios, used, skipped = _slice_survey(
        model, atoms, delta_s, slices, points_per_slice, r, w, rho_grid, rng)
    ratios = np.array(ratios)
    c_hat = float(ratios.max() / ratios.min())
    return GeometricVerdict(exponent=delta_s, c_hat=c_hat,
                            passed=bool(c_hat < threshold), threshold=threshold,
                            median_slope=float(np.median(slopes)),
                            slopes=tuple(slopes), slices_used=used,
                            slices_skipped=skipped)


def _random_prehistory(model, x, depth, rng):
    """One uniformly chosen backward branch [x, x_{-1}, ..., x_{-depth}]."""
    path = [np.asarray(x, dtype=float)]
    for _ in range(depth):
        pre = model.preimages(path[-1])
        path.append(pre[rng.integers(pre.shape[0])])
    return path


def component_comparison_check(model, potential, k, m, eps=0.2, N=None,
                               anchors=8, ball_scale=0.5, seed=0,
                               pressure_n_max=8, horizon=HORIZON_DEFAULT,
                               y1=None, y2=None):
    """Compare equilibrium mass on two preimage components of a common set.

    For an anchor x* with k-preimage y1 and m-preimage y2, the components
    are A_i = f^{-order} A through the respective branches, where A is a
    ball around x* small enough to sit inside both Bowen-ball images. The
    report pairs the empirical mass ratio with the predicted factor
    exp(S_k phi(y1) - S_m phi(y2) + (m - k) P(phi)).
    """
    if N is None:
        N = k + m + 4
        while predicted_fixed_count(model, N) > ATOM_BUDGET:
            N -= 1
    atoms = equilibrium_atoms(model, potential, N)
    pres = pressure(model, potential, pressure_n_max).value
    phi_s = stable_potential(model, horizon)
    order = max(k, m)
    atom_orbit = model.orbit(atoms.points, order)
    rng = np.random.default_rng(seed)
    anchor_idx = rng.choice(len(atoms), size=anchors, replace=False, p=atoms.weights)
    records = []
    empty = 0
    for ai in anchor_idx:
        xstar = atoms.points[ai]
        b1 = np.asarray(y1, dtype=float) if y1 is not None else _random_prehistory(model, xstar, k, rng)[-1]
        b2 = np.asarray(y2, dtype=float) if y2 is not None else _random_prehistory(model, xstar, m, rng)[-1]
        contraction1 = math.exp(float(birkhoff_sums(model, phi_s, b1[None, :], k)[0]))
        contraction2 = math.exp(float(birkhoff_sums(model, phi_s, b2[None, :], m)[0]))
        rho_a = ball_scale * eps * min(contraction1, contraction2)
        mask1 = _bowen_mask(model, atom_orbit[:k + 1], b1, k, eps)
        mask1 &= torus.dist(atom_orbit[k], xstar) <= rho_a
        mask2 = _bowen_mask(model, atom_orbit[:m + 1], b2, m, eps)
        mask2 &= torus.dist(atom_orbit[m], xstar) <= rho_a
        mass1 = float(atoms.weights[mask1].sum())
        mass2 = float(atoms.weights[mask2].sum())
        s_k = float(birkhoff_sums(model, potential, b1[None, :], k)[0])
        s_m = float(birkhoff_sums(model, potential, b2[None, :], m)[0])
        predicted = math.exp(s_k - s_m + (m - k) * pres)
        if mass1 == 0.0 or mass2 == 0.0:
            empty += 1
            continue
        records.append({"ratio": mass1 / mass2, "predicted": predicted,
                        "quotient": (mass1 / mass2) / predicted,
                        "mass1": mass1, "mass2": mass2, "rho_a": rho_a})
    if not records:
        raise EmptyComponent(
            f"no anchor produced nonzero mass on both components (k={k}, m={m}, N={N})")
    quotients = np.array([rec["quotient"] for rec in records])
    return {
        "k": k, "m": m, "N": N, "eps": eps, "seed": seed,
        "pressure": pres,
        "anchors_used": len(records), "anchors_empty": empty,
        "records": records,
        "quotients": quotients.tolist(),
        "median_quotient": float(np.median(quotients)),
    }


def constant_to_one_check(model, samples=200, seed=0, tol=1e-9):
    """Verify every sampled point has the same verified preimage count."""
    rng = np.random.default_rng(seed)
    pts = model.sample(rng, samples)
    pre = model.preimages_batch(pts)
    d = pre.shape[1]
    img = model.apply(pre.reshape(-1, pre.shape[-1])).reshape(pre.shape)
    roundtrip = torus.dist(img, pts[:, None, :]).max()
    min_sep = np.inf
    for i in range(d):
        for j in range(i + 1, d):
            min_sep = min(min_sep, float(torus.dist(pre[:, i, :], pre[:, j, :]).min()))
    verified = roundtrip < tol and min_sep > tol
    report = {
        "samples": samples,
        "seed": seed,
        "d": int(d),
        "all_equal": bool(verified),
        "roundtrip_max": float(roundtrip),
        "min_separation": float(min_sep),
        "passed": bool(verified),
    }
    if isinstance(model, ProductPowerToral):
        detA = abs(model.A.det)
        report["product_rule_degree"] = model.k * detA
        report["additive_rule_degree"] = model.k + detA
        report["additive_rule_matches"] = bool(d == model.k + detA)
        if d != model.k + detA:
            report["degree_flag"] = (
                f"enumerated count {d} follows the product rule k*|det A| = "
                f"{model.k * detA}, not the additive rule k+|det A| = {model.k + detA}")
    return report


def absolute_continuity_diagnostic(model, n, stable_dim_e=1, slices=12,
                                   points_per_slice=8, r=0.2, w=None,
                                   seed=0, n_max=8, horizon=HORIZON_DEFAULT):
    """Repellor test: stable dimension against dim E^s, plus slice slopes."""
    delta = stable_dimension(model, n_max=n_max, horizon=horizon)
    atoms = stable_equilibrium_atoms(model, n, n_max=n_max, horizon=horizon)
    rng = np.random.default_rng(seed)
    slopes, _, _, _ = _slice_survey(model, atoms, delta, slices,
                                    points_per_slice, r, w, None, rng)
    median_slope = float(np.median(slopes))
    return ACDiagnostic(
        delta_s=delta,
        stable_dim_e=stable_dim_e,
        is_repellor_verdict=bool(abs(delta - stable_dim_e) < 0.05),
        slice_ac_verdict=bool(abs(median_slope - stable_dim_e) < 0.1),
        median_slope=median_slope,
    )


def max_stable_dim_check(model, alt_potentials=None, n=8, slices=12,
                         points_per_slice=8, r=0.2, w=None, seed=0,
                         n_max=8, horizon=HORIZON_DEFAULT):
    """Weak variational check: alternative equilibrium measures must not
    exceed the stable dimension in slice slope; mu_s must attain it."""
    if alt_potentials is None:
        alt_potentials = (zero_potential(),)
    delta = stable_dimension(model, n_max=n_max, horizon=horizon)
    rng = np.random.default_rng(seed)
    mu_s = stable_equilibrium_atoms(model, n, n_max=n_max, horizon=horizon)
    slopes, _, _, _ = _slice_survey(model, mu_s, delta, slices,
                                    points_per_slice, r, w, None, rng)
    mu_s_slope = float(np.median(slopes))
    alternatives = {}
    for pot in alt_potentials:
        if not isinstance(pot, Potential):
            raise TypeError("alt_potentials must be Potential instances")
        atoms = equilibrium_atoms(model, pot, n)
        rng_alt = np.random.default_rng(seed + 1)
        alt_slopes, _, _, _ = _slice_survey(model, atoms, delta, slices,
                                            points_per_slice, r, w, None, rng_alt)
        alternatives[pot.tag] = float(np.median(alt_slopes))
    passed = (abs(mu_s_slope - delta) <= 0.1
              and all(s <= delta + 0.05 for s in alternatives.values()))
    return {
        "delta_s": delta,
        "mu_s_median_slope": mu_s_slope,
        "alternatives": alternatives,
        "passed": bool(passed),
        "n": n,
        "seed": seed,
    }


def ks_distance_uniform(slc):
    """Kolmogorov-Smirnov distance of a slice measure from uniform on [-r, r]."""
    cdf_emp = slc.cum_weights[1:]
    cdf_uni = (slc.positions + slc.r) / (2 * slc.r)
    below = np.abs(slc.cum_weights[:-1] - cdf_uni)
    above = np.abs(cdf_emp - cdf_uni)
    return float(np.maximum(below, above).max())


def ks_distance(slc_a, slc_b):
    """Two-sample KS distance between slice measures on a common axis."""
    grid = np.union1d(slc_a.positions, slc_b.positions)

    def cdf(slc, xs):
        idx = np.searchsorted(slc.positions, xs, side="right")
        return slc.cum_weights[idx]

    return float(np.abs(cdf(slc_a, grid) - cdf(slc_b, grid)).max())

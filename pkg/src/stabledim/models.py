"""Built-in hyperbolic endomorphism models.

Four model families on torus/circle phase spaces, each exposing vectorized
evaluation, Jacobians, exact-or-Newton preimage enumeration, and sampling
from the basic set. Coordinates follow the conventions in `torus`.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import torus
from .errors import ConfigInvalid, NewtonDivergence

PREIMAGE_TOL = 1e-12
NEWTON_MAX_ITER = 100
EPS_MAX = 0.05
HOMOTOPY_STEP = 0.005


def _egcd(a, b):
    """Extended gcd: returns (g, x, y) with a*x + b*y = g, g >= 0."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def lattice_residues(mat):
    """Coset representatives of Z^2 / M.Z^2 for an integer 2x2 matrix M.

    Uses the column Hermite form: with g = gcd(m11, m12) the residues
    {(i, j) : 0 <= i < g, 0 <= j < |det|/g} form a complete system.
    Exact integer arithmetic throughout.
    """
    (a, b), (c, d) = [[int(v) for v in row] for row in mat]
    det = a * d - b * c
    if det == 0:
        raise ValueError("singular lattice matrix")
    g, _, _ = _egcd(a, b)
    if g == 0:
        # first row identically zero would force det == 0
        raise ValueError("degenerate lattice matrix")
    h11 = g
    h22 = abs(det) // g
    ii, jj = np.meshgrid(np.arange(h11, dtype=np.int64),
                         np.arange(h22, dtype=np.int64), indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


@dataclass(frozen=True)
class IntMatrix2:
    """2x2 integer matrix, hyperbolic and non-invertible over the torus.

    Requires |det| >= 2 and real eigenvalues with exactly one of absolute
    value below 1 and one above 1.
    """

    a11: int
    a12: int
    a21: int
    a22: int

    def __post_init__(self):
        for v in (self.a11, self.a12, self.a21, self.a22):
            if v != int(v):
                raise ConfigInvalid("matrix entries must be integers")
        if abs(self.det) < 2:
            raise ConfigInvalid("|det| must be >= 2 for a non-invertible toral map")
        tr = self.a11 + self.a22
        disc = tr * tr - 4 * self.det
        if disc <= 0:
            raise ConfigInvalid("eigenvalues must be real and distinct")
        lam1 = (tr + math.sqrt(disc)) / 2.0
        lam2 = (tr - math.sqrt(disc)) / 2.0
        small, large = sorted((abs(lam1), abs(lam2)))
        if not (small < 1.0 < large):
            raise ConfigInvalid("need one eigenvalue inside and one outside the unit circle")

    @property
    def det(self):
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def mat(self):
        return np.array([[self.a11, self.a12], [self.a21, self.a22]], dtype=np.int64)

    def _eigvals(self):
        tr = self.a11 + self.a22
        disc = math.sqrt(tr * tr - 4 * self.det)
        lam1 = (tr + disc) / 2.0
        lam2 = (tr - disc) / 2.0
        if abs(lam1) < abs(lam2):
            return lam1, lam2
        return lam2, lam1

    @property
    def lam_s(self):
        """Contracting eigenvalue (|lam_s| < 1)."""
        return self._eigvals()[0]

    @property
    def lam_u(self):
        """Expanding eigenvalue (|lam_u| > 1)."""
        return self._eigvals()[1]

    def eigvec(self, lam):
        """Unit eigenvector for eigenvalue lam."""
        # (a11 - lam) v1 + a12 v2 = 0; fall back to the second row if needed
        v = np.array([self.a12, lam - self.a11], dtype=float)
        if np.linalg.norm(v) < 1e-12:
            v = np.array([lam - self.a22, self.a21], dtype=float)
        return v / np.linalg.norm(v)

    @property
    def stable_eigvec(self):
        return self.eigvec(self.lam_s)

    @property
    def unstable_eigvec(self):
        return self.eigvec(self.lam_u)

    def as_tuple(self):
        return (self.a11, self.a12, self.a21, self.a22)


class EndomorphismModel:
    """Common interface for the built-in endomorphisms.

    Subclasses set `kind`, `phase_dim`, `degree` and implement the batched
    core operations. All operations are pure; instances carry a `_cache`
    dict used by higher modules to memoize derived data (periodic orbits,
    atom measures) per model.
    """

    kind = "abstract"

    def __init__(self):
        self._cache = {}

    # -- identity ---------------------------------------------------------
    def _key(self):
        raise NotImplementedError

    def __eq__(self, other):
        return isinstance(other, EndomorphismModel) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"{type(self).__name__}{self._key()[1:]}"

    # -- core operations ---------------------------------------------------
    def apply(self, pts):
        raise NotImplementedError

    def differential(self, pts):
        raise NotImplementedError

    def preimages_batch(self, pts):
        raise NotImplementedError

    def preimages(self, x):
        """All preimages of x in the basic set; shape (degree, phase_dim)."""
        return self.preimages_batch(np.asarray(x, dtype=float)[None, :])[0]

    def sample(self, rng, size=None):
        """Sample uniformly from the basic set."""
        raise NotImplementedError

    def orbit(self, pts, n):
        """Forward orbit stack [pts, f(pts), ..., f^n(pts)], length n+1."""
        out = [torus.wrap(np.asarray(pts, dtype=float))]
        for _ in range(n):
            out.append(self.apply(out[-1]))
        return np.stack(out, axis=0)

    def to_config(self):
        raise NotImplementedError


class ToralLinear(EndomorphismModel):
    """Linear hyperbolic endomorphism w -> A w (mod 1) of the 2-torus."""

    kind = "toral_linear"

    def __init__(self, A):
        super().__init__()
        if not isinstance(A, IntMatrix2):
            A = IntMatrix2(*[int(v) for row in A for v in row])
        self.A = A
        self.phase_dim = 2
        self.degree = abs(A.det)
        self._mat = A.mat.astype(float)
        self._inv = np.linalg.inv(self._mat)
        self._residues = lattice_residues(A.mat).astype(float)

    def _key(self):
        return (self.kind, self.A.as_tuple())

    def apply(self, pts):
        pts = np.asarray(pts, dtype=float)
        return torus.wrap(pts @ self._mat.T)

    def differential(self, pts):
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            return self._mat.copy()
        return np.broadcast_to(self._mat, pts.shape[:-1] + (2, 2)).copy()

    def preimages_batch(self, pts):
        pts = np.asarray(pts, dtype=float)
        lifted = pts[:, None, :] + self._residues[None, :, :]
        return torus.wrap(lifted @ self._inv.T)

    def sample(self, rng, size=None):
        return rng.random(2 if size is None else (size, 2))

    def to_config(self):
        m = self.A
        return {"kind": self.kind, "A": [[m.a11, m.a12], [m.a21, m.a22]]}


def _perturbation(w):
    """Trigonometric perturbation field on the 2-torus, shape (..., 2)."""
    w = np.asarray(w, dtype=float)
    w1, w2 = w[..., 0], w[..., 1]
    g1 = np.sin(2 * np.pi * (w1 + 5 * w2))
    g2 = np.cos(2 * np.pi * w2) + np.sin(np.pi * (w1 - 2 * w2)) ** 2
    return np.stack([g1, g2], axis=-1)


def _perturbation_jac(w):
    """Jacobian of `_perturbation`, shape (..., 2, 2)."""
    w = np.asarray(w, dtype=float)
    w1, w2 = w[..., 0], w[..., 1]
    c1 = np.cos(2 * np.pi * (w1 + 5 * w2))
    s2 = np.sin(2 * np.pi * (w1 - 2 * w2))
    d11 = 2 * np.pi * c1
    d12 = 10 * np.pi * c1
    d21 = np.pi * s2
    d22 = -2 * np.pi * np.sin(2 * np.pi * w2) - 2 * np.pi * s2
    out = np.empty(w.shape[:-1] + (2, 2))
    out[..., 0, 0] = d11
    out[..., 0, 1] = d12
    out[..., 1, 0] = d21
    out[..., 1, 1] = d22
    return out


class ToralPerturbed(EndomorphismModel):
    """Trigonometric perturbation w -> A w + eps*g(w) (mod 1) of the 2-torus.

    Construction enforces a hard cap eps <= 0.05 and then certifies the
    instance on a sampled grid: det Df must stay positive (no critical
    points, so the map remains |det A|-to-1) and five-step Jacobian
    products must satisfy an unstable-cone condition in the eigenframe
    of A. For the shipped perturbation field this admits roughly
    eps <= 0.02; larger values are rejected with a diagnostic.
    """

    kind = "toral_perturbed"

    def __init__(self, A, eps):
        super().__init__()
        if not isinstance(A, IntMatrix2):
            A = IntMatrix2(*[int(v) for row in A for v in row])
        self.A = A
        self.eps = float(eps)
        self.phase_dim = 2
        self.degree = abs(A.det)
        self._mat = A.mat.astype(float)
        self._inv = np.linalg.inv(self._mat)
        self._residues = lattice_residues(A.mat).astype(float)
        if not 0.0 <= self.eps <= EPS_MAX:
            raise ConfigInvalid(f"eps={eps} outside the supported range [0, {EPS_MAX}]")
        if self.eps > 0.0:
            self._certify()

    def _key(self):
        return (self.kind, self.A.as_tuple(), self.eps)

    def _certify(self):
        # regularity: det Df > 0 on a 200x200 grid
        grid = np.linspace(0.0, 1.0, 200, endpoint=False)
        pts = np.stack(np.meshgrid(grid, grid, indexing="ij"), axis=-1).reshape(-1, 2)
        jac = self.differential(pts)
        dets = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if dets.min() <= 0.0:
            raise ConfigInvalid(
                f"eps={self.eps}: det Df reaches {dets.min():.4f} <= 0; "
                "the perturbed map is no longer a local diffeomorphism")
        # cone condition on 5-step Jacobian products along sampled orbits
        rng = np.random.default_rng(7)
        sample = rng.random((256, 2))
        basis = np.stack([self.A.unstable_eigvec, self.A.stable_eigvec], axis=1)
        basis_inv = np.linalg.inv(basis)
        prod = np.broadcast_to(np.eye(2), (256, 2, 2)).copy()
        cur = sample
        for _ in range(5):
            prod = self.differential(cur) @ prod
            cur = self.apply(cur)
        m = basis_inv @ prod @ basis
        a = np.abs(m[:, 0, 0])
        b = np.abs(m[:, 0, 1])
        c = np.abs(m[:, 1, 0])
        d = np.abs(m[:, 1, 1])
        expansion = a - b
        if expansion.min() <= 1.0 or np.any(c + d > expansion):
            raise ConfigInvalid(
                f"eps={self.eps}: sampled cone condition failed; "
                "hyperbolicity is not certified at this size")
        sv = np.linalg.svd(prod, compute_uv=False)
        if sv[:, -1].max() >= 1.0:
            raise ConfigInvalid(
                f"eps={self.eps}: five-step products are not contracting "
                "in any direction at some sample")

    def _lift(self, pts):
        return pts @ self._mat.T + self.eps * _perturbation(pts)

    def apply(self, pts):
        pts = np.asarray(pts, dtype=float)
        return torus.wrap(self._lift(torus.wrap(pts)))

    def differential(self, pts):
        pts = np.asarray(pts, dtype=float)
        base = self._mat + self.eps * _perturbation_jac(torus.wrap(pts))
        return base

    def _newton_towards(self, targets, seeds, eps):
        """Solve A y + eps*g(y) = targets (mod 1) by damped-free Newton.

        targets/seeds shape (N, 2). Returns refined points; raises
        NewtonDivergence if any residual stays above PREIMAGE_TOL.
        """
        model = self if eps == self.eps else ToralPerturbed(self.A, eps)
        y = torus.wrap(np.array(seeds, dtype=float))
        for _ in range(NEWTON_MAX_ITER):
            res = torus.delta(model.apply(y), targets)
            worst = np.abs(res).max()
            if worst < PREIMAGE_TOL:
                return y
            jac = model.differential(y)
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            dy0 = (jac[:, 1, 1] * res[:, 0] - jac[:, 0, 1] * res[:, 1]) / det
            dy1 = (-jac[:, 1, 0] * res[:, 0] + jac[:, 0, 0] * res[:, 1]) / det
            y = torus.wrap(y - np.stack([dy0, dy1], axis=1))
        raise NewtonDivergence(
            f"preimage Newton stalled at residual {worst:.3e} (eps={eps})")

    def preimages_batch(self, pts):
        pts = np.asarray(pts, dtype=float)
        n, d = pts.shape[0], self.degree
        lifted = pts[:, None, :] + self._residues[None, :, :]
        seeds = torus.wrap(lifted @ self._inv.T).reshape(n * d, 2)
        targets = np.repeat(pts, d, axis=0)
        if self.eps == 0.0:
            return seeds.reshape(n, d, 2)
        # ramp eps up in small steps so every Newton start stays in its basin
        y = seeds
        steps = int(math.ceil(self.eps / HOMOTOPY_STEP))
        for i in range(1, steps + 1):
            e = min(self.eps, i * HOMOTOPY_STEP)
            y = self._newton_towards(targets, y, e)
        return y.reshape(n, d, 2)

    def sample(self, rng, size=None):
        return rng.random(2 if size is None else (size, 2))

    def to_config(self):
        m = self.A
        return {"kind": self.kind, "A": [[m.a11, m.a12], [m.a21, m.a22]], "eps": self.eps}


class ProductAttractorCircle(EndomorphismModel):
    """Product of z -> z^2 + c near its attracting fixed point with angle doubling.

    Coordinates are (deviation, angle): `deviation` is the signed offset of
    the z-coordinate from the attracting fixed point p_c (stored mod 1, read
    through the symmetric representative), `angle` parametrizes the expanding
    circle factor. The basic set is {deviation = 0} x S^1.
    """

    kind = "product_attractor_circle"

    def __init__(self, c):
        super().__init__()
        self.c = float(c)
        if not 0.0 < self.c < 0.2:
            raise ConfigInvalid("c must lie in (0, 0.2) for a real attracting fixed point")
        self.p = (1.0 - math.sqrt(1.0 - 4.0 * self.c)) / 2.0
        self.phase_dim = 2
        self.degree = 2

    def _key(self):
        return (self.kind, self.c)

    def apply(self, pts):
        pts = np.asarray(pts, dtype=float)
        u = torus.signed(pts[..., 0])
        out = np.empty_like(pts)
        out[..., 0] = u * (2.0 * self.p + u)
        out[..., 1] = 2.0 * pts[..., 1]
        return torus.wrap(out)

    def differential(self, pts):
        pts = np.asarray(pts, dtype=float)
        u = torus.signed(pts[..., 0])
        out = np.zeros(pts.shape[:-1] + (2, 2))
        out[..., 0, 0] = 2.0 * (self.p + u)
        out[..., 1, 1] = 2.0
        return out

    def preimages_batch(self, pts):
        pts = np.asarray(pts, dtype=float)
        u = torus.signed(pts[:, 0])
        rad = self.p * self.p + u
        if np.any(rad < -1e-15):
            raise ValueError("point outside the attracting branch of the z-factor")
        v = -self.p + np.sqrt(np.maximum(rad, 0.0))
        theta = pts[:, 1]
        out = np.empty((pts.shape[0], 2, 2))
        out[:, 0, 0] = v
        out[:, 1, 0] = v
        out[:, 0, 1] = theta / 2.0
        out[:, 1, 1] = theta / 2.0 + 0.5
        return torus.wrap(out)

    def sample(self, rng, size=None):
        if size is None:
            return np.array([0.0, rng.random()])
        out = np.zeros((size, 2))
        out[:, 1] = rng.random(size)
        return out

    def to_config(self):
        return {"kind": self.kind, "c": self.c}


class ProductPowerToral(EndomorphismModel):
    """Product of the angle k-fold map with a (perturbed) toral endomorphism.

    Coordinates are (angle, w1, w2). The circle factor is exactly invariant;
    preimage counts multiply across factors, so the map is k*|det A|-to-1 on
    the basic set. `additive_degree` records the alternative k+|det A| count
    for the degree-flagging report.
    """

    kind = "product_power_toral"

    def __init__(self, k, A, eps=0.0):
        super().__init__()
        self.k = int(k)
        if self.k < 2:
            raise ConfigInvalid("k must be an integer >= 2")
        self.toral = ToralPerturbed(A, eps)
        self.A = self.toral.A
        self.eps = self.toral.eps
        self.phase_dim = 3
        self.degree = self.k * abs(self.A.det)
        self.additive_degree = self.k + abs(self.A.det)

    def _key(self):
        return (self.kind, self.k, self.A.as_tuple(), self.eps)

    def apply(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.empty_like(pts)
        out[..., 0] = self.k * pts[..., 0]
        out[..., 1:] = self.toral.apply(pts[..., 1:])
        return torus.wrap(out)

    def differential(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape[:-1] + (3, 3))
        out[..., 0, 0] = self.k
        out[..., 1:, 1:] = self.toral.differential(pts[..., 1:])
        return out

    def preimages_batch(self, pts):
        pts = np.asarray(pts, dtype=float)
        n = pts.shape[0]
        angles = (pts[:, None, 0] + np.arange(self.k)[None, :]) / self.k
        toral = self.toral.preimages_batch(pts[:, 1:])  # (n, dt, 2)
        dt = toral.shape[1]
        out = np.empty((n, self.k * dt, 3))
        out[:, :, 0] = np.repeat(angles, dt, axis=1)
        out[:, :, 1:] = np.tile(toral, (1, self.k, 1))
        return torus.wrap(out)

    def sample(self, rng, size=None):
        return rng.random(3 if size is None else (size, 3))

    def to_config(self):
        m = self.A
        return {"kind": self.kind, "k": self.k,
                "A": [[m.a11, m.a12], [m.a21, m.a22]], "eps": self.eps}


MODEL_KINDS = {
    ToralLinear.kind: ToralLinear,
    ToralPerturbed.kind: ToralPerturbed,
    ProductAttractorCircle.kind: ProductAttractorCircle,
    ProductPowerToral.kind: ProductPowerToral,
}


def from_config(cfg):
    """Build a model from a config dict; see README for the schema."""
    if not isinstance(cfg, dict):
        raise ConfigInvalid("model config must be a JSON object")
    kind = cfg.get("kind")
    if kind not in MODEL_KINDS:
        raise ConfigInvalid(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    try:
        if kind == ToralLinear.kind:
            return ToralLinear(_matrix_from_config(cfg))
        if kind == ToralPerturbed.kind:
            return ToralPerturbed(_matrix_from_config(cfg), float(cfg.get("eps", 0.0)))
        if kind == ProductPowerToral.kind:
            return ProductPowerToral(int(cfg["k"]), _matrix_from_config(cfg),
                                     float(cfg.get("eps", 0.0)))
        return ProductAttractorCircle(float(cfg["c"]))
    except ConfigInvalid:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad model config: {exc}") from exc


def _matrix_from_config(cfg):
    A = cfg.get("A")
    if (not isinstance(A, (list, tuple)) or len(A) != 2
            or any(len(row) != 2 for row in A)):
        raise ConfigInvalid("'A' must be a 2x2 integer matrix")
    return IntMatrix2(int(A[0][0]), int(A[0][1]), int(A[1][0]), int(A[1][1]))


def load_model(path):
    """Load a model from a JSON config file."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read model config {path}: {exc}") from exc
    return from_config(cfg)

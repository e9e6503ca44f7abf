"""Finsler structures and the fibre-wise tensors derived from them.

A norm evaluator is a callable ``norm(x, y)`` where ``x`` and ``y`` are
sequences of ``dim`` components. Components may be floats, numpy arrays or
:class:`~finsler_lab.hyperdual.HyperDual` numbers, so evaluators must use
plain arithmetic and the helpers in :mod:`finsler_lab.hyperdual`. Every
tensor below is obtained by pushing hyper-dual perturbations through that
single callable.

Array conventions: points and vectors are numpy arrays whose last axis has
length ``dim``; internal ``_batch`` helpers broadcast over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import quadrature
from .errors import ConvergenceError, DegenerateError, DomainError
from .hyperdual import HyperDual

NormFn = Callable[[Any, Any], Any]

CARTAN_STEP = 1e-5
_STENCIL = np.array([-1.0, -0.5, 0.5, 1.0])


@dataclass(frozen=True, eq=False)
class FinslerStructure:
    """A chart-based Finsler norm.

    ``domain`` returns a signed margin (positive inside the chart); ``None``
    means all of R^n. ``lattice`` lists deck translations identifying chart
    points (flat quotients, or the periodic coordinate of an angular chart).

    The optional ``exact_*`` hooks are closed-form forward distance, unit
    initial direction and density for fixtures that have them. They serve
    as fast paths and as oracles; the generic routes never require them.
    """

    dim: int
    norm: NormFn
    domain: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lattice: tuple = ()
    family_tag: str = ""
    params: dict = field(default_factory=dict)
    x_independent: bool = False
    scale: float = 1.0
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    chart_box: Optional[np.ndarray] = None
    exact_distance: Optional[Callable] = None
    exact_direction: Optional[Callable] = None
    density_hint: Optional[Callable] = None

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be at least 2")

    @property
    def lattice_matrix(self) -> np.ndarray:
        if not self.lattice:
            return np.zeros((self.dim, 0))
        return np.array(self.lattice, dtype=float).T

    def margin(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.domain is None:
            return np.full(x.shape[:-1], np.inf)
        return np.asarray(self.domain(x), dtype=float)

    def contains(self, x) -> np.ndarray:
        return self.margin(x) > 0

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.sampler is not None:
            return self.sampler(rng, count)
        return rng.uniform(-1.0, 1.0, size=(count, self.dim)) * self.scale

    def __repr__(self):
        return f"FinslerStructure({self.family_tag or 'custom'}, dim={self.dim})"


def components(a: np.ndarray):
    return tuple(a[..., i] for i in range(a.shape[-1]))


def norm_batch(S: FinslerStructure, x, y) -> np.ndarray:
    """F(x, y) for broadcast arrays of points and vectors (no checks)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
    return np.broadcast_to(S.norm(components(x), components(y)), shape)


def _check_point(S, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != S.dim:
        raise ValueError(f"expected {S.dim} components, got shape {x.shape}")
    if not np.all(S.contains(x)):
        raise DomainError(f"point {x} lies outside the chart domain of {S.family_tag}")
    return x


def _check_vector(y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.linalg.norm(y, axis=-1) > 0):
        raise DegenerateError("tensor undefined at the zero vector")
    return y


# ---------------------------------------------------------------------------
# hyper-dual jets of F^2
# ---------------------------------------------------------------------------

def _pairs(idx):
    return [(a, b) for i, a in enumerate(idx) for b in idx[i:]]


def _jet(S, x, y, pairs, m):
    """Evaluate F^2 at (x, y) perturbed along coordinate pairs of z=(x, y).

    Returns the hyper-dual F^2 with a trailing pair axis.
    """
    n = S.dim
    P = len(pairs)
    D1 = np.zeros((P, 2 * n))
    D2 = np.zeros((P, 2 * n))
    for p, (a, b) in enumerate(pairs):
        D1[p, a] = 1.0
        D2[p, b] = 1.0
    x = np.asarray(x, dtype=float)[..., None, :]
    y = np.asarray(y, dtype=float)[..., None, :]
    zero = np.zeros(P)
    xs = tuple(HyperDual(x[..., i], D1[:, i], D2[:, i], zero) for i in range(n))
    ys = tuple(HyperDual(y[..., i], D1[:, n + i], D2[:, n + i], zero) for i in range(n))
    F = S.norm(xs, ys)
    if not isinstance(F, HyperDual):
        F = HyperDual(F)
    return F * F


def _assemble(F2, pairs, shape, size, offset):
    H = np.zeros(shape + (size, size))
    grad = np.zeros(shape + (size,))
    for p, (a, b) in enumerate(pairs):
        h = np.broadcast_to(F2.d, shape + (len(pairs),))[..., p]
        H[..., a - offset, b - offset] = h
        H[..., b - offset, a - offset] = h
        if a == b:
            grad[..., a - offset] = np.broadcast_to(F2.b, shape + (len(pairs),))[..., p]
    value = np.broadcast_to(F2.a, shape + (len(pairs),))[..., 0]
    return value, grad, H


def fiber_jet(S, x, y):
    """(F^2, d_y F^2, g_y) with g_y = 1/2 Hess_y F^2, batched."""
    n = S.dim
    shape = np.broadcast_shapes(np.shape(x), np.shape(y))[:-1]
    pairs = _pairs(list(range(n, 2 * n)))
    F2 = _jet(S, x, y, pairs, n)
    val, grad, H = _assemble(F2, pairs, shape, n, n)
    return val, grad, 0.5 * H


def full_jet(S, x, y):
    """(F^2, gradient, Hessian) of F^2 in z = (x, y), batched."""
    n = S.dim
    shape = np.broadcast_shapes(np.shape(x), np.shape(y))[:-1]
    pairs = _pairs(list(range(2 * n)))
    F2 = _jet(S, x, y, pairs, 2 * n)
    return _assemble(F2, pairs, shape, 2 * n, 0)


def metric_batch(S, x, y) -> np.ndarray:
    return fiber_jet(S, x, y)[2]


def fd_jacobian(f, z, h):
    """Fourth-order central differences (Richardson-extrapolated pair).

    ``f`` maps an array of shape batch + (m,) to batch + out. ``h`` broadcasts
    against ``z``. Returns an array of shape batch + out + (m,).
    """
    z = np.asarray(z, dtype=float)
    m = z.shape[-1]
    batch = z.shape[:-1]
    h = np.broadcast_to(np.asarray(h, dtype=float), z.shape)
    E = np.eye(m)
    # points: batch + (4, m, m) -> stencil s, direction j, coordinate
    pts = (z[..., None, None, :]
           + _STENCIL[:, None, None] * h[..., None, :, None] * E)
    vals = np.asarray(f(pts))
    nb = len(batch)
    out = vals.shape[nb + 2:]
    fm1, fmh, fph, fp1 = (vals[(slice(None),) * nb + (s,)] for s in range(4))
    hh = h.reshape(batch + (m,) + (1,) * len(out))
    d = (8.0 * (fph - fmh) - (fp1 - fm1)) / (6.0 * hh)
    # d: batch + (m,) + out -> batch + out + (m,)
    return np.moveaxis(d, nb, -1)


def default_steps(S, x, y, rel=1e-3):
    """Per-coordinate step sizes for z = (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast_shapes(x.shape, y.shape)
    hx = np.full(shape, rel * S.scale)
    if S.domain is not None:
        # stay inside the chart: never step further than a fraction of the margin
        marg = np.broadcast_to(S.margin(x), shape[:-1])[..., None]
        hx = np.minimum(hx, 0.05 * np.maximum(marg, 1e-8))
    hy = np.broadcast_to(rel * np.linalg.norm(y, axis=-1, keepdims=True), shape)
    return np.concatenate([hx, hy], axis=-1)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def eval_norm(S: FinslerStructure, x, y) -> float:
    x = _check_point(S, x)
    y = np.asarray(y, dtype=float)
    if not np.any(y):
        return 0.0
    value = float(norm_batch(S, x, y))
    if not np.isfinite(value):
        raise FloatingPointError(f"norm evaluator returned {value} at x={x}, y={y}")
    return value


def fundamental_tensor(S: FinslerStructure, x, y) -> np.ndarray:
    """g_y(u, v) = 1/2 d^2/ds dt F^2(y + s u + t v) as an n x n matrix."""
    x = _check_point(S, x)
    y = _check_vector(y)
    g = metric_batch(S, x, y)
    if np.any(np.linalg.eigvalsh(g) <= 0):
        raise DegenerateError(f"fundamental tensor is not positive definite at x={x}, y={y}")
    return g


def cartan_batch(S, x, y, step=CARTAN_STEP):
    """C_y as an array C[i, j, k] = 1/2 d g_ij / d y^k (y-derivative by central
    differences, Richardson-extrapolated)."""
    y = np.asarray(y, dtype=float)
    h = step * np.linalg.norm(y, axis=-1, keepdims=True)
    return 0.5 * fd_jacobian(lambda yy: metric_batch(S, x, yy), y, h)


def cartan_tensor(S: FinslerStructure, x, y, u1, u2, u3) -> float:
    """C_y(u1, u2, u3) = 1/2 d/dt g_{y + t u3}(u1, u2) at t = 0."""
    x = _check_point(S, x)
    y = _check_vector(y)
    u3 = np.asarray(u3, dtype=float)
    scale = np.linalg.norm(y)
    h = CARTAN_STEP * scale
    pts = y + np.outer(_STENCIL * h, u3)
    g = metric_batch(S, x, pts)
    vals = np.einsum("sij,i,j->s", g, np.asarray(u1, float), np.asarray(u2, float))
    return float(0.5 * (8.0 * (vals[2] - vals[1]) - (vals[3] - vals[0])) / (6.0 * h))


def _indicatrix_directions(n, count, rng=None):
    """Quasi-uniform unit directions on the Euclidean sphere."""
    if n == 2:
        phase = 0.0 if rng is None else rng.uniform(0, 2 * np.pi / count)
        return quadrature.circle_rule(count, phase).nodes
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (1 + 5 ** 0.5) * i
        r = np.sqrt(1 - z * z)
        d = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
        if rng is not None:
            from scipy.spatial.transform import Rotation
            d = d @ Rotation.random(random_state=rng).as_matrix().T
        return d
    rng = rng or np.random.default_rng(0)
    z = rng.standard_normal((count, n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def indicatrix_sample(S: FinslerStructure, x, count: int, seed: int = 0) -> np.ndarray:
    """``count`` vectors y/F(x, y) over quasi-uniform directions; F = 1 on each."""
    if count < 1:
        raise ValueError("count must be >= 1")
    x = _check_point(S, x)
    d = _indicatrix_directions(S.dim, count, np.random.default_rng(seed))
    return d / norm_batch(S, x, d)[:, None]


def _legendre_search(S, x, omega, count):
    d = _indicatrix_directions(S.dim, count)
    F = norm_batch(S, x, d)
    vals = (d @ omega) / F
    i = int(np.argmax(vals))
    best = vals[i]
    u = d[i] / F[i]
    if S.dim == 2:
        th0 = np.arctan2(d[i, 1], d[i, 0])
        dth = 2 * np.pi / count

        def neg(th):
            e = np.array([np.cos(th), np.sin(th)])
            return -(e @ omega) / float(norm_batch(S, x, e))

        res = minimize_scalar(neg, bounds=(th0 - dth, th0 + dth), method="bounded",
                              options={"xatol": 1e-12})
        e = np.array([np.cos(res.x), np.sin(res.x)])
        best = -res.fun
        u = e / float(norm_batch(S, x, e))
    return best, u


def legendre_transform(S: FinslerStructure, x, omega, tol: float = 1e-10,
                       max_iter: int = 50) -> np.ndarray:
    """The vector y with omega(y) = F*(omega)^2 and F(y) = F*(omega).

    Maximises omega over the indicatrix, scales by the dual norm, then polishes
    the stationarity condition g_y(y, .) = omega with Newton's method.
    """
    x = _check_point(S, x)
    omega = np.asarray(omega, dtype=float)
    wn = np.linalg.norm(omega)
    if wn == 0:
        raise DegenerateError("Legendre transform of the zero covector")
    dual, u = _legendre_search(S, x, omega, 720 if S.dim == 2 else 4000)
    y = dual * u
    for _ in range(max_iter):
        _, grad, g = fiber_jet(S, x, y)
        r = 0.5 * grad - omega
        if np.linalg.norm(r) <= tol * wn:
            return y
        y = y - np.linalg.solve(g, r)
    raise ConvergenceError(
        f"Legendre transform did not reach stationarity {tol:g}", best=y)


def dual_norm(S: FinslerStructure, x, omega) -> float:
    y = legendre_transform(S, x, omega)
    return eval_norm(S, x, y)


def gradient_field(S: FinslerStructure, u: Callable, x, h: Optional[float] = None,
                   zero_tol: float = 1e-13) -> np.ndarray:
    """Legendre transform of the differential Du(x); zero where Du vanishes."""
    x = _check_point(S, x)
    if h is None:
        h = 1e-3 * max(1.0, float(np.linalg.norm(x))) * S.scale
        if S.domain is not None:
            h = min(h, 0.05 * float(S.margin(x)))
    du = np.empty(S.dim)
    for i in range(S.dim):
        e = np.zeros(S.dim)
        e[i] = h
        f = [float(u(x + s * e)) for s in _STENCIL]
        du[i] = (8.0 * (f[2] - f[1]) - (f[3] - f[0])) / (6.0 * h)
    scale = max(1.0, abs(float(u(x))))
    if np.linalg.norm(du) <= zero_tol * scale:
        return np.zeros(S.dim)
    return legendre_transform(S, x, du)


def reversibility_constant(S: FinslerStructure, points, directions: int = 360) -> float:
    """sup F(-y)/F(y) over the sampled points, refined locally (n = 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = _indicatrix_directions(S.dim, directions)
    best = 1.0
    for x in pts:
        _check_point(S, x)
        ratio = norm_batch(S, x, -d) / norm_batch(S, x, d)
        i = int(np.argmax(ratio))
        r = float(ratio[i])
        if S.dim == 2:
            th0 = np.arctan2(d[i, 1], d[i, 0])
            dth = 2 * np.pi / directions

            def neg(th, x=x):
                e = np.array([np.cos(th), np.sin(th)])
                return -float(norm_batch(S, x, -e) / norm_batch(S, x, e))

            res = minimize_scalar(neg, bounds=(th0 - dth, th0 + dth), method="bounded",
                                  options={"xatol": 1e-12})
            r = max(r, -res.fun)
        best = max(best, r)
    return best


@dataclass
class AxiomReport:
    homogeneity_violation: float
    min_norm: float
    min_eigenvalue: float
    smoothness_discrepancy: float
    samples: int
    worst_eigen_site: tuple = ()
    passed: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def validate_structure(S: FinslerStructure, points=None, directions: int = 16,
                       seed: int = 0, count: int = 50,
                       homogeneity_tol: float = 1e-10,
                       eig_tol: float = 1e-9,
                       smooth_tol: float = 1e-5) -> AxiomReport:
    """Sample-based diagnostics for (F1) smoothness, (F2) homogeneity and
    (F3) positive definiteness, plus positivity of F away from zero."""
    rng = np.random.default_rng(seed)
    if points is None:
        points = S.sample_points(rng, count)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = _indicatrix_directions(S.dim, directions, rng)
    X = np.repeat(pts, len(d), axis=0)
    Y = np.tile(d, (len(pts), 1))
    F = norm_batch(S, X, Y)
    min_norm = float(F.min())

    hom = 0.0
    for lam in (0.5, 2.0, 10.0):
        Fl = norm_batch(S, X, lam * Y)
        hom = max(hom, float(np.max(np.abs(Fl - lam * F) / np.maximum(lam * np.abs(F), 1e-300))))

    good = F > 0
    min_eig = -np.inf
    site = ()
    smooth = np.inf
    if np.any(good):
        Xg, Yg = X[good], Y[good]
        _, grad, g = fiber_jet(S, Xg, Yg)
        eig = np.linalg.eigvalsh(g)[:, 0]
        k = int(np.argmin(eig))
        min_eig = float(eig[k])
        site = (Xg[k].tolist(), Yg[k].tolist())
        # finite-difference gradient of F^2 at two step sizes vs the exact jet
        errs = []
        for h in (1e-4, 1e-5):
            fd = np.empty_like(Yg)
            for i in range(S.dim):
                e = np.zeros(S.dim)
                e[i] = h
                fd[:, i] = (norm_batch(S, Xg, Yg + e) ** 2 - norm_batch(S, Xg, Yg - e) ** 2) / (2 * h)
            errs.append(np.max(np.abs(fd - grad)))
        smooth = float(max(errs))
    report = AxiomReport(hom, min_norm, min_eig, smooth, len(X), site)
    report.passed = {
        "F1": bool(smooth <= smooth_tol),
        "F2": bool(hom <= homogeneity_tol),
        "F3": bool(min_eig > eig_tol),
        "positivity": bool(min_norm > 0),
    }
    return report

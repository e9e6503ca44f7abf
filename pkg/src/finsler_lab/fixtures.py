"""Registry of the shipped Finsler fixtures.

Each fixture is built from a JSON-compatible parameter object; unknown
parameters are rejected so that scenario files fail loudly.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np

from . import hyperdual as hd
from .norm import FinslerStructure


@dataclass(frozen=True)
class FixtureInfo:
    key: str
    builder: object
    dims: str
    params: dict          # name -> (default, description)
    properties: str


def _merge(key, defaults, params):
    params = dict(params or {})
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"unknown parameter(s) for fixture {key!r}: {sorted(unknown)}")
    out = {k: v[0] for k, v in defaults.items()}
    out.update(params)
    return out


# -- Minkowski norms --------------------------------------------------------

def _euclidean_norm(x, y):
    return hd.sqrt(hd.dot(y, y))


def _quartic_norm(eps):
    # smoothed l^4 norm; the eps term keeps g_y positive definite on the axes
    def norm(x, y):
        q = y[0] * y[0]
        r = y[1] * y[1]
        s = q + r
        return (q * q + r * r + eps * s * s) ** 0.25
    return norm


def _minkowski_norm(p):
    kind = p.get("norm", "euclidean")
    if kind == "euclidean":
        return _euclidean_norm
    if kind == "quartic":
        return _quartic_norm(float(p.get("eps", 0.5)))
    raise ValueError(f"unknown Minkowski norm {kind!r}")


# -- builders ---------------------------------------------------------------

_EUCLID = {"n": (2, "dimension"),
           "norm": ("euclidean", "'euclidean' or 'quartic' (smoothed l^4, n=2)"),
           "eps": (0.5, "smoothing weight of the quartic norm")}


def euclidean(params=None):
    p = _merge("euclidean", _EUCLID, params)
    n = int(p["n"])
    if p["norm"] != "euclidean" and n != 2:
        raise ValueError("the quartic norm is two-dimensional")
    return FinslerStructure(
        dim=n, norm=_minkowski_norm(p), family_tag="euclidean", params=p,
        x_independent=True, scale=1.0,
        sampler=lambda rng, k: rng.uniform(-2, 2, size=(k, n)),
    )


_SPHERE = {"radius": (1.0, "sphere radius")}


def riemann_sphere(params=None):
    """Round sphere in polar coordinates (theta, phi); phi is 2*pi periodic."""
    p = _merge("riemann-sphere", _SPHERE, params)
    R = float(p["radius"])

    def norm(x, y):
        s = hd.sin(x[0])
        return R * hd.sqrt(y[0] * y[0] + s * s * y[1] * y[1])

    def domain(x):
        return np.minimum(x[..., 0], pi - x[..., 0])

    def embed(x):
        th, ph = x[..., 0], x[..., 1]
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1)

    def exact_distance(a, b):
        u, v = embed(np.asarray(a, float)), embed(np.asarray(b, float))
        c = np.linalg.norm(np.cross(u, v), axis=-1)
        return R * np.arctan2(c, np.sum(u * v, axis=-1))

    def exact_direction(a, b):
        a = np.asarray(a, float)
        u, v = embed(a), embed(np.asarray(b, float))
        t = v - np.sum(u * v, axis=-1, keepdims=True) * u
        t = t / np.linalg.norm(t, axis=-1, keepdims=True)
        th, ph = a[..., 0], a[..., 1]
        e_th = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], -1)
        e_ph = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], -1)
        return np.stack([np.sum(t * e_th, -1) / R,
                         np.sum(t * e_ph, -1) / (R * np.sin(th))], -1)

    return FinslerStructure(
        dim=2, norm=norm, domain=domain, lattice=((0.0, 2 * pi),),
        family_tag="riemann-sphere", params=p, scale=R,
        sampler=lambda rng, k: np.stack([rng.uniform(0.5, pi - 0.5, k),
                                         rng.uniform(-pi, pi, k)], -1),
        chart_box=np.array([[0.0, pi], [-pi, pi]]),
        exact_distance=exact_distance, exact_direction=exact_direction,
        density_hint=lambda x: R * R * np.sin(np.asarray(x)[..., 0]),
    )


_HYP = {}


def hyperbolic_disk(params=None):
    """Poincare disk model, curvature -1."""
    p = _merge("hyperbolic-disk", _HYP, params)

    def norm(x, y):
        return 2.0 * hd.sqrt(hd.dot(y, y)) / (1.0 - hd.dot(x, x))

    def domain(x):
        return 1.0 - np.sum(x * x, axis=-1)

    def exact_distance(a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        num = 2 * np.sum((a - b) ** 2, -1)
        den = (1 - np.sum(a * a, -1)) * (1 - np.sum(b * b, -1))
        return np.arccosh(1 + num / den)

    def exact_direction(a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        za = a[..., 0] + 1j * a[..., 1]
        zb = b[..., 0] + 1j * b[..., 1]
        w = (zb - za) / (1 - np.conj(za) * zb)
        u = w / np.abs(w)
        s = (1 - np.abs(za) ** 2) / 2
        return np.stack([u.real * s, u.imag * s], -1)

    def sampler(rng, k):
        r = 0.7 * np.sqrt(rng.uniform(0, 1, k))
        t = rng.uniform(0, 2 * pi, k)
        return np.stack([r * np.cos(t), r * np.sin(t)], -1)

    return FinslerStructure(
        dim=2, norm=norm, domain=domain, family_tag="hyperbolic-disk", params=p,
        scale=1.0, sampler=sampler, chart_box=np.array([[-1.0, 1.0], [-1.0, 1.0]]),
        exact_distance=exact_distance, exact_direction=exact_direction,
        density_hint=lambda x: 4.0 / (1 - np.sum(np.asarray(x) ** 2, -1)) ** 2,
    )


_RANDERS = {"b": ([0.5, 0.0], "constant part of the drift 1-form"),
            "b_matrix": ([[0.0, 0.0], [0.0, 0.0]], "linear part: b(x) = b + B x"),
            "radius": (1.0, "chart radius used when b_matrix is non-zero")}


def randers(params=None):
    """F = |y| + b(x).y with b(x) = b + B x (Euclidean alpha)."""
    p = _merge("randers", _RANDERS, params)
    b0 = np.asarray(p["b"], dtype=float)
    B = np.asarray(p["b_matrix"], dtype=float)
    n = len(b0)
    if B.shape != (n, n):
        raise ValueError("b_matrix must be n x n")
    flat = not np.any(B)

    def norm(x, y):
        alpha = hd.sqrt(hd.dot(y, y))
        beta = 0.0
        for i in range(n):
            bi = b0[i]
            for j in range(n):
                if B[i, j]:
                    bi = bi + B[i, j] * x[j]
            beta = beta + bi * y[i]
        return alpha + beta

    R = float(p["radius"])
    domain = None if flat else (lambda x: R * R - np.sum(x * x, axis=-1))

    def sampler(rng, k):
        if flat:
            return rng.uniform(-2, 2, size=(k, n))
        z = rng.standard_normal((k, n))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return z * (0.7 * R * rng.uniform(0, 1, (k, 1)) ** (1 / n))

    return FinslerStructure(
        dim=n, norm=norm, domain=domain, family_tag="randers", params=p,
        x_independent=flat, scale=1.0, sampler=sampler,
        chart_box=None if flat else np.array([[-R, R]] * n),
    )


_FUNK = {}


def funk_disk(params=None):
    """Funk metric of the unit disk: projectively flat, K = -1/4, non-reversible."""
    p = _merge("funk-disk", _FUNK, params)

    def norm(x, y):
        xx = hd.dot(x, x)
        xy = hd.dot(x, y)
        return (hd.sqrt((1.0 - xx) * hd.dot(y, y) + xy * xy) + xy) / (1.0 - xx)

    def domain(x):
        return 1.0 - np.sum(x * x, axis=-1)

    def exact_distance(a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        u = b - a
        uu = np.sum(u * u, -1)
        au = np.sum(a * u, -1)
        s = (-au + np.sqrt(au * au + uu * (1 - np.sum(a * a, -1)))) / np.where(uu > 0, uu, 1)
        with np.errstate(divide="ignore"):
            return np.where(uu > 0, np.log(s / (s - 1)), 0.0)

    def exact_direction(a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        u = b - a
        F = norm(tuple(a[..., i] for i in range(2)), tuple(u[..., i] for i in range(2)))
        return u / np.asarray(F)[..., None]

    def sampler(rng, k):
        r = 0.6 * np.sqrt(rng.uniform(0, 1, k))
        t = rng.uniform(0, 2 * pi, k)
        return np.stack([r * np.cos(t), r * np.sin(t)], -1)

    return FinslerStructure(
        dim=2, norm=norm, domain=domain, family_tag="funk-disk", params=p, scale=1.0,
        sampler=sampler, chart_box=np.array([[-1.0, 1.0], [-1.0, 1.0]]),
        exact_distance=exact_distance, exact_direction=exact_direction,
    )


_CYL = {"L": (1.0, "circumference (period of the second coordinate)"),
        "norm": ("euclidean", "'euclidean' or 'quartic'"),
        "eps": (0.5, "smoothing weight of the quartic norm")}


def flat_cylinder(params=None):
    """R x (R / L Z): axial first coordinate, periodic second coordinate."""
    p = _merge("flat-cylinder", _CYL, params)
    L = float(p["L"])
    return FinslerStructure(
        dim=2, norm=_minkowski_norm(p), lattice=((0.0, L),), family_tag="flat-cylinder",
        params=p, x_independent=True, scale=L,
        sampler=lambda rng, k: np.stack([rng.uniform(-L, L, k), rng.uniform(0, L, k)], -1),
    )


_TORUS = {"L1": (1.0, "period of the first coordinate"),
          "L2": (1.0, "period of the second coordinate"),
          "norm": ("euclidean", "'euclidean' or 'quartic'"),
          "eps": (0.5, "smoothing weight of the quartic norm")}


def flat_torus(params=None):
    p = _merge("flat-torus", _TORUS, params)
    L1, L2 = float(p["L1"]), float(p["L2"])
    return FinslerStructure(
        dim=2, norm=_minkowski_norm(p), lattice=((L1, 0.0), (0.0, L2)),
        family_tag="flat-torus", params=p, x_independent=True, scale=min(L1, L2),
        sampler=lambda rng, k: np.stack([rng.uniform(0, L1, k), rng.uniform(0, L2, k)], -1),
    )


REGISTRY = {
    "euclidean": FixtureInfo("euclidean", euclidean, "n (default 2)", _EUCLID,
                             "reversible, Berwald, K≡0"),
    "riemann-sphere": FixtureInfo("riemann-sphere", riemann_sphere, "2", _SPHERE,
                                  "reversible, Berwald (Riemannian), K≡1/radius²"),
    "hyperbolic-disk": FixtureInfo("hyperbolic-disk", hyperbolic_disk, "2", _HYP,
                                   "reversible, Berwald (Riemannian), K≡-1"),
    "randers": FixtureInfo("randers", randers, "len(b)", _RANDERS,
                           "non-reversible; Berwald and K≡0 iff b_matrix = 0"),
    "funk-disk": FixtureInfo("funk-disk", funk_disk, "2", _FUNK,
                             "non-reversible, non-Berwald, K≡-1/4"),
    "flat-cylinder": FixtureInfo("flat-cylinder", flat_cylinder, "2", _CYL,
                                 "reversible, Berwald, K≡0"),
    "flat-torus": FixtureInfo("flat-torus", flat_torus, "2", _TORUS,
                              "reversible, Berwald, K≡0"),
}


def make_fixture(key: str, params=None) -> FinslerStructure:
    try:
        info = REGISTRY[key]
    except KeyError:
        raise ValueError(f"unknown fixture {key!r}; known: {sorted(REGISTRY)}") from None
    return info.builder(params)


def fixture_table() -> str:
    lines = []
    for info in REGISTRY.values():
        schema = ", ".join(f"{k}={v[0]!r}" for k, v in info.params.items()) or "-"
        lines.append(f"{info.key:<16} n={info.dims:<14} {info.properties:<48} params: {schema}")
    return "\n".join(lines)

"""Spray, Chern connection, curvature and Busemann-Hausdorff density.

The spray is computed from the Euler-Lagrange form of the energy,

    G^i = 1/4 g^{il} (d^2 F^2/dx^k dy^l y^k - dF^2/dx^l),

whose ingredients are exact hyper-dual jets of F^2. Quantities one
derivative further (connection, curvature) use fourth-order central
differences on top of the jets.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import quadrature
from .errors import DegenerateError
from .hyperdual import HyperDual
from .norm import (FinslerStructure, _check_point, _check_vector, components,
                   default_steps, fd_jacobian, full_jet, metric_batch, norm_batch)

INNER_STEP = 1e-3
OUTER_STEP = 2e-3


class SprayData(NamedTuple):
    coefficients: np.ndarray   # G^i
    jacobian: np.ndarray       # G^i_j = dG^i/dy^j


# ---------------------------------------------------------------------------
# batched kernels
# ---------------------------------------------------------------------------

def _spray_from_jet(n, y, grad, H):
    g = 0.5 * H[..., n:, n:]
    rhs = np.einsum("...kl,...k->...l", H[..., :n, n:], y) - grad[..., :n]
    return 0.25 * np.linalg.solve(g, rhs[..., None])[..., 0], g


def spray_batch(S: FinslerStructure, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _, grad, H = full_jet(S, x, y)
    y = np.broadcast_to(y, grad.shape[:-1] + (S.dim,))
    return _spray_from_jet(S.dim, y, grad, H)[0]


def _split(S, fn):
    n = S.dim
    return lambda Z: fn(Z[..., :n], Z[..., n:])


def spray_jacobian_batch(S, x, y, rel=INNER_STEP):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h = default_steps(S, x, y, rel)[..., S.dim:]
    xb = x[..., None, None, :]
    return fd_jacobian(lambda yy: spray_batch(S, xb, yy), y, h)


def _g_and_spray(S, Z):
    n = S.dim
    x, y = Z[..., :n], Z[..., n:]
    _, grad, H = full_jet(S, x, y)
    G, g = _spray_from_jet(n, y, grad, H)
    return np.concatenate([g.reshape(g.shape[:-2] + (n * n,)), G], axis=-1)


def connection_batch(S: FinslerStructure, x, y, rel=INNER_STEP):
    """Chern connection Gamma^i_jk(x, y) from the six-term formula.

    Returns (Gamma, g, G, N) with N^i_j = dG^i/dy^j.
    """
    n = S.dim
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast_shapes(x.shape, y.shape)
    Z = np.concatenate([np.broadcast_to(x, shape), np.broadcast_to(y, shape)], axis=-1)
    h = default_steps(S, Z[..., :n], Z[..., n:], rel)
    J = fd_jacobian(lambda zz: _g_and_spray(S, zz), Z, h)
    center = _g_and_spray(S, Z)
    g = center[..., : n * n].reshape(shape[:-1] + (n, n))
    G = center[..., n * n:]
    dg = J[..., : n * n, :].reshape(shape[:-1] + (n, n, 2 * n))
    dgx, dgy = dg[..., :n], dg[..., n:]
    N = J[..., n * n:, n:]
    B = (dgx
         - np.einsum("...jkl->...ljk", dgx)
         + np.einsum("...klj->...ljk", dgx)
         - np.einsum("...ljr,...rk->...ljk", dgy, N)
         + np.einsum("...jkr,...rl->...ljk", dgy, N)
         - np.einsum("...klr,...rj->...ljk", dgy, N))
    gamma = 0.5 * np.einsum("...il,...ljk->...ijk", np.linalg.inv(g), B)
    return gamma, g, G, N


@dataclass
class CurvatureData:
    """Pole-dependent data for the curvature operator at one point."""
    g: np.ndarray          # g_v
    gamma: np.ndarray      # Gamma^i_jk(x, v)
    dgamma: np.ndarray     # delta_m Gamma^i_jk, last axis m

    def operator(self, X, Y, Z) -> np.ndarray:
        d, G = self.dgamma, self.gamma
        first = (np.einsum("ijkm,m,j,k->i", d, X, Y, Z)
                 - np.einsum("ijkm,m,j,k->i", d, Y, X, Z))
        second = (np.einsum("iml,m,ljk,j,k->i", G, X, G, Y, Z)
                  - np.einsum("iml,m,ljk,j,k->i", G, Y, G, X, Z))
        return first + second


def curvature_data(S: FinslerStructure, x, v, rel=OUTER_STEP) -> CurvatureData:
    n = S.dim
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    Z = np.concatenate([x, v])
    h = default_steps(S, x, v, rel)

    def gamma_of(zz):
        return connection_batch(S, zz[..., :n], zz[..., n:])[0]

    dG = fd_jacobian(gamma_of, Z, h)               # (n, n, n, 2n)
    gamma, g, _, _ = connection_batch(S, x, v)
    # the pole is extended parallel at x: dV^r/dx^m = -Gamma^r_ma v^a
    Nv = np.einsum("rma,a->rm", gamma, v)
    dgamma = dG[..., :n] - np.einsum("ijkr,rm->ijkm", dG[..., n:], Nv)
    return CurvatureData(g, gamma, dgamma)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def spray_coefficients(S: FinslerStructure, x, y) -> SprayData:
    x = _check_point(S, x)
    y = _check_vector(y)
    G = spray_batch(S, x, y)
    return SprayData(G, spray_jacobian_batch(S, x, y))


def chern_connection(S: FinslerStructure, x, y) -> np.ndarray:
    """Gamma[i, j, k] = Gamma^i_jk(x, y)."""
    x = _check_point(S, x)
    y = _check_vector(y)
    return connection_batch(S, x, y)[0]


def curvature_operator(S: FinslerStructure, x, pole, X, Y, Z) -> np.ndarray:
    """R^V(X, Y)Z with X, Y, Z constant in the chart (so [X, Y] = 0)."""
    x = _check_point(S, x)
    pole = _check_vector(pole)
    data = curvature_data(S, x, pole)
    return data.operator(*(np.asarray(a, dtype=float) for a in (X, Y, Z)))


def _flag_from_data(data, v, w):
    g = data.g
    gvv, gww, gvw = v @ g @ v, w @ g @ w, v @ g @ w
    den = gvv * gww - gvw * gvw
    if den <= 1e-12 * gvv * gww:
        raise DegenerateError("flag pole and transverse vector are g_v-dependent")
    R = data.operator(v, w, w)
    return float(R @ g @ v / den)


def flag_curvature(S: FinslerStructure, x, v, w) -> float:
    """K^v(v, w) = g_v(R^v(v, w)w, v) / (g_v(v,v) g_v(w,w) - g_v(v,w)^2)."""
    x = _check_point(S, x)
    v = _check_vector(v)
    w = np.asarray(w, dtype=float)
    return _flag_from_data(curvature_data(S, x, v), v, w)


def _orthonormal_complement(g, v, rng):
    """g-orthonormal vectors completing v/|v|_g, by Gram-Schmidt on random seeds."""
    n = len(v)
    basis = [v / np.sqrt(v @ g @ v)]
    while len(basis) < n:
        u = rng.standard_normal(n)
        for e in basis:
            u = u - (u @ g @ e) * e
        nu = np.sqrt(u @ g @ u)
        if nu > 1e-6:
            basis.append(u / nu)
    return basis[1:]


def ricci_curvature(S: FinslerStructure, x, v, seed: int = 0) -> float:
    x = _check_point(S, x)
    v = _check_vector(v)
    data = curvature_data(S, x, v)
    F = float(norm_batch(S, x, v))
    es = _orthonormal_complement(data.g, v, np.random.default_rng(seed))
    return F * F * sum(_flag_from_data(data, v, e) for e in es)


def tangential_curvature(S: FinslerStructure, x, v, w) -> float:
    """T(v, w)(x) = g_v(Gamma(x, w)(w, w) - Gamma(x, v)(w, w), v)."""
    x = _check_point(S, x)
    v = _check_vector(v)
    w = _check_vector(w)
    gam, g, _, _ = connection_batch(S, np.stack([x, x]), np.stack([v, w]))
    diff = np.einsum("ijk,j,k->i", gam[1] - gam[0], w, w)
    return float(diff @ g[0] @ v)


# -- Busemann-Hausdorff density --------------------------------------------

def _sphere_integral(S, X, rule):
    """I(x) = integral over S^{n-1} of F(x, theta)^{-n}, batched over X."""
    X = np.asarray(X, dtype=float)
    F = norm_batch(S, X[..., None, :], rule.nodes)
    return quadrature.integrate(rule, F ** (-S.dim))


def density_batch(S: FinslerStructure, X, chunk: int = 4096, use_hint: bool = False):
    X = np.asarray(X, dtype=float)
    if use_hint and S.density_hint is not None:
        return np.asarray(S.density_hint(X), dtype=float)
    n = S.dim
    rule = quadrature.sphere_rule(n)
    flat = X.reshape(-1, n)
    out = np.empty(len(flat))
    for i in range(0, len(flat), chunk):
        out[i:i + chunk] = _sphere_integral(S, flat[i:i + chunk], rule)[0]
    return (n * quadrature.unit_ball_volume(n) / out).reshape(X.shape[:-1])


def bh_density(S: FinslerStructure, x, return_se: bool = False):
    """tau_F(x) = vol(B^n) / vol{y : F(x, y) <= 1}, the tangent ball volume being
    (1/n) times the sphere integral of F^{-n}."""
    x = _check_point(S, x)
    n = S.dim
    rule = quadrature.sphere_rule(n)
    I, se = _sphere_integral(S, x, rule)
    tau = n * quadrature.unit_ball_volume(n) / float(I)
    if return_se:
        return tau, tau * float(se) / float(I)
    return tau


def log_density_gradient(S: FinslerStructure, x) -> np.ndarray:
    """d(ln tau_F)/dx by hyper-dual perturbation of x under fixed sphere nodes."""
    n = S.dim
    x = np.asarray(x, dtype=float)
    rule = quadrature.sphere_rule(n)
    E = np.eye(n)
    zero = np.zeros((n, 1))
    xs = tuple(HyperDual(x[..., None, None, i], E[:, i:i + 1], zero, zero) for i in range(n))
    ys = components(rule.nodes)
    F = S.norm(xs, ys)
    if not isinstance(F, HyperDual):
        return np.zeros(x.shape)
    P = F ** (-n)
    shape = x.shape[:-1] + (n, len(rule.weights))
    a = np.broadcast_to(P.a, shape) @ rule.weights
    b = np.broadcast_to(P.b, shape) @ rule.weights
    return -b / a


def s_curvature(S: FinslerStructure, x, y) -> float:
    """S(y) = dG^i/dy^i - y^i d(ln tau_F)/dx^i."""
    x = _check_point(S, x)
    y = _check_vector(y)
    N = spray_jacobian_batch(S, x, y)
    return float(np.trace(N) - y @ log_density_gradient(S, x))


# -- Berwald detection -------------------------------------------------------

@dataclass
class BerwaldReport:
    is_berwald: bool
    max_tangential: float
    max_quadraticity: float
    witness: dict


def _spray_hessian(S, x, y):
    h = default_steps(S, x, y, INNER_STEP)[..., S.dim:]
    xb = x[..., None, None, :]
    return fd_jacobian(lambda yy: spray_jacobian_batch(S, xb, yy), y, h)


def is_berwald(S: FinslerStructure, points=None, count: int = 12, vectors: int = 4,
               tol: float = 1e-6, seed: int = 0) -> BerwaldReport:
    """Berwald test at sample resolution: tangential curvature vanishes and the
    spray's second y-derivative does not depend on y."""
    rng = np.random.default_rng(seed)
    if points is None:
        points = S.sample_points(rng, count)
    worst_T, worst_Q = 0.0, 0.0
    witness = {}
    for x in np.atleast_2d(points):
        ys = rng.standard_normal((vectors, S.dim))
        scale = max(1.0, float(S.margin(x)) if np.isfinite(S.margin(x)) else 1.0)
        ys /= np.linalg.norm(ys, axis=1, keepdims=True)
        for i in range(vectors):
            v, w = ys[i], ys[(i + 1) % vectors]
            T = abs(tangential_curvature(S, x, v, w)) / scale
            if T > worst_T:
                worst_T = T
                if T > tol and worst_T >= worst_Q:
                    witness = {"kind": "tangential", "x": x.tolist(), "v": v.tolist(),
                               "w": w.tolist(), "value": T}
        H = _spray_hessian(S, np.broadcast_to(x, ys.shape), ys)
        spread = float(np.max(np.abs(H - H[0])))
        if spread > worst_Q:
            worst_Q = spread
            if spread > tol and worst_Q > worst_T:
                witness = {"kind": "quadraticity", "x": x.tolist(), "ys": ys.tolist(),
                           "value": spread}
    ok = worst_T <= tol and worst_Q <= tol
    return BerwaldReport(ok, worst_T, worst_Q, {} if ok else witness)

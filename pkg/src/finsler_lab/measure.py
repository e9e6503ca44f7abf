"""Busemann-Hausdorff volumes of balls and annuli, comparison volumes and
volume growth.

Two evaluators are used. On x-independent structures (Minkowski spaces and
their flat quotients) volumes come from polar quadrature: along each direction
the segment from p stays minimal up to a cut time determined by the deck
translates, and the density is constant. On curved fixtures volumes come from
jittered stratified Monte Carlo (two samples per stratum, which gives an
unbiased standard error) using the fixture's closed-form distance.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from . import quadrature
from .curvature import density_batch, ricci_curvature, s_curvature
from .errors import FinslerError, HypothesisError
from .geodesics import (FREEZE_MARGIN, _deck_window, _distortion, deck_distance_batch,
                        find_rays, integrate_batch)
from .norm import FinslerStructure, _check_point, _indicatrix_directions, norm_batch

log = logging.getLogger(__name__)

POLAR_NODES = 2 ** 14
MC_SAMPLES = 10 ** 6
REL_SLACK = 1e-9          # roundoff allowance on top of 3 SE for exact evaluators


def s_kappa(kappa: float, t):
    """sin(sqrt(k) t), t or sinh(sqrt(-k) t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("s_kappa needs t >= 0")
    if kappa > 0:
        return np.sin(np.sqrt(kappa) * t)
    if kappa < 0:
        return np.sinh(np.sqrt(-kappa) * t)
    return t


@dataclass(frozen=True)
class ComparisonParams:
    kappa: float = 0.0
    lam: float = 0.0
    n: int = 2

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.n < 2:
            raise ValueError("dimension must be >= 2")


def comparison_volume(params: ComparisonParams, r: float, R: float,
                      sigma_measure: Optional[float] = None) -> float:
    """sigma_measure * int_r^R exp(lam t) s_kappa(t)^(n-1) dt.

    For kappa > 0 the integrand is cut off at the first zero pi/sqrt(kappa).
    """
    if not 0 <= r <= R:
        raise ValueError("need 0 <= r <= R")
    n = params.n
    if sigma_measure is None:
        sigma_measure = quadrature.sphere_area(n)
    if sigma_measure <= 0:
        raise ValueError("sigma_measure must be positive")
    k, lam = params.kappa, params.lam
    if k > 0:
        top = np.pi / np.sqrt(k)
        r, R = min(r, top), min(R, top)
    if k == 0 and lam == 0:
        return sigma_measure * (R ** n - r ** n) / n
    if R == r:
        return 0.0
    f = lambda t: np.exp(lam * t) * float(s_kappa(k, t)) ** (n - 1)
    val, _ = quad(f, r, R, epsabs=0.0, epsrel=1e-13, limit=200)
    return sigma_measure * val


# ---------------------------------------------------------------------------
# direction sets
# ---------------------------------------------------------------------------

def direction_measure(S: FinslerStructure, p, gamma: Optional[Callable] = None,
                      nodes: int = POLAR_NODES) -> float:
    """n * tau_p * Leb{t u : u in gamma, 0 <= t <= 1}; equals the sphere area for
    the full indicatrix, so that gamma-restricted comparison volumes carry the
    same normalisation as the unrestricted ones."""
    p = _check_point(S, p)
    n = S.dim
    rule = quadrature.circle_rule(nodes, np.pi / nodes) if n == 2 else quadrature.sphere_rule(n)
    F = norm_batch(S, p, rule.nodes)
    u = rule.nodes / F[:, None]
    mask = np.ones(len(F), bool) if gamma is None else np.asarray(gamma(u), bool)
    tau = float(density_batch(S, p[None], use_hint=True)[0])
    leb = float(rule.weights @ (mask * F ** (-n))) / n
    return n * tau * leb


# ---------------------------------------------------------------------------
# evaluators
# ---------------------------------------------------------------------------

def _cut_times(S, dirs):
    """Largest s with s*theta minimal, i.e. F(s theta) <= F(s theta - k) for all deck k.

    s -> F(s theta) - F(s theta - k) is non-decreasing (convexity), so each
    translate contributes one crossing, found by vectorised bisection.
    """
    N = len(dirs)
    cut = np.full(N, np.inf)
    if not S.lattice:
        return cut
    Bm = S.lattice_matrix
    diam = np.sum(np.linalg.norm(Bm, axis=0))
    shifts = _deck_window(S, 2 * _distortion(S) * diam)
    shifts = shifts[np.any(shifts != 0, axis=1)]
    o = np.zeros(S.dim)
    Fd = norm_batch(S, o, dirs)
    for k in shifts:
        def gap(s):
            return s * Fd - norm_batch(S, o, s[:, None] * dirs - k)
        # limiting slope of gap; no crossing when it is <= 0
        big = 1e6 * np.linalg.norm(k)
        has = gap(np.full(N, big)) > 0
        lo = np.zeros(N)
        hi = np.full(N, np.linalg.norm(k))
        for _ in range(80):
            grow = has & (gap(hi) <= 0)
            if not np.any(grow):
                break
            lo = np.where(grow, hi, lo)
            hi = np.where(grow, 2 * hi, hi)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            pos = gap(mid) > 0
            hi = np.where(pos, mid, hi)
            lo = np.where(pos, lo, mid)
        cut = np.where(has, np.minimum(cut, 0.5 * (lo + hi)), cut)
    return cut


@lru_cache(maxsize=32)
def _polar_grid(S: FinslerStructure, nodes: int):
    n = S.dim
    rule = quadrature.circle_rule(nodes, np.pi / nodes) if n == 2 else quadrature.sphere_rule(n)
    o = np.zeros(n)
    rho = 1.0 / norm_batch(S, o, rule.nodes)
    cut = _cut_times(S, rule.nodes)
    tau = float(density_batch(S, o[None])[0])
    return rule, rho, cut, tau


def _has_cut(cut):
    return bool(np.any(np.isfinite(cut)))


class VolumeEstimator:
    """Volumes of forward balls and annuli around p.

    method: "auto" (quadrature when x-independent, Monte Carlo otherwise),
    "quadrature" or "monte-carlo". Every volume is returned with a standard
    error (zero for quadrature).
    """

    def __init__(self, S: FinslerStructure, p, r_max: float, method: str = "auto",
                 samples: int = MC_SAMPLES, seed: int = 0, nodes: int = POLAR_NODES):
        self.S = S
        self.p = _check_point(S, p)
        self.r_max = float(r_max)
        if method == "auto":
            method = "quadrature" if S.x_independent else "monte-carlo"
        if method not in ("quadrature", "monte-carlo"):
            raise ValueError(f"unknown volume method {method!r}")
        if method == "quadrature" and not S.x_independent:
            raise FinslerError("polar quadrature needs an x-independent structure")
        self.method = method
        self.n = S.dim
        if method == "quadrature":
            self.rule, self.rho, self.cut, self.tau = _polar_grid(S, nodes)
            self.u = self.rule.nodes * self.rho[:, None]
        else:
            self._sample(samples, seed)

    # -- Monte Carlo set-up ---------------------------------------------------

    def _box(self):
        S, p, n = self.S, self.p, self.n
        if S.x_independent:
            d = _indicatrix_directions(n, 720 if n == 2 else 2000)
            ext = self.r_max * np.max(np.abs(d / norm_batch(S, p, d)[:, None]), axis=0)
            lo, hi = p - 1.05 * ext, p + 1.05 * ext
        else:
            d = _indicatrix_directions(n, 256 if n == 2 else 1000)
            u = d / norm_batch(S, p, d)[:, None]
            res = integrate_batch(S, p, u, self.r_max, rtol=1e-8, atol=1e-10)
            ts = np.linspace(0, self.r_max, 65)
            pts = res.sol(ts).reshape(len(u), 2 * n, len(ts))[:, :n, :]
            lo, hi = pts.min(axis=(0, 2)), pts.max(axis=(0, 2))
            pad = 0.05 * (hi - lo) + 1e-9
            lo, hi = lo - pad, hi + pad
            if S.chart_box is not None:
                lo = np.maximum(lo, S.chart_box[:, 0])
                hi = np.minimum(hi, S.chart_box[:, 1])
        # periodic coordinates: one period centred on p represents each point once
        for k in S.lattice:
            k = np.asarray(k, float)
            axes = np.flatnonzero(k)
            if len(axes) != 1:
                raise FinslerError("Monte Carlo volumes need an axis-aligned lattice")
            i = axes[0]
            L = abs(k[i])
            if hi[i] - lo[i] > L:
                lo[i], hi[i] = p[i] - L / 2, p[i] + L / 2
            else:
                log.debug("ball does not wrap along axis %d", i)
        return lo, hi

    def _sample(self, samples, seed):
        S, n = self.S, self.n
        if not S.x_independent and S.exact_distance is None:
            raise FinslerError("Monte Carlo volumes need a closed-form distance on curved fixtures")
        lo, hi = self._box()
        m = max(1, int(round((samples / 2) ** (1.0 / n))))
        rng = np.random.default_rng(seed)
        cells = np.array(list(product(range(m), repeat=n)), dtype=float)      # (M, n)
        width = (hi - lo) / m
        X = lo + (cells[:, None, :] + rng.uniform(size=(len(cells), 2, n))) * width
        self.cell_volume = float(np.prod(width))
        self.X = X
        P = np.broadcast_to(self.p, X.shape)
        if S.x_independent:
            self.dist, disp = deck_distance_batch(S, P, X)
            self.dirs = disp / np.where(self.dist > 0, self.dist, 1.0)[..., None]
            self.density = np.full(self.dist.shape, float(density_batch(S, self.p[None])[0]))
        else:
            inside = S.margin(X) > FREEZE_MARGIN
            Xs = np.where(inside[..., None], X, self.p)
            self.dist = np.where(inside, S.exact_distance(P, Xs), np.inf)
            self.density = np.where(inside, density_batch(S, Xs, use_hint=True), 0.0)
            self.dirs = None
        self.samples = X.shape[0] * 2

    def _directions(self):
        if self.dirs is None:
            S = self.S
            near = self.dist <= self.r_max
            dirs = np.zeros(self.X.shape)
            P = np.broadcast_to(self.p, self.X[near].shape)
            ok = np.any(self.X[near] != self.p, axis=-1)
            d = np.zeros_like(P)
            d[ok] = S.exact_direction(P[ok], self.X[near][ok])
            F = norm_batch(S, self.p, d)
            dirs[near] = d / np.where(F > 0, F, 1.0)[..., None]
            self.dirs = dirs
        return self.dirs

    # -- evaluation -----------------------------------------------------------

    def weights(self, r, R, gamma: Optional[Callable] = None):
        """Per-node (quadrature) or per-sample (Monte Carlo) contributions."""
        if not 0 <= r <= R:
            raise ValueError("need 0 <= r <= R")
        if R > self.r_max * (1 + 1e-12) and self.method == "monte-carlo":
            raise FinslerError(f"radius {R} exceeds the sampled region (r_max={self.r_max})")
        n = self.n
        if self.method == "quadrature":
            w = self._polar_weights(self.u, self.rho, self.cut, r, R, gamma)
            if n == 2 and _has_cut(self.cut):
                w = self._refine_kinks(w, r, R, gamma)
            return w * self.rule.weights
        sel = (self.dist >= r) & (self.dist <= R)
        if r == 0:
            sel |= self.dist == 0
        if gamma is not None:
            dirs = self._directions()
            g = np.zeros(sel.shape, bool)
            g[sel] = np.asarray(gamma(dirs[sel]), bool)
            sel &= g
        return sel * self.density * self.cell_volume / 2

    def _polar_weights(self, u, rho, cut, r, R, gamma):
        mask = 1.0 if gamma is None else np.asarray(gamma(u), float)
        a = np.minimum(r * rho, cut)
        b = np.minimum(R * rho, cut)
        return self.tau * mask * (b ** self.n - a ** self.n) / self.n

    def _refine_kinks(self, w, r, R, gamma, sub: int = 16, window: int = 64):
        """Re-integrate the circle cells around the angles where the radial limit
        switches between the ball and the cut locus. The integrand has a kink
        there and is steep just beyond it, which the equispaced rule resolves
        only to second order."""
        kink = np.zeros(len(w), bool)
        for t in (r, R):
            if t == 0:
                continue
            side = t * self.rho < self.cut
            kink |= side != np.roll(side, 1)
        if not np.any(kink):
            return w
        near = np.convolve(np.concatenate([kink[-window:], kink, kink[:window]]).astype(float),
                           np.ones(2 * window + 1), "same")[window:-window] > 0
        idx = np.flatnonzero(near)
        if len(idx) == 0:
            return w
        h = 2 * np.pi / len(w)
        theta = np.arctan2(self.rule.nodes[idx, 1], self.rule.nodes[idx, 0])
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        th = (theta[:, None] + h * offs[None]).ravel()
        d = np.stack([np.cos(th), np.sin(th)], axis=1)
        rho = 1.0 / norm_batch(self.S, np.zeros(2), d)
        cut = _cut_times(self.S, d)
        fine = self._polar_weights(d * rho[:, None], rho, cut, r, R, gamma)
        w = np.array(w, dtype=float, copy=True) * np.ones(len(w))
        w[idx] = fine.reshape(len(idx), sub).mean(axis=1)
        return w

    def combine(self, w):
        """(estimate, standard error) of a linear combination of weight arrays."""
        if self.method == "quadrature":
            return float(np.sum(w)), 0.0
        est = float(np.sum(w))
        # two jittered samples per stratum: var = sum (h1 - h2)^2 / 4 * 4
        se = float(np.sqrt(np.sum((w[:, 0] - w[:, 1]) ** 2)))
        return est, se

    def annulus(self, r, R, gamma=None):
        return self.combine(self.weights(r, R, gamma))

    def ball(self, r, gamma=None):
        return self.annulus(0.0, r, gamma)


def ball_volume(S: FinslerStructure, p, r: float, method: str = "auto",
                samples: int = MC_SAMPLES, seed: int = 0):
    """mu_F(B+(p, r)) and its standard error."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    if r == 0:
        return 0.0, 0.0
    return VolumeEstimator(S, p, r, method, samples, seed).ball(r)


def annulus_volume(S: FinslerStructure, p, gamma: Optional[Callable], r: float, R: float,
                   method: str = "auto", samples: int = MC_SAMPLES, seed: int = 0):
    """Volume of the points at forward distance in [r, R] whose minimal geodesic
    from p starts in gamma (a predicate on F-unit directions)."""
    if not 0 <= r <= R:
        raise ValueError("need 0 <= r <= R")
    if R == 0:
        return 0.0, 0.0
    return VolumeEstimator(S, p, R, method, samples, seed).annulus(r, R, gamma)


# ---------------------------------------------------------------------------
# hypothesis sampling and the annulus comparison
# ---------------------------------------------------------------------------

def check_hypotheses(S: FinslerStructure, p, params: ComparisonParams, radius: float,
                     points: int = 12, vectors: int = 3, seed: int = 0, tol: float = 1e-6) -> dict:
    """Sample Ric >= (n-1) kappa and |S| <= lambda on unit vectors around p."""
    rng = np.random.default_rng(seed)
    p = _check_point(S, p)
    n = S.dim
    d = _indicatrix_directions(n, points, rng)
    u = d / norm_batch(S, p, d)[:, None]
    t = radius * rng.uniform(0, 1, points)
    if S.x_independent:
        X = p + t[:, None] * u
    else:
        X = []
        for ti, ui in zip(t, u):
            res = integrate_batch(S, p, ui, max(ti, 1e-9), rtol=1e-9, atol=1e-11, dense=False)
            X.append(res.y[:n, -1])
        X = np.array(X)
    X = np.concatenate([p[None], X])
    X = X[S.margin(X) > 1e-3]
    worst_ric, worst_s = np.inf, 0.0
    for i, x in enumerate(X):
        for j in range(vectors):
            v = rng.standard_normal(n)
            v /= float(norm_batch(S, x, v))
            worst_ric = min(worst_ric, ricci_curvature(S, x, v, seed=seed + j))
            worst_s = max(worst_s, abs(s_curvature(S, x, v)))
    ok_ric = worst_ric >= (n - 1) * params.kappa - tol
    ok_s = worst_s <= params.lam + tol
    return {"min_ricci": float(worst_ric), "max_abs_s": float(worst_s),
            "ricci_ok": bool(ok_ric), "s_ok": bool(ok_s), "points": int(len(X)),
            "passed": bool(ok_ric and ok_s)}


def volume_comparison_check(S: FinslerStructure, p, params: ComparisonParams,
                            inner: Sequence[float], outer: Sequence[float],
                            gamma: Optional[Callable] = None, method: str = "auto",
                            samples: int = MC_SAMPLES, seed: int = 0,
                            require_hypotheses: bool = True) -> dict:
    """Check vol(A_{s,S'})/V_{s,S'} <= vol(A_{r,R})/V_{r,R} + 3 SE for every
    pair of grid annuli with r <= s, R <= S'. The standard error is that of the
    difference, with both ratios computed from the same samples."""
    outer = sorted(float(x) for x in outer)
    inner = sorted(float(x) for x in inner)
    r_max = outer[-1]
    hyp = check_hypotheses(S, p, params, r_max, seed=seed)
    if require_hypotheses and not hyp["passed"]:
        raise HypothesisError(f"curvature hypotheses fail: {hyp}")
    est = VolumeEstimator(S, p, r_max, method, samples, seed)
    sigma = None if gamma is None else direction_measure(S, p, gamma)
    annuli = [(a, b) for a in inner for b in outer if a < b]
    W, ratio, se, V = [], [], [], []
    for a, b in annuli:
        w = est.weights(a, b, gamma)
        v = comparison_volume(params, a, b, sigma)
        V.append(v)
        W.append(w / v)
        val, e = est.combine(w / v)
        ratio.append(val)
        se.append(e)
    violations = []
    worst = -np.inf
    for i, (r, R) in enumerate(annuli):
        for j, (s, Sp) in enumerate(annuli):
            if i == j or not (r <= s and R <= Sp):
                continue
            diff, dse = est.combine(W[j] - W[i])
            slack = 3 * dse + REL_SLACK * max(1.0, abs(ratio[i]))
            worst = max(worst, diff - slack)
            if diff > slack:
                violations.append({"small": [r, R], "large": [s, Sp],
                                   "excess": float(diff), "se": float(dse)})
    return {"method": est.method,
            "params": {"kappa": params.kappa, "lambda": params.lam, "n": params.n},
            "hypotheses": hyp, "annuli": [list(a) for a in annuli],
            "ratios": [float(x) for x in ratio], "se": [float(x) for x in se],
            "comparison": [float(x) for x in V],
            "violations": violations, "worst_margin": float(worst),
            "passed": not violations}


# ---------------------------------------------------------------------------
# volume growth
# ---------------------------------------------------------------------------

@dataclass
class VolumeReport:
    radii: np.ndarray
    volumes: np.ndarray
    comparison: np.ndarray
    ratios: np.ndarray
    se: np.ndarray
    v_M: float
    v_M_se: float
    max_increase: float         # largest ratio increase beyond 3 SE along the grid
    method: str = ""
    params: dict = field(default_factory=dict)

    @property
    def monotone(self) -> bool:
        return self.max_increase <= 0

    def to_json(self) -> dict:
        return {"radii": self.radii.tolist(), "volumes": self.volumes.tolist(),
                "comparison": self.comparison.tolist(), "ratios": self.ratios.tolist(),
                "se": self.se.tolist(), "v_M": self.v_M, "v_M_se": self.v_M_se,
                "max_increase": self.max_increase, "monotone": self.monotone,
                "method": self.method, "params": self.params}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "vol", "V", "ratio", "SE"])
            for row in zip(self.radii, self.volumes, self.comparison, self.ratios, self.se):
                w.writerow([repr(float(x)) for x in row])


def volume_growth_estimate(S: FinslerStructure, p, r_max: float, grid: Optional[Sequence[float]] = None,
                           params: Optional[ComparisonParams] = None, method: str = "auto",
                           samples: int = MC_SAMPLES, seed: int = 0, window: int = 3) -> VolumeReport:
    """Ratio curve vol(B(p, r)) / V^{kappa,lambda}_{0,r}(S^{n-1}); v_M is the
    average over the last ``window`` radii."""
    if params is None:
        params = ComparisonParams(0.0, 0.0, S.dim)
    if grid is None:
        grid = np.geomspace(r_max / 100, r_max, 25)
    radii = np.asarray(sorted(float(r) for r in grid))
    if radii[0] <= 0:
        raise ValueError("radii must be positive")
    est = VolumeEstimator(S, p, radii[-1], method, samples, seed)
    vols, ratios, ses, comp, W = [], [], [], [], []
    for r in radii:
        w = est.weights(0.0, r)
        V = comparison_volume(params, 0.0, r)
        vol, _ = est.combine(w)
        q, e = est.combine(w / V)
        vols.append(vol)
        comp.append(V)
        ratios.append(q)
        ses.append(e)
        W.append(w / V)
    k = min(window, len(radii))
    vm, vse = est.combine(sum(W[-k:]) / k)
    inc = -np.inf
    for i in range(1, len(radii)):
        d, dse = est.combine(W[i] - W[i - 1])
        inc = max(inc, d - 3 * dse - REL_SLACK * max(1.0, ratios[i - 1]))
    return VolumeReport(radii, np.array(vols), np.array(comp), np.array(ratios), np.array(ses),
                        float(vm), float(vse), float(inc),
                        est.method, {"kappa": params.kappa, "lambda": params.lam, "n": params.n})


# ---------------------------------------------------------------------------
# ray cones
# ---------------------------------------------------------------------------

def _angle_predicate(accepted_angles, resolution, delta=0.0, exclude=None):
    """Predicate on 2D directions: within delta (plus half a cell) of an
    accepted scan angle. ``exclude`` removes the cells themselves."""
    acc = np.sort(np.asarray(accepted_angles, float))
    half = np.pi / resolution

    def near(u, radius):
        if len(acc) == 0:
            return np.zeros(len(u), bool)
        th = np.arctan2(u[..., 1], u[..., 0])
        diff = np.abs((th[..., None] - acc + np.pi) % (2 * np.pi) - np.pi)
        return np.min(diff, axis=-1) <= radius

    def pred(u):
        inside = near(u, half + delta)
        if exclude is not None:
            inside &= ~near(u, half)
        return inside
    return pred


def ray_cone_volume(S: FinslerStructure, p, horizon: float, r: float, delta: float = 0.0,
                    tol: float = 1e-3, resolution: int = 720, v_M: Optional[float] = None,
                    lam: float = 0.0, method: str = "auto", samples: int = MC_SAMPLES,
                    seed: int = 0) -> dict:
    """vol(B(Gamma_ray, r)) and vol(B(Gamma_ray^c, r)), with B(Gamma, r) the part
    of B(p, r) reached from p by minimal geodesics with initial direction in
    Gamma; optionally the delta-tube volume ratio and the lower bound by v_M."""
    if S.dim != 2:
        raise FinslerError("ray cones are implemented for surfaces")
    p = _check_point(S, p)
    rays = find_rays(S, p, horizon, tol=tol, resolution=resolution)
    acc = np.arctan2(rays.rays[:, 1], rays.rays[:, 0]) if len(rays.rays) else np.zeros(0)
    in_ray = _angle_predicate(acc, resolution)
    est = VolumeEstimator(S, p, r, method, samples, seed)
    w_all = est.weights(0.0, r)
    w_ray = est.weights(0.0, r, in_ray)
    ray_vol, ray_se = est.combine(w_ray)
    non_vol, non_se = est.combine(w_all - w_ray)
    V = comparison_volume(ComparisonParams(0.0, lam, 2), 0.0, r)
    out = {"horizon": horizon, "r": r, "ray_fraction": rays.fraction,
           "ray_volume": ray_vol, "ray_se": ray_se, "nonray_volume": non_vol,
           "nonray_se": non_se, "ball_volume": est.combine(w_all)[0],
           "ray_ratio": ray_vol / V, "nonray_ratio": non_vol / V, "comparison": V}
    if delta > 0:
        tube = _angle_predicate(acc, resolution, delta, exclude=True)
        tv, tse = est.combine(est.weights(0.0, r, tube))
        out.update({"delta": delta, "tube_volume": tv, "tube_se": tse, "tube_ratio": tv / V})
    if v_M is not None:
        bound = v_M * V - 3 * ray_se
        out.update({"v_M": v_M, "lower_bound": bound,
                    "split_ok": bool(ray_vol >= bound - REL_SLACK * max(1.0, V))})
    return out

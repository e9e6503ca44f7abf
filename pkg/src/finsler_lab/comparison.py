"""Von Mangoldt model surfaces, comparison triangles and the triangle
comparison checks.

A model is the plane with metric dt^2 + f(t)^2 dtheta^2 and radial curvature
G = -f''/f. Constant curvature models use closed-form trigonometry; tabulated
models integrate the geodesic equations with the Clairaut relation
f(t) sin(psi) = const, psi being the angle to the outward radial direction.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import hyperdual as hd
from .curvature import flag_curvature, spray_batch, tangential_curvature
from .errors import ConvergenceError, DegenerateError, NoComparisonTriangle
from .geodesics import (GeodesicPath, angle_via_first_variation, distance,
                        minimal_geodesic, measure_angle, terminal_velocities)
from .norm import FinslerStructure, _check_point, metric_batch, norm_batch

log = logging.getLogger(__name__)

MODEL_TOL = 1e-6
ANGLE_TOL = 1e-3


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass
class ModelSurface:
    kind: str                     # "constant" or "tabulated"
    derivs: Callable              # t -> (f, f', f'')
    kappa: Optional[float] = None
    t_max: float = np.inf
    von_mangoldt: bool = True     # G non-increasing at the sampled t
    notes: list = field(default_factory=list)

    def f(self, t):
        return self.derivs(np.asarray(t, float))[0]

    def G(self, t):
        if self.kind == "constant":
            return np.full(np.shape(t), float(self.kappa))
        f, _, f2 = self.derivs(np.asarray(t, float))
        return -f2 / f

    def critical_radius(self):
        """The radii rho in (0, t_max) with f'(rho) = 0 (sign changes on a grid)."""
        if self.kind == "constant":
            k = self.kappa
            return [np.pi / (2 * np.sqrt(k))] if k > 0 else []
        top = self.t_max if np.isfinite(self.t_max) else 50.0
        t = np.linspace(top * 1e-4, top, 4001)
        fp = self.derivs(t)[1]
        roots = []
        for i in np.flatnonzero(np.sign(fp[:-1]) * np.sign(fp[1:]) < 0):
            roots.append(brentq(lambda s: float(self.derivs(np.asarray(s))[1]), t[i], t[i + 1]))
        return roots


def _constant_derivs(k):
    if k > 0:
        r = np.sqrt(k)
        return lambda t: (np.sin(r * t) / r, np.cos(r * t), -r * np.sin(r * t))
    if k < 0:
        r = np.sqrt(-k)
        return lambda t: (np.sinh(r * t) / r, np.cosh(r * t), r * np.sinh(r * t))
    return lambda t: (np.asarray(t, float), np.ones(np.shape(t)), np.zeros(np.shape(t)))


def make_model(desc, t_max: Optional[float] = None) -> ModelSurface:
    """Build a model from a curvature constant, a callable f (written with the
    hyper-dual helpers) or a table {"t": [...], "f": [...]}.

    The constant-curvature warping function is sin(sqrt(k) t)/sqrt(k) so that
    f'(0) = 1 (sinh for k < 0).
    """
    if isinstance(desc, dict) and "kappa" in desc:
        desc = desc["kappa"]
    if isinstance(desc, (int, float)):
        k = float(desc)
        top = np.pi / np.sqrt(k) if k > 0 else np.inf
        return ModelSurface("constant", _constant_derivs(k), k, top)
    if callable(desc):
        fn = desc
        derivs = lambda t: hd.derivatives(fn, t)
        top = 10.0 if t_max is None else float(t_max)
    elif isinstance(desc, dict) and "t" in desc and "f" in desc:
        t = np.asarray(desc["t"], float)
        fv = np.asarray(desc["f"], float)
        if t[0] != 0:
            raise ValueError("table must start at t = 0")
        cs = CubicSpline(t, fv, bc_type=((1, 1.0), "not-a-knot"))
        derivs = lambda s: (cs(s), cs(s, 1), cs(s, 2))
        top = float(t[-1])
    else:
        raise ValueError("model must be a curvature constant, a callable f or a table")
    f0, f1, _ = derivs(np.array([0.0]))
    if abs(f0[0]) > 1e-8:
        raise ValueError(f"warping function needs f(0) = 0 (got {f0[0]:.3g})")
    if abs(f1[0] - 1) > 1e-6:
        raise ValueError(f"warping function needs f'(0) = 1 (got {f1[0]:.6g})")
    ts = np.linspace(top * 1e-3, top, 400)
    fv, _, f2 = derivs(ts)
    if np.any(fv <= 0):
        raise ValueError("warping function must be positive on (0, t_max)")
    G = -f2 / fv
    model = ModelSurface("tabulated", derivs, None, top)
    if np.any(np.diff(G) > 1e-9 * (1 + np.abs(G[1:]))):
        model.von_mangoldt = False
        model.notes.append("G is not non-increasing on the sampled grid")
    return model


# ---------------------------------------------------------------------------
# model geometry
# ---------------------------------------------------------------------------

def _wrap(dtheta):
    d = abs(float(dtheta)) % (2 * np.pi)
    return min(d, 2 * np.pi - d)


def _constant_distance(k, t1, t2, dth):
    if k == 0:
        return float(np.sqrt(max(t1 * t1 + t2 * t2 - 2 * t1 * t2 * np.cos(dth), 0.0)))
    if k > 0:
        r = np.sqrt(k)
        u = np.array([np.sin(r * t1), 0.0, np.cos(r * t1)])
        v = np.array([np.sin(r * t2) * np.cos(dth), np.sin(r * t2) * np.sin(dth), np.cos(r * t2)])
        return float(np.arctan2(np.linalg.norm(np.cross(u, v)), u @ v) / r)
    r = np.sqrt(-k)
    c = np.cosh(r * t1) * np.cosh(r * t2) - np.sinh(r * t1) * np.sinh(r * t2) * np.cos(dth)
    return float(np.arccosh(max(c, 1.0)) / r)


def _model_rhs(model):
    def rhs(s, z):
        t, th, psi = z
        f, fp, _ = model.derivs(np.asarray(t))
        return [np.cos(psi), np.sin(psi) / f, -fp * np.sin(psi) / f]
    return rhs


def _limits(model):
    """Terminal events: too close to the pole, or beyond the radial range
    where f may vanish."""
    low = lambda s, z: z[0] - 1e-9
    low.terminal = True
    out = [low]
    if np.isfinite(model.t_max):
        high = lambda s, z: model.t_max - z[0]
        high.terminal = True
        out.append(high)
    return tuple(out)


def _shoot_model(model, t1, psi0, dth, s_max):
    """Integrate from (t1, 0) at angle psi0 until theta = dth; returns (t, s, psi) or None."""
    ev = lambda s, z: z[1] - dth
    ev.terminal = True
    ev.direction = 1
    sol = solve_ivp(_model_rhs(model), (0.0, s_max), [t1, 0.0, psi0], method="DOP853",
                    rtol=1e-12, atol=1e-13, events=(ev,) + _limits(model))
    if len(sol.t_events[0]):
        z = sol.y_events[0][0]
        return float(z[0]), float(sol.t_events[0][0]), float(z[2])
    return None


def _model_geodesic(model, t1, t2, dth):
    """Minimal model geodesic from (t1, 0) to (t2, dth), 0 < dth <= pi.

    Returns (length, psi at start, psi at end). Shooting is over the initial
    angle psi0; a geodesic that never reaches theta = dth counts as overshooting.
    """
    s_max = 1.05 * (t1 + t2)
    miss = 10.0 * s_max

    def gap(psi0):
        r = _shoot_model(model, t1, psi0, dth, s_max)
        return (miss if r is None else r[0]) - t2

    eps = 1e-9
    grid = np.linspace(eps, np.pi - eps, 49)
    vals = np.array([gap(x) for x in grid])
    cands = []
    for i in np.flatnonzero((vals[:-1] > 0) & (vals[1:] <= 0)):
        psi0 = brentq(gap, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15)
        r = _shoot_model(model, t1, psi0, dth, s_max)
        if r is not None and abs(r[0] - t2) <= 1e-8 * max(1.0, t2):
            cands.append((r[1], psi0, r[2]))
    if abs(dth - np.pi) < 1e-12:
        # the radial path through the pole
        cands.append((t1 + t2, np.pi, 0.0))
    if not cands:
        raise ConvergenceError("model geodesic shooting failed")
    return min(cands)


def model_distance(model: ModelSurface, P, Q) -> float:
    """Distance between (t1, theta1) and (t2, theta2) on the model surface."""
    t1, th1 = map(float, P)
    t2, th2 = map(float, Q)
    if t1 < 0 or t2 < 0:
        raise ValueError("radii must be >= 0")
    dth = _wrap(th2 - th1)
    if model.kind == "constant":
        return _constant_distance(model.kappa, t1, t2, dth)
    if dth < 1e-14 or min(t1, t2) == 0:
        return abs(t1 - t2)
    return min(_model_geodesic(model, t1, t2, dth)[0], t1 + t2)


@dataclass
class ComparisonTriangle:
    pole_angle: float
    side_lengths: tuple          # (d(p,a), d(p,b), L_ab)
    base_angles: tuple           # (angle at a~, angle at b~)
    vertices: tuple              # ((d_pa, 0), (d_pb, pole_angle)) in (t, theta)

    def to_json(self) -> dict:
        return {"pole_angle": self.pole_angle, "side_lengths": list(self.side_lengths),
                "base_angles": list(self.base_angles),
                "vertices": [list(v) for v in self.vertices]}


def _constant_base_angles(k, a, b, c):
    """Angles at the ends of side c opposite b (first) and a (second) in a
    constant-curvature triangle with sides a = |oA|, b = |oB|, c = |AB|."""
    def one(x, y, opp):
        if k == 0:
            cos = (x * x + c * c - opp * opp) / (2 * x * c)
        elif k > 0:
            r = np.sqrt(k)
            cos = (np.cos(r * opp) - np.cos(r * x) * np.cos(r * c)) / (np.sin(r * x) * np.sin(r * c))
        else:
            r = np.sqrt(-k)
            cos = (np.cosh(r * x) * np.cosh(r * c) - np.cosh(r * opp)) / (np.sinh(r * x) * np.sinh(r * c))
        return float(np.arccos(np.clip(cos, -1.0, 1.0)))
    return one(a, b, b), one(b, a, a)


def _fixed_length_shot(model, t1, psi0, L):
    """(t, theta, psi) after arclength L from (t1, 0) at angle psi0; a geodesic
    leaving the radial range stops at its boundary."""
    sol = solve_ivp(_model_rhs(model), (0.0, L), [t1, 0.0, psi0], method="DOP853",
                    rtol=1e-12, atol=1e-13, events=_limits(model))
    return sol.y[:, -1]


def _tabulated_triangle(model, d_pa, d_pb, L):
    """Shoot from a~ over the initial angle so that the unit-speed geodesic of
    length L ends at radius d_pb; keep the solution that is minimal."""
    gap = lambda psi0: _fixed_length_shot(model, d_pa, psi0, L)[0] - d_pb
    eps = 1e-7
    grid = np.linspace(eps, np.pi - eps, 33)
    vals = np.array([gap(x) for x in grid])
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0):
        psi0 = brentq(gap, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15)
        t, theta, psi1 = _fixed_length_shot(model, d_pa, psi0, L)
        if not 0 <= theta <= np.pi + 1e-12:
            continue
        theta = min(theta, np.pi)
        if abs(model_distance(model, (d_pa, 0.0), (d_pb, theta)) - L) <= MODEL_TOL * max(1.0, L):
            return theta, (float(np.pi - psi0), float(psi1))
    raise NoComparisonTriangle(
        f"sides ({d_pa:.6g}, {d_pb:.6g}, {L:.6g}) admit no comparison triangle")


def comparison_triangle(model: ModelSurface, d_pa: float, d_pb: float, L_ab: float) -> ComparisonTriangle:
    """Place a~ = (d_pa, 0) and find the pole angle theta in [0, pi] with
    model_distance(a~, (d_pb, theta)) = L_ab.

    Constant curvature: bisection on theta (the model distance is monotone in
    theta at fixed radii; a sampled guard checks this) with closed-form base
    angles. Tabulated models: shooting over the initial angle at a~, base
    angles from the geodesic's tangents.
    """
    if min(d_pa, d_pb, L_ab) <= 0:
        raise DegenerateError("side lengths must be positive")
    if max(d_pa, d_pb) > model.t_max:
        raise NoComparisonTriangle("side longer than the model's radial extent")
    tol = 1e-12 * max(1.0, L_ab)
    if abs(d_pa - d_pb) > L_ab + tol or L_ab > d_pa + d_pb + tol:
        raise NoComparisonTriangle(
            f"sides ({d_pa:.6g}, {d_pb:.6g}, {L_ab:.6g}) violate the triangle inequality")
    if model.kind != "constant":
        theta, angles = _tabulated_triangle(model, d_pa, d_pb, L_ab)
        return ComparisonTriangle(float(theta), (d_pa, d_pb, L_ab), angles,
                                  ((d_pa, 0.0), (d_pb, float(theta))))
    A = (d_pa, 0.0)
    h = lambda th: model_distance(model, A, (d_pb, th)) - L_ab
    lo, hi = h(0.0), h(np.pi)
    if lo > tol or hi < -tol:
        raise NoComparisonTriangle(
            f"sides ({d_pa:.6g}, {d_pb:.6g}, {L_ab:.6g}) admit no comparison triangle")
    th = np.linspace(0, np.pi, 9)
    vals = np.array([h(x) for x in th])
    if np.any(np.diff(vals) < -1e-9 * max(1.0, L_ab)):
        raise ConvergenceError("model distance is not monotone in the pole angle")
    if abs(lo) <= tol:
        theta = 0.0
    elif abs(hi) <= tol:
        theta = np.pi
    else:
        theta = brentq(h, 0.0, np.pi, xtol=1e-15, rtol=1e-15)
    angles = _constant_base_angles(model.kappa, d_pa, d_pb, L_ab)
    return ComparisonTriangle(float(theta), (d_pa, d_pb, L_ab), angles,
                              ((d_pa, 0.0), (d_pb, float(theta))))


# ---------------------------------------------------------------------------
# Finsler-side triangles
# ---------------------------------------------------------------------------

@dataclass
class ForwardTriangle:
    p: np.ndarray
    a: np.ndarray
    b: np.ndarray
    side_pa: GeodesicPath
    side_pb: GeodesicPath
    side_ab: GeodesicPath
    lengths: tuple                # (d(p,a), d(p,b), d(a,b))


def forward_triangle(S: FinslerStructure, p, a, b, method: str = "auto") -> ForwardTriangle:
    """Minimal geodesics p->a, p->b, a->b (unit speed)."""
    p, a, b = (_check_point(S, z) for z in (p, a, b))
    sides = [minimal_geodesic(S, u, v, method) for u, v in ((p, a), (p, b), (a, b))]
    return ForwardTriangle(p, a, b, *sides, tuple(s.t_end for s in sides))


def radial_bound_check(S: FinslerStructure, p, model: ModelSurface, samples: int = 50,
                       seed: int = 0, tol: float = 1e-4, points=None, method: str = "auto") -> dict:
    """K(x; pole, w) - G(d(x, p)) over sampled flags whose pole is the terminal
    velocity at x of a minimal geodesic from p."""
    rng = np.random.default_rng(seed)
    p = _check_point(S, p)
    X = S.sample_points(rng, samples) if points is None else np.asarray(points, float)
    margins = []
    for x in X:
        if np.linalg.norm(x - p) < 1e-3 * S.scale:
            continue
        tv = terminal_velocities(S, p, x, method=method)
        pole = tv.vectors[0]
        w = rng.standard_normal(S.dim)
        w -= (w @ pole) / (pole @ pole) * pole
        if np.linalg.norm(w) < 1e-9:
            continue
        K = flag_curvature(S, x, pole, w)
        r = distance(S, x, p, method)
        margins.append(K - float(model.G(np.array(r))))
    margins = np.array(margins)
    worst = float(margins.min()) if len(margins) else np.nan
    return {"worst_margin": worst, "mean_margin": float(margins.mean()) if len(margins) else np.nan,
            "flags": int(len(margins)), "passed": bool(len(margins) and worst >= -tol)}


# ---------------------------------------------------------------------------
# theorem conditions
# ---------------------------------------------------------------------------

def condition_flags(S: FinslerStructure, tri: ForwardTriangle, model: ModelSurface,
                    samples: int = 3, vectors: int = 4, seed: int = 0, tol: float = 1e-6,
                    method: str = "auto") -> dict:
    """Diagnostics (i)-(iv) for the side c = a->b of a forward triangle."""
    rng = np.random.default_rng(seed)
    c = tri.side_ab
    ss = np.linspace(0, c.t_end, samples + 2)[1:-1]
    conv, tang, rev = np.inf, 0.0, 0.0
    for s in ss:
        z, zd = c.at(s)
        # a point of N(c): jitter off the side
        z2 = z + 1e-2 * S.scale * rng.standard_normal(S.dim) * 0.1
        for zz in (z, z2):
            if S.margin(zz) <= 0:
                continue
            try:
                tv = terminal_velocities(S, tri.p, zz, method=method)
            except Exception as exc:    # terminal set unavailable at this point
                log.debug("terminal set failed at %s: %s", zz, exc)
                continue
            for v in tv.vectors:
                W = rng.standard_normal((vectors, S.dim))
                g = metric_batch(S, zz, v)
                F = norm_batch(S, zz, W)
                conv = min(conv, float(np.min(np.einsum("ki,ij,kj->k", W, g, W) - F ** 2)))
                for w in W:
                    tang = max(tang, abs(tangential_curvature(S, zz, v, w)))
        Gp = spray_batch(S, z, zd)
        Gm = spray_batch(S, z, -zd)
        rev = max(rev, float(np.max(np.abs(Gp - Gm))))
    rho = model.critical_radius()
    if model.kind == "constant" and model.kappa == 0:
        cond_i = {"status": "not applicable: f' = 1 identically"}
    elif len(rho) == 0:
        cond_i = {"status": "not applicable: f' never vanishes"}
    elif len(rho) > 1:
        cond_i = {"status": f"not applicable: f' vanishes at {len(rho)} radii", "rho": rho}
    else:
        dmin = min(distance(S, tri.p, c.at(s)[0], method) for s in np.linspace(0, c.t_end, 17))
        cond_i = {"status": "holds" if dmin > rho[0] else "fails", "rho": rho[0],
                  "min_distance": dmin}
    return {"i": cond_i,
            "ii": {"min_gap": conv, "holds": bool(conv >= -tol)},
            "iii": {"max_abs_T": tang, "holds": bool(tang <= tol)},
            "iv": {"max_residual": rev, "holds": bool(rev <= tol)}}


# ---------------------------------------------------------------------------
# comparison checks
# ---------------------------------------------------------------------------

def toponogov_check(S: FinslerStructure, tri: ForwardTriangle, model: ModelSurface,
                    conditions: bool = False, tol: float = ANGLE_TOL, method: str = "auto") -> dict:
    """Forward angle at a and backward angle at b against the comparison triangle."""
    d_pa, d_pb, L = tri.lengths
    comp = comparison_triangle(model, d_pa, d_pb, L)
    ang_a = measure_angle(S, tri.p, tri.side_ab, 0.0, "forward", method=method)
    ang_b = measure_angle(S, tri.p, tri.side_ab, tri.side_ab.t_end, "backward", method=method)
    ta, tb = comp.base_angles
    out = {"forward_angle_a": ang_a, "backward_angle_b": ang_b,
           "model_angle_a": ta, "model_angle_b": tb,
           "margin_a": ang_a - ta, "margin_b": ang_b - tb,
           "comparison": comp.to_json(),
           "passed": bool(ang_a >= ta - tol and ang_b >= tb - tol)}
    if conditions:
        out["conditions"] = condition_flags(S, tri, model, method=method)
    return out


def angle_monotonicity_check(S: FinslerStructure, p, sigma, t_grid: Sequence[float],
                             model: ModelSurface, tol: float = ANGLE_TOL,
                             method: str = "auto") -> dict:
    """Comparison angle at a~ for the triangles (d(p, a), d(p, sigma(t)), length of
    sigma on [0, t]); must be non-increasing in t."""
    p = _check_point(S, p)
    a = sigma.at(0.0)[0]
    d_pa = distance(S, p, a, method)
    angles, ts, reason = [], [], None
    for t in sorted(t_grid):
        b = sigma.at(t)[0]
        L = sigma_length(S, sigma, t)
        try:
            comp = comparison_triangle(model, d_pa, distance(S, p, b, method), L)
        except NoComparisonTriangle as exc:
            reason = str(exc)
            break
        ts.append(float(t))
        angles.append(comp.base_angles[0])
    steps = np.diff(angles)
    worst = float(steps.max()) if len(steps) else 0.0
    return {"t": ts, "angles": angles, "max_increase": worst,
            "truncated": reason, "passed": bool(worst <= tol)}


def sigma_length(S, sigma, t):
    """F-length of sigma on [0, t]."""
    if isinstance(sigma, PiecewisePath):
        return sigma.length_to(S, t)
    return float(sigma.speed0 * t) if sigma.speed0 else float(
        norm_batch(S, *sigma.at(0.0)) * t)


class PiecewisePath:
    """Concatenation of geodesic segments, parametrised by total time."""

    def __init__(self, segments: Sequence[GeodesicPath]):
        self.segments = list(segments)
        self.breaks = np.concatenate([[0.0], np.cumsum([s.t_end for s in self.segments])])

    @property
    def t_end(self) -> float:
        return float(self.breaks[-1])

    def at(self, t):
        t = float(np.clip(t, 0.0, self.t_end))
        i = min(int(np.searchsorted(self.breaks, t, side="right")) - 1, len(self.segments) - 1)
        return self.segments[i].at(t - self.breaks[i])

    def length_to(self, S, t):
        total = 0.0
        for i, seg in enumerate(self.segments):
            if t <= self.breaks[i]:
                break
            total += seg.speed0 * (min(t, self.breaks[i + 1]) - self.breaks[i])
        return float(total)


def piecewise_path(S: FinslerStructure, x0, velocities, durations) -> PiecewisePath:
    from .geodesics import integrate_geodesic
    segs = []
    x = np.asarray(x0, float)
    for v, T in zip(velocities, durations):
        seg = integrate_geodesic(S, x, v, T)
        segs.append(seg)
        x = seg.at(T)[0]
    return PiecewisePath(segs)


def double_triangle_check(model: ModelSurface, tri1, tri2, tol: float = MODEL_TOL) -> dict:
    """tri1 = (d(p,x), d(p,y), d(x,y)), tri2 = (d(p,y), d(p,z), d(y,z)) sharing p~y~.

    Checks angle x~ >= angle a~ and angle z~ >= angle b~ for the summed triangle
    (d(p,x), d(p,z), d(x,y) + d(y,z))."""
    t1 = comparison_triangle(model, *tri1)
    t2 = comparison_triangle(model, *tri2)
    if abs(tri1[1] - tri2[0]) > 1e-9 * max(1.0, tri1[1]):
        raise ValueError("the triangles must share the side p~y~")
    y_sum = t1.base_angles[1] + t2.base_angles[0]
    if y_sum > np.pi + tol:
        return {"admissible": False, "angle_sum_at_y": y_sum, "passed": False,
                "reason": "angle condition at y~ fails"}
    summed = comparison_triangle(model, tri1[0], tri2[1], tri1[2] + tri2[2])
    ax, az = t1.base_angles[0], t2.base_angles[1]
    aa, ab = summed.base_angles
    return {"admissible": True, "angle_sum_at_y": y_sum,
            "angle_x": ax, "angle_z": az, "angle_a": aa, "angle_b": ab,
            "pole_angles": [t1.pole_angle, t2.pole_angle, summed.pole_angle],
            "passed": bool(ax >= aa - tol and az >= ab - tol)}


def ray_perpendicularity_probe(S: FinslerStructure, sigma: GeodesicPath, ray_direction,
                               t_schedule: Sequence[float], tol: float = 0.05,
                               method: str = "auto") -> dict:
    """Forward angle at a = sigma(0) between gamma(t) and sigma, gamma being the
    geodesic from a with initial direction ``ray_direction``."""
    from .geodesics import exp_map
    a, _ = sigma.at(0.0)
    y = np.asarray(ray_direction, float)
    y = y / float(norm_batch(S, a, y))
    limit, firstvar = [], []
    for t in t_schedule:
        q = a + t * y if S.x_independent else exp_map(S, a, y, t)
        limit.append(measure_angle(S, q, sigma, 0.0, "forward", method=method))
        firstvar.append(angle_via_first_variation(S, q, sigma, 0.0, "forward", method=method))
    final = limit[-1]
    return {"t": [float(t) for t in t_schedule], "angles": limit, "first_variation": firstvar,
            "final_offset": float(final - np.pi / 2),
            "passed": bool(abs(final - np.pi / 2) <= tol)}


def h_map(S: FinslerStructure, p, sigma_dot, directions) -> np.ndarray:
    """h(v) = g_v(sigma'(0), v) on F-unit directions v."""
    V = np.asarray(directions, float)
    g = metric_batch(S, p, V)
    return np.einsum("kij,i,kj->k", g, np.asarray(sigma_dot, float), V)


def h_map_check(S: FinslerStructure, p, sigma_dot, rays, bound: float = 0.02) -> dict:
    """Every finite-horizon ray direction should satisfy |h(v)| <= bound."""
    vals = h_map(S, p, sigma_dot, rays.rays) if len(rays.rays) else np.zeros(0)
    worst = float(np.max(np.abs(vals))) if len(vals) else 0.0
    return {"rays": int(len(vals)), "max_abs_h": worst, "ray_fraction": rays.fraction,
            "passed": bool(worst <= bound)}

"""Geodesic integration, forward distance, rays and Finsler angles.

Geodesics solve x'' = -2 G(x, x'). Many initial conditions are integrated as
one stacked system (scipy's DOP853) so that shooting and ray scans cost
about as much as a single trajectory.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .curvature import spray_batch
from .errors import AngleMeasurementError, ConvergenceError, DegenerateError
from .norm import (FinslerStructure, _check_point, _indicatrix_directions,
                   metric_batch, norm_batch)

log = logging.getLogger(__name__)

RTOL = 1e-11
ATOL = 1e-12
SPEED_TOL = 1e-6
FREEZE_MARGIN = 1e-6
SCAN_FREEZE = 1e-2


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def _rhs(S, B, freeze=FREEZE_MARGIN, soft=False):
    n = S.dim

    def f(t, s):
        s = s.reshape(B, 2 * n)
        x, y = s[:, :n], s[:, n:]
        out = np.zeros_like(s)
        m = S.margin(x)
        live = (m > freeze) & np.all(np.isfinite(s), axis=1) & np.any(y != 0, axis=1)
        if np.any(live):
            out[live, :n] = y[live]
            out[live, n:] = -2.0 * spray_batch(S, x[live], y[live])
            if soft:
                # smooth time change that brings the trace to rest between
                # 2*freeze and freeze; the traced curve is unchanged
                r = np.clip(m[live] / freeze - 1.0, 0.0, 1.0)
                out[live] *= (r ** 3 * (10 - 15 * r + 6 * r * r))[:, None]
        return out.ravel()
    return f


def integrate_batch(S: FinslerStructure, X0, Y0, t_end: float, rtol=RTOL, atol=ATOL,
                    dense: bool = True, freeze: float = FREEZE_MARGIN, soft: bool = False):
    """Integrate B geodesics jointly; returns the scipy OdeResult.

    With soft=True the flow is slowed smoothly to rest near the boundary, so
    the parameter is only the arc parameter away from it (used for scans).
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    Y0 = np.atleast_2d(np.asarray(Y0, dtype=float))
    X0, Y0 = np.broadcast_arrays(X0, Y0)
    B = len(X0)
    s0 = np.concatenate([X0, Y0], axis=1).ravel()
    if t_end == 0:
        return None
    return solve_ivp(_rhs(S, B, freeze, soft), (0.0, float(t_end)), s0, method="DOP853",
                     rtol=rtol, atol=atol, dense_output=dense)


def endpoints(S, X0, Y0, t_end=1.0, rtol=RTOL, atol=ATOL, freeze=FREEZE_MARGIN):
    """(x(t_end), x'(t_end)) for each initial condition."""
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    Y0 = np.atleast_2d(np.asarray(Y0, dtype=float))
    X0, Y0 = np.broadcast_arrays(X0, Y0)
    if t_end == 0:
        return X0.copy(), Y0.copy()
    res = integrate_batch(S, X0, Y0, t_end, rtol, atol, dense=False, freeze=freeze)
    s = res.y[:, -1].reshape(len(X0), 2 * S.dim)
    return s[:, :S.dim], s[:, S.dim:]


@dataclass
class GeodesicPath:
    """Sampled solution of the spray equation; ``at`` evaluates the dense
    interpolant anywhere in [0, t_end]."""
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    speed_drift: float
    truncated: bool = False
    sol: object = field(default=None, repr=False)
    speed0: float = 0.0

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def at(self, t):
        t = float(np.clip(t, 0.0, self.t_end))
        if self.sol is None:
            # constant-velocity path
            return self.points[0] + t * self.velocities[0], self.velocities[0].copy()
        s = self.sol(t)
        n = self.points.shape[1]
        return s[:n], s[n:]

    def length(self, S: FinslerStructure) -> float:
        """Integrated F-length (composite Simpson over a uniform grid)."""
        ts = np.linspace(0.0, self.t_end, 201)
        xv = [self.at(t) for t in ts]
        F = norm_batch(S, np.array([a for a, _ in xv]), np.array([b for _, b in xv]))
        h = ts[1] - ts[0]
        return float(h / 3 * (F[0] + F[-1] + 4 * F[1:-1:2].sum() + 2 * F[2:-1:2].sum()))

    def reversed(self, S: FinslerStructure) -> "GeodesicPath":
        """The reverse curve c(l - s) with negated velocities (not necessarily a geodesic)."""
        T = self.t_end
        sol = self.sol
        n = self.points.shape[1]

        def rsol(t):
            s = sol(T - t) if sol is not None else np.concatenate(
                [self.points[0] + (T - t) * self.velocities[0], self.velocities[0]])
            return np.concatenate([s[:n], -s[n:]])
        times = T - self.times[::-1]
        return GeodesicPath(times, self.points[::-1].copy(), -self.velocities[::-1],
                            self.speed_drift, self.truncated, rsol, self.speed0)

    def to_csv(self, path) -> None:
        n = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)])
            for t, x, v in zip(self.times, self.points, self.velocities):
                w.writerow([repr(float(t))] + [repr(float(a)) for a in x] + [repr(float(a)) for a in v])


def integrate_geodesic(S: FinslerStructure, x0, y0, t_end: float, rtol: float = RTOL,
                       atol: float = ATOL, samples: int = 101) -> GeodesicPath:
    """Adaptive DOP853 solution of x'' = -2G(x, x'); rejects paths whose F-speed
    drifts by more than 1e-6 of the initial speed."""
    x0 = _check_point(S, x0)
    y0 = np.asarray(y0, dtype=float)
    if not np.any(y0):
        raise DegenerateError("initial velocity must be non-zero")
    speed0 = float(norm_batch(S, x0, y0))
    for attempt in range(2):
        res = integrate_batch(S, x0, y0, t_end, rtol, atol)
        if res is None:
            times = np.array([0.0])
            states = np.concatenate([x0, y0])[:, None]
        else:
            times = np.union1d(res.t, np.linspace(0.0, t_end, samples))
            states = res.sol(times)
        n = S.dim
        pts, vel = states[:n].T, states[n:].T
        live = S.margin(pts) > FREEZE_MARGIN
        truncated = not bool(np.all(live))
        F = norm_batch(S, pts[live], vel[live])
        drift = float(np.max(np.abs(F - speed0))) if len(F) else 0.0
        if drift <= SPEED_TOL * speed0:
            break
        rtol, atol = rtol * 1e-2, atol * 1e-2
    else:
        raise ConvergenceError(f"geodesic speed drift {drift:.3g} exceeds tolerance")
    path = GeodesicPath(times, pts, vel, drift, truncated,
                        None if res is None else res.sol, speed0)
    if truncated:
        log.warning("geodesic left the chart domain; path is truncated")
    return path


def exp_map(S: FinslerStructure, p, y, t: float = 1.0) -> np.ndarray:
    """exp_p(t y)."""
    p = _check_point(S, p)
    if t == 0 or not np.any(y):
        return p.copy()
    return endpoints(S, p, y, t)[0][0]


# ---------------------------------------------------------------------------
# lattice helpers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _distortion(S: FinslerStructure) -> float:
    """max F / min F over Euclidean unit vectors (x-independent norms)."""
    d = _indicatrix_directions(S.dim, 720 if S.dim == 2 else 2000)
    F = norm_batch(S, np.zeros(S.dim), d)
    return float(F.max() / F.min()) * 1.01


def lattice_reduce(S: FinslerStructure, d):
    """Subtract the nearest (in coefficient space) deck translation from d."""
    Bm = S.lattice_matrix
    if Bm.shape[1] == 0:
        return np.asarray(d, dtype=float)
    d = np.asarray(d, dtype=float)
    c = d @ np.linalg.pinv(Bm).T
    return d - np.round(c) @ Bm.T


def lattice_residual(S, d) -> np.ndarray:
    """Euclidean size of d modulo the lattice."""
    return np.linalg.norm(lattice_reduce(S, d), axis=-1)


def _deck_window(S, radius):
    Bm = S.lattice_matrix
    lens = np.linalg.norm(Bm, axis=0)
    ks = [range(-int(np.ceil(radius / L)) - 1, int(np.ceil(radius / L)) + 2) for L in lens]
    return np.array(list(product(*ks)), dtype=float) @ Bm.T


def deck_distance_batch(S: FinslerStructure, P, Q):
    """Forward distance on a flat (x-independent) structure, batched; exact min
    over deck translates. Returns (distances, minimising displacements)."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    d = Q - P
    if not S.lattice:
        return norm_batch(S, np.zeros(S.dim), d), d
    d = lattice_reduce(S, d)
    Bm = S.lattice_matrix
    # cell diameter bounds |d| after reduction; translates beyond the window
    # cannot beat the reduced displacement
    diam = np.sum(np.linalg.norm(Bm, axis=0))
    shifts = _deck_window(S, _distortion(S) * diam)
    cand = d[..., None, :] + shifts
    F = norm_batch(S, np.zeros(S.dim), cand)
    i = np.argmin(F, axis=-1)
    best = np.take_along_axis(F, i[..., None], -1)[..., 0]
    disp = np.take_along_axis(cand, i[..., None, None], -2)[..., 0, :]
    return best, disp


def _deck_brute(S, p, q):
    """Brute force over every translate with |k| <= ceil(d/L) + 2."""
    d = np.asarray(q, float) - np.asarray(p, float)
    shifts = _deck_window(S, _distortion(S) * np.linalg.norm(d) + 1e-12)
    cand = d + shifts
    F = norm_batch(S, np.zeros(S.dim), cand)
    return float(F.min()), cand, F


# ---------------------------------------------------------------------------
# shooting
# ---------------------------------------------------------------------------

@dataclass
class ShootingSolution:
    velocity: np.ndarray     # initial velocity v with exp_p(v) = target
    target: np.ndarray
    length: float
    terminal: np.ndarray     # x'(1)
    residual: float


def _targets(S, q):
    q = np.asarray(q, dtype=float)
    if not S.lattice:
        return q[None]
    return q + _deck_window(S, 0.0)


def shoot(S: FinslerStructure, p, q, starts: int = 64, tol: float = 1e-10,
          max_iter: int = 15, horizon: Optional[float] = None,
          max_candidates: int = 3) -> list:
    """Multi-start shooting for geodesics from p to q (and chart translates of q).

    Returns converged solutions sorted by length.
    """
    p = _check_point(S, p)
    n = S.dim
    targets = _targets(S, q)
    u = _indicatrix_directions(n, starts)
    u = u / norm_batch(S, p, u)[:, None]
    est = norm_batch(S, p, targets - p)
    if horizon is None:
        horizon = 3.0 * float(est.min())
    targets = targets[est <= horizon]
    # trajectories that run close to the chart boundary are frozen early; they
    # would otherwise force tiny steps on the whole batch
    res = integrate_batch(S, p, u, horizon, rtol=1e-5, atol=1e-7, freeze=SCAN_FREEZE,
                          soft=True)
    ts = np.linspace(horizon / 400, horizon, 400)
    traj = res.sol(ts).reshape(starts, 2 * n, len(ts))[:, :n, :]     # (starts, n, T)
    guesses = []
    for tgt in targets:
        err = np.linalg.norm(traj - tgt[None, :, None], axis=1)       # (starts, T)
        k = np.argmin(err, axis=1)
        e = err[np.arange(starts), k]
        # local minima over the start index (circular order in 2D)
        order = np.argsort(e)
        picked = []
        for i in order:
            if n == 2:
                if e[i] > e[(i - 1) % starts] or e[i] > e[(i + 1) % starts]:
                    continue
            picked.append(i)
            if len(picked) >= max_candidates:
                break
        for i in picked:
            guesses.append((ts[k[i]] * u[i], tgt))
    if not guesses:
        raise ConvergenceError("shooting produced no candidates")
    V = np.array([g[0] for g in guesses])
    T = np.array([g[1] for g in guesses])
    V = _newton(S, p, V, T, tol, max_iter)
    sols = []
    X1, Y1 = endpoints(S, p, V)
    for v, tgt, x1, y1 in zip(V, T, X1, Y1):
        r = float(np.linalg.norm(x1 - tgt))
        if np.isfinite(r) and r <= tol * (1 + np.linalg.norm(tgt)):
            sols.append(ShootingSolution(v, tgt, float(norm_batch(S, p, v)), y1, r))
    sols.sort(key=lambda s: s.length)
    unique = []
    for s in sols:
        if all(np.linalg.norm(s.velocity - o.velocity) > 1e-7 * (1 + np.linalg.norm(o.velocity))
               for o in unique):
            unique.append(s)
    return unique


def _newton(S, p, V, T, tol, max_iter):
    """Batched Newton iteration on exp_p(v) = target with a central-difference
    Jacobian. Candidates that stall are dropped from the batch (left as is)."""
    n = S.dim
    m = len(V)
    E = np.eye(n)
    active = np.ones(m, bool)
    history = np.full((m, max_iter), np.inf)
    for it in range(max_iter):
        if not np.any(active):
            break
        Va = V[active]
        h = 1e-6 * np.maximum(np.linalg.norm(Va, axis=1), 1e-3)
        probes = np.concatenate([Va[:, None, :],
                                 Va[:, None, :] + h[:, None, None] * E,
                                 Va[:, None, :] - h[:, None, None] * E], axis=1)
        X1, _ = endpoints(S, p, probes.reshape(-1, n), freeze=SCAN_FREEZE)
        X1 = X1.reshape(len(Va), 2 * n + 1, n)
        r = X1[:, 0] - T[active]
        J = np.swapaxes((X1[:, 1:n + 1] - X1[:, n + 1:]) / (2 * h[:, None, None]), 1, 2)
        err = np.linalg.norm(r, axis=1)
        idx = np.flatnonzero(active)
        history[idx, it] = err
        done = err <= 0.1 * tol * (1 + np.linalg.norm(T[active], axis=1))
        bad = ~np.isfinite(err) | ~np.all(np.isfinite(J), axis=(1, 2))
        if it >= 4:
            bad |= err > 0.5 * history[idx, it - 3]
        with np.errstate(all="ignore"):
            step = np.array([np.linalg.lstsq(j, rr, rcond=None)[0] if ok else np.zeros(n)
                             for j, rr, ok in zip(J, r, ~bad)])
        # damp steps that are large relative to the current velocity
        lim = 0.5 * np.maximum(np.linalg.norm(Va, axis=1), 1e-3)
        sn = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, lim / np.maximum(sn, 1e-300))[:, None]
        step[done | bad] = 0.0
        V[idx] = Va - step
        active[idx[done | bad]] = False
    return V


# ---------------------------------------------------------------------------
# distance
# ---------------------------------------------------------------------------

def _method(S, method):
    if method != "auto":
        return method
    if S.x_independent:
        return "deck"
    if S.exact_distance is not None:
        return "closed-form"
    return "shooting"


def distance(S: FinslerStructure, p, q, method: str = "auto") -> float:
    """Forward distance d(p, q) (not symmetric in general)."""
    p = _check_point(S, p)
    q = _check_point(S, q)
    m = _method(S, method)
    if np.allclose(p, q, rtol=0, atol=0):
        return 0.0
    if m == "deck":
        if not S.lattice:
            return float(norm_batch(S, np.zeros(S.dim), q - p))
        return _deck_brute(S, p, q)[0]
    if m == "closed-form":
        return float(S.exact_distance(p, q))
    sols = shoot(S, p, q)
    if not sols:
        raise ConvergenceError(f"shooting from {p} to {q} did not converge")
    return sols[0].length


def distance_batch(S: FinslerStructure, P, Q, method: str = "auto") -> np.ndarray:
    m = _method(S, method)
    if m == "deck":
        return deck_distance_batch(S, P, Q)[0]
    if m == "closed-form":
        return np.asarray(S.exact_distance(np.asarray(P, float), np.asarray(Q, float)))
    P, Q = np.broadcast_arrays(np.asarray(P, float), np.asarray(Q, float))
    flat = [distance(S, a, b, "shooting") for a, b in zip(P.reshape(-1, S.dim), Q.reshape(-1, S.dim))]
    return np.array(flat).reshape(P.shape[:-1])


def d_max(S: FinslerStructure, p, q, method: str = "auto") -> float:
    return max(distance(S, p, q, method), distance(S, q, p, method))


def minimal_geodesic(S: FinslerStructure, p, q, method: str = "auto") -> GeodesicPath:
    """A unit-speed minimal geodesic from p to (a chart translate of) q."""
    p = _check_point(S, p)
    q = np.asarray(q, dtype=float)
    m = _method(S, method)
    if m == "deck":
        d, disp = deck_distance_batch(S, p, q)
        v = disp / d
        L = float(d)
    elif m == "closed-form" and S.exact_direction is not None:
        v = np.asarray(S.exact_direction(p, q), dtype=float)
        L = float(S.exact_distance(p, q))
    else:
        sols = shoot(S, p, q)
        if not sols:
            raise ConvergenceError(f"no geodesic found from {p} to {q}")
        v = sols[0].velocity / sols[0].length
        L = sols[0].length
    return integrate_geodesic(S, p, v, L)


# ---------------------------------------------------------------------------
# terminal velocities
# ---------------------------------------------------------------------------

@dataclass
class TerminalVelocitySet:
    vectors: np.ndarray      # (k, n) unit terminal velocities at x
    source: np.ndarray       # p
    at: np.ndarray           # x
    distance: float
    tolerance: float


def _cluster(vectors, tol=1e-6):
    out = []
    for v in vectors:
        if all(np.linalg.norm(v - o) > tol for o in out):
            out.append(v)
    return np.array(out)


def terminal_velocities(S: FinslerStructure, p, x, tol: Optional[float] = None,
                        method: str = "auto") -> TerminalVelocitySet:
    """Unit velocities at x of the (near-)minimal geodesics from p to x.

    tol is the relative length slack for counting a geodesic as minimal; by
    default 1e-12 on the exact deck route and 1e-6 after shooting.
    """
    p = _check_point(S, p)
    x = _check_point(S, x)
    m = _method(S, method)
    if tol is None:
        tol = 1e-12 if m == "deck" else 1e-6
    if m == "deck":
        if not S.lattice:
            d = float(norm_batch(S, p, x - p))
            if d == 0:
                raise DegenerateError("terminal velocity set needs p != x")
            return TerminalVelocitySet(((x - p) / d)[None], p, x, d, tol)
        d, cand, F = _deck_brute(S, p, x)
        if d == 0:
            raise DegenerateError("terminal velocity set needs p != x")
        keep = F <= (1 + tol) * d
        vec = _cluster(cand[keep] / F[keep][:, None])
        return TerminalVelocitySet(vec, p, x, d, tol)
    if m == "closed-form" and S.exact_direction is not None:
        d = float(S.exact_distance(p, x))
        v = np.asarray(S.exact_direction(p, x), dtype=float)
        _, y1 = endpoints(S, p, v, d)
        y1 = y1[0] / float(norm_batch(S, x, y1[0]))
        return TerminalVelocitySet(y1[None], p, x, d, tol)
    sols = shoot(S, p, x)
    if not sols:
        raise ConvergenceError("no geodesic found for the terminal velocity set")
    d = sols[0].length
    vec = [s.terminal / float(norm_batch(S, x, s.terminal)) for s in sols
           if s.length <= (1 + tol) * d]
    return TerminalVelocitySet(_cluster(vec, 1e-5), p, x, d, tol)


# ---------------------------------------------------------------------------
# angles
# ---------------------------------------------------------------------------

def _richardson(values):
    """Extrapolate q(h) sampled at h, h/2, h/4, ... assuming q = q0 + c1 h + c2 h^2 + ..."""
    table = [np.asarray(values, dtype=float)]
    for k in range(1, len(values)):
        prev = table[-1]
        f = 2.0 ** k
        table.append((f * prev[1:] - prev[:-1]) / (f - 1))
    return table


def _newton_length(S, p, q, v0, tol=1e-10):
    """Length of the geodesic from p to q found by Newton from v0, or None."""
    V = _newton(S, p, np.array([v0], float), np.array([q], float), tol, 15)
    x1, _ = endpoints(S, p, V)
    if not np.isfinite(x1).all() or np.linalg.norm(x1[0] - q) > tol * (1 + np.linalg.norm(q)):
        return None, None
    return float(norm_batch(S, p, V[0])), V[0]


def _angle_quotients(S, p, along, s, sense, h0, method):
    hs = h0 / 2.0 ** np.arange(4)
    b, _ = along.at(s)
    sign = 1.0 if sense == "forward" else -1.0
    cs = [along.at(s + sign * h)[0] for h in hs]
    if _method(S, method) != "shooting":
        dpb = distance(S, p, b, method)
        dpc = [distance(S, p, c, method) for c in cs]
        dbc = [d_max(S, b, c, method) for c in cs]
    else:
        # the quotient points sit within h0 of b: continue the minimiser to b,
        # and start the short sides from the chord
        sols = shoot(S, p, b)
        if not sols:
            raise ConvergenceError(f"shooting from {p} to {b} did not converge")
        dpb, v = sols[0].length, sols[0].velocity
        dpc, dbc = [], []
        for c in cs:
            L, v_c = _newton_length(S, p, c, v)
            dpc.append(distance(S, p, c, method) if L is None else L)
            if v_c is not None:
                v = v_c
            side = []
            for a, e in ((b, c), (c, b)):
                L, _ = _newton_length(S, a, e, e - a)
                side.append(distance(S, a, e, method) if L is None else L)
            dbc.append(max(side))
    dpc, dbc = np.array(dpc), np.array(dbc)
    return (dpb - dpc) / dbc


def measure_angle(S: FinslerStructure, p, along: GeodesicPath, s: float,
                  sense: str = "forward", h0: Optional[float] = None,
                  method: str = "auto", settle_tol: float = 1e-4) -> float:
    """Forward (or backward) angle at b = along(s) from the one-sided limit of
    the distance difference quotient, Richardson-extrapolated over four h."""
    if sense not in ("forward", "backward"):
        raise ValueError("sense must be 'forward' or 'backward'")
    if h0 is None:
        h0 = 1e-2 * min(along.t_end, S.scale)
    if sense == "forward" and s + h0 > along.t_end + 1e-12:
        raise ValueError("path too short beyond b for a forward angle")
    if sense == "backward" and s - h0 < -1e-12:
        raise ValueError("path too short before b for a backward angle")
    q = _angle_quotients(S, np.asarray(p, float), along, s, sense, h0, method)
    table = _richardson(q)
    cos = float(table[-1][0])
    # the last two extrapolation levels must agree, and the raw quotients
    # must contract; otherwise the limit does not exist at sample resolution
    spread = abs(table[-1][0] - table[-2][-1])
    raw = np.abs(np.diff(q))
    if spread > settle_tol or (raw[0] > 1e-9 and raw[-1] > 0.75 * raw[0]):
        raise AngleMeasurementError(
            f"difference quotients did not settle (spread {spread:.3g}, quotients {q})")
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def first_variation_angle(S: FinslerStructure, p, x, y_var, tv: Optional[TerminalVelocitySet] = None,
                          method: str = "auto") -> float:
    """min over omega in TV_p(x) of g_omega(y_var, omega), with y_var scaled to F = 1."""
    x = np.asarray(x, dtype=float)
    y_var = np.asarray(y_var, dtype=float)
    y_var = y_var / float(norm_batch(S, x, y_var))
    if tv is None:
        tv = terminal_velocities(S, p, x, method=method)
    if len(tv.vectors) == 0:
        raise DegenerateError("empty terminal velocity set")
    g = metric_batch(S, x, tv.vectors)
    vals = np.einsum("kij,i,kj->k", g, y_var, tv.vectors)
    return float(vals.min())


def angle_via_first_variation(S: FinslerStructure, p, along: GeodesicPath, s: float,
                              sense: str = "forward", method: str = "auto") -> float:
    """The forward/backward angle predicted by the first variation formula.

    Converts the limit min g_omega(y_var, omega) (normalised by d(x, x_i)) to
    the angle's normalisation by d_max, which differs on non-reversible norms.
    """
    b, v = along.at(s)
    Fv = float(norm_batch(S, b, v))
    Fm = float(norm_batch(S, b, -v))
    big = max(Fv, Fm)
    if sense == "forward":
        fv = first_variation_angle(S, p, b, v, method=method)
        cos = -fv * Fv / big
    else:
        fv = first_variation_angle(S, p, b, -v, method=method)
        cos = -fv * Fm / big
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# rays and closed geodesics
# ---------------------------------------------------------------------------

@dataclass
class RaySet:
    directions: np.ndarray   # (m, n) F-unit initial directions scanned
    accepted: np.ndarray     # (m,) bool
    horizon: float
    tol: float

    @property
    def fraction(self) -> float:
        return float(np.mean(self.accepted))

    @property
    def rays(self) -> np.ndarray:
        return self.directions[self.accepted]

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.directions[:, 1], self.directions[:, 0])


def find_rays(S: FinslerStructure, p, horizon: float, tol: float = 1e-3,
              resolution: int = 720, t_samples: int = 400, method: str = "auto") -> RaySet:
    """Finite-horizon ray proxy: directions y with d(p, exp_p(t y)) >= t (1 - tol)
    for all sampled t <= horizon."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    p = _check_point(S, p)
    d = _indicatrix_directions(S.dim, resolution)
    u = d / norm_batch(S, p, d)[:, None]
    ts = np.linspace(horizon / t_samples, horizon, t_samples)
    if S.x_independent:
        pts = p + ts[:, None, None] * u[None]
        live = np.ones((len(ts), len(u)), bool)
    else:
        res = integrate_batch(S, p, u, horizon)
        st = res.sol(ts).reshape(len(u), 2 * S.dim, len(ts))
        pts = np.moveaxis(st[:, :S.dim, :], 2, 0)     # (T, m, n)
        live = S.margin(pts) > FREEZE_MARGIN
    dist = distance_batch(S, np.broadcast_to(p, pts.shape), pts, method)
    ok = (dist >= ts[:, None] * (1 - tol)) & live
    return RaySet(u, np.all(ok, axis=0), float(horizon), float(tol))


def closed_geodesic_check(S: FinslerStructure, path: GeodesicPath, tol: float = 1e-5) -> bool:
    """Endpoint returns to the start and the velocity closes up, modulo deck translations."""
    x0, v0 = path.at(0.0)
    x1, v1 = path.at(path.t_end)
    if path.truncated:
        return False
    scale = max(1.0, float(np.linalg.norm(v0)))
    return bool(lattice_residual(S, x1 - x0) <= tol * max(1.0, S.scale)
                and np.linalg.norm(v1 - v0) <= tol * scale)


def find_closed_geodesics(S: FinslerStructure, p, horizon: float, tol: float = 1e-5,
                          method: str = "auto") -> list:
    """Closed geodesics through p of length <= horizon, searched as geodesic
    loops from p to its deck translates p + k followed by a smoothness check."""
    p = _check_point(S, p)
    if not S.lattice:
        return []
    found = []
    for k in _deck_window(S, 0.0):
        if not np.any(k):
            continue
        q = p + k
        if S.x_independent:
            v = k / float(norm_batch(S, p, k))
            L = float(norm_batch(S, p, k))
        else:
            try:
                sols = [s for s in shoot(S, p, p) if np.allclose(s.target, q)]
            except ConvergenceError:
                sols = []
            if not sols and S.exact_direction is not None:
                continue
            if not sols:
                continue
            v = sols[0].velocity / sols[0].length
            L = sols[0].length
        if L > horizon:
            continue
        path = integrate_geodesic(S, p, v, L)
        if closed_geodesic_check(S, path, tol):
            found.append(path)
    return found


def terminal_velocity_limit_probe(S: FinslerStructure, p, y, t_schedule: Sequence[float],
                                  method: str = "auto") -> dict:
    """Hausdorff distance between TV_{gamma(t)}(p) and {-gamma'(0)} along the
    geodesic gamma(t) = exp_p(t y)."""
    p = _check_point(S, p)
    y = np.asarray(y, dtype=float)
    y = y / float(norm_batch(S, p, y))
    target = -y
    out = []
    for t in t_schedule:
        if S.x_independent:
            x = p + t * y
        else:
            x = exp_map(S, p, y, t)
        tv = terminal_velocities(S, x, p, method=method)
        out.append(float(np.max(np.linalg.norm(tv.vectors - target, axis=1))))
    hd = np.array(out)
    return {"t": [float(t) for t in t_schedule], "hausdorff": hd.tolist(),
            "target_norm": float(norm_batch(S, p, target)),
            "non_increasing": bool(hd[-1] <= hd[0] + 1e-9)}

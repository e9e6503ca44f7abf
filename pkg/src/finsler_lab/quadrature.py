"""Fixed quadrature rules on the Euclidean unit sphere S^{n-1}.

n=2: periodic trapezoid rule (spectrally accurate for smooth integrands).
n=3: Lebedev rule, order 41 (590 nodes), from scipy.
n>=4: scrambled Sobol points pushed to the sphere; the standard error is
estimated from independent scrambles.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gamma, pi

import numpy as np
from scipy.integrate import lebedev_rule
from scipy.stats import norm as _normal
from scipy.stats import qmc

CIRCLE_NODES = 512
LEBEDEV_ORDER = 41
QMC_NODES = 4096
QMC_REPLICATES = 8


@dataclass(frozen=True)
class SphereRule:
    nodes: np.ndarray      # (N, n) unit vectors
    weights: np.ndarray    # (N,), sums to the sphere area
    replicates: int = 1    # >1: nodes are `replicates` equal independent blocks


def unit_ball_volume(n: int) -> float:
    return pi ** (n / 2) / gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    """(n-1)-measure of the unit sphere in R^n."""
    return n * unit_ball_volume(n)


def circle_rule(count: int = CIRCLE_NODES, phase: float = 0.0) -> SphereRule:
    th = phase + 2 * pi * np.arange(count) / count
    nodes = np.stack([np.cos(th), np.sin(th)], axis=-1)
    return SphereRule(nodes, np.full(count, 2 * pi / count))


@lru_cache(maxsize=None)
def sphere_rule(n: int) -> SphereRule:
    if n == 2:
        return circle_rule()
    if n == 3:
        x, w = lebedev_rule(LEBEDEV_ORDER)
        return SphereRule(np.ascontiguousarray(x.T), w)
    blocks = []
    for rep in range(QMC_REPLICATES):
        u = qmc.Sobol(d=n, scramble=True, seed=rep).random(QMC_NODES)
        z = _normal.ppf(np.clip(u, 1e-12, 1 - 1e-12))
        blocks.append(z / np.linalg.norm(z, axis=1, keepdims=True))
    nodes = np.concatenate(blocks)
    weights = np.full(len(nodes), sphere_area(n) / len(nodes))
    return SphereRule(nodes, weights, QMC_REPLICATES)


def integrate(rule: SphereRule, values: np.ndarray):
    """Integrate node values (last axis = nodes). Returns (integral, standard error)."""
    total = values @ rule.weights
    if rule.replicates == 1:
        return total, np.zeros_like(total)
    blocks = np.split(values, rule.replicates, axis=-1)
    w = rule.weights[: len(rule.weights) // rule.replicates] * rule.replicates
    est = np.stack([b @ w for b in blocks], axis=-1)
    se = est.std(axis=-1, ddof=1) / np.sqrt(rule.replicates)
    return total, se

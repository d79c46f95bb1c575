"""Achievable end-to-end rate regions of TDMH, MLNC and PLNC over one relay.

Regions are convex polygons in the ``(r_ab, r_ba)`` plane stored as
counter-clockwise vertex lists starting at the origin.  Closed-form
constructions live next to :func:`lp_oracle_vertices`, an independent
route that enumerates basic feasible solutions of the raw time-allocation
constraints and projects them onto the rate plane.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .channel import CapacitySet

__all__ = [
    "DegenerateCapacityError",
    "SigmaSet",
    "RatePair",
    "RateRegion",
    "TimeAllocation",
    "PROTOCOLS",
    "sigma_set",
    "region_tdmh",
    "region_mlnc",
    "region_plnc",
    "region_for",
    "hull_tdmh_mlnc",
    "convex_hull",
    "contains",
    "boundary_on_ray",
    "hausdorff",
    "lp_oracle_vertices",
]

PROTOCOLS = ("tdmh", "mlnc", "plnc", "hull")

# normalised (rate / region scale) tolerance for containment and vertex equality
TOL = 1e-9


class DegenerateCapacityError(ValueError):
    """A link capacity is zero, so the two-way exchange is impossible."""


class RatePair(NamedTuple):
    r_ab: float
    r_ba: float


def _harmonic(*terms: float) -> float:
    return 1.0 / sum(terms)


@dataclass(frozen=True)
class SigmaSet:
    """Harmonic-mean rate constants derived from a :class:`CapacitySet`."""

    sigma_ab: float
    sigma_ba: float
    sigma_aa: float
    sigma_bb: float
    sigma_abb: float
    sigma_aba: float
    sigma_bab: float
    sigma_min: float


def sigma_set(caps: CapacitySet) -> SigmaSet:
    c_ad, c_db, c_bd, c_da = caps.as_tuple()
    if min(c_ad, c_db, c_bd, c_da) <= 0.0:
        raise DegenerateCapacityError(f"all capacities must be positive: {caps}")
    s_ab = _harmonic(1 / c_ad, 1 / c_db)
    s_ba = _harmonic(1 / c_bd, 1 / c_da)
    return SigmaSet(
        sigma_ab=s_ab,
        sigma_ba=s_ba,
        sigma_aa=_harmonic(1 / c_ad, 1 / c_da),
        sigma_bb=_harmonic(1 / c_bd, 1 / c_db),
        sigma_abb=_harmonic(1 / s_ab, 1 / c_bd),
        sigma_aba=_harmonic(1 / s_ab, c_da / (c_bd * c_db)),
        sigma_bab=_harmonic(1 / s_ba, c_db / (c_ad * c_da)),
        sigma_min=_harmonic(1 / c_ad, 1 / c_bd, 1 / caps.c_min),
    )


@dataclass(frozen=True)
class TimeAllocation:
    lambdas: tuple[float, ...]

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambdas)
        if len(lam) not in (3, 4):
            raise ValueError("TDMH uses 4 slots, MLNC/PLNC use 3")
        if any(not 0.0 <= x <= 1.0 for x in lam):
            raise ValueError(f"time fractions must lie in [0, 1]: {lam}")
        if abs(sum(lam) - 1.0) > 1e-12:
            raise ValueError(f"time fractions must sum to 1: {lam}")
        object.__setattr__(self, "lambdas", lam)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class RateRegion:
    """Convex polygon of achievable rate pairs, counter-clockwise from the origin."""

    vertices: tuple[RatePair, ...]

    def __post_init__(self):
        verts = tuple(RatePair(float(v[0]), float(v[1])) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise ValueError("a rate region needs at least three vertices")
        scale = self.scale
        eps = TOL * scale
        if verts[0] != RatePair(0.0, 0.0):
            raise ValueError("vertex list must start at the origin")
        if any(v.r_ab < -eps or v.r_ba < -eps for v in verts):
            raise ValueError("rate region must lie in the nonnegative quadrant")
        n = len(verts)
        for i in range(n):
            a, b, c = verts[i], verts[(i + 1) % n], verts[(i + 2) % n]
            if math.dist(a, b) <= 1e-12 * scale:
                raise ValueError("duplicate vertices")
            if _cross(a, b, c) <= 0.0:
                raise ValueError("vertices must form a strictly convex counter-clockwise polygon")

    @property
    def scale(self) -> float:
        return max(max(abs(v.r_ab), abs(v.r_ba)) for v in self.vertices) or 1.0

    def as_array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=float)

    def edges(self) -> Iterable[tuple[RatePair, RatePair]]:
        n = len(self.vertices)
        for i in range(n):
            yield self.vertices[i], self.vertices[(i + 1) % n]

    def max_sum(self) -> float:
        return max(v.r_ab + v.r_ba for v in self.vertices)

    def area(self) -> float:
        return 0.5 * sum(a[0] * b[1] - b[0] * a[1] for a, b in self.edges())


def _polygon(points: Sequence[tuple[float, float]]) -> RateRegion:
    return RateRegion(tuple(RatePair(*p) for p in points))


def region_tdmh(sigma: SigmaSet) -> RateRegion:
    return _polygon([(0.0, 0.0), (sigma.sigma_ab, 0.0), (0.0, sigma.sigma_ba)])


def region_mlnc(caps: CapacitySet) -> RateRegion:
    """Quadrilateral region of XOR network coding at the relay.

    The symmetric corner sits at ``sigma_min``, which coincides with
    ``sigma_abb`` whenever ``c_db <= c_da``.
    """
    s = sigma_set(caps)
    corner = (s.sigma_min, s.sigma_min)
    if caps.c_db <= caps.c_da:
        pts = [(0.0, 0.0), (s.sigma_ab, 0.0), corner, (0.0, s.sigma_bb)]
    else:
        pts = [(0.0, 0.0), (s.sigma_aa, 0.0), corner, (0.0, s.sigma_ba)]
    return _polygon(pts)


def region_plnc(caps: CapacitySet) -> RateRegion:
    s = sigma_set(caps)
    return _polygon([(0.0, 0.0), (s.sigma_ab, 0.0), (s.sigma_aba, s.sigma_bab), (0.0, s.sigma_ba)])


def convex_hull(points: Iterable[tuple[float, float]]) -> RateRegion:
    """Monotone-chain hull; collinear and near-duplicate points are dropped."""
    pts = sorted({(float(x), float(y)) for x, y in points})
    if len(pts) < 3:
        raise ValueError("need at least three distinct points")
    scale = max(max(abs(x), abs(y)) for x, y in pts) or 1.0
    eps = 1e-12 * scale * scale

    def half(seq):
        chain: list[tuple[float, float]] = []
        for p in seq:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= eps:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    # merge near-duplicates produced by rounding
    merged: list[tuple[float, float]] = []
    for p in hull:
        if not merged or math.dist(p, merged[-1]) > 1e-12 * scale:
            merged.append(p)
    if len(merged) > 1 and math.dist(merged[0], merged[-1]) <= 1e-12 * scale:
        merged.pop()
    start = min(range(len(merged)), key=lambda i: math.hypot(*merged[i]))
    merged = merged[start:] + merged[:start]
    if math.hypot(*merged[0]) <= 1e-12 * scale:
        merged[0] = (0.0, 0.0)
    return _polygon(merged)


def hull_tdmh_mlnc(r1: RateRegion, r2: RateRegion) -> RateRegion:
    """Time-sharing region: convex hull of the union of both vertex sets."""
    return convex_hull(list(r1.vertices) + list(r2.vertices))


def region_for(caps: CapacitySet, protocol: str) -> RateRegion:
    protocol = protocol.lower()
    if protocol == "tdmh":
        return region_tdmh(sigma_set(caps))
    if protocol == "mlnc":
        return region_mlnc(caps)
    if protocol == "plnc":
        return region_plnc(caps)
    if protocol == "hull":
        return hull_tdmh_mlnc(region_tdmh(sigma_set(caps)), region_mlnc(caps))
    raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")


def _halfplanes(region: RateRegion) -> tuple[np.ndarray, np.ndarray]:
    """Outward normals ``n`` and offsets ``b`` with ``n . x <= b`` inside."""
    normals, offsets = [], []
    for p, q in region.edges():
        n = np.array([q[1] - p[1], -(q[0] - p[0])])
        normals.append(n)
        offsets.append(float(n @ np.asarray(p)))
    return np.array(normals), np.array(offsets)


def contains(region: RateRegion, p, tol: float = TOL) -> bool:
    """Whether ``p`` lies inside ``region`` or within ``tol * region.scale`` of it."""
    normals, offsets = _halfplanes(region)
    lengths = np.hypot(normals[:, 0], normals[:, 1])
    slack = normals @ np.asarray(p, dtype=float) - offsets
    return bool(np.all(slack <= tol * region.scale * lengths))


def boundary_on_ray(region: RateRegion, mu: float) -> RatePair:
    """Farthest point of ``region`` on the ray ``r_ba = mu * r_ab``.

    ``mu = inf`` selects the backward axis.
    """
    if not mu >= 0:
        raise ValueError(f"mu must be nonnegative, got {mu!r}")
    direction = np.array([0.0, 1.0]) if math.isinf(mu) else np.array([1.0, mu])
    normals, offsets = _halfplanes(region)
    proj = normals @ direction
    lengths = np.hypot(normals[:, 0], normals[:, 1])
    active = proj > 1e-15 * lengths * np.linalg.norm(direction)
    t = float(np.min(offsets[active] / proj[active]))
    return RatePair(float(t * direction[0]), float(t * direction[1]))


def _point_polygon_distance(p: np.ndarray, region: RateRegion) -> float:
    if contains(region, p, tol=0.0):
        return 0.0
    best = math.inf
    for a, b in region.edges():
        a = np.asarray(a)
        ab = np.asarray(b) - a
        t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(p - (a + t * ab))))
    return best


def hausdorff(r1: RateRegion, r2: RateRegion) -> float:
    """Hausdorff distance between two convex polygons (attained at vertices)."""
    d12 = max(_point_polygon_distance(np.asarray(v), r2) for v in r1.vertices)
    d21 = max(_point_polygon_distance(np.asarray(v), r1) for v in r2.vertices)
    return max(d12, d21)


def _lp_system(caps: CapacitySet, protocol: str) -> tuple[np.ndarray, np.ndarray]:
    """Inequalities ``G x <= h`` over ``x = (r_ab, r_ba, lambda_1..lambda_k)``.

    Rows are the per-slot rate limits of the time-allocation formulation
    followed by nonnegativity; the equality ``sum(lambda) = 1`` is implicit.
    """
    c_ad, c_db, c_bd, c_da = caps.as_tuple()
    if protocol == "tdmh":
        n_slots = 4
        # (rate index, slot index, capacity)
        limits = [(0, 0, c_ad), (0, 1, c_db), (1, 2, c_bd), (1, 3, c_da)]
    elif protocol == "mlnc":
        n_slots = 3
        c_min = caps.c_min
        limits = [(0, 0, c_ad), (0, 2, c_min), (1, 1, c_bd), (1, 2, c_min)]
    elif protocol == "plnc":
        n_slots = 3
        limits = [(0, 0, c_ad), (0, 2, c_db), (1, 1, c_bd), (1, 2, c_da)]
    else:
        raise ValueError(f"no LP formulation for protocol {protocol!r}")
    n = 2 + n_slots
    rows = []
    for rate, slot, cap in limits:
        row = np.zeros(n)
        row[rate] = 1.0
        row[2 + slot] = -cap
        rows.append(row)
    rows.extend(-np.eye(n))
    G = np.array(rows)
    h = np.zeros(len(rows))
    return G, h


def _enumerate_vertices(G: np.ndarray, h: np.ndarray) -> np.ndarray:
    n = G.shape[1]
    eq = np.zeros(n)
    eq[2:] = 1.0
    combos = np.array(list(itertools.combinations(range(G.shape[0]), n - 1)))
    A = np.empty((len(combos), n, n))
    b = np.empty((len(combos), n))
    A[:, 0, :] = eq
    b[:, 0] = 1.0
    A[:, 1:, :] = G[combos]
    b[:, 1:] = h[combos]
    det = np.linalg.det(A)
    ok = np.abs(det) > 1e-12 * np.max(np.abs(G)) ** (n - 1)
    x = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
    feasible = np.all(x @ G.T <= h + 1e-10 * np.max(np.abs(G)), axis=1)
    return x[feasible]


def lp_oracle_vertices(caps: CapacitySet, protocol: str) -> RateRegion:
    """Rate region obtained directly from the linear time-allocation constraints.

    Every basic feasible solution of the constraint polytope is enumerated and
    projected to ``(r_ab, r_ba)``; the hull of those projections equals the set
    of maximisers of ``w . r`` over all weight directions.
    """
    protocol = protocol.lower()
    if min(caps.as_tuple()) <= 0.0:
        raise DegenerateCapacityError(f"all capacities must be positive: {caps}")
    if protocol == "hull":
        pts = np.vstack([
            _enumerate_vertices(*_lp_system(caps, "tdmh"))[:, :2],
            _enumerate_vertices(*_lp_system(caps, "mlnc"))[:, :2],
        ])
    else:
        pts = _enumerate_vertices(*_lp_system(caps, protocol))[:, :2]
    if len(pts) == 0:
        raise RuntimeError(f"LP for {protocol} is infeasible: {caps}")
    pts = np.where(np.abs(pts) < 1e-13 * np.max(np.abs(pts)), 0.0, pts)
    return convex_hull(map(tuple, pts))

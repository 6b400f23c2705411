# solenoid_density/core/levelset.py
from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
from typing import Sequence

import numpy as np

from .circle import CantorTransversal, HolonomySystem, IdentityMap, TransversalMeasure
from .config import FieldCfg
from .forms import (Box, CurrentVector, Dictionary, FieldFunction, KForm, Polyline, SmoothFunction, TrigPoly,
                    bump, current_vector, derivative_sups, exterior_derivative, gauss_nodes, pair_nodes, wrap)

_LOG = logging.getLogger(__name__)

_GT = 0.5 * (np.polynomial.legendre.leggauss(3)[0] + 1.0)
_GW = 0.5 * np.polynomial.legendre.leggauss(3)[1]


# ---------- scalar fields ----------
@dataclass(frozen=True, eq=False)
class ScalarFieldBundle:
    """F: T^2 -> R, compactly supported in ``support`` (None: identically zero)."""
    F: SmoothFunction
    support: Box | None
    n: int = 2
    k: int = 1
    _samples: dict = field(default_factory=dict, repr=False)

    @property
    def support_volume(self) -> float:
        return 0.0 if self.support is None else self.support.volume

    def sample(self, grid: int) -> tuple[np.ndarray, np.ndarray]:
        """Values (G, G) and gradients (G, G, 2) on the periodic grid (i/G, j/G)."""
        hit = self._samples.get(grid)
        if hit is None:
            axis = np.arange(grid) / grid
            X, Y = np.meshgrid(axis, axis, indexing="ij")
            pts = np.stack([X.ravel(), Y.ravel()], axis=1)
            hit = (self.F(pts).reshape(grid, grid), self.F.grad(pts).reshape(grid, grid, 2))
            self._samples[grid] = hit
        return hit

    def exterior_derivative(self) -> KForm:
        return exterior_derivative(KForm.function(self.F))


def zero_field(n: int = 2) -> ScalarFieldBundle:
    f = FieldFunction(n, lambda p: np.zeros(p.shape[0]), lambda p: np.zeros_like(p))
    return ScalarFieldBundle(f, None, n)


def radial_bump(center: Sequence[float], radius: float, amplitude: float = 1.0) -> ScalarFieldBundle:
    """amplitude * exp(1 - 1/(1 - s)), s = |x - center|^2 / radius^2, zero for s >= 1."""
    c = np.asarray(center, float)

    def parts(p):
        d = wrap(p - c)
        s = np.sum(d * d, axis=1) / radius ** 2
        inside = s < 1.0
        q = np.where(inside, 1.0 - s, 1.0)
        g = np.where(inside, amplitude * np.exp(1.0 - 1.0 / q), 0.0)
        return d, q, g, inside

    def value(p):
        return parts(p)[2]

    def grad(p):
        d, q, g, inside = parts(p)
        dg = np.where(inside, -g / (q * q), 0.0)
        return dg[:, None] * 2.0 * d / radius ** 2

    box = Box(tuple(c - radius), tuple(c + radius))
    return ScalarFieldBundle(FieldFunction(c.size, value, grad, box), box, c.size)


def build_field(cfg: FieldCfg) -> ScalarFieldBundle:
    if cfg.kind == "zero":
        return zero_field()
    if cfg.kind == "radial":
        return radial_bump(cfg.center, cfg.radius, cfg.amplitude)
    b = bump(Box(cfg.box_lo, cfg.box_hi), cfg.margin)
    g = TrigPoly.monomial(2, cfg.factors, cfg.amplitude)
    return ScalarFieldBundle(b * g, b.support)


# ---------- marching squares ----------
# edge e of a cell joins corners e and e+1 (counterclockwise: 00, 10, 11, 01)
def _case_table() -> dict[tuple[int, str], list[tuple[int, int]]]:
    """Oriented (from_edge, to_edge) pairs per corner mask, higher values on the right."""
    table: dict[tuple[int, str], list[tuple[int, int]]] = {}
    for mask in range(1, 15):
        above = [k for k in range(4) if mask >> k & 1]
        below = [k for k in range(4) if not mask >> k & 1]
        if len(above) == 1:
            k = above[0]
            segs = {"": [((k - 1) % 4, k)]}
        elif len(above) == 3:
            k = below[0]
            segs = {"": [(k, (k - 1) % 4)]}
        elif (above[1] - above[0]) in (1, 3):
            k = above[0] if above[1] - above[0] == 1 else above[1]
            segs = {"": [((k - 1) % 4, (k + 1) % 4)]}
        else:
            segs = {"above": [(j, (j - 1) % 4) for j in below],
                    "below": [((k - 1) % 4, k) for k in above]}
        for variant, pairs in segs.items():
            table[(mask, variant)] = pairs
    return table


_CASES = _case_table()


@dataclass(frozen=True, eq=False)
class ContourSegments:
    """Oriented marching-squares segments of one level, in torus coordinates."""
    value: float
    starts: np.ndarray
    deltas: np.ndarray
    start_keys: np.ndarray   # global edge ids, used for chaining
    end_keys: np.ndarray

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(self.deltas, axis=1)))

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        pts = (self.starts[:, None, :] + _GT[None, :, None] * self.deltas[:, None, :]).reshape(-1, 2)
        wv = (_GW[None, :, None] * self.deltas[:, None, :]).reshape(-1, 2)
        return pts, wv


def contour_segments(values: np.ndarray, c: float) -> ContourSegments:
    G = values.shape[0]
    v = np.stack([values, np.roll(values, -1, 0), np.roll(np.roll(values, -1, 0), -1, 1),
                  np.roll(values, -1, 1)])                      # corners 00, 10, 11, 01
    up = v > c
    mask = up[0] * 1 + up[1] * 2 + up[2] * 4 + up[3] * 8
    ii, jj = np.meshgrid(np.arange(G), np.arange(G), indexing="ij")

    def edge_point(e, sel):
        a, b = v[e][sel], v[(e + 1) % 4][sel]
        den = b - a
        t = np.clip(np.where(den != 0.0, (c - a) / np.where(den != 0.0, den, 1.0), 0.5), 0.0, 1.0)
        i, j = ii[sel].astype(float), jj[sel].astype(float)
        if e == 0:
            return np.stack([i + t, j], 1), _edge_key(G, 0, ii[sel], jj[sel])
        if e == 1:
            return np.stack([i + 1.0, j + t], 1), _edge_key(G, 1, (ii[sel] + 1) % G, jj[sel])
        if e == 2:  # runs from corner 11 back to 01
            return np.stack([i + 1.0 - t, j + 1.0], 1), _edge_key(G, 0, ii[sel], (jj[sel] + 1) % G)
        return np.stack([i, j + 1.0 - t], 1), _edge_key(G, 1, ii[sel], jj[sel])

    saddle_above = None
    starts, ends, skeys, ekeys = [], [], [], []
    for (m, variant), pairs in _CASES.items():
        sel = mask == m
        if variant:
            if saddle_above is None:
                den = v[0] + v[2] - v[1] - v[3]
                centre = np.where(den != 0.0, (v[0] * v[2] - v[1] * v[3]) / np.where(den != 0.0, den, 1.0),
                                  0.25 * v.sum(axis=0))
                saddle_above = centre > c
            sel = sel & (saddle_above if variant == "above" else ~saddle_above)
        if not np.any(sel):
            continue
        for e_from, e_to in pairs:
            p, kp = edge_point(e_from, sel)
            q, kq = edge_point(e_to, sel)
            starts.append(p)
            ends.append(q)
            skeys.append(kp)
            ekeys.append(kq)
    if not starts:
        empty = np.zeros((0, 2))
        return ContourSegments(float(c), empty, empty, np.zeros(0, np.int64), np.zeros(0, np.int64))
    p = np.concatenate(starts) / G
    q = np.concatenate(ends) / G
    return ContourSegments(float(c), np.mod(p, 1.0), q - p, np.concatenate(skeys), np.concatenate(ekeys))


def _edge_key(G: int, kind: int, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    return (kind * G + i) * G + j


def chain(segments: ContourSegments) -> list[Polyline]:
    """Join segments into closed polylines through shared grid edges."""
    nxt = {int(s): k for k, s in enumerate(segments.start_keys)}
    seen = np.zeros(segments.starts.shape[0], dtype=bool)
    out = []
    for k0 in range(segments.starts.shape[0]):
        if seen[k0]:
            continue
        verts, k = [], k0
        while not seen[k]:
            seen[k] = True
            verts.append(segments.starts[k])
            k = nxt.get(int(segments.end_keys[k]))
            if k is None:
                raise RuntimeError("open contour: marching squares produced an unmatched edge")
        out.append(Polyline(np.array(verts), closed=True))
    return out


# ---------- critical region ----------
@dataclass(frozen=True, eq=False)
class CriticalRegion:
    epsilon: float
    delta: float
    intervals: np.ndarray          # (m, 2) merged open intervals of excluded values
    value_range: tuple[float, float]
    grid: int
    critical_fraction: float       # share of grid points with |grad F| < epsilon

    def contains(self, c) -> np.ndarray:
        c = np.asarray(c, float)
        if not self.intervals.size:
            return np.zeros(c.shape, dtype=bool)
        k = np.searchsorted(self.intervals[:, 0], c, side="right") - 1
        kk = np.maximum(k, 0)
        return (k >= 0) & (c < self.intervals[kk, 1])

    @property
    def measure(self) -> float:
        """Lebesgue measure of U inside the range of F."""
        lo, hi = self.value_range
        if not self.intervals.size:
            return 0.0
        a = np.clip(self.intervals[:, 0], lo, hi)
        b = np.clip(self.intervals[:, 1], lo, hi)
        return float(np.sum(b - a))

    def regular_intervals(self) -> list[tuple[float, float]]:
        """Components of range(F) minus U."""
        lo, hi = self.value_range
        out, cur = [], lo
        for a, b in self.intervals:
            if a > cur and cur < hi:
                out.append((cur, min(a, hi)))
            cur = max(cur, b)
        if cur < hi:
            out.append((cur, hi))
        return [(a, b) for a, b in out if b > a]


def exclusion_set(bundle: ScalarFieldBundle, epsilon: float, grid: int = 256) -> CriticalRegion:
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    vals, grads = bundle.sample(grid)
    crit = np.linalg.norm(grads, axis=2) < epsilon
    delta = max(epsilon * math.sqrt(2.0) / grid, 1e-12)
    cv = np.unique(vals[crit])
    merged: list[list[float]] = []
    for v in cv:
        if merged and v - delta <= merged[-1][1]:
            merged[-1][1] = v + delta
        else:
            merged.append([v - delta, v + delta])
    region = CriticalRegion(epsilon=float(epsilon), delta=delta,
                            intervals=np.array(merged, float).reshape(-1, 2),
                            value_range=(float(vals.min()), float(vals.max())), grid=grid,
                            critical_fraction=float(np.mean(crit)))
    _LOG.debug("exclusion set: %d intervals, |U| = %.3e, delta = %.3e", len(merged), region.measure, delta)
    return region


def contour_trace(bundle: ScalarFieldBundle, c: float, grid: int = 256,
                  region: CriticalRegion | None = None) -> list[Polyline]:
    if region is not None and bool(region.contains(c)):
        raise ValueError(f"excluded value: {c!r} lies in the critical neighbourhood U")
    vals, _ = bundle.sample(grid)
    if not vals.min() < c < vals.max():
        return []
    return chain(contour_segments(vals, c))


# ---------- value measures ----------
@dataclass(frozen=True)
class ValueWeights:
    """Atoms in value space; ``bands`` are the Cantor cylinders holding them, when the measure has any."""
    values: np.ndarray
    weights: np.ndarray
    kind: str = "lebesgue"
    bands: np.ndarray | None = None   # (m, 2) value intervals

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    def take(self, atoms: Sequence[int], weights: Sequence[float]) -> "ValueWeights":
        atoms = np.asarray(atoms, dtype=np.int64)
        bands = None if self.bands is None else self.bands[atoms]
        return ValueWeights(self.values[atoms], np.asarray(weights, float), self.kind, bands)


def lebesgue_weights(intervals: Sequence[tuple[float, float]], per_unit: int = 64,
                     min_pieces: int = 4) -> ValueWeights:
    """Composite 3-point Gauss rule in value space."""
    vs, ws = [], []
    for a, b in intervals:
        t, w = gauss_nodes(a, b, max(min_pieces, math.ceil(per_unit * (b - a) / 0.1)))
        vs.append(t)
        ws.append(w)
    if not vs:
        return ValueWeights(np.zeros(0), np.zeros(0))
    return ValueWeights(np.concatenate(vs), np.concatenate(ws))


def cantor_cylinders(a: float, b: float, depth: int, kappa: float = 1.0 / 3.0) -> np.ndarray:
    """
    Depth-d cylinders of the middle-portion Cantor construction on [a, b]: each
    cylinder loses its open middle kappa share and keeps its two outer pieces.
    Rows are [lo, hi] in increasing order; depth d+1 rows nest inside depth d rows.
    """
    lo = np.array([float(a)])
    width = float(b) - float(a)
    for _ in range(depth):
        child = 0.5 * (1.0 - kappa) * width
        lo = np.stack([lo, lo + width - child], axis=1).ravel()
        width = child
    return np.stack([lo, lo + width], axis=1)


def cantor_weights(intervals: Sequence[tuple[float, float]], epsilon_measure: float, depth: int = 8,
                   kappa: float = 1.0 / 3.0) -> ValueWeights:
    """
    Cantor measure approximating Lebesgue on each interval [a, b]. The atom of a
    depth-d cylinder sits at its midpoint and carries the Lebesgue mass of its
    cell: the cylinder plus half of each neighbouring removed gap. Cumulative
    masses therefore agree with Lebesgue at every gap midpoint.

    A cell is at most the cylinder width plus kappa * (b - a), so kappa is capped
    at epsilon_measure / (2 (b - a)) and d is raised until cylinders are at most
    epsilon_measure / 2 wide; every cell then has length <= epsilon_measure.
    """
    if epsilon_measure <= 0.0:
        raise ValueError("epsilon_measure must be positive")
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    intervals = [(a, b) for a, b in intervals if b > a]
    if not intervals:
        raise ValueError("empty range: nothing left after removing U")
    vs, ws, bs = [], [], []
    for a, b in intervals:
        L = b - a
        k = min(kappa, 0.5 * epsilon_measure / L)
        d = max(depth, math.ceil(math.log2(2.0 * L / epsilon_measure)))
        cyl = cantor_cylinders(a, b, d, k)
        edges = np.concatenate(([a], 0.5 * (cyl[:-1, 1] + cyl[1:, 0]), [b]))
        vs.append(0.5 * (cyl[:, 0] + cyl[:, 1]))
        ws.append(np.diff(edges))
        bs.append(cyl)
    return ValueWeights(np.concatenate(vs), np.concatenate(ws), "cantor", np.concatenate(bs))


# ---------- level-set solenoids ----------
@dataclass(frozen=True, eq=False)
class LevelSetSolenoid:
    """Weighted family of closed level curves; trivial holonomy, transversal = value space."""
    bundle: ScalarFieldBundle
    weights: ValueWeights
    levels: tuple[ContourSegments, ...]

    @property
    def transversal_mass(self) -> float:
        return self.weights.total

    @property
    def lengths(self) -> np.ndarray:
        return np.array([lv.length for lv in self.levels])

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.levels:
            return np.zeros((0, 2)), np.zeros((0, 2))
        parts = [lv.nodes() for lv in self.levels]
        pts = np.concatenate([p for p, _ in parts])
        wv = np.concatenate([v * w for (_, v), w in zip(parts, self.weights.weights)])
        return pts, wv

    def mass(self) -> float:
        return float(np.sum(self.weights.weights * self.lengths)) if self.levels else 0.0

    def current(self, dictionary: Dictionary, threads: int = 1) -> CurrentVector:
        pts, wv = self.nodes()
        vec = current_vector(dictionary, lambda w: pair_nodes(w, pts, wv), threads)
        return replace(vec, mass=self.mass())

    def subset(self, atoms: Sequence[int], weights: Sequence[float]) -> "LevelSetSolenoid":
        return LevelSetSolenoid(self.bundle, self.weights.take(atoms, weights),
                                tuple(self.levels[i] for i in atoms))

    def anchor(self) -> np.ndarray:
        """A point on the first non-empty leaf."""
        for lv in self.levels:
            if lv.starts.shape[0]:
                return lv.starts[0].copy()
        raise ValueError("level-set solenoid has no leaves")

    def transversal_measure(self, value_range: tuple[float, float] | None = None) -> TransversalMeasure:
        """Cantor bands rescaled into the circle, one band per atom."""
        bands = self.weights.bands
        if bands is None:
            raise ValueError("cannot chunk: value measure carries no Cantor bands")
        lo_v, hi_v = value_range or (float(bands[:, 0].min()), float(bands[:, 1].max()))
        span = max(hi_v - lo_v, 1e-300)
        t = 0.005 + 0.99 * (bands - lo_v) / span
        order = np.argsort(t[:, 0], kind="stable")
        tv = CantorTransversal(t[order, 0], t[order, 1], 0, order.astype(np.int64))
        return TransversalMeasure(tv, self.weights.weights[order].astype(float))

    def system(self, value_range: tuple[float, float] | None = None) -> HolonomySystem:
        m = self.transversal_measure(value_range)
        return HolonomySystem(m.transversal, IdentityMap(), m)


def levelset_solenoid(bundle: ScalarFieldBundle, region: CriticalRegion, weights: ValueWeights,
                      grid: int | None = None, threads: int = 1) -> LevelSetSolenoid:
    grid = region.grid if grid is None else grid
    bad = region.contains(weights.values)
    if np.any(bad):
        raise ValueError(f"excluded value: {int(np.sum(bad))} weighted values fall inside U")
    vals, _ = bundle.sample(grid)

    def trace(c):
        return contour_segments(vals, c)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            levels = tuple(pool.map(trace, weights.values))
    else:
        levels = tuple(trace(c) for c in weights.values)
    return LevelSetSolenoid(bundle, weights, levels)


def levelset_current(bundle: ScalarFieldBundle, region: CriticalRegion, weights: ValueWeights,
                     dictionary: Dictionary, grid: int | None = None, threads: int = 1) -> CurrentVector:
    return levelset_solenoid(bundle, region, weights, grid, threads).current(dictionary, threads)


def direct_current(bundle: ScalarFieldBundle, dictionary: Dictionary, resolution: int = 256,
                   threads: int = 1) -> CurrentVector:
    """<alpha, omega> = integral over T^2 of dF ^ omega, on the periodic trapezoid grid."""
    if dictionary.n != 2 or dictionary.k != 1:
        raise ValueError("level-set currents are implemented for 1-forms on T^2")
    _, grads = bundle.sample(resolution)
    gx, gy = grads[..., 0].ravel(), grads[..., 1].ravel()
    axis = np.arange(resolution) / resolution
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)

    def pair(w: KForm) -> float:
        co = w.coefficients(pts)
        return float(np.mean(gx * co[:, 1] - gy * co[:, 0]))

    return current_vector(dictionary, pair, threads)


# ---------- certificate ----------
@dataclass(frozen=True, eq=False)
class Certificate:
    direct: CurrentVector
    solenoid: CurrentVector
    lebesgue: CurrentVector
    eq1: np.ndarray            # per dictionary entry
    eq2: np.ndarray
    cantor: np.ndarray
    discrepancy: np.ndarray
    region: CriticalRegion
    weights: ValueWeights
    levelset: LevelSetSolenoid
    contour_constant: float    # measured C in the C * Vol(U) term
    grid: int
    epsilon_measure: float

    @property
    def budget(self) -> np.ndarray:
        return self.eq1 + self.eq2 + self.cantor

    @property
    def observed(self) -> float:
        return float(np.max(self.discrepancy)) if self.discrepancy.size else 0.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.discrepancy <= self.budget + 1e-15))

    @property
    def binding(self) -> str:
        """Largest budget term at the worst entry."""
        if not self.discrepancy.size:
            return "none"
        i = int(np.argmax(self.discrepancy - self.budget))
        terms = {"eq1": self.eq1[i], "eq2": self.eq2[i], "cantor": self.cantor[i]}
        return max(terms, key=terms.get)

    def summary(self) -> dict:
        return {
            "direct": self.direct.pairings.tolist(),
            "solenoid": self.solenoid.pairings.tolist(),
            "budget": {"eq1": float(np.max(self.eq1, initial=0.0)),
                       "eq2": float(np.max(self.eq2, initial=0.0)),
                       "cantor": float(np.max(self.cantor, initial=0.0))},
            "observed": self.observed,
            "pass": self.passed,
            "binding": self.binding,
            "epsilon": self.region.epsilon,
            "epsilon_measure": self.epsilon_measure,
            "grid": self.grid,
            "excluded_measure": self.region.measure,
            "contour_constant": self.contour_constant,
            "cantor_constant": self.cantor_constant,
            "atoms": int(self.weights.values.size),
        }

    @property
    def cantor_constant(self) -> float:
        """max |Cantor - Lebesgue| / epsilon_measure over the dictionary."""
        diff = np.abs(self.solenoid.pairings - self.lebesgue.pairings)
        return float(np.max(diff, initial=0.0)) / self.epsilon_measure


def lemma_alpha_certificate(bundle: ScalarFieldBundle, epsilon: float, epsilon_measure: float,
                            dictionary: Dictionary, grid: int = 256, cantor_depth: int = 8,
                            values_per_unit: int = 64, torus_resolution: int | None = None,
                            threads: int = 1) -> Certificate:
    """
    Compare the current of alpha = dF with its Cantor level-set solenoid and
    evaluate the error budget entry by entry. Never raises on budget failure.
    """
    region = exclusion_set(bundle, epsilon, grid)
    direct = direct_current(bundle, dictionary, torus_resolution or grid, threads)
    sups = np.array([e.sup for e in dictionary.entries])
    regular = region.regular_intervals()

    if not regular:
        cantor_w = ValueWeights(np.zeros(0), np.zeros(0), "cantor", np.zeros((0, 2)))
        ls = LevelSetSolenoid(bundle, cantor_w, ())
        sol = leb = CurrentVector.zeros(dictionary)
    else:
        cantor_w = cantor_weights(regular, epsilon_measure, cantor_depth)
        ls = levelset_solenoid(bundle, region, cantor_w, grid, threads)
        sol = ls.current(dictionary, threads)
        leb = levelset_current(bundle, region, lebesgue_weights(regular, values_per_unit), dictionary,
                               grid, threads)

    # |dF| integrated over F^{-1}(U) away from the critical set, i.e. C * Vol(U) with C measured
    vals, grads = bundle.sample(grid)
    gn = np.linalg.norm(grads, axis=2)
    flux = float(np.sum(gn[region.contains(vals) & (gn >= epsilon)])) / grid ** 2
    C = flux / region.measure if region.measure > 0.0 else 0.0

    vol = bundle.support_volume
    cert = Certificate(direct=direct, solenoid=sol, lebesgue=leb,
                       eq1=epsilon * vol * sups, eq2=flux * sups,
                       cantor=epsilon_measure * vol * derivative_sups(dictionary),
                       discrepancy=np.abs(direct.pairings - sol.pairings), region=region,
                       weights=cantor_w, levelset=ls, contour_constant=C, grid=grid,
                       epsilon_measure=float(epsilon_measure))
    if cert.passed:
        _LOG.info("certificate passed: observed %.3e <= budget %.3e", cert.observed, float(np.max(cert.budget)))
    else:
        _LOG.warning("certificate failed: observed %.3e, binding term %s", cert.observed, cert.binding)
    return cert

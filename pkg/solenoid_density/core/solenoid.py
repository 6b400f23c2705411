# solenoid_density/core/solenoid.py
from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
from typing import Callable, Literal, Sequence

import numpy as np
import pandas as pd

from .circle import (CantorTransversal, CircleMap, HolonomySystem, RigidRotation, TransversalMeasure,
                     invariant_measure, partition_by_mass, partition_residual, uniform_transversal)
from .config import DenjoyCfg, SolenoidCfg
from .forms import (Dictionary, KForm, CurrentVector, Segment, current_vector, gauss_nodes,
                    pair_nodes, weak_distance, wrap)

_LOG = logging.getLogger(__name__)

Normalization = Literal["mass", "transversal"]


@dataclass(frozen=True, eq=False)
class Cycle:
    """Closed straight loop t -> start + t * direction on T^n (integer direction)."""
    direction: np.ndarray

    @classmethod
    def coordinate(cls, n: int, axis: int, sign: int = 1) -> "Cycle":
        d = np.zeros(n)
        d[axis] = 1.0 if sign >= 0 else -1.0
        return cls(d)

    @property
    def homology(self) -> np.ndarray:
        return np.rint(self.direction).astype(int)

    @property
    def sign(self) -> int:
        return int(np.sign(self.direction[np.nonzero(self.direction)[0][0]]))

    def curve(self, start) -> Segment:
        return Segment(np.asarray(start, float), self.direction.astype(float))


@dataclass(frozen=True, eq=False)
class CoreModel:
    """
    Ball where leaves cross from the in-transversal to the out-transversal.
    The transversal sits at ``base + section(theta)``; a leaf entering at angle
    theta leaves the core at theta + advance.
    """
    base: np.ndarray
    radius: float
    fraction: float
    section_kind: Literal["circle", "line"] = "circle"
    axis: int = 1
    holonomy: CircleMap | None = None

    @property
    def n(self) -> int:
        return int(self.base.size)

    @property
    def ball_radius(self) -> float:
        return self.radius + self.fraction

    def section(self, theta) -> np.ndarray:
        theta = np.asarray(theta, float).ravel()
        out = np.zeros((theta.size, self.n))
        if self.section_kind == "circle":
            out[:, 0] = self.radius * np.cos(2.0 * np.pi * theta)
            out[:, 1] = self.radius * np.sin(2.0 * np.pi * theta)
        else:
            out[:, self.axis] = self.radius * theta
        return out

    def section_velocity(self, theta) -> np.ndarray:
        theta = np.asarray(theta, float).ravel()
        out = np.zeros((theta.size, self.n))
        if self.section_kind == "circle":
            out[:, 0] = -2.0 * np.pi * self.radius * np.sin(2.0 * np.pi * theta)
            out[:, 1] = 2.0 * np.pi * self.radius * np.cos(2.0 * np.pi * theta)
        else:
            out[:, self.axis] = self.radius
        return out

    @property
    def advance(self) -> float:
        """Section angle gained per crossing: the rotation number of the holonomy."""
        if self.holonomy is None:
            raise ValueError("core has no holonomy attached")
        rho = getattr(self.holonomy, "rho", 0.0)
        return float(getattr(rho, "value", rho))

    def isotopy(self, t, theta) -> np.ndarray:
        """
        h_t on section angles: identity at t = -1, the holonomy read through the
        section at t = +1, linear in between. Leaves crossing the core sit at h_t(theta).
        """
        s = 0.5 * (np.asarray(t, float) + 1.0)
        return np.asarray(theta, float) + s * self.advance

    def piece_nodes(self, theta: np.ndarray, dirs: np.ndarray,
                    resolution: int) -> tuple[np.ndarray, np.ndarray]:
        """
        Quadrature nodes of the leaf pieces starting at section angles ``theta``:
        a core arc followed by the straight run along the cycle. Shapes (P, Q, n).
        """
        P = theta.size
        c = self.fraction
        advance = self.advance
        dnorm = float(np.max(np.linalg.norm(dirs, axis=1))) if P else 1.0
        arc_len = c * dnorm + abs(advance) * float(np.max(np.linalg.norm(self.section_velocity([0.0, 0.25]), axis=1)))
        u, wu = gauss_nodes(0.0, 1.0, max(1, math.ceil(resolution * arc_len)))
        phi = self.isotopy(2.0 * u[None, :] - 1.0, theta[:, None])
        sec = self.section(phi).reshape(P, u.size, self.n)
        dsec = self.section_velocity(phi).reshape(P, u.size, self.n) * advance
        pts = self.base[None, None, :] + u[None, :, None] * c * dirs[:, None, :] + sec
        wv = wu[None, :, None] * (c * dirs[:, None, :] + dsec)
        if c < 1.0:
            t, wt = gauss_nodes(0.0, 1.0, max(1, math.ceil(resolution * (1.0 - c) * dnorm)))
            start = self.base[None, :] + c * dirs + self.section(self.isotopy(1.0, theta))
            run = (1.0 - c) * dirs
            pts = np.concatenate([pts, start[:, None, :] + t[None, :, None] * run[:, None, :]], axis=1)
            wv = np.concatenate([wv, np.broadcast_to(wt[None, :, None] * run[:, None, :], (P, t.size, self.n))], axis=1)
        return pts, wv


@dataclass(frozen=True, eq=False)
class SuspensionSolenoid:
    system: HolonomySystem
    measure: TransversalMeasure
    itinerary: np.ndarray           # band -> cycle index
    cycles: tuple[Cycle, ...]
    core: CoreModel
    orientation: int = 1
    normalization: Normalization | None = None
    scale: float = 1.0
    transversal_nodes: int = 2
    recipe: Callable[[int], "SuspensionSolenoid"] | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def transversal(self) -> CantorTransversal:
        return self.measure.transversal

    @property
    def n(self) -> int:
        return self.core.n

    @property
    def depth(self) -> int:
        return self.transversal.depth

    def angles(self, y) -> np.ndarray:
        """Section angle of transversal points (through the semiconjugacy when present)."""
        return self.measure._base(np.asarray(y, float))

    def _outer(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        m = self.measure
        tv = m.transversal
        b_lo, b_hi = m._base(tv.lo), m._base(tv.hi)
        tq, wq = np.polynomial.legendre.leggauss(self.transversal_nodes)
        theta = 0.5 * (b_lo + b_hi)[:, None] + 0.5 * (b_hi - b_lo)[:, None] * tq[None, :]
        w = m.weights[:, None] * (0.5 * wq)[None, :]
        band = np.repeat(np.arange(tv.size), self.transversal_nodes)
        return theta.ravel(), w.ravel(), band

    def quadrature(self, resolution: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(points, measure-weighted velocities, per-node leaf piece lengths) for the whole solenoid."""
        hit = self._cache.get(resolution)
        if hit is not None:
            return hit
        theta, w, band = self._outer()
        dirs = np.stack([c.direction for c in self.cycles])[self.itinerary[band]]
        pts, wv = self.core.piece_nodes(theta, dirs, resolution)
        lengths = np.sum(np.linalg.norm(wv, axis=2), axis=1)
        n = self.n
        out = (pts.reshape(-1, n), (wv * (self.orientation * w)[:, None, None]).reshape(-1, n), lengths * w)
        self._cache[resolution] = out
        return out

    def total_mass(self, resolution: int = 64) -> float:
        """Leafwise length integrated against the transversal measure."""
        return float(np.sum(self.quadrature(resolution)[2]))


def normalize(solenoid: SuspensionSolenoid, convention: Normalization = "mass",
              resolution: int = 64) -> SuspensionSolenoid:
    if convention == "mass":
        factor = 1.0 / solenoid.total_mass(resolution)
    elif convention == "transversal":
        factor = 1.0 / solenoid.measure.total
    else:
        raise ValueError(f"unknown normalization {convention!r}")
    return replace(solenoid, measure=solenoid.measure.scaled(factor), normalization=convention,
                   scale=solenoid.scale / factor, _cache={})


def reversed_orientation(solenoid: SuspensionSolenoid) -> SuspensionSolenoid:
    return replace(solenoid, orientation=-solenoid.orientation, _cache={})


def _at_depth(solenoid: SuspensionSolenoid, depth: int | None) -> SuspensionSolenoid:
    if depth is None or depth == solenoid.depth:
        return solenoid
    if solenoid.recipe is None:
        raise ValueError(f"solenoid cannot be rebuilt at depth {depth}")
    out = solenoid.recipe(depth)
    return reversed_orientation(out) if solenoid.orientation < 0 else out


def rs_pair(solenoid: SuspensionSolenoid, form: KForm, depth: int | None = None,
            resolution: int = 64) -> float:
    """<(S_mu, f), omega> = sum over bands of mu-weighted leaf-piece line integrals."""
    if solenoid.normalization is None:
        raise ValueError("normalize first: solenoid measure is not normalized")
    if form.degree != 1 or form.n != solenoid.n:
        raise ValueError(f"need a 1-form on T^{solenoid.n}")
    sol = _at_depth(solenoid, depth)
    pts, wv, _ = sol.quadrature(resolution)
    return pair_nodes(form, pts, wv)


def rs_current(solenoid: SuspensionSolenoid, dictionary: Dictionary, resolution: int = 64,
               threads: int = 1) -> CurrentVector:
    if solenoid.normalization is None:
        raise ValueError("normalize first: solenoid measure is not normalized")
    pts, wv, lengths = solenoid.quadrature(resolution)
    vec = current_vector(dictionary, lambda w: pair_nodes(w, pts, wv), threads)
    return replace(vec, mass=float(np.sum(lengths)))


def homology_class(solenoid: SuspensionSolenoid, n: int | None = None, resolution: int = 64) -> np.ndarray:
    n = solenoid.n if n is None else n
    return np.array([rs_pair(solenoid, KForm.basis(n, (i,)), resolution=resolution) for i in range(n)])


# ---------- builders ----------
def rotation_suspension(rho: float, n: int = 2, bands: int = 64, transversal_nodes: int = 2) -> SuspensionSolenoid:
    """Suspension of R_rho embedded as t -> (t, y + rho t); class (1, rho)."""
    if n < 2:
        raise ValueError("rotation suspension needs n >= 2")
    tv = uniform_transversal(bands)
    measure = TransversalMeasure(tv, np.full(bands, 1.0 / bands))
    rot = RigidRotation(float(rho))
    core = CoreModel(base=np.zeros(n), radius=1.0, fraction=1.0, section_kind="line", axis=1, holonomy=rot)
    sol = SuspensionSolenoid(system=HolonomySystem(tv, rot, measure), measure=measure,
                             itinerary=np.zeros(bands, dtype=np.int64), cycles=(Cycle.coordinate(n, 0),),
                             core=core, transversal_nodes=transversal_nodes)
    return normalize(sol, "transversal")


def _cyclic_union(pieces: Sequence[CantorTransversal]) -> tuple[CantorTransversal, np.ndarray]:
    lo = np.concatenate([p.lo for p in pieces])
    hi = np.concatenate([p.hi for p in pieces])
    idx = np.concatenate([p.index for p in pieces])
    owner = np.concatenate([np.full(p.size, i, dtype=np.int64) for i, p in enumerate(pieces)])
    return CantorTransversal(lo, hi, pieces[0].depth, idx), owner


def realize_class(a: Sequence[float], denjoy: DenjoyCfg | None = None, geometry: SolenoidCfg | None = None,
                  depth: int | None = None, resolution: int = 64) -> SuspensionSolenoid:
    """
    Mass-normalized Denjoy suspension whose class is a / scale: coordinate loops
    C_i oriented by sign(a_i), chunks K_i of mass lambda_i = |a_i| / sum |a|.
    """
    a = np.asarray(a, float)
    if a.ndim != 1 or a.size < 2:
        raise ValueError("class must be a vector on T^n, n >= 2")
    if not np.any(a != 0.0):
        raise ValueError("null class: a = 0 has no positive multiple to realize")
    denjoy = denjoy or DenjoyCfg()
    geometry = geometry or SolenoidCfg()
    depth = denjoy.depth if depth is None else depth

    used = [i for i in range(a.size) if a[i] != 0.0]
    lam = np.abs(a[used]) / np.sum(np.abs(a[used]))
    cycles = tuple(Cycle.coordinate(a.size, i, int(np.sign(a[i]))) for i in used)

    h = denjoy.build(depth)
    mu = invariant_measure(h, depth)
    pieces = partition_by_mass(mu, lam, exact=True)
    _LOG.debug("realize %s: chunk residual %.3e", a.tolist(), partition_residual(mu, pieces, lam))
    tv, owner = _cyclic_union(pieces)
    measure = mu.restrict(tv)

    base = np.zeros(a.size)
    base[:len(geometry.base)] = geometry.base[:a.size]
    core = CoreModel(base=base, radius=geometry.core_radius, fraction=geometry.core_fraction, holonomy=h)
    sol = SuspensionSolenoid(system=HolonomySystem(tv, h, measure), measure=measure, itinerary=owner,
                             cycles=cycles, core=core,
                             transversal_nodes=geometry.transversal_nodes,
                             recipe=lambda d: realize_class(a, denjoy, geometry, d, resolution))
    sol = normalize(sol, "mass", resolution)
    sol = replace(sol, scale=float(np.sum(np.abs(a))) * sol.scale)
    _LOG.info("realized class %s with %d bands, scale %.6g", a.tolist(), tv.size, sol.scale)
    return sol


# ---------- leaves ----------
@dataclass(frozen=True, eq=False)
class LeafSegment:
    start: float
    returns: int
    end: float                      # h^R(start) on the transversal
    points: np.ndarray              # quadrature nodes of the curve
    weighted_velocity: np.ndarray
    length: float
    cap: Segment
    displacement: np.ndarray        # sum of traversed cycle classes

    @property
    def cap_length(self) -> float:
        return float(np.linalg.norm(self.cap.delta))

    @property
    def cap_ratio(self) -> float:
        return self.cap_length / self.length

    def pair(self, form: KForm) -> float:
        return pair_nodes(form, self.points, self.weighted_velocity)

    def current(self, dictionary: Dictionary, threads: int = 1) -> CurrentVector:
        """(l_R, f) / Vol f(l_R)."""
        vec = current_vector(dictionary, lambda w: self.pair(w) / self.length, threads)
        speed = float(np.sum(np.linalg.norm(self.weighted_velocity, axis=1)))
        return replace(vec, mass=speed / self.length)

    def class_reading(self) -> np.ndarray:
        """Class of the capped loop per unit leaf length."""
        return self.displacement / self.length


def _orbit(system: HolonomySystem, y0: float, count: int) -> np.ndarray:
    orbit = getattr(system.map, "orbit", None)
    if orbit is not None:
        return np.mod(orbit(np.array([y0]), np.arange(count))[0], 1.0)
    out = np.empty(count)
    y = np.array([y0], float)
    for j in range(count):
        out[j] = y[0]
        y = system.map(y)
    return out


def leaf_segment(solenoid: SuspensionSolenoid, y0: float, R: int, resolution: int = 64) -> LeafSegment:
    if R < 1:
        raise ValueError("R must be >= 1")
    tv = solenoid.transversal
    if not bool(tv.contains(y0)):
        raise ValueError(f"point not on transversal: {y0!r}")
    ys = _orbit(solenoid.system, float(y0), R + 1)
    bands = tv.locate(ys[:R])
    if np.any(bands < 0):
        raise ValueError("orbit left the transversal")
    dirs = np.stack([c.direction for c in solenoid.cycles])[solenoid.itinerary[bands]]
    theta0 = float(solenoid.angles(y0))
    core = solenoid.core
    theta = theta0 + np.arange(R) * core.advance
    pts, wv = core.piece_nodes(theta, dirs, resolution)
    offset = np.concatenate([np.zeros((1, solenoid.n)), np.cumsum(dirs, axis=0)[:-1]])
    pts = pts + offset[:, None, :]
    length = float(np.sum(np.linalg.norm(wv, axis=2)))
    total = np.sum(dirs, axis=0)
    start_pt = core.base + core.section(theta0)[0]
    end_pt = core.base + core.section(theta0 + R * core.advance)[0] + total
    cap = Segment(end_pt, wrap(start_pt - end_pt))
    # reversed orientation runs the same track backwards
    sign = float(solenoid.orientation)
    return LeafSegment(start=float(y0), returns=R, end=float(ys[R]), points=pts.reshape(-1, solenoid.n),
                       weighted_velocity=sign * wv.reshape(-1, solenoid.n), length=length, cap=cap,
                       displacement=sign * total.astype(float))


def default_start(solenoid: SuspensionSolenoid) -> float:
    """A transversal point at the measure median, off the gap endpoints."""
    return float(np.mod(solenoid.measure.quantile_lift(0.5 * solenoid.measure.total), 1.0))


def leaf_limit_experiment(solenoid: SuspensionSolenoid, y0: float | None, schedule: Sequence[int],
                          dictionary: Dictionary, resolution: int = 64, threads: int = 1) -> pd.DataFrame:
    """Weak distance between (l_R, f)/Vol and (S_mu, f) along an R schedule."""
    target = rs_current(solenoid, dictionary, resolution, threads)
    y0 = default_start(solenoid) if y0 is None else float(y0)

    def one(R: int) -> dict:
        seg = leaf_segment(solenoid, y0, int(R), resolution)
        vec = seg.current(dictionary)
        row = {"R": int(R), "leaf_length": seg.length, "cap_ratio": seg.cap_ratio,
               "weak_distance": weak_distance(vec, target), "mass": vec.mass}
        for i, v in enumerate(seg.class_reading()):
            row[f"class_{i}"] = float(v)
        _LOG.debug("leaf R=%d length=%.6g distance=%.3e", R, seg.length, row["weak_distance"])
        return row

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, schedule))
    else:
        rows = [one(R) for R in schedule]
    return pd.DataFrame(rows)

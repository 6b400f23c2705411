# solenoid_density/core/circle.py
from __future__ import annotations
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
import logging
import math
from typing import Callable, Sequence

import numpy as np

_LOG = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_EXACT_TOL = 4.0 * np.finfo(float).eps


# ---------- rotation numbers ----------
def continued_fraction(value: float, depth: int = 40, q_max: int = 10**6) -> list[Fraction]:
    """Convergents of the exact binary value, stopping at ``depth`` terms or once q > q_max."""
    x = Fraction(value)
    out: list[Fraction] = []
    p0, p1, q0, q1 = 0, 1, 1, 0
    for _ in range(depth):
        a = math.floor(x)
        p0, p1 = p1, a * p1 + p0
        q0, q1 = q1, a * q1 + q0
        if q1 > q_max:
            break
        out.append(Fraction(p1, q1))
        rest = x - a
        if rest == 0:
            break
        x = 1 / rest
    return out


@dataclass(frozen=True)
class RotationNumber:
    value: float
    convergents: tuple[Fraction, ...]

    @classmethod
    def from_value(cls, value: float, depth: int = 40, q_max: int = 10**6) -> "RotationNumber":
        value = float(value)
        if not 0.0 < value < 1.0:
            raise ValueError(f"rotation number must lie in (0, 1), got {value!r}")
        conv = tuple(continued_fraction(value, depth, q_max))
        exact = Fraction(value)
        for c in conv:
            if abs(exact - c) <= _EXACT_TOL:
                raise ValueError(f"rational rotation number: {value!r} equals {c} to working precision")
        return cls(value=value, convergents=conv)


def as_rotation_number(rho: RotationNumber | float) -> RotationNumber:
    return rho if isinstance(rho, RotationNumber) else RotationNumber.from_value(rho)


@dataclass(frozen=True)
class GapSchedule:
    lengths: dict[int, float]

    def __post_init__(self):
        if not self.lengths:
            raise ValueError("gap schedule is empty")
        if any(v <= 0.0 for v in self.lengths.values()):
            raise ValueError("gap lengths must be positive")
        if self.total >= 1.0:
            raise ValueError(f"gaps exhaust circle: total length {self.total!r} >= 1")

    @property
    def total(self) -> float:
        return float(math.fsum(self.lengths.values()))

    @property
    def range_n(self) -> int:
        return max(abs(n) for n in self.lengths)

    @classmethod
    def default(cls, range_n: int = 512, total: float = 0.5) -> "GapSchedule":
        """l_n proportional to 1/(n^2 + 4) for |n| <= range_n, scaled to ``total``."""
        raw = {n: 1.0 / (n * n + 4.0) for n in range(-range_n, range_n + 1)}
        c = total / math.fsum(raw.values())
        return cls({n: c * v for n, v in raw.items()})

    def ratio_condition(self, start: int = 2) -> bool:
        """l_{n+1}/l_n approaches 1 monotonically for |n| >= start, on both sides."""
        for sign in (1, -1):
            ns = [n for n in range(start, self.range_n) if sign * n in self.lengths and sign * (n + 1) in self.lengths]
            dev = [abs(1.0 - self.lengths[sign * (n + 1)] / self.lengths[sign * n]) for n in ns]
            if any(b > a + 1e-15 for a, b in zip(dev, dev[1:])):
                return False
        return True


# ---------- circle maps ----------
class CircleMap:
    """Degree-one monotone circle map given by a lift on the reals."""

    def lift(self, X):
        raise NotImplementedError

    def inverse_lift(self, X):
        raise NotImplementedError

    def __call__(self, x):
        return np.mod(self.lift(x), 1.0)

    def inverse(self, x):
        return np.mod(self.inverse_lift(x), 1.0)


@dataclass(frozen=True)
class RigidRotation(CircleMap):
    rho: float

    def lift(self, X):
        return np.asarray(X, float) + self.rho

    def inverse_lift(self, X):
        return np.asarray(X, float) - self.rho


@dataclass(frozen=True)
class IdentityMap(CircleMap):
    def lift(self, X):
        return np.asarray(X, float) + 0.0

    def inverse_lift(self, X):
        return np.asarray(X, float) + 0.0


@dataclass(frozen=True, eq=False)
class DenjoyMap(CircleMap):
    """
    Denjoy counterexample: the rigid rotation with the orbit points {n*rho}, |n| <= N,
    blown up into open gaps I_n. Gaps are stored sorted by position.

    The terminal gap I_N collapses onto the point that would carry I_{N+1};
    everywhere else h is strictly increasing.
    """
    rho: RotationNumber
    schedule: GapSchedule
    depth: int
    indices: np.ndarray     # orbit index n of each gap
    positions: np.ndarray   # p_n = {n rho}
    lengths: np.ndarray
    left: np.ndarray
    right: np.ndarray
    successor: np.ndarray   # slot of gap n+1, -1 for the terminal gap
    predecessor: np.ndarray  # slot of gap n-1, -1 for the initial gap
    cumulative: np.ndarray  # total gap length strictly before each slot (len m+1)

    def __post_init__(self):
        # python lists for the scalar fast path
        object.__setattr__(self, "_lists", (
            self.left.tolist(), self.right.tolist(), self.positions.tolist(),
            self.lengths.tolist(), self.cumulative.tolist(),
            self.successor.tolist(), self.predecessor.tolist(),
        ))

    @property
    def size(self) -> int:
        return int(self.positions.size)

    @property
    def cantor_length(self) -> float:
        return 1.0 - float(self.cumulative[-1])

    def slot_of(self, n: int) -> int:
        hits = np.nonzero(self.indices == n)[0]
        if not hits.size:
            raise KeyError(f"no gap with orbit index {n}")
        return int(hits[0])

    def gap(self, n: int) -> tuple[float, float]:
        s = self.slot_of(n)
        return float(self.left[s]), float(self.right[s])

    def gap_endpoints(self) -> np.ndarray:
        return np.concatenate([self.left, self.right])

    # --- semiconjugacy pi and its right inverse psi ---
    def _locate(self, x: np.ndarray):
        m = self.size
        k = np.searchsorted(self.right, x, side="right")
        kk = np.minimum(k, m - 1)
        in_gap = (k < m) & (x >= self.left[kk])
        at_right = (k > 0) & (x == self.right[np.maximum(k - 1, 0)])
        return k, kk, in_gap, at_right

    def in_gap(self, x) -> np.ndarray:
        """True strictly inside a gap (endpoints excluded)."""
        x = np.mod(np.asarray(x, float), 1.0)
        _, kk, in_gap, _ = self._locate(x)
        return in_gap & (x > self.left[kk])

    def project(self, x) -> np.ndarray:
        x = np.mod(np.asarray(x, float), 1.0)
        k, kk, in_gap, at_right = self._locate(x)
        theta = np.where(in_gap, self.positions[kk], (x - self.cumulative[k]) / self.cantor_length)
        return np.where(at_right, self.positions[np.maximum(k - 1, 0)], theta)

    def project_lift(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        base = np.floor(X)
        return base + self.project(X - base)

    def blowup(self, theta, side: str = "left") -> np.ndarray:
        theta = np.mod(np.asarray(theta, float), 1.0)
        j = np.searchsorted(self.positions, theta, side=side)
        return self.cantor_length * theta + self.cumulative[j]

    def blowup_lift(self, T, side: str = "left") -> np.ndarray:
        T = np.asarray(T, float)
        base = np.floor(T)
        return base + self.blowup(T - base, side=side)

    # --- the map ---
    def _step(self, X, forward: bool) -> np.ndarray:
        X = np.asarray(X, float)
        base = np.floor(X)
        x = X - base
        shift = self.rho.value if forward else -self.rho.value
        link = self.successor if forward else self.predecessor
        k, kk, in_gap, at_right = self._locate(x)
        theta = np.where(in_gap, self.positions[kk], (x - self.cumulative[k]) / self.cantor_length)
        slot = np.where(at_right, np.maximum(k - 1, 0), kk)
        theta = np.where(at_right, self.positions[slot], theta)
        target = theta + shift
        out = self.blowup_lift(target)

        on_gap = in_gap | at_right
        nxt = link[slot]
        nxt_safe = np.maximum(nxt, 0)
        t = np.where(at_right, 1.0, (x - self.left[kk]) / self.lengths[kk])
        wrap = np.round(target - self.positions[nxt_safe])
        gap_image = wrap + self.left[nxt_safe] + t * self.lengths[nxt_safe]
        out = np.where(on_gap & (nxt >= 0), gap_image, out)
        return base + out

    def lift(self, X):
        return self._step(X, True)

    def inverse_lift(self, X):
        return self._step(X, False)

    def _step_scalar(self, X: float) -> float:
        left, right, pos, lengths, cum, succ, _ = self._lists
        base = math.floor(X)
        x = X - base
        k = bisect_right(right, x)
        rho = self.rho.value
        slot = None
        if k < len(left) and x >= left[k]:
            slot, t = k, (x - left[k]) / lengths[k]
        elif k > 0 and x == right[k - 1]:
            slot, t = k - 1, 1.0
        if slot is not None:
            target = pos[slot] + rho
            nxt = succ[slot]
            if nxt >= 0:
                return base + round(target - pos[nxt]) + left[nxt] + t * lengths[nxt]
        else:
            target = (x - cum[k]) / self.cantor_length + rho
        fl = math.floor(target)
        theta = target - fl
        return base + fl + self.cantor_length * theta + cum[bisect_left(pos, theta)]

    def iterate_lift(self, X0: float, n: int) -> float:
        X = float(X0)
        for _ in range(n):
            X = self._step_scalar(X)
        return X

    def orbit(self, x, steps) -> np.ndarray:
        """h^j(x) for every start x and j in ``steps``, read off the rotation through pi."""
        theta = self.project(np.atleast_1d(np.asarray(x, float)))
        steps = np.asarray(steps, float)
        return self.blowup(theta[:, None] + steps[None, :] * self.rho.value)


def build_denjoy(rho: RotationNumber | float,
                 schedule: GapSchedule | None = None,
                 depth: int = 64) -> DenjoyMap:
    rho = as_rotation_number(rho)
    schedule = schedule if schedule is not None else GapSchedule.default()
    if schedule.total >= 1.0:
        raise ValueError(f"gaps exhaust circle: total length {schedule.total!r} >= 1")
    if depth < 0 or depth > schedule.range_n:
        raise ValueError(f"depth {depth} outside the schedule range {schedule.range_n}")

    ns = np.array(sorted(schedule.lengths), dtype=np.int64)
    ell = np.array([schedule.lengths[int(n)] for n in ns], float)
    pos = np.mod(ns.astype(float) * rho.value, 1.0)
    order = np.argsort(pos, kind="stable")
    ns, ell, pos = ns[order], ell[order], pos[order]
    if np.any(np.diff(pos) <= 0.0):
        raise ValueError("orbit points collide; rotation number is not irrational enough")

    cum = np.concatenate(([0.0], np.cumsum(ell)))
    cantor = 1.0 - cum[-1]
    left = cantor * pos + cum[:-1]
    right = left + ell

    slot = {int(n): i for i, n in enumerate(ns)}
    succ = np.array([slot.get(int(n) + 1, -1) for n in ns], dtype=np.int64)
    pred = np.array([slot.get(int(n) - 1, -1) for n in ns], dtype=np.int64)
    _LOG.debug("built Denjoy map rho=%.17g with %d gaps (total %.6f), depth %d",
               rho.value, ns.size, cum[-1], depth)
    return DenjoyMap(rho=rho, schedule=schedule, depth=depth, indices=ns, positions=pos,
                     lengths=ell, left=left, right=right, successor=succ, predecessor=pred,
                     cumulative=cum)


def rotation_number_estimate(circle_map: CircleMap, iterations: int, x0: float = 0.0) -> float:
    """(H^N(x0) - x0) / N for the lift H."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    fast = getattr(circle_map, "iterate_lift", None)
    if fast is not None:
        X = fast(x0, iterations)
    else:
        X = float(x0)
        for _ in range(iterations):
            X = float(circle_map.lift(X))
    return (X - x0) / iterations


def semiconjugacy_defect(h: DenjoyMap) -> float:
    """max over gap endpoints of the circle distance |pi(h(x)) - R_rho(pi(x))|."""
    x = h.gap_endpoints()
    d = h.project(h(x)) - np.mod(h.project(x) + h.rho.value, 1.0)
    return float(np.max(np.abs(d - np.round(d))))


# ---------- transversals and measures ----------
@dataclass(frozen=True, eq=False)
class CantorTransversal:
    """
    Closed arcs [lo, hi] in cyclic order. Coordinates are lifted: lo increases
    from lo[0] in [0, 1) and every hi stays below lo[0] + 1.
    """
    lo: np.ndarray
    hi: np.ndarray
    depth: int
    index: np.ndarray  # band ids in the parent transversal

    @property
    def size(self) -> int:
        return int(self.lo.size)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def midpoints(self) -> np.ndarray:
        return np.mod(0.5 * (self.lo + self.hi), 1.0)

    def _lifted(self, x) -> np.ndarray:
        x = np.mod(np.asarray(x, float), 1.0)
        return np.where(x < self.lo[0], x + 1.0, x)

    def locate(self, x) -> np.ndarray:
        """Band index containing x, -1 when x falls in a gap."""
        X = self._lifted(x)
        k = np.searchsorted(self.lo, X, side="right") - 1
        kk = np.maximum(k, 0)
        return np.where((k >= 0) & (X <= self.hi[kk]), kk, -1)

    def contains(self, x) -> np.ndarray:
        return self.locate(x) >= 0

    def subset(self, bands: Sequence[int] | np.ndarray) -> "CantorTransversal":
        bands = np.asarray(bands, dtype=np.int64)
        return CantorTransversal(self.lo[bands], self.hi[bands], self.depth, self.index[bands])

    def same_bands(self, other: "CantorTransversal") -> bool:
        return (self.size == other.size and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))


def denjoy_transversal(h: DenjoyMap, depth: int | None = None) -> CantorTransversal:
    """Components of the circle minus the gaps with |n| <= depth, starting after I_0."""
    depth = h.depth if depth is None else depth
    if depth > h.schedule.range_n:
        raise ValueError(f"depth {depth} exceeds the schedule range {h.schedule.range_n}")
    keep = np.nonzero(np.abs(h.indices) <= depth)[0]  # sorted by position, I_0 first
    lo = h.right[keep]
    hi = np.concatenate([h.left[keep[1:]], [1.0 + h.left[keep[0]]]])
    return CantorTransversal(lo=lo, hi=hi, depth=depth, index=np.arange(lo.size))


def uniform_transversal(count: int) -> CantorTransversal:
    """The whole circle cut into ``count`` equal closed arcs (degenerate transversal)."""
    edges = np.linspace(0.0, 1.0, count + 1)
    return CantorTransversal(lo=edges[:-1], hi=edges[1:], depth=0, index=np.arange(count))


@dataclass(frozen=True, eq=False)
class TransversalMeasure:
    """
    Band weights plus the distribution inside each band: the semiconjugacy of
    ``profile`` when given (Denjoy measure), uniform otherwise.
    """
    transversal: CantorTransversal
    weights: np.ndarray
    profile: DenjoyMap | None = None

    def __post_init__(self):
        if self.weights.shape != self.transversal.lo.shape:
            raise ValueError("one weight per band is required")
        if np.any(self.weights < 0.0):
            raise ValueError("band weights must be nonnegative")
        object.__setattr__(self, "_prefix", np.concatenate(([0.0], np.cumsum(self.weights))))

    @property
    def total(self) -> float:
        return float(self._prefix[-1])

    def _base(self, X):
        return self.profile.project_lift(X) if self.profile is not None else np.asarray(X, float)

    def _base_inv(self, T):
        return self.profile.blowup_lift(T) if self.profile is not None else np.asarray(T, float)

    def cdf_lift(self, X) -> np.ndarray:
        """Mass of the arc from the first band start to X, counting full turns."""
        tv = self.transversal
        X = np.asarray(X, float)
        turns = np.floor(X - tv.lo[0])
        Y = X - turns
        k = np.clip(np.searchsorted(tv.lo, Y, side="right") - 1, 0, tv.size - 1)
        lo, hi = tv.lo[k], tv.hi[k]
        b_lo, b_hi = self._base(lo), self._base(hi)
        span = b_hi - b_lo
        u = np.where(span > 0.0, (self._base(np.minimum(Y, hi)) - b_lo) / np.where(span > 0.0, span, 1.0), 1.0)
        inside = self._prefix[k] + self.weights[k] * np.clip(u, 0.0, 1.0)
        return turns * self.total + inside

    def quantile_lift(self, C) -> np.ndarray:
        tv = self.transversal
        C = np.asarray(C, float)
        turns = np.floor(C / self.total)
        c = C - turns * self.total
        k = np.clip(np.searchsorted(self._prefix, c, side="right") - 1, 0, tv.size - 1)
        w = self.weights[k]
        u = np.clip(np.where(w > 0.0, (c - self._prefix[k]) / np.where(w > 0.0, w, 1.0), 0.0), 0.0, 1.0)
        lo, hi = tv.lo[k], tv.hi[k]
        b_lo, b_hi = self._base(lo), self._base(hi)
        X = self._base_inv(b_lo + u * (b_hi - b_lo))
        X = np.where(u <= 0.0, lo, np.where(u >= 1.0, hi, np.clip(X, lo, hi)))
        return turns + X

    def arc_mass(self, X0, X1) -> np.ndarray:
        return self.cdf_lift(X1) - self.cdf_lift(X0)

    def restrict(self, piece: CantorTransversal) -> "TransversalMeasure":
        return TransversalMeasure(piece, self._arc_weights(piece), self.profile)

    def _arc_weights(self, piece: CantorTransversal) -> np.ndarray:
        lo = piece.lo
        shift = np.floor(lo - self.transversal.lo[0])
        return np.maximum(self.arc_mass(lo - shift, piece.hi - shift), 0.0)

    def scaled(self, factor: float) -> "TransversalMeasure":
        return TransversalMeasure(self.transversal, self.weights * float(factor), self.profile)

    def normalized(self) -> "TransversalMeasure":
        return self.scaled(1.0 / self.total)

    def set_mass(self, bands: np.ndarray) -> float:
        """Measure of a band-algebra set given as a boolean mask or index list."""
        return float(np.sum(self.weights[np.asarray(bands)]))


def invariant_measure(h: DenjoyMap, depth: int | None = None) -> TransversalMeasure:
    tv = denjoy_transversal(h, depth)
    weights = h.project_lift(tv.hi) - h.project_lift(tv.lo)
    return TransversalMeasure(tv, weights, profile=h)


@dataclass(frozen=True, eq=False)
class HolonomySystem:
    transversal: CantorTransversal
    map: CircleMap
    measure: TransversalMeasure


def denjoy_system(h: DenjoyMap, depth: int | None = None) -> HolonomySystem:
    m = invariant_measure(h, depth)
    return HolonomySystem(m.transversal, h, m)


def invariance_defect(system: HolonomySystem) -> float:
    """max over bands B of |mu(h^-1 B) - mu(B)|."""
    tv, m = system.transversal, system.measure
    a = system.map.inverse_lift(tv.lo)
    b = system.map.inverse_lift(tv.hi)
    shift = np.floor(a - tv.lo[0])
    return float(np.max(np.abs(m.arc_mass(a - shift, b - shift) - m.weights)))


# ---------- Birkhoff diagnostics ----------
def band_indicators(transversal: CantorTransversal, count: int) -> list[Callable[[np.ndarray], np.ndarray]]:
    """Indicators of ``count`` cyclic chunks of consecutive bands."""
    groups = np.array_split(np.arange(transversal.size), count)
    out = []
    for g in groups:
        mask = np.zeros(transversal.size + 1, dtype=bool)
        mask[g] = True

        def indicator(x, _mask=mask):
            return _mask[transversal.locate(x)].astype(float)  # locate -1 hits the trailing False
        indicator.bands = g
        out.append(indicator)
    return out


def sample_starts(system: HolonomySystem, count: int) -> np.ndarray:
    """Points at evenly spaced measure quantiles, off the orbit points."""
    c = (np.arange(count) + 0.5) / count * system.measure.total
    return np.mod(system.measure.quantile_lift(c), 1.0)


def birkhoff_averages(system: HolonomySystem, observables: Sequence[Callable], start, N: int,
                      block: int = 4096) -> np.ndarray:
    """Matrix (observable, start) of (1/N) sum_{j<N} f(h^j(start))."""
    if N < 1:
        raise ValueError("N must be >= 1")
    x = np.atleast_1d(np.asarray(start, float))
    if not np.all(system.transversal.contains(x)):
        raise ValueError("point not on transversal")
    sums = np.zeros((len(observables), x.size))
    fast = reduced_map(system.map)
    orbit = getattr(fast, "orbit", None)
    in_gap = getattr(fast, "in_gap", None)
    if orbit is not None and in_gap is not None and not np.any(in_gap(x)):
        for j0 in range(0, N, block):
            pts = orbit(x, np.arange(j0, min(N, j0 + block)))
            for i, f in enumerate(observables):
                sums[i] += f(pts.ravel()).reshape(pts.shape).sum(axis=1)
    else:
        for _ in range(N):
            for i, f in enumerate(observables):
                sums[i] += f(x)
            x = system.map(x)
    return sums / N


def birkhoff_average(system: HolonomySystem, observable: Callable, start, N: int):
    avg = birkhoff_averages(system, [observable], start, N)[0]
    return float(avg[0]) if np.ndim(start) == 0 else avg


def birkhoff_spread(system: HolonomySystem, observables: Sequence[Callable], starts, N: int) -> float:
    """Largest spread across start points of the Birkhoff averages (uniform convergence proxy)."""
    avg = birkhoff_averages(system, observables, starts, N)
    return float(np.max(avg.max(axis=1) - avg.min(axis=1)))


# ---------- partitions and transport ----------
def partition_by_mass(measure: TransversalMeasure, masses: Sequence[float], r: int | None = None,
                      exact: bool = False) -> list[CantorTransversal]:
    """
    Cut the transversal into len(masses) cyclic chunks K_i with mu(K_i)/mu(K) ~ lambda_i.
    By default cuts fall on band boundaries; ``exact`` splits bands at measure quantiles.
    """
    lam = np.asarray(masses, float)
    r = lam.size if r is None else int(r)
    if r != lam.size:
        raise ValueError(f"r={r} does not match {lam.size} masses")
    if np.any(lam <= 0.0):
        raise ValueError("masses must be positive")
    if abs(lam.sum() - 1.0) > 1e-9:
        raise ValueError(f"masses do not sum to 1 (sum={lam.sum()!r})")
    tv = measure.transversal
    targets = np.cumsum(lam)[:-1] * measure.total

    if not exact:
        if r > tv.size:
            raise ValueError(f"cannot cut {tv.size} bands into {r} chunks")
        prefix = measure._prefix
        cuts = [0]
        for i, t in enumerate(targets, start=1):
            c = int(np.argmin(np.abs(prefix - t)))
            c = min(max(c, cuts[-1] + 1), tv.size - (r - i))
            cuts.append(c)
        cuts.append(tv.size)
        return [tv.subset(np.arange(a, b)) for a, b in zip(cuts[:-1], cuts[1:])]

    lo, hi, idx = list(tv.lo), list(tv.hi), list(tv.index)
    for X in measure.quantile_lift(targets):
        k = int(np.searchsorted(lo, X, side="right") - 1)
        if lo[k] < X < hi[k]:
            lo.insert(k + 1, float(X))
            hi.insert(k, float(X))
            idx.insert(k, idx[k])
    lo_a, hi_a, idx_a = np.array(lo), np.array(hi), np.array(idx, dtype=np.int64)
    start_mass = measure.cdf_lift(lo_a) - measure.cdf_lift(tv.lo[0])
    owner = np.searchsorted(targets, start_mass + 1e-12 * measure.total, side="right")
    pieces = []
    for i in range(r):
        sel = owner == i
        pieces.append(CantorTransversal(lo_a[sel], hi_a[sel], tv.depth, idx_a[sel]))
    return pieces


def partition_residual(measure: TransversalMeasure, pieces: Sequence[CantorTransversal],
                       masses: Sequence[float]) -> float:
    got = np.array([measure.restrict(p).total for p in pieces]) / measure.total
    return float(np.max(np.abs(got - np.asarray(masses, float))))


@dataclass(frozen=True, eq=False)
class TransportMap(CircleMap):
    """Order-preserving map matching cumulative measures: G_target^-1 o F_source."""
    source: TransversalMeasure
    target: TransversalMeasure

    def lift(self, X):
        return self.target.quantile_lift(self.source.cdf_lift(X))

    def inverse_lift(self, X):
        return self.source.quantile_lift(self.target.cdf_lift(X))


def transport_map(source: TransversalMeasure, target: TransversalMeasure, tol: float = 1e-12) -> TransportMap:
    if abs(source.total - target.total) > tol * max(1.0, source.total):
        raise ValueError(f"mass mismatch: {source.total!r} vs {target.total!r}")
    return TransportMap(source, target)


def pushforward_defect(phi: TransportMap) -> float:
    """max over target bands B of |mu_source(phi^-1 B) - mu_target(B)|."""
    tv = phi.target.transversal
    a = phi.inverse_lift(tv.lo)
    b = phi.inverse_lift(tv.hi)
    return float(np.max(np.abs(phi.source.arc_mass(a, b) - phi.target.weights)))


@dataclass(frozen=True, eq=False)
class ComposedHolonomy(CircleMap):
    """h = phi^-1 o h2 o phi o h1, the patch acting where h1 lands in phi's domain."""
    h1: CircleMap
    h2: CircleMap
    phi: TransportMap

    def lift(self, X):
        Y = np.asarray(self.h1.lift(X), float)
        y = np.mod(Y, 1.0)
        inside = self.phi.source.transversal.contains(y)
        z = np.mod(self.phi.inverse_lift(self.h2.lift(self.phi.lift(y))), 1.0)
        return np.where(inside, np.floor(Y) + z, Y)

    def inverse_lift(self, X):
        X = np.asarray(X, float)
        x = np.mod(X, 1.0)
        inside = self.phi.source.transversal.contains(x)
        z = np.mod(self.phi.inverse_lift(self.h2.inverse_lift(self.phi.lift(x))), 1.0)
        return self.h1.inverse_lift(np.where(inside, np.floor(X) + z, X))


def compose_holonomy(h1: HolonomySystem, h2: HolonomySystem, phi: TransportMap) -> HolonomySystem:
    if not phi.target.transversal.same_bands(h2.transversal):
        raise ValueError("domain mismatch: transport target is not the second transversal")
    if not np.all(h1.transversal.contains(phi.source.transversal.midpoints())):
        raise ValueError("domain mismatch: transport source is not inside the first transversal")
    return HolonomySystem(h1.transversal, ComposedHolonomy(h1.map, h2.map, phi), h1.measure)


def window(measure: TransversalMeasure, c0: float, c1: float) -> CantorTransversal:
    """Sub-transversal holding the measure between cumulative masses c0 < c1, bands cut at quantiles."""
    total = measure.total
    if not (0.0 <= c0 < c1 <= total * (1.0 + 1e-12)):
        raise ValueError(f"window [{c0!r}, {c1!r}] outside transversal mass {total!r}")
    tv = measure.transversal
    X0 = float(measure.quantile_lift(c0))
    X1 = float(tv.hi[-1]) if c1 >= total else float(measure.quantile_lift(c1))
    sel = (tv.lo < X1) & (tv.hi > X0)
    lo = np.maximum(tv.lo[sel], X0)
    hi = np.minimum(tv.hi[sel], X1)
    keep = hi > lo
    return CantorTransversal(lo[keep], hi[keep], tv.depth, tv.index[sel][keep])


def reduced_map(circle_map: CircleMap) -> CircleMap:
    """
    Strip glued patches whose guest holonomy is the identity. On the support of
    the source measure phi^-1 o id o phi is the identity, so such a patch acts
    as its host there; orbits of points off the gaps are unchanged.
    """
    while isinstance(circle_map, ComposedHolonomy) and isinstance(circle_map.h2, IdentityMap):
        circle_map = circle_map.h1
    return circle_map

# solenoid_density/core/forms.py
from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, product
import logging
import math
from typing import Callable, Literal, Sequence

import numpy as np

_LOG = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
EntryFlag = Literal["closed", "exact", "general"]


def as_points(pts, n: int) -> np.ndarray:
    pts = np.asarray(pts, float)
    if pts.ndim == 1:
        pts = pts.reshape(1, n) if pts.size == n else pts.reshape(-1, n)
    return pts


def wrap(d):
    """Shortest representative of a torus displacement, componentwise in [-1/2, 1/2)."""
    d = np.asarray(d, float)
    return d - np.floor(d + 0.5)


# ---------- boxes ----------
@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.hi, float) - np.asarray(self.lo, float)

    @property
    def volume(self) -> float:
        return float(np.prod(np.minimum(self.widths, 1.0)))

    def expanded(self, margin: float) -> "Box":
        return Box(tuple(a - margin for a in self.lo), tuple(b + margin for b in self.hi))

    def contains(self, pts) -> np.ndarray:
        pts = as_points(pts, self.n)
        w = self.widths
        rel = np.mod(pts - np.asarray(self.lo, float), 1.0)
        return np.all((w >= 1.0) | (rel <= w), axis=1)

    @classmethod
    def whole(cls, n: int) -> "Box":
        return cls((0.0,) * n, (1.0,) * n)


# ---------- smooth functions ----------
class SmoothFunction:
    """Function on T^n evaluated on point arrays of shape (m, n); support None means global."""
    n: int
    support: Box | None = None

    def __call__(self, pts) -> np.ndarray:
        raise NotImplementedError

    def grad(self, pts) -> np.ndarray:
        return fd_gradient(self, pts)

    def partial(self, j: int) -> "SmoothFunction":
        return PartialFunction(self, j)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return LinearCombination(self.n, ((float(other), self),))
        return ProductFunction(self.n, (self, other))

    __rmul__ = __mul__

    def __add__(self, other: "SmoothFunction"):
        return LinearCombination(self.n, ((1.0, self), (1.0, other)))

    def __neg__(self):
        return LinearCombination(self.n, ((-1.0, self),))

    def __sub__(self, other: "SmoothFunction"):
        return LinearCombination(self.n, ((1.0, self), (-1.0, other)))


def fd_gradient(f: Callable, pts, step: float = 1e-6) -> np.ndarray:
    pts = as_points(pts, f.n)
    out = np.empty_like(pts)
    for j in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[j] = step
        out[:, j] = (f(pts + e) - f(pts - e)) / (2.0 * step)
    return out


def gradient_defect(f: SmoothFunction, pts, step: float = 1e-5) -> float:
    """max |grad f - central differences| over the given points."""
    return float(np.max(np.abs(f.grad(pts) - fd_gradient(f, pts, step))))


@dataclass(frozen=True, eq=False)
class FieldFunction(SmoothFunction):
    n: int
    value_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray] | None = None
    support: Box | None = None

    def __call__(self, pts):
        return np.asarray(self.value_fn(as_points(pts, self.n)), float)

    def grad(self, pts):
        if self.grad_fn is None:
            return fd_gradient(self, pts)
        return np.asarray(self.grad_fn(as_points(pts, self.n)), float)


@dataclass(frozen=True, eq=False)
class PartialFunction(SmoothFunction):
    base: SmoothFunction
    axis: int

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def support(self):
        return self.base.support

    def __call__(self, pts):
        return self.base.grad(pts)[:, self.axis]


@dataclass(frozen=True, eq=False)
class LinearCombination(SmoothFunction):
    n: int
    terms: tuple[tuple[float, SmoothFunction], ...]

    @property
    def support(self):
        return None

    def __call__(self, pts):
        pts = as_points(pts, self.n)
        out = np.zeros(pts.shape[0])
        for c, f in self.terms:
            out += c * f(pts)
        return out

    def grad(self, pts):
        pts = as_points(pts, self.n)
        out = np.zeros_like(pts)
        for c, f in self.terms:
            out += c * f.grad(pts)
        return out


@dataclass(frozen=True, eq=False)
class ProductFunction(SmoothFunction):
    n: int
    factors: tuple[SmoothFunction, ...]

    @property
    def support(self):
        # any factor's support contains the product's
        return next((f.support for f in self.factors if f.support is not None), None)

    def __call__(self, pts):
        pts = as_points(pts, self.n)
        out = np.ones(pts.shape[0])
        for f in self.factors:
            out *= f(pts)
        return out

    def grad(self, pts):
        pts = as_points(pts, self.n)
        vals = [f(pts) for f in self.factors]
        out = np.zeros_like(pts)
        for i, f in enumerate(self.factors):
            others = np.ones(pts.shape[0])
            for j, v in enumerate(vals):
                if j != i:
                    others *= v
            out += others[:, None] * f.grad(pts)
        return out


# ---------- trigonometric polynomials ----------
@dataclass(frozen=True, eq=False)
class TrigPoly(SmoothFunction):
    """
    Real trigonometric polynomial stored as conjugate-symmetric complex
    coefficients: f(x) = sum_k c_k exp(2 pi i k.x).
    """
    n: int
    coeffs: dict[tuple[int, ...], complex] = field(default_factory=dict)

    @classmethod
    def constant(cls, n: int, c: float) -> "TrigPoly":
        return cls(n, {(0,) * n: complex(c)} if c else {})

    @classmethod
    def monomial(cls, n: int, factors: Sequence[tuple[str, int]], scale: float = 1.0) -> "TrigPoly":
        """Product over axes of cos(2 pi k x_i) ('c', k) or sin(2 pi k x_i) ('s', k)."""
        if len(factors) != n:
            raise ValueError(f"expected {n} axis factors, got {len(factors)}")
        table: dict[tuple[int, ...], complex] = {(): complex(scale)}
        for kind, k in factors:
            if kind == "c":
                axis = {(k,): 0.5, (-k,): 0.5} if k else {(0,): 1.0}
            elif kind == "s":
                if k == 0:
                    return cls(n, {})
                axis = {(k,): -0.5j, (-k,): 0.5j}
            else:
                raise ValueError(f"unknown trig factor {kind!r}")
            nxt: dict[tuple[int, ...], complex] = {}
            for key, c in table.items():
                for ak, ac in axis.items():
                    nxt[key + ak] = nxt.get(key + ak, 0.0) + c * ac
            table = nxt
        return cls(n, table)

    @property
    def degree(self) -> int:
        return max((max(abs(k) for k in key) for key in self.coeffs), default=0)

    def _arrays(self):
        keys = np.array(list(self.coeffs), dtype=float).reshape(-1, self.n)
        vals = np.array(list(self.coeffs.values()), dtype=complex)
        return keys, vals

    def __call__(self, pts):
        pts = as_points(pts, self.n)
        if not self.coeffs:
            return np.zeros(pts.shape[0])
        keys, vals = self._arrays()
        return (np.exp(1j * TWO_PI * (pts @ keys.T)) @ vals).real

    def grad(self, pts):
        pts = as_points(pts, self.n)
        if not self.coeffs:
            return np.zeros_like(pts)
        keys, vals = self._arrays()
        phase = np.exp(1j * TWO_PI * (pts @ keys.T))
        return np.stack([(phase @ (vals * (1j * TWO_PI * keys[:, j]))).real for j in range(self.n)], axis=1)

    def partial(self, j: int) -> "TrigPoly":
        out = {k: c * (1j * TWO_PI * k[j]) for k, c in self.coeffs.items() if k[j] != 0}
        return TrigPoly(self.n, out)

    def pruned(self, tol: float = 1e-14) -> "TrigPoly":
        return TrigPoly(self.n, {k: c for k, c in self.coeffs.items() if abs(c) > tol})

    def max_coefficient(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return TrigPoly(self.n, {k: c * other for k, c in self.coeffs.items()})
        if not isinstance(other, TrigPoly):
            return ProductFunction(self.n, (self, other))
        out: dict[tuple[int, ...], complex] = {}
        for ka, ca in self.coeffs.items():
            for kb, cb in other.coeffs.items():
                key = tuple(a + b for a, b in zip(ka, kb))
                out[key] = out.get(key, 0.0) + ca * cb
        return TrigPoly(self.n, out)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, TrigPoly):
            return SmoothFunction.__add__(self, other)
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, 0.0) + c
        return TrigPoly(self.n, out)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def table(self) -> list[list[float]]:
        """Coefficient table rows [k_1..k_n, re, im], sorted by frequency."""
        return [list(k) + [c.real, c.imag] for k, c in sorted(self.coeffs.items())]

    @classmethod
    def from_table(cls, n: int, rows: Sequence[Sequence[float]]) -> "TrigPoly":
        return cls(n, {tuple(int(v) for v in r[:n]): complex(r[n], r[n + 1]) for r in rows})


def trig_monomials(n: int, D: int) -> list[tuple[tuple[str, int], ...]]:
    """Every non-constant product of per-axis factors 1, cos(2 pi m x), sin(2 pi m x), m <= D."""
    axis = [("c", 0)] + [(kind, m) for m in range(1, D + 1) for kind in ("c", "s")]
    return [f for f in product(axis, repeat=n) if any(k for _, k in f)]


def monomial_label(factors: Sequence[tuple[str, int]]) -> str:
    names = "xyz"
    parts = [f"{'cos' if kind == 'c' else 'sin'}{k}{names[i]}" for i, (kind, k) in enumerate(factors) if k]
    return "*".join(parts) or "1"


# ---------- bumps and partitions of unity ----------
def _f(u):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(u > 0.0, np.exp(-1.0 / np.where(u > 0.0, u, 1.0)), 0.0)


def _df(u):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        safe = np.where(u > 0.0, u, 1.0)
        return np.where(u > 0.0, np.exp(-1.0 / safe - 2.0 * np.log(safe)), 0.0)


def smooth_step(u):
    """
    C-infinity step: 0 for u <= 0, 1 for u >= 1, built as f(u) / (f(u) + f(1 - u))
    with f(u) = exp(-1/u). This replaces the exp(-1/(1 - t^2)) mollifier: bumps
    are products of these steps, so they stay smooth and compactly supported
    while being exactly 1 on the plateau box.
    """
    u = np.asarray(u, float)
    a, b = _f(u), _f(1.0 - u)
    return a / (a + b)


def smooth_step_derivative(u):
    u = np.asarray(u, float)
    a, b = _f(u), _f(1.0 - u)
    da, db = _df(u), _df(1.0 - u)
    return (da * b + a * db) / (a + b) ** 2


@dataclass(frozen=True, eq=False)
class BumpFunction(SmoothFunction):
    """Product of per-axis smooth plateaus: 1 on ``box``, 0 outside ``box`` expanded by ``margin``."""
    box: Box
    margin: float

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def support(self) -> Box:
        return self.box.expanded(self.margin)

    def _axis(self, pts):
        lo = np.asarray(self.box.lo, float)
        hi = np.asarray(self.box.hi, float)
        full = (hi - lo) >= 1.0
        d = wrap(pts - 0.5 * (lo + hi))
        t = np.abs(d) - 0.5 * (hi - lo)
        u = 1.0 - t / self.margin
        vals = np.where(full, 1.0, smooth_step(u))
        ders = np.where(full, 0.0, -smooth_step_derivative(u) * np.sign(d) / self.margin)
        return vals, ders

    def __call__(self, pts):
        vals, _ = self._axis(as_points(pts, self.n))
        return np.prod(vals, axis=1)

    def grad(self, pts):
        vals, ders = self._axis(as_points(pts, self.n))
        out = np.empty_like(vals)
        for j in range(self.n):
            others = np.prod(np.delete(vals, j, axis=1), axis=1)
            out[:, j] = ders[:, j] * others
        return out


def bump(box: Box, margin: float) -> BumpFunction:
    if margin <= 0.0:
        raise ValueError(f"margin must be positive, got {margin!r}")
    w = box.widths
    if np.any(w < 0.0):
        raise ValueError("box has negative width")
    if np.any((w < 1.0) & (w + 2.0 * margin >= 1.0)):
        raise ValueError("box plus margin does not fit in a chart")
    return BumpFunction(box, float(margin))


def _grid(n: int, resolution: int) -> np.ndarray:
    axis = np.arange(resolution) / resolution
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class PartitionFunction(SmoothFunction):
    """bumps[index] / sum(bumps)."""
    bumps: tuple[BumpFunction, ...]
    index: int

    @property
    def n(self) -> int:
        return self.bumps[0].n

    @property
    def support(self) -> Box:
        return self.bumps[self.index].support

    def __call__(self, pts):
        pts = as_points(pts, self.n)
        total = sum(b(pts) for b in self.bumps)
        return self.bumps[self.index](pts) / total

    def grad(self, pts):
        pts = as_points(pts, self.n)
        total = sum(b(pts) for b in self.bumps)
        dtotal = sum(b.grad(pts) for b in self.bumps)
        mine = self.bumps[self.index]
        return (mine.grad(pts) * total[:, None] - mine(pts)[:, None] * dtotal) / (total ** 2)[:, None]


def partition_of_unity(cover: Sequence[Box], margin: float = 0.05,
                       check_resolution: int | None = None) -> list[PartitionFunction]:
    if not cover:
        raise ValueError("not a cover: no boxes")
    n = cover[0].n
    bumps = tuple(bump(b, margin) for b in cover)
    res = check_resolution or (100 if n <= 2 else 22)
    grid = _grid(n, res)
    inside = np.zeros(grid.shape[0], dtype=bool)
    for b in cover:
        inside |= b.contains(grid)
    if not np.all(inside):
        raise ValueError(f"not a cover: {int(np.sum(~inside))} verification points left uncovered")
    return [PartitionFunction(bumps, i) for i in range(len(cover))]


def grid_cover(n: int, cells: int) -> list[Box]:
    """cells^n equal closed boxes tiling T^n."""
    edges = np.linspace(0.0, 1.0, cells + 1)
    out = []
    for idx in product(range(cells), repeat=n):
        out.append(Box(tuple(float(edges[i]) for i in idx), tuple(float(edges[i + 1]) for i in idx)))
    return out


# ---------- k-forms ----------
def _sign_of_merge(a: tuple[int, ...], b: tuple[int, ...]) -> int:
    """Parity of the permutation sorting a + b (both sorted, disjoint)."""
    inversions = sum(1 for x in a for y in b if x > y)
    return -1 if inversions % 2 else 1


@dataclass(frozen=True, eq=False)
class KForm:
    n: int
    degree: int
    components: dict[tuple[int, ...], SmoothFunction]

    def __post_init__(self):
        for key in self.components:
            if len(key) != self.degree or list(key) != sorted(set(key)) or any(i >= self.n for i in key):
                raise ValueError(f"bad multi-index {key} for a {self.degree}-form on T^{self.n}")

    @classmethod
    def basis(cls, n: int, index: Sequence[int], coefficient: SmoothFunction | None = None) -> "KForm":
        key = tuple(sorted(index))
        coef = coefficient if coefficient is not None else TrigPoly.constant(n, 1.0)
        return cls(n, len(key), {key: coef})

    @classmethod
    def function(cls, f: SmoothFunction) -> "KForm":
        return cls(f.n, 0, {(): f})

    @classmethod
    def one_form(cls, coefficients: Sequence[SmoothFunction]) -> "KForm":
        n = len(coefficients)
        return cls(n, 1, {(i,): c for i, c in enumerate(coefficients)})

    def index_set(self) -> list[tuple[int, ...]]:
        return list(combinations(range(self.n), self.degree))

    def coefficients(self, pts) -> np.ndarray:
        """(m, C(n, k)) coefficient array in lexicographic multi-index order."""
        pts = as_points(pts, self.n)
        keys = self.index_set()
        out = np.zeros((pts.shape[0], len(keys)))
        for j, key in enumerate(keys):
            f = self.components.get(key)
            if f is not None:
                out[:, j] = f(pts)
        return out

    def is_trig(self) -> bool:
        return all(isinstance(f, TrigPoly) for f in self.components.values())

    def scaled(self, c: float) -> "KForm":
        return KForm(self.n, self.degree, {k: f * float(c) for k, f in self.components.items()})

    def __add__(self, other: "KForm") -> "KForm":
        if (self.n, self.degree) != (other.n, other.degree):
            raise ValueError("cannot add forms of different type")
        out = dict(self.components)
        for k, f in other.components.items():
            out[k] = out[k] + f if k in out else f
        return KForm(self.n, self.degree, out)

    def __neg__(self):
        return self.scaled(-1.0)


def exterior_derivative(form: KForm) -> KForm:
    if form.degree >= form.n:
        raise ValueError(f"top degree: cannot differentiate a {form.degree}-form on T^{form.n}")
    acc: dict[tuple[int, ...], list[tuple[int, SmoothFunction]]] = {}
    for key, f in form.components.items():
        for j in range(form.n):
            if j in key:
                continue
            target = tuple(sorted(key + (j,)))
            sign = -1 if sum(1 for i in key if i < j) % 2 else 1
            acc.setdefault(target, []).append((sign, f.partial(j)))
    out: dict[tuple[int, ...], SmoothFunction] = {}
    for target, terms in acc.items():
        if all(isinstance(t, TrigPoly) for _, t in terms):
            total = TrigPoly(form.n, {})
            for s, t in terms:
                total = total + (t if s > 0 else -t)
            out[target] = total.pruned(0.0)
        else:
            out[target] = LinearCombination(form.n, tuple((float(s), t) for s, t in terms))
    return KForm(form.n, form.degree + 1, out)


def wedge(a: KForm, b: KForm) -> KForm:
    if a.n != b.n:
        raise ValueError("forms live on different tori")
    if a.degree + b.degree > a.n:
        raise ValueError(f"degree overflow: {a.degree} + {b.degree} > {a.n}")
    out: dict[tuple[int, ...], SmoothFunction] = {}
    for ka, fa in a.components.items():
        for kb, fb in b.components.items():
            if set(ka) & set(kb):
                continue
            key = tuple(sorted(ka + kb))
            term = fa * fb
            if _sign_of_merge(ka, kb) < 0:
                term = -term
            out[key] = out[key] + term if key in out else term
    return KForm(a.n, a.degree + b.degree, out)


def integrate_torus(form: KForm, resolution: int = 256) -> float:
    """Composite trapezoid (periodic midpoint-free grid) over T^n; exact for trig degree < resolution/2."""
    if form.degree != form.n:
        raise ValueError(f"top degree required, got a {form.degree}-form on T^{form.n}")
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    key = tuple(range(form.n))
    f = form.components.get(key)
    if f is None:
        return 0.0
    if isinstance(f, TrigPoly) and 2 * f.degree < resolution:
        return float(f.coeffs.get((0,) * form.n, 0.0).real)
    return float(np.mean(f(_grid(form.n, resolution))))


def sup_norm(form: KForm, resolution: int = 64) -> float:
    if not form.components:
        return 0.0
    return float(np.max(np.abs(form.coefficients(_grid(form.n, resolution)))))


# ---------- curves ----------
_GAUSS_T, _GAUSS_W = np.polynomial.legendre.leggauss(3)


def gauss_nodes(t0: float, t1: float, pieces: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite 3-point Gauss-Legendre nodes and weights on [t0, t1]."""
    edges = np.linspace(t0, t1, pieces + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = (mid[:, None] + half[:, None] * _GAUSS_T[None, :]).ravel()
    w = (half[:, None] * _GAUSS_W[None, :]).ravel()
    return t, w


class Curve:
    """Piecewise-C1 path; ``nodes`` returns quadrature points and weight-times-velocity rows."""

    def nodes(self, resolution: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def length(self, resolution: int = 64) -> float:
        _, wv = self.nodes(resolution)
        return float(np.sum(np.linalg.norm(wv, axis=1)))


@dataclass(frozen=True, eq=False)
class Segment(Curve):
    start: np.ndarray
    delta: np.ndarray

    @property
    def end(self) -> np.ndarray:
        return self.start + self.delta

    def nodes(self, resolution):
        pieces = max(1, math.ceil(resolution * float(np.linalg.norm(self.delta))))
        t, w = gauss_nodes(0.0, 1.0, pieces)
        return self.start[None, :] + t[:, None] * self.delta[None, :], w[:, None] * self.delta[None, :]

    def length(self, resolution: int = 64) -> float:
        return float(np.linalg.norm(self.delta))


@dataclass(frozen=True, eq=False)
class ParametricArc(Curve):
    point: Callable[[np.ndarray], np.ndarray]
    velocity: Callable[[np.ndarray], np.ndarray]
    length_hint: float = 1.0
    t0: float = 0.0
    t1: float = 1.0

    def nodes(self, resolution):
        pieces = max(1, math.ceil(resolution * self.length_hint))
        t, w = gauss_nodes(self.t0, self.t1, pieces)
        return self.point(t), w[:, None] * self.velocity(t)


@dataclass(frozen=True, eq=False)
class Path(Curve):
    pieces: tuple[Curve, ...]

    def nodes(self, resolution):
        parts = [p.nodes(resolution) for p in self.pieces]
        return np.concatenate([p for p, _ in parts]), np.concatenate([v for _, v in parts])


@dataclass(frozen=True, eq=False)
class Polyline(Curve):
    """Torus polyline; consecutive vertices joined along the shortest displacement."""
    vertices: np.ndarray
    closed: bool = True

    def segments(self) -> list[Segment]:
        v = self.vertices
        ends = np.roll(v, -1, axis=0) if self.closed else v[1:]
        starts = v if self.closed else v[:-1]
        return [Segment(a, wrap(b - a)) for a, b in zip(starts, ends)]

    def nodes(self, resolution):
        starts = self.vertices if self.closed else self.vertices[:-1]
        ends = np.roll(self.vertices, -1, axis=0) if self.closed else self.vertices[1:]
        delta = wrap(ends - starts)
        t = 0.5 * (_GAUSS_T + 1.0)
        w = 0.5 * _GAUSS_W
        pts = (starts[:, None, :] + t[None, :, None] * delta[:, None, :]).reshape(-1, starts.shape[1])
        wv = (w[None, :, None] * delta[:, None, :]).reshape(-1, starts.shape[1])
        return pts, wv

    def length(self, resolution: int = 64) -> float:
        starts = self.vertices if self.closed else self.vertices[:-1]
        ends = np.roll(self.vertices, -1, axis=0) if self.closed else self.vertices[1:]
        return float(np.sum(np.linalg.norm(wrap(ends - starts), axis=1)))

    def reversed(self) -> "Polyline":
        return Polyline(self.vertices[::-1].copy(), self.closed)


def pair_nodes(form: KForm, pts: np.ndarray, wv: np.ndarray) -> float:
    """sum over nodes of omega(p)(weighted velocity) for a 1-form."""
    return float(np.sum(form.coefficients(pts) * wv))


def line_integral(curve: Curve, form: KForm, resolution: int = 64) -> float:
    if form.degree != 1:
        raise ValueError(f"line integrals need a 1-form, got degree {form.degree}")
    pts, wv = curve.nodes(resolution)
    return pair_nodes(form, pts, wv)


# ---------- dictionary and current vectors ----------
@dataclass(frozen=True, eq=False)
class DictionaryEntry:
    label: str
    form: KForm
    flag: EntryFlag
    primitive: KForm | None = None
    sup: float = 1.0


@dataclass(frozen=True, eq=False)
class Dictionary:
    n: int
    k: int
    D: int
    entries: tuple[DictionaryEntry, ...]

    @property
    def key(self) -> str:
        return f"T{self.n}-k{self.k}-D{self.D}-{len(self.entries)}"

    def __len__(self) -> int:
        return len(self.entries)

    def indices(self, flag: EntryFlag) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.flag == flag]

    def closed_basis(self) -> list[int]:
        """Positions of dx_1..dx_n (for k = 1)."""
        out = []
        for i in range(self.n):
            out.append(next(j for j, e in enumerate(self.entries)
                            if e.flag == "closed" and tuple(e.form.components) == ((i,),)))
        return out


def dictionary_size(n: int, k: int, D: int) -> int:
    """C(n,k) closed + C(n,k)*M general + exact entries, M = (2D+1)^n - 1 monomials."""
    m = (2 * D + 1) ** n - 1
    if k == 1:
        return n + n * m + m
    basis = math.comb(n, k)
    return basis + basis * m + len(_exact_primitives(n, k, D))


def _exact_primitives(n: int, k: int, D: int) -> list[tuple[str, KForm]]:
    out = []
    for factors in trig_monomials(n, D):
        g = TrigPoly.monomial(n, factors)
        for J in combinations(range(n), k - 1):
            # d(g dx_J) vanishes when g only depends on the axes in J
            if all(kk == 0 for i, (_, kk) in enumerate(factors) if i not in J):
                continue
            prim = KForm(n, k - 1, {J: g})
            label = monomial_label(factors) + ("" if not J else "*d" + "".join("xyz"[i] for i in J))
            out.append((label, prim))
    return out


def build_dictionary(n: int, k: int, D: int, sup_resolution: int = 64) -> Dictionary:
    if D < 0:
        raise ValueError("Fourier degree must be >= 0")
    if not 1 <= k <= n <= 3:
        raise ValueError(f"unsupported form type k={k} on T^{n}")
    names = "xyz"
    entries: list[DictionaryEntry] = []
    for I in combinations(range(n), k):
        entries.append(DictionaryEntry("d" + "^d".join(names[i] for i in I), KForm.basis(n, I), "closed", sup=1.0))
    for factors in trig_monomials(n, D):
        g = TrigPoly.monomial(n, factors)
        for I in combinations(range(n), k):
            form = KForm.basis(n, I, g)
            entries.append(DictionaryEntry(
                f"{monomial_label(factors)}*d" + "^d".join(names[i] for i in I), form, "general",
                sup=sup_norm(form, sup_resolution)))
    for label, prim in _exact_primitives(n, k, D):
        form = exterior_derivative(prim)
        entries.append(DictionaryEntry(f"d({label})", form, "exact", primitive=prim,
                                       sup=sup_norm(form, sup_resolution)))
    _LOG.debug("dictionary T^%d k=%d D=%d: %d entries", n, k, D, len(entries))
    return Dictionary(n, k, D, tuple(entries))


@dataclass(frozen=True, eq=False)
class CurrentVector:
    pairings: np.ndarray
    dictionary: str
    mass: float = 0.0

    def __len__(self) -> int:
        return int(self.pairings.size)

    def __add__(self, other: "CurrentVector") -> "CurrentVector":
        _check_same(self, other)
        return CurrentVector(self.pairings + other.pairings, self.dictionary, self.mass + other.mass)

    def scaled(self, c: float) -> "CurrentVector":
        return CurrentVector(self.pairings * c, self.dictionary, abs(c) * self.mass)

    @classmethod
    def zeros(cls, dictionary: Dictionary) -> "CurrentVector":
        return cls(np.zeros(len(dictionary)), dictionary.key, 0.0)


def _check_same(a: CurrentVector, b: CurrentVector) -> None:
    if a.dictionary != b.dictionary or a.pairings.shape != b.pairings.shape:
        raise ValueError(f"dictionary mismatch: {a.dictionary} vs {b.dictionary}")


def mass_estimate(dictionary: Dictionary, pairings: np.ndarray) -> float:
    """sup over entries of |pairing| / sup|entry|."""
    sups = np.array([e.sup for e in dictionary.entries])
    ok = sups > 0.0
    return float(np.max(np.abs(pairings[ok]) / sups[ok])) if np.any(ok) else 0.0


def current_vector(dictionary: Dictionary, pair: Callable[[KForm], float], threads: int = 1) -> CurrentVector:
    """Pair every dictionary entry; results keep dictionary order."""
    forms = [e.form for e in dictionary.entries]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(pair, forms))
    else:
        vals = [pair(f) for f in forms]
    p = np.asarray(vals, float)
    return CurrentVector(p, dictionary.key, mass_estimate(dictionary, p))


def weak_distance(a: CurrentVector, b: CurrentVector) -> float:
    _check_same(a, b)
    if not len(a):
        return 0.0
    return float(np.max(np.abs(a.pairings - b.pairings)))


def torus_current(dictionary: Dictionary, form_of: Callable[[KForm], KForm], resolution: int,
                  threads: int = 1) -> CurrentVector:
    """Pairings omega -> integral over T^n of form_of(omega) (a top-degree form)."""
    return current_vector(dictionary, lambda w: integrate_torus(form_of(w), resolution), threads)


def derivative_sups(dictionary: Dictionary, resolution: int = 64) -> np.ndarray:
    """sup |d omega| per entry; zero for closed entries."""
    return np.array([0.0 if e.flag != "general" else sup_norm(exterior_derivative(e.form), resolution)
                     for e in dictionary.entries])

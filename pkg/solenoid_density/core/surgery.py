# solenoid_density/core/surgery.py
from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
from typing import Sequence

import numpy as np

from .circle import (CantorTransversal, HolonomySystem, TransportMap, band_indicators, birkhoff_spread,
                     compose_holonomy, sample_starts, transport_map, window)
from .config import FieldCfg, RunCfg
from .forms import (Box, CurrentVector, Dictionary, KForm, Path, Segment, SmoothFunction, TrigPoly, bump,
                    current_vector, derivative_sups, exterior_derivative, grid_cover, line_integral,
                    partition_of_unity, torus_current, weak_distance, wedge, wrap)
from .levelset import (Certificate, LevelSetSolenoid, ScalarFieldBundle, direct_current, lemma_alpha_certificate,
                       zero_field)
from .solenoid import SuspensionSolenoid, realize_class, rs_current

_LOG = logging.getLogger(__name__)


# ---------- handles and targets ----------
@dataclass(frozen=True, eq=False)
class SolenoidHandle:
    """What surgery needs from a solenoid: holonomy, current vector, transversal mass, a point on a leaf."""
    system: HolonomySystem
    current: CurrentVector
    mass: float
    anchor: np.ndarray | None
    label: str = ""


def suspension_handle(sol: SuspensionSolenoid, dictionary: Dictionary, resolution: int = 64,
                      threads: int = 1, label: str = "S_a") -> SolenoidHandle:
    """Handle of ``scale`` times the normalized suspension, so its class is the unscaled target."""
    measure = sol.measure.scaled(sol.scale)
    tv = measure.transversal
    current = rs_current(sol, dictionary, resolution, threads).scaled(sol.scale)
    anchor = sol.core.base + sol.core.section(sol.angles(tv.midpoints()[:1]))[0]
    return SolenoidHandle(HolonomySystem(tv, sol.system.map, measure), current, measure.total, anchor, label)


def levelset_handle(ls: LevelSetSolenoid, dictionary: Dictionary, value_range: tuple[float, float] | None = None,
                    threads: int = 1, label: str = "") -> SolenoidHandle:
    anchor = ls.anchor() if any(lv.starts.shape[0] for lv in ls.levels) else None
    return SolenoidHandle(ls.system(value_range), ls.current(dictionary, threads), ls.transversal_mass,
                          anchor, label)


@dataclass(frozen=True, eq=False)
class TargetCurrent:
    """T = (class part realizing a) + d beta, paired against ``dictionary``."""
    a: np.ndarray
    beta: SmoothFunction
    dictionary: Dictionary

    def exact_part(self, resolution: int = 256, threads: int = 1) -> CurrentVector:
        """omega -> integral over T^n of d beta ^ omega."""
        d_beta = exterior_derivative(KForm.function(self.beta))
        return torus_current(self.dictionary, lambda w: wedge(d_beta, w), resolution, threads)

    def vector(self, class_part: CurrentVector, resolution: int = 256, threads: int = 1) -> CurrentVector:
        return class_part + self.exact_part(resolution, threads)


def build_beta(cfg: FieldCfg, n: int = 2) -> TrigPoly:
    if cfg.kind == "zero":
        return TrigPoly(n, {})
    return TrigPoly.monomial(n, cfg.factors, cfg.amplitude)


# ---------- exact part ----------
def decompose_exact(beta: SmoothFunction, cover: Sequence[Box], margin: float = 0.05,
                    check_resolution: int | None = None) -> list[ScalarFieldBundle]:
    """
    d beta = sum_i dF_i with F_i = rho~_i * rho_i * beta, where rho_i is a partition
    of unity subordinate to ``cover`` and rho~_i is 1 on the support of rho_i.
    """
    parts = partition_of_unity(cover, margin, check_resolution)
    if isinstance(beta, TrigPoly) and not beta.pruned().coeffs:
        return [zero_field(beta.n) for _ in parts]
    out = []
    for rho in parts:
        box = rho.bumps[rho.index].box
        tilde = bump(box.expanded(margin), 0.5 * margin)
        out.append(ScalarFieldBundle(tilde * rho * beta, rho.support, beta.n))
    _LOG.debug("decomposed beta over %d boxes", len(out))
    return out


def reconstruction_defect(target: TargetCurrent, fields: Sequence[ScalarFieldBundle], resolution: int = 256,
                          threads: int = 1) -> float:
    """max over entries of |sum_i integral dF_i ^ omega - integral d beta ^ omega|."""
    total = CurrentVector.zeros(target.dictionary)
    for f in fields:
        total = total + direct_current(f, target.dictionary, resolution, threads)
    return float(np.max(np.abs(total.pairings - target.exact_part(resolution, threads).pairings), initial=0.0))


# ---------- chunks ----------
def chunk(solenoid, mass_bound: float) -> list[LevelSetSolenoid]:
    """Split the transversal measure greedily into pieces of mass <= mass_bound, atoms split as needed."""
    if not isinstance(solenoid, LevelSetSolenoid):
        raise ValueError("cannot chunk: only solenoids with trivial holonomy can be cut")
    if mass_bound <= 0.0:
        raise ValueError("mass_bound must be positive")
    w = solenoid.weights.weights
    if solenoid.transversal_mass <= mass_bound or not w.size:
        return [solenoid]
    tiny = 1e-14 * mass_bound
    pieces: list[tuple[list[int], list[float]]] = []
    atoms: list[int] = []
    ws: list[float] = []
    room = mass_bound
    for i, left in enumerate(w):
        while left > 0.0:
            take = left if left - room <= tiny else room
            atoms.append(i)
            ws.append(take)
            left -= take
            room -= take
            if room <= tiny:
                pieces.append((atoms, ws))
                atoms, ws, room = [], [], mass_bound
    if atoms:
        pieces.append((atoms, ws))
    _LOG.debug("chunked mass %.6g into %d pieces (bound %.6g)", solenoid.transversal_mass, len(pieces), mass_bound)
    return [solenoid.subset(a, x) for a, x in pieces]


# ---------- surgery ----------
@dataclass(frozen=True, eq=False)
class SurgeryPlan:
    host: SolenoidHandle
    guest: SolenoidHandle
    phi: TransportMap | None          # None when the guest carries no mass
    tube: Segment
    eps_tube: float

    @property
    def tube_length(self) -> float:
        return float(np.linalg.norm(self.tube.delta))

    @property
    def tube_volume(self) -> float:
        return (self.tube_length + 2.0) * self.eps_tube * self.guest.mass

    def loop(self) -> Path:
        """Boundary of the eps-thin strip along the tube: gamma, cap, -gamma, -cap."""
        d = self.tube.delta
        norm = float(np.linalg.norm(d))
        normal = np.array([-d[1], d[0]]) / norm if norm > 0.0 else np.array([0.0, 1.0])
        cap = self.eps_tube * normal
        p = self.tube.start
        return Path((Segment(p, d), Segment(p + d, cap), Segment(p + d + cap, -d), Segment(p + cap, -cap)))


def plan_surgery(host: SolenoidHandle, guest: SolenoidHandle, site: CantorTransversal | None,
                 eps_tube: float, host_point: np.ndarray | None = None) -> SurgeryPlan:
    """Match ``site`` (a piece of the host transversal) to the guest transversal and lay the tube."""
    if eps_tube <= 0.0:
        raise ValueError("eps_tube must be positive")
    phi = None
    if guest.mass > 0.0:
        if site is None:
            raise ValueError("a host sub-transversal is required for a guest with mass")
        phi = transport_map(host.system.measure.restrict(site), guest.system.measure,
                            tol=1e-9)
    p1 = np.asarray(host.anchor if host_point is None else host_point, float)
    p2 = p1 if guest.anchor is None else np.asarray(guest.anchor, float)
    return SurgeryPlan(host, guest, phi, Segment(p1, wrap(p2 - p1)), float(eps_tube))


def surgery(plan: SurgeryPlan, dictionary: Dictionary, resolution: int = 64,
            threads: int = 1) -> tuple[SolenoidHandle, CurrentVector, np.ndarray]:
    """
    Glue the guest onto the host. The holonomy becomes phi^-1 h2 phi h1 on the
    matched piece; the current is the sum of both plus the strip correction.
    Returns the new handle, its current and the per-entry error bound.
    """
    host, guest = plan.host, plan.guest
    if plan.phi is None:
        return host, host.current, np.zeros(len(dictionary))
    system = compose_holonomy(host.system, guest.system, plan.phi)
    loop = plan.loop()
    m = guest.mass
    correction = current_vector(dictionary, lambda w: m * line_integral(loop, w, resolution), threads)
    correction = CurrentVector(correction.pairings, correction.dictionary,
                               m * (2.0 * plan.tube_length + 2.0 * plan.eps_tube))
    current = host.current + guest.current + correction
    sups = np.array([e.sup for e in dictionary.entries])
    bound = (sups + derivative_sups(dictionary)) * plan.tube_volume
    label = f"{host.label}+{guest.label}" if guest.label else host.label
    return SolenoidHandle(system, current, host.mass + m, host.anchor, label), current, bound


# ---------- end to end ----------
def _certify(field: ScalarFieldBundle, budget: float, cfg: RunCfg, dictionary: Dictionary) -> tuple[Certificate, int]:
    lv = cfg.levelset
    cert, r = None, 0
    for r in range(cfg.approximate.max_refinements + 1):
        cert = lemma_alpha_certificate(field, lv.epsilon / 2 ** r, lv.epsilon_measure / 2 ** r, dictionary,
                                       grid=lv.grid * 2 ** r, cantor_depth=lv.cantor_depth,
                                       values_per_unit=lv.values, torus_resolution=cfg.forms.torus_resolution)
        if cert.passed and cert.observed <= budget:
            break
        if r < cfg.approximate.max_refinements:
            _LOG.warning("piece off budget (observed %.3e > %.3e), refining grid to %d",
                         cert.observed, budget, lv.grid * 2 ** (r + 1))
    return cert, r


def approximate_current(target: TargetCurrent, eps: float, cfg: RunCfg) -> tuple[SolenoidHandle, CurrentVector, dict]:
    """
    Uniquely ergodic solenoid whose current is within eps of ``target`` on the
    dictionary and whose class is exactly a. Never raises on budget failure.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    dictionary = target.dictionary
    if dictionary.n != 2 or dictionary.k != 1:
        raise ValueError("approximation is implemented for 1-dimensional solenoids on T^2")
    threads = cfg.runtime.workers()
    res = cfg.forms.curve_resolution
    torus_res = cfg.forms.torus_resolution

    # class part
    s_a = realize_class(target.a, cfg.denjoy, cfg.solenoid, resolution=res)
    host = suspension_handle(s_a, dictionary, res, threads)
    target_vec = target.vector(host.current, torus_res, threads)
    distances = [weak_distance(host.current, target_vec)]
    _LOG.info("class part realized, distance to target %.3e", distances[0])

    # exact part, certified piece by piece
    fields = decompose_exact(target.beta, grid_cover(2, cfg.approximate.cover_cells), cfg.approximate.margin)
    per_piece = eps / (2.0 * len(fields))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        certified = list(pool.map(lambda f: _certify(f, per_piece, cfg, dictionary), fields))

    bound_mass = cfg.approximate.mass_bound or host.mass
    guests: list[SolenoidHandle] = []
    pieces = []
    for i, (cert, r) in enumerate(certified):
        chunks = chunk(cert.levelset, min(bound_mass, host.mass))
        guests.extend(levelset_handle(c, dictionary, cert.region.value_range, threads, f"F{i}.{j}")
                      for j, c in enumerate(chunks) if c.transversal_mass > 0.0)
        pieces.append({**cert.summary(), "index": i, "refinements": r, "chunks": len(chunks),
                       "mass": cert.weights.total, "piece_budget": per_piece})

    # host sites left to right by cumulative measure, restarting when the host runs out
    sites, cursor = [], 0.0
    for g in guests:
        if cursor + g.mass > host.mass:
            cursor = 0.0
        sites.append(window(host.system.measure, cursor, cursor + g.mass))
        cursor += g.mass

    sups = np.array([e.sup for e in dictionary.entries]) + derivative_sups(dictionary)
    points = [s_a.core.base + s_a.core.section(s_a.angles(site.midpoints()[:1]))[0] for site in sites]
    lengths = [float(np.linalg.norm(wrap(g.anchor - p))) for g, p in zip(guests, points)]
    weight = float(np.max(sups)) * sum((L + 2.0) * g.mass for L, g in zip(lengths, guests))
    eps_tube = min(0.1, 0.5 * eps / weight) if weight > 0.0 else 0.1

    # sequential gluing
    handle, tube_bound = host, np.zeros(len(dictionary))
    for g, site, p in zip(guests, sites, points):
        plan = plan_surgery(handle, g, site, eps_tube, host_point=p)
        handle, _, bound = surgery(plan, dictionary, res, threads)
        tube_bound = tube_bound + bound
        distances.append(weak_distance(handle.current, target_vec))
    _LOG.info("glued %d chunks with eps_tube %.3e", len(guests), eps_tube)

    final = weak_distance(handle.current, target_vec)
    closed = dictionary.closed_basis()
    class_err = float(np.max(np.abs(handle.current.pairings[closed] - np.asarray(target.a, float))))
    diag = cfg.diagnostics
    tv = handle.system.transversal
    spread = birkhoff_spread(handle.system, band_indicators(tv, diag.observables),
                             sample_starts(handle.system, diag.birkhoff_starts), diag.birkhoff_iterations)

    checks = {
        "certificates": all(p["pass"] and p["observed"] <= per_piece for p in pieces),
        "tube": float(np.max(tube_bound, initial=0.0)) <= 0.5 * eps,
        "class": class_err <= 1e-3,
        "unique_ergodicity": spread <= diag.spread_threshold,
        "distance": final <= eps,
    }
    binding = "none"
    if not all(checks.values()):
        bad = next(k for k, ok in checks.items() if not ok)
        if bad == "certificates":
            worst = max(pieces, key=lambda p: p["observed"] - p["piece_budget"])
            bad = f"certificate[{worst['index']}]:{worst['binding']}"
        binding = bad
        _LOG.warning("approximation failed, binding budget: %s", binding)

    report = {
        "target": {"a": [float(v) for v in target.a], "dictionary": dictionary.key},
        "eps": float(eps),
        "pieces": pieces,
        "budgets": {"exact": 0.5 * eps, "tube": 0.5 * eps, "per_piece": per_piece,
                    "tube_bound": float(np.max(tube_bound, initial=0.0)), "eps_tube": eps_tube},
        "distances": distances,
        "final_distance": final,
        "entry_errors": np.abs(handle.current.pairings - target_vec.pairings),
        "class_check": {"error": class_err, "pass": checks["class"]},
        "ue_diagnostic": {"spread": spread, "iterations": diag.birkhoff_iterations,
                          "pass": checks["unique_ergodicity"]},
        "checks": checks,
        "pass": all(checks.values()),
        "binding": binding,
        "surgeries": len(guests),
        "scale": float(s_a.scale),
    }
    return handle, handle.current, report

# solenoid_density/core/config.py
from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path
import copy
import os
import logging
from typing import Any, Literal

import yaml

from .circle import GOLDEN, GapSchedule, RotationNumber, build_denjoy, DenjoyMap

_LOG = logging.getLogger(__name__)

DEFAULTS_PATH = Path(__file__).resolve().parent.parent / "config.yaml"
ReportFormat = Literal["csv", "mat", "both"]


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: Path | str | None = None) -> dict:
    """Package defaults with an optional YAML (or JSON) document merged on top."""
    with open(DEFAULTS_PATH, "r", encoding="utf-8") as f:
        cfg = yaml.safe_load(f) or {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            user = yaml.safe_load(f) or {}
        if not isinstance(user, dict):
            raise ValueError(f"config {path} must be a mapping, got {type(user).__name__}")
        cfg = _deep_merge(cfg, user)
        _LOG.debug("merged config %s over defaults (%s)", path, ", ".join(sorted(user)))
    return cfg


def _section(cfg: dict, name: str) -> dict:
    sec = (cfg or {}).get(name, {}) or {}
    if not isinstance(sec, dict):
        raise ValueError(f"config section '{name}' must be a mapping")
    return sec


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0.0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


@dataclass(frozen=True)
class DenjoyCfg:
    rho: float = GOLDEN
    gap_total: float = 0.5
    schedule_range: int = 512
    depth: int = 64
    convergent_depth: int = 40
    q_max: int = 10**6

    @classmethod
    def from_config(cls, cfg: dict) -> "DenjoyCfg":
        s = _section(cfg, "denjoy")
        rho = s.get("rho", "golden")
        rho = GOLDEN if str(rho).lower() == "golden" else float(rho)
        out = cls(rho=rho,
                  gap_total=float(s.get("gap_total", 0.5)),
                  schedule_range=int(s.get("schedule_range", 512)),
                  depth=int(s.get("depth", 64)),
                  convergent_depth=int(s.get("convergent_depth", 40)),
                  q_max=int(s.get("q_max", 10**6)))
        if out.depth < 0 or out.schedule_range < 1:
            raise ValueError("denjoy.depth must be >= 0 and denjoy.schedule_range >= 1")
        out.rotation_number()  # rejects rational or out-of-range rho early
        return out

    def rotation_number(self) -> RotationNumber:
        return RotationNumber.from_value(self.rho, self.convergent_depth, self.q_max)

    def schedule(self) -> GapSchedule:
        return GapSchedule.default(self.schedule_range, self.gap_total)

    def build(self, depth: int | None = None) -> DenjoyMap:
        return build_denjoy(self.rotation_number(), self.schedule(), self.depth if depth is None else depth)


@dataclass(frozen=True)
class DiagnosticsCfg:
    birkhoff_iterations: int = 100_000
    birkhoff_starts: int = 100
    observables: int = 10
    spread_threshold: float = 0.01
    rotation_iterations: int = 100_000
    rotation_tolerance: float = 1e-4

    @classmethod
    def from_config(cls, cfg: dict) -> "DiagnosticsCfg":
        s = _section(cfg, "diagnostics")
        return cls(birkhoff_iterations=int(s.get("birkhoff_iterations", 100_000)),
                   birkhoff_starts=int(s.get("birkhoff_starts", 100)),
                   observables=int(s.get("observables", 10)),
                   spread_threshold=_positive("diagnostics.spread_threshold", s.get("spread_threshold", 0.01)),
                   rotation_iterations=int(s.get("rotation_iterations", 100_000)),
                   rotation_tolerance=_positive("diagnostics.rotation_tolerance", s.get("rotation_tolerance", 1e-4)))


@dataclass(frozen=True)
class FormsCfg:
    degree: int = 3
    torus_resolution: int = 256
    curve_resolution: int = 64

    @classmethod
    def from_config(cls, cfg: dict) -> "FormsCfg":
        s = _section(cfg, "forms")
        out = cls(degree=int(s.get("degree", 3)),
                  torus_resolution=int(s.get("torus_resolution", 256)),
                  curve_resolution=int(s.get("curve_resolution", 64)))
        if out.degree < 0 or out.torus_resolution < 8 or out.curve_resolution < 1:
            raise ValueError("forms: degree >= 0, torus_resolution >= 8, curve_resolution >= 1 required")
        return out


@dataclass(frozen=True)
class SolenoidCfg:
    core_radius: float = 0.05
    core_fraction: float = 0.1
    base: tuple[float, ...] = (0.25, 0.25)
    transversal_nodes: int = 2

    @classmethod
    def from_config(cls, cfg: dict) -> "SolenoidCfg":
        s = _section(cfg, "solenoid")
        out = cls(core_radius=_positive("solenoid.core_radius", s.get("core_radius", 0.05)),
                  core_fraction=_positive("solenoid.core_fraction", s.get("core_fraction", 0.1)),
                  base=tuple(float(v) for v in s.get("base", (0.25, 0.25))),
                  transversal_nodes=int(s.get("transversal_nodes", 2)))
        if out.core_fraction > 1.0 or out.core_radius >= 0.25 or out.transversal_nodes < 1:
            raise ValueError("solenoid: core_fraction <= 1, core_radius < 1/4, transversal_nodes >= 1 required")
        return out


@dataclass(frozen=True)
class LeafLimitCfg:
    schedule: tuple[int, ...] = (10, 100, 1000)
    start: float | None = None
    a: tuple[float, ...] = (0.3, 0.7)
    threshold: float = 0.01
    decay_factor: float = 5.0

    @classmethod
    def from_config(cls, cfg: dict) -> "LeafLimitCfg":
        s = _section(cfg, "leaf_limit")
        start = s.get("start", None)
        out = cls(schedule=tuple(int(r) for r in s.get("schedule", (10, 100, 1000))),
                  start=None if start is None else float(start),
                  a=tuple(float(v) for v in s.get("a", _section(cfg, "realize").get("a", (0.3, 0.7)))),
                  threshold=_positive("leaf_limit.threshold", s.get("threshold", 0.01)),
                  decay_factor=_positive("leaf_limit.decay_factor", s.get("decay_factor", 5.0)))
        if not out.schedule or min(out.schedule) < 1:
            raise ValueError("leaf_limit.schedule needs returns >= 1")
        return out


@dataclass(frozen=True)
class FieldCfg:
    kind: str = "bump_trig"
    amplitude: float = 0.1
    factors: tuple[tuple[str, int], ...] = (("s", 1), ("s", 1))
    box_lo: tuple[float, ...] = (0.1, 0.1)
    box_hi: tuple[float, ...] = (0.9, 0.9)
    margin: float = 0.05
    center: tuple[float, ...] = (0.5, 0.5)
    radius: float = 0.3

    @classmethod
    def from_mapping(cls, s: dict) -> "FieldCfg":
        kind = str(s.get("kind", "bump_trig"))
        if kind not in ("bump_trig", "radial", "zero"):
            raise ValueError(f"unknown field kind {kind!r}")
        return cls(kind=kind,
                   amplitude=float(s.get("amplitude", 0.1)),
                   factors=tuple((str(k), int(m)) for k, m in s.get("factors", (("s", 1), ("s", 1)))),
                   box_lo=tuple(float(v) for v in s.get("box_lo", (0.1, 0.1))),
                   box_hi=tuple(float(v) for v in s.get("box_hi", (0.9, 0.9))),
                   margin=_positive("field.margin", s.get("margin", 0.05)),
                   center=tuple(float(v) for v in s.get("center", (0.5, 0.5))),
                   radius=_positive("field.radius", s.get("radius", 0.3)))


@dataclass(frozen=True)
class LevelsetCfg:
    field: FieldCfg = field(default_factory=FieldCfg)
    epsilon: float = 1e-2
    epsilon_measure: float = 1e-2
    grid: int = 256
    cantor_depth: int = 8
    values: int = 64
    refinement: bool = True

    @classmethod
    def from_config(cls, cfg: dict) -> "LevelsetCfg":
        s = _section(cfg, "levelset")
        out = cls(field=FieldCfg.from_mapping(s.get("field", {}) or {}),
                  epsilon=_positive("levelset.epsilon", s.get("epsilon", 1e-2)),
                  epsilon_measure=_positive("levelset.epsilon_measure", s.get("epsilon_measure", 1e-2)),
                  grid=int(s.get("grid", 256)),
                  cantor_depth=int(s.get("cantor_depth", 8)),
                  values=int(s.get("values", 64)),
                  refinement=bool(s.get("refinement", True)))
        if out.grid < 8 or out.cantor_depth < 1 or out.values < 1:
            raise ValueError("levelset: grid >= 8, cantor_depth >= 1, values >= 1 required")
        return out


@dataclass(frozen=True)
class ApproximateCfg:
    a: tuple[float, ...] = (0.3, 0.7)
    beta: FieldCfg = field(default_factory=lambda: FieldCfg(kind="trig"))
    eps: float = 0.05
    cover_cells: int = 2
    margin: float = 0.05
    max_refinements: int = 2
    mass_bound: float | None = None
    degree: int = 2

    @classmethod
    def from_config(cls, cfg: dict) -> "ApproximateCfg":
        s = _section(cfg, "approximate")
        b = s.get("beta", {}) or {}
        kind = str(b.get("kind", "trig"))
        if kind not in ("trig", "zero"):
            raise ValueError(f"unknown beta kind {kind!r}")
        beta = FieldCfg(kind=kind, amplitude=float(b.get("amplitude", 0.1)),
                        factors=tuple((str(k), int(m)) for k, m in b.get("factors", (("s", 1), ("s", 1)))))
        mb = s.get("mass_bound", None)
        return cls(a=tuple(float(v) for v in s.get("a", (0.3, 0.7))),
                   beta=beta,
                   eps=_positive("approximate.eps", s.get("eps", 0.05)),
                   cover_cells=int(s.get("cover_cells", 2)),
                   margin=_positive("approximate.margin", s.get("margin", 0.05)),
                   max_refinements=int(s.get("max_refinements", 2)),
                   mass_bound=None if mb is None else _positive("approximate.mass_bound", mb),
                   degree=int(s.get("degree", 2)))


@dataclass(frozen=True)
class ReportsCfg:
    format: ReportFormat = "csv"
    mat_variable: str = "report"

    @classmethod
    def from_config(cls, cfg: dict) -> "ReportsCfg":
        s = _section(cfg, "reports")
        fmt = str(s.get("format", "csv")).lower()
        if fmt not in ("csv", "mat", "both"):
            raise ValueError(f"reports.format must be csv | mat | both, got {fmt!r}")
        return cls(format=fmt, mat_variable=str(s.get("mat_variable", "report")))


@dataclass(frozen=True)
class RuntimeCfg:
    threads: int = 0
    seed: int = 12345
    verbose: bool = False

    @classmethod
    def from_config(cls, cfg: dict) -> "RuntimeCfg":
        s = _section(cfg, "runtime")
        threads = int(s.get("threads", 0))
        if threads < 0:
            raise ValueError("runtime.threads must be >= 0")
        return cls(threads=threads, seed=int(s.get("seed", 12345)),
                   verbose=bool(_section(cfg, "logging").get("verbose", False)))

    def workers(self) -> int:
        return self.threads or min(8, os.cpu_count() or 1)


@dataclass(frozen=True)
class RunCfg:
    """All sections of one run."""
    denjoy: DenjoyCfg
    diagnostics: DiagnosticsCfg
    forms: FormsCfg
    solenoid: SolenoidCfg
    realize_a: tuple[float, ...]
    leaf_limit: LeafLimitCfg
    levelset: LevelsetCfg
    approximate: ApproximateCfg
    reports: ReportsCfg
    runtime: RuntimeCfg

    @classmethod
    def from_config(cls, cfg: dict) -> "RunCfg":
        realize = _section(cfg, "realize")
        return cls(denjoy=DenjoyCfg.from_config(cfg),
                   diagnostics=DiagnosticsCfg.from_config(cfg),
                   forms=FormsCfg.from_config(cfg),
                   solenoid=SolenoidCfg.from_config(cfg),
                   realize_a=tuple(float(v) for v in realize.get("a", (0.3, 0.7))),
                   leaf_limit=LeafLimitCfg.from_config(cfg),
                   levelset=LevelsetCfg.from_config(cfg),
                   approximate=ApproximateCfg.from_config(cfg),
                   reports=ReportsCfg.from_config(cfg),
                   runtime=RuntimeCfg.from_config(cfg))

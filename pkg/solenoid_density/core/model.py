# solenoid_density/core/model.py
from __future__ import annotations
from dataclasses import dataclass, field

import pandas as pd


@dataclass(frozen=True)
class RunResult:
    command: str                                  # e.g. denjoy, realize, approximate
    checks: dict[str, bool]                       # asserted invariants of the run
    report: dict                                  # JSON document
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)   # base name -> table

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

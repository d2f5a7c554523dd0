import math
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, Field

RECORD_COLUMNS = [
    "check", "instance", "seed", "n", "k", "a", "tau",
    "epsilon0", "epsilon1", "delta_a", "r0", "r1", "W0", "W1",
    "value_full", "value_quant", "value_gap",
    "greedy_radius", "optimal_radius", "ratio", "plan_distance",
    "passed", "violations",
]


class StabilityRecord(BaseModel):
    """One randomized instance of a stability check"""

    check: str = Field(..., pattern="^(endpoint|value|kcenter|coupling)$")
    instance: int = Field(0, ge=0)
    seed: int = 0
    n: int = Field(..., ge=1)
    k: int = Field(..., ge=1)
    a: float = 2.0
    tau: Optional[float] = None
    epsilon0: Optional[float] = None
    epsilon1: Optional[float] = None
    delta_a: Optional[float] = None
    r0: Optional[float] = None
    r1: Optional[float] = None
    W0: Optional[float] = None
    W1: Optional[float] = None
    value_full: Optional[float] = None
    value_quant: Optional[float] = None
    value_gap: Optional[float] = None
    greedy_radius: Optional[float] = None
    optimal_radius: Optional[float] = None
    ratio: Optional[float] = None
    plan_distance: Optional[float] = None
    flags: Dict[str, bool] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    @property
    def violations(self) -> List[str]:
        return [name for name, ok in self.flags.items() if not ok]


class StabilityReport(BaseModel):
    records: List[StabilityRecord] = Field(default_factory=list)
    suite_checks: Dict[str, bool] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records) and all(self.suite_checks.values())

    @property
    def violations(self) -> List[str]:
        found = [f"{r.check}[{r.instance}]:{name}" for r in self.records for name in r.violations]
        found.extend(name for name, ok in self.suite_checks.items() if not ok)
        return found

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for record in self.records:
            row = record.model_dump(exclude={"flags"})
            row["passed"] = record.passed
            row["violations"] = ";".join(record.violations)
            rows.append({col: (math.nan if row.get(col) is None else row[col]) for col in RECORD_COLUMNS})
        return pd.DataFrame(rows, columns=RECORD_COLUMNS)

    def to_csv(self, path: Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

from pydantic import BaseModel, Field, field_validator
from typing import Optional, List, Dict, Literal

from config import settings


# Configuración de ejecución de la CLI
class RunConfig(BaseModel):
    class_file: Optional[str] = None
    structure_files: List[str] = []
    rule: Optional[str] = None
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    samples: int = Field(settings.MC_SAMPLES, ge=1)
    tv_threshold: float = Field(settings.TV_THRESHOLD, gt=0, lt=1)
    p_threshold: float = Field(settings.P_THRESHOLD, gt=0, lt=1)
    enum_cap: int = Field(settings.ENUM_CAP, ge=0)
    membership_cap: int = Field(settings.MEMBERSHIP_CAP, ge=0)
    output_format: Literal["table", "json"] = "table"

    @field_validator("enum_cap")
    @classmethod
    def enum_cap_in_range(cls, v: int) -> int:
        if v > settings.ENUM_CAP:
            raise ValueError(f"La cota de enumeración no puede superar {settings.ENUM_CAP}")
        return v

    @field_validator("membership_cap")
    @classmethod
    def membership_cap_in_range(cls, v: int) -> int:
        if v > settings.MEMBERSHIP_CAP:
            raise ValueError(f"La cota de pertenencia no puede superar {settings.MEMBERSHIP_CAP}")
        return v


# Comprobaciones acotadas de la clase
class CheckReport(BaseModel):
    check: Literal["hereditary", "amalgamation", "evenly", "freely", "orthogonal", "symmetric-within"]
    class_name: str
    bound: int
    holds: bool
    witness: List[str] = []
    detail: Optional[str] = None


class ClassCheckReport(BaseModel):
    class_name: str
    n: int
    holds: bool
    checks: List[CheckReport]


# Amalgamación disjunta
class PlanReport(BaseModel):
    parts: List[str]
    labelings: Optional[List[Dict[str, Dict[str, int]]]] = None


class DapVerdict(BaseModel):
    class_name: str
    n: int
    mode: Literal["plain", "upto", "weak-upto"] = "plain"
    holds: bool
    plans_checked: int = 0
    counterexample: Optional[PlanReport] = None


# Blurs
class BlurEntry(BaseModel):
    handles: List[str]
    key: str


class BlurReport(BaseModel):
    class_name: str
    elements: List[int]
    include_empty: bool = True
    handles: List[str]
    blurs: List[BlurEntry]


# Muestreo y verificación
class SampleRecord(BaseModel):
    rule: str
    seed: int
    index: int = 0
    structure: str


class Discrepancy(BaseModel):
    outcome: str
    p1: float
    p2: float
    diff: float


class StatsVerdict(BaseModel):
    passed: bool
    tv: float
    p_value: float
    tv_threshold: float
    p_threshold: float
    diagnostics: List[Discrepancy] = []


class ExchReport(BaseModel):
    class_name: str
    rule: str
    n: int
    samples: int
    seed: int
    comparisons: int
    worst_tv: float
    worst_pair: Optional[str] = None
    p_value: float
    passed: bool


class EqSymReport(BaseModel):
    rule: str
    mode: Literal["exact", "montecarlo"]
    passed: bool
    labelings_checked: int
    worst_tv: float
    worst_tv_exact: Optional[str] = None
    worst_labeling: Optional[Dict[str, Dict[str, int]]] = None


# Eliminación de relaciones de equivalencia
class StageInfo(BaseModel):
    eqrel: str
    kind: Literal["finite", "infinite"]
    count: Optional[int] = None
    class_name: str
    added_symbols: List[str] = []
    side_tags: Dict[str, str] = {}
    spec_file: Optional[str] = None


class EliminationManifest(BaseModel):
    class_name: str
    stages: List[StageInfo]
    terminal_class: str
    terminal_dap: Optional[DapVerdict] = None


# Arrays jerárquicos
class ApReport(BaseModel):
    depths: List[int]
    bounds: List[int]
    mix: str
    seed: int
    samples: int
    permutations_checked: int
    worst_tv: float
    p_value: float
    passed: bool


# Representación elemento a elemento
class FailedRepReport(BaseModel):
    cuts: List[str]
    rules_checked: int
    same_class_hits: int
    cross_class_hits: int
    both_hits: int
    target_same: str = "1/2"
    target_cross: str = "1/4"

"""
Pydantic схемы конфигурации и API.

Этот модуль содержит схемы для файла конфигурации запуска (JSON) и для
запросов/ответов HTTP API. Схемы проверяют входные данные и строят из них
численные объекты пакета.
"""
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from control import ControlGrid, oscillating
from mark_space import BetaProfile, JumpCoefficient, MarkSpace, make_mark_space
from nonlinearity import PsiSpec, make_psi
from results_io import read_control_csv
from spectral_space import OperatorSpec, SpectralField, make_operator


# Operator schemas
class OperatorConfig(BaseModel):
    """Схема оператора L."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["laplacian", "fractional", "explicit"] = "laplacian"
    K: int = Field(4, ge=1, le=256)
    alpha: Optional[float] = None
    eigenvalues: Optional[List[float]] = None

    def build(self) -> OperatorSpec:
        """Строит OperatorSpec."""
        return make_operator(self.kind, self.K, alpha=self.alpha, eigenvalues=self.eigenvalues)


# Psi schemas
class PsiConfig(BaseModel):
    """Схема нелинейности Ψ."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["linear", "stefan", "tanh_saturating"] = "linear"
    a: Optional[float] = None
    b: Optional[float] = None
    rho: Optional[float] = None
    k0: Optional[float] = None
    s: Optional[float] = None

    def build(self) -> PsiSpec:
        """Строит PsiSpec."""
        params = {name: value for name, value in self.model_dump(exclude={"kind"}).items()
                  if value is not None}
        return make_psi(self.kind, **params)


# Mark space schemas
class BetaConfig(BaseModel):
    """Схема временного профиля β(t)."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["constant", "cosine"] = "constant"
    amplitude: float = 1.0
    frequency: float = 1.0


class MarkSpaceConfig(BaseModel):
    """Схема пространства меток и коэффициента скачка."""

    model_config = ConfigDict(extra="forbid")

    marks: List[float] = Field(default_factory=lambda: [1.0])
    weights: Optional[List[float]] = None
    sigma: Optional[List[float]] = None
    beta: BetaConfig = Field(default_factory=BetaConfig)
    c: float = 0.0
    eta: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_lengths(self):
        """Веса и амплитуды должны иметь по одному значению на метку."""
        for name in ("weights", "sigma"):
            values = getattr(self, name)
            if values is not None and len(values) != len(self.marks):
                raise ValueError(f"{name} has {len(values)} entries, expected {len(self.marks)}")
        return self

    def build_mark_space(self) -> MarkSpace:
        """Строит MarkSpace."""
        return make_mark_space(self.marks, self.weights)

    def build_jump_coefficient(self, K: int) -> JumpCoefficient:
        """Строит JumpCoefficient для K мод; η по умолчанию e_1."""
        eta = np.zeros(K)
        if self.eta is None:
            eta[0] = 1.0
        else:
            if len(self.eta) != K:
                raise ValueError(f"eta has {len(self.eta)} coefficients, expected K={K}")
            eta[:] = self.eta
        sigma = self.sigma if self.sigma is not None else [1.0] * len(self.marks)
        return JumpCoefficient(
            sigma=np.asarray(sigma, dtype=float),
            eta=SpectralField(eta),
            c=self.c,
            beta=BetaProfile(**self.beta.model_dump()),
        )


# Control schemas
class ControlConfig(BaseModel):
    """Схема управления: файл CSV, константа или семейство."""

    model_config = ConfigDict(extra="forbid")

    file: Optional[str] = None
    constant: Optional[float] = Field(None, ge=0.0)
    family: Literal["null", "constant", "oscillating"] = "null"
    frequency: float = 1.0
    amplitude: float = 1.0

    def build(self, n_t: int, m: int, T: float) -> ControlGrid:
        """Строит ControlGrid на сетке решателя."""
        if self.file:
            return read_control_csv(self.file, T).refine(n_t)
        if self.constant is not None:
            return ControlGrid.constant(n_t, m, T, self.constant)
        if self.family == "oscillating":
            return oscillating(n_t, m, T, self.frequency, self.amplitude)
        return ControlGrid.null(n_t, m, T)


# Solver schemas
class SolverConfig(BaseModel):
    """Параметры интегратора по времени."""

    model_config = ConfigDict(extra="forbid")

    T: float = Field(1.0, gt=0.0)
    n_t: int = Field(100, ge=1)
    M: Optional[int] = Field(None, ge=2)
    fp_tol: float = Field(1e-10, gt=0.0)
    fp_max: int = Field(200, ge=1)
    relax: float = Field(0.5, gt=0.0, le=1.0)
    adapt: bool = True
    max_halvings: int = Field(10, ge=0)
    scheme: Literal["exponential", "implicit_euler"] = "exponential"
    track_psi_integral: bool = True

    def collocation_size(self, K: int) -> int:
        """Размер сетки коллокации; по умолчанию 4K."""
        return self.M if self.M is not None else 4 * K

    @property
    def dt(self) -> float:
        """Шаг равномерной сетки."""
        return self.T / self.n_t


# Rate estimation schemas
class EventConfig(BaseModel):
    """Схема события для оценки функции уровня."""

    model_config = ConfigDict(extra="forbid")

    observable: Literal["terminal_Fstar_norm", "terminal_mode", "path_sup_Fstar"] = "terminal_mode"
    mode: int = Field(1, ge=1)
    threshold: float = 0.0
    direction: Literal[">=", "<="] = ">="


class OptimizerConfig(BaseModel):
    """Параметры штрафной оптимизации Q."""

    model_config = ConfigDict(extra="forbid")

    n_starts: int = Field(3, ge=1)
    max_iters: int = Field(60, ge=1)
    penalties: List[float] = Field(default_factory=lambda: [10.0, 1e2, 1e3, 1e4])
    fd_step: float = Field(1e-4, gt=0.0)
    control_cells: Optional[int] = Field(None, ge=1)
    gap_tol: float = Field(1e-3, gt=0.0)
    perturbation: float = Field(0.5, ge=0.0)

    @field_validator("penalties")
    @classmethod
    def check_penalties(cls, value: List[float]) -> List[float]:
        """Штрафы должны быть положительны и не убывать."""
        if not value or any(p <= 0.0 for p in value) or value != sorted(value):
            raise ValueError("penalties must be a nonempty ascending list of positive weights")
        return value


class ExperimentConfig(BaseModel):
    """Параметры экспериментов Монте-Карло."""

    model_config = ConfigDict(extra="forbid")

    eps_list: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    trials: int = Field(1000, ge=1)
    N: float = Field(2.0, gt=0.0)
    frequencies: List[int] = Field(default_factory=lambda: [4, 8, 16, 32])
    eps_tail: float = Field(1e-3, gt=0.0)

    @field_validator("eps_list")
    @classmethod
    def check_eps(cls, value: List[float]) -> List[float]:
        """ε должны лежать в (0, 1]."""
        if not value or any(not 0.0 < eps <= 1.0 for eps in value):
            raise ValueError("eps_list entries must lie in (0, 1]")
        return value


class RunConfig(BaseModel):
    """Полная конфигурация запуска."""

    model_config = ConfigDict(extra="forbid")

    operator: OperatorConfig = Field(default_factory=OperatorConfig)
    psi: PsiConfig = Field(default_factory=PsiConfig)
    marks: MarkSpaceConfig = Field(default_factory=MarkSpaceConfig)
    control: ControlConfig = Field(default_factory=ControlConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    x0: Optional[List[float]] = None
    event: EventConfig = Field(default_factory=EventConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)

    def build_x0(self, K: int) -> SpectralField:
        """Начальное условие; по умолчанию e_1."""
        if self.x0 is None:
            return SpectralField.unit(K, 1)
        if len(self.x0) != K:
            raise ValueError(f"x0 has {len(self.x0)} coefficients, expected K={K}")
        return SpectralField(self.x0)


def load_run_config(path) -> RunConfig:
    """Читает и проверяет JSON-файл конфигурации."""
    return RunConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))


# API schemas
class RunRequest(BaseModel):
    """Запрос на запуск через API."""

    config: RunConfig = Field(default_factory=RunConfig)
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    trials: Optional[int] = Field(None, ge=1)
    eps_list: Optional[List[float]] = None
    out: Optional[str] = None

    @field_validator("out")
    @classmethod
    def check_out(cls, value: Optional[str]) -> Optional[str]:
        """Каталог результатов задаётся относительно OUTPUT_DIR и не выходит за него."""
        if value is None:
            return value
        path = Path(value)
        if not value.strip() or path.is_absolute() or ".." in path.parts:
            raise ValueError("out must be a relative path inside the output directory")
        return value


class RunResponse(BaseModel):
    """Ответ API о выполненном запуске."""

    status: str
    subcommand: str
    outputs: Dict[str, str] = Field(default_factory=dict)
    summary: Dict[str, object] = Field(default_factory=dict)
    error: Optional[str] = None

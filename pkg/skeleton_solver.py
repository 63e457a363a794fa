"""
Решатель скелетного уравнения dX = LΨ(X)dt + ∫_Z f(t, X, z)(g − 1)ν(dz)dt
и его регуляризаций (L заменяется на L − ε, Ψ на Ψ + δ·id).

Шаг по времени использует расщепление Ψ = k·id + R, k = Lip Ψ: линейная
часть интегрируется точно (экспоненциальный Эйлер) или неявным Эйлером,
остаток R находится демпфированной итерацией Пикара. Снос явный в левом
конце шага. При отсутствии сходимости шаг делится пополам.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from control import ControlGrid, in_SN, q_cost
from errors import (
    DimensionMismatchError,
    InvalidControlError,
    StepFailureError,
    UnsupportedCombinationError,
)
from mark_space import JumpCoefficient, MarkSpace, h_integral
from nonlinearity import PsiSpec, psi_coefficients
from schemas import SolverConfig
from spectral_space import BASIS_ABSTRACT, OperatorSpec, SpectralField, norm_weights

logger = logging.getLogger(__name__)

DriftFn = Callable[[float, np.ndarray], np.ndarray]

MULTIPLIER_CACHE_SIZE = 256


@dataclass(eq=False)
class Trajectory:
    """Траектория на равномерной сетке t_0 = 0 < ... < t_{n_t} = T."""

    times: np.ndarray
    states: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[0] != self.times.size:
            raise DimensionMismatchError(
                f"States shape {self.states.shape} does not match {self.times.size} times"
            )

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def K(self) -> int:
        """Число мод."""
        return int(self.states.shape[1])

    def state(self, i: int) -> SpectralField:
        """Состояние в узле i."""
        return SpectralField(self.states[i])

    @property
    def initial(self) -> SpectralField:
        """X(0)."""
        return self.state(0)

    @property
    def terminal(self) -> SpectralField:
        """X(T)."""
        return self.state(-1)

    def norms(self, op: OperatorSpec, which: str = "F12_star") -> np.ndarray:
        """Нормы состояний во всех узлах."""
        return np.sqrt(self.states ** 2 @ norm_weights(op, which))

    def sup_distance(self, other: "Trajectory", op: OperatorSpec, which: str = "F12_star") -> float:
        """sup_t ‖X(t) − Y(t)‖ по общей сетке."""
        if self.states.shape != other.states.shape:
            raise DimensionMismatchError(
                f"Trajectories have shapes {self.states.shape} and {other.states.shape}"
            )
        diff = self.states - other.states
        return float(np.sqrt(np.max(diff ** 2 @ norm_weights(op, which))))


@dataclass(frozen=True, eq=False)
class Problem:
    """Данные задачи: оператор, Ψ, коэффициент скачка, метки, x0 и решатель."""

    op: OperatorSpec
    psi: PsiSpec
    fc: JumpCoefficient
    mark_space: MarkSpace
    x0: SpectralField
    cfg: SolverConfig


class _PicardStall(Exception):
    """Внутренний сигнал: итерация Пикара не сошлась за fp_max шагов."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(residual, iterations)
        self.residual = residual
        self.iterations = iterations


class StepIntegrator:
    """Шаг X_n → X_{n+1} для dX = LΨ(X)dt + D(t, X)dt с делением шага пополам."""

    def __init__(self, op: OperatorSpec, psi: PsiSpec, cfg: SolverConfig):
        self.lam = op.eigenvalues
        self.psi = psi
        self.cfg = cfg
        self.k = psi.lip
        self.M = cfg.collocation_size(op.K)
        self.linear = psi.is_linear and psi.linear_slope == self.k
        self.residual_weights = 1.0 / (1.0 + self.lam)
        self.halvings = 0
        self.max_iterations = 0
        self._multipliers = lru_cache(maxsize=MULTIPLIER_CACHE_SIZE)(self._compute_multipliers)

        if not self.linear:
            if op.basis == BASIS_ABSTRACT:
                raise UnsupportedCombinationError(
                    f"Nonlinear psi '{psi.kind}' needs a grid; operator basis is abstract"
                )
            if self.M < 2 * op.K:
                raise DimensionMismatchError(f"Collocation size M={self.M} is below 2K={2 * op.K}")

    def multipliers(self, dt: float):
        """(затухание, усиление) для шага dt: X⁺ = decay·x + gain·(D − λR(X⁺))."""
        return self._multipliers(float(dt))

    def _compute_multipliers(self, dt: float):
        z = dt * self.k * self.lam
        if self.cfg.scheme == "implicit_euler":
            decay = 1.0 / (1.0 + z)
            gain = dt * decay
        else:
            decay = np.exp(-z)
            phi1 = np.ones_like(z)
            positive = z > 0.0
            phi1[positive] = -np.expm1(-z[positive]) / z[positive]
            gain = dt * phi1
        decay.setflags(write=False)
        gain.setflags(write=False)
        return decay, gain

    def _solve(self, x: np.ndarray, drift: Optional[np.ndarray], dt: float) -> np.ndarray:
        decay, gain = self.multipliers(dt)
        base = decay * x if drift is None else decay * x + gain * drift
        if self.linear:
            return base

        relax = self.cfg.relax
        current = x
        residual = np.inf
        for iteration in range(1, self.cfg.fp_max + 1):
            remainder = psi_coefficients(self.psi, current, self.M) - self.k * current
            candidate = base - gain * self.lam * remainder
            updated = (1.0 - relax) * current + relax * candidate
            residual = float(np.sqrt(np.sum(self.residual_weights * (updated - current) ** 2)))
            current = updated
            if residual <= self.cfg.fp_tol:
                self.max_iterations = max(self.max_iterations, iteration)
                return current
        raise _PicardStall(residual, self.cfg.fp_max)

    def step(self, x: np.ndarray, t: float, dt: float, drift_fn: Optional[DriftFn],
             depth: int = 0) -> np.ndarray:
        """Один шаг длины dt из момента t; drift_fn(t, x) задаёт явный снос или равен None."""
        drift = None if drift_fn is None else drift_fn(t, x)
        try:
            return self._solve(x, drift, dt)
        except _PicardStall as stall:
            if not self.cfg.adapt or depth >= self.cfg.max_halvings:
                raise StepFailureError(
                    f"Fixed-point iteration did not converge at t={t:.6g}",
                    time=t, dt=dt, residual=stall.residual,
                    iterations=stall.iterations, halvings=depth,
                ) from stall
            logger.debug("Halving step at t=%.6g: dt=%.3e, residual=%.3e", t, dt, stall.residual)
            self.halvings += 1
            half = 0.5 * dt
            middle = self.step(x, t, half, drift_fn, depth + 1)
            return self.step(middle, t + half, half, drift_fn, depth + 1)

    def psi_of(self, x: np.ndarray) -> np.ndarray:
        """Коэффициенты Ψ(x)."""
        return psi_coefficients(self.psi, x, self.M)


def uniform_times(T: float, n_t: int) -> np.ndarray:
    """Узлы равномерной сетки t_n = n·T/n_t."""
    return np.arange(n_t + 1) * (T / n_t)


def check_problem(op: OperatorSpec, fc: JumpCoefficient, mark_space: MarkSpace,
                  x0: SpectralField):
    """Согласованность размерностей оператора, коэффициента скачка и меток."""
    if x0.K != op.K:
        raise DimensionMismatchError(f"Initial condition has {x0.K} modes, operator has K={op.K}")
    if fc.K != op.K:
        raise DimensionMismatchError(f"Jump profile eta has {fc.K} modes, operator has K={op.K}")
    if fc.m != mark_space.m:
        raise DimensionMismatchError(f"Jump coefficient has {fc.m} marks, space has {mark_space.m}")


def align_control(g: ControlGrid, mark_space: MarkSpace, cfg: SolverConfig) -> ControlGrid:
    """Управление на сетке решателя: проверка меток и горизонта, измельчение по времени."""
    if g.m != mark_space.m:
        raise InvalidControlError(f"Control has {g.m} marks, mark space has {mark_space.m}")
    if not np.isclose(g.T, cfg.T, rtol=1e-12, atol=0.0):
        raise InvalidControlError(f"Control horizon T={g.T} differs from solver T={cfg.T}")
    return g.refine(cfg.n_t)


class PsiIntegral:
    """Накопление ∫₀ᵗ Ψ(X(s)) ds по формуле трапеций."""

    def __init__(self, integrator: StepIntegrator, x0: np.ndarray, n_t: int, enabled: bool):
        self.integrator = integrator
        self.enabled = enabled
        self.values = np.zeros((n_t + 1, x0.size)) if enabled else None
        self._last = integrator.psi_of(x0) if enabled else None

    def add(self, n: int, dt: float, x_next: np.ndarray):
        """Добавляет вклад ячейки n с правым состоянием x_next."""
        if not self.enabled:
            return
        current = self.integrator.psi_of(x_next)
        self.values[n + 1] = self.values[n] + 0.5 * dt * (self._last + current)
        self._last = current


def _integrate(op: OperatorSpec, psi: PsiSpec, fc: JumpCoefficient, mark_space: MarkSpace,
               g: ControlGrid, x0: SpectralField, cfg: SolverConfig) -> Trajectory:
    check_problem(op, fc, mark_space, x0)
    g = align_control(g, mark_space, cfg)
    integrator = StepIntegrator(op, psi, cfg)

    n_t, dt = cfg.n_t, cfg.dt
    times = uniform_times(cfg.T, n_t)
    states = np.empty((n_t + 1, op.K))
    states[0] = x0.coeffs
    running = PsiIntegral(integrator, x0.coeffs, n_t, cfg.track_psi_integral)

    cell_weights = (g.values - 1.0) @ (fc.sigma * mark_space.weights)
    drift_active = not fc.is_zero

    for n in range(n_t):
        weight = cell_weights[n]
        drift_fn = None
        if drift_active and weight != 0.0:
            drift_fn = lambda t, x, w=weight: float(fc.beta(t)) * w * fc.affine(x)
        states[n + 1] = integrator.step(states[n], times[n], dt, drift_fn)
        running.add(n, dt, states[n + 1])

    meta = {
        "scheme": cfg.scheme,
        "halvings": integrator.halvings,
        "max_fp_iterations": integrator.max_iterations,
        "jumps": [],
    }
    if running.enabled:
        meta["psi_integral"] = running.values
    return Trajectory(times, states, meta)


def solve_skeleton(op: OperatorSpec, psi: PsiSpec, fc: JumpCoefficient, mark_space: MarkSpace,
                   g: ControlGrid, x0: SpectralField, cfg: SolverConfig) -> Trajectory:
    """
    Решает скелетное уравнение с управлением g.

    Args:
        g: управление на сетке cfg.n_t (или на сетке, кратно более грубой)
        x0: начальное условие в L²(μ)

    Returns:
        Trajectory: состояния на равномерной сетке, meta["psi_integral"]
        содержит ∫₀ᵗ Ψ(X) ds

    Raises:
        StepFailureError: итерация Пикара не сошлась после деления шага
    """
    trajectory = _integrate(op, psi, fc, mark_space, g, x0, cfg)
    trajectory.meta.update({"eps": 0.0, "delta": 0.0})
    logger.debug("Skeleton solved: n_t=%d, halvings=%d", cfg.n_t, trajectory.meta["halvings"])
    return trajectory


def solve_regularized(op: OperatorSpec, psi: PsiSpec, fc: JumpCoefficient, mark_space: MarkSpace,
                      g: ControlGrid, x0: SpectralField, cfg: SolverConfig,
                      eps: float = 0.0, delta: float = 0.0) -> Trajectory:
    """Та же схема со спектром λ_k + ε и нелинейностью Ψ + δ·id."""
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"Regularization eps must lie in [0, 1), got {eps}")
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"Regularization delta must lie in [0, 1), got {delta}")
    trajectory = _integrate(op.shifted(eps), psi.with_identity(delta), fc, mark_space, g, x0, cfg)
    trajectory.meta.update({"eps": eps, "delta": delta})
    return trajectory


@dataclass
class AprioriReport:
    """Сравнение sup_t |X(t)|₂² с константой априорной оценки."""

    sup_L2_sq: float
    bound: float
    c_l3: float
    q_cost: float
    in_SN: bool
    bound_ok: bool


def apriori_bound(x0: SpectralField, c_l3: float, T: float) -> float:
    """(2|x|₂² + 8C² + 4T)·e^{8C² + 4T}."""
    x_sq = float(np.sum(x0.coeffs ** 2))
    exponent = 8.0 * c_l3 ** 2 + 4.0 * T
    return (2.0 * x_sq + exponent) * float(np.exp(exponent))


def apriori_report(traj: Trajectory, x0: SpectralField, N: float, fc: JumpCoefficient,
                   mark_space: MarkSpace, g: ControlGrid) -> AprioriReport:
    """Проверка априорной оценки; C_{l₃,N} считается по фактическому управлению g."""
    if len(traj) == 0:
        raise ValueError("Trajectory is empty")
    T = float(traj.times[-1])
    c_l3 = h_integral(3, fc, mark_space, g)
    sup_sq = float(np.max(np.sum(traj.states ** 2, axis=1)))
    bound = apriori_bound(x0, c_l3, T)
    report = AprioriReport(
        sup_L2_sq=sup_sq,
        bound=bound,
        c_l3=c_l3,
        q_cost=q_cost(g, mark_space),
        in_SN=in_SN(g, mark_space, N),
        bound_ok=sup_sq <= bound,
    )
    if not report.bound_ok:
        logger.warning("A-priori bound violated: sup=%.6g > bound=%.6g", sup_sq, bound)
    return report


@dataclass
class ContinuityReport:
    """Расстояния sup_t ‖X^{g_n} − X^g‖_{F*} вдоль последовательности управлений."""

    distances: List[float]
    labels: List[float]
    monotone_decreasing: bool
    loglog_slope: Optional[float]
    max_q: float
    metric: str = "sup_t F12_star distance between skeleton trajectories"
    note: str = "a finite control sequence is a proxy for weak convergence in S^N"


def continuity_experiment(problem: Problem, g_seq: Sequence[ControlGrid], g_limit: ControlGrid,
                          labels: Optional[Sequence[float]] = None) -> ContinuityReport:
    """
    Непрерывность отображения g ↦ X^g.

    Для каждого g_n считается sup-расстояние до X^{g_limit}. Если заданы
    метки (например, частоты или n), по положительным расстояниям строится
    наклон в логарифмических координатах.
    """
    labels = list(labels) if labels is not None else list(range(1, len(g_seq) + 1))
    if len(labels) != len(g_seq):
        raise ValueError(f"Got {len(labels)} labels for {len(g_seq)} controls")

    def solve(g):
        return solve_skeleton(problem.op, problem.psi, problem.fc, problem.mark_space,
                              g, problem.x0, problem.cfg)

    limit = solve(g_limit)
    distances = [solve(g).sup_distance(limit, problem.op) for g in g_seq]
    max_q = max([q_cost(g, problem.mark_space) for g in g_seq] + [q_cost(g_limit, problem.mark_space)])

    slope = None
    positive = [(float(a), d) for a, d in zip(labels, distances) if d > 0.0 and a > 0]
    if len(positive) >= 2:
        fit = stats.linregress(np.log([a for a, _ in positive]), np.log([d for _, d in positive]))
        slope = float(fit.slope)

    report = ContinuityReport(
        distances=distances,
        labels=[float(a) for a in labels],
        monotone_decreasing=bool(np.all(np.diff(distances) < 0.0)),
        loglog_slope=slope,
        max_q=max_q,
    )
    logger.info("Continuity experiment (%s): distances=%s, slope=%s", report.metric, distances, slope)
    return report

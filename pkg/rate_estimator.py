"""
Оценка функции уровня I(φ) = inf{Q(g): φ = X^g} и проверка принципа
больших уклонений Монте-Карло.

minimize_rate ищет наименее затратное управление, при котором скелет
попадает в событие; результат всегда является верхней оценкой I.
mc_rare_event оценивает вероятности события для уравнения с шумом, а
ldp_slope_compare сравнивает экстраполяцию ε log P̂ к ε = 0 с −q*.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from control import ControlGrid, q_cost
from errors import InsufficientDataError, InvalidControlError
from jump_sde_solver import RngSpec, run_paths, solve_spde
from schemas import EventConfig, OptimizerConfig
from skeleton_solver import Problem, Trajectory, solve_skeleton
from spectral_space import OperatorSpec, norm_weights

logger = logging.getLogger(__name__)

OBSERVABLES = ("terminal_Fstar_norm", "terminal_mode", "path_sup_Fstar")
RATE_QUALIFIER = "upper bound on I"
U_BOUNDS = (-30.0, 8.0)


@dataclass(frozen=True)
class EventSpec:
    """Событие {observable(X) ≥ c} или {observable(X) ≤ c}."""

    observable: str
    threshold: float
    direction: str = ">="
    mode: int = 1

    def __post_init__(self):
        if self.observable not in OBSERVABLES:
            raise ValueError(f"Unknown observable: {self.observable}")
        if self.direction not in (">=", "<="):
            raise ValueError(f"Direction must be '>=' or '<=', got {self.direction}")
        if not np.isfinite(self.threshold):
            raise ValueError(f"Threshold must be finite, got {self.threshold}")
        if self.mode < 1:
            raise ValueError(f"Mode index is 1-based, got {self.mode}")

    @classmethod
    def from_config(cls, config: EventConfig) -> "EventSpec":
        """Событие из схемы конфигурации."""
        return cls(config.observable, config.threshold, config.direction, config.mode)

    def evaluate(self, traj: Trajectory, op: OperatorSpec) -> float:
        """Значение наблюдаемой на траектории."""
        if self.observable == "terminal_mode":
            if self.mode > traj.K:
                raise ValueError(f"Mode {self.mode} exceeds K={traj.K}")
            return float(traj.states[-1, self.mode - 1])
        weights = norm_weights(op, "F12_star")
        if self.observable == "terminal_Fstar_norm":
            return float(np.sqrt(np.sum(weights * traj.states[-1] ** 2)))
        return float(np.sqrt(np.max(traj.states ** 2 @ weights)))

    def violation(self, traj: Trajectory, op: OperatorSpec) -> float:
        """Невязка попадания в событие (0, если событие выполнено)."""
        value = self.evaluate(traj, op)
        if self.direction == ">=":
            return max(0.0, self.threshold - value)
        return max(0.0, value - self.threshold)

    def realized(self, traj: Trajectory, op: OperatorSpec) -> bool:
        """Выполнено ли событие."""
        return self.violation(traj, op) == 0.0


@dataclass
class RateResult:
    """Лучшее найденное управление и его стоимость."""

    g_star: ControlGrid
    q_star: float
    gap: float
    feasible: bool
    trace: Dict[str, object] = field(default_factory=dict)
    qualifier: str = RATE_QUALIFIER


class _PenaltyObjective:
    """F_ρ(u) = Q(exp(u)) + ρ·violation(X^{exp(u)})² с конечно-разностным градиентом."""

    def __init__(self, event: EventSpec, problem: Problem, cells: int, fd_step: float):
        self.event = event
        self.problem = problem
        self.cells = cells
        self.m = problem.mark_space.m
        self.fd_step = fd_step
        self.rho = 0.0
        self.evaluations = 0

    def control(self, u: np.ndarray) -> ControlGrid:
        """Управление exp(u) на грубой сетке."""
        return ControlGrid(np.exp(u).reshape(self.cells, self.m), self.problem.cfg.T)

    def violation(self, g: ControlGrid) -> float:
        """Невязка события для скелета с управлением g."""
        p = self.problem
        self.evaluations += 1
        traj = solve_skeleton(p.op, p.psi, p.fc, p.mark_space, g.refine(p.cfg.n_t), p.x0, p.cfg)
        return self.event.violation(traj, p.op)

    def value(self, u: np.ndarray) -> float:
        g = self.control(u)
        return q_cost(g, self.problem.mark_space) + self.rho * self.violation(g) ** 2

    def __call__(self, u: np.ndarray):
        base = self.value(u)
        grad = np.empty_like(u)
        for i in range(u.size):
            stepped = u.copy()
            stepped[i] += self.fd_step
            grad[i] = (self.value(stepped) - base) / self.fd_step
        return base, grad


def minimize_rate(event: EventSpec, problem: Problem, opt: Optional[OptimizerConfig] = None,
                  rng: Optional[np.random.Generator] = None) -> RateResult:
    """
    Штрафная минимизация Q(g) по управлениям g = exp(u), переводящим скелет в событие.

    Args:
        opt: число стартов, итераций, лестница штрафов, шаг конечных разностей
            и число ячеек управления по времени (делитель n_t)

    Returns:
        RateResult: q_star = Q(g_star); при недостижимости события
        q_star = inf, feasible = False и g_star с наименьшей невязкой
    """
    opt = opt if opt is not None else OptimizerConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    cfg, mark_space = problem.cfg, problem.mark_space
    cells = opt.control_cells if opt.control_cells is not None else cfg.n_t
    if cfg.n_t % cells != 0:
        raise InvalidControlError(f"control_cells={cells} does not divide n_t={cfg.n_t}")

    objective = _PenaltyObjective(event, problem, cells, opt.fd_step)
    null = ControlGrid.null(cells, mark_space.m, cfg.T)
    null_gap = objective.violation(null)
    if null_gap <= opt.gap_tol:
        logger.info("Null control realizes the event (gap=%.3e); rate is zero", null_gap)
        return RateResult(null, q_cost(null, mark_space), null_gap, True,
                          {"starts": 0, "evaluations": objective.evaluations, "null_gap": null_gap})

    dim = cells * mark_space.m
    starts = [np.zeros(dim)] + [opt.perturbation * rng.standard_normal(dim)
                                for _ in range(opt.n_starts - 1)]
    bounds = [U_BOUNDS] * dim

    best_feasible: Optional[RateResult] = None
    least_violating: Optional[RateResult] = None
    start_summaries: List[Dict[str, float]] = []
    for index, u0 in enumerate(starts):
        u = np.clip(u0, *U_BOUNDS)
        for rho in opt.penalties:
            objective.rho = rho
            result = minimize(objective, u, jac=True, method="L-BFGS-B", bounds=bounds,
                              options={"maxiter": opt.max_iters})
            u = result.x
        g = objective.control(u)
        gap = objective.violation(g)
        q = q_cost(g, mark_space)
        start_summaries.append({"start": index, "q": q, "gap": gap})
        logger.debug("Start %d finished: Q=%.6g, gap=%.3e", index, q, gap)

        candidate = RateResult(g, q, gap, gap <= opt.gap_tol)
        if candidate.feasible and (best_feasible is None or q < best_feasible.q_star):
            best_feasible = candidate
        if least_violating is None or gap < least_violating.gap:
            least_violating = candidate

    trace = {
        "starts": len(starts),
        "evaluations": objective.evaluations,
        "null_gap": null_gap,
        "per_start": start_summaries,
        "penalties": list(opt.penalties),
    }
    if best_feasible is not None:
        best_feasible.trace = trace
        logger.info("Rate estimate: q*=%.6g (gap=%.3e)", best_feasible.q_star, best_feasible.gap)
        return best_feasible

    logger.warning("No start reached gap <= %.1e; event treated as infeasible", opt.gap_tol)
    return RateResult(least_violating.g_star, float("inf"), least_violating.gap, False, trace)


@dataclass
class RareEventTable:
    """Строки {eps, p_hat, eps_log_p, stderr, hits, trials, valid}."""

    rows: List[Dict[str, object]] = field(default_factory=list)

    def valid_rows(self) -> List[Dict[str, object]]:
        """Строки с P̂ > 0."""
        return [row for row in self.rows if row["valid"]]


def mc_rare_event(event: EventSpec, problem: Problem, eps_list: Sequence[float], trials: int,
                  rng: RngSpec, workers: int = 1) -> RareEventTable:
    """
    Доля траекторий X^ε (φ ≡ 1), попавших в событие, для каждого ε.

    Погрешность ε log P̂ оценивается дельта-методом: ε·√((1 − P̂)/(P̂·trials)).
    Строки с P̂ = 0 помечаются как невалидные.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    p = problem
    table = RareEventTable()
    for index, eps in enumerate(eps_list):
        eps_stream = rng.spawn(index)

        def one_path(i, eps=eps, eps_stream=eps_stream):
            path = solve_spde(p.op, p.psi, p.fc, p.mark_space, eps, p.x0, p.cfg,
                              rng=eps_stream.spawn(i).generator())
            return 1.0 if event.realized(path, p.op) else 0.0

        hits = int(np.sum(run_paths(one_path, trials, workers)))
        p_hat = hits / trials
        valid = hits > 0
        row = {
            "eps": float(eps),
            "p_hat": p_hat,
            "eps_log_p": float(eps * np.log(p_hat)) if valid else float("nan"),
            "stderr": float(eps * np.sqrt((1.0 - p_hat) / (p_hat * trials))) if valid else float("nan"),
            "hits": hits,
            "trials": trials,
            "valid": valid,
        }
        if not valid:
            logger.warning("No hits at eps=%.4g over %d trials; row excluded from the fit", eps, trials)
        logger.info("Rare event eps=%.4g: p_hat=%.3e (%d hits)", eps, p_hat, hits)
        table.rows.append(row)
    return table


@dataclass
class LdpReport:
    """Сравнение экстраполированного ε log P̂ с −I."""

    minus_I: float
    extrapolated: float
    relative_gap: Optional[float]
    comparable: bool
    n_rows: int
    gap_kind: str
    qualifier: str = RATE_QUALIFIER


def ldp_slope_compare(rate: RateResult, mc_table: RareEventTable) -> LdpReport:
    """
    Линейная экстраполяция ε log P̂ к ε = 0 и сравнение с −q*.

    Raises:
        InsufficientDataError: меньше трёх валидных строк
    """
    rows = mc_table.valid_rows()
    if len(rows) < 3:
        raise InsufficientDataError(f"Need at least 3 valid Monte Carlo rows, got {len(rows)}")
    eps = np.array([row["eps"] for row in rows], dtype=float)
    values = np.array([row["eps_log_p"] for row in rows], dtype=float)
    extrapolated = float(np.polyfit(eps, values, 1)[1])

    if not rate.feasible:
        logger.warning("Rate result is infeasible; LDP comparison is not meaningful")
        return LdpReport(float("-inf"), extrapolated, None, False, len(rows), "incomparable")

    minus_I = -rate.q_star
    if rate.q_star > 0.0:
        gap, kind = abs(extrapolated - minus_I) / rate.q_star, "relative"
    else:
        gap, kind = abs(extrapolated), "absolute"
    return LdpReport(minus_I, extrapolated, gap, True, len(rows), kind)

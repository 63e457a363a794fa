"""
Приёмочные проверки пакета.

Каждая проверка строит свою небольшую задачу, выполняет расчёт и
возвращает CheckResult с наблюдаемым значением и порогом. Нарушение
свойства не бросает исключение, а отражается в поле passed.
"""
import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import stats

from control import ControlGrid, entropy_l, oscillating, q_cost, random_in_SN
from jump_sde_solver import (
    RngSpec,
    condition_b_experiment,
    run_paths,
    sample_controlled_prm,
    sample_prm,
    solve_spde,
)
from mark_space import JumpCoefficient, make_mark_space
from nonlinearity import check_H1, make_psi
from rate_estimator import EventSpec, ldp_slope_compare, mc_rare_event, minimize_rate
from schemas import OptimizerConfig, SolverConfig
from skeleton_solver import (
    Problem,
    apriori_report,
    continuity_experiment,
    solve_regularized,
    solve_skeleton,
)
from spectral_space import SpectralField, make_operator, norm, to_grid

logger = logging.getLogger(__name__)

SCALES = {
    "quick": {
        "h1_samples": 10_000, "q_grids": 100, "apriori_controls": 10, "prm_reps": 2_000,
        "mean_paths": 1_000, "condb_trials": 200, "ldp_trials": 20_000,
    },
    "full": {
        "h1_samples": 100_000, "q_grids": 100, "apriori_controls": 50, "prm_reps": 10_000,
        "mean_paths": 10_000, "condb_trials": 1_000, "ldp_trials": 100_000,
    },
}
CHECK_FIELDS = ["name", "passed", "value", "threshold", "detail"]


@dataclass
class CheckResult:
    """Итог одной проверки."""

    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0
    budget: Optional[float] = None

    @property
    def within_budget(self) -> bool:
        """Уложилась ли проверка в отведённое время."""
        return self.budget is None or self.seconds <= self.budget

    def as_row(self) -> Dict[str, object]:
        """Строка таблицы verify.csv."""
        return {name: getattr(self, name) for name in CHECK_FIELDS}


def single_mark_problem(K: int, psi, cfg: SolverConfig, x0: Optional[SpectralField] = None,
                        eta: Optional[SpectralField] = None, c: float = 0.0,
                        sigma: float = 1.0, weight: float = 1.0) -> Problem:
    """Задача с одной меткой и лапласианом на K модах."""
    eta = eta if eta is not None else SpectralField.unit(K, 1)
    return Problem(
        op=make_operator("laplacian", K),
        psi=psi,
        fc=JumpCoefficient(sigma=np.array([sigma]), eta=eta, c=c),
        mark_space=make_mark_space([1.0], [weight]),
        x0=x0 if x0 is not None else SpectralField.unit(K, 1),
        cfg=cfg,
    )


def ldp_problem(n_t: int = 10) -> Problem:
    """Одномодовая задача: a = λ·k₀ = 0.01, аддитивный шум, x0 = 0."""
    return single_mark_problem(1, make_psi("linear", k0=0.01), SolverConfig(T=1.0, n_t=n_t),
                               x0=SpectralField.zeros(1))


def scalar_rate_oracle(threshold: float, a: float = 0.01, T: float = 1.0,
                       weight: float = 1.0, step: float = 1e-3) -> float:
    """Перебор постоянных управлений g ∈ [0, 10] с шагом step для dX = −aX + (g − 1)ν."""
    grid = np.arange(0.0, 10.0 + 0.5 * step, step)
    terminal = (grid - 1.0) * weight * (1.0 - np.exp(-a * T)) / a
    feasible = terminal >= threshold
    if not np.any(feasible):
        return float("inf")
    return float(np.min(entropy_l(grid[feasible]) * weight * T))


def check_heat_oracle(rng: RngSpec, sizes: dict) -> CheckResult:
    cfg = SolverConfig(T=0.5, n_t=5000)
    p = single_mark_problem(4, make_psi("linear", k0=1.0), cfg, x0=SpectralField(np.ones(4)))
    traj = solve_skeleton(p.op, p.psi, p.fc, p.mark_space, ControlGrid.null(cfg.n_t, 1, cfg.T),
                          p.x0, cfg)
    exact = np.exp(-p.op.eigenvalues * cfg.T)
    error = float(np.max(np.abs(traj.states[-1] - exact) / exact))
    return CheckResult("heat_oracle", error <= 1e-5, error, 1e-5,
                       "max relative error per mode", budget=1.0)


def check_stefan_fixed_point(rng: RngSpec, sizes: dict) -> CheckResult:
    cfg = SolverConfig(T=1.0, n_t=200)
    psi = make_psi("stefan", a=1.0, b=2.0, rho=1.0)
    p = single_mark_problem(4, psi, cfg, x0=SpectralField.unit(4, 1).scaled(0.5))
    values = to_grid(p.op, p.x0, cfg.collocation_size(4))
    inside = bool(np.all((values > 0.0) & (values < 1.0)))
    traj = solve_skeleton(p.op, psi, p.fc, p.mark_space, ControlGrid.null(cfg.n_t, 1), p.x0, cfg)
    distance = norm(traj.terminal - p.x0, p.op, "F12_star")
    return CheckResult("stefan_fixed_point", inside and distance <= 1e-12, distance, 1e-12,
                       f"initial grid inside mushy region: {inside}")


def check_strong_monotonicity(rng: RngSpec, sizes: dict) -> CheckResult:
    families = {
        "linear": make_psi("linear", k0=1.0),
        "stefan": make_psi("stefan", a=1.0, b=2.0, rho=1.0),
        "tanh_saturating": make_psi("tanh_saturating", k0=1.5, s=0.5),
    }
    worst, details = np.inf, []
    for index, (name, psi) in enumerate(families.items()):
        report = check_H1(psi, n_samples=sizes["h1_samples"], rng=rng.spawn(index).generator())
        worst = min(worst, report.strong_monotonicity_slack)
        details.append(f"{name}={report.strong_monotonicity_slack:.3e}")
    return CheckResult("strong_monotonicity", worst >= -1e-12, worst, -1e-12, ", ".join(details))


def _q_cost_by_cells(g: ControlGrid, weights: np.ndarray) -> float:
    total = 0.0
    for i in range(g.n_t):
        for j in range(g.m):
            r = float(g.values[i, j])
            cell = 1.0 if r == 0.0 else r * np.log(r) - r + 1.0
            total += cell * weights[j] * g.dt
    return total


def check_q_cost_oracle(rng: RngSpec, sizes: dict) -> CheckResult:
    gen = rng.generator()
    worst = 0.0
    for _ in range(sizes["q_grids"]):
        n_t, m = int(gen.integers(1, 20)), int(gen.integers(1, 5))
        values = np.exp(gen.standard_normal((n_t, m)))
        values[gen.random((n_t, m)) < 0.1] = 0.0
        ms = make_mark_space(np.arange(m), gen.uniform(0.1, 2.0, m))
        g = ControlGrid(values, float(gen.uniform(0.5, 2.0)))
        reference = _q_cost_by_cells(g, ms.weights)
        worst = max(worst, abs(q_cost(g, ms) - reference) / max(1.0, abs(reference)))
    exact_points = entropy_l(1.0) == 0.0 and entropy_l(0.0) == 1.0
    return CheckResult("q_cost_oracle", exact_points and worst <= 1e-12, worst, 1e-12,
                       f"l(1)=0 and l(0)=1 exact: {exact_points}")


def check_apriori_bound(rng: RngSpec, sizes: dict) -> CheckResult:
    cfg = SolverConfig(T=1.0, n_t=50)
    op = make_operator("laplacian", 4)
    ms = make_mark_space([1.0, 2.0], [1.0, 0.5])
    fc = JumpCoefficient(sigma=np.array([1.0, 0.5]), eta=SpectralField.unit(4, 1), c=0.5)
    psi = make_psi("tanh_saturating", k0=1.0, s=1.0)
    x0 = SpectralField.unit(4, 1)
    gen = rng.generator()
    violations, worst_ratio = 0, 0.0
    for N in (1.0, 2.0, 5.0):
        for _ in range(sizes["apriori_controls"]):
            g = random_in_SN(10, ms, cfg.T, N, gen).refine(cfg.n_t)
            report = apriori_report(solve_skeleton(op, psi, fc, ms, g, x0, cfg), x0, N, fc, ms, g)
            violations += int(not report.bound_ok or not report.in_SN)
            worst_ratio = max(worst_ratio, report.sup_L2_sq / report.bound)
    return CheckResult("apriori_bound", violations == 0, float(violations), 0.0,
                       f"max sup/bound ratio {worst_ratio:.3e}")


def _ladder_ratios(distances: List[float]) -> List[float]:
    return [distances[i] / distances[i + 1] for i in range(len(distances) - 1)]


def check_regularization_ladders(rng: RngSpec, sizes: dict) -> CheckResult:
    cfg = SolverConfig(T=1.0, n_t=200)
    p = single_mark_problem(4, make_psi("linear", k0=1.0), cfg, x0=SpectralField(np.ones(4)))
    g = ControlGrid.constant(cfg.n_t, 1, cfg.T, 2.0)
    base = solve_skeleton(p.op, p.psi, p.fc, p.mark_space, g, p.x0, cfg)
    ladder = (0.2, 0.1, 0.05, 0.025)
    eps_d = [solve_regularized(p.op, p.psi, p.fc, p.mark_space, g, p.x0, cfg, eps=e)
             .sup_distance(base, p.op) for e in ladder]
    eps_fixed = solve_regularized(p.op, p.psi, p.fc, p.mark_space, g, p.x0, cfg, eps=0.1)
    delta_d = [solve_regularized(p.op, p.psi, p.fc, p.mark_space, g, p.x0, cfg, eps=0.1, delta=d)
               .sup_distance(eps_fixed, p.op) for d in ladder]
    eps_ratios, delta_ratios = _ladder_ratios(eps_d), _ladder_ratios(delta_d)
    passed = all(1.5 <= r <= 2.5 for r in eps_ratios) and all(1.3 <= r <= 2.7 for r in delta_ratios)
    worst = max([abs(r - 2.0) for r in eps_ratios + delta_ratios])
    return CheckResult("regularization_ladders", passed, worst, 0.5,
                       f"eps ratios {np.round(eps_ratios, 4).tolist()}, "
                       f"delta ratios {np.round(delta_ratios, 4).tolist()}")


def poisson_chisquare(counts: np.ndarray, mean: float) -> float:
    """p-значение критерия хи-квадрат для выборки счётчиков против Poisson(mean)."""
    edges = np.unique(stats.poisson.ppf(np.linspace(0.05, 0.95, 10), mean).astype(int))
    cdf = stats.poisson.cdf(edges, mean)
    probs = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
    observed = np.bincount(np.searchsorted(edges, counts, side="left"), minlength=probs.size)
    expected = probs * counts.size
    expected *= observed.sum() / expected.sum()
    return float(stats.chisquare(observed, expected).pvalue)


def check_prm_statistics(rng: RngSpec, sizes: dict) -> CheckResult:
    ms = make_mark_space([1.0, 2.0], [1.5, 0.5])
    eps, T, reps = 0.1, 1.0, sizes["prm_reps"]
    plain = np.array([sample_prm(ms, T, 1.0 / eps, rng.spawn(0).spawn(i).generator()).counts(ms.m)
                      for i in range(reps)])
    p_values = [poisson_chisquare(plain[:, j], ms.weights[j] * T / eps) for j in range(ms.m)]

    kappa = 2.0
    phi = ControlGrid.constant(10, ms.m, T, kappa)
    thinned = np.array([
        len(sample_controlled_prm(ms, T, eps, phi, kappa, rng.spawn(1).spawn(i).generator()))
        for i in range(reps)
    ])
    expected = kappa * ms.total_mass * T / eps
    z = abs(thinned.mean() - expected) / (thinned.std(ddof=1) / np.sqrt(reps))
    passed = min(p_values) > 0.01 and z <= 3.0
    return CheckResult("prm_statistics", passed, min(p_values), 0.01,
                       f"chi-square p per mark {np.round(p_values, 4).tolist()}, thinning z={z:.3f}")


def check_compensation_mean(rng: RngSpec, sizes: dict, workers: int = 1) -> CheckResult:
    cfg = SolverConfig(T=1.0, n_t=50, track_psi_integral=False)
    p = single_mark_problem(2, make_psi("linear", k0=1.0), cfg)
    eps, paths = 0.1, sizes["mean_paths"]
    skeleton = solve_skeleton(p.op, p.psi, p.fc, p.mark_space, ControlGrid.null(cfg.n_t, 1),
                              p.x0, cfg)
    checkpoints = np.linspace(cfg.n_t // 10, cfg.n_t, 10).astype(int)
    samples = np.empty((paths, checkpoints.size))

    def one_path(i):
        traj = solve_spde(p.op, p.psi, p.fc, p.mark_space, eps, p.x0, cfg,
                          rng=rng.spawn(i).generator())
        samples[i] = traj.states[checkpoints, 0]
        return 0.0

    run_paths(one_path, paths, workers)
    stderr = samples.std(axis=0, ddof=1) / np.sqrt(paths)
    z = np.abs(samples.mean(axis=0) - skeleton.states[checkpoints, 0]) / stderr
    worst = float(np.max(z))
    return CheckResult("compensation_mean", worst <= 3.0, worst, 3.0,
                       f"{paths} paths, {checkpoints.size} checkpoints")


def check_condition_b(rng: RngSpec, sizes: dict, workers: int = 1) -> CheckResult:
    cfg = SolverConfig(T=1.0, n_t=50, track_psi_integral=False)
    p = single_mark_problem(2, make_psi("linear", k0=1.0), cfg)
    phi = ControlGrid.constant(cfg.n_t, 1, cfg.T, 1.5)
    report = condition_b_experiment(p.op, p.psi, p.fc, p.mark_space, phi,
                                    [0.2, 0.1, 0.05, 0.025], sizes["condb_trials"], cfg, rng,
                                    x0=p.x0, workers=workers)
    slope = report.slope if report.slope is not None else float("nan")
    return CheckResult("condition_b_rate", abs(slope - 1.0) <= 0.3, slope, 1.0,
                       "log-log slope, tolerance 0.3", budget=300.0)


def check_continuity(rng: RngSpec, sizes: dict) -> CheckResult:
    cfg = SolverConfig(T=1.0, n_t=256)
    p = single_mark_problem(4, make_psi("linear", k0=1.0), cfg)
    frequencies = [4, 8, 16, 32]
    g_seq = [oscillating(cfg.n_t, 1, cfg.T, n) for n in frequencies]
    report = continuity_experiment(p, g_seq, ControlGrid.null(cfg.n_t, 1, cfg.T), frequencies)
    return CheckResult("continuity", report.monotone_decreasing, report.distances[-1],
                       report.distances[0],
                       f"{report.metric}: {np.round(report.distances, 8).tolist()}")


def check_ldp_consistency(rng: RngSpec, sizes: dict, workers: int = 1) -> CheckResult:
    p = ldp_problem()
    event = EventSpec("terminal_mode", 1.0, ">=", 1)
    rate = minimize_rate(event, p, OptimizerConfig(control_cells=1),
                         rng=rng.spawn(0).generator())
    oracle = scalar_rate_oracle(1.0)
    oracle_gap = abs(rate.q_star - oracle) / oracle
    table = mc_rare_event(event, p, [0.2, 0.1, 0.05], sizes["ldp_trials"], rng.spawn(1), workers)
    p_first = table.rows[0]["p_hat"]
    try:
        report = ldp_slope_compare(rate, table)
        gap = report.relative_gap if report.relative_gap is not None else float("inf")
    except ValueError as e:
        logger.warning("LDP comparison failed: %s", e)
        gap = float("inf")
    passed = gap <= 0.25 and oracle_gap <= 0.05 and 1e-3 <= p_first <= 1e-1
    return CheckResult("ldp_consistency", passed, gap, 0.25,
                       f"q*={rate.q_star:.6f}, oracle={oracle:.6f}, P(0.2)={p_first:.4g}",
                       budget=600.0)


def check_determinism(rng: RngSpec, sizes: dict) -> CheckResult:
    cfg = SolverConfig(T=1.0, n_t=50)
    p = single_mark_problem(2, make_psi("tanh_saturating", k0=1.0, s=0.5), cfg)
    runs = [solve_spde(p.op, p.psi, p.fc, p.mark_space, 0.1, p.x0, cfg, rng=rng.generator())
            for _ in range(2)]
    identical = runs[0].states.tobytes() == runs[1].states.tobytes()
    return CheckResult("determinism", identical, float(identical), 1.0, "two runs, same seed")


CHECKS: Dict[str, Callable[..., CheckResult]] = {
    "heat_oracle": check_heat_oracle,
    "stefan_fixed_point": check_stefan_fixed_point,
    "strong_monotonicity": check_strong_monotonicity,
    "q_cost_oracle": check_q_cost_oracle,
    "apriori_bound": check_apriori_bound,
    "regularization_ladders": check_regularization_ladders,
    "prm_statistics": check_prm_statistics,
    "compensation_mean": check_compensation_mean,
    "condition_b_rate": check_condition_b,
    "continuity": check_continuity,
    "ldp_consistency": check_ldp_consistency,
    "determinism": check_determinism,
}
PARALLEL_CHECKS = ("compensation_mean", "condition_b_rate", "ldp_consistency")


def run_verification(seed: int, scale: str = "quick", trials: Optional[int] = None,
                     only: Optional[List[str]] = None, workers: int = 1) -> List[CheckResult]:
    """
    Выполняет приёмочные проверки.

    Args:
        seed: зерно; проверка с номером i использует поток RngSpec(seed, i)
        scale: quick или full (размеры выборок)
        trials: число траекторий на ε для проверки принципа больших уклонений
        only: подмножество имён проверок
    """
    if scale not in SCALES:
        raise ValueError(f"Unknown verification scale: {scale}")
    unknown = sorted(set(only or ()) - set(CHECKS))
    if unknown:
        raise ValueError(f"Unknown checks: {', '.join(unknown)}")
    sizes = dict(SCALES[scale])
    if trials is not None:
        sizes["ldp_trials"] = trials

    results = []
    for index, (name, check) in enumerate(CHECKS.items()):
        if only and name not in only:
            continue
        started = time.perf_counter()
        kwargs = {"workers": workers} if name in PARALLEL_CHECKS else {}
        result = check(RngSpec(seed, index), sizes, **kwargs)
        result.seconds = round(time.perf_counter() - started, 3)
        logger.info("Check %s: %s (value=%.6g, threshold=%.6g)", name,
                    "passed" if result.passed else "FAILED", result.value, result.threshold)
        if not result.within_budget:
            logger.warning("Check %s took %.1fs, budget %.1fs", name, result.seconds, result.budget)
        results.append(result)
    return results

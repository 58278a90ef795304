"""Experiment harness: configs to problems, runs, sweeps, and the two
desk-scale reproduction protocols.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import stepsizes as sz
from .algorithms import WR_METHODS, DivergenceError, MethodSpec, Sampler, simulate
from .compressors import Compressor, dithering, identity, rand_k
from .config import ConfigError, ExperimentConfig
from .data import PartitionRule, load_libsvm, make_synthetic, partition
from .diagnostics import RunRecord, write_csv
from .objective import FiniteSumProblem
from .rng import RngStream

__all__ = [
    "SweepError",
    "SweepEntry",
    "build_problem",
    "build_sampler",
    "resolve_method",
    "lambda_for_condition_number",
    "run",
    "sweep",
    "reproduce_exp1",
    "reproduce_exp2",
    "EXP1_METHODS",
    "EXP2_METHODS",
    "REDUCED_GRID",
]

EXP1_METHODS = ("qrr", "diana_rr", "qsgd", "diana")
EXP2_METHODS = ("q_nastya", "diana_nastya", "local_sgd_q")
# Seven log-spaced values out of the full tuning grid (spacing x8).
REDUCED_GRID = (0.0156, 0.125, 1.0, 8.0, 64.0, 512.0, 4096.0)


class SweepError(RuntimeError):
    """Every stepsize multiplier in the sweep diverged."""

    def __init__(self, rounds: dict):
        super().__init__(f"all multipliers diverged (divergence rounds: {rounds})")
        self.rounds = rounds


def lambda_for_condition_number(problem_builder, kappa: float, tol: float = 1e-3, max_iters: int = 200) -> float:
    """Solve for lam such that L(lam)/mu(lam) is approximately kappa.

    ``problem_builder(lam)`` must return the problem built with that weight.
    Fixed-point iteration on t = 2*lam: t <- (L_data + t)/kappa.
    """
    if kappa <= 1.0:
        raise ConfigError("condition number target must exceed 1")
    t = 1.0
    for _ in range(max_iters):
        prob = problem_builder(t / 2.0)
        c = prob.constants
        new_t = c.L / kappa
        if abs(new_t - t) <= tol * t:
            t = new_t
            break
        t = new_t
    lam = t / 2.0
    check = problem_builder(lam).constants
    if abs(check.L / check.mu - kappa) > tol * kappa:
        raise ConfigError(f"condition-number rule failed to converge (got {check.L / check.mu:.4g})")
    return lam


def build_problem(cfg: ExperimentConfig) -> FiniteSumProblem:
    ds = cfg.dataset
    if ds.kind == "synthetic":
        lam = ds.lam if ds.lam is not None else 0.0
        if ds.condition_number is not None:
            if ds.problem != "logistic":
                raise ConfigError("condition-number rule applies to logistic problems")
            lam = lambda_for_condition_number(
                lambda l: make_synthetic(ds.M, ds.n, ds.d, ds.heterogeneity or 0.0,
                                         kind="logistic", lam=l, seed=cfg.seed),
                ds.condition_number,
            )
        return make_synthetic(
            ds.M, ds.n, ds.d, ds.heterogeneity or 0.0,
            kind=ds.problem, lam=lam, seed=cfg.seed,
        )
    try:
        points, d = load_libsvm(ds.path)
    except OSError as exc:
        raise FileNotFoundError(f"cannot read dataset {ds.path!r}: {exc}") from exc
    rule = PartitionRule(ds.partition, ds.M)
    rng = RngStream(cfg.seed).child("partition").generator() if ds.partition == "iid_shuffle_split" else None
    clients = partition(points, rule, rng)
    if ds.condition_number is not None:
        lam = lambda_for_condition_number(
            lambda l: FiniteSumProblem(clients, lam=l, kind="logistic", d=d),
            ds.condition_number,
        )
    else:
        lam = ds.lam if ds.lam is not None else 0.0
    return FiniteSumProblem(clients, lam=lam, kind="logistic", d=d)


def default_policy(method_name: str) -> str:
    if method_name in WR_METHODS or method_name == "local_sgd_q":
        return "with_replacement"
    if method_name == "diana_rr":
        return "rr_once"  # shuffle once, matching the reference experiments
    return "rr_every_epoch"


def batch_sizes_for(problem: FiniteSumProblem, batch_fraction: float | None) -> tuple[int, ...]:
    if batch_fraction is None:
        return tuple(1 for _ in problem.n_m)
    return tuple(max(1, math.floor(batch_fraction * n)) for n in problem.n_m)


def build_sampler(cfg: ExperimentConfig, problem: FiniteSumProblem) -> Sampler:
    policy = cfg.sampling.policy or default_policy(cfg.method.name)
    sizes = batch_sizes_for(problem, cfg.sampling.batch_fraction)
    return Sampler(problem, policy, sizes, RngStream(cfg.seed))


def build_compressor(cfg: ExperimentConfig, d: int) -> Compressor:
    spec = cfg.compressor
    if spec.kind == "identity":
        return identity()
    if spec.kind == "rand_k":
        return rand_k(spec.k, d)
    return dithering(spec.levels, d)


def resolve_method(cfg: ExperimentConfig, problem: FiniteSumProblem, sampler: Sampler) -> MethodSpec:
    """Fill in stepsizes (theory preset or manual) and build the MethodSpec.

    Theory presets consume the composite epoch length n' = steps per epoch,
    which equals n for unit batches.  The multiplier scales gamma, and eta for
    the server-step methods; alpha is never scaled.
    """
    mc = cfg.method
    comp = build_compressor(cfg, problem.d)
    omega = comp.omega
    M = problem.M
    n_eff = sampler.steps_per_epoch
    c = problem.constants
    mult = mc.multiplier
    gamma = eta = alpha = None
    if mc.stepsize_preset == "manual":
        gamma, eta, alpha = mc.gamma, mc.eta, mc.alpha
    else:
        name = mc.name
        if name in ("qrr", "fedrr"):
            gamma = sz.preset_qrr(c, omega, M)
        elif name == "diana_rr":
            gamma, alpha = sz.preset_diana_rr(c, omega, M, n_eff)
        elif name in ("q_nastya", "nastya"):
            gamma, eta = sz.preset_q_nastya(c, omega, M, n_eff)
        elif name == "diana_nastya":
            gamma, eta, alpha = sz.preset_diana_nastya(c, omega, M, n_eff)
        elif name == "qsgd":
            gamma = sz.preset_qsgd(c, omega, M)
        elif name == "diana":
            gamma, alpha = sz.preset_diana(c, omega, M)
        elif name == "local_sgd_q":
            gamma, eta = sz.preset_local_sgd_q(c, omega, M, n_eff)
        if gamma is not None and not math.isfinite(gamma):
            raise ConfigError(f"theory preset for {name} is unbounded on this problem")
    gamma = gamma * mult if gamma is not None else None
    eta = eta * mult if eta is not None else None
    policy = cfg.sampling.policy or default_policy(mc.name)
    try:
        return MethodSpec(name=mc.name, compressor=comp, policy=policy,
                          gamma=gamma, eta=eta, alpha=alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _perturbed_start(problem: FiniteSumProblem, seed: int, scale: float, solver_tol: float) -> np.ndarray:
    direction = RngStream(seed).child("x0").generator().standard_normal(problem.d)
    direction /= np.linalg.norm(direction)
    return problem.reference(solver_tol) + scale * direction


def run(
    cfg: ExperimentConfig,
    problem: FiniteSumProblem | None = None,
    *,
    x0: np.ndarray | None = None,
    x0_scale: float | None = None,
    solver_tol: float = 1e-10,
    on_round=None,
) -> list[RunRecord]:
    """Execute one configured run; writes the CSV when cfg.out is set."""
    problem = problem if problem is not None else build_problem(cfg)
    sampler = build_sampler(cfg, problem)
    method = resolve_method(cfg, problem, sampler)
    if x0 is None and x0_scale is not None:
        x0 = _perturbed_start(problem, cfg.seed, x0_scale, solver_tol)
    records, _ = simulate(
        problem, method, sampler,
        epochs=cfg.epochs,
        x0=x0,
        record_every=cfg.record.every,
        record_lyapunov=cfg.record.lyapunov,
        solver_tol=solver_tol,
        on_round=on_round,
    )
    if cfg.out:
        write_csv(records, cfg.out)
    return records


@dataclass(frozen=True)
class SweepEntry:
    multiplier: float
    final_f_gap: float
    diverged_at: int | None = None


def sweep(
    cfg: ExperimentConfig,
    multipliers,
    *,
    problem: FiniteSumProblem | None = None,
    seeds: int = 1,
) -> tuple[float, list[SweepEntry]]:
    """Run every multiplier (averaging final f_gap over ``seeds`` seeds) and
    return (best multiplier, per-multiplier summary).  Ties prefer the smaller
    multiplier; a grid where everything diverges raises SweepError."""
    problem = problem if problem is not None else build_problem(cfg)
    entries: list[SweepEntry] = []
    for mult in multipliers:
        base = cfg.replace(**{"method.multiplier": float(mult), "out": None})
        gaps = []
        diverged_at = None
        for s in range(seeds):
            try:
                records = run(base.replace(seed=cfg.seed + s), problem)
                gaps.append(records[-1].f_gap)
            except DivergenceError as exc:
                diverged_at = exc.round_index
                break
        if diverged_at is None:
            entries.append(SweepEntry(float(mult), float(np.mean(gaps))))
        else:
            entries.append(SweepEntry(float(mult), math.inf, diverged_at))
    finite = [e for e in entries if math.isfinite(e.final_f_gap)]
    if not finite:
        raise SweepError({e.multiplier: e.diverged_at for e in entries})
    best = min(finite, key=lambda e: (e.final_f_gap, e.multiplier))
    return best.multiplier, entries


def _exp_config(data_path, method_name, k, epochs, seed) -> ExperimentConfig:
    return ExperimentConfig().replace(**{
        "dataset.kind": "libsvm",
        "dataset.path": str(data_path),
        "dataset.M": 20,
        "dataset.lambda": 1.29e-4,
        "dataset.partition": "sorted_equal_split",
        "sampling.batch_fraction": 0.1,
        "compressor.kind": "rand_k",
        "compressor.k": k,
        "method.name": method_name,
        "method.stepsize_preset": "theory",
        "epochs": epochs,
        "seed": seed,
        "record.every": 10,
    })


def _reproduce(data_path, methods, *, epochs, seeds, grid, out_dir=None, k=2):
    results = {}
    problem = None
    for name in methods:
        cfg = _exp_config(data_path, name, k, epochs, seed=0)
        if problem is None:
            problem = build_problem(cfg)
        best, entries = sweep(cfg, grid, problem=problem, seeds=seeds)
        best_cfg = cfg.replace(**{"method.multiplier": best})
        if out_dir is not None:
            best_cfg = best_cfg.replace(out=str(out_dir / f"{name}.csv"))
        records = run(best_cfg, problem)
        results[name] = {
            "best_multiplier": best,
            "final_f_gap": records[-1].f_gap,
            "entries": entries,
        }
    return results


def reproduce_exp1(data_path, *, out_dir=None, full: bool = False, seeds: int = 3,
                   epochs: int | None = None, grid=None):
    """Non-local comparison on the mushrooms setup at desk scale.

    Reduced protocol: 500 epochs, 3 seeds, 7-point multiplier grid; the full
    protocol (5000 epochs, full grid) sits behind ``full=True``.
    """
    epochs = epochs if epochs is not None else (5000 if full else 500)
    grid = grid if grid is not None else (sz.NON_LOCAL_MULTIPLIERS if full else REDUCED_GRID)
    return _reproduce(data_path, EXP1_METHODS, epochs=epochs, seeds=seeds, grid=grid, out_dir=out_dir)


def reproduce_exp2(data_path, *, out_dir=None, full: bool = False, seeds: int = 3,
                   epochs: int | None = None, grid=None):
    """Local-method comparison on the mushrooms setup at desk scale."""
    epochs = epochs if epochs is not None else (5000 if full else 500)
    grid = grid if grid is not None else (sz.Q_NASTYA_GAMMA_MULTIPLIERS if full else REDUCED_GRID)
    return _reproduce(data_path, EXP2_METHODS, epochs=epochs, seeds=seeds, grid=grid, out_dir=out_dir)

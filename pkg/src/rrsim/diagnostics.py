"""Scalar diagnostics: heterogeneity constants, shuffling radius, Lyapunov
values, noise-floor scaling, and the CSV record schema.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .objective import FiniteSumProblem

__all__ = [
    "HeterogeneityConstants",
    "RunRecord",
    "hetero_constants",
    "estimate_sigma_rad",
    "lyapunov_diana_rr",
    "lyapunov_diana_nastya",
    "shift_fixed_points",
    "floor_scaling_probe",
    "write_csv",
    "read_csv",
    "CSV_HEADER",
]


@dataclass(frozen=True)
class HeterogeneityConstants:
    """Gradient dispersion at the reference point.

    zeta_star_sq:    (1/M) sum_m ||grad f_m(x*)||^2           (across clients)
    sigma_star_sq:   (1/Mn) sum_{m,i} ||grad f_m^i(x*) - grad f_m(x*)||^2
    sigma_star_n_sq: (1/n) sum_i ||grad f^i(x*)||^2 with f^i the i-th summand
                     averaged over clients
    bounds:          (n mu_tilde sigma*^2 / 8, n L_max sigma*^2 / 4), the
                     sandwich that must contain the shuffling radius
    """

    zeta_star_sq: float
    sigma_star_sq: float
    sigma_star_n_sq: float
    sigma_rad_sq_estimate: float | None = None
    half_width: float | None = None
    bounds: tuple[float, float] | None = None


@dataclass(frozen=True)
class RunRecord:
    round: int
    epoch: float
    f_gap: float
    dist_sq: float
    grad_norm: float
    bits_up: float
    lyapunov: float | None = None


CSV_HEADER = "round,epoch,f_gap,dist_sq,grad_norm,bits_up,lyapunov"


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_csv(records, path) -> None:
    lines = [CSV_HEADER]
    for r in records:
        lyap = "" if r.lyapunov is None else _fmt(r.lyapunov)
        lines.append(
            f"{r.round},{_fmt(r.epoch)},{_fmt(r.f_gap)},{_fmt(r.dist_sq)},"
            f"{_fmt(r.grad_norm)},{_fmt(r.bits_up)},{lyap}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> list[RunRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            records.append(RunRecord(
                round=int(parts[0]),
                epoch=float(parts[1]),
                f_gap=float(parts[2]),
                dist_sq=float(parts[3]),
                grad_norm=float(parts[4]),
                bits_up=float(parts[5]),
                lyapunov=float(parts[6]) if parts[6] else None,
            ))
    return records


def hetero_constants(problem: FiniteSumProblem, x_star: np.ndarray) -> HeterogeneityConstants:
    """Exact sums over the M x n grid of summand gradients at x*."""
    n = problem.n
    table = problem.grad_table(x_star)          # (M, n, d)
    client_means = table.mean(axis=1)           # (M, d)
    zeta = float(np.mean(np.sum(client_means**2, axis=1)))
    dev = table - client_means[:, None, :]
    sigma = float(np.mean(np.sum(dev**2, axis=2)))
    cross = table.mean(axis=0)                  # (n, d): grad f^i(x*)
    sigma_n = float(np.mean(np.sum(cross**2, axis=1)))
    c = problem.constants
    bounds = (n * c.mu_tilde * sigma / 8.0, n * c.L_max * sigma / 4.0)
    return HeterogeneityConstants(zeta, sigma, sigma_n, bounds=bounds)


def _bregman_batch(problem, m, idx, x, x_star, f_star_cache, g_star_table):
    f_x = problem.eval_batch(m, idx, x)
    f_s = f_star_cache[m][idx].mean()
    g = g_star_table[m][idx].mean(axis=0)
    return f_x - f_s - float(g @ (x - x_star))


def estimate_sigma_rad(
    problem: FiniteSumProblem,
    x_star: np.ndarray,
    gamma: float,
    num_perms: int,
    rng: np.random.Generator,
    exhaustive: bool = False,
) -> tuple[float, float]:
    """Monte-Carlo (or exhaustive) shuffling radius at stepsize gamma.

    Walks the deterministic within-epoch sequence seeded at x* for each
    sampled permutation tuple, averages the per-position Bregman sums over
    tuples, takes the max over positions, and reports a half-width of one
    standard error at the maximizing position.  ``exhaustive=True`` enumerates
    all (n!)^M tuples instead (half-width 0).  Expectations are taken over
    permutations only.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if num_perms < 1:
        raise ValueError("num_perms must be >= 1")
    n, M = problem.n, problem.M
    g_star = problem.grad_table(x_star)
    f_star_rows = [
        np.array([problem.eval_batch(m, [i], x_star) for i in range(n)])
        for m in range(M)
    ]

    if exhaustive:
        tuples = list(itertools.product(itertools.permutations(range(n)), repeat=M))
    else:
        tuples = [tuple(tuple(rng.permutation(n)) for _ in range(M)) for _ in range(num_perms)]

    samples = np.empty((len(tuples), n))
    for t_idx, perms in enumerate(tuples):
        x = x_star.copy()
        for i in range(n):
            total = 0.0
            for m in range(M):
                total += _bregman_batch(problem, m, [perms[m][i]], x, x_star, f_star_rows, g_star)
            samples[t_idx, i] = total / (gamma**2 * M)
            step_dir = np.zeros(problem.d)
            for m in range(M):
                step_dir += g_star[m][perms[m][i]]
            x = x - (gamma / M) * step_dir

    means = samples.mean(axis=0)
    i_max = int(np.argmax(means))
    estimate = float(means[i_max])
    if exhaustive:
        half_width = 0.0
    else:
        half_width = float(samples[:, i_max].std(ddof=1) / math.sqrt(len(tuples))) if len(tuples) > 1 else math.inf
    return estimate, half_width


def lyapunov_diana_rr(
    x: np.ndarray,
    x_star: np.ndarray,
    shift_deltas: np.ndarray,
    gamma: float,
    alpha: float,
    mu: float,
    omega: float,
    M: int,
) -> float:
    """||x - x*||^2 + (4 omega gamma^2 / (alpha M^2)) sum_m sum_j (1-gamma mu)^j ||delta_j||^2.

    ``shift_deltas`` is (M, J, d), ordered by within-epoch position j.
    """
    diff = x - x_star
    dist = float(diff @ diff)
    if omega == 0.0:
        return dist
    if alpha <= 0.0:
        raise ValueError("alpha must be positive in the Lyapunov weight")
    weights = (1.0 - gamma * mu) ** np.arange(shift_deltas.shape[1])
    sums = np.sum(shift_deltas**2, axis=2)  # (M, J)
    return dist + (4.0 * omega * gamma**2 / (alpha * M**2)) * float(np.sum(sums @ weights))


def lyapunov_diana_nastya(
    x: np.ndarray,
    x_star: np.ndarray,
    shifts: np.ndarray,
    h_star: np.ndarray,
    eta: float,
    alpha: float,
    omega: float,
    M: int,
) -> float:
    """||x - x*||^2 + (8 omega eta^2 / (alpha M^2)) sum_m ||h_m - h*_m||^2."""
    diff = x - x_star
    dist = float(diff @ diff)
    if omega == 0.0:
        return dist
    if alpha <= 0.0:
        raise ValueError("alpha must be positive in the Lyapunov weight")
    return dist + (8.0 * omega * eta**2 / (alpha * M**2)) * float(np.sum((shifts - h_star) ** 2))


def shift_fixed_points(problem: FiniteSumProblem, x_star: np.ndarray, gamma: float, steps: int) -> np.ndarray:
    """(M, d) local-direction fixed points (1/(gamma n))(x* - x^n_{*,m}).

    x^n_{*,m} follows the deterministic local recursion that subtracts the
    client gradient at the reference point each step, so each fixed point
    collapses to that client gradient; the recursion is kept literal.
    """
    out = np.empty((problem.M, problem.d))
    for m in range(problem.M):
        g = problem.grad_client(m, x_star)
        x = x_star.copy()
        for _ in range(steps):
            x = x - gamma * g
        out[m] = (x_star - x) / (gamma * steps)
    return out


def floor_scaling_probe(
    config,
    stepsizes,
    seeds: int,
    *,
    x0_scale: float = 0.0,
) -> dict:
    """Steady-state E||x_T - x*||^2 per stepsize, with a fitted log-log slope.

    Each stepsize is run for ``seeds`` seeds and dist_sq is averaged over
    every communication round in the last 20% of epochs (the steady-state
    window).  ``config.epochs`` is the budget for the largest stepsize;
    smaller stepsizes mix slower, so their budget is scaled by gamma_max /
    gamma.  Runs start at x* plus a perturbation of norm ``x0_scale``
    (default: exactly at x*), which shortens the transient without changing
    the steady state being measured.
    """
    from .algorithms import rounds_per_epoch
    from .harness import build_problem, build_sampler, run as run_config

    g_max = max(float(g) for g in stepsizes)
    problem = build_problem(config)
    x_star = problem.reference()
    rows = []
    for gamma in stepsizes:
        gamma = float(gamma)
        epochs = int(math.ceil(config.epochs * g_max / gamma))
        vals = []
        for s in range(seeds):
            cfg = config.replace(**{
                "method.gamma": gamma,
                "method.stepsize_preset": "manual",
                "seed": config.seed + s,
                "epochs": epochs,
                "record.every": 10**9,
            })
            sampler = build_sampler(cfg, problem)
            total_rounds = epochs * rounds_per_epoch(cfg.method.name, sampler)
            cutoff = 0.8 * total_rounds
            tail_sum = 0.0
            tail_count = 0

            def collect(r, state):
                nonlocal tail_sum, tail_count
                if r >= cutoff:
                    diff = state.x - x_star
                    tail_sum += float(diff @ diff)
                    tail_count += 1

            run_config(cfg, problem, x0=x_star + _perturbation(problem.d, cfg.seed, x0_scale),
                       on_round=collect)
            vals.append(tail_sum / tail_count)
        rows.append((gamma, float(np.mean(vals))))
    gs = np.log([r[0] for r in rows])
    ys = np.log([r[1] for r in rows])
    slope = float(np.polyfit(gs, ys, 1)[0])
    return {"rows": rows, "slope": slope}


def _perturbation(d: int, seed: int, scale: float) -> np.ndarray:
    if scale == 0.0:
        return np.zeros(d)
    from .rng import RngStream

    v = RngStream(seed).child("probe-x0").generator().standard_normal(d)
    return scale * v / np.linalg.norm(v)

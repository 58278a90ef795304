"""Optimization methods as state transitions, plus the round/epoch driver.

The simulator models M clients and one server.  Within a round every client
computes independently (its randomness comes from its own path-addressed
stream, so results do not depend on client execution order) and the server
sees nothing but message vectors, which it reduces in ascending client id.

Method families:

* inner-loop reshuffling (``qrr``, ``diana_rr``, ``fedrr``): one communication
  round per gradient step, ``steps_per_epoch`` rounds per epoch;
* local-epoch methods (``q_nastya``, ``diana_nastya``, ``nastya``,
  ``local_sgd_q``): a full local pass between communications, one round per
  epoch;
* with-replacement baselines (``qsgd``, ``diana``): i.i.d. sampling, one round
  per step, counted against epochs by gradient-oracle parity.

Minibatches follow the composite-summand view: a batch step consumes one block
of the epoch's permuted index sequence, and shift stores for ``diana_rr`` are
keyed by sample id when b = 1 and by block slot otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compressors import Compressor, bits_sent, compress
from .objective import FiniteSumProblem
from .rng import RngStream
from .shuffling import POLICIES, batch_blocks, draw_with_replacement, epoch_permutation

__all__ = [
    "METHODS",
    "INNER_METHODS",
    "LOCAL_METHODS",
    "WR_METHODS",
    "MethodSpec",
    "AlgorithmState",
    "DivergenceError",
    "StateError",
    "Sampler",
    "init_state",
    "begin_epoch",
    "run_local_epoch_rr",
    "step_qrr",
    "step_diana_rr",
    "step_q_nastya",
    "step_diana_nastya",
    "step_qsgd",
    "step_diana",
    "step_local_sgd_q",
    "aggregate_messages",
    "simulate",
    "shift_deltas_by_position",
]

INNER_METHODS = ("qrr", "diana_rr", "fedrr")
LOCAL_METHODS = ("q_nastya", "diana_nastya", "nastya", "local_sgd_q")
WR_METHODS = ("qsgd", "diana")
METHODS = INNER_METHODS + LOCAL_METHODS + WR_METHODS

_SERVER_STEP = ("q_nastya", "diana_nastya", "nastya", "local_sgd_q")
_DIANA_STYLE = ("diana_rr", "diana_nastya", "diana")
_IDENTITY_ONLY = ("fedrr", "nastya")

DIVERGENCE_NORM = 1e12


class DivergenceError(RuntimeError):
    def __init__(self, round_index: int):
        super().__init__(f"iterate diverged at round {round_index}")
        self.round_index = round_index


class StateError(RuntimeError):
    """Raised when a step is taken on a state missing its epoch plan."""


@dataclass(frozen=True)
class MethodSpec:
    name: str
    compressor: Compressor
    policy: str
    gamma: float
    eta: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown sampling policy {self.policy!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        needs_eta = self.name in _SERVER_STEP
        if needs_eta != (self.eta is not None):
            raise ValueError(f"eta is {'required' if needs_eta else 'not accepted'} for {self.name}")
        needs_alpha = self.name in _DIANA_STYLE
        if needs_alpha != (self.alpha is not None):
            raise ValueError(f"alpha is {'required' if needs_alpha else 'not accepted'} for {self.name}")
        if self.name in _IDENTITY_ONLY and self.compressor.kind != "identity":
            raise ValueError(f"{self.name} is the uncompressed baseline; use the identity compressor")
        wr = self.name in WR_METHODS or self.name == "local_sgd_q"
        if wr and self.policy != "with_replacement":
            raise ValueError(f"{self.name} samples with replacement")
        if not wr and self.policy == "with_replacement":
            raise ValueError(f"{self.name} samples without replacement")


class Sampler:
    """Per-epoch block plans for each client, from path-addressed streams."""

    def __init__(self, problem: FiniteSumProblem, policy: str, batch_sizes, stream: RngStream):
        self.problem = problem
        self.policy = policy
        self.stream = stream
        self.batch_sizes = tuple(int(b) for b in batch_sizes)
        if len(self.batch_sizes) != problem.M:
            raise ValueError("need one batch size per client")
        for b, n in zip(self.batch_sizes, problem.n_m):
            if not (1 <= b <= n):
                raise ValueError(f"batch size {b} invalid for client dataset of size {n}")
        steps = {n // b for b, n in zip(self.batch_sizes, problem.n_m)}
        if len(steps) != 1:
            raise ValueError(
                "clients must take the same number of steps per epoch; "
                f"got floor(n_m/b_m) in {sorted(steps)}"
            )
        self.steps_per_epoch = steps.pop()
        self.unit_batches = all(b == 1 for b in self.batch_sizes)
        # Shift keys: sample ids when b = 1, block slots otherwise.
        self.n_keys = problem.n_m[0] if self.unit_batches else self.steps_per_epoch

    def epoch_plan(self, epoch: int) -> list[tuple[np.ndarray, ...]]:
        """Blocks of sample indices per client for one epoch."""
        plan = []
        for m in range(self.problem.M):
            perm = epoch_permutation(self.stream, m, epoch, self.problem.n_m[m], self.policy)
            plan.append(batch_blocks(perm, self.batch_sizes[m]).blocks)
        return plan

    def key_of(self, m: int, step: int, block: np.ndarray) -> int:
        return int(block[0]) if self.unit_batches else step

    def compress_gen(self, m: int, epoch: int) -> np.random.Generator:
        return self.stream.child(m, epoch, "compress").generator()

    def sample_gen(self, m: int, epoch: int) -> np.random.Generator:
        return self.stream.child(m, epoch, "sample").generator()


@dataclass
class AlgorithmState:
    x: np.ndarray
    epoch: int = 0
    step: int = 0  # inner step within the current epoch
    round: int = 0
    bits_up: float = 0.0
    bits_down: float = 0.0
    shifts: np.ndarray | None = None  # (M, d) or (M, n_keys, d)
    server_shift: np.ndarray | None = None
    blocks: list[tuple[np.ndarray, ...]] | None = None
    compress_gens: list[np.random.Generator] | None = None
    sample_gens: list[np.random.Generator] | None = None


def init_state(problem: FiniteSumProblem, method: MethodSpec, sampler: Sampler, x0: np.ndarray | None) -> AlgorithmState:
    x = np.zeros(problem.d) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (problem.d,):
        raise ValueError(f"x0 must have shape ({problem.d},)")
    state = AlgorithmState(x=x)
    if method.name == "diana_rr":
        state.shifts = np.zeros((problem.M, sampler.n_keys, problem.d))
    elif method.name in ("diana_nastya", "diana"):
        state.shifts = np.zeros((problem.M, problem.d))
        if method.name == "diana_nastya":
            state.server_shift = np.zeros(problem.d)
    return state


def begin_epoch(state: AlgorithmState, problem: FiniteSumProblem, method: MethodSpec, sampler: Sampler) -> None:
    """Draw the epoch's permutations/streams; called when step wraps to 0."""
    M = problem.M
    if method.policy == "with_replacement":
        state.blocks = None
        state.sample_gens = [sampler.sample_gen(m, state.epoch) for m in range(M)]
    else:
        state.blocks = sampler.epoch_plan(state.epoch)
        state.sample_gens = None
    state.compress_gens = [sampler.compress_gen(m, state.epoch) for m in range(M)]
    state.step = 0


def aggregate_messages(messages) -> np.ndarray:
    """Server reduction: sum in ascending client id, then average."""
    total = None
    for msg in messages:
        total = msg.copy() if total is None else total + msg
    return total / len(messages)


def _account_round(state: AlgorithmState, compressor: Compressor, M: int, d: int) -> None:
    state.bits_up += M * bits_sent(compressor, d)
    state.bits_down += M * 64.0 * d  # broadcast of the iterate, uncompressed


def _require_plan(state: AlgorithmState) -> None:
    if state.blocks is None or state.compress_gens is None:
        raise StateError("no permutation plan drawn for this epoch; call begin_epoch first")


# -- inner-loop methods --------------------------------------------------------


def step_qrr(state: AlgorithmState, problem: FiniteSumProblem, compressor: Compressor, gamma: float) -> AlgorithmState:
    """One inner iteration: x <- x - gamma * mean_m Q(grad of the current block)."""
    _require_plan(state)
    messages = []
    for m in range(problem.M):
        g = problem.grad_batch(m, state.blocks[m][state.step], state.x)
        messages.append(compress(compressor, g, state.compress_gens[m]))
    state.x = state.x - gamma * aggregate_messages(messages)
    _account_round(state, compressor, problem.M, problem.d)
    state.step += 1
    return state


def step_diana_rr(
    state: AlgorithmState,
    problem: FiniteSumProblem,
    compressor: Compressor,
    gamma: float,
    alpha: float,
    sampler: Sampler,
) -> AlgorithmState:
    """Shifted inner iteration; only the shifts keyed by this step's blocks move."""
    _require_plan(state)
    if state.shifts is None or state.shifts.shape != (problem.M, sampler.n_keys, problem.d):
        raise StateError("diana_rr needs an (M, n_keys, d) shift store")
    messages = []
    for m in range(problem.M):
        block = state.blocks[m][state.step]
        key = sampler.key_of(m, state.step, block)
        h = state.shifts[m, key]
        g = problem.grad_batch(m, block, state.x)
        q = compress(compressor, g - h, state.compress_gens[m])
        messages.append(h + q)
        state.shifts[m, key] = h + alpha * q
    state.x = state.x - gamma * aggregate_messages(messages)
    _account_round(state, compressor, problem.M, problem.d)
    state.step += 1
    return state


# -- local-epoch methods ---------------------------------------------------------


def run_local_epoch_rr(problem: FiniteSumProblem, m: int, x_t: np.ndarray, gamma: float, blocks) -> np.ndarray:
    """Sequential local pass over the client's blocks, no communication."""
    x = np.array(x_t, dtype=float)
    for block in blocks:
        x -= gamma * problem.grad_batch(m, block, x)
    return x


def _local_direction(problem, m, state, gamma, steps):
    x_loc = run_local_epoch_rr(problem, m, state.x, gamma, state.blocks[m])
    return (state.x - x_loc) / (gamma * steps)


def step_q_nastya(
    state: AlgorithmState,
    problem: FiniteSumProblem,
    compressor: Compressor,
    gamma: float,
    eta: float,
    sampler: Sampler,
) -> AlgorithmState:
    """One communication round: local passes, compressed directions, eta step."""
    _require_plan(state)
    steps = sampler.steps_per_epoch
    messages = []
    for m in range(problem.M):
        g_m = _local_direction(problem, m, state, gamma, steps)
        messages.append(compress(compressor, g_m, state.compress_gens[m]))
    state.x = state.x - eta * aggregate_messages(messages)
    _account_round(state, compressor, problem.M, problem.d)
    state.step = steps
    return state


def step_diana_nastya(
    state: AlgorithmState,
    problem: FiniteSumProblem,
    compressor: Compressor,
    gamma: float,
    eta: float,
    alpha: float,
    sampler: Sampler,
) -> AlgorithmState:
    _require_plan(state)
    if state.shifts is None or state.shifts.shape != (problem.M, problem.d):
        raise StateError("diana_nastya needs an (M, d) shift store")
    steps = sampler.steps_per_epoch
    messages = []
    compressed = []
    for m in range(problem.M):
        g_m = _local_direction(problem, m, state, gamma, steps)
        q = compress(compressor, g_m - state.shifts[m], state.compress_gens[m])
        messages.append(state.shifts[m] + q)
        compressed.append(q)
        state.shifts[m] = state.shifts[m] + alpha * q
    state.server_shift = state.server_shift + alpha * aggregate_messages(compressed)
    state.x = state.x - eta * aggregate_messages(messages)
    _account_round(state, compressor, problem.M, problem.d)
    state.step = steps
    return state


def step_local_sgd_q(
    state: AlgorithmState,
    problem: FiniteSumProblem,
    compressor: Compressor,
    gamma: float,
    eta: float,
    sampler: Sampler,
) -> AlgorithmState:
    """Local with-replacement SGD plus a compressed model delta (server eta)."""
    if state.sample_gens is None or state.compress_gens is None:
        raise StateError("no sampling streams drawn for this epoch; call begin_epoch first")
    steps = sampler.steps_per_epoch
    messages = []
    for m in range(problem.M):
        x_loc = state.x.copy()
        for _ in range(steps):
            idx = draw_with_replacement(problem.n_m[m], sampler.batch_sizes[m], state.sample_gens[m])
            x_loc -= gamma * problem.grad_batch(m, idx, x_loc)
        messages.append(compress(compressor, x_loc - state.x, state.compress_gens[m]))
    state.x = state.x + eta * aggregate_messages(messages)
    _account_round(state, compressor, problem.M, problem.d)
    state.step = steps
    return state


# -- with-replacement baselines --------------------------------------------------


def step_qsgd(state: AlgorithmState, problem: FiniteSumProblem, compressor: Compressor, gamma: float, sampler: Sampler) -> AlgorithmState:
    if state.sample_gens is None or state.compress_gens is None:
        raise StateError("no sampling streams drawn for this epoch; call begin_epoch first")
    messages = []
    for m in range(problem.M):
        idx = draw_with_replacement(problem.n_m[m], sampler.batch_sizes[m], state.sample_gens[m])
        g = problem.grad_batch(m, idx, state.x)
        messages.append(compress(compressor, g, state.compress_gens[m]))
    state.x = state.x - gamma * aggregate_messages(messages)
    _account_round(state, compressor, problem.M, problem.d)
    state.step += 1
    return state


def step_diana(
    state: AlgorithmState,
    problem: FiniteSumProblem,
    compressor: Compressor,
    gamma: float,
    alpha: float,
    sampler: Sampler,
) -> AlgorithmState:
    if state.sample_gens is None or state.compress_gens is None:
        raise StateError("no sampling streams drawn for this epoch; call begin_epoch first")
    if state.shifts is None or state.shifts.shape != (problem.M, problem.d):
        raise StateError("diana needs an (M, d) shift store")
    messages = []
    for m in range(problem.M):
        idx = draw_with_replacement(problem.n_m[m], sampler.batch_sizes[m], state.sample_gens[m])
        g = problem.grad_batch(m, idx, state.x)
        q = compress(compressor, g - state.shifts[m], state.compress_gens[m])
        messages.append(state.shifts[m] + q)
        state.shifts[m] = state.shifts[m] + alpha * q
    state.x = state.x - gamma * aggregate_messages(messages)
    _account_round(state, compressor, problem.M, problem.d)
    state.step += 1
    return state


# -- driver ----------------------------------------------------------------------


def _advance_round(state, problem, method, sampler):
    if state.step >= sampler.steps_per_epoch:
        state.epoch += 1
        begin_epoch(state, problem, method, sampler)
    name = method.name
    if name in ("qrr", "fedrr"):
        step_qrr(state, problem, method.compressor, method.gamma)
    elif name == "diana_rr":
        step_diana_rr(state, problem, method.compressor, method.gamma, method.alpha, sampler)
    elif name in ("q_nastya", "nastya"):
        step_q_nastya(state, problem, method.compressor, method.gamma, method.eta, sampler)
    elif name == "diana_nastya":
        step_diana_nastya(state, problem, method.compressor, method.gamma, method.eta, method.alpha, sampler)
    elif name == "local_sgd_q":
        step_local_sgd_q(state, problem, method.compressor, method.gamma, method.eta, sampler)
    elif name == "qsgd":
        step_qsgd(state, problem, method.compressor, method.gamma, sampler)
    else:
        step_diana(state, problem, method.compressor, method.gamma, method.alpha, sampler)
    state.round += 1
    norm = float(np.linalg.norm(state.x))
    if not math.isfinite(norm) or norm > DIVERGENCE_NORM:
        raise DivergenceError(state.round)


def rounds_per_epoch(method_name: str, sampler: Sampler) -> int:
    return 1 if method_name in LOCAL_METHODS else sampler.steps_per_epoch


def shift_deltas_by_position(state: AlgorithmState, problem: FiniteSumProblem, sampler: Sampler, grad_star_table: np.ndarray) -> np.ndarray:
    """(M, steps, d) array of shift errors ordered by within-epoch position.

    ``grad_star_table`` holds the per-sample gradients at the reference point;
    for batched runs each position's target is the mean over its block.
    """
    if state.blocks is None or state.shifts is None:
        raise StateError("state carries no epoch plan or shifts")
    steps = sampler.steps_per_epoch
    out = np.empty((problem.M, steps, problem.d))
    for m in range(problem.M):
        for j in range(steps):
            block = state.blocks[m][j]
            key = sampler.key_of(m, j, block)
            target = grad_star_table[m][block].mean(axis=0)
            out[m, j] = state.shifts[m, key] - target
    return out


def simulate(
    problem: FiniteSumProblem,
    method: MethodSpec,
    sampler: Sampler,
    *,
    epochs: int,
    x0: np.ndarray | None = None,
    record_every: int = 1,
    record_lyapunov: bool = False,
    solver_tol: float = 1e-10,
    on_round=None,
):
    """Execute the configured run and return one record per sampled round.

    Fully deterministic given the sampler's stream.  Raises DivergenceError
    (carrying the round index) if the iterate blows up.
    """
    from . import diagnostics  # local import; diagnostics owns the record type

    x_star = problem.reference(solver_tol)
    f_star = problem.f_full(x_star)
    state = init_state(problem, method, sampler, x0)
    begin_epoch(state, problem, method, sampler)
    per_epoch = rounds_per_epoch(method.name, sampler)
    total_rounds = int(epochs) * per_epoch

    grad_star_table = None
    mu_weight = problem.constants.mu_tilde
    if record_lyapunov and method.name == "diana_rr":
        grad_star_table = problem.grad_table(x_star)
    h_star = None
    if record_lyapunov and method.name == "diana_nastya":
        h_star = diagnostics.shift_fixed_points(problem, x_star, method.gamma, sampler.steps_per_epoch)

    def snapshot():
        lyap = None
        if record_lyapunov and method.name == "diana_rr" and state.blocks is not None:
            deltas = shift_deltas_by_position(state, problem, sampler, grad_star_table)
            lyap = diagnostics.lyapunov_diana_rr(
                state.x, x_star, deltas, method.gamma, method.alpha,
                mu_weight, method.compressor.omega, problem.M,
            )
        elif record_lyapunov and method.name == "diana_nastya":
            lyap = diagnostics.lyapunov_diana_nastya(
                state.x, x_star, state.shifts, h_star, method.eta, method.alpha,
                method.compressor.omega, problem.M,
            )
        diff = state.x - x_star
        return diagnostics.RunRecord(
            round=state.round,
            epoch=state.round / per_epoch,
            f_gap=problem.f_full(state.x) - f_star,
            dist_sq=float(diff @ diff),
            grad_norm=float(np.linalg.norm(problem.grad_full(state.x))),
            bits_up=state.bits_up,
            lyapunov=lyap,
        )

    records = [snapshot()]
    for r in range(1, total_rounds + 1):
        _advance_round(state, problem, method, sampler)
        if on_round is not None:
            on_round(r, state)
        if r % record_every == 0 or r == total_rounds:
            records.append(snapshot())
    return records, state

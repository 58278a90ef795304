"""Finite-sum objectives f(x) = (1/Mn) sum_m sum_i f_m^i(x) and their constants.

Two summand families are supported:

* ``logistic``:  f_m^i(x) = log(1 + exp(-y a^T x)) + lam * ||x||^2
* ``quadratic``: f_m^i(x) = 0.5 * ||x - c||^2   (c = the stored feature row)

Data rows are stored sparse (CSR per client); iterates, gradients and shifts
are dense.  A dense per-client copy of the rows is cached for small problems,
which is the fast path used by the simulation loops.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.sparse as sp
from scipy.special import expit

from .rng import RngStream

__all__ = [
    "DataPoint",
    "ClientDataset",
    "FiniteSumProblem",
    "CurvatureConstants",
    "ReferenceSolveError",
    "eval_summand",
    "grad_summand",
    "grad_client",
    "grad_full",
    "compute_constants",
    "solve_reference",
    "estimate_l_tilde",
]

# Dense row caches are built when N_total * d stays below this element count.
_DENSE_CACHE_LIMIT = 2e7


class ReferenceSolveError(RuntimeError):
    """Reference minimizer did not reach the requested gradient norm."""

    def __init__(self, grad_norm: float, target: float):
        super().__init__(
            f"reference solve stalled at ||grad|| = {grad_norm:.3e} (target {target:.3e})"
        )
        self.grad_norm = grad_norm
        self.target = target


@dataclass(frozen=True)
class DataPoint:
    """One sparse sample: strictly increasing feature indices and a +-1 label."""

    indices: tuple[int, ...]
    values: tuple[float, ...]
    label: float

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values must have equal length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("feature indices must be strictly increasing")
        if self.indices and self.indices[0] < 0:
            raise ValueError("feature indices must be nonnegative")
        if self.label not in (-1.0, 1.0):
            raise ValueError(f"label must be -1 or +1, got {self.label}")


@dataclass(frozen=True)
class ClientDataset:
    points: tuple[DataPoint, ...]
    client_id: int

    def __post_init__(self):
        if len(self.points) < 1:
            raise ValueError("a client must hold at least one sample")

    @property
    def n(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class CurvatureConstants:
    """Smoothness/convexity constants consumed by the stepsize rules."""

    L: float
    L_max: float
    L_im: np.ndarray  # (M, max_n) per-summand constants (NaN-padded if ragged)
    mu: float
    mu_tilde: float
    L_tilde: float

    @property
    def strongly_convex(self) -> bool:
        return self.mu > 0.0


class FiniteSumProblem:
    """M clients' summands plus cached constants and a cached reference solve."""

    def __init__(self, clients: list[ClientDataset], lam: float, kind: str, d: int | None = None):
        if kind not in ("logistic", "quadratic"):
            raise ValueError(f"unknown problem kind: {kind!r}")
        if lam < 0:
            raise ValueError("regularization weight must be nonnegative")
        if kind == "quadratic" and lam != 0.0:
            raise ValueError("quadratic kind has no regularization term; pass lam=0")
        if not clients:
            raise ValueError("need at least one client")
        self.clients = tuple(clients)
        self.lam = float(lam)
        self.kind = kind
        self.M = len(clients)
        self.n_m = tuple(c.n for c in clients)

        max_idx = -1
        for c in clients:
            for p in c.points:
                if p.indices:
                    max_idx = max(max_idx, p.indices[-1])
        inferred_d = max_idx + 1
        self.d = int(d) if d is not None else inferred_d
        if self.d < max(inferred_d, 1):
            raise ValueError(f"dimension {d} too small for data with max index {max_idx}")

        self._A = []  # per-client CSR rows
        self._y = []  # per-client labels
        for c in clients:
            rows_idx, cols, vals = [], [], []
            for i, p in enumerate(c.points):
                rows_idx.extend([i] * len(p.indices))
                cols.extend(p.indices)
                vals.extend(p.values)
            mat = sp.coo_matrix((vals, (rows_idx, cols)), shape=(c.n, self.d))
            self._A.append(mat.tocsr())
            self._y.append(np.array([p.label for p in c.points]))
        self._row_sqnorms = [np.asarray(A.multiply(A).sum(axis=1)).ravel() for A in self._A]

        total = sum(self.n_m) * self.d
        self._dense = [A.toarray() for A in self._A] if total <= _DENSE_CACHE_LIMIT else None

        self._lock = threading.RLock()
        self._constants: CurvatureConstants | None = None
        self._xstar: dict[float, np.ndarray] = {}

    # -- basic shape helpers -------------------------------------------------

    @property
    def equal_n(self) -> bool:
        return len(set(self.n_m)) == 1

    @property
    def n(self) -> int:
        if not self.equal_n:
            raise ValueError("clients hold datasets of unequal size")
        return self.n_m[0]

    def rows(self, m: int, idx) -> np.ndarray:
        """Dense feature rows for client m at positions idx."""
        if self._dense is not None:
            return self._dense[m][idx]
        return self._A[m][idx].toarray()

    def _check_point(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"expected point of dimension {self.d}, got shape {x.shape}")
        return x

    def _check_index(self, m: int, i: int | None = None):
        if not (0 <= m < self.M):
            raise ValueError(f"client index {m} out of range [0, {self.M})")
        if i is not None and not (0 <= i < self.n_m[m]):
            raise ValueError(f"sample index {i} out of range [0, {self.n_m[m]}) on client {m}")

    # -- evaluation ----------------------------------------------------------

    def eval_batch(self, m: int, idx, x: np.ndarray) -> float:
        """Mean of f_m^i over samples idx (the composite-summand value)."""
        x = self._check_point(x)
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        rows = self.rows(m, idx)
        if self.kind == "logistic":
            z = rows @ x
            y = self._y[m][idx]
            return float(np.mean(np.logaddexp(0.0, -y * z)) + self.lam * (x @ x))
        sq = self._row_sqnorms[m][idx]
        return float(0.5 * np.mean(sq - 2.0 * (rows @ x) + x @ x))

    def grad_batch(self, m: int, idx, x: np.ndarray) -> np.ndarray:
        """Mean of grad f_m^i over samples idx."""
        x = self._check_point(x)
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        rows = self.rows(m, idx)
        if self.kind == "logistic":
            z = rows @ x
            y = self._y[m][idx]
            w = -y * expit(-y * z)
            return rows.T @ w / len(idx) + 2.0 * self.lam * x
        return x - np.asarray(rows.mean(axis=0)).ravel()

    def grad_client(self, m: int, x: np.ndarray) -> np.ndarray:
        self._check_index(m)
        return self.grad_batch(m, np.arange(self.n_m[m]), x)

    def f_client(self, m: int, x: np.ndarray) -> float:
        self._check_index(m)
        return self.eval_batch(m, np.arange(self.n_m[m]), x)

    def f_full(self, x: np.ndarray) -> float:
        return float(np.mean([self.f_client(m, x) for m in range(self.M)]))

    def grad_full(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros(self.d)
        for m in range(self.M):
            g += self.grad_client(m, x)
        return g / self.M

    def grad_table(self, x: np.ndarray) -> np.ndarray:
        """All summand gradients as an (M, n, d) array (equal-n problems)."""
        n = self.n
        out = np.empty((self.M, n, self.d))
        x = self._check_point(x)
        for m in range(self.M):
            rows = self.rows(m, np.arange(n))
            if self.kind == "logistic":
                z = rows @ x
                y = self._y[m]
                w = -y * expit(-y * z)
                out[m] = w[:, None] * rows + 2.0 * self.lam * x
            else:
                out[m] = x[None, :] - rows
        return out

    # -- constants -----------------------------------------------------------

    @property
    def constants(self) -> CurvatureConstants:
        if self._constants is None:
            with self._lock:
                if self._constants is None:
                    self._constants = self._compute_constants()
        return self._constants

    def _compute_constants(self) -> CurvatureConstants:
        max_n = max(self.n_m)
        L_im = np.full((self.M, max_n), np.nan)
        if self.kind == "quadratic":
            for m in range(self.M):
                L_im[m, : self.n_m[m]] = 1.0
            return CurvatureConstants(L=1.0, L_max=1.0, L_im=L_im, mu=1.0, mu_tilde=1.0, L_tilde=1.0)
        for m in range(self.M):
            L_im[m, : self.n_m[m]] = 0.25 * self._row_sqnorms[m] + 2.0 * self.lam
        L_max = float(np.nanmax(L_im))
        L = self._power_iteration_L()
        mu = 2.0 * self.lam
        return CurvatureConstants(L=L, L_max=L_max, L_im=L_im, mu=mu, mu_tilde=mu, L_tilde=L_max)

    def _hessian_bound_matvec(self, v: np.ndarray) -> np.ndarray:
        # (1/M) sum_m (1/(4 n_m)) A_m^T A_m v + 2 lam v
        out = 2.0 * self.lam * v
        for m in range(self.M):
            A = self._A[m]
            out += A.T @ (A @ v) / (4.0 * self.n_m[m] * self.M)
        return out

    def _power_iteration_L(self, rtol: float = 1e-9, max_iters: int = 100_000) -> float:
        gen = RngStream(0x5EED).child("power-iteration").generator()
        v = gen.standard_normal(self.d)
        v /= np.linalg.norm(v)
        prev = 0.0
        for _ in range(max_iters):
            w = self._hessian_bound_matvec(v)
            lam_est = float(v @ w)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 2.0 * self.lam
            v = w / nw
            if abs(lam_est - prev) <= rtol * max(abs(lam_est), 1e-300):
                return lam_est
            prev = lam_est
        return prev

    # -- reference solve -----------------------------------------------------

    def reference(self, tol: float = 1e-10) -> np.ndarray:
        key = float(tol)
        if key not in self._xstar:
            with self._lock:
                if key not in self._xstar:
                    self._xstar[key] = self._solve_reference(tol)
                    return self._xstar[key].copy()
        # re-certify cached solutions on every load
        x = self._xstar[key]
        norm = float(np.linalg.norm(self.grad_full(x)))
        g0 = float(np.linalg.norm(self.grad_full(np.zeros(self.d))))
        if norm > tol * max(1.0, g0):
            raise ReferenceSolveError(norm, tol * max(1.0, g0))
        return x.copy()

    def _hessian(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "quadratic":
            return np.eye(self.d)
        H = 2.0 * self.lam * np.eye(self.d)
        total = sum(self.n_m)
        for m in range(self.M):
            rows = self.rows(m, np.arange(self.n_m[m]))
            z = rows @ x
            s = expit(-self._y[m] * z)
            w = s * (1.0 - s)
            # weight by 1/(M * n_m) == 1/total only when n_m are equal; stay exact:
            H += (rows * w[:, None]).T @ rows / (self.M * self.n_m[m])
        del total
        return H

    def _solve_reference(self, tol: float) -> np.ndarray:
        if self.constants.mu <= 0.0:
            raise ValueError("reference solve requires a strongly convex problem (mu > 0)")

        def fun(x):
            f = 0.0
            g = np.zeros(self.d)
            for m in range(self.M):
                f += self.f_client(m, x)
                g += self.grad_client(m, x)
            return f / self.M, g / self.M

        x = np.zeros(self.d)
        g0 = np.linalg.norm(fun(x)[1])
        target = tol * max(1.0, g0)
        # Nonlinear CG does the bulk of the work; the Wolfe line search stalls
        # around ||grad|| ~ 1e-9, so a Newton polish finishes to the target.
        res = scipy.optimize.minimize(
            fun, x, jac=True, method="CG",
            options={"gtol": max(0.5 * target, 1e-8), "norm": 2, "maxiter": 200_000},
        )
        x = res.x
        last = float(np.linalg.norm(fun(x)[1]))
        for _ in range(100):
            if last <= target:
                return x
            step = np.linalg.solve(self._hessian(x), fun(x)[1])
            trial, scale = x - step, 1.0
            norm_trial = float(np.linalg.norm(fun(trial)[1]))
            while norm_trial > last and scale > 1e-8:
                scale *= 0.5
                trial = x - scale * step
                norm_trial = float(np.linalg.norm(fun(trial)[1]))
            if norm_trial >= last:
                break
            x, last = trial, norm_trial
        if last <= target:
            return x
        raise ReferenceSolveError(last, target)


# -- module-level operation surface -------------------------------------------


def eval_summand(problem: FiniteSumProblem, m: int, i: int, x: np.ndarray) -> float:
    problem._check_index(m, i)
    return problem.eval_batch(m, [i], x)


def grad_summand(problem: FiniteSumProblem, m: int, i: int, x: np.ndarray) -> np.ndarray:
    problem._check_index(m, i)
    return problem.grad_batch(m, [i], x)


def grad_client(problem: FiniteSumProblem, m: int, x: np.ndarray) -> np.ndarray:
    return problem.grad_client(m, x)


def grad_full(problem: FiniteSumProblem, x: np.ndarray) -> np.ndarray:
    return problem.grad_full(x)


def compute_constants(problem: FiniteSumProblem) -> CurvatureConstants:
    return problem.constants


def solve_reference(problem: FiniteSumProblem, tol: float = 1e-10) -> np.ndarray:
    return problem.reference(tol)


def estimate_l_tilde(problem: FiniteSumProblem, num_samples: int, rng: np.random.Generator) -> float:
    """Monte-Carlo lower estimate of the permutation-averaged smoothness constant.

    Samples permutation tuples, takes the largest eigenvalue of the averaged
    rank-one curvature over clients at each within-epoch position, and returns
    the maximum found.  The certified upper bound remains L_max.
    """
    if problem.kind == "quadratic":
        return 1.0
    n = problem.n
    best = 0.0
    for _ in range(num_samples):
        perms = np.stack([rng.permutation(n) for _ in range(problem.M)])
        for i in range(n):
            rows = np.stack([problem.rows(m, [perms[m, i]])[0] for m in range(problem.M)])
            gram = rows @ rows.T / (4.0 * problem.M)
            top = float(np.linalg.eigvalsh(gram)[-1])
            best = max(best, top + 2.0 * problem.lam)
    return best

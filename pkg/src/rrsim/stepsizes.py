"""Theoretical stepsize presets for each method.

Every preset returns the largest stepsize(s) admitted by the corresponding
convergence guarantee, computed from the problem's curvature constants, the
compressor variance factor omega, the number of clients M, the epoch length n
and (optionally) a target accuracy eps.  When eps is omitted only the
eps-free clauses are returned; this is the constant-stepsize mode used for
noise-floor scaling.

Accuracy-dependent clauses additionally consume the heterogeneity constants
(zeta*^2, sigma*^2, sigma*_n^2) and the shuffling radius.  Clauses whose
prefactor vanishes (e.g. omega = 0) are treated as +inf.
"""

from __future__ import annotations

import math

from .objective import CurvatureConstants

__all__ = [
    "preset_qrr",
    "preset_qrr_eps",
    "preset_diana_rr",
    "preset_q_nastya",
    "preset_diana_nastya",
    "preset_qrr_convex",
    "preset_diana_rr_convex",
    "preset_qsgd",
    "preset_diana",
    "preset_local_sgd_q",
    "NON_LOCAL_MULTIPLIERS",
    "Q_NASTYA_GAMMA_MULTIPLIERS",
    "Q_NASTYA_ETA_MULTIPLIERS",
    "DIANA_NASTYA_MULTIPLIERS",
    "FEDCOM_GAMMA_MULTIPLIERS",
    "FEDCOM_ETA_MULTIPLIERS",
    "FEDPAQ_GAMMA_MULTIPLIERS",
]


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.inf


def alpha_for(omega: float) -> float:
    """Shift-learning rate cap 1/(1+omega)."""
    return 1.0 / (1.0 + omega)


# -- inner-loop methods (one communication per gradient step) ------------------


def preset_qrr(constants: CurvatureConstants, omega: float, M: int) -> float:
    """gamma = 1 / (L_tilde + 2 (omega/M) L_max)."""
    return 1.0 / (constants.L_tilde + 2.0 * (omega / M) * constants.L_max)


def preset_qrr_eps(
    constants: CurvatureConstants,
    omega: float,
    M: int,
    eps: float,
    sigma_rad_sq: float,
    zeta_star_sq: float,
    sigma_star_sq: float,
) -> float:
    mu_t = constants.mu_tilde
    g1 = preset_qrr(constants, omega, M)
    g2 = math.sqrt(_ratio(eps * mu_t, 6.0 * sigma_rad_sq))
    g3 = _ratio(eps * mu_t * M, 6.0 * omega * (zeta_star_sq + sigma_star_sq))
    return min(g1, g2, g3)


def preset_diana_rr(
    constants: CurvatureConstants,
    omega: float,
    M: int,
    n: int,
    eps: float | None = None,
    sigma_rad_sq: float | None = None,
) -> tuple[float, float]:
    """(gamma, alpha) with alpha = 1/(1+omega)."""
    alpha = alpha_for(omega)
    mu_t = constants.mu_tilde
    clauses = [
        _ratio(alpha, 2.0 * n * mu_t),
        1.0 / (constants.L_tilde + 6.0 * (omega / M) * constants.L_max),
    ]
    if eps is not None:
        if sigma_rad_sq is None:
            raise ValueError("eps-dependent clause needs the shuffling radius")
        clauses.append(_ratio(math.sqrt(eps * mu_t), 2.0 * math.sqrt(sigma_rad_sq)))
    return min(clauses), alpha


# -- local-step methods (one communication per epoch) --------------------------


def preset_q_nastya(
    constants: CurvatureConstants,
    omega: float,
    M: int,
    n: int,
    eps: float | None = None,
    zeta_star_sq: float | None = None,
    sigma_star_sq: float | None = None,
) -> tuple[float, float]:
    """(gamma, eta).  Without eps: the two plain caps; with eps: eta from the
    three-clause minimum and gamma = eta / n."""
    L_max = constants.L_max
    eta_cap = 1.0 / (16.0 * L_max * (1.0 + omega / M))
    if eps is None:
        return 1.0 / (5.0 * n * L_max), eta_cap
    if zeta_star_sq is None or sigma_star_sq is None:
        raise ValueError("eps-dependent clauses need zeta*^2 and sigma*^2")
    mu = constants.mu
    mix = (n + 1.0) * zeta_star_sq + sigma_star_sq
    e2 = math.sqrt(_ratio(eps * mu * n, 9.0 * L_max)) * (mix ** -0.5 if mix > 0 else math.inf)
    e3 = _ratio(eps * mu * M, 24.0 * omega * zeta_star_sq)
    eta = min(eta_cap, e2, e3)
    return eta / n, eta


def preset_diana_nastya(
    constants: CurvatureConstants,
    omega: float,
    M: int,
    n: int,
    eps: float | None = None,
    zeta_star_sq: float | None = None,
    sigma_star_sq: float | None = None,
) -> tuple[float, float, float]:
    """(gamma, eta, alpha) with alpha = 1/(1+omega)."""
    alpha = alpha_for(omega)
    L_max = constants.L_max
    mu = constants.mu
    clauses = [
        _ratio(alpha, 2.0 * mu),
        1.0 / (16.0 * L_max * (1.0 + 9.0 * omega / M)),
    ]
    if eps is None:
        return 1.0 / (16.0 * L_max * n), min(clauses), alpha
    if zeta_star_sq is None or sigma_star_sq is None:
        raise ValueError("eps-dependent clause needs zeta*^2 and sigma*^2")
    mix = (n + 1.0) * zeta_star_sq + sigma_star_sq
    clauses.append(math.sqrt(_ratio(eps * mu * n, 9.0 * L_max)) * (mix ** -0.5 if mix > 0 else math.inf))
    eta = min(clauses)
    return eta / n, eta, alpha


# -- non-strongly-convex-summand regime ----------------------------------------


def preset_qrr_convex(
    constants: CurvatureConstants,
    omega: float,
    M: int,
    n: int,
    eps: float | None = None,
    zeta_star_sq: float | None = None,
    sigma_star_sq: float | None = None,
    sigma_star_n_sq: float | None = None,
) -> float:
    L_t, L_max, mu = constants.L_tilde, constants.L_max, constants.mu
    g1 = 1.0 / (16.0 * n * (L_t + (omega / (M * n)) * L_max))
    if eps is None:
        return g1
    if None in (zeta_star_sq, sigma_star_sq, sigma_star_n_sq):
        raise ValueError("eps-dependent clauses need the heterogeneity constants")
    delta_sq = zeta_star_sq + sigma_star_sq
    mix = (omega / M) * delta_sq + sigma_star_n_sq
    g2 = math.sqrt(_ratio(eps * mu, 64.0 * n * L_t)) * (mix ** -0.5 if mix > 0 else math.inf)
    g3 = _ratio(eps * mu * M, 24.0 * omega * delta_sq)
    return min(g1, g2, g3)


def preset_diana_rr_convex(
    constants: CurvatureConstants,
    omega: float,
    M: int,
    n: int,
    eps: float | None = None,
    sigma_star_n_sq: float | None = None,
) -> tuple[float, float]:
    alpha = alpha_for(omega)
    L_t, L_max, mu = constants.L_tilde, constants.L_max, constants.mu
    clauses = [
        _ratio(alpha, 2.0 * n * mu),
        1.0 / (12.0 * n * (L_t + (11.0 * omega / (M * n)) * L_max)),
    ]
    if eps is not None:
        if sigma_star_n_sq is None:
            raise ValueError("eps-dependent clause needs sigma*_n^2")
        clauses.append(math.sqrt(_ratio(eps * mu, 40.0 * n * L_t * sigma_star_n_sq)))
    return min(clauses), alpha


# -- with-replacement baselines (interpretive structural formulas) -------------
#
# The exact constants for the with-replacement baselines live in external
# analyses; these mirror the structure of the complexity bounds quoted for
# them and are excluded from the theorem-verification tests.  The multiplier
# sweep retunes them anyway.


def preset_qsgd(
    constants: CurvatureConstants,
    omega: float,
    M: int,
    eps: float | None = None,
    zeta_star_sq: float | None = None,
    sigma_star_sq: float | None = None,
) -> float:
    g1 = 1.0 / ((1.0 + 2.0 * omega / M) * constants.L_max)
    if eps is None:
        return g1
    noise = omega * (zeta_star_sq or 0.0) + (1.0 + omega) * (sigma_star_sq or 0.0)
    return min(g1, _ratio(eps * constants.mu_tilde * M, 6.0 * noise))


def preset_diana(
    constants: CurvatureConstants,
    omega: float,
    M: int,
    eps: float | None = None,
    sigma_star_sq: float | None = None,
) -> tuple[float, float]:
    alpha = alpha_for(omega)
    g1 = 1.0 / ((1.0 + 6.0 * omega / M) * constants.L_max)
    if eps is None:
        return g1, alpha
    noise = (1.0 + omega) * (sigma_star_sq or 0.0)
    return min(g1, _ratio(eps * constants.mu_tilde * M, 6.0 * noise)), alpha


def preset_local_sgd_q(constants: CurvatureConstants, omega: float, M: int, n: int) -> tuple[float, float]:
    """(gamma, eta) for the local-SGD-with-compressed-delta baseline; eta
    multiplies the averaged model delta, so eta = 1 recovers plain averaging."""
    return 1.0 / (5.0 * n * constants.L_max), 1.0


# -- tuning grids ---------------------------------------------------------------

NON_LOCAL_MULTIPLIERS = (
    0.000975, 0.00195, 0.0039, 0.0078, 0.0156, 0.0312, 0.0625, 0.125, 0.25, 0.5,
    1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096,
)
Q_NASTYA_GAMMA_MULTIPLIERS = (
    0.000975, 0.00195, 0.0039, 0.0078, 0.0156, 0.0312, 0.0625, 0.125, 0.25, 0.5,
    1, 2, 4, 8, 16, 32, 64, 128,
)
Q_NASTYA_ETA_MULTIPLIERS = (
    0.0039, 0.0078, 0.0156, 0.0312, 0.0625, 0.125, 0.25, 0.5,
    1, 2, 4, 8, 16, 32, 64, 128,
)
DIANA_NASTYA_MULTIPLIERS = Q_NASTYA_GAMMA_MULTIPLIERS
FEDCOM_GAMMA_MULTIPLIERS = (
    0.0312, 0.0625, 0.125, 0.25, 0.5, 1, 2, 4, 8, 16, 32, 64, 128, 256, 512,
    1024, 2048, 4096, 8192, 16384, 32768,
)
FEDCOM_ETA_MULTIPLIERS = Q_NASTYA_GAMMA_MULTIPLIERS
FEDPAQ_GAMMA_MULTIPLIERS = (
    0.00195, 0.0039, 0.0078, 0.0156, 0.0312, 0.0625, 0.125, 0.25, 0.5, 1, 2, 4,
    8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384, 32768, 65536,
    131072, 262144, 524288, 1048576,
)

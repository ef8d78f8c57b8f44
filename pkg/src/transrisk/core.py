"""Model primitives: damage, transition arrival rate, production flows, drifts.

Every function is pure and accepts scalars or numpy arrays interchangeably.
"""

from __future__ import annotations

import numpy as np

from .params import Controls, FlowQuantities, ModelParams, StateVector, warn_if_negative_temperature

__all__ = [
    "damage",
    "arrival_rate",
    "arrival_rate_gradient",
    "arrival_rate_curvature",
    "ces_energy",
    "energy_shares",
    "flow_quantities",
    "drifts",
]


def damage(T, params: ModelParams):
    """Multiplicative output damage exp(-eta*T); above 1 for T < 0 (warned)."""
    warn_if_negative_temperature(T)
    return np.exp(-params.eta * np.asarray(T, dtype=float))


def _arrival_pieces(T, params: ModelParams):
    T = np.asarray(T, dtype=float)
    x = T - params.T_bar
    active = x >= 0.0
    xp = np.where(active, x, 0.0)
    grow = np.exp(0.5 * params.psi1 * xp ** params.psi2)
    return x, active, xp, grow


def arrival_rate(T, params: ModelParams):
    """Transition hazard: psi0*(exp[(psi1/2)(T-T_bar)^psi2] - 1) above T_bar, else 0."""
    _, active, _, grow = _arrival_pieces(T, params)
    lam = params.psi0 * (grow - 1.0)
    return np.where(active, lam, 0.0)[()]


def arrival_rate_gradient(T, params: ModelParams):
    """Closed-form d(arrival_rate)/dT; zero on the flat region below T_bar."""
    _, active, xp, grow = _arrival_pieces(T, params)
    g = params.psi0 * grow * 0.5 * params.psi1 * params.psi2 * xp ** (params.psi2 - 1.0)
    return np.where(active, g, 0.0)[()]


def arrival_rate_curvature(T, params: ModelParams):
    """Closed-form second derivative of the arrival rate (psi2 = 2 form)."""
    _, active, xp, grow = _arrival_pieces(T, params)
    p1, p2 = params.psi1, params.psi2
    # d/dT [psi0 * grow * (p1 p2 / 2) x^(p2-1)]
    g2 = params.psi0 * grow * 0.5 * p1 * p2 * (
        (p2 - 1.0) * xp ** (p2 - 2.0) + 0.5 * p1 * p2 * xp ** (2.0 * p2 - 2.0)
    )
    return np.where(active, g2, 0.0)[()]


def ces_energy(E1, E2, E3, params: ModelParams):
    """CES aggregate of the three energy inputs (degree-1 homogeneous).

    ``omega == 0`` selects the Cobb-Douglas limit with exponents equal to the
    demand weights, which then must all see strictly positive inputs.
    """
    E1, E2, E3 = (np.asarray(e, dtype=float) for e in (E1, E2, E3))
    if np.any(E1 < 0) or np.any(E2 < 0) or np.any(E3 < 0):
        raise ValueError("energy quantities must be non-negative")
    nu = (params.nu1, params.nu2, params.nu3)
    if params.omega == 0.0:
        out = np.zeros(np.broadcast(E1, E2, E3).shape)
        for w, E in zip(nu, (E1, E2, E3)):
            if w == 0.0:
                continue
            if np.any(E <= 0):
                raise ValueError("Cobb-Douglas energy limit needs positive inputs for active weights")
            out = out + w * np.log(E)
        return np.exp(out)[()]
    s = nu[0] * E1 ** params.omega + nu[1] * E2 ** params.omega + nu[2] * E3 ** params.omega
    if np.any(s <= 0):
        raise ValueError("at least one energy input must be strictly positive")
    return (s ** (1.0 / params.omega))[()]


def energy_shares(E1, E2, E3, params: ModelParams, nu=None):
    """Marginal-value weights nu_j*(E_j/C_E)^omega; they sum to one over active inputs."""
    if nu is None:
        nu = (params.nu1, params.nu2, params.nu3)
    E = [np.asarray(e, dtype=float) for e in (E1, E2, E3)]
    if params.omega == 0.0:
        shape = np.broadcast(*E).shape
        return tuple(np.broadcast_to(np.float64(w), shape).copy() if w else np.zeros(shape)
                     for w in nu)
    powers = [w * np.where(e > 0, e, 1.0) ** params.omega * (e > 0) for w, e in zip(nu, E)]
    total = powers[0] + powers[1] + powers[2]
    return tuple(p / total for p in powers)


def flow_quantities(state: StateVector, controls: Controls, params: ModelParams) -> FlowQuantities:
    """All production-side flows implied by a state/control pair."""
    if np.any(np.asarray(controls.i_C) >= params.A_C):
        raise ValueError("i_C >= A_C leaves a negative capital-good flow")
    if np.any(np.asarray(controls.i_G) >= params.A_G):
        raise ValueError("i_G >= A_G leaves a negative green-energy flow")
    if np.any(np.asarray(controls.extraction) < 0):
        raise ValueError("extraction must be non-negative")
    L1 = np.asarray(controls.L1, dtype=float)
    if np.any(L1 < 0) or np.any(L1 > 1):
        raise ValueError("L1 must lie in [0, 1]")

    KC = np.exp(np.asarray(state.log_KC, dtype=float))
    KG = np.exp(np.asarray(state.log_KG, dtype=float))
    R = np.exp(np.asarray(state.log_R, dtype=float))
    C_K = (params.A_C - controls.i_C) * KC
    C_L = L1
    E1 = controls.extraction * R
    E2 = params.A_2 * (1.0 - L1) ** params.alpha_2
    E3 = (params.A_G - controls.i_G) * KG
    C_E = ces_energy(E1, E2, E3, params)
    D = damage(state.T, params)
    C = D * C_K ** params.alpha * C_E ** params.psi * C_L ** (1.0 - params.alpha - params.psi)
    return FlowQuantities(C=C, C_K=C_K, C_E=C_E, C_L=C_L, E1=E1, E2=E2, E3=E3, D=D)


def log_capital_drift(i, mu, phi, sigma):
    """Drift of a log capital stock: mu + i - (phi/2) i^2 - sigma^2/2."""
    return mu + i - 0.5 * phi * np.asarray(i, dtype=float) ** 2 - 0.5 * sigma**2


def drifts(state: StateVector, controls: Controls, params: ModelParams) -> dict:
    """Deterministic drift of (log_KC, log_KG, log_R, T, lambda).

    The lambda drift follows the model's printed law of motion; it is inert in
    the baseline where the arrival rate is pinned to temperature.
    """
    flows = flow_quantities(state, controls, params)
    R = np.exp(np.asarray(state.log_R, dtype=float))
    d_log_KC = log_capital_drift(controls.i_C, params.mu_C, params.phi_C, params.sigma_C)
    d_log_KG = log_capital_drift(controls.i_G, params.mu_G, params.phi_G, params.sigma_G)
    d_log_R = -np.asarray(controls.extraction, dtype=float) - 0.5 * params.sigma_R**2
    d_T = params.beta_T * (flows.E1 + flows.E2)
    d_lam = (params.mu_lambda
             + arrival_rate_gradient(state.T, params) * params.beta_T * controls.extraction * R
             - 0.5 * arrival_rate_curvature(state.T, params) * params.sigma_T**2)
    return {"log_KC": d_log_KC, "log_KG": d_log_KG, "log_R": d_log_R, "T": d_T, "lam": d_lam}

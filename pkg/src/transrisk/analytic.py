"""Closed-form solutions: post-shock value constants, the no-climate
Cobb-Douglas benchmark, its SDF moments, and comparative-static formulas.

These serve both as terminal/boundary data for the PDE stages and as
independent oracles for the numerical solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import log_capital_drift
from .params import ModelParams

__all__ = [
    "CalibrationError",
    "PostJumpConstants",
    "SpecialCaseSolution",
    "investment_root",
    "pre_jump_constant",
    "post_jump_constants",
    "post_jump_exponent",
    "post_jump_value",
    "post_jump_hjb_residual",
    "cobb_douglas_solution",
    "special_case_sdf_moments",
    "eis_jump_premium",
    "log_utility_constants",
]


class CalibrationError(ValueError):
    """A closed-form root or calibration target is unattainable."""


@dataclass(frozen=True)
class PostJumpConstants:
    c_post: float
    shock_kind: str   # "technology" | "taxation"
    i_C: float
    i_G: float


@dataclass(frozen=True)
class SpecialCaseSolution:
    i_C: float
    i_G: float
    L1: float
    extraction: float
    c0: float
    kappa1: float
    kappa2: float
    kappa3: float


def investment_root(A: float, phi: float, k: float) -> float:
    """Smaller root of phi*i^2 - (1+phi*A)*i + (A-k) = 0.

    This is the investment rate solving k/(A-i) = 1 - phi*i; the smaller
    branch keeps i < A.
    """
    disc = (1.0 + phi * A) ** 2 - 4.0 * phi * (A - k)
    if disc < 0:
        raise CalibrationError(f"investment quadratic has no real root (A={A}, phi={phi}, k={k})")
    return ((1.0 + phi * A) - math.sqrt(disc)) / (2.0 * phi)


def pre_jump_constant(params: ModelParams) -> float:
    """Additive value constant absorbing the consumption-capital block.

    Derived so the full HJB balances exactly: the log drift carries its Ito
    correction and the variance term is discounted by rho.
    """
    i_C = investment_root(params.A_C, params.phi_C, params.rho)
    mu_hat = log_capital_drift(i_C, params.mu_C, params.phi_C, params.sigma_C)
    return (params.alpha * math.log(params.A_C - i_C)
            + params.alpha / params.rho * mu_hat
            + (1.0 - params.gamma) / (2.0 * params.rho) * params.alpha**2 * params.sigma_C**2)


def post_jump_constants(params: ModelParams, shock_kind: str) -> PostJumpConstants:
    """Value constant of the absorbing post-shock economy.

    ``taxation`` differs from ``technology`` only by (psi/omega)*log(nu3),
    the confiscatory-tax discount on the all-green energy aggregate.
    """
    if shock_kind not in ("technology", "taxation"):
        raise ValueError(f"unknown shock kind {shock_kind!r}")
    p = params
    i_C = investment_root(p.A_C, p.phi_C, p.rho)
    i_G = investment_root(p.A_G, p.phi_G, p.rho)
    mu_hat_C = log_capital_drift(i_C, p.mu_C, p.phi_C, p.sigma_C)
    mu_hat_G = log_capital_drift(i_G, p.mu_G, p.phi_G, p.sigma_G)
    c = (p.alpha * math.log(p.A_C - i_C) + p.psi * math.log(p.A_G - i_G)
         + p.alpha / p.rho * mu_hat_C + p.psi / p.rho * mu_hat_G
         + (1.0 - p.gamma) / (2.0 * p.rho)
         * (p.alpha**2 * p.sigma_C**2 + p.psi**2 * p.sigma_G**2 + p.eta**2 * p.sigma_T**2))
    if shock_kind == "taxation":
        if p.omega <= 0:
            raise CalibrationError("taxation shock requires omega > 0")
        c += p.psi / p.omega * math.log(p.nu3)
    return PostJumpConstants(c_post=c, shock_kind=shock_kind, i_C=i_C, i_G=i_G)


def post_jump_exponent(log_KG, T, constants: PostJumpConstants, params: ModelParams):
    """Certainty-equivalent exponent net of the consumption-capital part."""
    return -params.eta * np.asarray(T) + params.psi * np.asarray(log_KG) + constants.c_post


def post_jump_value(state, constants: PostJumpConstants, params: ModelParams):
    """Level of the post-shock value function at a state."""
    if params.gamma == 1.0:
        raise ValueError("gamma = 1 is the log-utility case; use log_utility_constants")
    expo = (params.alpha * np.asarray(state.log_KC)
            + post_jump_exponent(state.log_KG, state.T, constants, params))
    return np.exp((1.0 - params.gamma) * expo) / (1.0 - params.gamma)


def post_jump_hjb_residual(log_KC, log_KG, T, constants: PostJumpConstants,
                           params: ModelParams):
    """Residual of the post-shock stationary equation at the closed form.

    Written per unit of (1-gamma)V, so zero means the constants are exact.
    """
    p = params
    i_C, i_G = constants.i_C, constants.i_G
    flow_const = p.alpha * math.log(p.A_C - i_C) + p.psi * math.log(p.A_G - i_G)
    if constants.shock_kind == "taxation":
        flow_const += p.psi / p.omega * math.log(p.nu3)
    mu_hat_C = log_capital_drift(i_C, p.mu_C, p.phi_C, p.sigma_C)
    mu_hat_G = log_capital_drift(i_G, p.mu_G, p.phi_G, p.sigma_G)
    del log_KC, log_KG, T  # the state parts cancel identically; kept for the call signature
    return (p.rho * (flow_const - constants.c_post)
            + p.alpha * mu_hat_C + p.psi * mu_hat_G
            + 0.5 * (1.0 - p.gamma)
            * (p.alpha**2 * p.sigma_C**2 + p.psi**2 * p.sigma_G**2 + p.eta**2 * p.sigma_T**2))


def cobb_douglas_solution(params: ModelParams) -> SpecialCaseSolution:
    """No-climate, no-transition benchmark with Cobb-Douglas energy.

    The exponents kappa_i equal the demand weights nu_i.  All four controls
    follow from maximizing the stationary flow; extraction equals rho
    exactly, and both investment rates share the k/(A-i) = 1-phi*i root.
    """
    p = params
    k1, k2, k3 = p.nu1, p.nu2, p.nu3
    i_C = investment_root(p.A_C, p.phi_C, p.rho)
    i_G = investment_root(p.A_G, p.phi_G, p.rho)
    lab = 1.0 - p.alpha - p.psi
    L1 = lab / (lab + p.psi * k2 * p.alpha_2)
    eps = p.rho
    mu_hat_C = log_capital_drift(i_C, p.mu_C, p.phi_C, p.sigma_C)
    mu_hat_G = log_capital_drift(i_G, p.mu_G, p.phi_G, p.sigma_G)
    mu_hat_R = -eps - 0.5 * p.sigma_R**2
    flow_log = (p.alpha * math.log(p.A_C - i_C)
                + p.psi * k1 * math.log(eps)
                + p.psi * k2 * math.log(p.A_2 * (1.0 - L1) ** p.alpha_2)
                + p.psi * k3 * math.log(p.A_G - i_G)
                + lab * math.log(L1))
    var = (1.0 - p.gamma) / (2.0 * p.rho)
    c0 = (flow_log
          + p.alpha / p.rho * mu_hat_C + var * (p.alpha * p.sigma_C) ** 2
          + p.psi * k3 / p.rho * mu_hat_G + var * (p.psi * k3 * p.sigma_G) ** 2
          + p.psi * k1 / p.rho * mu_hat_R + var * (p.psi * k1 * p.sigma_R) ** 2)
    return SpecialCaseSolution(i_C=i_C, i_G=i_G, L1=L1, extraction=eps, c0=c0,
                               kappa1=k1, kappa2=k2, kappa3=k3)


def special_case_foc_residuals(sol: SpecialCaseSolution, params: ModelParams) -> dict:
    """Stationary first-order-condition residuals of the benchmark solution."""
    p = params
    lab = 1.0 - p.alpha - p.psi
    return {
        "i_C": p.rho / (p.A_C - sol.i_C) - (1.0 - p.phi_C * sol.i_C),
        "i_G": p.rho / (p.A_G - sol.i_G) - (1.0 - p.phi_G * sol.i_G),
        "extraction": p.rho / sol.extraction - 1.0,
        "L1": lab / sol.L1 - p.psi * sol.kappa2 * p.alpha_2 / (1.0 - sol.L1),
    }


def special_case_sdf_moments(params: ModelParams, leverage: float = 5.0 / 3.0) -> dict:
    """Risk-free rate and market price of risk in the benchmark economy.

    The market price of risk is reported raw and scaled by the leverage
    ratio used to compare against measured premia.
    """
    p = params
    sol = cobb_douglas_solution(p)
    k1, k3 = sol.kappa1, sol.kappa3
    mu_hat_C = log_capital_drift(sol.i_C, p.mu_C, p.phi_C, p.sigma_C)
    mu_hat_G = log_capital_drift(sol.i_G, p.mu_G, p.phi_G, p.sigma_G)
    mu_hat_R = -sol.extraction - 0.5 * p.sigma_R**2
    w = 0.5 * (1.0 - 2.0 * p.gamma)
    r_f = (p.rho
           + p.alpha * mu_hat_C + w * (p.alpha * p.sigma_C) ** 2
           + p.psi * k3 * mu_hat_G + w * (p.psi * k3 * p.sigma_G) ** 2
           + p.psi * k1 * mu_hat_R + w * (p.psi * k1 * p.sigma_R) ** 2)
    mpr = p.gamma * math.sqrt((p.alpha * p.sigma_C) ** 2
                              + (p.psi * k1 * p.sigma_R) ** 2
                              + (p.psi * k3 * p.sigma_G) ** 2)
    return {"r_f": r_f, "market_price_of_risk": mpr,
            "market_price_of_risk_levered": leverage * mpr, "leverage": leverage}


def eis_jump_premium(C_pre, C_post, V_pre, V_post, eis_inverse, gamma):
    """Jump risk compensation away from unit elasticity of substitution.

    Returns 1 - (V_post/V_pre)^((eis_inverse-gamma)/(1-gamma))
              * (C_post/C_pre)^(-eis_inverse);
    at ``eis_inverse == 1`` this collapses to the unit-EIS compensation.
    """
    C_pre, C_post = np.asarray(C_pre, float), np.asarray(C_post, float)
    if np.any(C_pre <= 0) or np.any(C_post <= 0):
        raise ValueError("consumption levels must be positive")
    v_ratio = np.asarray(V_post, float) / np.asarray(V_pre, float)
    if np.any(v_ratio <= 0):
        raise ValueError("value ratio must be positive")
    if gamma == 1.0:
        raise ValueError("gamma = 1 not supported by this formula")
    expo = (eis_inverse - gamma) / (1.0 - gamma)
    return (1.0 - v_ratio**expo * (C_post / C_pre) ** (-eis_inverse))[()]


def log_utility_constants(params: ModelParams, shock_kind: str) -> dict:
    """Additive value constants of the log-utility variant.

    The value function is additively separable, so no variance terms appear.
    Note the taxation constant applies the weight ``nu1`` in its
    (psi/omega)*log term; the unit-EIS recursive case uses ``nu3`` there.
    """
    if shock_kind not in ("technology", "taxation"):
        raise ValueError(f"unknown shock kind {shock_kind!r}")
    p = params
    i_C = investment_root(p.A_C, p.phi_C, p.rho)
    i_G = investment_root(p.A_G, p.phi_G, p.rho)
    mu_hat_C = log_capital_drift(i_C, p.mu_C, p.phi_C, p.sigma_C)
    mu_hat_G = log_capital_drift(i_G, p.mu_G, p.phi_G, p.sigma_G)
    c_pre = p.alpha * math.log(p.A_C - i_C) + p.alpha / p.rho * mu_hat_C
    c_post = (p.alpha * math.log(p.A_C - i_C) + p.psi * math.log(p.A_G - i_G)
              + p.alpha / p.rho * mu_hat_C + p.psi / p.rho * mu_hat_G)
    if shock_kind == "taxation":
        if p.omega <= 0:
            raise CalibrationError("taxation shock requires omega > 0")
        c_post += p.psi / p.omega * math.log(p.nu1)
    return {"c_pre": c_pre, "c_post": c_post}

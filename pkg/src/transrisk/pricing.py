"""Shadow prices and asset values on a solved stage.

Covers spot input prices, the fossil tax wedges supporting the planner's
allocation, stochastic-discount-factor terms (risk-free rate, diffusive
risk prices, jump compensation), closed-form post-shock firm values, and
the false-transient solve of each sector's pre-shock price equation.

Consumption here is frequently carried per unit of consumption-capital
weight ("hat" quantities, divided by K_C^alpha): firm prices factor that
way, so one 3-D field serves every capital level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import investment_root, pre_jump_constant
from .core import arrival_rate, arrival_rate_gradient, flow_quantities, log_capital_drift
from .foc import _energy_parts, wasted_share
from .gridfd import Grid3, fd_derivatives
from scipy.sparse.linalg import splu

from .linsolve import conjugate_gradient
from .params import Controls, ModelParams, StateVector
from .scenarios import StageRegime
from .solver import Solution, SolverConfig, _apply_floors, _lambda_field, _stencil_for

__all__ = ["SdfTerms", "spot_prices", "optimal_taxes", "sdf_terms",
           "post_jump_firm_prices", "solve_firm_price_pde", "stage_fields",
           "post_consumption_hat", "envelope_prices", "sector_dividends",
           "PriceSurfaces", "SECTORS"]

SECTORS = ("capital", "oil", "coal", "green")


@dataclass
class SdfTerms:
    r_f: float
    sigma_pi: dict          # diffusive loadings keyed by risk channel
    theta_pi: float         # jump compensation
    r_f_tilde: float        # rate net of consumption-capital contributions
    r_f_nojump: float


@dataclass
class PriceSurfaces:
    s: dict                 # sector -> reduced price field (per K_C^alpha)
    spot: dict              # per-K_C^alpha spot prices and wage
    diagnostics: dict


def spot_prices(state: StateVector, controls: Controls, params: ModelParams,
                nu: tuple | None = None) -> dict:
    """Input prices from the final-good first-order conditions."""
    p = params
    fl = flow_quantities(state, controls, p)
    nu = nu if nu is not None else (p.nu1, p.nu2, p.nu3)
    out = {"P_K": p.alpha * fl.C / fl.C_K,
           "wage": (1.0 - p.alpha - p.psi) * fl.C / fl.C_L}
    for name, w, E in (("P_1", nu[0], fl.E1), ("P_2", nu[1], fl.E2), ("P_3", nu[2], fl.E3)):
        if w == 0.0:
            out[name] = 0.0
            continue
        if np.any(np.asarray(E) <= 0):
            raise ValueError(f"{name} undefined: zero quantity for a demanded input")
        ratio = (E / fl.C_E) ** p.omega if p.omega != 0.0 else 1.0
        out[name] = p.psi * w * (fl.C / E) * ratio
    return out


def optimal_taxes(derivs: dict, state: StateVector, controls: Controls,
                  params: ModelParams) -> dict:
    """Fossil production wedges aligning decentralized and planner choices."""
    p = params
    v_R = np.asarray(derivs["d_log_R"], dtype=float)
    v_T = np.asarray(derivs["d_T"], dtype=float)
    v_lam = np.asarray(derivs.get("d_lam", 0.0), dtype=float)
    lam_grad = arrival_rate_gradient(state.T, p)
    climate = v_T + lam_grad * v_lam
    R = np.exp(np.asarray(state.log_R, dtype=float))

    denom_oil = v_R - p.beta_T * R * climate
    bad_oil = np.abs(denom_oil) < 1e-300
    tau1 = np.where(bad_oil, np.nan, 1.0 - v_R / np.where(bad_oil, 1.0, denom_oil))

    L1 = np.asarray(controls.L1, dtype=float)
    labor = p.rho * (1.0 - p.alpha - p.psi) / L1
    coal_cost = p.alpha_2 * p.beta_T * p.A_2 * (1.0 - L1) ** (p.alpha_2 - 1.0) * climate
    denom_coal = labor - coal_cost
    bad_coal = np.abs(denom_coal) < 1e-300
    tau2 = np.where(bad_coal, np.nan, 1.0 - labor / np.where(bad_coal, 1.0, denom_coal))
    return {"tau1": tau1[()], "tau2": tau2[()],
            "degenerate": bool(np.any(bad_oil) or np.any(bad_coal))}


def post_consumption_hat(log_KG, T, params: ModelParams, shock_kind: str):
    """Post-shock consumption per K_C^alpha at a (log_KG, T) state."""
    p = params
    i_C = investment_root(p.A_C, p.phi_C, p.rho)
    i_G = investment_root(p.A_G, p.phi_G, p.rho)
    out = (np.exp(-p.eta * np.asarray(T)) * (p.A_C - i_C) ** p.alpha
           * ((p.A_G - i_G) * np.exp(np.asarray(log_KG))) ** p.psi)
    if shock_kind == "taxation":
        out = out * p.nu3 ** (p.psi / p.omega)
    return out


def post_jump_firm_prices(C_post, params: ModelParams) -> dict:
    """Closed-form absorbing-state firm values; fossil claims are worthless."""
    C_post = np.asarray(C_post, dtype=float)
    if np.any(C_post <= 0):
        raise ValueError("post-shock consumption must be positive")
    return {"S_K": params.alpha * C_post / params.rho,
            "S_green": params.psi * C_post / params.rho,
            "S_oil": np.zeros_like(C_post)[()],
            "S_coal": np.zeros_like(C_post)[()]}


def stage_fields(solution: Solution, params: ModelParams, post: dict | None,
                 config: SolverConfig | None = None) -> dict:
    """Grid fields needed by the SDF and the sector price equations.

    ``post`` carries the jump target as {"exponent": field, "C_hat": field};
    None switches the hazard channel off (counterfactual stages).
    """
    p = params
    cfg = config or solution.config
    grid = solution.grid
    regime = solution.regime
    meshes = dict(zip(("log_KG", "T", "log_R"), grid.meshgrid()))
    derivs = fd_derivatives(solution.v, grid)
    _apply_floors(derivs, cfg)
    c = solution.controls
    KG, R = np.exp(meshes["log_KG"]), np.exp(meshes["log_R"])
    E1, E2, E3, CE, (s1, s2, s3) = _energy_parts(c.i_G, c.extraction, c.L1, KG, R, regime, p)

    waste = wasted_share(c.i_G, c.extraction, c.L1, meshes, regime, p)
    flow = (p.psi * np.log(CE) + (1.0 - p.alpha - p.psi) * np.log(c.L1)
            - p.eta * meshes["T"] + np.log1p(-waste))
    i_C = investment_root(p.A_C, p.phi_C, p.rho)
    C_hat = np.exp(flow) * (p.A_C - i_C) ** p.alpha

    # consumption log-partials with controls held at their optimum
    gC = {"log_KG": p.psi * s3, "T": np.full_like(CE, -p.eta), "log_R": p.psi * s1}
    hC = {"log_KG": p.psi * p.omega * s3 * (1.0 - s3),
          "T": np.zeros_like(CE),
          "log_R": p.psi * p.omega * s1 * (1.0 - s1)}

    mu_hat_C = log_capital_drift(i_C, p.mu_C, p.phi_C, p.sigma_C)
    mu = {"log_KG": log_capital_drift(c.i_G, p.mu_G, p.phi_G, p.sigma_G) * np.ones_like(CE),
          "T": p.beta_T * (E1 + E2),
          "log_R": (-c.extraction - 0.5 * p.sigma_R**2) * np.ones_like(CE)}
    sig = {"log_KG": p.sigma_G, "T": p.sigma_T, "log_R": p.sigma_R}
    vd = {"log_KG": derivs["d_log_KG"], "T": derivs["d_T"], "log_R": derivs["d_log_R"]}
    vdd = {"log_KG": derivs["d2_log_KG"], "T": derivs["d2_T"], "log_R": derivs["d2_log_R"]}

    one_m_g = 1.0 - p.gamma
    cap_terms = p.alpha * mu_hat_C + 0.5 * (1.0 - 2.0 * p.gamma) * (p.alpha * p.sigma_C) ** 2
    r_nojump = p.rho - p.rho * one_m_g * (flow - solution.v) + cap_terms
    sigma_pi = {"log_KC": p.alpha * p.gamma * p.sigma_C}
    for x in ("log_KG", "T", "log_R"):
        a = one_m_g * vd[x] - gC[x]
        b = one_m_g * vdd[x] - hC[x]
        r_nojump = r_nojump - a * mu[x] - 0.5 * sig[x] ** 2 * (b + a * a)
        sigma_pi[x] = -a * sig[x]
    sigma_pi["lam"] = np.zeros_like(CE)   # hazard pinned to temperature: no own loading

    lam = _lambda_field(meshes["T"], regime, p)
    if post is None:
        one_minus_theta = np.ones_like(CE)
        theta = np.zeros_like(CE)
    else:
        vpost_over_vpre = np.exp(np.clip(
            one_m_g * (post["exponent"] - solution.c_pre - solution.v), -400.0, 400.0))
        one_minus_theta = vpost_over_vpre * (C_hat / post["C_hat"])
        theta = 1.0 - one_minus_theta
    r_f = r_nojump + lam * theta
    r_tilde = r_nojump - cap_terms

    return {"meshes": meshes, "derivs": derivs, "C_hat": C_hat, "flow": flow,
            "E1": E1, "E2": E2, "E3": E3, "CE": CE, "shares": (s1, s2, s3),
            "mu": mu, "sig": sig, "sigma_pi": sigma_pi, "lam": lam,
            "theta_pi": theta, "one_minus_theta": one_minus_theta,
            "r_f": r_f, "r_f_tilde": r_tilde, "r_f_nojump": r_nojump,
            "cap_terms": cap_terms, "waste": waste, "i_C": i_C}


def sdf_terms(state: StateVector, controls: Controls, derivs: dict,
              value_pre: float, value_post: dict | None,
              params: ModelParams) -> SdfTerms:
    """Per-state discount-factor terms.

    ``value_pre`` is the reduced pre-shock value exponent (constant plus
    v); ``value_post``, when present, carries {"exponent", "C_hat"} for the
    jump target, plus optionally "lam" for the hazard level (defaults to
    the temperature-driven rate).
    """
    p = params
    fl = flow_quantities(state, controls, p)
    if np.any(np.asarray(fl.C) <= 0):
        raise ValueError("nonpositive consumption")
    s1 = p.nu1 * (fl.E1 / fl.C_E) ** p.omega if fl.E1 > 0 else 0.0
    s3 = p.nu3 * (fl.E3 / fl.C_E) ** p.omega
    flow = (p.psi * np.log(fl.C_E) + (1.0 - p.alpha - p.psi) * np.log(fl.C_L)
            - p.eta * state.T)
    i_C = investment_root(p.A_C, p.phi_C, p.rho)
    C_hat = fl.C / np.exp(p.alpha * state.log_KC)
    v = value_pre - pre_jump_constant(p)

    gC = {"log_KG": p.psi * s3, "T": -p.eta, "log_R": p.psi * s1}
    hC = {"log_KG": p.psi * p.omega * s3 * (1.0 - s3), "T": 0.0,
          "log_R": p.psi * p.omega * s1 * (1.0 - s1)}
    mu = {"log_KG": log_capital_drift(controls.i_G, p.mu_G, p.phi_G, p.sigma_G),
          "T": p.beta_T * (fl.E1 + fl.E2),
          "log_R": -controls.extraction - 0.5 * p.sigma_R**2}
    sig = {"log_KG": p.sigma_G, "T": p.sigma_T, "log_R": p.sigma_R}
    mu_hat_C = log_capital_drift(i_C, p.mu_C, p.phi_C, p.sigma_C)
    one_m_g = 1.0 - p.gamma
    cap_terms = p.alpha * mu_hat_C + 0.5 * (1.0 - 2.0 * p.gamma) * (p.alpha * p.sigma_C) ** 2

    r_nojump = p.rho - p.rho * one_m_g * (flow - v) + cap_terms
    sigma_pi = {"log_KC": p.alpha * p.gamma * p.sigma_C}
    for x in ("log_KG", "T", "log_R"):
        a = one_m_g * derivs[f"d_{x}"] - gC[x]
        b = one_m_g * derivs.get(f"d2_{x}", 0.0) - hC[x]
        r_nojump = r_nojump - a * mu[x] - 0.5 * sig[x] ** 2 * (b + a * a)
        sigma_pi[x] = -a * sig[x]
    sigma_pi["lam"] = 0.0

    if value_post is None:
        theta = 0.0
        lam = 0.0
    else:
        ratio = np.exp(one_m_g * (value_post["exponent"] - value_pre))
        theta = 1.0 - ratio * (C_hat / value_post["C_hat"])
        lam = value_post.get("lam", arrival_rate(state.T, p))
    r_f = r_nojump + lam * theta
    return SdfTerms(r_f=float(r_f), sigma_pi={k: float(np.asarray(s)) for k, s in sigma_pi.items()},
                    theta_pi=float(theta), r_f_tilde=float(r_nojump - cap_terms),
                    r_f_nojump=float(r_nojump))


def sector_dividends(fields: dict, sector: str, params: ModelParams,
                     regime: StageRegime, taxes: dict | None = None) -> np.ndarray:
    """Per-K_C^alpha dividend flow of one sector at the stage allocation."""
    p = params
    s1, s2, s3 = fields["shares"]
    C_hat = fields["C_hat"]
    if sector == "capital":
        return p.alpha * C_hat
    if sector == "green":
        return p.psi * s3 * C_hat
    if sector == "oil":
        tau = regime.tax_oil if not regime.planner else (
            taxes["tau1"] if taxes is not None else 0.0)
        return p.psi * s1 * C_hat * (1.0 - tau)
    if sector == "coal":
        tau = regime.tax_coal if not regime.planner else (
            taxes["tau2"] if taxes is not None else 0.0)
        L1 = np.maximum(fields.get("L1", 1.0), 1e-300)
        wage_bill = (1.0 - p.alpha - p.psi) * (1.0 - L1) / L1 * C_hat
        return p.psi * s2 * C_hat * (1.0 - tau) - wage_bill
    raise ValueError(f"unknown sector {sector!r}")


def envelope_prices(solution: Solution, fields: dict, params: ModelParams) -> dict:
    """Closed-form per-K_C^alpha firm values from the value-function slopes."""
    C_hat = fields["C_hat"]
    d = fields["derivs"]
    return {"capital": params.alpha * C_hat / params.rho,
            "oil": d["d_log_R"] * C_hat / params.rho,
            "green": d["d_log_KG"] * C_hat / params.rho}


def solve_firm_price_pde(sector: str, solution: Solution, fields: dict,
                         params: ModelParams, grid: Grid3 | None = None,
                         config: SolverConfig | None = None,
                         s_post: np.ndarray | None = None,
                         dividends: np.ndarray | None = None,
                         dt: float = 5.0, tol: float = 1e-8,
                         max_iter: int = 400, cg_tol: float = 1e-9) -> np.ndarray:
    """False-transient solve of one sector's price equation.

    The equation is linear given the stage fields: discount at the net rate
    plus hazard, risk-adjusted drifts, diffusion, and the hazard-weighted
    post-shock value in the source.
    """
    p = params
    grid = grid or solution.grid
    if sector not in SECTORS:
        raise ValueError(f"unknown sector {sector!r}")
    if s_post is None:
        s_post = np.zeros(grid.shape)
    if dividends is None:
        regime = solution.regime
        taxes = None
        if regime.planner:
            taxes = optimal_taxes(fields["derivs"],
                                  StateVector(log_KC=0.0,
                                              log_KG=fields["meshes"]["log_KG"],
                                              log_R=fields["meshes"]["log_R"],
                                              T=fields["meshes"]["T"]),
                                  Controls(i_C=fields["i_C"], i_G=solution.controls.i_G,
                                           extraction=solution.controls.extraction,
                                           L1=solution.controls.L1), p)
        fields = dict(fields)
        fields["L1"] = solution.controls.L1
        dividends = sector_dividends(fields, sector, p, solution.regime, taxes)

    lam = fields["lam"]
    diag = -(fields["r_f_tilde"] + lam)
    source = dividends + lam * fields["one_minus_theta"] * s_post
    drifts = tuple(fields["mu"][x] - fields["sigma_pi"][x] * fields["sig"][x]
                   for x in ("log_KG", "T", "log_R"))
    diff = tuple(0.5 * fields["sig"][x] ** 2 for x in ("log_KG", "T", "log_R"))

    st = _stencil_for(grid)
    s = np.maximum(source, 0.0) / np.maximum(-diag, 1e-6)   # perpetuity-style start
    step = dt
    for _ in range(max_iter):
        # weakly damped stationary operator: direct sparse LU per step (the
        # normal-equation CG hits its rounding floor on these systems)
        M = st.matrix(drifts, diff, diag, 1.0 / step).tocsc()
        rhs = s.ravel() / step + source.ravel()
        s_new = splu(M).solve(rhs).reshape(grid.shape)
        delta = float(np.max(np.abs(s_new - s))) / step
        s = s_new
        if delta < tol:
            return s
        step = min(step * 2.0, 1e5)   # linear equation: the step only paces relaxation
    raise RuntimeError(f"price equation for {sector} did not converge (delta={delta:.2e})")

"""Scenario orchestration: staged backward-induction solves, paired
counterfactuals, zero-shock simulation, and across-the-jump comparisons.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .analytic import investment_root, post_jump_exponent
from .core import arrival_rate, flow_quantities, log_capital_drift
from .foc import GridControls
from .gridfd import Grid3, trilinear
from .params import Controls, ModelParams, StateVector
from .pricing import (envelope_prices, post_consumption_hat, solve_firm_price_pde,
                      spot_prices, stage_fields, SECTORS)
from .scenarios import ScenarioSpec, SolvePlan, plan_stages
from .solver import Solution, SolverConfig, solve_pre_jump

__all__ = ["ScenarioRun", "SimPath", "run_scenario", "simulate_path",
           "post_jump_delta", "price_run"]


@dataclass
class ScenarioRun:
    spec: ScenarioSpec
    plan: SolvePlan
    params: ModelParams
    grid: Grid3
    stages: list            # Solutions, terminal-most first (matches plan.stages)
    counterfactual: Solution

    @property
    def current(self) -> Solution:
        """The stage the economy starts in."""
        return self.stages[-1]


@dataclass
class SimPath:
    times: np.ndarray
    states: dict             # log_KC, log_KG, log_R, T arrays over time
    controls: dict           # i_C, i_G, extraction, L1
    flows: dict              # C, E1, E2, E3, green_investment
    survival: np.ndarray
    clamped: bool = False
    prices: dict = field(default_factory=dict)


def _post_field_pair(stage_next, params, grid):
    """Jump-target (exponent, consumption) fields from the next stage."""
    KG, T, _ = grid.meshgrid()
    if isinstance(stage_next, Solution):
        fields_next = stage_fields(stage_next, params, post=None)
        return {"exponent": stage_next.c_pre + stage_next.v,
                "C_hat": fields_next["C_hat"]}
    # analytic terminal constants
    return {"exponent": post_jump_exponent(KG, T, stage_next, params),
            "C_hat": post_consumption_hat(KG, T, params, stage_next.shock_kind)}


def run_scenario(params: ModelParams, spec: ScenarioSpec, grid: Grid3,
                 config: SolverConfig | None = None, log_every: int = 0) -> ScenarioRun:
    """Solve every stage of a scenario plus its no-hazard counterfactual.

    The counterfactual shares the stage-0 regime with the hazard switched
    off and is solved first: it prices the pair and warm-starts the risk
    stages.
    """
    cfg = config or SolverConfig()
    plan = plan_stages(spec, params)
    cf_regime = plan.stages[-1].counterfactual()
    cf = solve_pre_jump(params, cf_regime, None, grid, cfg, log_every=log_every)

    cf_fields = None
    if any(s.hybrid_weight > 0 for s in plan.stages):
        d = cf.derivative_fields(cfg)
        cf_fields = {"v_R": d["d_log_R"], "v_T": d["d_T"]}

    solved = []
    target = plan.terminal
    v_warm, c_warm = cf.v, cf.controls
    for regime in plan.stages:
        post = _post_field_pair(target, params, grid)
        sol = solve_pre_jump(params, regime, post["exponent"], grid, cfg,
                             v0=v_warm, controls0=c_warm,
                             cf_fields=cf_fields if regime.hybrid_weight > 0 else None,
                             log_every=log_every)
        solved.append(sol)
        target = sol
        v_warm, c_warm = sol.v, sol.controls
    return ScenarioRun(spec=spec, plan=plan, params=params, grid=grid,
                       stages=solved, counterfactual=cf)


def _interp_controls(solution: Solution, pts) -> Controls:
    g = solution.grid
    return Controls(
        i_C=solution.controls.i_C,
        i_G=trilinear(g, solution.controls.i_G, pts),
        extraction=trilinear(g, solution.controls.extraction, pts),
        L1=np.clip(trilinear(g, solution.controls.L1, pts), 0.0, 1.0),
    )


def simulate_path(solution: Solution, params: ModelParams, init: StateVector | None = None,
                  horizon: float = 50.0, dt_sim: float = 0.05) -> SimPath:
    """Zero-shock forward integration under a stage's solved controls.

    Controls are read by trilinear interpolation; states follow their
    deterministic drifts (no Brownian draws, no realized jump); survival
    accumulates exp(-hazard dt) stepwise.
    """
    p = params
    if init is None:
        init = StateVector(log_KC=float(np.log(p.K_C0)), log_KG=float(np.log(p.K_G0)),
                           log_R=float(np.log(p.R_0)), T=p.T_0)
    n = int(round(horizon / dt_sim)) + 1
    times = np.arange(n) * dt_sim
    out = {k: np.empty(n) for k in ("log_KC", "log_KG", "log_R", "T")}
    ctrl = {k: np.empty(n) for k in ("i_C", "i_G", "extraction", "L1")}
    flows = {k: np.empty(n) for k in ("C", "E1", "E2", "E3", "green_investment")}
    survival = np.empty(n)

    bounds = solution.grid.bounds()
    state = np.array([init.log_KG, init.T, init.log_R], dtype=float)
    log_KC = init.log_KC
    surv = 1.0
    clamped = False
    regime = solution.regime

    for k in range(n):
        clipped = np.array([np.clip(state[j], *bounds[j]) for j in range(3)])
        if not np.allclose(clipped, state):
            clamped = True
        c = _interp_controls(solution, clipped)
        sv = StateVector(log_KC=log_KC, log_KG=clipped[0], log_R=clipped[2], T=clipped[1])
        fl = flow_quantities_for_regime(sv, c, p, regime)
        lam = _hazard_level(clipped[1], regime, p)

        out["log_KC"][k], out["log_KG"][k] = log_KC, state[0]
        out["log_R"][k], out["T"][k] = state[2], state[1]
        for name in ctrl:
            ctrl[name][k] = getattr(c, name)
        flows["C"][k] = fl["C"]
        flows["E1"][k], flows["E2"][k], flows["E3"][k] = fl["E1"], fl["E2"], fl["E3"]
        flows["green_investment"][k] = c.i_G * np.exp(sv.log_KG)
        survival[k] = surv

        if k == n - 1:
            break
        log_KC += dt_sim * log_capital_drift(c.i_C, p.mu_C, p.phi_C, p.sigma_C)
        state = state + dt_sim * np.array([
            log_capital_drift(c.i_G, p.mu_G, p.phi_G, p.sigma_G),
            p.beta_T * (fl["E1"] + fl["E2"]),
            -c.extraction - 0.5 * p.sigma_R**2,
        ])
        surv *= float(np.exp(-lam * dt_sim))

    if clamped:
        warnings.warn("simulated path left the grid box; states were clamped",
                      RuntimeWarning, stacklevel=2)
    return SimPath(times=times, states=out, controls=ctrl, flows=flows,
                   survival=survival, clamped=clamped)


def flow_quantities_for_regime(state: StateVector, controls: Controls,
                               params: ModelParams, regime) -> dict:
    """Production flows under a stage's effective weights and activity set."""
    from .foc import _energy_parts

    KG = np.exp(np.asarray(state.log_KG, dtype=float))
    R = np.exp(np.asarray(state.log_R, dtype=float))
    E1, E2, E3, CE, shares = _energy_parts(controls.i_G, controls.extraction,
                                           controls.L1, KG, R, regime, params)
    p = params
    C_K = (p.A_C - controls.i_C) * np.exp(np.asarray(state.log_KC, dtype=float))
    C = (np.exp(-p.eta * np.asarray(state.T)) * C_K ** p.alpha * CE ** p.psi
         * np.asarray(controls.L1) ** (1.0 - p.alpha - p.psi))
    if regime.wasteful_tax:
        s1, s2, _ = shares
        C = C * (1.0 - p.psi * (regime.tax_oil * s1 + regime.tax_coal * s2))
    return {"C": C, "C_K": C_K, "C_E": CE, "E1": E1, "E2": E2, "E3": E3,
            "shares": shares}


def _hazard_level(T, regime, params):
    if regime.arrival == "off":
        return 0.0
    if regime.arrival == "constant":
        return regime.lam_bar
    return float(arrival_rate(T, params))


def price_run(run: ScenarioRun, config: SolverConfig | None = None,
              sectors=SECTORS) -> dict:
    """Sector price fields for every stage and the counterfactual.

    Stages are priced backward so each stage's jump lands on the next
    stage's priced claim; fossil claims die at the terminal shock.
    """
    params, grid = run.params, run.grid
    KG, T, _ = grid.meshgrid()
    terminal_Chat = post_consumption_hat(KG, T, params, run.plan.terminal.shock_kind)
    s_terminal = {
        "capital": params.alpha * terminal_Chat / params.rho,
        "green": params.psi * terminal_Chat / params.rho,
        "oil": np.zeros(grid.shape),
        "coal": np.zeros(grid.shape),
    }

    out = {"stages": [], "counterfactual": None}
    target = run.plan.terminal
    s_next = s_terminal
    for sol in run.stages:
        post = _post_field_pair(target, params, grid)
        fields = stage_fields(sol, params, post)
        priced = {sec: solve_firm_price_pde(sec, sol, fields, params, grid, config,
                                            s_post=s_next[sec])
                  for sec in sectors}
        out["stages"].append({"fields": fields, "s": priced,
                              "envelope": envelope_prices(sol, fields, params)})
        target = sol
        s_next = priced

    cf_fields = stage_fields(run.counterfactual, params, post=None)
    out["counterfactual"] = {
        "fields": cf_fields,
        "s": {sec: solve_firm_price_pde(sec, run.counterfactual, cf_fields, params,
                                        grid, config, s_post=None)
              for sec in sectors},
        "envelope": envelope_prices(run.counterfactual, cf_fields, params),
    }
    return out


def path_prices(run: ScenarioRun, priced: dict, path: SimPath, arm: str) -> dict:
    """Firm and spot price levels along a simulated path.

    Firm prices scale the reduced fields by K_C^alpha; the normalized
    variant subtracts the counterfactual's initial value sector by sector.
    """
    params = run.params
    grid = run.grid
    entry = priced["stages"][-1] if arm == "risk" else priced["counterfactual"]
    sol = run.current if arm == "risk" else run.counterfactual
    pts = np.column_stack([path.states["log_KG"], path.states["T"], path.states["log_R"]])
    kfac = np.exp(params.alpha * path.states["log_KC"])
    firm = {sec: trilinear(grid, entry["s"][sec], pts) * kfac for sec in entry["s"]}

    spot = {k: np.empty(path.times.size) for k in ("P_1", "P_2", "P_3", "P_K", "wage")}
    for i in range(path.times.size):
        sv = StateVector(log_KC=path.states["log_KC"][i], log_KG=path.states["log_KG"][i],
                         log_R=path.states["log_R"][i], T=path.states["T"][i])
        c = Controls(i_C=path.controls["i_C"][i], i_G=path.controls["i_G"][i],
                     extraction=path.controls["extraction"][i], L1=path.controls["L1"][i])
        pr = _regime_spot(sv, c, params, sol.regime)
        for k in spot:
            spot[k][i] = pr[k]
    return {"firm": firm, "spot": spot}


def _regime_spot(state, controls, params, regime):
    nu = regime.nu
    fl = flow_quantities_for_regime(state, controls, params, regime)
    p = params
    out = {"P_K": p.alpha * fl["C"] / fl["C_K"],
           "wage": (1.0 - p.alpha - p.psi) * fl["C"] / max(controls.L1, 1e-300)}
    for key, w, E in (("P_1", nu[0], fl["E1"]), ("P_2", nu[1], fl["E2"]),
                      ("P_3", nu[2], fl["E3"])):
        if w == 0.0 or np.any(np.asarray(E) <= 0):
            out[key] = np.nan
        else:
            ratio = (E / fl["C_E"]) ** p.omega if p.omega != 0.0 else 1.0
            out[key] = p.psi * w * (fl["C"] / E) * ratio
    return out


def post_jump_delta(run: ScenarioRun, t_star: float = 50.0, dt_sim: float = 0.05) -> dict:
    """Percent changes across a shock realized at ``t_star`` on the risk path.

    Compares output, green investment, and the green firm value just before
    and just after the jump at the simulated state.  The green firm values
    use the closed forms: slope-based before the jump, perpetuity after.
    """
    params = run.params
    path = simulate_path(run.current, params, horizon=t_star, dt_sim=dt_sim)
    i = path.times.size - 1
    sv = StateVector(log_KC=path.states["log_KC"][i], log_KG=path.states["log_KG"][i],
                     log_R=path.states["log_R"][i], T=path.states["T"][i])
    c_pre = Controls(i_C=path.controls["i_C"][i], i_G=path.controls["i_G"][i],
                     extraction=path.controls["extraction"][i], L1=path.controls["L1"][i])
    C_pre = float(path.flows["C"][i])
    I_G_pre = float(path.flows["green_investment"][i])
    kfac = float(np.exp(params.alpha * sv.log_KC))

    d = run.current.derivative_fields()
    pts = np.array([[sv.log_KG, sv.T, sv.log_R]])
    v_KG = float(trilinear(run.grid, d["d_log_KG"], pts))
    C_hat_pre = C_pre / kfac
    S_green_pre = v_KG * C_hat_pre / params.rho * kfac

    target = run.stages[-2] if len(run.stages) > 1 else run.plan.terminal
    if isinstance(target, Solution):
        c_post = _interp_controls(target, pts)
        fl_post = flow_quantities_for_regime(sv, c_post, params, target.regime)
        C_post = float(fl_post["C"])
        i_G_post = float(np.asarray(c_post.i_G))
        d_post = target.derivative_fields()
        v_KG_post = float(trilinear(run.grid, d_post["d_log_KG"], pts))
        S_green_post = v_KG_post * (C_post / kfac) / params.rho * kfac
    else:
        C_post = float(post_consumption_hat(sv.log_KG, sv.T, params,
                                            target.shock_kind)) * kfac
        i_G_post = investment_root(params.A_G, params.phi_G, params.rho)
        S_green_post = params.psi * C_post / params.rho

    I_G_post = i_G_post * float(np.exp(sv.log_KG))
    return {
        "delta_output": C_post / C_pre - 1.0,
        "delta_green_investment": I_G_post / I_G_pre - 1.0,
        "delta_green_price": S_green_post / S_green_pre - 1.0,
        "state": sv,
        "C_pre": C_pre, "C_post": C_post,
    }

"""First-order-condition control updates on the value-function grid.

The consumption-capital investment rate decouples into a scalar quadratic.
The remaining three controls (green investment, extraction, final-output
labor) are coupled through the energy aggregate and are solved per node by a
damped fixed point; callers then blend the result with the previous sweep's
controls through the outer relaxation factor.

All functions broadcast over arbitrarily shaped state/derivative arrays, so
the same code serves a single node and a full grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import investment_root
from .core import log_capital_drift
from .params import Controls, ModelParams
from .scenarios import StageRegime

__all__ = ["GridControls", "solve_controls", "solve_controls_at_node",
           "foc_residuals", "control_hamiltonian", "wasted_share",
           "EXTRACTION_FLOOR", "L1_FLOOR"]

EXTRACTION_FLOOR = 1e-16
EXTRACTION_CAP = 0.12           # reserves-fraction rate; keeps advection bounded
L1_FLOOR = np.finfo(float).eps
COAL_L1_CAP = 1.0 - 1e-12       # interior cap while the coal sector operates
I_G_FLOOR = -0.25               # disinvestment guard during transients


@dataclass
class GridControls:
    i_C: float
    i_G: np.ndarray
    extraction: np.ndarray
    L1: np.ndarray
    foc_flagged: int = 0         # nodes where the inner fixed point failed to improve
    raw: tuple | None = None     # unrelaxed FOC solution, warm start for the next sweep

    def as_controls(self) -> Controls:
        return Controls(i_C=self.i_C, i_G=self.i_G, extraction=self.extraction, L1=self.L1)


def _energy_parts(i_G, eps, L1, KG, R, regime: StageRegime, params: ModelParams):
    """Quantities and marginal-value weights for the stage's active inputs."""
    nu1, nu2, nu3 = regime.nu
    E1 = eps * R if regime.oil_active else np.zeros_like(R)
    E2 = params.A_2 * (1.0 - L1) ** params.alpha_2 if regime.coal_active else np.zeros_like(L1)
    E3 = (params.A_G - i_G) * KG
    w = params.omega
    if w == 0.0:
        act = [(nu1 if regime.oil_active else 0.0),
               (nu2 if regime.coal_active else 0.0), nu3]
        shape = np.broadcast(E1, E2, E3).shape
        shares = tuple(np.full(shape, a) for a in act)
        log_CE = sum(a * np.log(np.where(E > 0, E, 1.0)) for a, E in zip(act, (E1, E2, E3)))
        return E1, E2, E3, np.exp(log_CE), shares
    terms = [nu1 * E1**w * (E1 > 0), nu2 * E2**w * (E2 > 0), nu3 * E3**w]
    total = terms[0] + terms[1] + terms[2]
    CE = total ** (1.0 / w)
    shares = tuple(t / total for t in terms)
    return E1, E2, E3, CE, shares


def _oil_margin(v_R, v_T, R, regime: StageRegime, params: ModelParams, cf=None):
    """Marginal value an extraction unit must cover: reserves plus climate."""
    if not regime.planner:
        return v_R
    m = v_R - regime.chi * params.beta_T * R * v_T
    if regime.hybrid_weight > 0.0 and cf is not None:
        m_cf = cf["v_R"] - params.beta_T * R * cf["v_T"]
        m = (1.0 - regime.hybrid_weight) * m + regime.hybrid_weight * m_cf
    return m


def _coal_climate_value(v_T, regime: StageRegime, params: ModelParams, cf=None):
    """Temperature marginal value applied to coal emissions (<= 0)."""
    if not regime.planner:
        return 0.0
    vt = regime.chi * v_T
    if regime.hybrid_weight > 0.0 and cf is not None:
        vt = (1.0 - regime.hybrid_weight) * vt + regime.hybrid_weight * cf["v_T"]
    return vt


def foc_residuals(i_G, eps, L1, meshes, derivs, regime: StageRegime,
                  params: ModelParams, cf=None, complementarity: bool = True) -> dict:
    """Normalized residuals of the three coupled conditions at given controls.

    With ``complementarity`` set, a residual pushing further into a binding
    bound counts as satisfied (corner solutions are legitimate optima).
    """
    p = params
    KG, R = np.exp(meshes["log_KG"]), np.exp(meshes["log_R"])
    v_KG, v_T, v_R = derivs["d_log_KG"], derivs["d_T"], derivs["d_log_R"]
    E1, E2, E3, CE, (s1, s2, s3) = _energy_parts(i_G, eps, L1, KG, R, regime, p)
    out = {}
    if regime.oil_active:
        m = _oil_margin(v_R, v_T, R, regime, p, cf)
        lhs = p.rho * p.psi * s1 / np.maximum(eps, EXTRACTION_FLOOR) * (1.0 - regime.tax_oil)
        r = (lhs - m) / np.maximum(np.abs(m), 1e-300)
        if complementarity:
            r = np.where((eps >= EXTRACTION_CAP * (1 - 1e-12)) & (r > 0), 0.0, r)
            r = np.where((eps <= EXTRACTION_FLOOR * (1 + 1e-9)) & (r < 0), 0.0, r)
        out["oil"] = r
    if regime.coal_active:
        labor = p.rho * (1.0 - p.alpha - p.psi) / (p.alpha_2 * L1)
        clim = _coal_climate_value(v_T, regime, p, cf)
        mb = (p.rho * p.psi * s2 / (1.0 - L1) * (1.0 - regime.tax_coal)
              + p.beta_T * p.A_2 * (1.0 - L1) ** (p.alpha_2 - 1.0) * clim)
        r = (mb - labor) / labor
        if complementarity:
            r = np.where((L1 >= COAL_L1_CAP) & (r < 0), 0.0, r)
            r = np.where((L1 <= L1_FLOOR * 2) & (r > 0), 0.0, r)
        out["coal"] = r
    rhs_g = (1.0 - p.phi_G * i_G) * v_KG
    r = (p.rho * p.psi * s3 / (p.A_G - i_G) - rhs_g) / np.maximum(np.abs(rhs_g), 1e-300)
    if complementarity:
        r = np.where((i_G <= I_G_FLOOR * (1 - 1e-12)) & (r < 0), 0.0, r)
    out["green"] = r
    return out


def _fixed_point(i_G, eps, L1, meshes, derivs, regime, params, cf, cap, tol):
    """Gauss-Seidel passes over the three coupled conditions.

    Each update solves its own condition for the control's dominant power
    while freezing the energy aggregate, which makes every map a
    contraction; the aggregate is refreshed between passes.
    """
    p = params
    KG, R = np.exp(meshes["log_KG"]), np.exp(meshes["log_R"])
    v_KG, v_T, v_R = derivs["d_log_KG"], derivs["d_T"], derivs["d_log_R"]
    w = p.omega
    lab = 1.0 - p.alpha - p.psi
    m_oil = _oil_margin(v_R, v_T, R, regime, p, cf) if regime.oil_active else None
    clim = _coal_climate_value(v_T, regime, p, cf) if regime.coal_active else None

    for _ in range(cap):
        E1, E2, E3, CE, (s1, s2, s3) = _energy_parts(i_G, eps, L1, KG, R, regime, p)
        moved = 0.0

        if regime.oil_active:
            k = p.rho * p.psi * regime.nu[0] * (1.0 - regime.tax_oil)
            if w == 0.0:
                eps_new = k / m_oil
            else:
                eps_new = (k * (R / CE) ** w / m_oil) ** (1.0 / (1.0 - w))
            eps_new = np.clip(eps_new, EXTRACTION_FLOOR, EXTRACTION_CAP)
            moved = max(moved, float(np.max(np.abs(eps_new - eps) / np.maximum(eps, 1e-12))))
            eps = eps_new

        if regime.coal_active:
            # solve for coal labor u = 1-L1 from its dominant power
            u = 1.0 - L1
            k2 = p.rho * p.psi * regime.nu[1] * (1.0 - regime.tax_coal) * p.A_2**w
            k2 = k2 if w == 0.0 else k2 * CE ** (-w)
            cost = (p.rho * lab / (p.alpha_2 * L1)
                    - p.beta_T * p.A_2 * u ** (p.alpha_2 - 1.0) * clim)
            u_new = np.where(cost > 0,
                             (k2 / np.where(cost > 0, cost, 1.0))
                             ** (1.0 / (1.0 - p.alpha_2 * w)),
                             1.0 - COAL_L1_CAP)
            L1_new = np.clip(1.0 - u_new, L1_FLOOR, COAL_L1_CAP)
            moved = max(moved, float(np.max(np.abs(L1_new - L1))))
            L1 = L1_new

        # green investment: quadratic root with the marginal energy share frozen
        k3 = p.rho * p.psi * s3 / v_KG
        disc = (1.0 - p.phi_G * p.A_G) ** 2 + 4.0 * p.phi_G * k3
        i_star = ((1.0 + p.phi_G * p.A_G) - np.sqrt(disc)) / (2.0 * p.phi_G)
        i_star = np.maximum(i_star, I_G_FLOOR)
        moved = max(moved, float(np.max(np.abs(i_star - i_G))))
        i_G = i_star

        if moved < tol:
            break
    return i_G, eps, L1


def solve_controls(meshes, derivs, params: ModelParams, regime: StageRegime,
                   prev: GridControls, relax: float, cf=None,
                   inner_cap: int = 200, inner_tol: float = 1e-13) -> GridControls:
    """One outer control sweep: solve the FOC system, then relax toward it.

    Nodes where the inner fixed point worsened the residual keep their
    previous controls and are counted in ``foc_flagged``.
    """
    i_C = investment_root(params.A_C, params.phi_C, params.rho)
    i_G0 = np.asarray(prev.i_G, dtype=float)
    eps0 = np.asarray(prev.extraction, dtype=float)
    L10 = np.asarray(prev.L1, dtype=float)
    start = prev.raw if prev.raw is not None else (i_G0, eps0, L10)

    res_before = _max_residual(i_G0, eps0, L10, meshes, derivs, regime, params, cf)
    i_G, eps, L1 = _fixed_point(start[0].copy(), start[1].copy(), start[2].copy(),
                                meshes, derivs, regime, params, cf, inner_cap, inner_tol)
    res_after = _max_residual(i_G, eps, L1, meshes, derivs, regime, params, cf)

    worse = res_after > res_before * (1.0 + 1e-9) + 1e-15
    flagged = int(np.count_nonzero(worse))
    if flagged:
        i_G = np.where(worse, i_G0, i_G)
        eps = np.where(worse, eps0, eps)
        L1 = np.where(worse, L10, L1)
    raw = (i_G, eps, L1)

    i_G = np.clip(i_G0 + relax * (i_G - i_G0), I_G_FLOOR, params.A_G - 1e-12)
    eps = np.clip(eps0 + relax * (eps - eps0), EXTRACTION_FLOOR, EXTRACTION_CAP)
    L1 = np.clip(L10 + relax * (L1 - L10), L1_FLOOR, 1.0)
    if not regime.coal_active:
        L1 = np.ones_like(L1)
    if not regime.oil_active:
        eps = np.full_like(eps, EXTRACTION_FLOOR)
    return GridControls(i_C=i_C, i_G=i_G, extraction=eps, L1=L1,
                        foc_flagged=flagged, raw=raw)


def _max_residual(i_G, eps, L1, meshes, derivs, regime, params, cf):
    res = foc_residuals(i_G, eps, L1, meshes, derivs, regime, params, cf)
    per_node = np.zeros(np.shape(i_G))
    for r in res.values():
        per_node = np.maximum(per_node, np.abs(r))
    return per_node


def solve_controls_at_node(derivs: dict, state: dict, params: ModelParams,
                           regime: StageRegime, prev_controls: Controls,
                           relax: float) -> Controls:
    """Scalar-node convenience wrapper around the vectorized sweep."""
    meshes = {k: np.atleast_1d(np.asarray(state[k], dtype=float))
              for k in ("log_KG", "T", "log_R")}
    dv = {k: np.atleast_1d(np.asarray(derivs[k], dtype=float))
          for k in ("d_log_KG", "d_T", "d_log_R")}
    prev = GridControls(i_C=prev_controls.i_C,
                        i_G=np.atleast_1d(np.asarray(prev_controls.i_G, dtype=float)),
                        extraction=np.atleast_1d(np.asarray(prev_controls.extraction, dtype=float)),
                        L1=np.atleast_1d(np.asarray(prev_controls.L1, dtype=float)))
    out = solve_controls(meshes, dv, params, regime, prev, relax)
    return Controls(i_C=out.i_C, i_G=float(out.i_G[0]),
                    extraction=float(out.extraction[0]), L1=float(out.L1[0]))


def wasted_share(i_G, eps, L1, meshes, regime: StageRegime, params: ModelParams):
    """Fraction of output burned by partial output taxes on fossil inputs."""
    if not regime.wasteful_tax:
        return np.zeros(np.shape(i_G))
    KG, R = np.exp(meshes["log_KG"]), np.exp(meshes["log_R"])
    _, _, _, _, (s1, s2, _) = _energy_parts(i_G, eps, L1, KG, R, regime, params)
    return params.psi * (regime.tax_oil * s1 + regime.tax_coal * s2)


def control_hamiltonian(i_G, eps, L1, meshes, derivs, regime: StageRegime,
                        params: ModelParams):
    """Control-dependent part of the stage's stationary flow.

    Used by the brute-force maximization oracle; only meaningful for
    internalizing (planner-mode) stages without hybrid blending.
    """
    p = params
    KG, R = np.exp(meshes["log_KG"]), np.exp(meshes["log_R"])
    E1, E2, E3, CE, _ = _energy_parts(i_G, eps, L1, KG, R, regime, p)
    flow = p.psi * np.log(CE) + (1.0 - p.alpha - p.psi) * np.log(L1)
    if regime.wasteful_tax:
        flow = flow + np.log1p(-wasted_share(i_G, eps, L1, meshes, regime, p))
    drift_G = log_capital_drift(i_G, p.mu_G, p.phi_G, p.sigma_G)
    return (p.rho * flow
            + drift_G * derivs["d_log_KG"]
            - eps * derivs["d_log_R"]
            + regime.chi * p.beta_T * (E1 + E2) * derivs["d_T"])

"""Pre-transition value-function solver.

The stationary equation for the reduced value exponent v(log_KG, T, log_R)
is solved by a false transient: each sweep recomputes derivatives, updates
controls from the first-order conditions under relaxation, freezes the
nonlinear pieces (squared gradients and the jump term, both Newton-
linearized), and takes one implicit step whose linear system is solved by
conjugate gradient on the normal equations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .analytic import PostJumpConstants, post_jump_exponent, pre_jump_constant
from .core import arrival_rate, log_capital_drift
from .foc import GridControls, solve_controls, wasted_share, _energy_parts
from .gridfd import Grid3, fd_derivatives
from .linsolve import CgError, conjugate_gradient
from .params import ModelParams, params_hash
from .scenarios import StageRegime

__all__ = ["SolverConfig", "Solution", "SolverError", "solve_pre_jump",
           "assemble_and_step", "hjb_residual", "resolve_post_exponent"]

JUMP_EXP_CLIP = 10.0     # safeguards the jump-term Newton step far from the fixed point


class SolverError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history or []


@dataclass
class SolverConfig:
    dt: float = 0.25
    tol: float = 1e-12
    foc_relax: float = 0.05
    max_iter_before_dt_cut: int = 20000
    dt_cut: float = 1e-4
    cg_tol: float = 1e-11
    cg_max_iter: int = 50000
    floor_v_T: float = -1e-16
    floor_v_R: float = 1e-16
    max_iter: int = 60000
    inner_foc_cap: int = 200
    inner_foc_tol: float = 1e-13
    dt_start: float | None = None   # when set, ramp the step from here up to dt
    dt_ramp: float = 1.3

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 < self.foc_relax <= 1.0:
            raise ValueError("foc_relax must lie in (0, 1]")
        if self.dt_start is not None and self.dt_start <= 0:
            raise ValueError("dt_start must be positive")


@dataclass
class Solution:
    grid: Grid3
    v: np.ndarray
    controls: GridControls
    c_pre: float
    regime: StageRegime
    iterations: int
    final_residual: float          # max |v_{k+1}-v_k| / dt at exit
    hjb_residual: float            # max interior stationary-equation residual
    converged: bool
    wallclock: float
    post_value_ref: str
    params_digest: str
    config: SolverConfig
    foc_flagged: int = 0
    history: list = field(default_factory=list)

    def derivative_fields(self, config: SolverConfig | None = None) -> dict:
        cfg = config or self.config
        d = fd_derivatives(self.v, self.grid)
        _apply_floors(d, cfg)
        return d


def _apply_floors(derivs: dict, config: SolverConfig) -> None:
    derivs["d_T"] = np.minimum(derivs["d_T"], config.floor_v_T)
    derivs["d_log_R"] = np.maximum(derivs["d_log_R"], config.floor_v_R)
    # positivity guard: the green FOC divides by this derivative
    derivs["d_log_KG"] = np.maximum(derivs["d_log_KG"], 1e-16)


def resolve_post_exponent(post_value, grid: Grid3, params: ModelParams):
    """Normalize a jump target into an exponent field on the grid.

    Accepts the analytic terminal constants, a precomputed field, a callable
    of the three state meshes, or None when the hazard is switched off.
    """
    if post_value is None:
        return np.zeros(grid.shape)
    if isinstance(post_value, PostJumpConstants):
        KG, T, _ = grid.meshgrid()
        return post_jump_exponent(KG, T, post_value, params)
    if callable(post_value):
        return np.asarray(post_value(*grid.meshgrid()), dtype=float)
    arr = np.asarray(post_value, dtype=float)
    if arr.shape != grid.shape:
        raise ValueError(f"post-value field shape {arr.shape} != grid {grid.shape}")
    return arr


def _lambda_field(T_mesh, regime: StageRegime, params: ModelParams):
    if regime.arrival == "off":
        return np.zeros_like(T_mesh)
    if regime.arrival == "constant":
        return np.full_like(T_mesh, regime.lam_bar)
    return arrival_rate(T_mesh, params)


class _Stencil:
    """Cached sparsity pattern and fast value assembly for I/dt - L.

    Interior rows are centrally differenced.  Face rows take the at-node
    one-sided drift stencil when the drift flows into the box (upwind) and
    the adjacent interior one-sided stencil when it flows out; the outflow
    variant keeps the boundary row free of anti-dissipative self-coupling.
    Second derivatives copy the adjacent interior stencil at faces.  All
    variants are exact for fields linear along the axis.
    """

    # mask codes for first-derivative legs
    _ALWAYS, _LO_IN, _LO_OUT, _HI_IN, _HI_OUT = 0, 1, 2, 3, 4

    def __init__(self, grid: Grid3):
        self.grid = grid
        shape = grid.shape
        n = grid.size
        idx = np.arange(n).reshape(shape)
        rows_fd, cols_fd, wts_fd, axis_fd, mask_fd = [], [], [], [], []
        rows_sd, cols_sd, wts_sd, axis_sd = [], [], [], []

        def add_fd(nodes, legs, ax, mask_code):
            for off, w in legs:
                rows_fd.append(nodes)
                cols_fd.append(nodes + off)
                wts_fd.append(np.full(nodes.size, w))
                axis_fd.append(np.full(nodes.size, ax, dtype=np.int8))
                mask_fd.append(np.full(nodes.size, mask_code, dtype=np.int8))

        for ax in range(3):
            h = grid.spacing[ax]
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            mid = [slice(None)] * 3
            lo[ax], hi[ax], mid[ax] = slice(0, 1), slice(-1, None), slice(1, -1)
            i_mid = idx[tuple(mid)].ravel()
            i_lo = idx[tuple(lo)].ravel()
            i_hi = idx[tuple(hi)].ravel()
            s = idx.strides[ax] // idx.itemsize

            add_fd(i_mid, ((s, 0.5 / h), (-s, -0.5 / h)), ax, self._ALWAYS)
            # low face: forward at node (inflow) / forward at neighbor (outflow)
            add_fd(i_lo, ((0, -1.0 / h), (s, 1.0 / h)), ax, self._LO_IN)
            add_fd(i_lo, ((s, -1.0 / h), (2 * s, 1.0 / h)), ax, self._LO_OUT)
            # high face: backward at node (inflow) / backward at neighbor (outflow)
            add_fd(i_hi, ((0, 1.0 / h), (-s, -1.0 / h)), ax, self._HI_IN)
            add_fd(i_hi, ((-s, 1.0 / h), (-2 * s, -1.0 / h)), ax, self._HI_OUT)

            inv_h2 = 1.0 / (h * h)
            for nodes, legs in (
                (i_mid, ((0, -2.0), (s, 1.0), (-s, 1.0))),
                (i_lo, ((0, 1.0), (s, -2.0), (2 * s, 1.0))),
                (i_hi, ((0, 1.0), (-s, -2.0), (-2 * s, 1.0))),
            ):
                for off, w in legs:
                    rows_sd.append(nodes)
                    cols_sd.append(nodes + off)
                    wts_sd.append(np.full(nodes.size, w * inv_h2))
                    axis_sd.append(np.full(nodes.size, ax, dtype=np.int8))

        self.rows_fd = np.concatenate(rows_fd)
        self.cols_fd = np.concatenate(cols_fd)
        self.wts_fd = np.concatenate(wts_fd)
        self.axis_fd = np.concatenate(axis_fd)
        self.mask_fd = np.concatenate(mask_fd)
        self.rows_sd = np.concatenate(rows_sd)
        self.cols_sd = np.concatenate(cols_sd)
        self.wts_sd = np.concatenate(wts_sd)
        self.axis_sd = np.concatenate(axis_sd)

        diag = np.arange(n)
        rows = np.concatenate([self.rows_fd, self.rows_sd, diag])
        cols = np.concatenate([self.cols_fd, self.cols_sd, diag])
        order = np.lexsort((cols, rows))
        rs, cs = rows[order], cols[order]
        new_entry = np.ones(rs.size, dtype=bool)
        new_entry[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        starts = np.flatnonzero(new_entry)
        self._order = order
        self._starts = starts
        self._indices = cs[starts]
        uniq_rows = rs[starts]
        self._indptr = np.searchsorted(uniq_rows, np.arange(n + 1))
        self._n = n

    def matrix(self, drift_coefs, diff_coefs, diag_field, inv_dt):
        """Assemble M = I/dt - L with L = diag + drift*d1 + diff*d2."""
        b = np.stack([np.ravel(d) * np.ones(self._n) for d in drift_coefs])
        b_leg = b[self.axis_fd, self.rows_fd]
        mask = self.mask_fd
        inflow_lo = b_leg >= 0.0
        inflow_hi = b_leg <= 0.0
        use = ((mask == self._ALWAYS)
               | ((mask == self._LO_IN) & inflow_lo)
               | ((mask == self._LO_OUT) & ~inflow_lo)
               | ((mask == self._HI_IN) & inflow_hi)
               | ((mask == self._HI_OUT) & ~inflow_hi))
        vals_fd = -(self.wts_fd * b_leg * use)
        c = np.asarray(diff_coefs, dtype=float)
        vals_sd = -(self.wts_sd * c[self.axis_sd])
        vals_di = inv_dt - np.ravel(diag_field) * np.ones(self._n)
        vals = np.concatenate([vals_fd, vals_sd, vals_di])
        data = np.add.reduceat(vals[self._order], self._starts)
        return sparse.csr_matrix((data, self._indices, self._indptr),
                                 shape=(self._n, self._n))


_STENCILS: dict = {}


def _stencil_for(grid: Grid3) -> _Stencil:
    key = (grid.shape, grid.bounds())
    st = _STENCILS.get(key)
    if st is None:
        st = _Stencil(grid)
        _STENCILS[key] = st
    return st


def _stage_coefficients(v, derivs, controls: GridControls, meshes, post_exp,
                        c_pre, regime: StageRegime, params: ModelParams):
    """Frozen-coefficient form of the stationary equation at the current sweep."""
    p = params
    KG, R = np.exp(meshes["log_KG"]), np.exp(meshes["log_R"])
    E1, E2, E3, CE, _ = _energy_parts(controls.i_G, controls.extraction, controls.L1,
                                      KG, R, regime, p)
    flow = (p.psi * np.log(CE)
            + (1.0 - p.alpha - p.psi) * np.log(np.maximum(controls.L1, 1e-300))
            - p.eta * meshes["T"])
    if regime.wasteful_tax:
        flow = flow + np.log1p(-wasted_share(controls.i_G, controls.extraction,
                                             controls.L1, meshes, regime, p))

    lam = _lambda_field(meshes["T"], regime, p)
    one_m_g = 1.0 - p.gamma
    X = np.clip(one_m_g * (post_exp - c_pre - v), -JUMP_EXP_CLIP, JUMP_EXP_CLIP)
    eX = np.exp(X)
    jump = lam * (eX - 1.0) / one_m_g
    jump_slope = -lam * eX

    sig2 = (p.sigma_G**2, p.sigma_T**2, p.sigma_R**2)
    grads = (derivs["d_log_KG"], derivs["d_T"], derivs["d_log_R"])
    raw_drifts = (
        log_capital_drift(controls.i_G, p.mu_G, p.phi_G, p.sigma_G) * np.ones_like(v),
        p.beta_T * (E1 + E2),
        (-controls.extraction - 0.5 * p.sigma_R**2) * np.ones_like(v),
    )
    drifts_eff = tuple(b + one_m_g * s2 * g for b, s2, g in zip(raw_drifts, sig2, grads))
    quad = sum(0.5 * one_m_g * s2 * g**2 for s2, g in zip(sig2, grads))

    return {
        "flow": flow,
        "lam": lam,
        "jump": jump,
        "diag": -p.rho + jump_slope,
        "source": p.rho * flow + jump - jump_slope * v - quad,
        "drifts_eff": drifts_eff,
        "raw_drifts": raw_drifts,
        "diff": tuple(0.5 * s2 for s2 in sig2),
        "quad": quad,
    }


def hjb_residual(v, controls: GridControls, grid: Grid3, params: ModelParams,
                 regime: StageRegime, post_value,
                 config: SolverConfig | None = None) -> np.ndarray:
    """Residual field of the scheme's discretized stationary equation.

    Uses the same stencils, derivative floors, and frozen-coefficient jump
    treatment as the solver, so a converged Solution scores at solver
    tolerance here.
    """
    cfg = config or SolverConfig()
    meshes = dict(zip(("log_KG", "T", "log_R"), grid.meshgrid()))
    derivs = fd_derivatives(v, grid)
    _apply_floors(derivs, cfg)
    post_exp = resolve_post_exponent(post_value, grid, params)
    coefs = _stage_coefficients(v, derivs, controls, meshes, post_exp,
                                pre_jump_constant(params), regime, params)
    st = _stencil_for(grid)
    dt = 1.0
    M = st.matrix(coefs["drifts_eff"], coefs["diff"], coefs["diag"], 1.0 / dt)
    rhs = v.ravel() / dt + coefs["source"].ravel()
    return (rhs - M @ v.ravel()).reshape(grid.shape)


def _explicit_residual(v, derivs, coefs, rho):
    grads = (derivs["d_log_KG"], derivs["d_T"], derivs["d_log_R"])
    hess = (derivs["d2_log_KG"], derivs["d2_T"], derivs["d2_log_R"])
    res = rho * (coefs["flow"] - v) + coefs["jump"] + coefs["quad"]
    for b, g in zip(coefs["raw_drifts"], grads):
        res = res + b * g
    for c, hh in zip(coefs["diff"], hess):
        res = res + c * hh
    return res


def assemble_and_step(v, controls: GridControls, grid: Grid3, params: ModelParams,
                      regime: StageRegime, post_value, dt: float,
                      config: SolverConfig | None = None):
    """One false-transient step: returns (v_next, coefficients dict)."""
    cfg = config or SolverConfig()
    meshes = dict(zip(("log_KG", "T", "log_R"), grid.meshgrid()))
    derivs = fd_derivatives(v, grid)
    _apply_floors(derivs, cfg)
    post_exp = resolve_post_exponent(post_value, grid, params)
    c_pre = pre_jump_constant(params)
    coefs = _stage_coefficients(v, derivs, controls, meshes, post_exp, c_pre,
                                regime, params)
    st = _stencil_for(grid)
    M = st.matrix(coefs["drifts_eff"], coefs["diff"], coefs["diag"], 1.0 / dt)
    rhs = v.ravel() / dt + coefs["source"].ravel()
    v_next = conjugate_gradient(M, rhs, x0=v.ravel(), tol=cfg.cg_tol,
                                max_iter=cfg.cg_max_iter)
    return v_next.reshape(grid.shape), coefs


def _interior(arr):
    return arr[1:-1, 1:-1, 1:-1]


def solve_pre_jump(params: ModelParams, regime: StageRegime, post_value,
                   grid: Grid3, config: SolverConfig | None = None,
                   v0: np.ndarray | None = None,
                   controls0: GridControls | None = None,
                   cf_fields: dict | None = None,
                   log_every: int = 0) -> Solution:
    """Iterate control sweeps and false-transient steps until stationarity.

    Convergence requires both the step criterion max|dv|/dt < tol and an
    interior stationary residual below 10*tol.  After
    ``max_iter_before_dt_cut`` sweeps the step size drops to ``dt_cut`` to
    damp terminal oscillations; exhausting ``max_iter`` raises SolverError
    with the residual history attached.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    meshes = dict(zip(("log_KG", "T", "log_R"), grid.meshgrid()))
    c_pre = pre_jump_constant(params)
    post_exp = resolve_post_exponent(post_value, grid, params)

    if v0 is None:
        v = _default_guess(meshes, params, c_pre)
    else:
        v = np.array(v0, dtype=float, copy=True)
        if v.shape != grid.shape:
            raise ValueError("v0 shape does not match grid")
    if controls0 is None:
        controls = GridControls(
            i_C=0.0,
            i_G=np.full(grid.shape, 0.5 * params.rho),
            extraction=np.full(grid.shape, params.rho),
            L1=np.full(grid.shape, 0.99),
        )
    else:
        controls = controls0

    st = _stencil_for(grid)
    dt_cap = cfg.dt
    dt = cfg.dt_start if cfg.dt_start is not None else cfg.dt
    history = []
    converged = False
    delta = np.inf
    interior_res = np.inf
    best_res = np.inf
    hold_ramp = 0

    it = 0
    for it in range(1, cfg.max_iter + 1):
        derivs = fd_derivatives(v, grid)
        _apply_floors(derivs, cfg)
        controls = solve_controls(meshes, derivs, params, regime, controls,
                                  relax=cfg.foc_relax, cf=cf_fields,
                                  inner_cap=cfg.inner_foc_cap,
                                  inner_tol=cfg.inner_foc_tol)
        coefs = _stage_coefficients(v, derivs, controls, meshes, post_exp, c_pre,
                                    regime, params)

        v_new = None
        for _attempt in range(6):
            M = st.matrix(coefs["drifts_eff"], coefs["diff"], coefs["diag"], 1.0 / dt)
            rhs = v.ravel() / dt + coefs["source"].ravel()
            if _attempt == 0:
                # residual of the scheme's own discretization at the current sweep
                res_field = (rhs - M @ v.ravel()).reshape(grid.shape)
                interior_res = float(np.max(np.abs(_interior(res_field))))
                if np.isfinite(interior_res):
                    if interior_res < best_res:
                        best_res = interior_res
                    elif interior_res > 3.0 * best_res and cfg.dt_start is not None:
                        dt = max(cfg.dt_start, 0.2 * dt)
                        hold_ramp = 20
                        best_res = interior_res
                        M = st.matrix(coefs["drifts_eff"], coefs["diff"],
                                      coefs["diag"], 1.0 / dt)
                        rhs = v.ravel() / dt + coefs["source"].ravel()
            try:
                v_new = conjugate_gradient(M, rhs, x0=v.ravel(), tol=cfg.cg_tol,
                                           max_iter=cfg.cg_max_iter).reshape(grid.shape)
                break
            except CgError:
                dt = max(0.2 * dt, 1e-6)   # back off a hard sweep, then re-ramp
                hold_ramp = 20
        if v_new is None:
            raise SolverError(f"stage '{regime.name}' linear solve failed at sweep {it}",
                              history=history)

        delta = float(np.max(np.abs(v_new - v))) / dt
        v = v_new
        if it <= 50 or it % 50 == 0 or delta < cfg.tol:
            history.append((it, delta, interior_res))
        if log_every and it % log_every == 0:
            print(f"  sweep {it:6d}  dt {dt:8.3g}  |dv|/dt {delta:.3e}  "
                  f"interior {interior_res:.3e}", flush=True)
        if delta < cfg.tol and interior_res < 10.0 * cfg.tol:
            converged = True
            break
        if it == cfg.max_iter_before_dt_cut:
            dt_cap = cfg.dt_cut
            dt = min(dt, dt_cap)
        elif cfg.dt_start is not None:
            if hold_ramp > 0:
                hold_ramp -= 1
            else:
                dt = min(dt * cfg.dt_ramp, dt_cap)
    if not converged:
        raise SolverError(
            f"stage '{regime.name}' did not converge in {it} sweeps "
            f"(|dv|/dt={delta:.3e}, interior residual={interior_res:.3e}, dt={dt})",
            history=history)

    return Solution(
        grid=grid, v=v, controls=controls, c_pre=c_pre, regime=regime,
        iterations=it, final_residual=delta, hjb_residual=interior_res,
        converged=converged, wallclock=time.perf_counter() - t0,
        post_value_ref=_post_ref(post_value), params_digest=params_hash(params),
        config=cfg, foc_flagged=controls.foc_flagged, history=history)


def _default_guess(meshes, params: ModelParams, c_pre: float):
    """Benchmark-shaped warm start: energy-weighted loadings plus a damage tilt."""
    from .analytic import cobb_douglas_solution

    sol = cobb_douglas_solution(params)
    return (params.psi * sol.kappa3 * meshes["log_KG"]
            + params.psi * sol.kappa1 * meshes["log_R"]
            - params.eta * meshes["T"]
            + sol.c0 - c_pre)


def _post_ref(post_value) -> str:
    if post_value is None:
        return "none"
    if isinstance(post_value, PostJumpConstants):
        return f"analytic:{post_value.shock_kind}"
    return "field"

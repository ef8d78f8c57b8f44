"""Transition scenario declarations and multi-stage solve plans.

A scenario unfolds as a chain of regimes: the economy starts in stage 0 and
jumps through successive regimes at the transition hazard until it lands in
the absorbing all-green terminal state.  ``plan_stages`` turns a declarative
``ScenarioSpec`` into that chain, terminal stage first, so backward
induction can wire each stage's jump target to the stage after it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .analytic import PostJumpConstants, post_jump_constants
from .params import ModelParams

__all__ = ["ScenarioSpec", "StageRegime", "SolvePlan", "plan_stages", "SCENARIO_KINDS"]

SCENARIO_KINDS = (
    "technology",
    "taxation",
    "two_step_technology",
    "two_step_taxation",
    "hybrid_technology",
    "constant_arrival",
    "partial_internalization",
    "coal_only",
    "oil_only",
    "coal_tax_then_oil_technology",
    "coal_tax_then_oil_tax",
)


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    arrival_mode: str = "state_dependent"   # state_dependent | constant | off
    chi: float = 0.25                        # hybrid blend / internalized fraction
    lam_bar: float = 0.02                    # hazard level for constant arrival
    stage_taxes: tuple = (0.5, 1.0)          # two-step taxation schedule
    nu2_step_factor: float = 0.5             # first-stage coal-weight factor, two-step technology
    single_fuel_share: float = 0.8           # surviving fossil weight in single-fuel economies
    terminal_shock: str = "technology"       # terminal kind where the scenario leaves it open

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.arrival_mode not in ("state_dependent", "constant", "off"):
            raise ValueError(f"unknown arrival mode {self.arrival_mode!r}")
        if not 0.0 <= self.chi <= 1.0:
            raise ValueError("chi must lie in [0,1]")
        if any(not 0.0 <= t <= 1.0 for t in self.stage_taxes):
            raise ValueError("stage taxes must lie in [0,1]")


@dataclass(frozen=True)
class StageRegime:
    """One pre-terminal regime: weights, wedges, and hazard wiring."""

    name: str
    nu: tuple
    tax_oil: float = 0.0
    tax_coal: float = 0.0
    planner: bool = True        # fossil choices internalize the climate/hazard channel
    chi: float = 1.0            # internalized fraction of that channel
    hybrid_weight: float = 0.0  # weight on no-risk marginal values in the fossil FOCs
    arrival: str = "state"      # state | constant | off
    lam_bar: float = 0.0

    @property
    def oil_active(self) -> bool:
        return self.nu[0] > 0.0 and self.tax_oil < 1.0

    @property
    def coal_active(self) -> bool:
        return self.nu[1] > 0.0 and self.tax_coal < 1.0

    @property
    def wasteful_tax(self) -> bool:
        """Partial output taxes burn revenue; confiscatory ones collect none."""
        return (0.0 < self.tax_oil < 1.0 and self.oil_active) or \
               (0.0 < self.tax_coal < 1.0 and self.coal_active)

    def counterfactual(self) -> "StageRegime":
        return replace(self, name=self.name + "-counterfactual", arrival="off",
                       hybrid_weight=0.0)


@dataclass
class SolvePlan:
    """Stages in solve order: ``stages[0]`` is the terminal-most PDE stage."""

    terminal: PostJumpConstants
    stages: list = field(default_factory=list)
    scenario: ScenarioSpec | None = None


def _arrival_fields(spec: ScenarioSpec) -> dict:
    mode = {"state_dependent": "state", "constant": "constant", "off": "off"}[spec.arrival_mode]
    return {"arrival": mode, "lam_bar": spec.lam_bar}


def plan_stages(spec: ScenarioSpec, params: ModelParams) -> SolvePlan:
    """Build the ordered solve plan for a scenario (terminal stage first)."""
    nu = (params.nu1, params.nu2, params.nu3)
    arr = _arrival_fields(spec)
    base = StageRegime(name=spec.kind, nu=nu, **arr)

    if spec.kind == "technology":
        return SolvePlan(post_jump_constants(params, "technology"), [base], spec)

    if spec.kind == "taxation":
        return SolvePlan(post_jump_constants(params, "taxation"), [base], spec)

    if spec.kind == "two_step_technology":
        mid_nu = (params.nu1, spec.nu2_step_factor * params.nu2, params.nu3)
        mid = StageRegime(name="two_step_technology-stage2", nu=mid_nu, **arr)
        return SolvePlan(post_jump_constants(params, "technology"), [mid, base], spec)

    if spec.kind == "two_step_taxation":
        tau1, tau2 = spec.stage_taxes
        if tau2 < 1.0:
            raise ValueError("two-step taxation must end at a confiscatory rate")
        mid = StageRegime(name="two_step_taxation-stage2", nu=nu, tax_oil=tau1,
                          tax_coal=tau1, planner=False, **arr)
        return SolvePlan(post_jump_constants(params, "taxation"), [mid, base], spec)

    if spec.kind == "hybrid_technology":
        stage = replace(base, name="hybrid_technology", hybrid_weight=spec.chi)
        return SolvePlan(post_jump_constants(params, "technology"), [stage], spec)

    if spec.kind == "constant_arrival":
        stage = replace(base, name="constant_arrival", arrival="constant")
        return SolvePlan(post_jump_constants(params, spec.terminal_shock), [stage], spec)

    if spec.kind == "partial_internalization":
        stage = replace(base, name="partial_internalization", chi=spec.chi)
        return SolvePlan(post_jump_constants(params, spec.terminal_shock), [stage], spec)

    if spec.kind in ("coal_only", "oil_only"):
        s = spec.single_fuel_share
        only_nu = (0.0, s, 1.0 - s) if spec.kind == "coal_only" else (s, 0.0, 1.0 - s)
        stage = replace(base, name=spec.kind, nu=only_nu)
        return SolvePlan(post_jump_constants(params, "technology"), [stage], spec)

    if spec.kind in ("coal_tax_then_oil_technology", "coal_tax_then_oil_tax"):
        mid = StageRegime(name=spec.kind + "-stage2", nu=nu, tax_coal=1.0, **arr)
        terminal_kind = "technology" if spec.kind.endswith("technology") else "taxation"
        return SolvePlan(post_jump_constants(params, terminal_kind), [mid, base], spec)

    raise ValueError(f"unhandled scenario kind {spec.kind!r}")

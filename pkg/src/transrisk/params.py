"""Model parameters, state/control containers, and config-file round trips.

``ModelParams`` is the single source of truth for every scalar the model
uses.  Defaults reproduce the baseline annual calibration; any field can be
overridden from a flat ``key = value`` INI-style config file.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import warnings
from dataclasses import dataclass, field, fields, replace

__all__ = [
    "ModelParams",
    "StateVector",
    "Controls",
    "FlowQuantities",
    "ConfigError",
    "load_params",
    "dump_params",
    "params_hash",
]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration input."""


@dataclass(frozen=True)
class ModelParams:
    # preferences
    rho: float = 0.01           # subjective discount rate /yr
    gamma: float = 9.514        # risk aversion
    theta: float = 1.0          # elasticity of intertemporal substitution
    # production
    alpha: float = 0.35         # capital input demand share
    psi: float = 0.05           # energy input demand share
    A_C: float = 0.115          # consumption-capital TFP /yr
    A_G: float = 0.115          # green-capital TFP /yr
    mu_C: float = -0.043
    phi_C: float = 6.667
    mu_G: float = -0.043
    phi_G: float = 6.667
    A_2: float = 132.21         # coal TFP, GtC output units
    alpha_2: float = 0.5        # coal labor returns to scale (not pinned by the calibration table)
    # energy demand
    nu1: float = 0.55
    nu2: float = 0.25
    nu3: float = 0.20
    omega: float = 0.5          # energy elasticity parameter; 0 selects the Cobb-Douglas limit
    # climate
    beta_T: float = 1.86e-3     # degC per GtC
    eta: float = 0.02           # damage curvature /degC
    # transition arrival
    psi0: float = 0.072
    psi1: float = 0.79
    psi2: float = 2.0
    T_bar: float = 1.25
    chi: float = 1.0            # internalized fraction of the climate channel
    mu_lambda: float = 0.0
    sigma_lambda: float = 0.0
    # volatilities
    sigma_C: float = 0.072
    sigma_G: float = 0.072
    sigma_R: float = 0.034
    sigma_T: float = 0.10
    # initial conditions
    K_C0: float = field(default=85.0 / 0.115)
    K_G0: float = field(default=2.5 / 0.115)
    R_0: float = 850.0
    T_0: float = 1.2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        p = self
        if not math.isclose(p.nu1 + p.nu2 + p.nu3, 1.0, rel_tol=0, abs_tol=1e-10):
            raise ConfigError(f"nu1+nu2+nu3 must equal 1, got {p.nu1 + p.nu2 + p.nu3}")
        if not (0 < p.alpha < 1 and 0 < p.psi < 1 and p.alpha + p.psi < 1):
            raise ConfigError("alpha, psi must lie in (0,1) with alpha+psi < 1")
        if p.omega <= 0 and p.omega != 0.0:
            raise ConfigError("omega must be positive (0 selects the Cobb-Douglas limit)")
        for name in ("sigma_C", "sigma_G", "sigma_R", "sigma_T", "sigma_lambda"):
            if getattr(p, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if p.R_0 <= 0:
            raise ConfigError("R_0 must be positive")
        if p.phi_C <= 0 or p.phi_G <= 0:
            raise ConfigError("adjustment-cost curvatures phi_C, phi_G must be positive")
        if p.A_C <= p.rho:
            raise ConfigError("A_C must exceed rho for a real investment root")
        if not (0 < p.alpha_2 < 1):
            raise ConfigError("alpha_2 must lie in (0,1)")
        if not (0 <= p.chi <= 1):
            raise ConfigError("chi must lie in [0,1]")
        if p.psi0 < 0 or p.psi1 < 0 or p.psi2 <= 0:
            raise ConfigError("arrival parameters require psi0, psi1 >= 0 and psi2 > 0")

    def replace(self, **kw) -> "ModelParams":
        return replace(self, **kw)


@dataclass
class StateVector:
    """Model state: logs of the three stocks plus the temperature anomaly.

    ``lam`` is the transition arrival rate; in the baseline it is derived
    from temperature rather than evolving independently.
    """

    log_KC: float
    log_KG: float
    log_R: float
    T: float
    lam: float = 0.0


@dataclass
class Controls:
    i_C: float          # consumption-capital investment rate /yr
    i_G: float          # green-capital investment rate /yr
    extraction: float   # fraction of reserves extracted /yr
    L1: float           # labor share in final output, remainder mines coal


@dataclass
class FlowQuantities:
    C: float
    C_K: float
    C_E: float
    C_L: float
    E1: float
    E2: float
    E3: float
    D: float


# config section -> field names
_SECTIONS = {
    "preferences": ("rho", "gamma", "theta"),
    "production": ("alpha", "psi", "A_C", "A_G", "mu_C", "phi_C", "mu_G", "phi_G",
                   "A_2", "alpha_2"),
    "energy": ("nu1", "nu2", "nu3", "omega"),
    "climate": ("beta_T", "eta"),
    "transition": ("psi0", "psi1", "psi2", "T_bar", "chi", "mu_lambda", "sigma_lambda"),
    "volatility": ("sigma_C", "sigma_G", "sigma_R", "sigma_T"),
    "initial": ("K_C0", "K_G0", "R_0", "T_0"),
}
_FIELD_TO_SECTION = {name: sec for sec, names in _SECTIONS.items() for name in names}


def load_params(path_or_text) -> ModelParams:
    """Read a ModelParams from an INI config file (path, file object, or text).

    Unknown sections or keys raise ``ConfigError``; missing keys keep the
    built-in defaults.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if hasattr(path_or_text, "read"):
            cp.read_file(path_or_text)
        elif "\n" in str(path_or_text) or "=" in str(path_or_text):
            cp.read_string(str(path_or_text))
        else:
            with open(path_or_text, "r", encoding="utf-8") as fh:
                cp.read_file(fh)
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    overrides = {}
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown config section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in _SECTIONS[sec]:
                raise ConfigError(f"unknown key '{key}' in section [{sec}]")
            try:
                overrides[key] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"key '{key}' is not numeric: {raw!r}") from exc
    return ModelParams(**overrides)


def dump_params(params: ModelParams, path=None) -> str:
    """Serialize params to the config format; optionally write to ``path``."""
    cp = configparser.ConfigParser()
    for sec, names in _SECTIONS.items():
        cp[sec] = {name: repr(getattr(params, name)) for name in names}
    buf = io.StringIO()
    cp.write(buf)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def params_hash(params: ModelParams) -> str:
    """Stable short hash of the full parameter vector."""
    payload = ";".join(f"{f.name}={getattr(params, f.name)!r}" for f in fields(params))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def warn_if_negative_temperature(T) -> None:
    """Negative anomalies are legal (damage > 1) but worth a diagnostic."""
    import numpy as np

    if np.any(np.asarray(T) < 0):
        warnings.warn("temperature anomaly below zero: damage multiplier exceeds 1",
                      RuntimeWarning, stacklevel=2)

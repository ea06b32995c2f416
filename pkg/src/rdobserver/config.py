"""Experiment configuration: INI files with one section per stage.

Example::

    [plant]
    theta1 = pi/2
    theta2 = 0
    p = 1
    q_tilde = -3
    q_c = auto

    [synthesis]
    delta = 0.3
    poles = -1.3
    N = 3

Unknown sections or keys are rejected.  Coefficients accept a number or
``poly: c0, c1, ...`` (increasing powers of x).
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .sturm_liouville import Coefficient, OperatorSpec
from .synthesis import select_qc
from .validation import (check_int, check_poles, check_scalar, check_sector, check_theta1,
                         check_theta2)

_PI_RE = re.compile(r"^\s*([+-]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_number(text: str) -> float:
    """Float, or a multiple of pi such as ``pi/2``, ``3pi/4``, ``0.5*pi``."""
    s = str(text).strip()
    m = _PI_RE.match(s)
    if m:
        num = m.group(1)
        coef = 1.0 if num in ("", "+") else -1.0 if num == "-" else float(num)
        den = float(m.group(2)) if m.group(2) else 1.0
        return coef * math.pi / den
    return float(s)


def parse_coefficient(text: str) -> Coefficient:
    s = str(text).strip()
    if s.lower().startswith("poly:"):
        return Coefficient.polynomial([parse_number(c) for c in s[5:].split(",") if c.strip()])
    return Coefficient.constant(parse_number(s))


def _coef_text(c: Coefficient) -> str:
    if c.is_constant:
        return repr(c.coeffs[0][0])
    if len(c.coeffs) == 1:
        return "poly: " + ", ".join(repr(v) for v in c.coeffs[0])
    raise ValueError("piecewise coefficients cannot be written to INI")


def _parse_list(text: str) -> list:
    return [parse_number(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _parse_bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (attribute name, parser)
_SCHEMA = {
    "plant": {
        "theta1": ("theta1", parse_number),
        "theta2": ("theta2", parse_number),
        "p": ("p", parse_coefficient),
        "q_tilde": ("q_tilde", parse_coefficient),
        "q_c": ("q_c", lambda s: None if s.strip().lower() == "auto" else parse_number(s)),
        "grid_resolution": ("grid_resolution", int),
        "n_modes": ("n_modes", int),
    },
    "synthesis": {
        "delta": ("delta", parse_number),
        "poles": ("poles", _parse_list),
        "n": ("N", int),
        "n0": ("N0", lambda s: None if s.strip().lower() == "auto" else int(s)),
        "k_phi": ("k_phi", parse_number),
    },
    "sector": {
        "dk_phi": ("dk_phi", parse_number),
        "phi_deriv_bound": ("phi_deriv_bound",
                            lambda s: None if s.strip().lower() == "measured" else parse_number(s)),
        "rescale_dk": ("rescale_dk", lambda s: None if s.strip().lower() == "none" else parse_number(s)),
    },
    "feasibility": {
        "theorem": ("theorem", str),
        "n_max": ("N_max", int),
        "alpha": ("alpha", lambda s: None if s.strip().lower() == "joint" else parse_number(s)),
    },
    "simulation": {
        "mesh_nodes": ("mesh_nodes", int),
        "t_final": ("t_final", parse_number),
        "dt": ("dt", parse_number),
        "record_stride": ("record_stride", int),
        "amplitude": ("amplitude", parse_number),
        "open_loop": ("open_loop", _parse_bool),
        "linear": ("linear", _parse_bool),
        "z0": ("z0", str),
        "divergence_ratio": ("divergence_ratio", parse_number),
    },
    "sweep": {
        "axis": ("sweep_axis", str),
        "values": ("sweep_values", _parse_list),
        "n": ("sweep_N", int),
        "resolution": ("sweep_resolution", parse_number),
    },
    "output": {
        "dir": ("out", str),
    },
}


@dataclass
class ExperimentConfig:
    """All knobs of one experiment.  Defaults reproduce the reference plant."""

    theta1: float = math.pi / 2
    theta2: float = 0.0
    p: Coefficient = field(default_factory=lambda: Coefficient.constant(1.0))
    q_tilde: Coefficient = field(default_factory=lambda: Coefficient.constant(-3.0))
    q_c: Optional[float] = None
    grid_resolution: int = 2001
    n_modes: int = 64
    delta: float = 0.3
    poles: list = field(default_factory=lambda: [-1.3])
    N: int = 3
    N0: Optional[int] = None
    k_phi: float = 1.0
    dk_phi: float = 0.5
    phi_deriv_bound: Optional[float] = 9.02
    rescale_dk: Optional[float] = None
    theorem: str = "t3"
    N_max: int = 20
    alpha: Optional[float] = None
    mesh_nodes: int = 201
    t_final: float = 10.0
    dt: float = 1e-3
    record_stride: int = 10
    amplitude: float = 1.0
    open_loop: bool = False
    linear: bool = False
    z0: str = "default"
    divergence_ratio: float = 1e3
    sweep_axis: str = "none"
    sweep_values: list = field(default_factory=list)
    sweep_N: int = 15
    sweep_resolution: float = 1e-3
    out: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        check_theta1(self.theta1)
        check_theta2(self.theta2)
        check_int(self.grid_resolution, "grid_resolution", lo=9)
        if self.grid_resolution % 2 == 0:
            raise ValueError("grid_resolution must be odd")
        check_int(self.n_modes, "n_modes", lo=2)
        check_scalar(self.delta, "delta", lo=0.0, lo_open=True)
        check_poles(self.poles, self.delta)
        check_int(self.N, "N", lo=2)
        if self.N0 is not None:
            check_int(self.N0, "N0", lo=1)
        check_sector(self.k_phi, self.dk_phi)
        if self.rescale_dk is not None:
            check_sector(self.k_phi, self.rescale_dk)
        if self.phi_deriv_bound is not None:
            check_scalar(self.phi_deriv_bound, "phi_deriv_bound", lo=0.0, lo_open=True)
        if self.theorem.lower() not in ("t1", "t2", "t3", "c4"):
            raise ValueError(f"theorem must be one of t1, t2, t3, c4, got {self.theorem!r}")
        check_int(self.mesh_nodes, "mesh_nodes", lo=9)
        check_scalar(self.t_final, "t_final", lo=0.0, lo_open=True)
        check_scalar(self.dt, "dt", lo=0.0, lo_open=True)
        if self.z0 not in ("default", "zero"):
            raise ValueError(f"z0 must be 'default' or 'zero', got {self.z0!r}")
        if self.sweep_axis not in ("none", "q_tilde", "N"):
            raise ValueError(f"sweep axis must be none, q_tilde or N, got {self.sweep_axis!r}")

    # ------------------------------------------------------------------

    def operator_spec(self, q_tilde: Optional[Coefficient] = None) -> OperatorSpec:
        qt = self.q_tilde if q_tilde is None else q_tilde
        q_c = self.q_c if (self.q_c is not None and q_tilde is None) else select_qc(qt)[1]
        return OperatorSpec(self.theta1, self.theta2, self.p, qt, q_c, self.grid_resolution)

    def updated(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    @classmethod
    def from_ini(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        return cls.from_string(text)

    @classmethod
    def from_string(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str.lower
        cp.read_string(text)
        kw = {}
        for section in cp.sections():
            if section not in _SCHEMA:
                raise ValueError(f"unknown config section [{section}]")
            for key, raw in cp.items(section):
                if key not in _SCHEMA[section]:
                    raise ValueError(f"unknown key {key!r} in section [{section}]")
                attr, parse = _SCHEMA[section][key]
                try:
                    kw[attr] = parse(raw)
                except ValueError as exc:
                    raise ValueError(f"[{section}] {key}: {exc}") from None
        return cls(**kw)

    def to_ini(self) -> str:
        def fmt(attr, v):
            if v is None:
                return {"q_c": "auto", "N0": "auto", "phi_deriv_bound": "measured",
                        "rescale_dk": "none", "alpha": "joint"}[attr]
            if isinstance(v, Coefficient):
                return _coef_text(v)
            if isinstance(v, list):
                return ", ".join(repr(float(x)) for x in v)
            if isinstance(v, float):
                return repr(v)
            return str(v)

        lines = []
        for section, keys in _SCHEMA.items():
            lines.append(f"[{section}]")
            for key, (attr, _) in keys.items():
                lines.append(f"{key} = {fmt(attr, getattr(self, attr))}")
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_dict() if isinstance(v, Coefficient) else v
        return out


PRESETS = ("repro-sec5-h1", "repro-sec5-l2", "repro-sec5-sweep", "repro-sec5-diverge")


def preset_path(name: str) -> Path:
    from importlib.resources import files

    name = name[:-4] if name.endswith(".cfg") else name
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return Path(str(files("rdobserver") / "presets" / f"{name}.cfg"))


def load_config(path_or_preset) -> ExperimentConfig:
    """Read a config file, or a shipped preset by name."""
    p = Path(str(path_or_preset))
    if p.exists():
        return ExperimentConfig.from_ini(p)
    return ExperimentConfig.from_ini(preset_path(str(path_or_preset)))

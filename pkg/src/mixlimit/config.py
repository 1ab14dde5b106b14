"""JSON run configuration: strict schema, loading, canonical dumping, rescaling."""
from __future__ import annotations

import copy
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .mobility import MobilityKind
from .solver1d import Grid1D, RunConfig
from .thermo import FAMILIES, MixtureSpec


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _pos, "minItems": 2}


def _section(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _section({
    "mixture": _section({
        "N": {"type": "integer", "minimum": 2},
        "M": _vec, "vbar": _vec,
        "alpha": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 1},
                  "minItems": 2},
        "sbar": _pos, "eta_visc": {"type": "number", "minimum": 0}, "lambda_visc": _num,
        "RT": _pos, "family": {"enum": list(FAMILIES)},
    }, required=("N", "M", "vbar", "alpha")),
    "mobility": _section({
        "variant": {"enum": ["uniform", "maxwell-stefan", "sum"]},
        "lambda0": {"type": "number", "minimum": 0}, "d": {"type": "number", "minimum": 0},
    }, required=("variant",)),
    "grid": _section({"L": _pos, "n": {"type": "integer", "minimum": 8}}, required=("L", "n")),
    "time": _section({
        "t_end": {"type": "number", "minimum": 0},
        "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        "snapshot_every": {"type": "number", "minimum": 0}, "dt": _pos,
    }, required=("t_end",)),
    "initial": _section({"amplitude": {"type": "number", "minimum": 0},
                         "mode": {"type": "integer", "minimum": 0}}),
    "forcing": _section({"b": _num}),
    "simulate": _section({"m": _pos}),
    "study": _section({"m_list": {"type": "array", "items": _pos}}),
    "physical": _section({"p_ref": _pos, "rho_ref": _pos, "v_ref": _pos, "g_accel": _pos}),
}, required=("mixture", "mobility", "grid", "time"))

DEFAULTS = {
    "mixture": {"sbar": 9.0, "eta_visc": 0.05, "lambda_visc": 0.0, "RT": 1.0,
                "family": "power-log"},
    "mobility": {"lambda0": 0.0, "d": 0.0},
    "time": {"cfl": 0.4, "snapshot_every": 0.0},
    "initial": {"amplitude": 0.0, "mode": 1},
    "forcing": {"b": 0.0},
    "study": {"m_list": []},
}


@dataclass(frozen=True)
class Rescaling:
    Ma: float
    m: int
    t_R: float
    L_R: float
    c_R: float
    spec: MixtureSpec


@dataclass
class Config:
    doc: dict
    spec: MixtureSpec
    mobility: MobilityKind
    grid: Grid1D
    m_list: list = field(default_factory=list)
    rescaling: Rescaling | None = None

    def run_config(self, m: float) -> RunConfig:
        t = self.doc["time"]
        ini = self.doc["initial"]
        return RunConfig(spec=self.spec, m=float(m), mobility=self.mobility, grid=self.grid,
                         t_end=float(t["t_end"]), cfl=float(t["cfl"]),
                         b=float(self.doc["forcing"]["b"]),
                         snapshot_every=float(t["snapshot_every"]),
                         amplitude=float(ini["amplitude"]), mode=int(ini["mode"]),
                         dt_fixed=t.get("dt"))

    @property
    def simulate_m(self) -> float:
        """m for a single compressible run: simulate.m, else the rescaling, else m_list[0]."""
        if "simulate" in self.doc:
            return float(self.doc["simulate"]["m"])
        if self.rescaling is not None:
            return float(self.rescaling.m)
        if self.m_list:
            return float(self.m_list[0])
        raise ConfigError("no Mach index: give simulate.m, a physical section or study.m_list")

    def dumps(self) -> str:
        return dumps(self.doc)


def rescale_physical(physical: dict, spec: MixtureSpec) -> Rescaling:
    """Dimensionless spec and Mach index from reference quantities.

    ``spec`` carries physical molar masses, specific volumes, viscosities
    and RT.  Returns Ma = v_R / c_R with c_R = sqrt(p_R / rho_R) and
    m = round(Ma^-2); molar masses become M v_R^2 / RT (so RT = 1),
    specific volumes are scaled by rho_R and viscosities by rho_R v_R L_R.
    """
    try:
        p, r, v, g = (float(physical[k]) for k in ("p_ref", "rho_ref", "v_ref", "g_accel"))
    except KeyError as exc:
        raise ConfigError(f"physical section needs {exc.args[0]}") from None
    if min(p, r, v, g) <= 0:
        raise ConfigError("reference quantities must be positive")
    t_R = v / g
    L_R = v * v / g
    c_R = math.sqrt(p / r)
    Ma = v / c_R
    if Ma >= 1:
        warnings.warn(f"Mach number {Ma:g} >= 1: the low-Mach study is not meaningful",
                      stacklevel=2)
    m = max(1, int(round(Ma ** -2)))
    eta_R = r * v * L_R
    out = MixtureSpec(M=spec.M * v * v / spec.RT, vbar=spec.vbar * r, alpha=spec.alpha,
                      sbar=spec.sbar, RT=1.0, eta_visc=spec.eta_visc / eta_R,
                      lambda_visc=spec.lambda_visc / eta_R, family=spec.family)
    return Rescaling(Ma=Ma, m=m, t_R=t_R, L_R=L_R, c_R=c_R, spec=out)


def _fill(doc):
    doc = copy.deepcopy(doc)
    for sec, vals in DEFAULTS.items():
        d = doc.setdefault(sec, {})
        for k, v in vals.items():
            d.setdefault(k, copy.deepcopy(v))
    return doc


def from_dict(raw: dict) -> Config:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    doc = _fill(raw)
    mx = doc["mixture"]
    N = mx["N"]
    for k in ("M", "vbar", "alpha"):
        if len(mx[k]) != N:
            raise ConfigError(f"mixture/{k}: expected {N} entries, got {len(mx[k])}")
    try:
        spec = MixtureSpec(M=np.array(mx["M"], float), vbar=np.array(mx["vbar"], float),
                           alpha=np.array(mx["alpha"], float), sbar=float(mx["sbar"]),
                           RT=float(mx["RT"]), eta_visc=float(mx["eta_visc"]),
                           lambda_visc=float(mx["lambda_visc"]), family=mx["family"])
        mob = MobilityKind(doc["mobility"]["variant"], float(doc["mobility"]["lambda0"]),
                           float(doc["mobility"]["d"]))
        grid = Grid1D(float(doc["grid"]["L"]), int(doc["grid"]["n"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if spec.constant_density:
        raise ConfigError("vbar parallel to 1 is not supported")
    rescaling = None
    if "physical" in doc:
        rescaling = rescale_physical(doc["physical"], spec)
        spec = rescaling.spec
    cfg = Config(doc=doc, spec=spec, mobility=mob, grid=grid,
                 m_list=[float(m) for m in doc["study"]["m_list"]], rescaling=rescaling)
    if spec.family == "power-log":  # other families are audit-only; simulate rejects them
        try:
            cfg.run_config(cfg.m_list[0] if cfg.m_list else 1.0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def loads(text: str) -> Config:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return from_dict(raw)


def load(path) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return loads(text)


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def preset(name: str) -> dict:
    """Built-in configurations: ``n2`` (default mixture) and ``n3``."""
    if name == "n2":
        mixture = {"N": 2, "M": [1.0, 2.0], "vbar": [1.0, 2.0], "alpha": [2.0, 2.0]}
        mobility = {"variant": "uniform", "lambda0": 1e-3}
    elif name == "n3":
        mixture = {"N": 3, "M": [1.0, 2.0, 3.0], "vbar": [1.0, 2.0, 3.0],
                   "alpha": [2.0, 2.0, 2.0]}
        mobility = {"variant": "sum", "lambda0": 1e-3, "d": 1e-3}
    else:
        raise ConfigError(f"unknown preset {name!r}")
    mixture.update(sbar=9.0, eta_visc=0.05, lambda_visc=0.0, RT=1.0, family="power-log")
    return {
        "mixture": mixture,
        "mobility": mobility,
        "grid": {"L": 1.0, "n": 200},
        "time": {"t_end": 0.1, "cfl": 0.4, "snapshot_every": 0.005},
        "initial": {"amplitude": 0.05, "mode": 1},
        "forcing": {"b": -1.0},
        "study": {"m_list": [100.0, 1000.0, 10000.0]},
    }

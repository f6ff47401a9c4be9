"""Experiment configuration: INI-style files with strict key validation.

Unknown sections or keys are configuration errors, never silent defaults, so
a misspelled key cannot skew an experiment. All values are echoed into the
run manifest.
"""

import configparser
from dataclasses import dataclass, field

import numpy as np

from .cases import CATALOG, get_case
from .grid import GridSpec
from .quadrature import QuadratureRule, WeightSpec
from .solver import ProblemSpec


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


SUBCOMMANDS = (
    "solve", "rates", "sweep-eps", "conormal", "frequency",
    "liouville", "inequalities", "curved", "list-cases",
)

_KNOWN_KEYS = {
    "problem": {"case", "d", "n", "a", "eps", "shape", "ball_radius", "anisotropy"},
    "grid": {"nodes", "lo", "hi"},
    "quadrature": {"gauss", "grading"},
    "solver": {"tol", "maxit"},
    "experiment": {
        "seed", "eps_schedule", "radii_start", "radii_stop", "bands",
        "field_count", "trace_radius", "sobolev_p", "growth_data",
        "phi", "phi_amplitude", "phi_frequency",
    },
}

_DEFAULTS = {
    ("problem", "case"): "radial_homogeneous",
    ("problem", "d"): "2",
    ("problem", "n"): "2",
    ("problem", "a"): "-1.5",
    ("problem", "eps"): "0.0",
    ("problem", "shape"): "box",
    ("problem", "ball_radius"): "",
    ("problem", "anisotropy"): "",
    ("grid", "nodes"): "65",
    ("grid", "lo"): "-1.0",
    ("grid", "hi"): "1.0",
    ("quadrature", "gauss"): "3",
    ("quadrature", "grading"): "4",
    ("solver", "tol"): "1e-10",
    ("solver", "maxit"): "20000",
    ("experiment", "seed"): "1234",
    ("experiment", "eps_schedule"): "0.25,0.125,0.0625",
    ("experiment", "radii_start"): "0.3",
    ("experiment", "radii_stop"): "0.6",
    ("experiment", "bands"): "0.25,0.125,0.0625",
    ("experiment", "field_count"): "20",
    ("experiment", "trace_radius"): "0.8",
    ("experiment", "sobolev_p"): "4.0",
    ("experiment", "growth_data"): "radial",
    ("experiment", "phi"): "sine",
    ("experiment", "phi_amplitude"): "0.2",
    ("experiment", "phi_frequency"): "1.0",
}


@dataclass
class ExperimentConfig:
    """Validated, fully defaulted experiment description."""

    values: dict = field(default_factory=dict)

    def get(self, section, key):
        return self.values[(section, key)]

    def getfloat(self, section, key):
        return float(self.values[(section, key)])

    def getint(self, section, key):
        return int(self.values[(section, key)])

    def getlist(self, section, key):
        raw = self.values[(section, key)].strip()
        if not raw:
            return []
        return [float(tok) for tok in raw.split(",")]

    def resolved_items(self):
        return sorted((f"{s}.{k}", v) for (s, k), v in self.values.items())


def load_config(path, overrides=None) -> ExperimentConfig:
    """Parse and validate a config file; unknown keys are errors."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found or unreadable")
    values = dict(_DEFAULTS)
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, val in parser.items(section):
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
            values[(section, key)] = val
    cfg = ExperimentConfig(values=values)
    for sec, key, val in overrides or []:
        if key not in _KNOWN_KEYS[sec]:
            raise ConfigError(f"unknown override key {key!r}")
        cfg.values[(sec, key)] = str(val)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    try:
        d = cfg.getint("problem", "d")
        n = cfg.getint("problem", "n")
        a = cfg.getfloat("problem", "a")
        nodes = cfg.getint("grid", "nodes")
        eps = cfg.getfloat("problem", "eps")
    except ValueError as exc:
        raise ConfigError(f"malformed numeric value: {exc}") from exc
    if not (0.0 < a + n < 2.0):
        raise ConfigError(f"a+n must lie in (0,2), got a={a}, n={n}")
    if not (2 <= n <= d <= 3):
        raise ConfigError(f"need 2 <= n <= d <= 3, got d={d}, n={n}")
    if nodes < 5 or nodes % 2 == 0:
        raise ConfigError(f"grid.nodes must be odd and >= 5, got {nodes}")
    if eps < 0:
        raise ConfigError("problem.eps must be nonnegative")
    case = cfg.get("problem", "case")
    if case not in CATALOG:
        raise ConfigError(f"unknown case {case!r}; see list-cases")
    shape = cfg.get("problem", "shape")
    if shape not in ("box", "ball"):
        raise ConfigError(f"problem.shape must be box or ball, got {shape!r}")
    if shape == "ball" and not cfg.get("problem", "ball_radius"):
        raise ConfigError("ball shape requires problem.ball_radius")


def build_case(cfg: ExperimentConfig):
    d = cfg.getint("problem", "d")
    n = cfg.getint("problem", "n")
    a = cfg.getfloat("problem", "a")
    name = cfg.get("problem", "case")
    kwargs = {}
    if name == "anisotropic" and cfg.get("problem", "anisotropy"):
        diag = cfg.getlist("problem", "anisotropy")
        if len(diag) != d:
            raise ConfigError(f"anisotropy needs {d} entries, got {len(diag)}")
        kwargs["matrix"] = np.diag(diag)
    try:
        return get_case(name, d, n, a, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_problem(cfg: ExperimentConfig, case=None) -> ProblemSpec:
    if case is None:
        case = build_case(cfg)
    d = cfg.getint("problem", "d")
    n = cfg.getint("problem", "n")
    a = cfg.getfloat("problem", "a")
    grid = GridSpec(
        d=d, n=n, nodes_per_axis=cfg.getint("grid", "nodes"),
        bounds=(cfg.getfloat("grid", "lo"), cfg.getfloat("grid", "hi")),
    )
    shape = cfg.get("problem", "shape")
    ball_r = cfg.getfloat("problem", "ball_radius") if shape == "ball" else None
    try:
        return ProblemSpec(
            grid=grid,
            weight=WeightSpec(a, n),
            A=case.A,
            f=case.f,
            F=case.F,
            psi=case.psi,
            g=case.u,
            eps=cfg.getfloat("problem", "eps"),
            shape=shape,
            ball_radius=ball_r,
            quadrature=QuadratureRule(
                cfg.getint("quadrature", "gauss"), cfg.getint("quadrature", "grading")
            ),
            cg_tol=cfg.getfloat("solver", "tol"),
            cg_maxit=cfg.getint("solver", "maxit"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

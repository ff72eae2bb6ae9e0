"""Run configuration: a nested YAML document mapped onto the model dataclasses.

Unknown keys are rejected so that a typo never silently falls back to a
default. Relative file paths are resolved against the config file.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .aem import AemPrior, GaussianPrior
from .errors import ConfigurationError
from .inference import ParamPrior, PriorSpec
from .measurement import POSITION_DELTA, SIGMA_SENSOR, read_manifest
from .solver1d import Mesh1D, SolverControls
from .solver2d import Mesh2D
from .thermo_model import (BoundarySchedule, Geometry, MaterialLayer, ReferenceScales,
                           nondimensionalize)

PAPER_DEFAULTS = "paper-defaults.yaml"

# schema: section -> allowed keys (None marks a free-form mapping)
_SCHEMA = {
    "geometry": {"L0x", "L0y", "L0z", "layer_boundaries", "aluminum_thickness"},
    "layers": None,
    "scales": {"T0", "t0", "L0x"},
    "schedule": None,
    "T_ini": None,
    "sensors": None,
    "sensor_manifest": None,
    "observation_times": {"start", "end", "step"},
    "parameters": {"h_t", "R_l", "h_l_factor"},
    "solver": {"abs_tol", "rel_tol", "max_step", "n_nodes"},
    "mesh2d": {"spacing", "dt", "output_interval", "membrane_tape", "tape_cells", "grading"},
    "measurement": {"sigma_s", "position_delta"},
    "prior": {"h_t", "R_l"},
    "mcmc": {"n_states", "burn_in", "walk", "seed", "p0", "bins"},
    "aem": {"enabled", "n_samples", "seed", "prior"},
    "mode": None,
}
_LAYER_KEYS = {"name", "k0", "k1", "c0", "c1", "thickness"}
_PRIOR_KEYS = {"family", "lo", "hi", "mean", "std"}
_AEM_PRIOR_KEYS = {"h_t", "R_l", "h_l_factor"}
_GAUSS_KEYS = {"mean", "std", "lo", "hi"}
MODES = ("robin", "dirichlet-top")


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigurationError(f"{where}: expected a mapping")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigurationError(f"unknown key {where}.{extra[0]}")


@dataclass
class RunConfig:
    geometry: Geometry
    layers: tuple
    scales: ReferenceScales
    schedule: BoundarySchedule
    T_ini: float
    sensors: dict
    times: np.ndarray
    h_t: float = 8.0
    R_l: float = 0.5
    h_l_factor: float = 1.0
    controls: SolverControls = field(default_factory=SolverControls)
    n_nodes: int = 101
    mesh2d: dict = field(default_factory=dict)
    sigma_s: float = SIGMA_SENSOR
    position_delta: float = POSITION_DELTA
    prior: PriorSpec = field(default_factory=PriorSpec)
    mcmc: dict = field(default_factory=dict)
    aem: dict = field(default_factory=dict)
    aem_prior: AemPrior = field(default_factory=AemPrior)
    mode: str = "robin"
    source: str = None

    @property
    def dirichlet(self):
        return self.mode == "dirichlet-top"

    @property
    def horizon(self):
        return float(self.schedule.times[-1])

    def dimensionless(self, h_t=None, R_l=None):
        cfg = nondimensionalize(self.layers, self.geometry, self.scales,
                                self.h_t if h_t is None else h_t,
                                self.R_l if R_l is None else R_l,
                                self.schedule, self.T_ini)
        if self.dirichlet:
            from .thermo_model import ParameterPoint
            cfg = cfg.with_parameters(ParameterPoint(np.inf, cfg.bi_l))
        return cfg

    def mesh1d(self, cfg=None):
        cfg = self.dimensionless() if cfg is None else cfg
        return Mesh1D.for_config(cfg, self.n_nodes)

    def mesh_2d(self):
        m = self.mesh2d
        return Mesh2D.build(self.geometry, spacing=m.get("spacing", 2e-3),
                            membrane=m.get("membrane_tape", True),
                            tape_cells=m.get("tape_cells", 3), grading=m.get("grading", 1.5))

    @property
    def chi(self):
        return {sid: x / self.geometry.L0x for sid, x in self.sensors.items()}


def _num(v, where):
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{where}: expected a number, got {v!r}") from None


def _layer(d, k):
    _check_keys(d, _LAYER_KEYS, f"layers[{k}]")
    missing = sorted(_LAYER_KEYS - set(d) - {"k1", "c1"})
    if missing:
        raise ConfigurationError(f"layers[{k}]: missing key {missing[0]}")
    return MaterialLayer(str(d["name"]), _num(d["k0"], "k0"), _num(d.get("k1", 0.0), "k1"),
                         _num(d["c0"], "c0"), _num(d.get("c1", 0.0), "c1"),
                         _num(d["thickness"], "thickness"))


def _param_prior(d, where):
    _check_keys(d, _PRIOR_KEYS, where)
    return ParamPrior(_num(d["lo"], f"{where}.lo"), _num(d["hi"], f"{where}.hi"),
                      d.get("family", "uniform"), d.get("mean"), d.get("std"))


def _gauss(d, where):
    _check_keys(d, _GAUSS_KEYS, where)
    return GaussianPrior(_num(d["mean"], f"{where}.mean"), _num(d["std"], f"{where}.std"),
                         _num(d.get("lo", -np.inf), f"{where}.lo"),
                         _num(d.get("hi", np.inf), f"{where}.hi"))


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def paper_defaults_text():
    return resources.files("therminv").joinpath("data", PAPER_DEFAULTS).read_text("utf-8")


def parse_config(doc, base_dir=None, source=None):
    """Validate a config mapping; missing sections take the reference defaults."""
    if doc is None:
        doc = {}
    _check_keys(doc, _SCHEMA, "config")
    for sec, keys in _SCHEMA.items():
        if keys is not None and sec in doc:
            _check_keys(doc[sec], keys, sec)
    defaults = yaml.safe_load(paper_defaults_text())
    d = _merge(defaults, doc)
    base_dir = Path(base_dir or ".")

    geometry = Geometry(**{k: (tuple(v) if k == "layer_boundaries" else _num(v, f"geometry.{k}"))
                           for k, v in d["geometry"].items()})
    layers = tuple(_layer(x, k) for k, x in enumerate(d["layers"]))
    if len(layers) < 2:
        raise ConfigurationError("layers: need at least wood fiber and insulator")
    scales = ReferenceScales(**{k: _num(v, f"scales.{k}") for k, v in d["scales"].items()})
    try:
        schedule = BoundarySchedule(tuple((float(t), float(T)) for t, T in d["schedule"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"schedule: expected [[t_s, T_C], ...] ({exc})") from None

    if "sensor_manifest" in doc:
        path = base_dir / doc["sensor_manifest"]
        if not path.exists():
            raise ConfigurationError(f"sensor_manifest: file not found: {path}")
        sensors = read_manifest(path)
    else:
        sensors = {str(k): _num(v, f"sensors.{k}") for k, v in d["sensors"].items()}
    for sid, x in sensors.items():
        if not 0 <= x <= geometry.L0x:
            raise ConfigurationError(f"sensors.{sid}: x={x} outside [0, {geometry.L0x}]")

    ot = d["observation_times"]
    step = _num(ot["step"], "observation_times.step")
    start = _num(ot.get("start", 0.0), "observation_times.start")
    end = _num(ot.get("end", schedule.times[-1]), "observation_times.end")
    if not (step > 0 and end > start):
        raise ConfigurationError("observation_times: need step > 0 and end > start")
    times = np.arange(start, end + 0.5 * step, step)

    par = d["parameters"]
    sv = d["solver"]
    controls = SolverControls(_num(sv["abs_tol"], "solver.abs_tol"),
                              _num(sv["rel_tol"], "solver.rel_tol"),
                              _num(sv.get("max_step", 0.0), "solver.max_step"))
    prior = PriorSpec(_param_prior(d["prior"]["h_t"], "prior.h_t"),
                      _param_prior(d["prior"]["R_l"], "prior.R_l"))
    ap = d["aem"].get("prior", {})
    _check_keys(ap, _AEM_PRIOR_KEYS, "aem.prior")
    aem_prior = AemPrior(_gauss(ap["h_t"], "aem.prior.h_t"), _gauss(ap["R_l"], "aem.prior.R_l"),
                         _num(ap.get("h_l_factor", 1.0), "aem.prior.h_l_factor"))
    mode = d.get("mode", "robin")
    if mode not in MODES:
        raise ConfigurationError(f"mode: expected one of {MODES}, got {mode!r}")
    mcmc = dict(d["mcmc"])
    if int(mcmc["n_states"]) < 2 or not 0 <= int(mcmc["burn_in"]) < int(mcmc["n_states"]):
        raise ConfigurationError("mcmc: need n_states >= 2 and 0 <= burn_in < n_states")
    if int(d["aem"]["n_samples"]) < 2:
        raise ConfigurationError("aem.n_samples must be >= 2")
    return RunConfig(
        geometry=geometry, layers=layers, scales=scales, schedule=schedule,
        T_ini=_num(d["T_ini"], "T_ini"), sensors=sensors, times=times,
        h_t=_num(par["h_t"], "parameters.h_t"), R_l=_num(par["R_l"], "parameters.R_l"),
        h_l_factor=_num(par.get("h_l_factor", 1.0), "parameters.h_l_factor"),
        controls=controls, n_nodes=int(sv.get("n_nodes", 101)), mesh2d=dict(d["mesh2d"]),
        sigma_s=_num(d["measurement"]["sigma_s"], "measurement.sigma_s"),
        position_delta=_num(d["measurement"]["position_delta"], "measurement.position_delta"),
        prior=prior, mcmc=mcmc, aem=dict(d["aem"]), aem_prior=aem_prior, mode=mode,
        source=source)


def load_config(path=None):
    """Read a YAML config; ``None`` gives the reference defaults."""
    if path is None:
        return parse_config({}, source=PAPER_DEFAULTS)
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text("utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML ({exc})") from None
    return parse_config(doc, base_dir=path.parent, source=str(path))

"""Repeated sensor series, measurement uncertainty and synthetic observations.

The total uncertainty of a sample combines the sensor accuracy, the spread of
the repeated campaigns and the effect of a misplaced sensor::

    sigma = sqrt(sigma_s^2 + sigma_rand^2 + sigma_pos^2)
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, IngestionError

log = logging.getLogger(__name__)

SIGMA_SENSOR = 0.3  # degC
POSITION_DELTA = 5e-3  # m


@dataclass
class RepeatSet:
    """``N_e`` repeated series for each sensor on one shared time grid.

    Attributes
    ----------
    positions : dict
        ``sensor_id -> x`` (m).
    times : ndarray
        Sample times (s), ascending.
    values : dict
        ``sensor_id -> array (N_e, n_times)`` in degC.
    metadata : dict
        Free-form tags (fan speed, pass-through channels).
    """

    positions: dict
    times: np.ndarray
    values: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise IngestionError("times must be strictly ascending")
        vals = {}
        n_e = None
        for sid, v in self.values.items():
            v = np.atleast_2d(np.asarray(v, dtype=float))
            if v.shape[1] != self.times.size:
                raise IngestionError(f"sensor {sid!r}: series length does not match the time grid")
            if n_e is not None and v.shape[0] != n_e:
                raise IngestionError("every sensor needs the same number of repeats")
            n_e = v.shape[0]
            vals[sid] = v
        if set(vals) != set(self.positions):
            raise IngestionError("sensor ids of values and positions differ")
        self.values = vals

    @property
    def sensor_ids(self):
        return list(self.positions)

    @property
    def n_repeats(self):
        return next(iter(self.values.values())).shape[0] if self.values else 0


@dataclass
class SensorSeries:
    sensor_id: str
    x: float
    chi: float
    times: np.ndarray
    T: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.T = np.asarray(self.T, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if not (self.times.shape == self.T.shape == self.sigma.shape):
            raise IngestionError(f"sensor {self.sensor_id!r}: column lengths differ")
        if np.any(np.diff(self.times) <= 0):
            raise IngestionError(f"sensor {self.sensor_id!r}: times must be ascending")
        if np.any(~(self.sigma > 0)):
            raise IngestionError(f"sensor {self.sensor_id!r}: sigma must be > 0")


@dataclass
class SensorDataset:
    """Best estimates and total uncertainty per sensor, ready for inference."""

    sensors: list

    @property
    def times(self):
        return self.sensors[0].times

    @property
    def chi(self):
        return [s.chi for s in self.sensors]

    def stacked(self):
        """``(T, sigma)`` concatenated sensor after sensor."""
        return (np.concatenate([s.T for s in self.sensors]),
                np.concatenate([s.sigma for s in self.sensors]))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "sensor_id", "T_C", "sigma_C"])
            for s in self.sensors:
                for t, T, sg in zip(s.times, s.T, s.sigma):
                    w.writerow([repr(float(t)), s.sensor_id, repr(float(T)), repr(float(sg))])

    @classmethod
    def from_csv(cls, path, positions, L0x):
        """Read a dataset CSV; ``positions`` maps sensor ids to ``x`` (m)."""
        cols = _read_columns(path, ("t_s", "sensor_id", "T_C", "sigma_C"))
        sensors = []
        for sid in _ordered_unique(cols["sensor_id"]):
            if sid not in positions:
                raise IngestionError(f"sensor {sid!r} missing from the manifest")
            m = [i for i, v in enumerate(cols["sensor_id"]) if v == sid]
            x = float(positions[sid])
            sensors.append(SensorSeries(sid, x, x / L0x,
                                        [float(cols["t_s"][i]) for i in m],
                                        [float(cols["T_C"][i]) for i in m],
                                        [float(cols["sigma_C"][i]) for i in m]))
        return cls(sensors)


def _ordered_unique(seq):
    return list(dict.fromkeys(seq))


def _read_columns(path, required):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise IngestionError(f"{path}: missing columns {missing}")
        rows = list(reader)
    return {c: [r[c] for r in rows] for c in reader.fieldnames}


# ---------------------------------------------------------------------------
# uncertainty components

def best_estimate(repeats):
    """Arithmetic mean over repeats, per sensor.

    Accumulated about the first repeat so identical repeats return it exactly.
    """
    return {sid: v[0] + (v - v[0]).mean(axis=0) for sid, v in repeats.values.items()}


def random_uncertainty(repeats, sample=False):
    """Random part of the uncertainty, per sensor.

    ``sqrt(var / N_e)`` with the population variance (``1/N_e``), or the
    sample variance (``1/(N_e - 1)``) when ``sample`` is true. A single
    repeat gives zeros and logs a warning (see :func:`single_repeat`).

    Returns
    -------
    dict
        ``sensor_id -> series`` in degC.
    """
    n_e = repeats.n_repeats
    if n_e == 1:
        log.warning("single repeat: random uncertainty set to 0")
        return {sid: np.zeros(repeats.times.size) for sid in repeats.values}
    ddof = 1 if sample else 0
    return {sid: np.sqrt(v.var(axis=0, ddof=ddof) / n_e) for sid, v in repeats.values.items()}


def single_repeat(repeats):
    """True when the random uncertainty cannot be estimated."""
    return repeats.n_repeats == 1


def position_uncertainty(field, chi, delta=POSITION_DELTA, T0=20.0, L0x=0.16):
    """``|dT/dx| * delta`` at ``chi`` for every stored time (degC).

    Parameters
    ----------
    field : Field1D
        Dimensionless temperature ``u`` on the lumped mesh.
    chi : float
        Sensor position.
    delta : float
        Position uncertainty, m.
    T0, L0x : float
        Scales converting ``du/dchi`` into degC per metre.
    """
    xs = field.mesh.chi
    if not xs[0] - 1e-12 <= chi <= xs[-1] + 1e-12:
        raise DomainError(f"chi={chi} outside the mesh")
    # second-order gradient: central inside, one-sided at the ends
    g = np.gradient(field.values, xs, axis=0, edge_order=2)
    col = np.array([np.interp(chi, xs, g[:, n]) for n in range(field.times.size)])
    return np.abs(col) * T0 / L0x * delta


def total_uncertainty(sigma_s, sigma_rand, sigma_pos):
    """Root-sum-square of the three components (broadcasting)."""
    # hypot avoids under/overflow of the squares
    return np.hypot(np.hypot(sigma_s, sigma_rand), sigma_pos)


def build_dataset(repeats, L0x, sigma_s=SIGMA_SENSOR, sigma_pos=None, sample=False):
    """Best estimates with total uncertainty.

    ``sigma_pos`` maps sensor ids to position-uncertainty series on the
    repeat grid (zeros when omitted).
    """
    best = best_estimate(repeats)
    rand = random_uncertainty(repeats, sample=sample)
    sensors = []
    for sid in repeats.sensor_ids:
        pos = np.zeros(repeats.times.size) if sigma_pos is None else sigma_pos[sid]
        sig = total_uncertainty(sigma_s, rand[sid], pos)
        x = float(repeats.positions[sid])
        sensors.append(SensorSeries(sid, x, x / L0x, repeats.times, best[sid], sig))
    return SensorDataset(sensors)


# ---------------------------------------------------------------------------
# synthetic data

def _field2d_series(truth, x, times):
    # sensors sit on the vertical mid-plane of the section
    xs, ys = truth.mesh.x_nodes, truth.mesh.y_nodes
    if not xs[0] - 1e-12 <= x <= xs[-1] + 1e-12:
        raise DomainError(f"sensor x={x} outside the domain")
    if times[-1] > truth.times[-1] + 1e-9 or times[0] < truth.times[0] - 1e-9:
        raise DomainError("requested times outside the truth horizon")
    return truth.sample_at_times(x, 0.5 * (ys[0] + ys[-1]), times)


def synthesize_observations(truth, positions, times, sigma, seed, n_repeats=3, L0x=0.16,
                            T0=20.0, t0=None, metadata=None):
    """Noisy repeated observations of a truth field.

    Parameters
    ----------
    truth : Field2D or Field1D
        Field2D times are in seconds; for a Field1D pass ``t0`` so that the
        physical ``times`` map to ``tau = t / t0``.
    positions : dict
        ``sensor_id -> x`` (m).
    times : array_like
        Sample times, s.
    sigma : float or dict
        Noise standard deviation (degC), scalar or per sensor (scalar or series).
    seed : int
    n_repeats : int
    """
    from .solver1d import Field1D, sample_series
    times = np.asarray(times, dtype=float)
    rng = np.random.default_rng(seed)
    values = {}
    for sid, x in positions.items():
        if isinstance(truth, Field1D):
            chi = x / L0x
            if not -1e-12 <= chi <= 1 + 1e-12:
                raise DomainError(f"sensor x={x} outside the domain")
            if t0 is None:
                raise DomainError("t0 is required to sample a lumped field")
            base = T0 * sample_series(truth, min(max(chi, 0.0), 1.0), times / t0)
        else:
            base = _field2d_series(truth, x, times)
        sg = sigma[sid] if isinstance(sigma, dict) else sigma
        sg = np.broadcast_to(np.asarray(sg, dtype=float), times.shape)
        if np.any(sg < 0):
            raise DomainError("noise sigma must be >= 0")
        noise = rng.standard_normal((n_repeats, times.size)) * sg
        values[sid] = base[None, :] + noise
    return RepeatSet(dict(positions), times, values, dict(metadata or {}))


# ---------------------------------------------------------------------------
# CSV ingestion

def read_manifest(path):
    cols = _read_columns(path, ("sensor_id", "x_m"))
    return {sid: float(x) for sid, x in zip(cols["sensor_id"], cols["x_m"])}


def read_repeats(paths, manifest, metadata=None):
    """Load one CSV per repeat (``t_s,sensor_id,T_C``) into a :class:`RepeatSet`.

    Every repeat must carry the same time grid for every sensor.
    """
    positions = read_manifest(manifest) if isinstance(manifest, (str, Path)) else dict(manifest)
    series = {sid: [] for sid in positions}
    grid = None
    for p in paths:
        cols = _read_columns(p, ("t_s", "sensor_id", "T_C"))
        for sid in positions:
            idx = [i for i, v in enumerate(cols["sensor_id"]) if v == sid]
            if not idx:
                raise IngestionError(f"{p}: no samples for sensor {sid!r}")
            t = np.array([float(cols["t_s"][i]) for i in idx])
            if grid is None:
                grid = t
            elif t.shape != grid.shape or np.any(t != grid):
                raise IngestionError(f"{p}: time grid of sensor {sid!r} does not match")
            series[sid].append([float(cols["T_C"][i]) for i in idx])
        extra = set(cols["sensor_id"]) - set(positions)
        if extra:
            raise IngestionError(f"{p}: sensors {sorted(extra)} missing from the manifest")
    if grid is None:
        raise IngestionError("no repeat files given")
    return RepeatSet(positions, grid, {k: np.array(v) for k, v in series.items()},
                     dict(metadata or {}))


def write_repeats(repeats, directory, stem="repeat"):
    """Write one ``t_s,sensor_id,T_C`` CSV per repeat plus ``sensors.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in range(repeats.n_repeats):
        p = d / f"{stem}_{r + 1}.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "sensor_id", "T_C"])
            for sid in repeats.sensor_ids:
                for t, T in zip(repeats.times, repeats.values[sid][r]):
                    w.writerow([repr(float(t)), sid, repr(float(T))])
        paths.append(p)
    with open(d / "sensors.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sensor_id", "x_m"])
        for sid, x in repeats.positions.items():
            w.writerow([sid, repr(float(x))])
    return paths

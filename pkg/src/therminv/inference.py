"""Gaussian likelihood and random-walk Metropolis-Hastings over ``(h_t, R_l)``.

The chain lives in physical units (W m-2 K-1). The walk ``w`` is expressed
on the normalized scale where each prior range maps to [0, 1], and the
proposal is uniform on ``p +/- w * (hi - lo)``, hence symmetric, so the
acceptance factor reduces to the posterior ratio.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, ThermInvError
from .solver1d import sample_series, solve_lumped
from .thermo_model import ParameterPoint, parameters_to_dimensionless

log = logging.getLogger(__name__)

PARAM_NAMES = ("h_t", "R_l")


@dataclass(frozen=True)
class ParamPrior:
    """Prior of one parameter: ``uniform`` on bounds or ``gaussian`` truncated to them."""

    lo: float
    hi: float
    family: str = "uniform"
    mean: float = None
    std: float = None

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigurationError(f"prior bounds need lo < hi, got [{self.lo}, {self.hi}]")
        if self.family not in ("uniform", "gaussian"):
            raise ConfigurationError(f"unknown prior family {self.family!r}")
        if self.family == "gaussian" and not (self.std is not None and self.std > 0
                                              and self.mean is not None):
            raise ConfigurationError("gaussian prior needs a mean and std > 0")

    def log_density(self, x):
        if not self.lo <= x <= self.hi:
            return -math.inf
        if self.family == "uniform":
            return 0.0
        z = (x - self.mean) / self.std
        return -0.5 * z * z

    def draw(self, rng):
        if self.family == "uniform":
            return float(rng.uniform(self.lo, self.hi))
        while True:
            x = float(rng.normal(self.mean, self.std))
            if self.lo <= x <= self.hi:
                return x


@dataclass(frozen=True)
class PriorSpec:
    h_t: ParamPrior = ParamPrior(1.0, 40.0)
    R_l: ParamPrior = ParamPrior(0.01, 1.0)

    @property
    def params(self):
        return (self.h_t, self.R_l)

    def describe(self):
        return {n: asdict(p) for n, p in zip(PARAM_NAMES, self.params)}


@dataclass
class Chain:
    """Metropolis-Hastings chain; ``states[k] = (h_t, R_l)``.

    In the Dirichlet configuration ``h_t`` is stored as ``inf``.
    """

    states: np.ndarray
    log_post: np.ndarray
    accepted: np.ndarray
    walk: tuple
    seed: int
    burn_in: int = 1000
    prior: dict = field(default_factory=dict)

    def __len__(self):
        return self.states.shape[0]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["state", "h_t", "R_l", "log_post", "accepted"])
            for k in range(len(self)):
                w.writerow([k, repr(float(self.states[k, 0])), repr(float(self.states[k, 1])),
                            repr(float(self.log_post[k])), int(self.accepted[k])])

    @classmethod
    def from_csv(cls, path, walk=(np.nan, np.nan), seed=None, burn_in=0):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        st = np.array([[float(r["h_t"]), float(r["R_l"])] for r in rows])
        lp = np.array([float(r["log_post"]) for r in rows])
        acc = np.array([bool(int(r["accepted"])) for r in rows])
        return cls(st, lp, acc, tuple(walk), seed, burn_in)


# ---------------------------------------------------------------------------
# likelihood

def _model_minus_data(field, data, cfg):
    taus = np.asarray(data.times) / cfg.t0
    return np.array([cfg.T0 * sample_series(field, s.chi, taus) - s.T for s in data.sensors])


def log_likelihood(p, data, cfg, mesh=None, controls=None, aem=None):
    """Gaussian log-likelihood ``-1/2 sum(((u - u_obs - e) / sigma_tilde)^2)``.

    Parameters
    ----------
    p : ParameterPoint
    data : SensorDataset
        Observation times in seconds; they must lie within ``[0, t0]``.
    cfg : DimensionlessConfig
    aem : AemModel, optional
        Without it ``e = 0`` and ``sigma_tilde = sigma``.

    Returns
    -------
    float
        ``-inf`` when the forward solve fails.
    """
    sig = np.array([s.sigma for s in data.sensors])
    if np.any(~(sig > 0)):
        raise DomainError("data sigma must be > 0")
    try:
        field = solve_lumped(cfg, p, mesh=mesh, controls=controls,
                             output_times=np.asarray(data.times) / cfg.t0)
    except (ThermInvError, ArithmeticError) as exc:
        log.info("forward solve failed at %s: %s", p, exc)
        return -math.inf
    r = _model_minus_data(field, data, cfg)
    if aem is not None:
        from .aem import apply_aem
        r, sig = apply_aem(r, aem, sig)
    # degC residuals over degC sigma: same ratio as in dimensionless units
    return float(-0.5 * np.sum((r / sig) ** 2))


def residuals(p, data, cfg, mesh=None, controls=None, aem=None):
    """Observation minus prediction (degC), AEM-corrected when ``aem`` is given."""
    field = solve_lumped(cfg, p, mesh=mesh, controls=controls,
                         output_times=np.asarray(data.times) / cfg.t0)
    r = _model_minus_data(field, data, cfg)
    if aem is not None:
        from .aem import apply_aem
        r, _ = apply_aem(r, aem)
    return -r


class CachedLikelihood:
    """``(h_t, R_l) -> log-likelihood`` memoized on the exact parameter values."""

    def __init__(self, data, cfg, mesh=None, controls=None, aem=None, dirichlet=False):
        self.data, self.cfg, self.mesh, self.controls, self.aem = data, cfg, mesh, controls, aem
        self.dirichlet = dirichlet
        self._cache = {}
        self.n_solves = 0

    def point(self, h_t, R_l):
        bi = parameters_to_dimensionless(1.0, R_l, self.cfg)
        if self.dirichlet:
            return ParameterPoint(math.inf, bi.bi_l)
        return parameters_to_dimensionless(h_t, R_l, self.cfg)

    def __call__(self, h_t, R_l):
        key = (float(h_t), float(R_l))
        if key not in self._cache:
            self.n_solves += 1
            self._cache[key] = log_likelihood(self.point(h_t, R_l), self.data, self.cfg,
                                              self.mesh, self.controls, self.aem)
        return self._cache[key]


# ---------------------------------------------------------------------------
# Metropolis-Hastings

def propose(p_prev, w, rng):
    """Componentwise ``p + w * U[-1, 1]``."""
    p_prev = np.asarray(p_prev, dtype=float)
    return p_prev + np.asarray(w, dtype=float) * rng.uniform(-1.0, 1.0, p_prev.shape)


def acceptance_factor(log_post_candidate, log_post_prev):
    """``min(1, exp(candidate - prev))``; 0 when the candidate is impossible."""
    if log_post_candidate == -math.inf:
        return 0.0
    if log_post_prev == -math.inf:
        return 1.0
    d = log_post_candidate - log_post_prev
    return 1.0 if d >= 0 else math.exp(d)


def run_mcmc(data, cfg, prior=None, w=(5e-4, 5e-4), n_states=100_000, seed=0, aem=None,
             p0=None, burn_in=1000, mesh=None, controls=None, log_likelihood_fn=None,
             dirichlet=False):
    """Random-walk Metropolis-Hastings.

    Parameters
    ----------
    data : SensorDataset or None
        May be None when ``log_likelihood_fn`` is given.
    cfg : DimensionlessConfig or None
    prior : PriorSpec
    w : pair of float
        Walk on the normalized scale (fraction of each prior range).
    n_states : int
        Chain length ``N_s`` including the initial state.
    seed : int
    aem : AemModel, optional
    p0 : pair of float, optional
        Initial ``(h_t, R_l)``; drawn from the prior by default.
    burn_in : int
        Stored with the chain for :func:`chain_stats`.
    log_likelihood_fn : callable, optional
        ``(h_t, R_l) -> float`` replacing the PDE likelihood.
    dirichlet : bool
        One-parameter chain over ``R_l`` with Dirichlet top/bottom faces.

    Returns
    -------
    Chain
    """
    prior = PriorSpec() if prior is None else prior
    if n_states < 1:
        raise ConfigurationError("n_states must be >= 1")
    rng = np.random.default_rng(seed)
    loglik = log_likelihood_fn or CachedLikelihood(data, cfg, mesh, controls, aem, dirichlet)
    lo = np.array([p.lo for p in prior.params])
    span = np.array([p.hi - p.lo for p in prior.params])
    step = np.asarray(w, dtype=float) * span
    if dirichlet:
        step[0] = 0.0

    def log_post(x):
        lp = prior.R_l.log_density(x[1])
        if not dirichlet:
            lp += prior.h_t.log_density(x[0])
        if lp == -math.inf:
            return -math.inf
        return lp + loglik(x[0], x[1])

    if p0 is None:
        x = np.array([prior.h_t.draw(rng), prior.R_l.draw(rng)])
    else:
        x = np.array(p0, dtype=float)
    if dirichlet:
        x[0] = lo[0] + 0.5 * span[0]  # unused by the Dirichlet likelihood
    lp = log_post(x)
    if lp == -math.inf:
        raise ConfigurationError(f"initial state {tuple(x)} has zero posterior density")

    states = np.empty((n_states, 2))
    logp = np.empty(n_states)
    acc = np.zeros(n_states, dtype=bool)
    states[0], logp[0], acc[0] = x, lp, True
    for k in range(1, n_states):
        cand = propose(x, step, rng)
        lp_c = log_post(cand)
        beta = acceptance_factor(lp_c, lp)
        if rng.uniform() < beta:
            x, lp = cand, lp_c
            acc[k] = True
        states[k], logp[k] = x, lp
    if dirichlet:
        states[:, 0] = math.inf
    return Chain(states, logp, acc, tuple(float(v) for v in w), seed, burn_in,
                 prior.describe())


@dataclass
class ChainStats:
    mean: np.ndarray
    std: np.ndarray
    acceptance_rate: float
    histograms: list
    pinned: list

    def as_dict(self):
        out = {}
        for k, n in enumerate(PARAM_NAMES):
            out[n] = {"mean": _json_float(self.mean[k]), "std": _json_float(self.std[k]),
                      "pinned_to_bound": self.pinned[k]}
        out["acceptance_rate"] = self.acceptance_rate
        return out


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def chain_stats(chain, burn_in=None, bins=50, prior=None):
    """Posterior mean and population std over states ``[N_b, N_s)``.

    ``pinned`` flags a parameter whose mean sits within 1 % of the prior
    range from a bound.
    """
    n_b = chain.burn_in if burn_in is None else burn_in
    if n_b >= len(chain):
        raise DomainError(f"burn-in {n_b} >= chain length {len(chain)}")
    s = chain.states[n_b:]
    mean = s.mean(axis=0)
    # an inf column (Dirichlet h_t) has no spread to report
    std = np.array([c.std() if np.all(np.isfinite(c)) else math.nan for c in s.T])
    rate = float(chain.accepted[max(n_b, 1):].mean()) if len(chain) > max(n_b, 1) else 0.0
    hists = []
    for k in range(2):
        col = s[:, k]
        hists.append(np.histogram(col, bins=bins) if np.all(np.isfinite(col)) else None)
    pinned = [False, False]
    if prior is not None:
        for k, pp in enumerate(prior.params):
            tol = 0.01 * (pp.hi - pp.lo)
            pinned[k] = bool(np.isfinite(mean[k]) and (mean[k] - pp.lo < tol or pp.hi - mean[k] < tol))
            if pinned[k]:
                log.warning("posterior of %s pinned to a prior bound (mean %.4g)",
                            PARAM_NAMES[k], mean[k])
    return ChainStats(mean, std, rate, hists, pinned)


def write_summary_json(path, chain, stats, meta=None, **extra):
    doc = stats.as_dict()
    doc.update({"burn_in": chain.burn_in, "n_states": len(chain), "seed": chain.seed,
                "walk": list(chain.walk), "prior": chain.prior})
    doc.update(extra)
    if meta is not None:
        doc["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    return doc

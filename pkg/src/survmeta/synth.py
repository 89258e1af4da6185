"""Synthetic longitudinal cohorts with known potential outcomes.

The treatment of interest is the adherence indicator at month
``snapshot_tau``. Subjects are event-free up to that month; the residual
time after it is exponential with hazard

    baseline_hazard * exp(beta_treatment * a + beta_age * age_z + beta_latent . x)

rounded up to whole months and administratively censored at ``horizon``.
``x`` are latent confounders that the analyst sees only through the risk
score columns.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

from .domain import MAX_MONTHS, N_RISK_SCORES, SubjectRecord

DEFAULT_CATEGORICALS = {
    "race": (("white", "black", "other"), (0.6, 0.3, 0.1)),
    "gender": (("female", "male"), (0.45, 0.55)),
    "education": (("hs_or_less", "some_college", "college"), (0.5, 0.3, 0.2)),
}
DRUG_NAMES = ("risperidone", "aripiprazole", "olanzapine", "haloperidol")
FORMULATION_LEVELS = ("injectable", "non-injectable", "not-covered")


@dataclass(frozen=True)
class DgpConfig:
    n_subjects: int = 2000
    seed: int = 0
    snapshot_tau: int = 3
    horizon: int = 60
    baseline_hazard: float = 0.03
    beta_treatment: float = 0.7
    beta_age: float = 0.0
    propensity_intercept: float = 0.0
    propensity_age: float = 0.0
    beta_latent: tuple = ()
    propensity_latent: tuple = ()
    censoring_rate: float = 0.01
    history_rate: float = 0.3
    risk_informative: bool = True
    risk_noise_sd: float = 0.0
    age_mean: float = 45.0
    age_sd: float = 12.0
    categoricals: dict = field(default_factory=lambda: dict(DEFAULT_CATEGORICALS))
    formulation_probs: tuple = (0.3, 0.5, 0.2)
    adherence_threshold_days: int = 10

    def __post_init__(self):
        object.__setattr__(self, "beta_latent", tuple(float(b) for b in self.beta_latent))
        object.__setattr__(self, "propensity_latent", tuple(float(b) for b in self.propensity_latent))
        object.__setattr__(self, "formulation_probs", tuple(self.formulation_probs))
        object.__setattr__(self, "categoricals", {
            k: (tuple(v[0]), tuple(float(p) for p in v[1])) for k, v in self.categoricals.items()
        })
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be positive")
        if self.baseline_hazard <= 0:
            raise ValueError("baseline_hazard must be > 0")
        if self.censoring_rate < 0:
            raise ValueError("censoring_rate must be >= 0")
        if self.snapshot_tau < 1:
            raise ValueError("snapshot_tau must be >= 1")
        if not 1 <= self.horizon <= MAX_MONTHS - self.snapshot_tau:
            raise ValueError(
                f"horizon must lie in [1, {MAX_MONTHS - self.snapshot_tau}] so that histories "
                f"fit in {MAX_MONTHS} months"
            )
        if len(self.beta_latent) != len(self.propensity_latent):
            raise ValueError("beta_latent and propensity_latent need the same length")
        if len(self.beta_latent) > N_RISK_SCORES - 1:
            raise ValueError(f"at most {N_RISK_SCORES - 1} latent confounders")
        if not 0 <= self.history_rate <= 1:
            raise ValueError("history_rate must be a probability")
        for name, (levels, probs) in self.categoricals.items():
            if len(levels) != len(probs) or abs(sum(probs) - 1) > 1e-9 or min(probs) < 0:
                raise ValueError(f"invalid level probabilities for {name}")
        if len(self.formulation_probs) != 3 or abs(sum(self.formulation_probs) - 1) > 1e-9:
            raise ValueError("formulation_probs must be three probabilities")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["categoricals"] = {k: [list(v[0]), list(v[1])] for k, v in self.categoricals.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    ids: np.ndarray
    treatment: np.ndarray
    propensity: np.ndarray
    rmet0: np.ndarray
    rmet1: np.ndarray

    @property
    def ite(self) -> np.ndarray:
        return self.rmet1 - self.rmet0

    @property
    def sample_ate(self) -> float:
        return float(np.mean(self.ite))


class OracleResult(NamedTuple):
    ate: float
    se: float


def restricted_mean_exponential(rate, horizon, discretize=True):
    """E[min(T, M)] for T ~ Exp(rate), or for ceil(T) when ``discretize``."""
    rate = np.asarray(rate, dtype=float)
    if discretize:
        return -np.expm1(-rate * horizon) / -np.expm1(-rate)
    return -np.expm1(-rate * horizon) / rate


def _draw_covariates(cfg: DgpConfig, n, rng):
    age_z = rng.standard_normal(n)
    latent = rng.standard_normal((n, len(cfg.beta_latent)))
    return age_z, latent


def _linear(cfg, age_z, latent):
    prog = cfg.beta_age * age_z + latent @ np.array(cfg.beta_latent, dtype=float)
    prop = cfg.propensity_intercept + cfg.propensity_age * age_z
    prop = prop + latent @ np.array(cfg.propensity_latent, dtype=float)
    return prog, expit(prop)


def _coverage_days(adherence, threshold, rng):
    lo = np.where(adherence == 1, 0, threshold + 1)
    hi = np.where(adherence == 1, threshold, 31)
    return rng.integers(lo, hi + 1)


def generate(config: DgpConfig):
    """Draw a cohort; returns ``(records, truth)``.

    ``truth`` carries both potential restricted mean event times for
    every subject in closed form.
    """
    cfg = config
    ss = np.random.SeedSequence(cfg.seed)
    rng = np.random.default_rng(ss)
    n, tau, M = cfg.n_subjects, cfg.snapshot_tau, cfg.horizon

    age_z, latent = _draw_covariates(cfg, n, rng)
    prog, propensity = _linear(cfg, age_z, latent)
    a = (rng.random(n) < propensity).astype(int)
    rate0 = cfg.baseline_hazard * np.exp(prog)
    rate = rate0 * np.exp(cfg.beta_treatment * a)
    t_event = np.maximum(np.ceil(rng.exponential(size=n) / rate), 1)
    if cfg.censoring_rate > 0:
        t_cens = np.maximum(np.ceil(rng.exponential(size=n) / cfg.censoring_rate), 1)
    else:
        t_cens = np.full(n, np.inf)
    residual = np.minimum(np.minimum(t_event, t_cens), M).astype(int)
    event = (t_event <= t_cens) & (t_event <= M)
    observed = tau + residual

    # risk scores: untreated 12-month event probability, then per-latent versions
    risk = rng.random((n, N_RISK_SCORES))
    if cfg.risk_informative:
        risk[:, 0] = -np.expm1(-12 * rate0)
        for k, b in enumerate(cfg.beta_latent):
            risk[:, k + 1] = -np.expm1(-12 * cfg.baseline_hazard * np.exp(b * latent[:, k]))
        if cfg.risk_noise_sd > 0:
            k = 1 + len(cfg.beta_latent)
            lo = np.clip(risk[:, :k], 1e-12, 1 - 1e-12)
            risk[:, :k] = expit(logit(lo) + cfg.risk_noise_sd * rng.standard_normal((n, k)))

    cats = {}
    for name, (levels, probs) in cfg.categoricals.items():
        cats[name] = np.asarray(levels, dtype=object)[rng.choice(len(levels), size=n, p=probs)]
    formulation = np.asarray(FORMULATION_LEVELS, dtype=object)[
        rng.choice(3, size=n, p=cfg.formulation_probs)]
    drug = np.asarray(DRUG_NAMES, dtype=object)[rng.integers(0, len(DRUG_NAMES), size=n)]
    age = np.round(cfg.age_mean + cfg.age_sd * age_z, 1)

    width = len(str(n - 1))
    records = []
    for i in range(n):
        m_i = int(observed[i])
        hist = (rng.random(m_i) < cfg.history_rate).astype(int)
        hist[tau - 1] = a[i]
        days = _coverage_days(hist, cfg.adherence_threshold_days, rng)
        scores = tuple(float(x) for x in risk[i])
        labels = {"formulation": str(formulation[i])}
        if formulation[i] != "not-covered":
            labels["drug_name"] = str(drug[i])
        records.append(SubjectRecord(
            id=f"s{i:0{width}d}",
            observed_time=m_i,
            event_flag=bool(event[i]),
            adherence_series=tuple(int(x) for x in hist),
            coverage_days_series=tuple(int(x) for x in days),
            static_covariates={"age": float(age[i]), **{k: str(v[i]) for k, v in cats.items()}},
            risk_scores_series=(scores,) * m_i,
            subgroup_labels=labels,
        ))
    truth = SyntheticTruth(
        ids=np.array([r.id for r in records], dtype=object),
        treatment=a,
        propensity=propensity,
        rmet0=restricted_mean_exponential(rate0, M),
        rmet1=restricted_mean_exponential(rate0 * np.exp(cfg.beta_treatment), M),
    )
    return records, truth


def oracle_ate(config: DgpConfig, n_mc: int = 10**6, discretize=True, seed=None) -> OracleResult:
    """Monte Carlo population ATE on the restricted mean event time.

    Fresh covariate draws; both potential event times share one
    exponential variate, so the estimate has low variance.
    """
    if n_mc < 10**5:
        raise ValueError("n_mc must be at least 1e5")
    ss = np.random.SeedSequence([config.seed, 0x0AC1E] if seed is None else seed)
    rng = np.random.default_rng(ss)
    age_z, latent = _draw_covariates(config, n_mc, rng)
    prog, _ = _linear(config, age_z, latent)
    rate0 = config.baseline_hazard * np.exp(prog)
    e = rng.exponential(size=n_mc)
    out = []
    for r in (rate0 * np.exp(config.beta_treatment), rate0):
        t = e / r
        if discretize:
            t = np.maximum(np.ceil(t), 1)
        out.append(np.minimum(t, config.horizon))
    diff = out[0] - out[1]
    return OracleResult(float(diff.mean()), float(diff.std(ddof=1) / np.sqrt(n_mc)))


def censored_fraction(config: DgpConfig, n=200_000, seed=12345) -> float:
    """Expected share of non-events (random plus administrative censoring)."""
    rng = np.random.default_rng(seed)
    age_z, latent = _draw_covariates(config, n, rng)
    prog, prop = _linear(config, age_z, latent)
    a = rng.random(n) < prop
    rate = config.baseline_hazard * np.exp(prog + config.beta_treatment * a)
    t_event = np.maximum(np.ceil(rng.exponential(size=n) / rate), 1)
    if config.censoring_rate > 0:
        t_cens = np.maximum(np.ceil(rng.exponential(size=n) / config.censoring_rate), 1)
    else:
        t_cens = np.full(n, np.inf)
    return float(np.mean(~((t_event <= t_cens) & (t_event <= config.horizon))))


def calibrate_censoring_rate(config: DgpConfig, target: float) -> float:
    """Censoring rate giving roughly ``target`` non-events overall."""
    from dataclasses import replace

    def gap(rate):
        return censored_fraction(replace(config, censoring_rate=rate)) - target

    if gap(0.0) >= 0:
        return 0.0
    return float(brentq(gap, 1e-8, 5.0, xtol=1e-6))

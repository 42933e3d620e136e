"""Simulation lab: synthetic populations and estimator performance studies.

Builds an artificial stratified population of facilities whose emitting
components carry day-specific mean rates (lognormal by stratum) and
pass-level rates around them, then repeatedly samples it under the three-stage
design (facility SRS, day SRS, POD-driven detection) and scores four
estimation variants (inverse-probability weighting or Hajek, with or without
day-sampling uncertainty) on percent bias, variance, mean squared error and
Wald interval coverage.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import ComponentObs, DayObs, EstimatorConfig, estimate_survey, wald_ci
from .frame import StratumDef
from .pod import DEFAULT_POD, PodParams, pod

__all__ = [
    "SimStratumSpec",
    "SimConfig",
    "SimPopulation",
    "SimStudyResult",
    "fit_lognormal_moments",
    "default_config",
    "config_from_json",
    "generate_population",
    "run_study",
    "VARIANTS",
]

MAX_PASSES = 5

# estimator x stage II treatment; "year" carries the day-sampling variance,
# "observed" treats the surveyed days as the whole population
VARIANTS = ("ipw_year", "ipw_observed", "hajek_year", "hajek_observed")


def fit_lognormal_moments(sample_mean: float, sample_var: float) -> tuple[float, float]:
    """Moment-matching lognormal fit: mean/variance -> (mu, sigma)."""
    if sample_mean <= 0 or sample_var <= 0:
        raise ValueError("sample mean and variance must be > 0")
    sigma_sq = math.log(1.0 + sample_var / (sample_mean * sample_mean))
    mu = math.log(sample_mean) - sigma_sq / 2.0
    return mu, math.sqrt(sigma_sq)


@dataclass(frozen=True)
class SimStratumSpec:
    """Population shape and emission distribution of one stratum."""

    name: str
    n_sampled: int
    n_population: int
    lognormal_mu: float
    lognormal_sigma: float
    sd_ratio: float = 0.2

    def __post_init__(self):
        if not 1 <= self.n_sampled <= self.n_population:
            raise ValueError(f"stratum {self.name!r}: need 1 <= n <= N")
        if self.lognormal_sigma <= 0:
            raise ValueError("lognormal_sigma must be > 0")
        if self.sd_ratio < 0:
            raise ValueError("sd_ratio must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    strata: tuple[SimStratumSpec, ...]
    components_per_facility: tuple[int, int] = (1, 50)
    emit_prob: float = 0.055
    passes_pmf: dict = field(
        default_factory=lambda: {1: 0.25, 2: 0.40, 3: 0.20, 4: 0.10, 5: 0.05}
    )
    wind_mean: float = 4.0
    wind_sd: float = 1.5
    altitude_mean: float = 680.0
    altitude_sd: float = 60.0
    horizon: int = 365
    days_sampled: int = 2
    replications: int = 5000
    seed: int = 0
    ci_level: float = 0.95
    pod_params: PodParams = DEFAULT_POD

    def __post_init__(self):
        if not 0.0 <= self.emit_prob <= 1.0:
            raise ValueError("emit_prob must lie in [0, 1]")
        if abs(sum(self.passes_pmf.values()) - 1.0) > 1e-9:
            raise ValueError("passes_pmf must sum to 1")
        if any(not 1 <= k <= MAX_PASSES for k in self.passes_pmf):
            raise ValueError(f"pass counts must lie in 1..{MAX_PASSES}")
        if not 1 <= self.days_sampled <= self.horizon:
            raise ValueError("need 1 <= days_sampled <= horizon")
        lo, hi = self.components_per_facility
        if not 1 <= lo <= hi:
            raise ValueError("bad components_per_facility range")

    def as_dict(self) -> dict:
        return {
            "strata": [
                {
                    "name": s.name, "n_sampled": s.n_sampled, "n_population": s.n_population,
                    "lognormal_mu": s.lognormal_mu, "lognormal_sigma": s.lognormal_sigma,
                    "sd_ratio": s.sd_ratio,
                }
                for s in self.strata
            ],
            "components_per_facility": list(self.components_per_facility),
            "emit_prob": self.emit_prob,
            "passes_pmf": {str(k): v for k, v in self.passes_pmf.items()},
            "wind_mean": self.wind_mean, "wind_sd": self.wind_sd,
            "altitude_mean": self.altitude_mean, "altitude_sd": self.altitude_sd,
            "horizon": self.horizon, "days_sampled": self.days_sampled,
            "replications": self.replications, "seed": self.seed,
            "ci_level": self.ci_level,
        }


def config_from_json(source) -> SimConfig:
    """Load a simulation configuration from JSON (path, file object or dict)."""
    if hasattr(source, "read"):
        doc = json.load(source)
    elif isinstance(source, dict):
        doc = source
    else:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    strata = tuple(
        SimStratumSpec(
            name=s["name"], n_sampled=int(s["n_sampled"]),
            n_population=int(s["n_population"]),
            lognormal_mu=float(s["lognormal_mu"]),
            lognormal_sigma=float(s["lognormal_sigma"]),
            sd_ratio=float(s.get("sd_ratio", 0.2)),
        )
        for s in doc["strata"]
    )
    kwargs = {}
    for key in ("emit_prob", "wind_mean", "wind_sd", "altitude_mean", "altitude_sd",
                "horizon", "days_sampled", "replications", "seed", "ci_level"):
        if key in doc:
            kwargs[key] = doc[key]
    if "components_per_facility" in doc:
        kwargs["components_per_facility"] = tuple(doc["components_per_facility"])
    if "passes_pmf" in doc:
        kwargs["passes_pmf"] = {int(k): float(v) for k, v in doc["passes_pmf"].items()}
    return SimConfig(strata=strata, **kwargs)


def default_config(**overrides) -> SimConfig:
    """The four-strata study configuration.

    Population sizes follow the published stratum table; the lognormal
    parameters are the packaged subset's moment-matching fits (regenerated by
    tools/make_subset.py and stored beside the data).
    """
    from importlib import resources

    with resources.files("msinv").joinpath("data/sim_defaults.json").open() as fh:
        fits = json.load(fh)["lognormal_fits"]
    table = [
        ("CO SWB", 48, 58),
        ("MS", 51, 91),
        ("GP Sweet", 21, 25),
        ("Compressor station", 45, 254),
    ]
    strata = tuple(
        SimStratumSpec(
            name=name, n_sampled=n, n_population=big_n,
            lognormal_mu=fits[name]["mu"], lognormal_sigma=fits[name]["sigma"],
        )
        for name, n, big_n in table
    )
    return SimConfig(strata=strata, **overrides)


# ---------------------------------------------------------------------------
# Population generation
# ---------------------------------------------------------------------------


@dataclass
class _StratumPopulation:
    spec: SimStratumSpec
    emit_facility: np.ndarray   # facility index of each emitting component
    q: np.ndarray               # (n_emit, D) passes per day
    rates: np.ndarray           # (n_emit, D, MAX_PASSES) true pass rates
    phi: np.ndarray             # (n_emit, D, MAX_PASSES) detection probabilities
    true_total: float


@dataclass
class SimPopulation:
    """A fixed synthetic population with exact per-stratum estimands."""

    config: SimConfig
    strata: dict[str, _StratumPopulation]

    @property
    def true_totals(self) -> dict[str, float]:
        out = {name: sp.true_total for name, sp in self.strata.items()}
        out["Population"] = sum(sp.true_total for sp in self.strata.values())
        return out


def _population_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) % 2**64) * 2**64))


def _replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) % 2**64) * 2**64 + 1 + rep))


def generate_population(config: SimConfig, seed: int | None = None) -> SimPopulation:
    """Draw the artificial population; deterministic given the seed.

    Emitting components get independent daily mean rates for every day of the
    horizon and pass-level rates around them (normal with SD proportional to
    the daily mean, resampled after truncation at zero).  Pass counts, wind
    and altitude are drawn up front so detection probabilities are a fixed
    property of the population; the per-replication randomness is then only
    which units are sampled and which passes detect.
    """
    rng = _population_rng(config.seed if seed is None else seed)
    lo, hi = config.components_per_facility
    pass_keys = sorted(config.passes_pmf)
    pass_probs = [config.passes_pmf[k] for k in pass_keys]
    big_d = config.horizon
    strata: dict[str, _StratumPopulation] = {}
    for spec in config.strata:
        comp_counts = rng.integers(lo, hi + 1, size=spec.n_population)
        emit_fac: list[int] = []
        for fac in range(spec.n_population):
            n_emit = rng.binomial(comp_counts[fac], config.emit_prob)
            emit_fac.extend([fac] * int(n_emit))
        n_emit = len(emit_fac)
        q = rng.choice(pass_keys, p=pass_probs, size=(n_emit, big_d)).astype(np.int8)
        daily = rng.lognormal(spec.lognormal_mu, spec.lognormal_sigma, size=(n_emit, big_d))
        rates = _truncated_normal(rng, daily[..., None], spec.sd_ratio * daily[..., None],
                                  (n_emit, big_d, MAX_PASSES))
        wind = np.clip(
            _truncated_normal(rng, config.wind_mean, config.wind_sd,
                              (n_emit, big_d, MAX_PASSES)), 0.0, None)
        alt = np.maximum(
            rng.normal(config.altitude_mean, config.altitude_sd,
                       size=(n_emit, big_d, MAX_PASSES)), 1.0)
        phi = pod(rates, alt, np.clip(wind, 0.0, None), config.pod_params) if n_emit else np.zeros((0, big_d, MAX_PASSES))
        mask = np.arange(MAX_PASSES)[None, None, :] < q[..., None]
        if n_emit:
            day_means = (rates * mask).sum(axis=2) / q
            true_total = float((day_means.mean(axis=1)).sum())
        else:
            true_total = 0.0
        strata[spec.name] = _StratumPopulation(
            spec=spec,
            emit_facility=np.asarray(emit_fac, dtype=np.int64),
            q=q,
            rates=rates,
            phi=np.asarray(phi),
            true_total=true_total,
        )
    return SimPopulation(config=config, strata=strata)


def _truncated_normal(rng, mean, sd, shape, attempts: int = 100):
    """Normal draws truncated at zero by resampling, clamping as a last resort."""
    out = rng.normal(mean, sd, size=shape)
    for _ in range(attempts):
        bad = out <= 0.0
        if not bad.any():
            break
        out = np.where(bad, rng.normal(mean, sd, size=shape), out)
    return np.maximum(out, 1e-9)


# ---------------------------------------------------------------------------
# Study execution
# ---------------------------------------------------------------------------


def _variant_config(variant: str, config: SimConfig) -> EstimatorConfig:
    estimator, mode = variant.split("_")
    return EstimatorConfig(
        estimator=estimator,
        stage2="year" if mode == "year" else "observed",
        horizon=config.horizon,
        ci_level=config.ci_level,
    )


@dataclass
class SimStudyResult:
    """Per-variant, per-scope performance metrics (scope = stratum or Population).

    ``totals`` and ``covered`` keep the raw per-replication series so paired
    Monte Carlo standard errors can be formed when comparing variants.
    """

    config: SimConfig
    true_totals: dict[str, float]
    rows: list[dict]
    totals: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    covered: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def metric(self, scope: str, variant: str, name: str) -> float:
        for row in self.rows:
            if row["stratum"] == scope and row["variant"] == variant:
                return row[name]
        raise KeyError((scope, variant, name))

    def write_csv(self, path, manifest: dict | None = None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if manifest is not None:
                fh.write("# manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["stratum", "variant", "bias_pct", "var", "mse", "coverage"])
            for row in self.rows:
                w.writerow([row["stratum"], row["variant"], repr(row["bias_pct"]),
                            repr(row["var"]), repr(row["mse"]), repr(row["coverage"])])


def run_study(config: SimConfig, population: SimPopulation | None = None) -> SimStudyResult:
    """Sample the population ``replications`` times and score all variants.

    Every replication shares one draw of the three-stage sample across the
    four variants (they differ only in estimation).  Interval coverage uses
    the Wald interval on the three-stage design variance.
    """
    pop = population if population is not None else generate_population(config)
    names = [s.name for s in config.strata]
    scopes = names + ["Population"]
    truths = pop.true_totals
    variant_cfgs = {v: _variant_config(v, config) for v in VARIANTS}
    strata_defs = {
        s.name: StratumDef(name=s.name, n_sampled=s.n_sampled, n_population=s.n_population)
        for s in config.strata
    }
    reps = config.replications
    totals = {v: {s: np.empty(reps) for s in scopes} for v in VARIANTS}
    covered = {v: {s: np.zeros(reps, dtype=bool) for s in scopes} for v in VARIANTS}

    for rep in range(reps):
        rng = _replication_rng(config.seed, rep)
        observations = _draw_sample(pop, config, rng)
        for variant, cfg in variant_cfgs.items():
            est = estimate_survey(observations, strata_defs, cfg)
            totals[variant]["Population"][rep] = est.total
            lo, hi_ = wald_ci(est.total, max(0.0, est.v3stage), config.ci_level)
            covered[variant]["Population"][rep] = lo <= truths["Population"] <= hi_
            for name in names:
                se = est.strata[name]
                totals[variant][name][rep] = se.total
                lo, hi_ = wald_ci(se.total, max(0.0, se.v3stage), config.ci_level)
                covered[variant][name][rep] = lo <= truths[name] <= hi_

    rows = []
    for scope in scopes:
        truth = truths[scope]
        for variant in VARIANTS:
            t = totals[variant][scope]
            bias = float(t.mean() - truth)
            var = float(t.var(ddof=1))
            rows.append({
                "stratum": scope,
                "variant": variant,
                "bias_pct": 100.0 * bias / truth if truth else 0.0,
                "var": var,
                "mse": var + bias * bias,
                "coverage": float(covered[variant][scope].mean()),
            })
    return SimStudyResult(config=config, true_totals=truths, rows=rows,
                          totals=totals, covered=covered)


def _draw_sample(pop: SimPopulation, config: SimConfig, rng) -> list[ComponentObs]:
    """One three-stage sample of the population as estimation-ready observations."""
    out: list[ComponentObs] = []
    d_p = config.days_sampled
    big_d = config.horizon
    for name, sp in pop.strata.items():
        spec = sp.spec
        sampled_facs = rng.choice(spec.n_population, size=spec.n_sampled, replace=False)
        fac_set = set(int(f) for f in sampled_facs)
        comp_idx = [i for i, f in enumerate(sp.emit_facility) if int(f) in fac_set]
        if not comp_idx:
            continue
        days = np.empty((len(comp_idx), d_p), dtype=np.int64)
        for row in range(len(comp_idx)):
            days[row] = rng.choice(big_d, size=d_p, replace=False)
        u = rng.random((len(comp_idx), d_p, MAX_PASSES))
        for row, ci in enumerate(comp_idx):
            day_obs = []
            for k in range(d_p):
                day = int(days[row, k])
                q = int(sp.q[ci, day])
                rates, phis = [], []
                for pidx in range(q):
                    phi = float(sp.phi[ci, day, pidx])
                    if u[row, k, pidx] < phi:
                        rates.append(float(sp.rates[ci, day, pidx]))
                        phis.append(phi)
                day_obs.append(DayObs(day_id=day, q_total=q,
                                      rates=tuple(rates), phis=tuple(phis)))
            out.append(ComponentObs(
                component_id=f"{name}:{ci}",
                facility_id=f"{name}:F{int(sp.emit_facility[ci])}",
                stratum=name,
                days=tuple(day_obs),
            ))
    return out

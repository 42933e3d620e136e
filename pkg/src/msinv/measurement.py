"""Measurement-error handling: bias correction and the Monte Carlo wrapper.

Measured rates are biased and noisy.  The cheap treatment multiplies every
measurement by the bias factor and runs a single design pass.  The full
treatment redraws the true rates from the conditional log-logistic
distribution B times, recomputes detection probabilities from each draw, runs
the design estimator per draw, and reports the iteration mean together with a
four-way variance split: the between-iteration variance is the measurement
contribution, and each stage contribution is the mean of its per-iteration
estimates.

Draws are generated from a counter-based generator keyed by (seed, iteration),
so results are bit-identical for a given seed no matter how many worker
threads execute the iterations or in which order they finish.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import reporting
from .estimators import (
    EstimatorConfig,
    detected_passes,
    estimate_survey,
    prepare_components,
)
from .frame import SurveyFrame
from .pod import DEFAULT_MEASUREMENT, PHI_FLOOR, MeasurementModel, bias_correct, pod, sample_true_rate

__all__ = [
    "McConfig",
    "McResult",
    "run_mc",
    "bias_corrected_inventory",
    "estimate_inventory",
    "convergence_trace",
    "write_trace_csv",
    "resolve_threads",
]

THREADS_ENV = "MSINV_THREADS"


def resolve_threads(requested: int | None) -> int:
    """Worker count: explicit argument, else the MSINV_THREADS cap, else 1."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings wrapped around an estimator configuration."""

    estimator: EstimatorConfig = EstimatorConfig()
    iterations: int = 8000
    seed: int = 0
    measurement: MeasurementModel = DEFAULT_MEASUREMENT
    trace: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.iterations < 2:
            raise ValueError("need at least 2 Monte Carlo iterations")

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "seed": self.seed,
            "measurement": {
                "d": self.measurement.d,
                "alpha": self.measurement.alpha,
                "beta": self.measurement.beta,
            },
            "trace": self.trace,
        }


@dataclass
class McResult:
    """Aggregated Monte Carlo inventory plus optional per-iteration series."""

    report: reporting.InventoryReport
    config: McConfig
    iteration_totals: np.ndarray | None = None
    iteration_parts: dict[str, np.ndarray] | None = None
    stratum_design_var: dict[str, np.ndarray] | None = None

    @property
    def tau_tilde(self) -> float:
        return self.report.total


def iteration_uniforms(seed: int, iteration: int, n: int) -> np.ndarray:
    """The iteration's uniform draws, one per detected pass in canonical order."""
    key = (int(seed) % 2**64) * 2**64 + iteration
    gen = np.random.Generator(np.random.Philox(key=key))
    u = gen.random(n)
    # random() yields [0, 1); the inverse CDF needs the open interval
    return np.nextafter(u, 1.0)


def run_mc(frame: SurveyFrame, config: McConfig) -> McResult:
    """Propagate measurement error through the design estimator.

    Per iteration: draw true rates given the measurements, recompute each
    pass's detection probability from its draw, and run the full three-stage
    estimation.  The reported total is the iteration mean; the measurement
    variance is the between-iteration sample variance (denominator B - 1);
    each stage part is the mean of its per-iteration (clipped) estimates.
    """
    det = detected_passes(frame)
    measured = np.array([p.measured_rate for p in det])
    winds = np.array([p.wind_speed for p in det])
    alts = np.array([p.altitude for p in det])
    est_cfg = config.estimator
    b_total = config.iterations
    names = list(frame.strata)

    totals = np.empty(b_total)
    parts = {k: np.empty(b_total) for k in ("v1", "v2", "v3", "u1", "u2", "u3", "v3stage")}
    stratum_totals = {name: np.empty(b_total) for name in names}
    stratum_parts = {
        name: {k: np.empty(b_total) for k in ("v1", "v2", "v3", "u1", "u2", "u3")}
        for name in names
    }
    floor_hits = np.zeros(b_total, dtype=int)
    first_diag: dict = {}

    def one_iteration(b: int):
        u = iteration_uniforms(config.seed, b, len(det))
        y = sample_true_rate(measured, u, config.measurement) if len(det) else measured
        raw_phi = np.atleast_1d(pod(y, alts, winds, est_cfg.pod_params)) if len(det) else np.zeros(0)
        floor_hits[b] = int(np.count_nonzero(raw_phi < PHI_FLOOR))
        phi = np.maximum(raw_phi, PHI_FLOOR)
        comps = prepare_components(frame, np.atleast_1d(y), phi, est_cfg)
        est = estimate_survey(comps, frame.strata, est_cfg)
        totals[b] = est.total
        parts["v1"][b] = est.v1
        parts["v2"][b] = est.v2
        parts["v3"][b] = est.v3
        parts["u1"][b] = est.u1
        parts["u2"][b] = est.u2
        parts["u3"][b] = est.u3
        parts["v3stage"][b] = est.v3stage
        for name in names:
            se = est.strata[name]
            stratum_totals[name][b] = se.total
            sp = stratum_parts[name]
            sp["v1"][b] = se.v1
            sp["v2"][b] = se.v2
            sp["v3"][b] = se.v3
            sp["u1"][b] = se.u1
            sp["u2"][b] = se.u2
            sp["u3"][b] = se.u3
        if b == 0:
            first_diag["n_pooled"] = est.n_pooled
            first_diag["n_pooled_no_peers"] = est.n_pooled_no_peers

    workers = resolve_threads(config.threads)
    if workers == 1:
        for b in range(b_total):
            one_iteration(b)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one_iteration, range(b_total)))

    tau_kgh = float(totals.mean())
    vm_kgh2 = float(totals.var(ddof=1))
    pop_parts = {
        "v1": float(parts["v1"].mean()),
        "v2": float(parts["v2"].mean()),
        "v3": float(parts["v3"].mean()),
        "vm": vm_kgh2,
        "u1": float(parts["u1"].mean()),
        "u2": float(parts["u2"].mean()),
        "u3": float(parts["u3"].mean()),
        "v3stage": float(parts["v3stage"].mean()),
    }
    rows = []
    for name in names:
        sp = stratum_parts[name]
        rows.append({
            "name": name,
            "total": float(stratum_totals[name].mean()),
            "v1": float(sp["v1"].mean()),
            "v2": float(sp["v2"].mean()),
            "v3": float(sp["v3"].mean()),
            "vm": float(stratum_totals[name].var(ddof=1)),
            "u1": float(sp["u1"].mean()),
            "u2": float(sp["u2"].mean()),
            "u3": float(sp["u3"].mean()),
        })
    echo = est_cfg.as_dict()
    echo["measurement_mode"] = "mc"
    echo["mc"] = config.as_dict()
    diagnostics = {
        "n_pooled_components": first_diag.get("n_pooled", 0),
        "n_pooled_without_peers": first_diag.get("n_pooled_no_peers", 0),
        "phi_floor_hits": int(floor_hits.sum()),
    }
    report = reporting.assemble_report(
        tau_kgh, pop_parts, rows, echo, est_cfg.ci_level, diagnostics
    )
    result = McResult(report=report, config=config)
    if config.trace:
        scale = reporting.VAR_KG_H_PER_KT_Y
        result.iteration_totals = totals * reporting.KG_H_PER_KT_Y
        result.iteration_parts = {k: parts[k] * scale for k in ("v1", "v2", "v3")}
        result.stratum_design_var = {
            name: (stratum_parts[name]["v1"] + stratum_parts[name]["v2"]
                   + stratum_parts[name]["v3"]) * scale
            for name in names
        }
        result.stratum_design_var["Population"] = (
            parts["v1"] + parts["v2"] + parts["v3"]
        ) * scale
    return result


def convergence_trace(result: McResult) -> dict[str, np.ndarray]:
    """Cumulative mean of the design variance (stages I+II+III) versus b.

    Requires the run to have been made with tracing enabled.
    """
    if result.stratum_design_var is None:
        raise ValueError("convergence trace requires a run with trace=True")
    out = {}
    for name, series in result.stratum_design_var.items():
        out[name] = np.cumsum(series) / np.arange(1, len(series) + 1)
    return out


def write_trace_csv(result: McResult, path, manifest: dict | None = None):
    """Emit the per-stratum convergence series as CSV."""
    import csv

    trace = convergence_trace(result)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if manifest is not None:
            import json

            fh.write("# manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(["stratum", "b", "cum_var_design"])
        for name in trace:
            for b, v in enumerate(trace[name], start=1):
                w.writerow([name, b, repr(float(v))])


def bias_corrected_inventory(
    frame: SurveyFrame,
    config: EstimatorConfig,
    measurement: MeasurementModel = DEFAULT_MEASUREMENT,
) -> reporting.InventoryReport:
    """Single design pass on bias-corrected rates (no Monte Carlo).

    Every measured rate is multiplied by the model's bias factor and the
    detection probabilities are recomputed from the corrected rates; the
    measurement variance slot is zero by construction.
    """
    from .estimators import total_inventory

    det = detected_passes(frame)
    rates = bias_correct(np.array([p.measured_rate for p in det]), measurement)
    report = total_inventory(frame, config, rates=np.atleast_1d(rates))
    report.config["measurement_mode"] = "bias-correct"
    report.config["measurement"] = {
        "d": measurement.d, "alpha": measurement.alpha, "beta": measurement.beta,
    }
    return report


def estimate_inventory(
    frame: SurveyFrame,
    config: EstimatorConfig,
    measurement_mode: str = "bias-correct",
    mc: McConfig | None = None,
) -> reporting.InventoryReport:
    """One of the analysis variants: bias-correct or full measurement MC."""
    if measurement_mode == "bias-correct":
        model = mc.measurement if mc is not None else DEFAULT_MEASUREMENT
        return bias_corrected_inventory(frame, config, model)
    if measurement_mode == "mc":
        mc = mc or McConfig(estimator=config)
        if mc.estimator is not config:
            mc = McConfig(estimator=config, iterations=mc.iterations, seed=mc.seed,
                          measurement=mc.measurement, trace=mc.trace, threads=mc.threads)
        return run_mc(frame, mc).report
    raise ValueError(f"measurement_mode must be 'bias-correct' or 'mc', got {measurement_mode!r}")

#!/usr/bin/env python3
"""Compute and freeze the packaged-subset regression locks.

Runs the eight analysis variants (estimator x day-horizon treatment x
measurement treatment, Monte Carlo at its production iteration count with a
fixed seed) plus the diagnostics over the bundled subset, and writes the
results to tests/data/acceptance_locks.json.  The acceptance suite replays
the same runs and requires byte-level agreement up to floating-point noise.

Run this only to re-baseline after an intentional change, and inspect the
diff it produces.
"""

import json
import sys
import time
from pathlib import Path

from msinv.datasets import load_packaged_subset
from msinv.estimators import EstimatorConfig
from msinv.frame import validate
from msinv.measurement import McConfig, bias_corrected_inventory, run_mc
from msinv.planner import gamma_table

MC_ITERATIONS = 8000
MC_SEED = 1


def report_record(report):
    return {
        "total": report.total,
        "ci_lower": report.ci_lower,
        "ci_upper": report.ci_upper,
        "var_stage1": report.var_stage1,
        "var_stage2": report.var_stage2,
        "var_stage3": report.var_stage3,
        "var_measurement": report.var_measurement,
        "var_total": report.var_total,
        "var_design": report.var_design,
        "phi_floor_hits": report.diagnostics.get("phi_floor_hits", 0),
    }


def main(out_path):
    frame = load_packaged_subset()
    locks = {"mc_iterations": MC_ITERATIONS, "mc_seed": MC_SEED, "variants": {}}
    for est in ("ipw", "hajek"):
        for stage2 in ("observed", "year"):
            cfg = EstimatorConfig(estimator=est, stage2=stage2)
            t0 = time.perf_counter()
            bias = bias_corrected_inventory(frame, cfg)
            mc = run_mc(frame, McConfig(estimator=cfg, iterations=MC_ITERATIONS,
                                        seed=MC_SEED)).report
            locks["variants"][f"{est}_{stage2}_bias-correct"] = report_record(bias)
            locks["variants"][f"{est}_{stage2}_mc"] = report_record(mc)
            print(f"{est}/{stage2}: bias-correct {bias.total:.4f}, "
                  f"mc {mc.total:.4f} [{time.perf_counter() - t0:.0f}s]")
    diag = validate(frame)
    gamma = gamma_table(frame)
    locks["diagnostics"] = {
        "n_components": len(frame.components),
        "n_single_day": len(diag.single_day_components),
        "zero_detection_strata": list(diag.zero_detection_strata),
        "gamma_quartiles": [round(q, 2) for q in gamma.quartiles],
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(locks, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out_path}")


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "tests/data/acceptance_locks.json"
    main(sys.argv[1] if len(sys.argv) > 1 else default)

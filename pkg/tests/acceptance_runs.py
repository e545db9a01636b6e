"""Cached long-running experiments behind the acceptance tests.

Each replication (or faithful seed) is stored as JSON under a directory keyed
by the experiment settings and a hash of the numerical source files, so an
interrupted run resumes and any code change forces a recompute.

Run ``python3 tests/acceptance_runs.py c8 c4 c5`` to fill the cache ahead of
``pytest tests/test_acceptance.py``.
"""

import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

import tvb
from tvb import calibrate as cal
from tvb.gmm import GmmPrior
from tvb.harness import BmlrSimSpec, CoverageReport, GmmSimSpec, HarnessConfig, ReplicationResult, run_replication
from tvb.intervals import Functional

CACHE = Path(os.environ.get("TVB_CACHE_DIR", Path(__file__).resolve().parents[1] / ".tvb_cache"))
SOURCES = ("specfun.py", "gmm.py", "bmlr.py", "_kmeans.py", "_kernels.py", "intervals.py", "calibrate.py", "harness.py")

GRID50 = tuple(float(w) for w in cal.log_grid(1e-3, 1.0, 50))
C4_SPECS = [GmmSimSpec(N=1000, replications=200, seed=4), GmmSimSpec(N=2000, replications=200, seed=4)]
C5_SPEC = BmlrSimSpec(N=200, J=500, replications=200, seed=5)
HARNESS = HarnessConfig(B=100, grid=GRID50)
COVERAGE_METHODS = ("VB", "TVB-grid")
FAITHFUL_SEEDS = (0, 1, 2, 3, 4)


def code_hash():
    h = hashlib.sha256()
    root = Path(tvb.__file__).parent
    for name in SOURCES:
        h.update((root / name).read_bytes())
    return h.hexdigest()[:16]


def _key(*parts):
    text = json.dumps([repr(p) for p in parts] + [code_hash()], sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:20]


def _store(path, payload):
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True))
    tmp.replace(path)


def coverage_run(spec, methods=COVERAGE_METHODS, config=HARNESS, compute=True, log=None):
    """Coverage report over all replications, reading and filling the cache.

    With ``compute=False`` only cached replications are returned.
    """
    folder = CACHE / f"cov-{_key(spec, methods, config)}"
    folder.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(spec.replications):
        path = folder / f"rep{i:04d}.json"
        if path.exists():
            rows = json.loads(path.read_text())
        elif compute:
            t0 = time.perf_counter()
            rows = [asdict(r) for r in run_replication(spec, i, list(methods), config)]
            _store(path, rows)
            if log:
                log(f"{type(spec).__name__} n={rows[0]['n']} rep {i} {time.perf_counter() - t0:.1f}s")
        else:
            continue
        records.extend(ReplicationResult(**r) for r in rows)
    return CoverageReport(records)


def faithful_data():
    from tvb.cli_io import load_faithful

    return load_faithful()


def faithful_tvb(seed, m=500, B=200, shared_split=False, compute=True):
    """One grid-search TVB table on faithful, calibrated for pi, mu11 and mu22."""
    folder = CACHE / f"faithful-{_key(m, B, shared_split)}"
    folder.mkdir(parents=True, exist_ok=True)
    path = folder / f"seed{seed}.json"
    if path.exists():
        return json.loads(path.read_text())
    if not compute:
        return None
    X = faithful_data()
    config = cal.CalibrationConfig(
        model="gmm",
        K=2,
        alpha_level=0.05,
        B=B,
        seed=seed,
        prior=GmmPrior.default(X),
        shared_split=shared_split,
        keep_responsibilities=False,
    )
    t0 = time.perf_counter()
    table = cal.build_tvb_table(X, cal.log_grid(1e-3, 1.0, m), config)
    out = {"seconds": time.perf_counter() - t0}
    for name in ("pi", "mu11", "mu22"):
        res = cal.calibrate_grid(table, Functional.parse(name), 0.05)
        out[name] = {
            "omega": res.omega_hat,
            "lower": res.interval.lower,
            "upper": res.interval.upper,
            "curve": [c for _, c in res.coverage_curve],
        }
    _store(path, out)
    return out


def main(argv):
    log = lambda msg: print(msg, flush=True)  # noqa: E731
    for job in argv:
        if job == "c8":
            for s in FAITHFUL_SEEDS:
                r = faithful_tvb(s)
                log(f"faithful seed {s}: pi {r['pi']['lower']:.4f} {r['pi']['upper']:.4f} omega {r['pi']['omega']:.4f} mu11 omega {r['mu11']['omega']:.4f}")
        elif job == "c8shared":
            for s in FAITHFUL_SEEDS:
                r = faithful_tvb(s, shared_split=True)
                log(f"faithful shared seed {s}: pi {r['pi']['lower']:.4f} {r['pi']['upper']:.4f} omega {r['pi']['omega']:.4f} mu11 omega {r['mu11']['omega']:.4f}")
        elif job == "c4":
            for spec in C4_SPECS:
                print(coverage_run(spec, log=log).to_csv(), flush=True)
        elif job == "c5":
            print(coverage_run(C5_SPEC, log=log).to_csv(), flush=True)
        else:
            raise SystemExit(f"unknown job {job}")


if __name__ == "__main__":
    main(sys.argv[1:])

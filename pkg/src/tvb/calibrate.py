"""Choosing the likelihood power omega so credible intervals reach nominal coverage.

A "column" is the set of fits needed to score one omega: a full-data fit, a fit
on the first half of a random split and B fits on bootstrap resamples of the
second half. The bootstrap coverage is the fraction of bootstrap intervals that
contain h evaluated at the first-half posterior mean.

* ``calibrate_sequential`` moves eta = log(omega) by stochastic approximation,
  refitting a fresh column at each step.
* ``build_tvb_table`` fits one column per grid value once and keeps all
  variational hyperparameters; ``calibrate_grid`` then scores any functional
  from the stored fits without refitting.
* ``calibrate_gpc_fulldata`` is the sequential scheme without the split: the
  reference is the full-data fit and the bootstrap resamples the full data.

Randomness is derived from ``SeedSequence([seed, stream, k, b])`` so every fit
is reproducible on its own, whatever the worker layout.
"""

import io
import json
import time
import zipfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, bmlr, gmm
from .errors import DomainError, NumericError, SchemaError, TvbError
from .intervals import CredibleInterval, Functional, aligned_point_values, align_to, batch_bounds

TABLE_FORMAT = "tvb-table/1"

# seed streams
_FULL, _SPLIT, _SPLIT_INIT, _BOOT, _BOOT_INIT = 1, 2, 3, 4, 5

GMM_PARAMS = ("alpha", "beta", "m", "W", "nu")
BMLR_PARAMS = ("alpha", "a", "b", "m", "S")


def _seq(seed, *path):
    return np.random.SeedSequence([int(seed), *[int(v) for v in path]])


def _seed_path(seed):
    return tuple(int(v) for v in np.atleast_1d(seed))


def log_grid(lo=1e-3, hi=1.0, m=100):
    """``m`` values evenly spaced in log between ``lo`` and ``hi``, endpoints exact."""
    if not 0 < lo < hi <= 1 or m < 2:
        raise DomainError("need 0 < lo < hi <= 1 and m >= 2")
    g = np.exp(np.linspace(np.log(lo), np.log(hi), m))
    g[0], g[-1] = lo, hi
    return g


def parse_grid(text):
    """Parse "log:lo:hi:m" or "lin:lo:hi:m" or a comma-separated list."""
    parts = text.split(":")
    if parts[0] in ("log", "lin") and len(parts) == 4:
        lo, hi, m = float(parts[1]), float(parts[2]), int(parts[3])
        if parts[0] == "log":
            return log_grid(lo, hi, m)
        if not 0 < lo < hi <= 1 or m < 2:
            raise DomainError("need 0 < lo < hi <= 1 and m >= 2")
        return np.linspace(lo, hi, m)
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise DomainError(f"cannot parse grid {text!r}") from exc


def dictionary_size(N, p, K, B):
    """Scalar count of one table column: (B + 2)(N + p + p^2 + 3)K."""
    return (B + 2) * (N + p + p * p + 3) * K


# ---------------------------------------------------------------------------
# splitting and resampling


def split_indices(N, seed):
    if N < 2:
        raise DomainError("need at least two observations to split")
    perm = np.random.default_rng(_seq(*_seed_path(seed))).permutation(N)
    half = N // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def _take(data, idx):
    if isinstance(data, bmlr.BmlrDataset):
        return data.subset(idx)
    return np.asarray(data)[idx]


def _size(data):
    return len(data)


def split_sample(data, seed):
    """Random halves (X1, X2) with |X1| = floor(N/2)."""
    i1, i2 = split_indices(_size(data), seed)
    return _take(data, i1), _take(data, i2)


def bootstrap_indices(n, B, seed):
    """(B, n) resampling indices; row b depends only on (seed, b)."""
    if n < 1:
        raise DomainError("cannot resample an empty sample")
    path = _seed_path(seed)
    return np.stack([np.random.default_rng(_seq(*path, b)).integers(0, n, size=n) for b in range(B)])


def bootstrap_counts(n, B, seed):
    idx = bootstrap_indices(n, B, seed)
    return np.stack([np.bincount(row, minlength=n) for row in idx]).astype(float)


def bootstrap_resample(X2, B, seed):
    """B resamples of X2 drawn with replacement."""
    return [_take(X2, row) for row in bootstrap_indices(_size(X2), B, seed)]


# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class CalibrationConfig:
    """Settings shared by every calibration mode.

    ``prior`` defaults to ``GmmPrior.default`` on the full data for the GMM;
    the BMLR prior must be supplied because the noise precision is known
    only to the caller.
    """

    model: str = "gmm"
    K: int = 2
    alpha_level: float = 0.05
    B: int = 200
    seed: int = 0
    mode: str = "grid"
    functional: Functional | None = None
    prior: object = None
    shared_split: bool = False
    max_fail_frac: float = 0.1
    tol: float = gmm.DEFAULT_TOL
    max_iter: int = gmm.DEFAULT_MAX_ITER
    strict_paper_eq13: bool = True
    keep_responsibilities: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.model not in ("gmm", "bmlr"):
            raise DomainError(f"unknown model {self.model!r}")
        if self.mode not in ("seq", "grid", "gpc"):
            raise DomainError(f"unknown mode {self.mode!r}")
        if not 0 < self.alpha_level < 1:
            raise DomainError("alpha_level must lie in (0, 1)")
        if self.B < 1:
            raise DomainError("B must be at least 1")
        if self.K < 1:
            raise DomainError("K must be at least 1")
        if not 0 <= self.max_fail_frac < 1:
            raise DomainError("max_fail_frac must lie in [0, 1)")
        if self.functional is not None and self.functional.model != self.model:
            raise DomainError(f"functional {self.functional.kind} does not apply to model {self.model}")
        if self.model == "bmlr" and self.prior is not None and not isinstance(self.prior, bmlr.BmlrPrior):
            raise DomainError("BMLR calibration needs a BmlrPrior")
        if self.model == "gmm" and self.prior is not None and not isinstance(self.prior, gmm.GmmPrior):
            raise DomainError("GMM calibration needs a GmmPrior")


@dataclass(frozen=True)
class SequentialConfig:
    """Step sizes kappa_k = c / (k + 1) on eta = log(omega), starting at eta0."""

    c: float = 1.0
    max_iter: int = 50
    eps: float = 0.005
    delta: float = 1e-3
    eta0: float = 0.0

    def __post_init__(self):
        if self.c <= 0:
            raise DomainError("step constant c must be positive")
        if self.max_iter < 0:
            raise DomainError("max_iter must be nonnegative")
        if not 0 < self.delta <= 1:
            raise DomainError("delta must lie in (0, 1]")

    def kappa(self, k):
        return self.c / (k + 1.0)


@dataclass
class CalibrationResult:
    omega_hat: float
    coverage_curve: list
    coverage_at_omega: float | None
    converged: bool
    iterations: int
    interval: CredibleInterval | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, timings=False):
        out = {
            "omega_hat": self.omega_hat,
            "coverage_at_omega": self.coverage_at_omega,
            "converged": self.converged,
            "iterations": self.iterations,
            "coverage_curve": [[float(w), float(c)] for w, c in self.coverage_curve],
            "interval": None,
            "diagnostics": {k: v for k, v in self.diagnostics.items() if timings or k != "wall_time"},
        }
        if self.interval is not None:
            iv = self.interval
            out["interval"] = {
                "lower": iv.lower,
                "upper": iv.upper,
                "level": iv.level,
                "omega": iv.omega,
                "functional": iv.functional.label(),
            }
        return out


# ---------------------------------------------------------------------------
# model adapters


@dataclass
class FitBlock:
    """Stacked fits: hyperparameter arrays with a leading member axis."""

    params: dict
    r: np.ndarray
    n_iter: np.ndarray
    converged: np.ndarray
    failed: np.ndarray
    errors: list

    def member(self, g):
        return {k: v[g] for k, v in self.params.items()}

    def stacked(self, mask=None):
        if mask is None:
            return self.params
        return {k: v[mask] for k, v in self.params.items()}


def _block_from_batch(batch, names, keep_r):
    return FitBlock(
        params={k: getattr(batch, k) for k in names},
        r=batch.r if keep_r else np.zeros((len(batch), 0, batch.alpha.shape[1])),
        n_iter=batch.n_iter,
        converged=batch.converged,
        failed=batch.failed,
        errors=list(batch.errors),
    )


class _Model:
    """Fits a weighted batch for either model with the run's settings."""

    def __init__(self, config, data):
        self.config = config
        if config.model == "gmm":
            X = np.asarray(data, dtype=float)
            if X.ndim != 2:
                raise DomainError("GMM data must be a 2-d array")
            self.prior = config.prior if config.prior is not None else gmm.GmmPrior.default(X)
            self.names = GMM_PARAMS
        else:
            if config.prior is None:
                raise DomainError("BMLR calibration needs a BmlrPrior with the noise precision")
            if not isinstance(data, bmlr.BmlrDataset):
                raise DomainError("BMLR data must be a BmlrDataset")
            self.prior = config.prior
            self.names = BMLR_PARAMS
            self._features = bmlr.ols_features(data)
        self.data = data

    def fit(self, idx, weights, omega, seeds):
        """Fit members on the units ``idx`` of the full data."""
        cfg = self.config
        init = gmm.InitSpec()
        if cfg.model == "gmm":
            X = np.asarray(self.data, dtype=float)[idx]
            r0 = gmm.initial_responsibilities(X, weights, cfg.K, init, seeds)
            batch = gmm.fit_batch(X, weights, cfg.K, self.prior, omega, r0, cfg.tol, cfg.max_iter, cfg.strict_paper_eq13)
        else:
            st = self.data.stats.take(idx)
            r0 = bmlr.initial_responsibilities(st, weights, cfg.K, init, seeds, features=self._features[idx])
            batch = bmlr.fit_batch(st, weights, cfg.K, self.prior, omega, r0, cfg.tol, cfg.max_iter)
        return _block_from_batch(batch, self.names, cfg.keep_responsibilities)


@dataclass
class Column:
    """All fits behind one omega value."""

    omega: float
    full: FitBlock
    ref: FitBlock  # first-half fit, or the full-data fit without a split
    boot: FitBlock
    split1: np.ndarray
    split2: np.ndarray


def _fit_column(model, omega, k, split=True):
    cfg = model.config
    N = _size(model.data)
    if cfg.K > N:
        raise DomainError(f"need N >= K, got N={N}, K={cfg.K}")
    everything = np.arange(N)
    full = model.fit(everything, np.ones((1, N)), omega, [_seq(cfg.seed, _FULL, k)])
    if full.failed[0]:
        raise NumericError(f"full-data fit failed at omega={omega}: {full.errors[0]}")
    if split:
        path = (cfg.seed, _SPLIT) if cfg.shared_split else (cfg.seed, _SPLIT, k)
        i1, i2 = split_indices(N, path)
        if len(i1) < cfg.K:
            raise DomainError("first half has fewer points than clusters")
        ref = model.fit(i1, np.ones((1, len(i1))), omega, [_seq(cfg.seed, _SPLIT_INIT, k)])
        if ref.failed[0]:
            raise NumericError(f"split-1 fit failed at omega={omega}: {ref.errors[0]}")
    else:
        i1, i2 = everything, everything
        ref = full
    counts = bootstrap_counts(len(i2), cfg.B, (cfg.seed, _BOOT, k))
    seeds = [_seq(cfg.seed, _BOOT_INIT, k, b) for b in range(cfg.B)]
    boot = model.fit(i2, counts, omega, seeds)
    n_fail = int(boot.failed.sum())
    if n_fail > cfg.max_fail_frac * cfg.B:
        raise NumericError(f"{n_fail} of {cfg.B} bootstrap fits failed at omega={omega}")
    return Column(float(omega), full, ref, boot, i1, i2)


def _column_job(args):
    config, data, omega, k = args
    return _fit_column(_Model(config, data), omega, k)


def column_coverage(full, ref, boot, functional, alpha_level):
    """Bootstrap coverage of h(reference posterior mean).

    Mean functionals align the reference clusters to the full-data fit and
    every bootstrap fit to the aligned reference.
    """
    ref_params = {k: v[:1] for k, v in ref.params.items()}
    ref_means = None
    if functional.needs_alignment:
        order = align_to(ref_params["m"], full.params["m"][0])
        ref_params = {k: np.take_along_axis(v, order.reshape(order.shape + (1,) * (v.ndim - 2)), axis=1) for k, v in ref_params.items()}
        ref_means = ref_params["m"][0]
    h = float(aligned_point_values(functional, ref_params)[0])
    ok = ~boot.failed
    if not ok.any():
        raise NumericError("every bootstrap fit failed")
    lo, hi = batch_bounds(functional, boot.stacked(ok), alpha_level, ref_means)
    covered = (lo <= h) & (h <= hi)
    return float(covered.mean()), h, int(ok.sum())


def _final_interval(full, functional, alpha_level, omega):
    lo, hi = batch_bounds(functional, {k: v[:1] for k, v in full.params.items()}, alpha_level)
    return CredibleInterval(float(lo[0]), float(hi[0]), alpha_level, functional, float(omega))


def _require_functional(config, functional=None):
    f = functional if functional is not None else config.functional
    if f is None:
        raise DomainError("a target functional is required")
    if f.model != config.model:
        raise DomainError(f"functional {f.kind} does not apply to model {config.model}")
    return f


def bootstrap_coverage(omega, X1, X2, config, functional=None, k=0):
    """Bootstrap coverage at ``omega`` for a given split (X1, X2)."""
    f = _require_functional(config, functional)
    if isinstance(X1, bmlr.BmlrDataset):
        data = bmlr.BmlrDataset(X1.responses + X2.responses, X1.designs + X2.designs)
    else:
        data = np.vstack([np.asarray(X1), np.asarray(X2)])
    model = _Model(config, data)
    n1 = _size(X1)
    i1 = np.arange(n1)
    i2 = np.arange(n1, _size(data))
    ref = model.fit(i1, np.ones((1, n1)), omega, [_seq(config.seed, _SPLIT_INIT, k)])
    if ref.failed[0]:
        raise NumericError(f"split-1 fit failed: {ref.errors[0]}")
    counts = bootstrap_counts(len(i2), config.B, (config.seed, _BOOT, k))
    boot = model.fit(i2, counts, omega, [_seq(config.seed, _BOOT_INIT, k, b) for b in range(config.B)])
    if boot.failed.sum() > config.max_fail_frac * config.B:
        raise NumericError("too many bootstrap fits failed")
    return column_coverage(ref, ref, boot, f, config.alpha_level)[0]


# ---------------------------------------------------------------------------
# sequential and full-data modes


def _stochastic_search(data, config, seq_config, split):
    f = _require_functional(config)
    seq_config = SequentialConfig() if seq_config is None else seq_config
    t0 = time.perf_counter()
    model = _Model(config, data)
    target = 1.0 - config.alpha_level
    eta = seq_config.eta0
    curve = []
    cov = None
    converged = False
    n_failed = 0
    k = 0
    for k in range(seq_config.max_iter):
        omega = float(np.clip(np.exp(eta), seq_config.delta, 1.0))
        col = _fit_column(model, omega, k, split=split)
        n_failed += int(col.boot.failed.sum())
        cov, _, _ = column_coverage(col.full, col.ref, col.boot, f, config.alpha_level)
        curve.append((omega, cov))
        if cov > target or target - cov < seq_config.eps:
            converged = True
            break
        eta = eta + seq_config.kappa(k) * (cov - target)
        eta = float(np.clip(eta, np.log(seq_config.delta), 0.0))
    iterations = len(curve)
    omega_hat = float(np.clip(np.exp(eta), seq_config.delta, 1.0))
    if not converged:
        cov = None
    full = model.fit(np.arange(_size(data)), np.ones((1, _size(data))), omega_hat, [_seq(config.seed, _FULL, iterations)])
    if full.failed[0]:
        raise NumericError(f"full-data fit failed at omega={omega_hat}: {full.errors[0]}")
    return CalibrationResult(
        omega_hat=omega_hat,
        coverage_curve=curve,
        coverage_at_omega=cov,
        converged=converged,
        iterations=iterations,
        interval=_final_interval(full, f, config.alpha_level, omega_hat),
        diagnostics={"failed_bootstrap_fits": n_failed, "wall_time": time.perf_counter() - t0},
    )


def calibrate_sequential(data, config, seq_config=None):
    """Stochastic-approximation search on eta = log(omega) with sample splitting.

    Each iteration draws a fresh split, fits the first half and B bootstrap
    resamples of the second half at the current omega, and stops once the
    coverage reaches ``1 - alpha`` or falls short by less than ``eps``.
    With ``max_iter = 0`` no search is run and omega = 1 is returned flagged
    as not converged.
    """
    return _stochastic_search(data, config, seq_config, split=True)


def calibrate_gpc_fulldata(data, config, seq_config=None):
    """The sequential search scored on the full data, without a split."""
    return _stochastic_search(data, config, seq_config, split=False)


# ---------------------------------------------------------------------------
# grid mode


class TvbTable:
    """Fits for every grid value, stored so any functional can be scored later.

    Column arrays are stacked along a leading grid axis: ``full`` and ``ref``
    blocks have one member per column, ``boot`` blocks have B.
    """

    def __init__(self, omegas, full, ref, boot, split1, split2, meta):
        self.omegas = np.asarray(omegas, dtype=float)
        self.full = full
        self.ref = ref
        self.boot = boot
        self.split1 = split1
        self.split2 = split2
        self.meta = meta

    @property
    def m(self):
        return self.omegas.shape[0]

    @property
    def model(self):
        return self.meta["model"]

    def column(self, k):
        def pick(block):
            return FitBlock(
                params={n: v[k] for n, v in block.params.items()},
                r=block.r[k],
                n_iter=block.n_iter[k],
                converged=block.converged[k],
                failed=block.failed[k],
                errors=[],
            )

        return Column(float(self.omegas[k]), pick(self.full), pick(self.ref), pick(self.boot), self.split1[k], self.split2[k])

    def scalar_count(self):
        """Stored hyperparameter scalars per column (responsibilities included)."""
        total = 0
        for block in (self.full, self.ref, self.boot):
            total += sum(v[0].size for v in block.params.values()) + block.r[0].size
        return total

    # -- serialisation ------------------------------------------------------

    def _arrays(self):
        out = {"omegas": self.omegas, "split1": self.split1, "split2": self.split2}
        for tag, block in (("full", self.full), ("ref", self.ref), ("boot", self.boot)):
            for n, v in block.params.items():
                out[f"{tag}.{n}"] = v
            out[f"{tag}.r"] = block.r
            out[f"{tag}.n_iter"] = block.n_iter
            out[f"{tag}.converged"] = block.converged
            out[f"{tag}.failed"] = block.failed
        return out

    def save(self, path):
        """Write an npz archive with a JSON header; byte-identical for equal tables."""
        header = json.dumps(self.meta, sort_keys=True).encode()
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
            zf.writestr(zipfile.ZipInfo("header.json", date_time=(1980, 1, 1, 0, 0, 0)), header)
            for name, arr in sorted(self._arrays().items()):
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())

    @classmethod
    def load(cls, path):
        try:
            with zipfile.ZipFile(path) as zf:
                meta = json.loads(zf.read("header.json"))
                arrays = {}
                for name in zf.namelist():
                    if name.endswith(".npy"):
                        arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
        except (zipfile.BadZipFile, KeyError, ValueError) as exc:
            raise SchemaError(f"not a TVB table: {exc}") from exc
        if meta.get("format") != TABLE_FORMAT:
            raise SchemaError(f"unsupported table format {meta.get('format')!r}")
        names = GMM_PARAMS if meta["model"] == "gmm" else BMLR_PARAMS

        def block(tag):
            return FitBlock(
                params={n: arrays[f"{tag}.{n}"] for n in names},
                r=arrays[f"{tag}.r"],
                n_iter=arrays[f"{tag}.n_iter"],
                converged=arrays[f"{tag}.converged"],
                failed=arrays[f"{tag}.failed"],
                errors=[],
            )

        return cls(arrays["omegas"], block("full"), block("ref"), block("boot"), arrays["split1"], arrays["split2"], meta)


def _stack_blocks(blocks):
    return FitBlock(
        params={n: np.stack([b.params[n] for b in blocks]) for n in blocks[0].params},
        r=np.stack([b.r for b in blocks]),
        n_iter=np.stack([b.n_iter for b in blocks]),
        converged=np.stack([b.converged for b in blocks]),
        failed=np.stack([b.failed for b in blocks]),
        errors=[],
    )


def _prior_meta(prior):
    d = asdict(prior)
    return {k: np.asarray(v).tolist() for k, v in d.items()}


def build_tvb_table(data, omegas, config):
    """Fit every grid column once; no functional is consulted."""
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim != 1 or omegas.size < 1:
        raise DomainError("grid must be a nonempty 1-d array")
    if np.any(omegas <= 0) or np.any(omegas > 1) or np.any(np.diff(omegas) <= 0):
        raise DomainError("grid must be strictly increasing inside (0, 1]")
    model = _Model(config, data)
    jobs = [(config, data, float(w), k) for k, w in enumerate(omegas)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            cols = list(ex.map(_column_job, jobs))
    else:
        cols = [_fit_column(model, w, k) for _, _, w, k in jobs]
    N = _size(data)
    p = data.p if isinstance(data, bmlr.BmlrDataset) else np.asarray(data).shape[1]
    meta = {
        "format": TABLE_FORMAT,
        "version": __version__,
        "model": config.model,
        "N": int(N),
        "p": int(p),
        "K": int(config.K),
        "B": int(config.B),
        "seed": int(config.seed),
        "shared_split": bool(config.shared_split),
        "strict_paper_eq13": bool(config.strict_paper_eq13),
        "tol": config.tol,
        "max_iter": int(config.max_iter),
        "prior": _prior_meta(model.prior),
        "failed_bootstrap_fits": [int(c.boot.failed.sum()) for c in cols],
    }
    return TvbTable(
        omegas,
        _stack_blocks([c.full for c in cols]),
        _stack_blocks([c.ref for c in cols]),
        _stack_blocks([c.boot for c in cols]),
        np.stack([c.split1 for c in cols]),
        np.stack([c.split2 for c in cols]),
        meta,
    )


def coverage_curve(table, functional, alpha_level):
    """Bootstrap coverage at every grid value of ``table``."""
    if functional.model != table.model:
        raise DomainError(f"functional {functional.kind} does not apply to a {table.model} table")
    functional.check(table.meta["K"], table.meta["p"])
    return np.array([column_coverage(*_column_blocks(table, k), functional, alpha_level)[0] for k in range(table.m)])


def _column_blocks(table, k):
    col = table.column(k)
    return col.full, col.ref, col.boot


def select_omega(omegas, coverage, alpha_level):
    """Index minimising |coverage - (1 - alpha)|; ties go to the larger omega."""
    gap = np.abs(np.asarray(coverage) - (1.0 - alpha_level))
    best = gap.min()
    return int(np.flatnonzero(gap == best)[-1])


def calibrate_grid(table, functional, alpha_level=0.05):
    """Pick omega from a prebuilt table; performs no model fits."""
    t0 = time.perf_counter()
    cov = coverage_curve(table, functional, alpha_level)
    k = select_omega(table.omegas, cov, alpha_level)
    col = table.column(k)
    return CalibrationResult(
        omega_hat=float(table.omegas[k]),
        coverage_curve=list(zip(table.omegas.tolist(), cov.tolist())),
        coverage_at_omega=float(cov[k]),
        converged=True,
        iterations=0,
        interval=_final_interval(col.full, functional, alpha_level, table.omegas[k]),
        diagnostics={"grid_index": k, "wall_time": time.perf_counter() - t0},
    )


def calibrate(data, config, grid=None, seq_config=None):
    """Run the mode named in ``config``; grid mode builds a table first."""
    if config.mode == "grid":
        table = build_tvb_table(data, log_grid() if grid is None else grid, config)
        return calibrate_grid(table, _require_functional(config), config.alpha_level)
    if config.mode == "seq":
        return calibrate_sequential(data, config, seq_config)
    return calibrate_gpc_fulldata(data, config, seq_config)


__all__ = [
    "CalibrationConfig",
    "CalibrationResult",
    "SequentialConfig",
    "TvbError",
    "TvbTable",
    "bootstrap_coverage",
    "bootstrap_resample",
    "build_tvb_table",
    "calibrate",
    "calibrate_gpc_fulldata",
    "calibrate_grid",
    "calibrate_sequential",
    "dictionary_size",
    "log_grid",
    "split_sample",
]

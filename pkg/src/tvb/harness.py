"""Simulation designs and Monte-Carlo coverage experiments."""

from dataclasses import dataclass

import numpy as np

from .bmlr import BmlrDataset
from .errors import DomainError


def _rng(seed, *path):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(v) for v in path]]))


@dataclass(frozen=True)
class GmmSimSpec:
    """Two-component bivariate Gaussian mixture."""

    N: int = 1000
    K: int = 2
    p: int = 2
    mu1: tuple = (0.0, 0.0)
    mu2: tuple = (2.0, 2.0)
    Sigma: tuple = ((1.0, 0.0), (0.0, 1.0))
    pi: float = 0.65
    replications: int = 200
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise DomainError("pi must lie in [0, 1]")
        if self.K != 2:
            raise DomainError("the GMM design has K = 2")
        if self.N < 2:
            raise DomainError("N must be at least 2")
        S = np.asarray(self.Sigma, dtype=float)
        if S.shape != (self.p, self.p) or np.linalg.eigvalsh(S).min() <= 0:
            raise DomainError("Sigma must be a p x p positive definite matrix")
        if len(self.mu1) != self.p or len(self.mu2) != self.p:
            raise DomainError("means must have length p")


@dataclass(frozen=True)
class BmlrSimSpec:
    """Mixture of two linear regressions with noise set by a signal-to-noise ratio.

    ``snr_norm_convention`` chooses how the noise vector is scaled:
    "as_printed" uses ||X b||^2 / SNR * e / ||e||^2, "unsquared" uses
    ||X b|| / SNR * e / ||e||.
    """

    N: int = 500
    J: int = 1000
    K: int = 2
    p: int = 2
    pi: float = 0.65
    tau: tuple = (1.0, 1.0)
    snr: float = 0.1
    replications: int = 200
    seed: int = 0
    snr_norm_convention: str = "as_printed"

    def __post_init__(self):
        if not self.snr > 0:
            raise DomainError("SNR must be positive")
        if not 0.0 <= self.pi <= 1.0:
            raise DomainError("pi must lie in [0, 1]")
        if self.K != 2 or len(self.tau) != 2:
            raise DomainError("the BMLR design has K = 2")
        if self.N < 2 or self.J < 1:
            raise DomainError("need N >= 2 and J >= 1")
        if self.snr_norm_convention not in ("as_printed", "unsquared"):
            raise DomainError(f"unknown snr_norm_convention {self.snr_norm_convention!r}")


@dataclass
class GmmSample:
    X: np.ndarray
    z: np.ndarray  # 0 for the first component, 1 for the second


@dataclass
class BmlrSample:
    dataset: BmlrDataset
    z: np.ndarray
    beta: np.ndarray  # (K, p) coefficients drawn for this replication
    noise: list  # realised noise vector of every unit
    lam: float  # 1 / pooled realised noise variance

    @property
    def true_sum(self):
        return float(self.beta.sum())


def gen_gmm(spec, index):
    """Replication ``index`` of the GMM design; deterministic in (seed, index)."""
    rng = _rng(spec.seed, index)
    z = (rng.uniform(size=spec.N) >= spec.pi).astype(int)
    L = np.linalg.cholesky(np.asarray(spec.Sigma, dtype=float))
    mu = np.array([spec.mu1, spec.mu2], dtype=float)
    X = mu[z] + rng.standard_normal((spec.N, spec.p)) @ L.T
    return GmmSample(X, z)


def noise_scale(signal, eps, snr, convention="as_printed"):
    """Scale a noise direction ``eps`` against ``signal`` per the SNR rule."""
    if convention == "as_printed":
        return (signal @ signal) / snr * eps / (eps @ eps)
    return np.sqrt(signal @ signal) / snr * eps / np.sqrt(eps @ eps)


def gen_bmlr(spec, index):
    """Replication ``index`` of the BMLR design.

    Coefficients and one standard-normal noise vector per cluster are drawn
    once per replication; unit i in cluster k gets noise scaled by
    ||X_i beta_k|| as the SNR rule prescribes.
    """
    rng = _rng(spec.seed, index)
    tau = np.asarray(spec.tau, dtype=float)
    beta = rng.standard_normal((spec.K, spec.p)) / np.sqrt(tau)[:, None]
    eps = rng.standard_normal((spec.K, spec.J))
    for k in range(spec.K):
        while eps[k] @ eps[k] == 0.0:
            eps[k] = rng.standard_normal(spec.J)
    z = (rng.uniform(size=spec.N) >= spec.pi).astype(int)
    ys, Xs, noise = [], [], []
    for i in range(spec.N):
        X = rng.standard_normal((spec.J, spec.p))
        signal = X @ beta[z[i]]
        e = noise_scale(signal, eps[z[i]], spec.snr, spec.snr_norm_convention)
        ys.append(signal + e)
        Xs.append(X)
        noise.append(e)
    total = sum(e @ e for e in noise)
    lam = spec.N * spec.J / total
    return BmlrSample(BmlrDataset(ys, Xs), z, beta, noise, float(lam))


# ---------------------------------------------------------------------------
# coverage experiments

METHODS = ("VB", "TVB-seq", "TVB-grid", "GPC")
REPORT_COLUMNS = (
    "method",
    "n",
    "coverage",
    "coverage_ci_lo",
    "coverage_ci_hi",
    "mean_length",
    "omega_mean",
    "omega_q25",
    "omega_q75",
)


@dataclass(frozen=True)
class HarnessConfig:
    """Calibration settings applied in every replication."""

    B: int = 100
    grid: tuple = tuple(np.exp(np.linspace(np.log(1e-3), 0.0, 50)))
    alpha_level: float = 0.05
    seq_max_iter: int = 50
    seq_c: float = 1.0
    seq_eps: float = 0.005
    tol: float = 1e-8
    max_iter: int = 500
    strict_paper_eq13: bool = True
    shared_split: bool = False


@dataclass
class ReplicationResult:
    method: str
    index: int
    n: int
    truth: float
    lower: float = float("nan")
    upper: float = float("nan")
    omega: float = float("nan")
    error: str | None = None

    @property
    def covered(self):
        return self.error is None and self.lower <= self.truth <= self.upper

    @property
    def length(self):
        return self.upper - self.lower


def _method_seed(spec, index, method):
    ss = np.random.SeedSequence([int(spec.seed), int(index), METHODS.index(method) if method in METHODS else 99])
    return int(ss.generate_state(1)[0])


def _problem(spec, index):
    """Data, model name, functional, prior and true value for one replication."""
    from .bmlr import BmlrPrior
    from .gmm import GmmPrior
    from .intervals import Functional

    if isinstance(spec, GmmSimSpec):
        sample = gen_gmm(spec, index)
        truth = max(spec.pi, 1.0 - spec.pi)
        return sample.X, "gmm", Functional("gmm_pi_max"), GmmPrior.default(sample.X), truth, spec.N
    if isinstance(spec, BmlrSimSpec):
        sample = gen_bmlr(spec, index)
        return sample.dataset, "bmlr", Functional("bmlr_beta_sum"), BmlrPrior.default(sample.lam), sample.true_sum, spec.J
    raise DomainError("unknown simulation spec")


def run_replication(spec, index, methods, config=None):
    """Run each method on replication ``index`` and test containment of the truth.

    ``methods`` holds built-in names or callables ``f(data, index) ->
    (lower, upper, omega)``. Failures are recorded per method, never raised.
    """
    from . import calibrate as cal
    from .bmlr import bmlr_fit
    from .gmm import gmm_fit
    from .intervals import interval_for

    config = HarnessConfig() if config is None else config
    data, model, functional, prior, truth, n = _problem(spec, index)
    out = []
    for method in methods:
        name = method if isinstance(method, str) else getattr(method, "__name__", "custom")
        res = ReplicationResult(name, int(index), int(n), float(truth))
        try:
            if callable(method):
                lo, hi, om = method(data, index)
            elif method == "VB":
                seed = _method_seed(spec, index, method)
                if model == "gmm":
                    post = gmm_fit(data, 2, prior, 1.0, tol=config.tol, max_iter=config.max_iter, seed=seed, strict_paper_eq13=config.strict_paper_eq13)
                else:
                    post = bmlr_fit(data, 2, prior, 1.0, tol=config.tol, max_iter=config.max_iter, seed=seed)
                iv = interval_for(functional, post, config.alpha_level)
                lo, hi, om = iv.lower, iv.upper, 1.0
            elif method in METHODS:
                ccfg = cal.CalibrationConfig(
                    model=model,
                    K=2,
                    alpha_level=config.alpha_level,
                    B=config.B,
                    seed=_method_seed(spec, index, method),
                    functional=functional,
                    prior=prior,
                    shared_split=config.shared_split,
                    tol=config.tol,
                    max_iter=config.max_iter,
                    strict_paper_eq13=config.strict_paper_eq13,
                    keep_responsibilities=False,
                )
                scfg = cal.SequentialConfig(c=config.seq_c, max_iter=config.seq_max_iter, eps=config.seq_eps)
                if method == "TVB-grid":
                    table = cal.build_tvb_table(data, np.asarray(config.grid), ccfg)
                    result = cal.calibrate_grid(table, functional, config.alpha_level)
                elif method == "TVB-seq":
                    result = cal.calibrate_sequential(data, ccfg, scfg)
                else:
                    result = cal.calibrate_gpc_fulldata(data, ccfg, scfg)
                lo, hi, om = result.interval.lower, result.interval.upper, result.omega_hat
            else:
                raise DomainError(f"unknown method {method!r}")
            res.lower, res.upper, res.omega = float(lo), float(hi), float(om)
        except Exception as exc:  # recorded, never fatal
            res.error = f"{type(exc).__name__}: {exc}"
        out.append(res)
    return out


def binomial_ci(successes, trials, level=0.95):
    """Normal-approximation interval with continuity correction, clipped to [0, 1]."""
    from .specfun import normal_quantile

    if trials <= 0:
        return float("nan"), float("nan")
    phat = successes / trials
    z = normal_quantile(0.5 + 0.5 * level)
    half = z * np.sqrt(phat * (1.0 - phat) / trials) + 0.5 / trials
    return float(max(0.0, phat - half)), float(min(1.0, phat + half))


class CoverageReport:
    """Per-replication records plus one summary row per (method, n)."""

    def __init__(self, records):
        self.records = list(records)

    def summary(self):
        rows = []
        keys = []
        for r in self.records:
            if (r.method, r.n) not in keys:
                keys.append((r.method, r.n))
        for method, n in keys:
            recs = [r for r in self.records if r.method == method and r.n == n]
            ok = [r for r in recs if r.error is None]
            hits = sum(r.covered for r in ok)
            lo, hi = binomial_ci(hits, len(ok))
            omegas = np.array([r.omega for r in ok]) if ok else np.array([np.nan])
            lengths = np.array([r.length for r in ok]) if ok else np.array([np.nan])
            rows.append(
                {
                    "method": method,
                    "n": n,
                    "coverage": hits / len(ok) if ok else float("nan"),
                    "coverage_ci_lo": lo,
                    "coverage_ci_hi": hi,
                    "mean_length": float(lengths.mean()),
                    "omega_mean": float(omegas.mean()),
                    "omega_q25": float(np.quantile(omegas, 0.25)),
                    "omega_q75": float(np.quantile(omegas, 0.75)),
                    "replications": len(recs),
                    "failures": len(recs) - len(ok),
                }
            )
        return rows

    def row(self, method, n=None):
        for r in self.summary():
            if r["method"] == method and (n is None or r["n"] == n):
                return r
        raise KeyError(method)

    def to_csv(self, sep=","):
        lines = [sep.join(REPORT_COLUMNS)]
        for row in self.summary():
            lines.append(sep.join(_fmt(row[c]) for c in REPORT_COLUMNS))
        return "\n".join(lines) + "\n"

    def records_csv(self, sep=","):
        cols = ("method", "index", "n", "truth", "lower", "upper", "omega", "covered", "error")
        lines = [sep.join(cols)]
        for r in self.records:
            vals = (r.method, r.index, r.n, r.truth, r.lower, r.upper, r.omega, int(r.covered), r.error or "")
            lines.append(sep.join(_fmt(v) for v in vals))
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v).replace(",", ";")


def run_coverage_experiment(spec, methods, config=None, workers=1, indices=None):
    """Replicate ``spec`` and tabulate interval coverage of the true value.

    Parameters
    ----------
    spec : GmmSimSpec or BmlrSimSpec
    methods : sequence
        Names from ``METHODS`` or callables (see ``run_replication``).
    config : HarnessConfig, optional
    workers : int
        Replications run in this many processes.
    indices : sequence of int, optional
        Defaults to ``range(spec.replications)``.
    """
    for m in methods:
        if isinstance(m, str) and m not in METHODS:
            raise DomainError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    indices = range(spec.replications) if indices is None else indices
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run_replication, *zip(*[(spec, i, methods, config) for i in indices])))
    else:
        parts = [run_replication(spec, i, methods, config) for i in indices]
    return CoverageReport([r for part in parts for r in part])

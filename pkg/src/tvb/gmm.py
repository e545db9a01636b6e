"""Fractional mean-field variational Bayes for the Gaussian mixture model.

The likelihood is raised to the power ``omega`` in (0, 1]. Coordinate ascent
alternates between the responsibilities and the Dirichlet / Gaussian-Wishart
factors. ``omega = 1`` is ordinary mean-field VB.

The core routine fits a batch of G problems that share the same points but
carry different nonnegative point weights. A bootstrap replicate is then just a
vector of resampling counts, so all replicates of one resample run together.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, _kmeans
from ._instrument import record_fits
from .errors import DomainError, NumericError
from .specfun import _digamma_unchecked as digamma
from .specfun import _ln_gamma_unchecked as ln_gamma

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
EMPTY_CLUSTER = 1e-10
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500

ELBO_TERMS = (
    "E[log p(X|Z,mu,Lambda)]",
    "E[log p(Z|pi)]",
    "E[log p(pi)]",
    "E[log p(mu,Lambda)]",
    "E[log q(Z)]",
    "E[log q(pi)]",
    "E[log q(mu,Lambda)]",
)


@dataclass(frozen=True)
class GmmPrior:
    """Dirichlet and Gaussian-Wishart hyperparameters shared by all clusters."""

    alpha0: float
    m0: np.ndarray
    beta0: float
    W0: np.ndarray
    nu0: float

    def __post_init__(self):
        m0 = np.atleast_1d(np.asarray(self.m0, dtype=float))
        W0 = np.atleast_2d(np.asarray(self.W0, dtype=float))
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "W0", W0)
        p = m0.shape[0]
        if self.alpha0 <= 0 or self.beta0 <= 0:
            raise DomainError("alpha0 and beta0 must be positive")
        if W0.shape != (p, p):
            raise DomainError(f"W0 must be {p}x{p}, got {W0.shape}")
        if not np.allclose(W0, W0.T):
            raise DomainError("W0 must be symmetric")
        if np.linalg.eigvalsh(W0).min() <= 0:
            raise DomainError("W0 must be positive definite")
        if not self.nu0 > p - 1:
            raise DomainError("nu0 must exceed p - 1")

    @property
    def p(self):
        return self.m0.shape[0]

    @classmethod
    def default(cls, data):
        """alpha0=1, m0=sample mean, beta0=1, W0=I, nu0=p."""
        data = np.asarray(data, dtype=float)
        p = data.shape[1]
        return cls(alpha0=1.0, m0=data.mean(axis=0), beta0=1.0, W0=np.eye(p), nu0=float(p))


@dataclass(frozen=True)
class InitSpec:
    """How to start the responsibilities.

    ``method`` is "kmeans++" (hard k-means++ labels softened to ``hit``),
    "random" (uniform random rows) or "given" (use ``responsibilities``).
    """

    method: str = "kmeans++"
    hit: float = 0.9
    responsibilities: np.ndarray | None = None

    def __post_init__(self):
        if self.method not in ("kmeans++", "random", "given"):
            raise DomainError(f"unknown init method {self.method!r}")
        if self.method == "given" and self.responsibilities is None:
            raise DomainError("init method 'given' needs responsibilities")
        if not 0.0 < self.hit <= 1.0:
            raise DomainError("hit must lie in (0, 1]")


@dataclass
class GmmPosterior:
    omega: float
    r: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    m: np.ndarray
    W: np.ndarray
    nu: np.ndarray
    elbo_trace: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    @property
    def K(self):
        return self.alpha.shape[0]

    @property
    def p(self):
        return self.m.shape[1]

    def permuted(self, order):
        """Copy with clusters relabelled so new cluster j is old ``order[j]``."""
        order = np.asarray(order)
        return GmmPosterior(
            omega=self.omega,
            r=self.r[:, order],
            alpha=self.alpha[order],
            beta=self.beta[order],
            m=self.m[order],
            W=self.W[order],
            nu=self.nu[order],
            elbo_trace=list(self.elbo_trace),
            n_iter=self.n_iter,
            converged=self.converged,
        )


# ---------------------------------------------------------------------------
# expectations and ELBO pieces, batched over leading axes


def _log_wishart_norm(logdet_W, nu, p):
    """log B(W, nu) of the Wishart normaliser."""
    j = np.arange(1, p + 1)
    lg = ln_gamma(0.5 * (nu[..., None] + 1.0 - j)).sum(axis=-1)
    return -0.5 * nu * logdet_W - (0.5 * nu * p * np.log(2.0) + 0.25 * p * (p - 1) * np.log(np.pi) + lg)


def _expected_logdet(logdet_W, nu, p):
    j = np.arange(1, p + 1)
    return digamma(0.5 * (nu[..., None] + 1.0 - j)).sum(axis=-1) + p * np.log(2.0) + logdet_W


def _expected_log_pi(alpha):
    return digamma(alpha) - digamma(alpha.sum(axis=-1, keepdims=True))


def _ln_dirichlet_norm(alpha):
    return ln_gamma(alpha.sum(axis=-1)) - ln_gamma(alpha).sum(axis=-1)


def _invert_spd(Winv, members):
    """Batched inverse and log-determinant of SPD matrices.

    Returns W, log|W| and a boolean array flagging (member, cluster) pairs that
    are not positive definite.
    """
    Winv = 0.5 * (Winv + np.swapaxes(Winv, -1, -2))
    try:
        L = np.linalg.cholesky(Winv)
        bad = np.zeros(Winv.shape[:-2], dtype=bool)
    except np.linalg.LinAlgError:
        bad = np.linalg.eigvalsh(Winv)[..., 0] <= 0
        safe = np.where(bad[..., None, None], np.eye(Winv.shape[-1]), Winv)
        L = np.linalg.cholesky(safe)
    logdet_Winv = 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)
    W = np.linalg.inv(np.where(bad[..., None, None], np.eye(Winv.shape[-1]), Winv))
    W = 0.5 * (W + np.swapaxes(W, -1, -2))
    return W, -logdet_Winv, bad


@dataclass
class _Stats:
    Nk: np.ndarray  # (G, K)
    xbar: np.ndarray  # (G, K, p)
    S: np.ndarray  # (G, K, p, p)
    ent: np.ndarray  # (G,) sum_n w_n sum_k r log r


def _stats(Nk, sx, sxx, ent):
    """Cluster means and scatter matrices from raw weighted moments."""
    nonempty = Nk > EMPTY_CLUSTER
    safe = np.where(nonempty, Nk, 1.0)
    xbar = np.where(nonempty[..., None], sx / safe[..., None], 0.0)
    S = sxx / safe[..., None, None] - xbar[..., :, None] * xbar[..., None, :]
    S = np.where(nonempty[..., None, None], 0.5 * (S + np.swapaxes(S, -1, -2)), 0.0)
    return _Stats(Nk, xbar, S, ent)


@dataclass
class _Params:
    alpha: np.ndarray
    beta: np.ndarray
    m: np.ndarray
    W: np.ndarray
    nu: np.ndarray
    logdet_W: np.ndarray
    bad: np.ndarray


def _m_step(st, prior, m0, W0inv, omega, strict):
    """Dirichlet and Gaussian-Wishart updates given responsibilities.

    Coordinates are centred so the prior mean is ``m0`` (zero in practice).
    """
    om = omega[:, None]
    wN = om * st.Nk
    alpha = prior.alpha0 + wN
    beta = prior.beta0 + wN
    nu = prior.nu0 + wN
    nonempty = st.Nk > EMPTY_CLUSTER
    xbar = np.where(nonempty[..., None], st.xbar, m0)
    m = (prior.beta0 * m0 + wN[..., None] * xbar) / beta[..., None]
    if strict:
        coef = prior.beta0 * st.Nk / (prior.beta0 + st.Nk)
    else:
        coef = prior.beta0 * wN / (prior.beta0 + wN)
    d = xbar - m0
    Winv = W0inv + wN[..., None, None] * st.S + coef[..., None, None] * d[..., :, None] * d[..., None, :]
    W, logdet_W, bad = _invert_spd(Winv, None)
    return _Params(alpha, beta, m, W, nu, logdet_W, bad)


def _e_step(X, w, prm, p):
    """Responsibilities from the current factors plus their sufficient statistics."""
    Elogpi = _expected_log_pi(prm.alpha)
    Elogdet = _expected_logdet(prm.logdet_W, prm.nu, p)
    const = Elogpi + 0.5 * Elogdet - 0.5 * p / prm.beta
    r, Nk, sx, sxx, ent = _kernels.estep_moments(X, w, const, 0.5 * prm.nu, prm.W, prm.m)
    return r, _stats(Nk, sx, sxx, ent)


def _elbo_terms(st, prm, prior, m0, W0inv, omega):
    """The seven ELBO pieces, each of shape (G,)."""
    p = prior.p
    K = prm.alpha.shape[1]
    om = omega
    Elogpi = _expected_log_pi(prm.alpha)
    Elogdet = _expected_logdet(prm.logdet_W, prm.nu, p)
    dx = st.xbar - prm.m
    trSW = np.einsum("gkij,gkji->gk", st.S, prm.W)
    qx = np.einsum("gki,gkij,gkj->gk", dx, prm.W, dx)
    t1 = 0.5 * om * np.sum(st.Nk * (Elogdet - p / prm.beta - prm.nu * trSW - prm.nu * qx - p * LOG_2PI), axis=1)
    t2 = om * np.sum(st.Nk * Elogpi, axis=1)
    a0 = prior.alpha0
    t3 = (ln_gamma(K * a0) - K * ln_gamma(a0)) + (a0 - 1.0) * Elogpi.sum(axis=1)
    dm = prm.m - m0
    qm = np.einsum("gki,gkij,gkj->gk", dm, prm.W, dm)
    trW0W = np.einsum("ij,gkji->gk", W0inv, prm.W)
    logdet_W0 = np.linalg.slogdet(prior.W0)[1]
    logB0 = _log_wishart_norm(np.asarray(logdet_W0), np.asarray(prior.nu0, dtype=float), p)
    t4 = (
        0.5 * np.sum(p * np.log(prior.beta0 / (2.0 * np.pi)) + Elogdet - p * prior.beta0 / prm.beta - prior.beta0 * prm.nu * qm, axis=1)
        + 0.5 * (prior.nu0 - p - 1.0) * Elogdet.sum(axis=1)
        - 0.5 * np.sum(prm.nu * trW0W, axis=1)
        + K * logB0
    )
    t5 = om * st.ent
    t6 = _ln_dirichlet_norm(prm.alpha) + np.sum((prm.alpha - 1.0) * Elogpi, axis=1)
    logB = _log_wishart_norm(prm.logdet_W, prm.nu, p)
    t7 = np.sum(
        0.5 * Elogdet + 0.5 * p * np.log(prm.beta / (2.0 * np.pi)) - 0.5 * p + 0.5 * (prm.nu - p - 1.0) * Elogdet - 0.5 * prm.nu * p + logB,
        axis=1,
    )
    return t1, t2, t3, t4, t5, t6, t7


def _elbo_total(terms):
    t1, t2, t3, t4, t5, t6, t7 = terms
    return t1 + t2 + t3 + t4 - t5 - t6 - t7


# ---------------------------------------------------------------------------
# batched driver


@dataclass
class GmmBatch:
    """Results of a batched fit; arrays have a leading member axis."""

    omega: np.ndarray
    r: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    m: np.ndarray
    W: np.ndarray
    nu: np.ndarray
    elbo_trace: list
    n_iter: np.ndarray
    converged: np.ndarray
    failed: np.ndarray
    errors: list

    def __len__(self):
        return self.alpha.shape[0]

    def posterior(self, g):
        if self.failed[g]:
            raise NumericError(self.errors[g] or "fit failed")
        return GmmPosterior(
            omega=float(self.omega[g]),
            r=self.r[g],
            alpha=self.alpha[g],
            beta=self.beta[g],
            m=self.m[g],
            W=self.W[g],
            nu=self.nu[g],
            elbo_trace=list(self.elbo_trace[g]),
            n_iter=int(self.n_iter[g]),
            converged=bool(self.converged[g]),
        )


def _check_data(data):
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise DomainError("data must be a 2-d array")
    if not np.all(np.isfinite(X)):
        raise DomainError("data contain non-finite values")
    return X


def fit_batch(
    data,
    weights,
    K,
    prior,
    omega,
    r0,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    strict_paper_eq13=True,
):
    """Fit G weighted problems that share ``data``.

    Parameters
    ----------
    data : ndarray, shape (n, p)
    weights : ndarray, shape (G, n)
        Point multiplicities (bootstrap counts, or ones).
    K : int
    prior : GmmPrior
    omega : float or ndarray, shape (G,)
    r0 : ndarray, shape (G, n, K)
        Starting responsibilities.
    tol : float
        Stop a member once the relative ELBO change drops below ``tol``.
    max_iter : int
    strict_paper_eq13 : bool
        If True the shrinkage term in the Wishart scale update uses the
        untempered count ``N_k``; otherwise ``omega * N_k``.

    Returns
    -------
    GmmBatch
        Clusters of each member are ordered by decreasing ``alpha``. Members
        whose fit hit a non-positive-definite scale matrix or a non-finite ELBO
        are flagged in ``failed`` with a message in ``errors``.
    """
    X = _check_data(data)
    n, p = X.shape
    if p != prior.p:
        raise DomainError(f"data have {p} columns but the prior has dimension {prior.p}")
    w_all = np.atleast_2d(np.asarray(weights, dtype=float))
    G = w_all.shape[0]
    om_all = np.broadcast_to(np.asarray(omega, dtype=float), (G,)).copy()
    if np.any(om_all <= 0) or np.any(om_all > 1):
        raise DomainError("omega must lie in (0, 1]")
    r = np.ascontiguousarray(np.array(r0, dtype=float).reshape(G, n, K))
    record_fits(G)

    # Work in coordinates centred at the prior mean.
    shift = prior.m0
    Xc = np.ascontiguousarray(X - shift)
    m0 = np.zeros(p)
    W0inv = np.linalg.inv(prior.W0)

    out = GmmBatch(
        omega=om_all,
        r=np.zeros((G, n, K)),
        alpha=np.zeros((G, K)),
        beta=np.zeros((G, K)),
        m=np.zeros((G, K, p)),
        W=np.zeros((G, K, p, p)),
        nu=np.zeros((G, K)),
        elbo_trace=[[] for _ in range(G)],
        n_iter=np.zeros(G, dtype=int),
        converged=np.zeros(G, dtype=bool),
        failed=np.zeros(G, dtype=bool),
        errors=[None] * G,
    )

    active = np.arange(G)
    w = np.ascontiguousarray(w_all)
    om = om_all
    prev = np.full(G, np.nan)
    st = _stats(*_kernels.moments(Xc, w, r))
    it = 0
    while True:
        if np.any(st.Nk <= EMPTY_CLUSTER):
            logger.warning("empty cluster: factor reset to the prior")
        prm = _m_step(st, prior, m0, W0inv, om, strict_paper_eq13)
        terms = _elbo_terms(st, prm, prior, m0, W0inv, om)
        elbo = _elbo_total(terms)

        fail = prm.bad.any(axis=1) | ~np.isfinite(elbo)
        for i in np.flatnonzero(fail):
            g = active[i]
            out.failed[g] = True
            if prm.bad[i].any():
                k = int(np.flatnonzero(prm.bad[i])[0])
                out.errors[g] = f"Wishart scale update not positive definite in cluster {k}"
            else:
                name = next((ELBO_TERMS[j] for j, t in enumerate(terms) if not np.isfinite(t[i])), "ELBO")
                out.errors[g] = f"non-finite ELBO term {name}"
        for i, g in enumerate(active):
            if not fail[i]:
                out.elbo_trace[g].append(float(elbo[i]))
        with np.errstate(invalid="ignore"):
            change = np.abs(elbo - prev) / np.maximum(np.abs(elbo), np.finfo(float).tiny)
        conv = (change < tol) & ~fail
        stop = fail | conv | (it >= max_iter)
        if stop.any():
            for i in np.flatnonzero(stop & ~fail):
                g = active[i]
                out.r[g] = r[i]
                out.alpha[g] = prm.alpha[i]
                out.beta[g] = prm.beta[i]
                out.m[g] = prm.m[i] + shift
                out.W[g] = prm.W[i]
                out.nu[g] = prm.nu[i]
                out.n_iter[g] = it
                out.converged[g] = conv[i]
            keep = ~stop
            active = active[keep]
            if active.size == 0:
                break
            w, r = np.ascontiguousarray(w[keep]), r[keep]
            om, prev, elbo = om[keep], prev[keep], elbo[keep]
            prm = _Params(*(np.ascontiguousarray(getattr(prm, f)[keep]) for f in ("alpha", "beta", "m", "W", "nu", "logdet_W", "bad")))
        prev = elbo
        r, st = _e_step(Xc, w, prm, p)
        it += 1

    order = np.argsort(-out.alpha, axis=1, kind="stable")
    out.r = np.take_along_axis(out.r, order[:, None, :], axis=2)
    for name in ("alpha", "beta", "nu"):
        setattr(out, name, np.take_along_axis(getattr(out, name), order, axis=1))
    out.m = np.take_along_axis(out.m, order[:, :, None], axis=1)
    out.W = np.take_along_axis(out.W, order[:, :, None, None], axis=1)
    return out


def initial_responsibilities(data, weights, K, init, seeds):
    """Starting responsibilities for each weight vector.

    ``seeds`` holds one integer (or SeedSequence) per member.
    """
    X = _check_data(data)
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    G, n = w.shape
    rngs = [np.random.default_rng(s) for s in seeds]
    if init.method == "given":
        r = np.broadcast_to(np.asarray(init.responsibilities, dtype=float), (G, n, K)).copy()
        if np.any(r < 0) or not np.allclose(r.sum(axis=2), 1.0):
            raise DomainError("given responsibilities must be nonnegative rows summing to one")
        return r
    if init.method == "random":
        raw = np.stack([rng.uniform(size=(n, K)) for rng in rngs])
        return raw / raw.sum(axis=2, keepdims=True)
    return _kmeans.init_responsibilities(X, w, K, rngs, init.hit)


def gmm_fit(
    data,
    K,
    prior=None,
    omega=1.0,
    init=None,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    seed=0,
    strict_paper_eq13=True,
):
    """Fractional mean-field VB for a K-component Gaussian mixture.

    Parameters
    ----------
    data : array_like, shape (N, p)
    K : int
    prior : GmmPrior, optional
        Defaults to ``GmmPrior.default(data)``.
    omega : float
        Power on the likelihood, in (0, 1].
    init : InitSpec, optional
    tol, max_iter : stopping rule on the relative ELBO change.
    seed : int
        Seeds the initialisation.
    strict_paper_eq13 : bool
        See ``fit_batch``.

    Returns
    -------
    GmmPosterior
    """
    X = _check_data(data)
    N = X.shape[0]
    if not 1 <= K <= N:
        raise DomainError(f"need N >= K >= 1, got N={N}, K={K}")
    if not 0.0 < omega <= 1.0:
        raise DomainError("omega must lie in (0, 1]")
    prior = GmmPrior.default(X) if prior is None else prior
    init = InitSpec() if init is None else init
    w = np.ones((1, N))
    r0 = initial_responsibilities(X, w, K, init, [seed])
    batch = fit_batch(X, w, K, prior, omega, r0, tol, max_iter, strict_paper_eq13)
    return batch.posterior(0)


def gmm_elbo(data, prior, posterior, weights=None, breakdown=False):
    """Fractional ELBO of ``posterior`` on ``data``.

    The seven pieces are the expected log likelihood, the expected log
    membership prior, the Dirichlet and Gaussian-Wishart prior terms, and the
    three entropies. ``omega`` scales the likelihood, membership and entropy
    of Z. With ``breakdown=True`` a dict of the pieces is returned as well.
    """
    X = _check_data(data).reshape(-1, prior.p)
    n, p = X.shape
    K = posterior.K
    w = np.ones((1, n)) if weights is None else np.asarray(weights, dtype=float).reshape(1, n)
    r = np.ascontiguousarray(np.asarray(posterior.r, dtype=float).reshape(1, n, K))
    shift = prior.m0
    st = _stats(*_kernels.moments(np.ascontiguousarray(X - shift), w, r))
    W = np.asarray(posterior.W, dtype=float)[None]
    sign, logdet = np.linalg.slogdet(W)
    if np.any(sign <= 0):
        raise NumericError("posterior W is not positive definite")
    prm = _Params(
        alpha=np.asarray(posterior.alpha, dtype=float)[None],
        beta=np.asarray(posterior.beta, dtype=float)[None],
        m=np.asarray(posterior.m, dtype=float)[None] - shift,
        W=W,
        nu=np.asarray(posterior.nu, dtype=float)[None],
        logdet_W=logdet,
        bad=np.zeros((1, K), dtype=bool),
    )
    om = np.array([posterior.omega], dtype=float)
    terms = _elbo_terms(st, prm, prior, np.zeros(p), np.linalg.inv(prior.W0), om)
    for name, t in zip(ELBO_TERMS, terms):
        if not np.isfinite(t[0]):
            raise NumericError(f"non-finite ELBO term {name}", term=name)
    total = float(_elbo_total(terms)[0])
    if breakdown:
        return total, {name: float(t[0]) for name, t in zip(ELBO_TERMS, terms)}
    return total


def gmm_posterior_mean(posterior):
    """Posterior means of the mixing weights and the cluster means."""
    alpha = np.asarray(posterior.alpha, dtype=float)
    return alpha / alpha.sum(), np.array(posterior.m, dtype=float)

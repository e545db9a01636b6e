"""Fractional mean-field variational Bayes for Bayesian mixture linear regression.

Each unit n holds a response vector y_n (length J_n) and a design X_n
(J_n x p). Unit n belongs to one of K regressions with coefficients beta_k,
prior beta_k ~ N(0, tau_k^{-1} I), tau_k ~ Gamma(a0, b0), and known noise
precision ``lam``. The fit only touches the per-unit sufficient statistics
X_n'X_n, X_n'y_n, y_n'y_n and J_n, so a bootstrap replicate is a count vector
over units, exactly as in the GMM module.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kmeans
from ._instrument import record_fits
from .errors import DomainError, NumericError
from .gmm import DEFAULT_MAX_ITER, DEFAULT_TOL, EMPTY_CLUSTER, InitSpec, _expected_log_pi, _ln_dirichlet_norm
from .specfun import _digamma_unchecked as digamma
from .specfun import _ln_gamma_unchecked as ln_gamma

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)

ELBO_TERMS = (
    "E[log p(Y|Z,beta)]",
    "E[log p(Z|pi)]",
    "E[log p(pi)]",
    "E[log p(beta|tau)]",
    "E[log p(tau)]",
    "E[log q(Z)]",
    "E[log q(pi)]",
    "E[log q(beta)]",
    "E[log q(tau)]",
)


@dataclass(frozen=True)
class BmlrPrior:
    alpha0: float
    a0: float
    b0: float
    lam: float

    def __post_init__(self):
        for name in ("alpha0", "a0", "b0", "lam"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number")

    @classmethod
    def default(cls, lam):
        """alpha0=1, a0=b0=1e-2 with the supplied noise precision."""
        return cls(alpha0=1.0, a0=1e-2, b0=1e-2, lam=float(lam))


class BmlrDataset:
    """Grouped regression data: one (y_n, X_n) pair per unit.

    Parameters
    ----------
    responses : sequence of 1-d arrays
    designs : sequence of 2-d arrays with matching row counts
    """

    def __init__(self, responses, designs):
        ys = [np.asarray(y, dtype=float).reshape(-1) for y in responses]
        Xs = [np.atleast_2d(np.asarray(x, dtype=float)) for x in designs]
        if len(ys) != len(Xs):
            raise DomainError("responses and designs differ in length")
        if Xs:
            p = Xs[0].shape[1]
            for n, (y, x) in enumerate(zip(ys, Xs)):
                if x.ndim != 2 or x.shape[1] != p:
                    raise DomainError(f"unit {n}: design must have {p} columns")
                if x.shape[0] != y.shape[0]:
                    raise DomainError(f"unit {n}: {y.shape[0]} responses but {x.shape[0]} design rows")
                if y.shape[0] < 1:
                    raise DomainError(f"unit {n}: empty response")
                if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
                    raise DomainError(f"unit {n}: non-finite values")
        self.responses = ys
        self.designs = Xs
        self._stats = None

    def __len__(self):
        return len(self.responses)

    @property
    def p(self):
        return self.designs[0].shape[1] if self.designs else 0

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        out = BmlrDataset([self.responses[i] for i in idx], [self.designs[i] for i in idx])
        if self._stats is not None:
            out._stats = self._stats.take(idx)
        return out

    @property
    def stats(self):
        if self._stats is None:
            self._stats = UnitStats.from_units(self.responses, self.designs, self.p)
        return self._stats


@dataclass
class UnitStats:
    """Per-unit sufficient statistics."""

    XtX: np.ndarray  # (N, p, p)
    Xty: np.ndarray  # (N, p)
    yty: np.ndarray  # (N,)
    J: np.ndarray  # (N,)

    @classmethod
    def from_units(cls, responses, designs, p):
        N = len(responses)
        XtX = np.zeros((N, p, p))
        Xty = np.zeros((N, p))
        yty = np.zeros(N)
        J = np.zeros(N)
        for n, (y, x) in enumerate(zip(responses, designs)):
            XtX[n] = x.T @ x
            Xty[n] = x.T @ y
            yty[n] = y @ y
            J[n] = y.shape[0]
        return cls(XtX, Xty, yty, J)

    def take(self, idx):
        return UnitStats(self.XtX[idx], self.Xty[idx], self.yty[idx], self.J[idx])

    def __len__(self):
        return self.J.shape[0]

    @property
    def p(self):
        return self.Xty.shape[1]


@dataclass
class BmlrPosterior:
    omega: float
    r: np.ndarray
    alpha: np.ndarray
    a: np.ndarray
    b: np.ndarray
    m: np.ndarray
    S: np.ndarray
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
        order = np.asarray(order)
        return BmlrPosterior(
            omega=self.omega,
            r=self.r[:, order],
            alpha=self.alpha[order],
            a=self.a[order],
            b=self.b[order],
            m=self.m[order],
            S=self.S[order],
            elbo_trace=list(self.elbo_trace),
            n_iter=self.n_iter,
            converged=self.converged,
        )


def _as_stats(dataset):
    if isinstance(dataset, UnitStats):
        return dataset
    if isinstance(dataset, BmlrDataset):
        return dataset.stats
    raise DomainError("expected a BmlrDataset")


def expected_residual(st, m, S):
    """E||y_n - X_n beta_k||^2 for every unit and cluster, shape (G, N, K)."""
    G, K, p = m.shape
    M = S + m[..., :, None] * m[..., None, :]
    tr = np.einsum("nq,gkq->gnk", st.XtX.reshape(-1, p * p), M.reshape(G, K, p * p))
    lin = np.einsum("np,gkp->gnk", st.Xty, m)
    return st.yty[None, :, None] - 2.0 * lin + tr


@dataclass
class _Params:
    alpha: np.ndarray
    a: np.ndarray
    b: np.ndarray
    m: np.ndarray
    S: np.ndarray
    logdet_S: np.ndarray
    bad: np.ndarray


def _update_tau(prior, p, m, S):
    Ebb = np.einsum("gkp,gkp->gk", m, m) + np.trace(S, axis1=-2, axis2=-1)
    a = np.full(Ebb.shape, prior.a0 + 0.5 * p)
    return a, prior.b0 + 0.5 * Ebb


def _update_beta(st, prior, wr, omega, Etau):
    G, N, K = wr.shape
    p = st.p
    A = np.einsum("gnk,nq->gkq", wr, st.XtX.reshape(N, p * p)).reshape(G, K, p, p)
    c = np.einsum("gnk,np->gkp", wr, st.Xty)
    scale = omega[:, None] * prior.lam
    prec = Etau[..., None, None] * np.eye(p) + scale[..., None, None] * A
    prec = 0.5 * (prec + np.swapaxes(prec, -1, -2))
    try:
        L = np.linalg.cholesky(prec)
        bad = np.zeros((G, K), dtype=bool)
    except np.linalg.LinAlgError:
        bad = np.linalg.eigvalsh(prec)[..., 0] <= 0
        prec = np.where(bad[..., None, None], np.eye(p), prec)
        L = np.linalg.cholesky(prec)
    S = np.linalg.inv(prec)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    m = scale[..., None] * np.einsum("gkij,gkj->gki", S, c)
    logdet_S = -2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)
    return m, S, logdet_S, bad


def _e_step(st, prior, prm):
    Elogpi = _expected_log_pi(prm.alpha)
    res = expected_residual(st, prm.m, prm.S)
    logrho = Elogpi[:, None, :] - 0.5 * prior.lam * res
    logrho -= logrho.max(axis=2, keepdims=True)
    r = np.exp(logrho)
    r /= r.sum(axis=2, keepdims=True)
    return r


def _elbo_terms(st, prior, w, r, prm, omega):
    p = st.p
    K = prm.alpha.shape[1]
    wr = w[:, :, None] * r
    Nk = wr.sum(axis=1)
    Elogpi = _expected_log_pi(prm.alpha)
    res = expected_residual(st, prm.m, prm.S)
    loglik = -0.5 * st.J[None, :, None] * np.log(2.0 * np.pi / prior.lam) - 0.5 * prior.lam * res
    t1 = omega * np.einsum("gnk,gnk->g", wr, loglik)
    t2 = omega * np.sum(Nk * Elogpi, axis=1)
    a0 = prior.alpha0
    t3 = (ln_gamma(K * a0) - K * ln_gamma(a0)) + (a0 - 1.0) * Elogpi.sum(axis=1)
    Elogtau = digamma(prm.a) - np.log(prm.b)
    Etau = prm.a / prm.b
    Ebb = np.einsum("gkp,gkp->gk", prm.m, prm.m) + np.trace(prm.S, axis1=-2, axis2=-1)
    t4 = np.sum(-0.5 * p * LOG_2PI + 0.5 * p * Elogtau - 0.5 * Etau * Ebb, axis=1)
    t5 = np.sum(prior.a0 * np.log(prior.b0) + (prior.a0 - 1.0) * Elogtau - prior.b0 * Etau - ln_gamma(prior.a0), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rlogr = np.where(r > 0, r * np.log(r), 0.0)
    t6 = omega * np.einsum("gn,gnk->g", w, rlogr)
    t7 = _ln_dirichlet_norm(prm.alpha) + np.sum((prm.alpha - 1.0) * Elogpi, axis=1)
    t8 = np.sum(-0.5 * prm.logdet_S - 0.5 * p * (LOG_2PI + 1.0), axis=1)
    t9 = np.sum(-ln_gamma(prm.a) + np.log(prm.b) + (prm.a - 1.0) * digamma(prm.a) - prm.a, axis=1)
    return t1, t2, t3, t4, t5, t6, t7, t8, t9


def _elbo_total(terms):
    t1, t2, t3, t4, t5, t6, t7, t8, t9 = terms
    return t1 + t2 + t3 + t4 + t5 - t6 - t7 - t8 - t9


@dataclass
class BmlrBatch:
    omega: np.ndarray
    r: np.ndarray
    alpha: np.ndarray
    a: np.ndarray
    b: np.ndarray
    m: np.ndarray
    S: np.ndarray
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
        return BmlrPosterior(
            omega=float(self.omega[g]),
            r=self.r[g],
            alpha=self.alpha[g],
            a=self.a[g],
            b=self.b[g],
            m=self.m[g],
            S=self.S[g],
            elbo_trace=list(self.elbo_trace[g]),
            n_iter=int(self.n_iter[g]),
            converged=bool(self.converged[g]),
        )


def fit_batch(dataset, weights, K, prior, omega, r0, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Fit G weighted problems sharing the units of ``dataset``.

    Same contract as ``tvb.gmm.fit_batch``: ``weights`` is (G, N), ``r0`` is
    (G, N, K), clusters come back ordered by decreasing ``alpha`` and failed
    members are flagged rather than raised.
    """
    st = _as_stats(dataset)
    N, p = len(st), st.p
    w_all = np.atleast_2d(np.asarray(weights, dtype=float))
    G = w_all.shape[0]
    om_all = np.broadcast_to(np.asarray(omega, dtype=float), (G,)).copy()
    if np.any(om_all <= 0) or np.any(om_all > 1):
        raise DomainError("omega must lie in (0, 1]")
    r = np.array(r0, dtype=float).reshape(G, N, K)
    record_fits(G)

    out = BmlrBatch(
        omega=om_all,
        r=np.zeros((G, N, K)),
        alpha=np.zeros((G, K)),
        a=np.zeros((G, K)),
        b=np.zeros((G, K)),
        m=np.zeros((G, K, p)),
        S=np.zeros((G, K, p, p)),
        elbo_trace=[[] for _ in range(G)],
        n_iter=np.zeros(G, dtype=int),
        converged=np.zeros(G, dtype=bool),
        failed=np.zeros(G, dtype=bool),
        errors=[None] * G,
    )

    active = np.arange(G)
    w, om = w_all, om_all
    # q(tau) starts at the prior; pi and beta are then updated from r0.
    a = np.full((G, K), prior.a0)
    b = np.full((G, K), prior.b0)
    prev = np.full(G, np.nan)
    it = 0
    while True:
        if it > 0:
            r = _e_step(st, prior, prm)
            a, b = _update_tau(prior, p, prm.m, prm.S)
        wr = w[:, :, None] * r
        Nk = wr.sum(axis=1)
        if np.any(Nk <= EMPTY_CLUSTER):
            logger.warning("empty cluster: factor reset to the prior")
        alpha = prior.alpha0 + om[:, None] * Nk
        m, S, logdet_S, bad = _update_beta(st, prior, wr, om, a / b)
        prm = _Params(alpha, a, b, m, S, logdet_S, bad)
        terms = _elbo_terms(st, prior, w, r, prm, om)
        elbo = _elbo_total(terms)

        fail = bad.any(axis=1) | ~np.isfinite(elbo)
        for i in np.flatnonzero(fail):
            g = active[i]
            out.failed[g] = True
            if bad[i].any():
                k = int(np.flatnonzero(bad[i])[0])
                out.errors[g] = f"coefficient precision not positive definite in cluster {k}"
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
                out.alpha[g] = alpha[i]
                out.a[g] = a[i]
                out.b[g] = b[i]
                out.m[g] = m[i]
                out.S[g] = S[i]
                out.n_iter[g] = it
                out.converged[g] = conv[i]
            keep = ~stop
            active = active[keep]
            if active.size == 0:
                break
            w, om, r, elbo = w[keep], om[keep], r[keep], elbo[keep]
            prm = _Params(*(getattr(prm, f)[keep] for f in ("alpha", "a", "b", "m", "S", "logdet_S", "bad")))
        prev = elbo
        it += 1

    order = np.argsort(-out.alpha, axis=1, kind="stable")
    out.r = np.take_along_axis(out.r, order[:, None, :], axis=2)
    for name in ("alpha", "a", "b"):
        setattr(out, name, np.take_along_axis(getattr(out, name), order, axis=1))
    out.m = np.take_along_axis(out.m, order[:, :, None], axis=1)
    out.S = np.take_along_axis(out.S, order[:, :, None, None], axis=1)
    return out


def ols_features(dataset):
    """Per-unit least-squares coefficients (minimum-norm when rank deficient)."""
    st = _as_stats(dataset)
    return np.stack([np.linalg.lstsq(A, c, rcond=None)[0] for A, c in zip(st.XtX, st.Xty)])


def initial_responsibilities(dataset, weights, K, init, seeds, features=None):
    st = _as_stats(dataset)
    N = len(st)
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    G = w.shape[0]
    rngs = [np.random.default_rng(s) for s in seeds]
    if init.method == "given":
        r = np.broadcast_to(np.asarray(init.responsibilities, dtype=float), (G, N, K)).copy()
        if np.any(r < 0) or not np.allclose(r.sum(axis=2), 1.0):
            raise DomainError("given responsibilities must be nonnegative rows summing to one")
        return r
    if init.method == "random":
        raw = np.stack([rng.uniform(size=(N, K)) for rng in rngs])
        return raw / raw.sum(axis=2, keepdims=True)
    feats = ols_features(st) if features is None else features
    return _kmeans.init_responsibilities(feats, w, K, rngs, init.hit)


def bmlr_fit(dataset, K, prior, omega=1.0, init=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, seed=0):
    """Fractional mean-field VB for a K-component mixture of linear regressions.

    Parameters
    ----------
    dataset : BmlrDataset
    K : int
    prior : BmlrPrior
    omega : float in (0, 1]
    init : InitSpec, optional
        k-means++ on per-unit least-squares estimates by default.
    tol, max_iter : stopping rule on the relative ELBO change.
    seed : int

    Returns
    -------
    BmlrPosterior
    """
    st = _as_stats(dataset)
    N = len(st)
    if not 1 <= K <= N:
        raise DomainError(f"need N >= K >= 1, got N={N}, K={K}")
    if not 0.0 < omega <= 1.0:
        raise DomainError("omega must lie in (0, 1]")
    init = InitSpec() if init is None else init
    w = np.ones((1, N))
    r0 = initial_responsibilities(st, w, K, init, [seed])
    return fit_batch(st, w, K, prior, omega, r0, tol, max_iter).posterior(0)


def bmlr_elbo(dataset, prior, posterior, weights=None, breakdown=False):
    """Fractional ELBO of ``posterior``: nine expectation and entropy pieces."""
    st = _as_stats(dataset)
    N = len(st)
    p = np.asarray(posterior.m).shape[1]
    if N == 0:
        st = UnitStats(np.zeros((0, p, p)), np.zeros((0, p)), np.zeros(0), np.zeros(0))
    K = posterior.K
    w = np.ones((1, N)) if weights is None else np.atleast_2d(np.asarray(weights, dtype=float))
    r = np.asarray(posterior.r, dtype=float).reshape(1, N, K)
    S = np.asarray(posterior.S, dtype=float)[None]
    sign, logdet = np.linalg.slogdet(S)
    if np.any(sign <= 0):
        raise NumericError("posterior S is not positive definite")
    prm = _Params(
        alpha=np.asarray(posterior.alpha, dtype=float)[None],
        a=np.asarray(posterior.a, dtype=float)[None],
        b=np.asarray(posterior.b, dtype=float)[None],
        m=np.asarray(posterior.m, dtype=float)[None],
        S=S,
        logdet_S=logdet,
        bad=np.zeros((1, K), dtype=bool),
    )
    terms = _elbo_terms(st, prior, w, r, prm, np.array([posterior.omega], dtype=float))
    for name, t in zip(ELBO_TERMS, terms):
        if not np.isfinite(t[0]):
            raise NumericError(f"non-finite ELBO term {name}", term=name)
    total = float(_elbo_total(terms)[0])
    if breakdown:
        return total, {name: float(t[0]) for name, t in zip(ELBO_TERMS, terms)}
    return total


def bmlr_posterior_mean(posterior):
    """Mixing-weight means, coefficient means and E[tau_k] = a_k / b_k."""
    alpha = np.asarray(posterior.alpha, dtype=float)
    return alpha / alpha.sum(), np.array(posterior.m, dtype=float), np.asarray(posterior.a) / np.asarray(posterior.b)

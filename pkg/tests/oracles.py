"""Independent reference implementations used only by the tests.

Textbook mean-field VB (omega = 1) for the Gaussian mixture and for the
mixture of linear regressions, written cluster by cluster with scipy special
functions, plus extended-precision CDF and bisection quantile oracles. Nothing here imports
the package's numerical code.
"""

import math

import mpmath
import numpy as np
from scipy.special import digamma, gammaln

# ---------------------------------------------------------------------------
# Gaussian mixture, conjugate Dirichlet / Gauss-Wishart priors


def _ln_b_wishart(W, nu):
    p = W.shape[0]
    sign, logdet = np.linalg.slogdet(W)
    assert sign > 0
    lnz = 0.5 * nu * p * math.log(2.0) + 0.25 * p * (p - 1) * math.log(math.pi)
    lnz += sum(gammaln(0.5 * (nu + 1 - i)) for i in range(1, p + 1))
    return -0.5 * nu * logdet - lnz


def _ln_c_dirichlet(alpha):
    return gammaln(alpha.sum()) - gammaln(alpha).sum()


class TextbookGmm:
    """Plain coordinate ascent for the Bayesian Gaussian mixture.

    ``run(r0, n_steps)`` applies the parameter update to ``r0`` and then
    ``n_steps`` rounds of (responsibility update, parameter update),
    recording the lower bound after each parameter update.
    """

    def __init__(self, X, alpha0, m0, beta0, W0, nu0):
        self.X = np.asarray(X, dtype=float)
        self.alpha0, self.beta0, self.nu0 = float(alpha0), float(beta0), float(nu0)
        self.m0 = np.asarray(m0, dtype=float)
        self.W0 = np.asarray(W0, dtype=float)
        self.W0inv = np.linalg.inv(self.W0)

    def _update_params(self, r):
        X = self.X
        N, p = X.shape
        K = r.shape[1]
        self.Nk = r.sum(axis=0)
        self.xbar = np.zeros((K, p))
        self.S = np.zeros((K, p, p))
        self.alpha = np.zeros(K)
        self.beta = np.zeros(K)
        self.nu = np.zeros(K)
        self.m = np.zeros((K, p))
        self.W = np.zeros((K, p, p))
        for k in range(K):
            Nk = self.Nk[k]
            xb = r[:, k] @ X / Nk
            D = X - xb
            Sk = (r[:, k, None] * D).T @ D / Nk
            self.xbar[k], self.S[k] = xb, Sk
            self.alpha[k] = self.alpha0 + Nk
            self.beta[k] = self.beta0 + Nk
            self.nu[k] = self.nu0 + Nk
            self.m[k] = (self.beta0 * self.m0 + Nk * xb) / self.beta[k]
            d = xb - self.m0
            Winv = self.W0inv + Nk * Sk + self.beta0 * Nk / (self.beta0 + Nk) * np.outer(d, d)
            self.W[k] = np.linalg.inv(Winv)

    def _expectations(self):
        p = self.X.shape[1]
        K = self.alpha.shape[0]
        self.ln_pi = digamma(self.alpha) - digamma(self.alpha.sum())
        self.ln_lam = np.array(
            [sum(digamma(0.5 * (self.nu[k] + 1 - i)) for i in range(1, p + 1)) + p * math.log(2.0) + np.linalg.slogdet(self.W[k])[1] for k in range(K)]
        )

    def _update_r(self):
        X = self.X
        N, p = X.shape
        K = self.alpha.shape[0]
        logrho = np.zeros((N, K))
        for k in range(K):
            D = X - self.m[k]
            quad = np.einsum("ni,ij,nj->n", D, self.W[k], D)
            logrho[:, k] = self.ln_pi[k] + 0.5 * self.ln_lam[k] - 0.5 * p * math.log(2 * math.pi) - 0.5 * (p / self.beta[k] + self.nu[k] * quad)
        logrho -= logrho.max(axis=1, keepdims=True)
        r = np.exp(logrho)
        return r / r.sum(axis=1, keepdims=True)

    def bound(self, r):
        p = self.X.shape[1]
        K = self.alpha.shape[0]
        a0, b0, n0 = self.alpha0, self.beta0, self.nu0
        lp_x = 0.0
        lp_mulam = 0.0
        lq_mulam = 0.0
        for k in range(K):
            d = self.xbar[k] - self.m[k]
            lp_x += 0.5 * self.Nk[k] * (
                self.ln_lam[k] - p / self.beta[k] - self.nu[k] * np.trace(self.S[k] @ self.W[k]) - self.nu[k] * d @ self.W[k] @ d - p * math.log(2 * math.pi)
            )
            e = self.m[k] - self.m0
            lp_mulam += 0.5 * (p * math.log(b0 / (2 * math.pi)) + self.ln_lam[k] - p * b0 / self.beta[k] - b0 * self.nu[k] * e @ self.W[k] @ e)
            lp_mulam += 0.5 * (n0 - p - 1) * self.ln_lam[k] - 0.5 * self.nu[k] * np.trace(self.W0inv @ self.W[k])
            entropy = -_ln_b_wishart(self.W[k], self.nu[k]) - 0.5 * (self.nu[k] - p - 1) * self.ln_lam[k] + 0.5 * self.nu[k] * p
            lq_mulam += 0.5 * self.ln_lam[k] + 0.5 * p * math.log(self.beta[k] / (2 * math.pi)) - 0.5 * p - entropy
        lp_mulam += K * _ln_b_wishart(self.W0, n0)
        lp_z = float(np.sum(r * self.ln_pi))
        lp_pi = _ln_c_dirichlet(np.full(K, a0)) + (a0 - 1) * self.ln_pi.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            lq_z = float(np.sum(np.where(r > 0, r * np.log(r), 0.0)))
        lq_pi = float(np.sum((self.alpha - 1) * self.ln_pi)) + _ln_c_dirichlet(self.alpha)
        return lp_x + lp_z + lp_pi + lp_mulam - lq_z - lq_pi - lq_mulam

    def run(self, r0, n_steps):
        r = np.array(r0, dtype=float)
        self._update_params(r)
        self._expectations()
        trace = [self.bound(r)]
        for _ in range(n_steps):
            r = self._update_r()
            self._update_params(r)
            self._expectations()
            trace.append(self.bound(r))
        self.r = r
        self.trace = trace
        return self


# ---------------------------------------------------------------------------
# mixture of linear regressions with known noise precision


class TextbookBmlr:
    """Coordinate ascent for a mixture of regressions, unit by unit.

    Model: y_n | z_n = k ~ N(X_n b_k, lam^{-1} I), b_k ~ N(0, t_k^{-1} I),
    t_k ~ Gamma(a0, b0), pi ~ Dirichlet(alpha0). q(t) starts at the prior;
    the first round updates pi and b from ``r0``, later rounds update
    r, t, pi, b in that order.
    """

    def __init__(self, ys, Xs, alpha0, a0, b0, lam):
        self.ys = [np.asarray(y, dtype=float) for y in ys]
        self.Xs = [np.asarray(X, dtype=float) for X in Xs]
        self.alpha0, self.a0, self.b0, self.lam = float(alpha0), float(a0), float(b0), float(lam)

    def _sq_resid(self, n, k):
        y, X = self.ys[n], self.Xs[n]
        e = y - X @ self.m[k]
        return e @ e + np.trace(X.T @ X @ self.S[k])

    def _update_pi_b(self, r):
        K = r.shape[1]
        p = self.Xs[0].shape[1]
        self.alpha = self.alpha0 + r.sum(axis=0)
        self.m = np.zeros((K, p))
        self.S = np.zeros((K, p, p))
        for k in range(K):
            prec = (self.a[k] / self.b[k]) * np.eye(p)
            rhs = np.zeros(p)
            for n, (y, X) in enumerate(zip(self.ys, self.Xs)):
                prec += self.lam * r[n, k] * X.T @ X
                rhs += self.lam * r[n, k] * X.T @ y
            self.S[k] = np.linalg.inv(prec)
            self.m[k] = self.S[k] @ rhs

    def _update_t(self):
        p = self.Xs[0].shape[1]
        K = self.m.shape[0]
        self.a = np.full(K, self.a0 + 0.5 * p)
        self.b = np.array([self.b0 + 0.5 * (self.m[k] @ self.m[k] + np.trace(self.S[k])) for k in range(K)])

    def _update_r(self):
        N, K = len(self.ys), self.m.shape[0]
        ln_pi = digamma(self.alpha) - digamma(self.alpha.sum())
        logrho = np.array([[ln_pi[k] - 0.5 * self.lam * self._sq_resid(n, k) for k in range(K)] for n in range(N)])
        logrho -= logrho.max(axis=1, keepdims=True)
        r = np.exp(logrho)
        return r / r.sum(axis=1, keepdims=True)

    def bound(self, r):
        N, K = len(self.ys), self.m.shape[0]
        p = self.Xs[0].shape[1]
        ln_pi = digamma(self.alpha) - digamma(self.alpha.sum())
        total = 0.0
        for n in range(N):
            J = self.ys[n].shape[0]
            for k in range(K):
                loglik = -0.5 * J * math.log(2 * math.pi / self.lam) - 0.5 * self.lam * self._sq_resid(n, k)
                total += r[n, k] * (loglik + ln_pi[k])
                if r[n, k] > 0:
                    total -= r[n, k] * math.log(r[n, k])
        total += _ln_c_dirichlet(np.full(K, self.alpha0)) + (self.alpha0 - 1) * ln_pi.sum()
        total -= _ln_c_dirichlet(self.alpha) + np.sum((self.alpha - 1) * ln_pi)
        for k in range(K):
            ln_t = digamma(self.a[k]) - math.log(self.b[k])
            t = self.a[k] / self.b[k]
            ebb = self.m[k] @ self.m[k] + np.trace(self.S[k])
            # E log p(b | t) + E log p(t)
            total += -0.5 * p * math.log(2 * math.pi) + 0.5 * p * ln_t - 0.5 * t * ebb
            total += self.a0 * math.log(self.b0) - gammaln(self.a0) + (self.a0 - 1) * ln_t - self.b0 * t
            # entropies of q(b) and q(t)
            total += 0.5 * np.linalg.slogdet(self.S[k])[1] + 0.5 * p * (math.log(2 * math.pi) + 1)
            total += self.a[k] - math.log(self.b[k]) + gammaln(self.a[k]) + (1 - self.a[k]) * digamma(self.a[k])
        return total

    def run(self, r0, n_steps):
        r = np.array(r0, dtype=float)
        K = r.shape[1]
        self.a = np.full(K, self.a0)
        self.b = np.full(K, self.b0)
        self._update_pi_b(r)
        trace = [self.bound(r)]
        for _ in range(n_steps):
            r = self._update_r()
            self._update_t()
            self._update_pi_b(r)
            trace.append(self.bound(r))
        self.r = r
        self.trace = trace
        return self


# ---------------------------------------------------------------------------
# quantile oracles: CDF in extended precision, inverse by bisection

mpmath.mp.dps = 30


def beta_cdf(x, a, b):
    if x <= 0:
        return mpmath.mpf(0)
    if x >= 1:
        return mpmath.mpf(1)
    return mpmath.betainc(a, b, 0, x, regularized=True)


def student_t_cdf(x, df):
    df = mpmath.mpf(df)
    x = mpmath.mpf(x)
    dens = lambda u: mpmath.gamma((df + 1) / 2) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / 2)) * (1 + u * u / df) ** (-(df + 1) / 2)  # noqa: E731
    if x == 0:
        return mpmath.mpf("0.5")
    half = mpmath.quad(dens, [0, abs(x)])
    return 0.5 + half if x > 0 else 0.5 - half


def normal_cdf(x):
    x = mpmath.mpf(x)
    dens = lambda u: mpmath.exp(-u * u / 2) / mpmath.sqrt(2 * mpmath.pi)  # noqa: E731
    half = mpmath.quad(dens, [0, abs(x)])
    return 0.5 + half if x > 0 else 0.5 - half


def bisect(cdf, p, lo, hi, iters=200):
    """Quantile of a continuous CDF by bisection on [lo, hi]."""
    p = mpmath.mpf(p)
    lo, hi = mpmath.mpf(lo), mpmath.mpf(hi)
    for _ in range(iters):
        mid = (lo + hi) / 2
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < mpmath.mpf(10) ** -25:
            break
    return (lo + hi) / 2

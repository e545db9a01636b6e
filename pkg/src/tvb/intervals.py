"""Equal-tailed credible intervals for scalar functionals of a fitted posterior.

Every interval routine has a batched form working on stacked hyperparameters
(leading member axis) so bootstrap coverage needs no Python loop over fits.
"""

import re
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, NumericError
from .specfun import beta_quantile, normal_quantile, student_t_quantile

GMM_KINDS = ("gmm_pi_max", "gmm_mu", "gmm_mu_sum")
BMLR_KINDS = ("bmlr_beta_sum",)


@dataclass(frozen=True)
class Functional:
    """Scalar target h(theta).

    ``kind`` is one of "gmm_pi_max" (larger mixing weight), "gmm_mu" (one
    coordinate of a cluster mean), "gmm_mu_sum" (coordinate sum of a cluster
    mean) or "bmlr_beta_sum" (sum of all regression coefficients). ``cluster``
    and ``coord`` are zero-based; clusters are ordered by decreasing weight.
    """

    kind: str
    cluster: int | None = None
    coord: int | None = None

    def __post_init__(self):
        if self.kind not in GMM_KINDS + BMLR_KINDS:
            raise DomainError(f"unknown functional kind {self.kind!r}")
        if self.kind in ("gmm_mu", "gmm_mu_sum") and (self.cluster is None or self.cluster < 0):
            raise DomainError(f"{self.kind} needs a nonnegative cluster index")
        if self.kind == "gmm_mu" and (self.coord is None or self.coord < 0):
            raise DomainError("gmm_mu needs a nonnegative coordinate index")

    @property
    def model(self):
        return "bmlr" if self.kind in BMLR_KINDS else "gmm"

    @property
    def needs_alignment(self):
        return self.kind in ("gmm_mu", "gmm_mu_sum")

    def check(self, K, p):
        if self.kind == "gmm_pi_max" and K != 2:
            raise DomainError("the mixing-weight functional is defined for K = 2 only")
        if self.cluster is not None and self.cluster >= K:
            raise DomainError(f"cluster {self.cluster} out of range for K = {K}")
        if self.coord is not None and self.coord >= p:
            raise DomainError(f"coordinate {self.coord} out of range for p = {p}")

    @classmethod
    def parse(cls, text):
        """Parse "pi", "mu11", "musum2" or "betasum" (cluster/coordinate 1-based)."""
        t = text.strip().lower().replace("_", "")
        if t in ("pi", "pimax"):
            return cls("gmm_pi_max")
        if t in ("betasum", "beta"):
            return cls("bmlr_beta_sum")
        mt = re.fullmatch(r"mu(\d)(\d)", t) or re.fullmatch(r"mu:(\d+):(\d+)", t)
        if mt:
            return cls("gmm_mu", int(mt.group(1)) - 1, int(mt.group(2)) - 1)
        mt = re.fullmatch(r"musum:?(\d+)", t)
        if mt:
            return cls("gmm_mu_sum", int(mt.group(1)) - 1)
        raise DomainError(f"cannot parse functional {text!r}")

    def label(self):
        if self.kind == "gmm_pi_max":
            return "pi"
        if self.kind == "gmm_mu":
            return f"mu{self.cluster + 1}{self.coord + 1}"
        if self.kind == "gmm_mu_sum":
            return f"musum{self.cluster + 1}"
        return "betasum"


@dataclass(frozen=True)
class CredibleInterval:
    lower: float
    upper: float
    level: float
    functional: Functional
    omega: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise NumericError(f"interval bounds out of order: {self.lower} > {self.upper}")

    @property
    def length(self):
        return self.upper - self.lower

    def contains(self, value):
        return self.lower <= value <= self.upper


def _check_level(alpha_level):
    if not 0.0 < alpha_level < 1.0:
        raise DomainError("alpha_level must lie in (0, 1)")


# ---------------------------------------------------------------------------
# batched bounds


def pi_bounds(alpha, alpha_level):
    """Interval for the larger mixing weight, one row of ``alpha`` per member."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    if alpha.shape[1] != 2:
        raise DomainError("the mixing-weight functional is defined for K = 2 only")
    big = np.max(alpha, axis=1)
    small = np.min(alpha, axis=1)
    lo = beta_quantile(np.full(big.shape, 0.5 * alpha_level), big, small)
    hi = beta_quantile(np.full(big.shape, 1.0 - 0.5 * alpha_level), big, small)
    return np.asarray(lo), np.asarray(hi)


def mu_bounds(m, W, beta, nu, cluster, coord, alpha_level):
    """Student-t marginal interval for a mean coordinate, or the coordinate sum
    when ``coord`` is None. Inputs carry a leading member axis."""
    m = np.asarray(m, dtype=float)
    p = m.shape[-1]
    mi = m[:, cluster]
    df = np.asarray(nu, dtype=float)[:, cluster] - p + 1.0
    if np.any(df <= 0):
        raise DomainError("t degrees of freedom nu - p + 1 must be positive")
    Wi = np.asarray(W, dtype=float)[:, cluster]
    try:
        np.linalg.cholesky(Wi)
    except np.linalg.LinAlgError as exc:
        raise NumericError("scale matrix is not positive definite", cluster=cluster) from exc
    scale = np.linalg.inv(Wi) / (np.asarray(beta, dtype=float)[:, cluster] * df)[:, None, None]
    if coord is None:
        centre = mi.sum(axis=1)
        var = scale.sum(axis=(1, 2))
    else:
        centre = mi[:, coord]
        var = scale[:, coord, coord]
    q = np.asarray(student_t_quantile(np.full(df.shape, 1.0 - 0.5 * alpha_level), df))
    half = q * np.sqrt(var)
    return centre - half, centre + half


def beta_sum_bounds(m, S, alpha_level):
    """Normal interval for the sum of all coefficients across clusters."""
    m = np.asarray(m, dtype=float)
    S = np.asarray(S, dtype=float)
    G = m.shape[0]
    centre = m.reshape(G, -1).sum(axis=1)
    var = S.reshape(G, -1).sum(axis=1)
    if np.any(var < 0):
        raise NumericError("negative variance for the coefficient sum")
    z = normal_quantile(1.0 - 0.5 * alpha_level)
    half = z * np.sqrt(var)
    return centre - half, centre + half


def align_to(m, ref):
    """Cluster permutation per member minimising total distance to ``ref`` means.

    Returns ``order`` of shape (G, K) such that ``m[g, order[g, j]]`` matches
    ``ref[j]``.
    """
    m = np.asarray(m, dtype=float)
    ref = np.asarray(ref, dtype=float)
    G, K = m.shape[:2]
    cost = np.linalg.norm(m[:, None, :, :] - ref[None, :, None, :], axis=-1)
    order = np.empty((G, K), dtype=int)
    for g in range(G):
        rows, cols = linear_sum_assignment(cost[g])
        order[g, rows] = cols
    return order


def _apply_order(arr, order):
    idx = order.reshape(order.shape + (1,) * (arr.ndim - 2))
    return np.take_along_axis(arr, idx, axis=1)


def point_values(functional, params):
    """h(theta) at the posterior mean for every member of a stacked batch."""
    if functional.kind == "gmm_pi_max":
        a = np.asarray(params["alpha"], dtype=float)
        return a.max(axis=1) / a.sum(axis=1)
    if functional.kind == "gmm_mu":
        return np.asarray(params["m"])[:, functional.cluster, functional.coord]
    if functional.kind == "gmm_mu_sum":
        return np.asarray(params["m"])[:, functional.cluster].sum(axis=1)
    return np.asarray(params["m"]).reshape(len(params["m"]), -1).sum(axis=1)


def batch_bounds(functional, params, alpha_level, ref_means=None):
    """Interval bounds for every member of a stacked batch.

    ``params`` maps hyperparameter names to arrays with a leading member axis.
    For mean functionals, clusters are first matched to ``ref_means`` when
    given.
    """
    _check_level(alpha_level)
    if functional.kind == "gmm_pi_max":
        return pi_bounds(params["alpha"], alpha_level)
    if functional.kind == "bmlr_beta_sum":
        return beta_sum_bounds(params["m"], params["S"], alpha_level)
    m, W, beta, nu = params["m"], params["W"], params["beta"], params["nu"]
    if ref_means is not None:
        order = align_to(m, ref_means)
        m, W, beta, nu = (_apply_order(np.asarray(x), order) for x in (m, W, beta, nu))
    coord = functional.coord if functional.kind == "gmm_mu" else None
    return mu_bounds(m, W, beta, nu, functional.cluster, coord, alpha_level)


def aligned_point_values(functional, params, ref_means=None):
    if functional.needs_alignment and ref_means is not None:
        order = align_to(params["m"], ref_means)
        params = dict(params, m=_apply_order(np.asarray(params["m"]), order))
    return point_values(functional, params)


# ---------------------------------------------------------------------------
# single-posterior wrappers


def _gmm_params(posterior):
    return {
        "alpha": np.asarray(posterior.alpha)[None],
        "beta": np.asarray(posterior.beta)[None],
        "m": np.asarray(posterior.m)[None],
        "W": np.asarray(posterior.W)[None],
        "nu": np.asarray(posterior.nu)[None],
    }


def gmm_pi_interval(posterior, alpha_level=0.05):
    """Equal-tailed Beta interval for the larger of two mixing weights."""
    _check_level(alpha_level)
    f = Functional("gmm_pi_max")
    f.check(posterior.K, posterior.p)
    lo, hi = pi_bounds(posterior.alpha, alpha_level)
    return CredibleInterval(float(lo[0]), float(hi[0]), alpha_level, f, float(posterior.omega))


def gmm_mu_interval(posterior, cluster, coord=None, alpha_level=0.05):
    """Student-t interval for mean coordinate ``coord`` of ``cluster``, or for
    the sum of its coordinates when ``coord`` is None."""
    _check_level(alpha_level)
    f = Functional("gmm_mu", cluster, coord) if coord is not None else Functional("gmm_mu_sum", cluster)
    f.check(posterior.K, posterior.p)
    lo, hi = batch_bounds(f, _gmm_params(posterior), alpha_level)
    return CredibleInterval(float(lo[0]), float(hi[0]), alpha_level, f, float(posterior.omega))


def bmlr_beta_sum_interval(posterior, alpha_level=0.05):
    """Normal interval for the grand sum of regression coefficients."""
    _check_level(alpha_level)
    f = Functional("bmlr_beta_sum")
    lo, hi = beta_sum_bounds(np.asarray(posterior.m)[None], np.asarray(posterior.S)[None], alpha_level)
    return CredibleInterval(float(lo[0]), float(hi[0]), alpha_level, f, float(posterior.omega))


def interval_for(functional, posterior, alpha_level=0.05):
    """Dispatch to the interval routine matching ``functional``."""
    if functional.kind == "gmm_pi_max":
        return gmm_pi_interval(posterior, alpha_level)
    if functional.kind == "gmm_mu":
        return gmm_mu_interval(posterior, functional.cluster, functional.coord, alpha_level)
    if functional.kind == "gmm_mu_sum":
        return gmm_mu_interval(posterior, functional.cluster, None, alpha_level)
    return bmlr_beta_sum_interval(posterior, alpha_level)

"""Special functions and quantiles used by interval construction and the ELBO.

All routines accept scalars or numpy arrays and broadcast. Scalar inputs give
Python floats back.
"""

import math
from statistics import NormalDist

import numpy as np

from .errors import ConvergenceError, DomainError

EULER_GAMMA = 0.57721566490153286061

# Newton/bisection budget for every quantile root-find.
ROOT_MAX_ITER = 200
# Continued-fraction budget for the incomplete beta function.
CF_MAX_ITER = 20000
_CF_EPS = 1e-16
_FPMIN = 1e-300

_lgamma = np.frompyfunc(math.lgamma, 1, 1)
_STD_NORMAL = NormalDist()

# Bernoulli-number coefficients B_2k / (2k) of the digamma asymptotic series.
_PSI_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


def _check_positive(name, x):
    if not np.all(x > 0):
        raise DomainError(f"{name} must be strictly positive")


def _check_probability(p):
    if not np.all((p > 0) & (p < 1)):
        raise DomainError("probability must lie strictly inside (0, 1)")


def ln_gamma(x):
    """Natural log of the gamma function for x > 0."""
    arr, scalar = _as_array(x)
    _check_positive("x", arr)
    return _out(_ln_gamma_unchecked(arr), scalar)


def _ln_gamma_unchecked(arr):
    return np.asarray(_lgamma(arr), dtype=float)


def digamma(x):
    """Digamma function psi(x) for x > 0.

    Shifts the argument above 6 with psi(x) = psi(x + 1) - 1/x, then sums the
    asymptotic series through the x**-14 term.
    """
    arr, scalar = _as_array(x)
    _check_positive("x", arr)
    return _out(_digamma_unchecked(arr), scalar)


def _digamma_unchecked(arr):
    z = np.array(arr, dtype=float)
    acc = np.zeros_like(z)
    for _ in range(6):
        small = z < 6.0
        if not small.any():
            break
        acc -= np.where(small, 1.0 / z, 0.0)
        z = np.where(small, z + 1.0, z)
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for coef in reversed(_PSI_ASYMPTOTIC):
        series = (series + coef) * inv2
    return np.log(z) - 0.5 / z - series + acc


def ln_beta(a, b):
    return ln_gamma(a) + ln_gamma(b) - ln_gamma(np.asarray(a) + np.asarray(b))


def _betacf(x, a, b):
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        h = np.where(active, h * d * c, h)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= _CF_EPS
        if not active.any():
            return h
    raise ConvergenceError("incomplete beta continued fraction did not converge")


def _betainc_pair(x, xc, a, b):
    """Regularized incomplete beta I_x(a, b) given x and xc = 1 - x separately.

    Passing the complement explicitly keeps full precision when x is close to 1.
    """
    x, xc, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, xc, a, b)))
    out = np.empty(x.shape)
    lo = x <= 0.0
    hi = xc <= 0.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    if mid.any():
        xm, xcm, am, bm = x[mid], xc[mid], a[mid], b[mid]
        flip = xm > (am + 1.0) / (am + bm + 2.0)
        xx = np.where(flip, xcm, xm)
        yy = np.where(flip, xm, xcm)
        aa = np.where(flip, bm, am)
        bb = np.where(flip, am, bm)
        log_front = aa * np.log(xx) + bb * np.log(yy) - ln_beta(aa, bb) - np.log(aa)
        val = np.exp(log_front) * _betacf(xx, aa, bb)
        out[mid] = np.where(flip, 1.0 - val, val)
    return out


def betainc(x, a, b):
    """Regularized incomplete beta function I_x(a, b) for x in [0, 1]."""
    arr, scalar = _as_array(x)
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    _check_positive("a", a_arr)
    _check_positive("b", b_arr)
    if not np.all((arr >= 0) & (arr <= 1)):
        raise DomainError("x must lie in [0, 1]")
    res = _betainc_pair(arr, 1.0 - arr, a_arr, b_arr)
    return _out(res, scalar and a_arr.ndim == 0 and b_arr.ndim == 0)


def _beta_logpdf(x, a, b):
    return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - ln_beta(a, b)


def _beta_quantile(p, a, b):
    p, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (p, a, b)))
    p, a, b = p.ravel().copy(), a.ravel().copy(), b.ravel().copy()
    # Quantiles above 1/2 are found as 1 - y with y the reflected quantile, so
    # the small complement keeps full relative precision.
    reflect = p > _betainc_pair(np.full_like(p, 0.5), np.full_like(p, 0.5), a, b)
    pp = np.where(reflect, 1.0 - p, p)
    aa = np.where(reflect, b, a)
    bb = np.where(reflect, a, b)
    y = _solve_beta_lower(pp, aa, bb)
    x = np.where(reflect, 1.0 - y, y)
    _check_residual(x, p, a, b)
    return x


def _solve_beta_lower(p, a, b):
    """Safeguarded Newton for I_x(a, b) = p when the root lies in (0, 1/2]."""
    lo = np.zeros_like(p)
    hi = np.full_like(p, 0.5)
    mean = a / (a + b)
    sd = np.sqrt(a * b / ((a + b) ** 2 * (a + b + 1.0)))
    x = mean + _normal_inv_vec(p) * sd
    # Lower-tail power law I_x(a, b) ~ x**a / (a B(a, b)) for skewed shapes.
    with np.errstate(over="ignore", under="ignore"):
        x_pow = np.exp((np.log(p) + np.log(a) + ln_beta(a, b)) / a)
    use_pow = (a < 1.0) | (b < 1.0) | ~((x > 0) & (x < 0.5))
    x = np.where(use_pow & (x_pow > 0) & (x_pow < 0.5), x_pow, x)
    x = np.where((x > 0) & (x < 0.5), x, np.minimum(mean, 0.25))
    done = np.zeros(p.shape, dtype=bool)
    # Rounding noise in the CDF can make Newton cycle near the root; stop once
    # the residual has stalled for a few iterations and keep the best iterate.
    best_f = np.full(p.shape, np.inf)
    best_x = x.copy()
    stall = np.zeros(p.shape, dtype=int)
    for _ in range(ROOT_MAX_ITER):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            return best_x
        xi, ai, bi, pi = x[idx], a[idx], b[idx], p[idx]
        f = _betainc_pair(xi, 1.0 - xi, ai, bi) - pi
        improved = np.abs(f) < 0.5 * best_f[idx]
        better = np.abs(f) < best_f[idx]
        best_x[idx] = np.where(better, xi, best_x[idx])
        best_f[idx] = np.where(better, np.abs(f), best_f[idx])
        lo[idx] = np.where(f < 0, xi, lo[idx])
        hi[idx] = np.where(f > 0, xi, hi[idx])
        li, hi_i = lo[idx], hi[idx]
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            xn = xi - f / np.exp(_beta_logpdf(xi, ai, bi))
        bad = ~np.isfinite(xn) | (xn <= li) | (xn >= hi_i)
        geo = (li > 0) & (hi_i > 16.0 * li)
        mid = np.where(geo, np.sqrt(li * hi_i), 0.5 * (li + hi_i))
        mid = np.where(li == 0, hi_i / 16.0, mid)
        xn = np.where(bad, mid, xn)
        near = best_f[idx] <= 1e-10 * pi
        stall[idx] = np.where(improved | bad | ~near, 0, stall[idx] + 1)
        exact = f == 0.0
        tiny_step = np.abs(xn - xi) <= 2.0 * np.spacing(xi)
        narrow = (hi_i - li) <= 2.0 * np.spacing(hi_i)
        x[idx] = np.where(exact, xi, xn)
        best_x[idx] = np.where(exact | tiny_step | narrow, x[idx], best_x[idx])
        done[idx] = exact | tiny_step | narrow | (stall[idx] >= 4)
    raise ConvergenceError(f"beta quantile did not converge within {ROOT_MAX_ITER} iterations")


def _check_residual(x, p, a, b):
    f = _betainc_pair(x, 1.0 - x, a, b) - p
    bad = np.abs(f) > 1e-10
    if not bad.any():
        return
    # Accept the best representable double: the CDF brackets p across x's neighbours.
    xb, pb, ab, bb = x[bad], p[bad], a[bad], b[bad]
    below = np.nextafter(xb, 0.0)
    above = np.nextafter(xb, 1.0)
    f_lo = _betainc_pair(below, 1.0 - below, ab, bb) - pb
    f_hi = _betainc_pair(above, 1.0 - above, ab, bb) - pb
    if np.any((f_lo > 0) | (f_hi < 0)):
        worst = np.abs(f[bad]).max()
        raise ConvergenceError(f"beta quantile residual {worst:.3g} exceeds 1e-10")


def _normal_inv_vec(p):
    return np.array([_STD_NORMAL.inv_cdf(float(v)) for v in p])


def beta_quantile(p, a, b):
    """Inverse of the regularized incomplete beta function in x.

    Newton iteration on I_x(a, b) - p with a bisection fallback whenever the
    Newton step leaves the current bracket.
    """
    p_arr, scalar = _as_array(p)
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    _check_probability(p_arr)
    _check_positive("a", a_arr)
    _check_positive("b", b_arr)
    shape = np.broadcast(p_arr, a_arr, b_arr).shape
    res = _beta_quantile(p_arr, a_arr, b_arr).reshape(shape)
    return _out(res, len(shape) == 0)


def student_t_cdf(t, df):
    t_arr, scalar = _as_array(t)
    df_arr = np.asarray(df, dtype=float)
    _check_positive("df", df_arr)
    t2 = t_arr * t_arr
    x = df_arr / (df_arr + t2)
    xc = t2 / (df_arr + t2)
    tail = 0.5 * _betainc_pair(x, xc, 0.5 * df_arr, 0.5)
    res = np.where(t_arr > 0, 1.0 - tail, tail)
    return _out(res, res.ndim == 0)


def student_t_quantile(p, df):
    """Quantile of Student's t distribution with ``df`` degrees of freedom."""
    p_arr, _ = _as_array(p)
    df_arr = np.asarray(df, dtype=float)
    _check_probability(p_arr)
    _check_positive("df", df_arr)
    p_arr, df_arr = np.broadcast_arrays(p_arr, df_arr)
    shape = p_arr.shape
    p_flat, df_flat = p_arr.ravel(), df_arr.ravel()
    upper = p_flat > 0.5
    tail = np.where(upper, 1.0 - p_flat, p_flat)
    t_abs = np.zeros_like(p_flat)
    # Large |t|: invert the tail, x = df / (df + t^2) ~ Beta(df/2, 1/2).
    far = (tail < 0.25) & (tail > 0)
    if far.any():
        x = _beta_quantile(2.0 * tail[far], 0.5 * df_flat[far], 0.5)
        t_abs[far] = np.sqrt(df_flat[far] * (1.0 - x) / x)
    # Small |t|: invert the centre, y = t^2 / (df + t^2) ~ Beta(1/2, df/2).
    near = ~far & (tail < 0.5)
    if near.any():
        y = _beta_quantile(1.0 - 2.0 * tail[near], 0.5, 0.5 * df_flat[near])
        t_abs[near] = np.sqrt(df_flat[near] * y / (1.0 - y))
    res = np.where(upper, t_abs, -t_abs).reshape(shape)
    return _out(res, len(shape) == 0)


def normal_cdf(x):
    arr, scalar = _as_array(x)
    res = 0.5 * np.vectorize(math.erfc, otypes=[float])(-arr / math.sqrt(2.0))
    return _out(res, scalar)


def normal_quantile(p):
    """Standard normal quantile (Wichura's AS241 via :class:`statistics.NormalDist`)."""
    arr, scalar = _as_array(p)
    _check_probability(arr)
    res = np.vectorize(_STD_NORMAL.inv_cdf, otypes=[float])(arr)
    return _out(res, scalar)


def gamma_quantile(p, shape, rate):
    """Quantile of Gamma(shape, rate) by safeguarded Newton on P(shape, x)."""
    p_arr, scalar = _as_array(p)
    a = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    _check_probability(p_arr)
    _check_positive("shape", a)
    _check_positive("rate", rate)
    p_b, a_b, rate_b = np.broadcast_arrays(p_arr, a, rate)
    out = np.empty(p_b.shape)
    for i in np.ndindex(p_b.shape):
        out[i] = _gamma_quantile_scalar(float(p_b[i]), float(a_b[i])) / float(rate_b[i])
    return _out(out, out.ndim == 0)


def gammainc_lower(a, x):
    """Regularized lower incomplete gamma P(a, x) for scalar a > 0, x >= 0."""
    if x <= 0:
        return 0.0
    lg = math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(CF_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _CF_EPS:
                return total * math.exp(-x + a * math.log(x) - lg)
        raise ConvergenceError("incomplete gamma series did not converge")
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, CF_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = _FPMIN if abs(d) < _FPMIN else d
        c = b + an / c
        c = _FPMIN if abs(c) < _FPMIN else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return 1.0 - math.exp(-x + a * math.log(x) - lg) * h
    raise ConvergenceError("incomplete gamma continued fraction did not converge")


def _gamma_quantile_scalar(p, a):
    lo, hi = 0.0, max(1.0, a)
    while gammainc_lower(a, hi) < p:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    lg = math.lgamma(a)
    for _ in range(ROOT_MAX_ITER):
        f = gammainc_lower(a, x) - p
        if f < 0:
            lo = x
        elif f > 0:
            hi = x
        if abs(f) <= 1e-15:
            return x
        dens = math.exp((a - 1.0) * math.log(x) - x - lg) if x > 0 else 0.0
        xn = x - f / dens if dens > 0 else -1.0
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 4e-16 * max(x, 1e-300) or hi - lo <= 4e-16 * hi:
            return xn
        x = xn
    raise ConvergenceError(f"gamma quantile did not converge within {ROOT_MAX_ITER} iterations")

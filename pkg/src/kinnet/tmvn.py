"""Multivariate normals truncated to the non-negative orthant.

Three jobs, all in the sampler's hot path:

* orthant_prob: P(X >= 0) for X ~ N(mu, Sigma). Exact closed forms at d=1
  (normal CDF) and d=2 (Owen's T identity); at d=3 a fixed-order
  Gauss-Legendre reduction over the first coordinate with an exact bivariate
  conditional (the conditional correlation is constant, so the inner
  probabilities vectorize); d >= 4 falls back to Monte Carlo with a recorded
  standard error.
* sample_tmvn: draws from the truncated distribution. Rejection sampling
  whenever the orthant mass is >= 1e-3 (exact-distribution contract),
  otherwise a coordinate-wise Gibbs fallback.
* log_tmvn_pdf: normalized log density, i.e. the plain Gaussian log density
  minus log orthant mass.

Probabilities are floored at 1e-300 before logs so that proposals into
negligible-mass regions are rejected rather than crashing.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import ndtr, ndtri, owens_t

from .errors import NumericalError

_TINY = 1e-300
_RANGE_SD = 8.5  # integration range in conditional standard deviations


@lru_cache(maxsize=8)
def _gl_nodes(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def bvn_orthant(h, k, rho):
    """P(Z1 <= h, Z2 <= k) for standard bivariate normal, via Owen's T.

    Vectorized over h and k with scalar correlation. Equals the orthant
    probability P(Y1 >= 0, Y2 >= 0) when h, k are the standardized means.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    k = np.atleast_1d(np.asarray(k, dtype=float))
    rho = float(np.clip(rho, -1 + 1e-14, 1 - 1e-14))
    root = np.sqrt(1.0 - rho * rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        ah = (k - rho * h) / (h * root)
        ak = (h - rho * k) / (k * root)
    # h=0 (or k=0) limits: T(0, +-inf) = +-1/4 is reproduced by clipping.
    ah = np.clip(np.nan_to_num(ah, nan=0.0, posinf=1e10, neginf=-1e10), -1e10, 1e10)
    ak = np.clip(np.nan_to_num(ak, nan=0.0, posinf=1e10, neginf=-1e10), -1e10, 1e10)
    hk = h * k
    delta = np.where((hk > 0) | ((hk == 0) & (h + k >= 0)), 0.0, 0.5)
    out = 0.5 * (ndtr(h) + ndtr(k)) - owens_t(h, ah) - owens_t(k, ak) - delta
    both_zero = (h == 0) & (k == 0)
    if np.any(both_zero):
        out = np.where(both_zero, 0.25 + np.arcsin(rho) / (2 * np.pi), out)
    return np.clip(out, 0.0, 1.0)


def _orthant3(mu, Sigma, order: int) -> float:
    """Reduce the trivariate orthant to a 1-D integral of bivariate ones."""
    s1 = np.sqrt(Sigma[0, 0])
    lo = max(0.0, mu[0] - _RANGE_SD * s1)
    hi = mu[0] + _RANGE_SD * s1
    if hi <= lo:
        return 0.0
    beta = Sigma[1:, 0] / Sigma[0, 0]
    cond_cov = Sigma[1:, 1:] - np.outer(beta, Sigma[0, 1:])
    sd = np.sqrt(np.diag(cond_cov))
    rho = cond_cov[0, 1] / (sd[0] * sd[1])
    x, w = _gl_nodes(order)
    t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)  # nodes in [lo, hi]
    dens = np.exp(-0.5 * ((t - mu[0]) / s1) ** 2) / (s1 * np.sqrt(2 * np.pi))
    cond_mean = mu[1:, None] + beta[:, None] * (t - mu[0])[None, :]
    inner = bvn_orthant(cond_mean[0] / sd[0], cond_mean[1] / sd[1], rho)
    return float(0.5 * (hi - lo) * np.sum(w * dens * inner))


def orthant_prob(mu, Sigma, rng=None, mc_draws: int = 100_000,
                 gl_order: int = 32, return_error: bool = False):
    """P(X >= 0 componentwise) for X ~ N(mu, Sigma).

    Returns a float, or (probability, standard_error) when return_error is
    set; the error is zero for the deterministic branches (d <= 3).
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    d = mu.size
    se = 0.0
    if d == 1:
        prob = float(ndtr(mu[0] / np.sqrt(Sigma[0, 0])))
    elif d == 2:
        s = np.sqrt(np.diag(Sigma))
        rho = Sigma[0, 1] / (s[0] * s[1])
        prob = float(bvn_orthant(mu[0] / s[0], mu[1] / s[1], rho)[0])
    elif d == 3:
        prob = _orthant3(mu, Sigma, gl_order)
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        try:
            chol = np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError:
            raise NumericalError("covariance not positive definite") from None
        z = rng.standard_normal((mc_draws, d))
        hits = np.all(z @ chol.T + mu >= 0, axis=1)
        prob = float(hits.mean())
        se = float(np.sqrt(max(prob * (1 - prob), 1.0 / mc_draws) / mc_draws))
    prob = min(max(prob, 0.0), 1.0)
    return (prob, se) if return_error else prob


def log_orthant_prob(mu, Sigma, **kw) -> float:
    return float(np.log(max(orthant_prob(mu, Sigma, **kw), _TINY)))


# ---------------------------------------------------------------------------
# sampling

def _trunc_std_lower(a: float, rng) -> float:
    """One draw of a standard normal conditioned on x >= a, any a.

    Inverse CDF on the complementary tail keeps full precision out to
    a ~ 30; beyond that the tilted-exponential rejection of Robert (1995)
    takes over (acceptance -> 1 as a grows).
    """
    if a < -8.0:
        return float(rng.standard_normal())
    if a < 30.0:
        q = ndtr(-a)
        w = q * (1.0 - rng.random())
        return float(-ndtri(w))
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    while True:
        x = a + rng.exponential(1.0 / lam)
        if rng.random() <= np.exp(-0.5 * (x - lam) ** 2):
            return x


def _gibbs_tmvn(mu, Sigma, size, rng, burn: int = 60, thin: int = 4):
    """Coordinate-wise Gibbs fallback for negligible orthant mass."""
    d = mu.size
    try:
        prec = np.linalg.inv(Sigma)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance not positive definite") from None
    cond_sd = np.sqrt(1.0 / np.diag(prec))
    x = np.maximum(mu, 0.0) + 0.1 * np.sqrt(np.diag(Sigma))
    out = np.empty((size, d))
    kept = 0
    sweep = 0
    while kept < size:
        for i in range(d):
            r = prec[i] @ (x - mu) - prec[i, i] * (x[i] - mu[i])
            m = mu[i] - r / prec[i, i]
            x[i] = m + cond_sd[i] * _trunc_std_lower(-m / cond_sd[i], rng)
        sweep += 1
        if sweep > burn and (sweep - burn) % thin == 0:
            out[kept] = x
            kept += 1
    return out


def sample_tmvn(mu, Sigma, rng, size: int = 1, min_accept: float = 1e-3):
    """Draws from N(mu, Sigma) restricted to the non-negative orthant.

    Uses plain rejection whenever the orthant probability is at least
    min_accept (so the draws are exact); below that the acceptance rate makes
    rejection impractical and a Gibbs chain with a generous burn-in is used
    instead. Returns an array of shape (size, d).
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    d = mu.size
    if d == 1:
        # exact inverse CDF on the complementary tail; no rejection needed
        sd = float(np.sqrt(Sigma[0, 0]))
        a = -mu[0] / sd
        if a < 30.0:
            w = ndtr(-a) * (1.0 - rng.random(size))
            x = mu[0] - sd * ndtri(w)
        else:
            x = np.array([mu[0] + sd * _trunc_std_lower(a, rng)
                          for _ in range(size)])
        return np.maximum(x, 0.0)[:, None]
    accept = orthant_prob(mu, Sigma, rng=rng)
    if accept < min_accept:
        return _gibbs_tmvn(mu, Sigma, size, rng)
    try:
        chol = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance not positive definite") from None
    out = np.empty((size, d))
    kept = 0
    # batch size targets ~2 rounds at the estimated acceptance
    batch = int(min(1_000_000, max(32, 2.0 * size / max(accept, min_accept))))
    guard = 0
    while kept < size:
        z = rng.standard_normal((batch, d))
        cand = z @ chol.T + mu
        good = cand[np.all(cand >= 0, axis=1)]
        take = min(size - kept, len(good))
        out[kept:kept + take] = good[:take]
        kept += take
        guard += 1
        if guard > 10_000:
            raise NumericalError("rejection sampler failed to accept")
    return out


def mvn_logpdf(x, mu, Sigma) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    d = mu.size
    try:
        chol = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance not positive definite") from None
    y = np.linalg.solve(chol, x - mu)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * (d * np.log(2 * np.pi) + logdet + y @ y))


def log_tmvn_pdf(x, mu, Sigma, log_z: float | None = None) -> float:
    """Normalized log density of the orthant-truncated normal at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        return -np.inf
    if log_z is None:
        log_z = log_orthant_prob(mu, Sigma)
    return mvn_logpdf(x, mu, Sigma) - log_z


def trunc_norm_mean(mu: float, sd: float) -> float:
    """Mean of a 1-D normal truncated to [0, inf); used as a test oracle too."""
    alpha = -mu / sd
    phi = np.exp(-0.5 * alpha * alpha) / np.sqrt(2 * np.pi)
    return mu + sd * phi / ndtr(-alpha)

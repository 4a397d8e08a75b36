"""
Random draws and log-densities used by the samplers
"""

import numpy as np
from scipy import linalg
from scipy.special import gammaln, logsumexp

from .errors import NumericalError
from .rng import as_generator

JITTER = 1e-10
LOG_2PI = np.log(2.0 * np.pi)


def min_pivot(matrix):
    """Smallest diagonal pivot of the LDL' factorization"""
    try:
        _, d, _ = linalg.ldl(np.asarray(matrix, dtype=float))
        return float(np.min(np.diag(d)))
    except (ValueError, linalg.LinAlgError):
        return float("nan")


class PrecisionFactor:
    """Cholesky factor of a precision matrix, reusable across many draws"""

    def __init__(self, precision, jitter=0.0):
        precision = np.asarray(precision, dtype=float)
        self.dim = precision.shape[0]
        if self.dim == 0:
            self.lower = np.zeros((0, 0))
            return
        try:
            self.lower = linalg.cholesky(precision, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError):
            if not jitter:
                raise NumericalError("precision matrix is not positive definite", min_pivot(precision))
            try:
                self.lower = linalg.cholesky(precision + jitter * np.eye(self.dim), lower=True)
            except (linalg.LinAlgError, ValueError):
                raise NumericalError(
                    "precision matrix is not positive definite after jitter", min_pivot(precision)
                ) from None

    def mean(self, linear_terms):
        """Solve precision @ mean = linear_terms (columns or a vector)"""
        if self.dim == 0:
            return np.zeros_like(np.asarray(linear_terms, dtype=float))
        return linalg.cho_solve((self.lower, True), linear_terms)

    def covariance(self):
        if self.dim == 0:
            return np.zeros((0, 0))
        return linalg.cho_solve((self.lower, True), np.eye(self.dim))

    def transform(self, linear_terms, normals):
        """Map standard normals to N(P^-1 u, P^-1); rows index subjects"""
        u = np.atleast_2d(linear_terms)
        z = np.atleast_2d(normals)
        if self.dim == 0 or u.shape[0] == 0:
            return np.zeros(u.shape)
        w = linalg.solve_triangular(self.lower, u.T, lower=True)
        out = linalg.solve_triangular(self.lower, w + z.T, lower=True, trans="T").T
        return out

    def draw(self, rng, linear_terms):
        u = np.asarray(linear_terms, dtype=float)
        z = as_generator(rng).standard_normal(np.atleast_2d(u).shape)
        out = self.transform(u, z)
        return out[0] if u.ndim == 1 else out


def draw_mvn_from_precision(rng, precision, linear_term, jitter=0.0):
    """One draw from N(P^-1 b, P^-1) through a single Cholesky factorization"""
    return PrecisionFactor(precision, jitter=jitter).draw(rng, linear_term)


def draw_mvn_from_precision_batch(rng, precisions, linear_terms, jitter=JITTER):
    """Independent draws for a stack of precisions (B x d x d) and linear terms (B x d)"""
    precisions = np.asarray(precisions, dtype=float)
    linear_terms = np.asarray(linear_terms, dtype=float)
    batch, dim = linear_terms.shape
    normals = as_generator(rng).standard_normal((batch, dim))
    if dim == 0:
        return np.zeros((batch, 0))
    try:
        lower = np.linalg.cholesky(precisions)
    except np.linalg.LinAlgError:
        try:
            lower = np.linalg.cholesky(precisions + jitter * np.eye(dim))
        except np.linalg.LinAlgError:
            pivots = [min_pivot(p) for p in precisions]
            raise NumericalError(
                "batched precision matrix is not positive definite", float(np.nanmin(pivots))
            ) from None
    w = np.linalg.solve(lower, linear_terms[..., None])
    upper = np.swapaxes(lower, -1, -2)
    return np.linalg.solve(upper, w + normals[..., None])[..., 0]


def _require_positive(name, value):
    if np.any(~(np.asarray(value, dtype=float) > 0)):
        raise ValueError(f"{name} must be strictly positive")


def draw_inverse_gamma(rng, shape, rate, size=None):
    """X with density proportional to x^(-shape-1) exp(-rate/x)"""
    _require_positive("shape", shape)
    _require_positive("rate", rate)
    gen = as_generator(rng)
    return 1.0 / gen.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def draw_beta(rng, a, b, size=None):
    _require_positive("a", a)
    _require_positive("b", b)
    return as_generator(rng).beta(a, b, size=size)


def draw_bernoulli(rng, p, size=None):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p must lie in [0, 1]")
    u = as_generator(rng).random(size if size is not None else p.shape)
    return (u < p).astype(np.int64)


def draw_categorical_log(rng, log_weights):
    """Index drawn with probabilities softmax(log_weights)"""
    lw = np.asarray(log_weights, dtype=float)
    return int(draw_categorical_log_rows(rng, lw[None, :])[0])


def draw_categorical_log_rows(rng, log_weights):
    """One categorical draw per row of a log-weight matrix"""
    lw = np.asarray(log_weights, dtype=float)
    if np.any(np.isnan(lw)) or np.any(~np.isfinite(lw.max(axis=1))):
        raise ValueError("every row of log_weights needs at least one finite entry")
    probs = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
    cumulative = np.cumsum(probs, axis=1)
    u = as_generator(rng).random(lw.shape[0])[:, None] * cumulative[:, -1:]
    index = np.sum(cumulative <= u, axis=1)
    return np.minimum(index, lw.shape[1] - 1)


def logpdf_mvt_iso(x, df, scale):
    """Isotropic multivariate Student-t log-density at x (columns if 2-D)"""
    _require_positive("df", df)
    _require_positive("scale", scale)
    x = np.asarray(x, dtype=float)
    p = x.shape[0]
    if p < 1:
        raise ValueError("x must have at least one coordinate")
    sq = np.sum(x * x, axis=0)
    half = 0.5 * (df + p)
    return (
        gammaln(half)
        - gammaln(0.5 * df)
        - 0.5 * p * np.log(df * np.pi * scale)
        - half * np.log1p(sq / (df * scale))
    )


def logpdf_normal_iso(x, var):
    """Isotropic normal N(0, var I) log-density at x (columns if 2-D)"""
    _require_positive("var", var)
    x = np.asarray(x, dtype=float)
    p = x.shape[0]
    if p < 1:
        raise ValueError("x must have at least one coordinate")
    return -0.5 * p * (LOG_2PI + np.log(var)) - 0.5 * np.sum(x * x, axis=0) / var

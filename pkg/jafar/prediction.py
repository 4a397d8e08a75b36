"""
Induced moments and out-of-sample prediction from fitted chains
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .distributions import JITTER, PrecisionFactor
from .errors import DataError
from .gibbs.updates import factor_linear_terms, impute_missing, observation_patterns, split_pattern
from .rng import RngStream


def induced_covariance(state):
    """Covariance blocks {(m, m2): matrix} implied by the loadings and variances"""
    blocks = {}
    for m, a in enumerate(state.views):
        for m2, b in enumerate(state.views):
            block = a.loadings @ b.loadings.T
            if m == m2:
                block = block + a.specific @ a.specific.T + np.diag(a.sigma2)
            blocks[m, m2] = block
    return blocks


def induced_correlation(state):
    blocks = induced_covariance(state)
    sd = [np.sqrt(np.diag(blocks[m, m])) for m in range(state.n_views)]
    return {(m, m2): block / np.outer(sd[m], sd[m2]) for (m, m2), block in blocks.items()}


def posterior_mean_correlation(archive):
    """Induced correlation blocks averaged over the stored states"""
    total = None
    for state in archive.states:
        blocks = induced_correlation(state)
        if total is None:
            total = {k: v.copy() for k, v in blocks.items()}
        else:
            for k, v in blocks.items():
                total[k] += v
    return {k: v / len(archive.states) for k, v in total.items()}


def conditional_factor_moments(state, observed, masks=None):
    """Gaussian moments of the stacked factors given observed views, never the response.

    `observed` holds one vector per view, or None for a missing view.
    """
    dim = state.total_rank
    precision = np.eye(dim)
    linear = np.zeros(dim)
    seen = 0
    for m, x in enumerate(observed):
        if x is None:
            continue
        view = state.views[m]
        x = np.asarray(x, dtype=float)
        w = np.ones(x.shape, dtype=bool) if masks is None or masks[m] is None else np.asarray(masks[m], dtype=bool)
        seen += int(w.sum())
        d = w / view.sigma2
        stacked = state.stacked_loadings(m)
        precision += stacked.T @ (d[:, None] * stacked)
        linear += stacked.T @ np.where(w, d * (x - view.mu), 0.0)
    if seen == 0:
        raise DataError("at least one observed feature is required to condition on")
    factor = PrecisionFactor(precision, jitter=JITTER)
    return factor.mean(linear), factor.covariance()


def factor_posteriors(state, data):
    """Per-pattern factorized precisions and the linear terms of every subject"""
    joint = np.concatenate(data.masks, axis=1)
    empty = np.flatnonzero(~joint.any(axis=1))
    if empty.size:
        raise DataError(f"subject {data.subject_ids[empty[0]]!r} has no observed features")
    linear = factor_linear_terms(state, data)
    patterns, groups = observation_patterns(data)
    stacked = [state.stacked_loadings(m) for m in range(state.n_views)]
    factors = []
    for pattern in patterns:
        precision = np.eye(state.total_rank)
        for m, w in enumerate(split_pattern(pattern, data.p)):
            d = w / state.views[m].sigma2
            precision += stacked[m].T @ (d[:, None] * stacked[m])
        factors.append(PrecisionFactor(precision, jitter=JITTER))
    means = np.empty_like(linear)
    for g, factor in enumerate(factors):
        rows = groups == g
        means[rows] = factor.mean(linear[rows].T).T
    return means, linear, factors, groups


@dataclass(eq=False)
class PredictiveSummary:
    mean: np.ndarray
    variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    draws: np.ndarray | None = None

    @property
    def sd(self):
        return np.sqrt(self.variance)

    def to_frame(self, subject_ids=None):
        frame = pd.DataFrame({"mean": self.mean, "sd": self.sd, "lower": self.lower, "upper": self.upper})
        if subject_ids is not None:
            frame.insert(0, "subject", list(subject_ids))
        return frame


def _check_schema(archive, newdata):
    names = archive.meta.get("feature_names")
    if names:
        newdata.check_schema(names)


def predict_response(archive, newdata, draws_per_state=1, level=0.9, record=None, rng=None, keep_draws=False):
    """Posterior predictive summaries of y for new subjects"""
    _check_schema(archive, newdata)
    if not archive.states or archive.states[0].response is None:
        raise DataError("the archive holds no response model")
    rng = rng or RngStream(archive.seed, ("predict",))
    n = newdata.n
    n_states = len(archive.states)
    cond_means = np.empty((n_states, n))
    cond_vars = np.empty((n_states, n))
    draws = np.empty((n_states * draws_per_state, n))
    for s, state in enumerate(archive.states):
        resp = state.response
        theta = resp.stacked
        means, linear, factors, groups = factor_posteriors(state, newdata)
        cond_means[s] = resp.mu + means @ theta
        for g, factor in enumerate(factors):
            rows = groups == g
            cond_vars[s, rows] = theta @ factor.covariance() @ theta + resp.sigma2
        gen = rng.child("state", s).generator
        for d in range(draws_per_state):
            eta = _draw_factors(linear, factors, groups, gen)
            noise = gen.standard_normal(n) * np.sqrt(resp.sigma2)
            draws[s * draws_per_state + d] = resp.mu + eta @ theta + noise

    mean = cond_means.mean(axis=0)
    variance = cond_vars.mean(axis=0) + cond_means.var(axis=0)
    tail = 0.5 * (1.0 - level)
    lower, upper = np.quantile(draws, [tail, 1.0 - tail], axis=0)
    scale = 1.0
    if record is not None and record.y_mean is not None:
        scale = record.y_sd
        mean, lower, upper = (record.invert_response(v) for v in (mean, lower, upper))
        draws = record.invert_response(draws)
    return PredictiveSummary(
        mean=mean,
        variance=variance * scale ** 2,
        lower=lower,
        upper=upper,
        level=level,
        draws=draws if keep_draws else None,
    )


def _draw_factors(linear, factors, groups, gen):
    z = gen.standard_normal(linear.shape)
    out = np.empty_like(linear)
    for g, factor in enumerate(factors):
        rows = groups == g
        out[rows] = factor.transform(linear[rows], z[rows])
    return out


def impute_features(archive, newdata, original=None, record=None, marginals=None, draws_per_state=1, rng=None):
    """Posterior-mean completion of every masked entry, on the original feature scale.

    Factors are drawn given the observed entries of each subject, then the
    masked entries are drawn from their conditional and averaged. Observed
    entries are copied from `original` (default: `newdata` itself).
    """
    _check_schema(archive, newdata)
    rng = rng or RngStream(archive.seed, ("impute",))
    totals = [np.zeros(x.shape) for x in newdata.views]
    count = 0
    for s, state in enumerate(archive.states):
        _, linear, factors, groups = factor_posteriors(state, newdata)
        stream = rng.child("state", s)
        for d in range(draws_per_state):
            draw = stream.child("draw", d)
            current = state.copy()
            current.set_stacked_factors(_draw_factors(linear, factors, groups, draw.child("factors").generator))
            for m, z in enumerate(impute_missing(current, newdata, draw)):
                if record is not None:
                    z = record.invert_view(m, z)
                totals[m] += marginals.invert_view(m, z) if marginals is not None else z
            count += 1
    source = (original if original is not None else newdata).views
    return [np.where(w, x, total / count) for x, w, total in zip(source, newdata.masks, totals)]


def predict_features(archive, newdata, target_view, record=None, marginals=None, draws_per_state=1, rng=None):
    """Predictive means of one view's features given the other views"""
    _check_schema(archive, newdata)
    t = int(target_view)
    masks = list(newdata.masks)
    masks[t] = np.zeros_like(masks[t])
    views = list(newdata.views)
    views[t] = np.zeros_like(views[t])
    conditioning = newdata.with_views(views, masks=masks)
    rng = rng or RngStream(archive.seed, ("predict-features", t))
    total = np.zeros(newdata.views[t].shape)
    count = 0
    for s, state in enumerate(archive.states):
        view = state.views[t]
        stacked = state.stacked_loadings(t)
        means, _, factors, groups = factor_posteriors(state, conditioning)
        z_mean = view.mu + means @ stacked.T
        if marginals is None:
            total += z_mean
            count += 1
            continue
        z_sd = np.empty_like(z_mean)
        for g, factor in enumerate(factors):
            rows = groups == g
            spread = np.einsum("jk,kl,jl->j", stacked, factor.covariance(), stacked) + view.sigma2
            z_sd[rows] = np.sqrt(spread)
        gen = rng.child("state", s).generator
        for _ in range(draws_per_state):
            z = z_mean + z_sd * gen.standard_normal(z_mean.shape)
            if record is not None:
                z = record.invert_view(t, z)
            total += marginals.invert_view(t, z)
            count += 1
    out = total / count
    if marginals is None and record is not None:
        out = record.invert_view(t, out)
    return out

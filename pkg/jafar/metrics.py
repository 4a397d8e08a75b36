"""
Evaluation metrics: reconstruction errors, predictive accuracy, active-factor
counts and effective sample sizes.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .prediction import posterior_mean_correlation


def frobenius_recon_error(estimate, truth):
    """Squared Frobenius distance rescaled by the number of entries"""
    a = np.asarray(estimate, dtype=float)
    b = np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.sum((a - b) ** 2) / a.size)


@dataclass
class ActiveFactorCounts:
    specific: list
    shared_total: float
    shared_per_view: list
    one_only: float

    def to_dict(self):
        return asdict(self)


def _state_counts(state):
    shared = np.array([v.shared_active() for v in state.views]).reshape(state.n_views, -1)
    per_column = shared.sum(axis=0)
    return ActiveFactorCounts(
        specific=[int(v.specific_active().sum()) for v in state.views],
        shared_total=int(np.sum(per_column >= 1)),
        shared_per_view=[int(row.sum()) for row in shared],
        one_only=int(np.sum(per_column == 1)),
    )


def count_active_factors(source):
    """Active columns of one state, or posterior means over an archive's states"""
    states = getattr(source, "states", None)
    if states is None:
        return _state_counts(source)
    counts = [_state_counts(s) for s in states]
    if not counts:
        raise ValueError("archive holds no states")
    return ActiveFactorCounts(
        specific=np.mean([c.specific for c in counts], axis=0).tolist(),
        shared_total=float(np.mean([c.shared_total for c in counts])),
        shared_per_view=np.mean([c.shared_per_view for c in counts], axis=0).tolist(),
        one_only=float(np.mean([c.one_only for c in counts])),
    )


def predictive_metrics(summary, y_true):
    """MSE, out-of-sample R^2 and interval coverage.

    A constant target has no variance to explain: R^2 is 1 when the
    predictions are exact and 0 otherwise.
    """
    y = np.asarray(y_true, dtype=float)
    if y.size == 0:
        raise ValueError("no evaluation subjects")
    if y.shape != summary.mean.shape:
        raise ValueError(f"length mismatch: {summary.mean.shape[0]} predictions for {y.size} truths")
    mse = float(np.mean((summary.mean - y) ** 2))
    spread = float(np.var(y))
    if spread > 0:
        r2 = 1.0 - mse / spread
    else:
        r2 = 1.0 if mse == 0 else 0.0
    coverage = float(np.mean((summary.lower <= y) & (y <= summary.upper)))
    return {"mse": mse, "r2": r2, "coverage": coverage, "level": summary.level}


def _autocovariance(x):
    n = x.size
    centered = x - x.mean()
    padded = np.zeros(2 * n)
    padded[:n] = centered
    f = np.fft.rfft(padded)
    return np.fft.irfft(f * np.conjugate(f), n=2 * n)[:n] / n


def effective_sample_size(series):
    """ESS from the initial monotone sequence of paired autocorrelations.

    A constant series has ESS equal to its length.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 2:
        return float(n)
    acov = _autocovariance(x)
    if acov[0] <= 0:
        return float(n)
    rho = acov / acov[0]
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    cut = np.flatnonzero(pairs <= 0)
    pairs = pairs[: cut[0]] if cut.size else pairs
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    return float(n / max(tau, 1.0 / np.log10(max(n, 10))))


def ess_percent(series):
    n = np.asarray(series).size
    return 100.0 * effective_sample_size(series) / n if n else 0.0


def ess_summaries(archive):
    """ESS (% of stored draws) of sigma_y^2 and of the per-view induced marginal variances"""
    states = archive.states
    out = {}
    if states and states[0].response is not None:
        out["sigma2_y"] = ess_percent([s.response.sigma2 for s in states])
    for m in range(archive.n_views):
        variances = np.array([
            np.sum(s.views[m].loadings ** 2, axis=1) + np.sum(s.views[m].specific ** 2, axis=1) + s.views[m].sigma2
            for s in states
        ])
        out[f"marginal_variance_{m + 1}"] = float(np.mean([ess_percent(col) for col in variances.T]))
    return out


def _component_correlations(loadings, specific, sigma2):
    """Shared and specific covariance components divided by the induced marginal sds"""
    shared, own = [], []
    for lam, gam, s2 in zip(loadings, specific, sigma2):
        sd = np.sqrt(np.sum(lam ** 2, axis=1) + np.sum(gam ** 2, axis=1) + s2)
        scale = np.outer(sd, sd)
        shared.append(lam @ lam.T / scale)
        own.append(gam @ gam.T / scale)
    return shared, own


def correlation_errors(archive, truth):
    """Posterior-mean induced correlations against the true ones, per block and component"""
    estimate = posterior_mean_correlation(archive)
    M = archive.n_views
    report = {
        "intra": [frobenius_recon_error(estimate[m, m], truth.correlation[m, m]) for m in range(M)],
        "cross": {
            f"{m + 1}-{m2 + 1}": frobenius_recon_error(estimate[m, m2], truth.correlation[m, m2])
            for m in range(M) for m2 in range(m + 1, M)
        },
    }
    components = [
        _component_correlations([v.loadings for v in s.views], [v.specific for v in s.views], [v.sigma2 for v in s.views])
        for s in archive.states
    ]
    true_shared, true_specific = _component_correlations(truth.loadings, truth.specific, truth.sigma2)
    report["shared"] = [
        frobenius_recon_error(np.mean([c[0][m] for c in components], axis=0), true_shared[m]) for m in range(M)
    ]
    report["specific"] = [
        frobenius_recon_error(np.mean([c[1][m] for c in components], axis=0), true_specific[m]) for m in range(M)
    ]
    return report

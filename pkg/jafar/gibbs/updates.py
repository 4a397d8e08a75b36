"""
Full-conditional updates of the adaptive Gibbs sampler.

Every update mutates the state in place and returns it. Randomness comes
from labelled child streams of `rng`, one per (step, view), so results do
not depend on how views are scheduled across threads.
"""

import numpy as np
from scipy.special import expit

from ..config import PriorVariant
from ..distributions import (
    JITTER,
    PrecisionFactor,
    draw_beta,
    draw_categorical_log_rows,
    draw_inverse_gamma,
    draw_mvn_from_precision,
    draw_mvn_from_precision_batch,
    logpdf_mvt_iso,
    logpdf_normal_iso,
)
from ..parallel import run_parallel
from .state import prob_active, stick_weights


def observation_patterns(data):
    """Group subjects by their joint missingness pattern"""
    joint = np.concatenate(data.masks, axis=1)
    if joint.all():
        return np.ones((1, joint.shape[1]), dtype=bool), np.zeros(joint.shape[0], dtype=np.int64)
    patterns, inverse = np.unique(joint, axis=0, return_inverse=True)
    return patterns, inverse.reshape(-1)


def split_pattern(pattern, p):
    bounds = np.cumsum((0,) + tuple(p))
    return [pattern[bounds[m]:bounds[m + 1]] for m in range(len(p))]


def _row_draws(view, eta, x, w, upsilon2, rng):
    n = x.shape[0]
    design = np.concatenate([np.ones((n, 1)), eta, view.phi], axis=1)
    prior = np.concatenate(([1.0 / upsilon2], 1.0 / view.tau2, 1.0 / view.chi2))
    inv_s2 = 1.0 / view.sigma2
    if w.all():
        precision = (design.T @ design)[None, :, :] * inv_s2[:, None, None]
    else:
        precision = np.einsum("ij,ik,ia->ajk", design, design, w.astype(float)) * inv_s2[:, None, None]
    d = np.arange(design.shape[1])
    precision[:, d, d] += prior
    linear = (design.T @ np.where(w, x, 0.0)).T * inv_s2[:, None]
    return draw_mvn_from_precision_batch(rng, precision, linear)


def update_loadings_rows(state, data, rng, config, n_jobs=1):
    """Joint draw of [mu_mj, Lambda_mj, Gamma_mj] per row, then the response coefficients"""
    hyper = config.hyperparams
    tasks = [
        (view, state.eta, data.views[m], data.masks[m], hyper.upsilon2_m, rng.child("loadings", m))
        for m, view in enumerate(state.views)
    ]
    results = run_parallel(_row_draws, tasks, n_jobs)
    K = state.n_shared
    for view, draws in zip(state.views, results):
        view.mu = draws[:, 0].copy()
        view.loadings = draws[:, 1:1 + K].copy()
        view.specific = draws[:, 1 + K:].copy()
    if state.response is not None:
        update_response_coefficients(state, data.require_response(), rng.child("coefficients"), config)
    return state


def update_response_coefficients(state, y, rng, config):
    """Joint draw of [mu_y, theta, theta_1, ..., theta_M]"""
    hyper = config.hyperparams
    resp = state.response
    factors = state.stacked_factors()
    design = np.concatenate([np.ones((factors.shape[0], 1)), factors], axis=1)
    prior = np.concatenate(([1.0 / hyper.upsilon2_y], 1.0 / resp.coefficient_variances(hyper.psi2_inf)))
    precision = design.T @ design / resp.sigma2 + np.diag(prior)
    linear = design.T @ y / resp.sigma2
    draw = draw_mvn_from_precision(rng, precision, linear, jitter=JITTER)
    resp.mu = float(draw[0])
    K = state.n_shared
    resp.theta = draw[1:1 + K].copy()
    for m, start in enumerate(state.specific_offsets()):
        width = state.views[m].n_specific
        resp.theta_specific[m] = draw[1 + start:1 + start + width].copy()
    return state


def view_residuals(view, eta, x, w):
    fitted = view.mu + eta @ view.loadings.T + view.phi @ view.specific.T
    return np.where(w, x - fitted, 0.0)


def update_variances(state, data, rng, config):
    """Idiosyncratic variances from their inverse-gamma conditionals"""
    hyper = config.hyperparams
    for m, view in enumerate(state.views):
        w = data.masks[m]
        resid = view_residuals(view, state.eta, data.views[m], w)
        counts = w.sum(axis=0)
        view.sigma2 = draw_inverse_gamma(
            rng.child("variances", m),
            hyper.a_sigma + 0.5 * counts,
            hyper.b_sigma + 0.5 * np.sum(resid ** 2, axis=0),
        )
    if state.response is not None:
        resp = state.response
        y = data.require_response()
        resid = y - resp.mu - state.stacked_factors() @ resp.stacked
        resp.sigma2 = float(draw_inverse_gamma(
            rng.child("variances", "response"),
            hyper.a_sigma + 0.5 * y.size,
            hyper.b_sigma + 0.5 * float(resid @ resid),
        ))
    return state


def factor_linear_terms(state, data):
    """Sum over views of ((x - mu) / sigma2) Lambda-tilde, observed entries only"""
    linear = np.zeros((data.n, state.total_rank))
    for m, view in enumerate(state.views):
        scaled = np.where(data.masks[m], data.views[m] - view.mu, 0.0) / view.sigma2
        linear += scaled @ state.stacked_loadings(m)
    return linear


def update_factors_supervised(state, data, rng, config, supervised=True):
    """Joint draw of the stacked factors [eta, phi_1, ..., phi_M] per subject.

    The precision depends only on the missingness pattern, so it is
    assembled and factorized once per pattern.
    """
    resp = state.response if supervised else None
    linear = factor_linear_terms(state, data)
    theta = None
    if resp is not None:
        theta = resp.stacked
        y = data.require_response()
        linear += np.outer((y - resp.mu) / resp.sigma2, theta)
    normals = rng.child("factors").generator.standard_normal(linear.shape)
    stacked = [state.stacked_loadings(m) for m in range(state.n_views)]
    patterns, groups = observation_patterns(data)
    out = np.empty_like(linear)
    for g, pattern in enumerate(patterns):
        precision = np.eye(state.total_rank)
        if theta is not None:
            precision += np.outer(theta, theta) / resp.sigma2
        for m, w in enumerate(split_pattern(pattern, data.p)):
            d = w / state.views[m].sigma2
            precision += stacked[m].T @ (d[:, None] * stacked[m])
        rows = groups == g
        factor = PrecisionFactor(precision, jitter=JITTER)
        out[rows] = factor.transform(linear[rows], normals[rows])
    state.set_stacked_factors(out)
    return state


def update_factors_unsupervised_collapsed(state, data, rng, config):
    """Draw eta with the specific factors integrated out, then phi_m given eta"""
    K = state.n_shared
    n = data.n
    scaled = [
        np.where(data.masks[m], data.views[m] - view.mu, 0.0) / view.sigma2
        for m, view in enumerate(state.views)
    ]
    linear = np.zeros((n, K))
    for m, view in enumerate(state.views):
        linear += scaled[m] @ view.loadings
    normals = rng.child("factors").generator.standard_normal(linear.shape)
    patterns, groups = observation_patterns(data)
    eta = np.empty((n, K))
    inner = {}
    for g, pattern in enumerate(patterns):
        rows = groups == g
        precision = np.eye(K)
        for m, (view, w) in enumerate(zip(state.views, split_pattern(pattern, data.p))):
            d = w / view.sigma2
            lam, gam = view.loadings, view.specific
            # Woodbury: Lambda' (Gamma Gamma' + D)^-1 Lambda through the K_m x K_m core
            core = PrecisionFactor(np.eye(gam.shape[1]) + gam.T @ (d[:, None] * gam), jitter=JITTER)
            cross = gam.T @ (d[:, None] * lam)
            precision += lam.T @ (d[:, None] * lam) - cross.T @ core.mean(cross)
            linear[rows] -= (scaled[m][rows] @ gam) @ core.mean(cross)
            inner[g, m] = core
        factor = PrecisionFactor(precision, jitter=JITTER)
        eta[rows] = factor.transform(linear[rows], normals[rows])
    state.eta = eta

    for m, view in enumerate(state.views):
        gam = view.specific
        resid = np.where(data.masks[m], data.views[m] - view.mu - eta @ view.loadings.T, 0.0) / view.sigma2
        u = resid @ gam
        z = rng.child("factors", "specific", m).generator.standard_normal((n, gam.shape[1]))
        phi = np.empty((n, gam.shape[1]))
        for g in range(patterns.shape[0]):
            rows = groups == g
            phi[rows] = inner[g, m].transform(u[rows], z[rows])
        view.phi = phi
    return state


def tempering_factor(mask):
    """min(n_eff, p) / p with n_eff the subjects observed at least once in the view"""
    n_eff = int(np.any(mask, axis=1).sum())
    p = mask.shape[1]
    return min(n_eff, p) / p


def apply_fulld_weights(state):
    """Cross-view coupled activation probabilities pi[m, h]"""
    active = np.array([prob_active(v.nu) for v in state.views])
    inactive = 1.0 - active
    pi = np.empty_like(active)
    for m in range(active.shape[0]):
        others = np.prod(np.delete(inactive, m, axis=0), axis=0)
        pi[m] = active[m] * (1.0 - others)
    return pi


def _membership_log_weights(columns, sticks, hyper_a, hyper_b, spike, temper, target_active=None):
    K = columns.shape[1]
    with np.errstate(divide="ignore"):
        log_omega = np.log(stick_weights(sticks))
    slab_gain = logpdf_mvt_iso(columns, 2.0 * hyper_a, hyper_b / hyper_a) - logpdf_normal_iso(columns, spike)
    upper = np.arange(K)[None, :] > np.arange(K)[:, None]
    log_weights = log_omega[None, :] + temper * upper * slab_gain[:, None]
    if target_active is not None:
        prior_active = prob_active(sticks)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain_on = np.where(prior_active > 0, np.log(target_active) - np.log(prior_active), 0.0)
            gain_off = np.where(prior_active < 1, np.log1p(-target_active) - np.log1p(-prior_active), 0.0)
        log_weights = log_weights + np.where(upper, gain_on[:, None], gain_off[:, None])
    return log_weights


def update_memberships(state, data, rng, config):
    """Redraw zeta, delta and the response activation bits"""
    hyper = config.hyperparams
    fulld = apply_fulld_weights(state) if config.prior_variant is PriorVariant.FULLD else None
    for m, view in enumerate(state.views):
        temper = tempering_factor(data.masks[m]) if config.tempering else 1.0
        if view.loadings.shape[1]:
            log_weights = _membership_log_weights(
                view.loadings, view.nu, hyper.a_L, hyper.b_L, hyper.tau2_inf, temper,
                None if fulld is None else fulld[m],
            )
            view.zeta = draw_categorical_log_rows(rng.child("zeta", m), log_weights)
        if view.n_specific:
            log_weights = _membership_log_weights(
                view.specific, view.rho, hyper.a_L, hyper.b_L, hyper.tau2_inf, temper,
            )
            view.delta = draw_categorical_log_rows(rng.child("delta", m), log_weights)
    if state.response is not None:
        _update_response_bits(state, rng.child("activation"), config)
    return state


def _update_response_bits(state, rng, config):
    hyper = config.hyperparams
    resp = state.response
    theta = resp.stacked[None, :]
    if config.response_activation == "conditional":
        slab = logpdf_normal_iso(theta, resp.psi2)
    else:
        slab = logpdf_mvt_iso(theta, 2.0 * hyper.a_theta, hyper.b_theta / hyper.a_theta)
    spike = logpdf_normal_iso(theta, hyper.psi2_inf)
    logit = np.log(resp.xi) - np.log1p(-resp.xi) + slab - spike
    bits = (rng.generator.random(logit.shape) < expit(logit)).astype(np.int64)
    K = state.n_shared
    resp.active = bits[:K]
    for m, start in enumerate(state.specific_offsets()):
        resp.active_specific[m] = bits[start:start + state.views[m].n_specific]


def _stick_counts(labels):
    K = labels.size
    equal = np.bincount(labels, minlength=K)[:K]
    greater = K - np.cumsum(equal)
    return equal, greater


def _draw_sticks(rng, labels, alpha):
    if labels.size == 0:
        return np.zeros(0)
    equal, greater = _stick_counts(labels)
    head = draw_beta(rng, 1.0 + equal[:-1], alpha + greater[:-1])
    return np.concatenate((head, [1.0]))


def _draw_hypervariances(rng, columns, labels, hyper):
    active = labels > np.arange(labels.size)
    slab = draw_inverse_gamma(
        rng, hyper.a_L + 0.5 * columns.shape[0], hyper.b_L + 0.5 * np.sum(columns ** 2, axis=0)
    )
    return np.where(active, slab, hyper.tau2_inf)


def update_sticks_and_hypervariances(state, rng, config):
    """Stick-breaking fractions, slab weight and hypervariances given memberships"""
    hyper = config.hyperparams
    for m, view in enumerate(state.views):
        view.nu = _draw_sticks(rng.child("nu", m), view.zeta, hyper.alpha_shared(m))
        view.rho = _draw_sticks(rng.child("rho", m), view.delta, hyper.alpha_specific(m))
        view.tau2 = _draw_hypervariances(rng.child("tau2", m), view.loadings, view.zeta, hyper)
        view.chi2 = _draw_hypervariances(rng.child("chi2", m), view.specific, view.delta, hyper)
    resp = state.response
    if resp is not None:
        bits = np.concatenate([resp.active] + list(resp.active_specific)).astype(bool)
        theta = resp.stacked
        n_active = int(bits.sum())
        # xi is the slab probability, so active counts enter its first shape parameter
        resp.xi = float(draw_beta(rng.child("xi"), hyper.a_xi + n_active, hyper.b_xi + bits.size - n_active))
        resp.psi2 = float(draw_inverse_gamma(
            rng.child("psi2"),
            hyper.a_theta + 0.5 * n_active,
            hyper.b_theta + 0.5 * float(np.sum(theta[bits] ** 2)),
        ))
    return state


def impute_missing(state, data, rng):
    """Draw every masked entry from its conditional; observed entries are returned as-is"""
    completed = []
    for m, view in enumerate(state.views):
        w = data.masks[m]
        mean = view.mu + state.eta @ view.loadings.T + view.phi @ view.specific.T
        noise = rng.child("impute", m).generator.standard_normal(mean.shape) * np.sqrt(view.sigma2)
        completed.append(np.where(w, data.views[m], mean + noise))
    return completed

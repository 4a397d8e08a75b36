"""
Chain initialization and forward simulation from the prior
"""

import numpy as np

from ..data import MISSING_SENTINEL, MultiviewDataset, observed_moments
from ..distributions import draw_beta, draw_categorical_log_rows, draw_inverse_gamma
from .state import ModelState, ResponseState, ViewState, stick_weights

INIT_SD = 0.1


def draw_prior_sticks(rng, K, alpha):
    if K == 0:
        return np.zeros(0)
    return np.concatenate((draw_beta(rng, 1.0, alpha, size=K - 1), [1.0]))


def draw_prior_labels(rng, sticks):
    """Membership labels from the stick-breaking prior, one per column"""
    K = sticks.size
    if K == 0:
        return np.zeros(0, dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_omega = np.log(stick_weights(sticks))
    return draw_categorical_log_rows(rng, np.tile(log_omega, (K, 1)))


def _rank_layout(config, n_views):
    K = config.ranks.K_max
    K_m = [config.ranks.specific_bound(m, n_views) if config.is_jafar else 0 for m in range(n_views)]
    return K, K_m


def init_state(config, data, rng):
    """Start at the rank bounds with small loadings and prior-centred variances"""
    hyper = config.hyperparams
    n = data.n
    K, K_m = _rank_layout(config, data.n_views)
    slab_mode = hyper.b_L / (hyper.a_L + 1.0)
    sigma2_mean = hyper.b_sigma / (hyper.a_sigma - 1.0) if hyper.a_sigma > 1 else hyper.b_sigma
    gen = rng.child("init").generator
    views = []
    for m, (x, w) in enumerate(zip(data.views, data.masks)):
        p = x.shape[1]
        means, _, counts = observed_moments(x, w)
        nu = draw_prior_sticks(rng.child("init", "nu", m), K, hyper.alpha_shared(m))
        rho = draw_prior_sticks(rng.child("init", "rho", m), K_m[m], hyper.alpha_specific(m))
        zeta = draw_prior_labels(rng.child("init", "zeta", m), nu)
        delta = draw_prior_labels(rng.child("init", "delta", m), rho)
        views.append(ViewState(
            mu=np.where(counts > 0, np.nan_to_num(means), 0.0),
            loadings=gen.normal(0.0, INIT_SD, (p, K)),
            specific=gen.normal(0.0, INIT_SD, (p, K_m[m])),
            sigma2=np.full(p, sigma2_mean),
            tau2=np.where(zeta > np.arange(K), slab_mode, hyper.tau2_inf),
            chi2=np.where(delta > np.arange(K_m[m]), slab_mode, hyper.tau2_inf),
            zeta=zeta, delta=delta, nu=nu, rho=rho,
            phi=gen.normal(0.0, INIT_SD, (n, K_m[m])),
        ))
    state = ModelState(views=views, eta=gen.normal(0.0, INIT_SD, (n, K)))
    if config.supervised:
        y = data.require_response()
        xi = hyper.a_xi / (hyper.a_xi + hyper.b_xi)
        total = K + sum(K_m)
        bits = (gen.random(total) < xi).astype(np.int64)
        theta = gen.normal(0.0, INIT_SD, total)
        state.response = ResponseState(
            mu=float(np.mean(y)),
            theta=theta[:K],
            theta_specific=[theta[s:s + k] for s, k in zip(state.specific_offsets(), K_m)],
            sigma2=sigma2_mean,
            active=bits[:K],
            active_specific=[bits[s:s + k] for s, k in zip(state.specific_offsets(), K_m)],
            psi2=hyper.b_theta / (hyper.a_theta + 1.0),
            xi=xi,
        )
    return state


def _prior_block(rng, p, K, alpha, hyper):
    sticks = draw_prior_sticks(rng.child("sticks"), K, alpha)
    labels = draw_prior_labels(rng.child("labels"), sticks)
    active = labels > np.arange(K)
    slab = draw_inverse_gamma(rng.child("slab"), hyper.a_L, hyper.b_L, size=K)
    variances = np.where(active, slab, hyper.tau2_inf)
    columns = rng.child("columns").generator.standard_normal((p, K)) * np.sqrt(variances)
    return sticks, labels, variances, columns


def sample_prior_state(config, n, p, rng, ranks=None):
    """Draw every parameter and the factors from the prior at fixed ranks"""
    hyper = config.hyperparams
    K, K_m = ranks if ranks is not None else _rank_layout(config, len(p))
    views = []
    for m, p_m in enumerate(p):
        nu, zeta, tau2, lam = _prior_block(rng.child("shared", m), p_m, K, hyper.alpha_shared(m), hyper)
        rho, delta, chi2, gam = _prior_block(rng.child("specific", m), p_m, K_m[m], hyper.alpha_specific(m), hyper)
        views.append(ViewState(
            mu=rng.child("mu", m).generator.normal(0.0, np.sqrt(hyper.upsilon2_m), p_m),
            loadings=lam, specific=gam,
            sigma2=draw_inverse_gamma(rng.child("sigma2", m), hyper.a_sigma, hyper.b_sigma, size=p_m),
            tau2=tau2, chi2=chi2, zeta=zeta, delta=delta, nu=nu, rho=rho,
            phi=rng.child("phi", m).generator.standard_normal((n, K_m[m])),
        ))
    state = ModelState(views=views, eta=rng.child("eta").generator.standard_normal((n, K)))
    if config.supervised:
        total = K + sum(K_m)
        xi = float(draw_beta(rng.child("xi"), hyper.a_xi, hyper.b_xi))
        bits = (rng.child("r").generator.random(total) < xi).astype(np.int64)
        psi2 = float(draw_inverse_gamma(rng.child("psi2"), hyper.a_theta, hyper.b_theta))
        sd = np.sqrt(np.where(bits.astype(bool), psi2, hyper.psi2_inf))
        theta = rng.child("theta").generator.standard_normal(total) * sd
        offsets = state.specific_offsets()
        state.response = ResponseState(
            mu=float(rng.child("mu_y").generator.normal(0.0, np.sqrt(hyper.upsilon2_y))),
            theta=theta[:K],
            theta_specific=[theta[s:s + k] for s, k in zip(offsets, K_m)],
            sigma2=float(draw_inverse_gamma(rng.child("sigma2_y"), hyper.a_sigma, hyper.b_sigma)),
            active=bits[:K],
            active_specific=[bits[s:s + k] for s, k in zip(offsets, K_m)],
            psi2=psi2,
            xi=xi,
        )
    return state


def sample_data(state, rng, masks=None):
    """Draw views (and the response) from the sampling model given the state"""
    views = []
    n = state.eta.shape[0]
    for m, view in enumerate(state.views):
        mean = view.mu + state.eta @ view.loadings.T + view.phi @ view.specific.T
        x = mean + rng.child("x", m).generator.standard_normal(mean.shape) * np.sqrt(view.sigma2)
        views.append(x)
    masks = masks or tuple(np.ones_like(x, dtype=bool) for x in views)
    views = [np.where(w, x, MISSING_SENTINEL) for x, w in zip(views, masks)]
    response = None
    if state.response is not None:
        resp = state.response
        response = (
            resp.mu + state.stacked_factors() @ resp.stacked
            + rng.child("y").generator.standard_normal(n) * np.sqrt(resp.sigma2)
        )
    return MultiviewDataset(views=tuple(views), masks=tuple(masks), response=response)

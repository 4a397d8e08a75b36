"""
Stochastic rank adaptation: drop inactive columns keeping one buffer, or grow
"""

import logging

import numpy as np

from ..config import PriorVariant
from ..distributions import draw_beta

logger = logging.getLogger(__name__)


def plan_resize(keep, bound):
    """Indices to retain before appending one buffer column, or None to leave as is"""
    K = keep.size
    n_keep = int(keep.sum())
    if n_keep < K - 1:
        return np.flatnonzero(keep)
    if K < bound:
        return np.arange(K)
    return None


def shared_keep_mask(state, prior_variant):
    """Columns surviving a drop event under the given prior"""
    counts = np.sum([v.shared_active() for v in state.views], axis=0)
    if prior_variant in (PriorVariant.DCUSP, PriorVariant.FULLD):
        return counts >= 2
    return counts >= 1


def _remap_labels(labels, kept, new_K):
    shift = kept - np.arange(kept.size)
    moved = np.clip(labels[kept] - shift, 0, new_K - 1)
    return np.concatenate((moved, [new_K - 1])).astype(np.int64)


def _remap_sticks(rng, sticks, kept, alpha):
    out = np.concatenate((sticks[kept], [1.0]))
    stale = np.flatnonzero(out[:-1] >= 1.0)
    if stale.size:
        out[stale] = draw_beta(rng, 1.0, alpha, size=stale.size)
    return out


def _append(matrix, kept, column):
    return np.concatenate((matrix[:, kept], column[:, None]), axis=1)


def resize_shared(state, kept, rng, config):
    hyper = config.hyperparams
    new_K = kept.size + 1
    for m, view in enumerate(state.views):
        spike = rng.child("spike", m).generator.normal(0.0, np.sqrt(hyper.tau2_inf), view.p)
        view.loadings = _append(view.loadings, kept, spike)
        view.tau2 = np.concatenate((view.tau2[kept], [hyper.tau2_inf]))
        view.zeta = _remap_labels(view.zeta, kept, new_K)
        view.nu = _remap_sticks(rng.child("nu", m), view.nu, kept, hyper.alpha_shared(m))
    n = state.eta.shape[0]
    state.eta = _append(state.eta, kept, rng.child("eta").generator.standard_normal(n))
    resp = state.response
    if resp is not None:
        coef = rng.child("theta").generator.normal(0.0, np.sqrt(hyper.psi2_inf))
        resp.theta = np.concatenate((resp.theta[kept], [coef]))
        resp.active = np.concatenate((resp.active[kept], [0])).astype(np.int64)


def resize_specific(state, m, kept, rng, config):
    hyper = config.hyperparams
    view = state.views[m]
    new_K = kept.size + 1
    spike = rng.child("spike").generator.normal(0.0, np.sqrt(hyper.tau2_inf), view.p)
    view.specific = _append(view.specific, kept, spike)
    view.chi2 = np.concatenate((view.chi2[kept], [hyper.tau2_inf]))
    view.delta = _remap_labels(view.delta, kept, new_K)
    view.rho = _remap_sticks(rng.child("rho"), view.rho, kept, hyper.alpha_specific(m))
    n = view.phi.shape[0]
    view.phi = _append(view.phi, kept, rng.child("phi").generator.standard_normal(n))
    resp = state.response
    if resp is not None:
        coef = rng.child("theta").generator.normal(0.0, np.sqrt(hyper.psi2_inf))
        resp.theta_specific[m] = np.concatenate((resp.theta_specific[m][kept], [coef]))
        resp.active_specific[m] = np.concatenate((resp.active_specific[m][kept], [0])).astype(np.int64)


def adapt_ranks(state, rng, iteration, config):
    """Fire with probability exp(d0 + d1 t) once t >= t_adapt and resize every block"""
    settings = config.adaptation
    u = rng.child("adapt", "gate").generator.random()
    if not settings.enabled or u >= settings.probability(iteration):
        return state
    before = state.ranks
    kept = plan_resize(shared_keep_mask(state, config.prior_variant), config.ranks.K_max)
    if kept is not None:
        resize_shared(state, kept, rng.child("adapt", "shared"), config)
    if config.is_jafar:
        for m, view in enumerate(state.views):
            bound = config.ranks.specific_bound(m, state.n_views)
            kept = plan_resize(view.specific_active(), bound)
            if kept is not None:
                resize_specific(state, m, kept, rng.child("adapt", "specific", m), config)
    if state.ranks != before:
        logger.debug("adaptation iteration=%d ranks=%s->%s", iteration, list(before), list(state.ranks))
    return state

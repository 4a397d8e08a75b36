"""
Chain driver: one Gibbs sweep per iteration, thinning and progress logging
"""

import logging
import time

import numpy as np

from ..config import config_to_dict
from ..errors import ChainError, NumericalError
from ..rng import RngFactory
from .adaptation import adapt_ranks
from .archive import ChainArchive
from .prior import init_state
from .updates import (
    update_factors_supervised,
    update_factors_unsupervised_collapsed,
    update_loadings_rows,
    update_memberships,
    update_sticks_and_hypervariances,
    update_variances,
)

logger = logging.getLogger(__name__)


def _update_factors(state, data, rng, config):
    if config.supervised:
        return update_factors_supervised(state, data, rng, config)
    if config.is_jafar and config.collapsed_factors:
        return update_factors_unsupervised_collapsed(state, data, rng, config)
    return update_factors_supervised(state, data, rng, config, supervised=False)


def gibbs_sweep(state, data, rng, config, iteration, n_jobs=1, adapt=True):
    """Run the loadings, variances, factors, memberships, sticks and adaptation steps once"""
    steps = [
        ("loadings", lambda: update_loadings_rows(state, data, rng, config, n_jobs)),
        ("variances", lambda: update_variances(state, data, rng, config)),
        ("factors", lambda: _update_factors(state, data, rng, config)),
        ("memberships", lambda: update_memberships(state, data, rng, config)),
        ("sticks", lambda: update_sticks_and_hypervariances(state, rng, config)),
    ]
    if adapt:
        steps.append(("adaptation", lambda: adapt_ranks(state, rng, iteration, config)))
    for name, step in steps:
        try:
            step()
        except NumericalError as e:
            raise ChainError(name, iteration, e) from e
    state.iteration = iteration
    return state


class GibbsSampler:
    """Adaptive Gibbs sampler over a prepared (standardized or latent) dataset"""

    def __init__(self, config, data, seed=None, n_jobs=1):
        self.config = config.validate()
        self.data = data
        self.seed = config.mcmc.seed if seed is None else int(seed)
        self.n_jobs = n_jobs
        self.rngs = RngFactory(self.seed)
        if config.supervised:
            data.require_response()

    def initial_state(self):
        return init_state(self.config, self.data, self.rngs.stream("init"))

    def run(self, state=None):
        mc = self.config.mcmc
        state = state or self.initial_state()
        ranks = np.zeros((mc.T_mcmc, 1 + self.data.n_views), dtype=np.int64)
        states, iterations = [], []
        started = time.perf_counter()
        for t in range(1, mc.T_mcmc + 1):
            gibbs_sweep(state, self.data, self.rngs.stream("iteration", t), self.config, t, self.n_jobs)
            ranks[t - 1] = state.ranks
            if t > mc.T_burnin and (t - mc.T_burnin) % mc.T_thin == 0:
                states.append(state.slim() if mc.slim else state.copy())
                iterations.append(t)
            if t % mc.progress_every == 0 or t == mc.T_mcmc:
                logger.info(
                    "iteration=%d K=%d K_m=%s elapsed=%.1fs",
                    t, ranks[t - 1, 0], ranks[t - 1, 1:].tolist(), time.perf_counter() - started,
                )
        elapsed = time.perf_counter() - started
        logger.info("chain finished iterations=%d stored=%d elapsed=%.1fs", mc.T_mcmc, len(states), elapsed)
        return ChainArchive(
            states=states,
            iterations=iterations,
            ranks=ranks,
            seed=self.seed,
            config=config_to_dict(self.config),
            meta={
                "wall_clock_seconds": round(elapsed, 3),
                "n": self.data.n,
                "p": list(self.data.p),
                "view_names": list(self.data.view_names),
                "feature_names": [list(f) for f in self.data.feature_names],
            },
        )


def run_chain(config, data, rng=None, n_jobs=1):
    """Fit one chain; `rng` may be a seed or an RngFactory"""
    seed = rng.seed if isinstance(rng, RngFactory) else rng
    return GibbsSampler(config, data, seed=seed, n_jobs=n_jobs).run()

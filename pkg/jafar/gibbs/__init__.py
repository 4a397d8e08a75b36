"""Adaptive Gibbs samplers for JFR and JAFAR"""

from .adaptation import adapt_ranks
from .archive import ChainArchive, load_archive, save_archive
from .chain import GibbsSampler, gibbs_sweep, run_chain
from .prior import init_state, sample_data, sample_prior_state
from .state import ModelState, ResponseState, ViewState, prob_active, stick_weights
from .updates import (
    apply_fulld_weights,
    impute_missing,
    tempering_factor,
    update_factors_supervised,
    update_factors_unsupervised_collapsed,
    update_loadings_rows,
    update_memberships,
    update_response_coefficients,
    update_sticks_and_hypervariances,
    update_variances,
)

__all__ = [
    "ChainArchive", "GibbsSampler", "ModelState", "ResponseState", "ViewState",
    "adapt_ranks", "apply_fulld_weights", "gibbs_sweep", "impute_missing", "init_state",
    "load_archive", "prob_active", "run_chain", "sample_data", "sample_prior_state",
    "save_archive", "stick_weights", "tempering_factor", "update_factors_supervised",
    "update_factors_unsupervised_collapsed", "update_loadings_rows", "update_memberships",
    "update_response_coefficients", "update_sticks_and_hypervariances", "update_variances",
]

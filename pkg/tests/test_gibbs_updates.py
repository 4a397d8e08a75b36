import numpy as np
import pytest
from scipy import stats

from conftest import tiny_config, tiny_dataset
from jafar.config import RankBounds
from jafar.data import standardize
from jafar.gibbs import (
    apply_fulld_weights,
    impute_missing,
    init_state,
    tempering_factor,
    update_factors_supervised,
    update_factors_unsupervised_collapsed,
    update_loadings_rows,
    update_memberships,
    update_response_coefficients,
    update_sticks_and_hypervariances,
    update_variances,
)
from jafar.gibbs.state import stick_weights
from jafar.gibbs.updates import observation_patterns
from jafar.rng import RngStream

REPS = 4000


def assert_gaussian(draws, mean, cov):
    """Mean within 4 standard errors and variances within 10%"""
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se)
    np.testing.assert_allclose(draws.var(axis=0), np.diag(cov), rtol=0.1)


def prepared(config, masked=False, response=True):
    data = tiny_dataset(seed=4, response=response)
    if masked:
        masks = [np.ones_like(w) for w in data.masks]
        masks[0][1, 0] = False
        masks[1][1, 2:] = False
        masks[1][4, 0] = False
        data = data.with_views(data.views, masks=masks)
    data = standardize(data)[0]
    state = init_state(config, data, RngStream(1, ("init",)))
    return data, state


class TestLoadingRows:
    def test_row_conditional(self):
        config = tiny_config()
        data, state = prepared(config)
        view = state.views[0]
        j = 1
        draws = []
        for i in range(REPS):
            update_loadings_rows(state, data, RngStream(2, ("rep", i)), config)
            draws.append(np.concatenate(([view.mu[j]], view.loadings[j], view.specific[j])))
        design = np.column_stack([np.ones(data.n), state.eta, view.phi])
        prior = np.concatenate(([1 / config.hyperparams.upsilon2_m], 1 / view.tau2, 1 / view.chi2))
        precision = design.T @ design / view.sigma2[j] + np.diag(prior)
        cov = np.linalg.inv(precision)
        mean = cov @ design.T @ data.views[0][:, j] / view.sigma2[j]
        assert_gaussian(np.array(draws), mean, cov)

    def test_missing_rows_use_observed_entries(self):
        config = tiny_config()
        data, state = prepared(config, masked=True)
        view = state.views[0]
        draws = []
        for i in range(REPS):
            update_loadings_rows(state, data, RngStream(3, ("rep", i)), config)
            draws.append(np.concatenate(([view.mu[0]], view.loadings[0], view.specific[0])))
        keep = data.masks[0][:, 0]
        design = np.column_stack([np.ones(data.n), state.eta, view.phi])[keep]
        prior = np.concatenate(([1 / config.hyperparams.upsilon2_m], 1 / view.tau2, 1 / view.chi2))
        precision = design.T @ design / view.sigma2[0] + np.diag(prior)
        cov = np.linalg.inv(precision)
        mean = cov @ design.T @ data.views[0][keep, 0] / view.sigma2[0]
        assert_gaussian(np.array(draws), mean, cov)


class TestResponseCoefficients:
    def test_conditional(self):
        config = tiny_config()
        data, state = prepared(config)
        resp = state.response
        draws = []
        for i in range(REPS):
            update_response_coefficients(state, data.response, RngStream(4, ("rep", i)), config)
            draws.append(np.concatenate(([resp.mu], resp.stacked)))
        design = np.column_stack([np.ones(data.n), state.stacked_factors()])
        variances = resp.coefficient_variances(config.hyperparams.psi2_inf)
        prior = np.concatenate(([1 / config.hyperparams.upsilon2_y], 1 / variances))
        cov = np.linalg.inv(design.T @ design / resp.sigma2 + np.diag(prior))
        mean = cov @ design.T @ data.response / resp.sigma2
        assert_gaussian(np.array(draws), mean, cov)


class TestVariances:
    def test_inverse_gamma_conditional(self):
        config = tiny_config()
        data, state = prepared(config)
        view = state.views[1]
        draws = []
        for i in range(2000):
            update_variances(state, data, RngStream(5, ("rep", i)), config)
            draws.append(view.sigma2[2])
        fitted = view.mu[2] + state.eta @ view.loadings[2] + view.phi @ view.specific[2]
        ssr = np.sum((data.views[1][:, 2] - fitted) ** 2)
        hp = config.hyperparams
        law = stats.invgamma(hp.a_sigma + data.n / 2, scale=hp.b_sigma + ssr / 2)
        assert stats.kstest(draws, law.cdf).pvalue > 0.001


def dense_factor_posterior(state, data, i, response=True):
    dim = state.total_rank
    precision = np.eye(dim)
    linear = np.zeros(dim)
    for m, view in enumerate(state.views):
        w = data.masks[m][i]
        L = state.stacked_loadings(m)[w]
        precision += L.T @ np.diag(1 / view.sigma2[w]) @ L
        linear += L.T @ ((data.views[m][i, w] - view.mu[w]) / view.sigma2[w])
    if response:
        resp = state.response
        theta = resp.stacked
        precision += np.outer(theta, theta) / resp.sigma2
        linear += theta * (data.response[i] - resp.mu) / resp.sigma2
    cov = np.linalg.inv(precision)
    return cov @ linear, cov


class TestFactors:
    @pytest.mark.parametrize("masked", [False, True])
    def test_supervised_joint_conditional(self, masked):
        config = tiny_config()
        data, state = prepared(config, masked=masked)
        draws = []
        for i in range(REPS):
            update_factors_supervised(state, data, RngStream(6, ("rep", i)), config)
            draws.append(state.stacked_factors()[1])
        mean, cov = dense_factor_posterior(state, data, 1)
        assert_gaussian(np.array(draws), mean, cov)

    def test_collapsed_matches_joint_law(self):
        config = tiny_config(supervised=False)
        data, state = prepared(config, masked=True, response=False)
        draws = []
        for i in range(REPS):
            update_factors_unsupervised_collapsed(state, data, RngStream(7, ("rep", i)), config)
            draws.append(state.stacked_factors()[1])
        mean, cov = dense_factor_posterior(state, data, 1, response=False)
        assert_gaussian(np.array(draws), mean, cov)

    def test_collapsed_equals_joint_without_specific_factors(self):
        config = tiny_config(supervised=False)
        data, state = prepared(config, response=False)
        for view in state.views:
            view.specific = np.zeros((view.p, 0))
            view.phi = np.zeros((data.n, 0))
            view.chi2 = view.rho = np.zeros(0)
            view.delta = np.zeros(0, dtype=np.int64)
        a = state.copy()
        b = state.copy()
        update_factors_unsupervised_collapsed(a, data, RngStream(8, ("same",)), config)
        update_factors_supervised(b, data, RngStream(8, ("same",)), config, supervised=False)
        np.testing.assert_allclose(a.eta, b.eta, rtol=0, atol=1e-12)


def membership_probabilities(columns, sticks, hp, temper=1.0):
    K = columns.shape[1]
    omega = stick_weights(sticks)
    out = np.zeros((K, K))
    for h in range(K):
        col = columns[:, h]
        slab = stats.multivariate_t(np.zeros(col.size), hp.b_L / hp.a_L * np.eye(col.size), df=2 * hp.a_L).logpdf(col)
        spike = stats.multivariate_normal(np.zeros(col.size), hp.tau2_inf * np.eye(col.size)).logpdf(col)
        with np.errstate(divide="ignore"):
            lw = np.log(omega) + temper * (np.arange(K) > h) * (slab - spike)
        w = np.exp(lw - lw.max())
        out[h] = w / w.sum()
    return out


class TestMemberships:
    def test_label_frequencies(self):
        config = tiny_config()
        data, state = prepared(config)
        view = state.views[0]
        view.nu = np.array([0.4, 1.0])
        view.loadings = np.array([[0.3, 0.05], [-0.4, 0.02], [0.2, -0.1]])
        counts = np.zeros((2, 2))
        for i in range(REPS):
            update_memberships(state, data, RngStream(9, ("rep", i)), config)
            counts[np.arange(2), view.zeta] += 1
        expected = membership_probabilities(view.loadings, view.nu, config.hyperparams)
        np.testing.assert_allclose(counts / REPS, expected, atol=0.03)

    def test_tempered_frequencies(self):
        config = tiny_config(tempering=True)
        raw = tiny_dataset(seed=5, n=4, p=(10,))
        data = standardize(raw)[0]
        state = init_state(config, data, RngStream(1, ("init",)))
        view = state.views[0]
        view.nu = np.array([0.5, 1.0])
        gen = np.random.default_rng(0)
        view.loadings = np.column_stack([0.12 * gen.standard_normal(10), 0.08 * gen.standard_normal(10)])
        counts = np.zeros((2, 2))
        for i in range(REPS):
            update_memberships(state, data, RngStream(10, ("rep", i)), config)
            counts[np.arange(2), view.zeta] += 1
        expected = membership_probabilities(view.loadings, view.nu, config.hyperparams, temper=0.4)
        np.testing.assert_allclose(counts / REPS, expected, atol=0.03)

    def test_last_column_never_active(self):
        config = tiny_config()
        data, state = prepared(config)
        for i in range(50):
            update_memberships(state, data, RngStream(11, ("rep", i)), config)
            for view in state.views:
                assert not view.shared_active()[-1]
                assert not view.specific_active()[-1]


class TestTempering:
    def test_factor(self):
        assert tempering_factor(np.ones((6, 4), bool)) == 1.0
        assert tempering_factor(np.ones((6, 10), bool)) == pytest.approx(0.6)

    def test_unobserved_subjects_do_not_count(self):
        mask = np.ones((6, 10), bool)
        mask[:2] = False
        assert tempering_factor(mask) == pytest.approx(0.4)

    def test_disabled_tempering_is_identical_when_factor_is_one(self):
        data, state = prepared(tiny_config())
        a, b = state.copy(), state.copy()
        update_memberships(a, data, RngStream(12), tiny_config())
        update_memberships(b, data, RngStream(12), tiny_config(tempering=True))
        for va, vb in zip(a.views, b.views):
            np.testing.assert_array_equal(va.zeta, vb.zeta)
            np.testing.assert_array_equal(va.delta, vb.delta)


class TestFullDWeights:
    def test_symmetric_two_view_case(self):
        data, state = prepared(tiny_config())
        for view in state.views:
            view.nu = np.array([0.5, 1.0])
        pi = apply_fulld_weights(state)
        np.testing.assert_allclose(pi[:, 0], 0.25)
        np.testing.assert_allclose(pi[:, 1], 0.0)


class TestSticksAndSlab:
    def test_stick_conditional(self):
        config = tiny_config(ranks=RankBounds(K_max=3, K_m_max=(1,)))
        data, state = prepared(config)
        view = state.views[0]
        draws = []
        for i in range(2000):
            view.zeta = np.array([2, 0, 2])
            update_sticks_and_hypervariances(state, RngStream(13, ("rep", i)), config)
            draws.append(view.nu.copy())
        draws = np.array(draws)
        alpha = config.hyperparams.alpha_shared(0)
        assert stats.kstest(draws[:, 0], stats.beta(2.0, alpha + 2.0).cdf).pvalue > 0.001
        assert stats.kstest(draws[:, 1], stats.beta(1.0, alpha + 2.0).cdf).pvalue > 0.001
        assert np.all(draws[:, 2] == 1.0)

    def test_slab_probability_conditional(self):
        config = tiny_config()
        data, state = prepared(config)
        resp = state.response
        resp.active = np.array([1, 0])
        resp.active_specific = [np.array([1]), np.array([0])]
        draws = []
        for i in range(2000):
            update_sticks_and_hypervariances(state, RngStream(14, ("rep", i)), config)
            draws.append(resp.xi)
        hp = config.hyperparams
        assert stats.kstest(draws, stats.beta(hp.a_xi + 2, hp.b_xi + 2).cdf).pvalue > 0.001

    def test_inactive_columns_get_spike_variance(self):
        config = tiny_config()
        data, state = prepared(config)
        view = state.views[0]
        view.zeta = np.array([0, 1])
        update_sticks_and_hypervariances(state, RngStream(15), config)
        assert np.all(view.tau2 == config.hyperparams.tau2_inf)

    @pytest.mark.parametrize("block", ["loadings", "specific"])
    def test_slab_hypervariance_conditional(self, block):
        config = tiny_config(ranks=RankBounds(K_max=2, K_m_max=(2,)))
        data, state = prepared(config)
        view = state.views[1]
        draws = []
        for i in range(2000):
            view.zeta = np.array([1, 0])
            view.delta = np.array([1, 0])
            update_sticks_and_hypervariances(state, RngStream(18, ("rep", i)), config)
            variances = view.tau2 if block == "loadings" else view.chi2
            assert variances[1] == config.hyperparams.tau2_inf
            draws.append(variances[0])
        hp = config.hyperparams
        column = getattr(view, block)[:, 0]
        law = stats.invgamma(hp.a_L + view.p / 2, scale=hp.b_L + 0.5 * np.sum(column ** 2))
        assert stats.kstest(draws, law.cdf).pvalue > 0.001

    def test_response_slab_variance_conditional(self):
        config = tiny_config()
        data, state = prepared(config)
        resp = state.response
        resp.theta = np.array([0.8, -0.3])
        resp.theta_specific = [np.array([0.5]), np.array([0.01])]
        draws = []
        for i in range(2000):
            resp.active = np.array([1, 0])
            resp.active_specific = [np.array([1]), np.array([0])]
            update_sticks_and_hypervariances(state, RngStream(19, ("rep", i)), config)
            draws.append(resp.psi2)
        hp = config.hyperparams
        law = stats.invgamma(hp.a_theta + 1.0, scale=hp.b_theta + 0.5 * (0.8 ** 2 + 0.5 ** 2))
        assert stats.kstest(draws, law.cdf).pvalue > 0.001


def activation_probabilities(theta, xi, psi2, hp, mode):
    if mode == "conditional":
        slab = stats.norm(scale=np.sqrt(psi2)).logpdf(theta)
    else:
        slab = stats.t(df=2 * hp.a_theta, scale=np.sqrt(hp.b_theta / hp.a_theta)).logpdf(theta)
    spike = stats.norm(scale=np.sqrt(hp.psi2_inf)).logpdf(theta)
    return 1.0 / (1.0 + (1 - xi) / xi * np.exp(spike - slab))


class TestResponseActivation:
    @pytest.mark.parametrize("mode", ["collapsed", "conditional"])
    def test_bit_frequencies(self, mode):
        config = tiny_config(response_activation=mode)
        data, state = prepared(config)
        resp = state.response
        resp.theta = np.array([0.15, 0.05])
        resp.theta_specific = [np.array([0.1]), np.array([0.3])]
        resp.xi, resp.psi2 = 0.4, 0.05
        counts = np.zeros(4)
        for i in range(REPS):
            update_memberships(state, data, RngStream(20, ("rep", i)), config)
            counts += np.concatenate([resp.active] + list(resp.active_specific))
        expected = activation_probabilities(resp.stacked, 0.4, 0.05, config.hyperparams, mode)
        se = np.sqrt(expected * (1 - expected) / REPS)
        assert np.all(np.abs(counts / REPS - expected) < 4 * se + 1e-3)


class TestMissingData:
    def test_patterns_group_subjects(self):
        data, _ = prepared(tiny_config(), masked=True)
        patterns, groups = observation_patterns(data)
        assert patterns.shape[0] == 3
        assert groups[0] == groups[2] == groups[3] == groups[5]

    def test_imputation_keeps_observed(self):
        data, state = prepared(tiny_config(), masked=True)
        completed = impute_missing(state, data, RngStream(16))
        for x, w, c in zip(data.views, data.masks, completed):
            np.testing.assert_array_equal(c[w], x[w])
            assert np.all(np.isfinite(c))
        assert completed[1][1, 2] != 0.0

    def test_imputation_draws_from_the_conditional(self):
        data, state = prepared(tiny_config(), masked=True)
        view = state.views[1]
        draws = np.array([
            impute_missing(state, data, RngStream(17, ("rep", i)))[1][1, 2] for i in range(REPS)
        ])
        mean = view.mu[2] + state.eta[1] @ view.loadings[2] + view.phi[1] @ view.specific[2]
        assert_gaussian(draws[:, None], np.array([mean]), np.array([[view.sigma2[2]]]))

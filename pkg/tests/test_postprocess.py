import json

import numpy as np
import pytest

from conftest import tiny_config, tiny_dataset
from jafar.config import RankBounds
from jafar.data import standardize
from jafar.errors import PostprocessError
from jafar.gibbs import ChainArchive, GibbsSampler, load_archive, sample_prior_state
from jafar.postprocess import (
    column_sources,
    match_columns,
    modal_rank_filter,
    multiview_varimax,
    postprocess_chain,
    save_aligned,
    signed_permutation,
    transform_state,
    varimax,
    varimax_objective,
)
from jafar.rng import RngStream


def random_orthogonal(gen, K):
    q, r = np.linalg.qr(gen.standard_normal((K, K)))
    return q * np.sign(np.diag(r))


def simple_structure(gen, rows_per_block=4, K=3):
    loadings = np.zeros((rows_per_block * K, K))
    for k in range(K):
        loadings[k * rows_per_block:(k + 1) * rows_per_block, k] = gen.uniform(0.8, 1.0, rows_per_block)
    return loadings


def archive_of(states):
    return ChainArchive(
        states=states,
        iterations=list(range(1, len(states) + 1)),
        ranks=np.array([s.ranks for s in states]),
        seed=0,
        config={},
    )


class TestVarimax:
    def test_objective_never_decreases(self):
        gen = np.random.default_rng(0)
        views = [gen.standard_normal((8, 4)), gen.standard_normal((5, 4))]
        result = multiview_varimax(views)
        assert result.objective >= varimax_objective(views) - 1e-10
        assert np.all(np.diff(result.trace) >= -1e-12)
        assert result.converged

    def test_rotation_is_orthogonal(self):
        gen = np.random.default_rng(1)
        result = multiview_varimax([gen.standard_normal((10, 5))])
        np.testing.assert_allclose(result.rotation.T @ result.rotation, np.eye(5), atol=1e-10)

    def test_recovers_simple_structure(self):
        gen = np.random.default_rng(2)
        truth = simple_structure(gen)
        rotated = truth @ random_orthogonal(gen, 3)
        result = varimax(rotated)
        recovered = rotated @ result.rotation
        perm, signs = match_columns(recovered, truth)
        np.testing.assert_allclose(recovered @ signed_permutation(perm, signs), truth, atol=1e-3)

    def test_single_column_is_untouched(self):
        result = multiview_varimax([np.ones((4, 1))])
        np.testing.assert_array_equal(result.rotation, np.eye(1))
        assert result.sweeps == 0

    def test_multiview_shares_one_rotation(self):
        gen = np.random.default_rng(3)
        truth = simple_structure(gen)
        q = random_orthogonal(gen, 3)
        views = [truth[:6] @ q, truth[6:] @ q]
        result = multiview_varimax(views)
        stacked = np.vstack([v @ result.rotation for v in views])
        perm, signs = match_columns(stacked, truth)
        np.testing.assert_allclose(stacked @ signed_permutation(perm, signs), truth, atol=1e-3)


class TestMatching:
    def test_recovers_known_signed_permutation(self):
        gen = np.random.default_rng(4)
        pivot = gen.standard_normal((6, 3)) * np.array([1.0, 2.0, 3.0])
        sample = pivot[:, [2, 0, 1]] * np.array([1.0, -1.0, 1.0])
        perm, signs = match_columns(sample, pivot)
        np.testing.assert_allclose(sample @ signed_permutation(perm, signs), pivot)

    def test_signed_permutation_matrix(self):
        perm, signs = np.array([1, 0]), np.array([-1.0, 1.0])
        sample = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(sample @ signed_permutation(perm, signs), sample[:, perm] * signs)

    def test_randomized_self_matches(self):
        gen = np.random.default_rng(6)
        for _ in range(1000):
            K = int(gen.integers(1, 7))
            pivot = gen.standard_normal((int(gen.integers(3, 11)), K))
            perm = gen.permutation(K)
            signs = gen.choice([-1.0, 1.0], size=K)
            sample = np.empty_like(pivot)
            sample[:, perm] = pivot * signs
            found_perm, found_signs = match_columns(sample, pivot)
            np.testing.assert_array_equal(found_perm, perm)
            np.testing.assert_array_equal(found_signs, signs)


class TestTransformState:
    def test_covariance_and_fit_are_invariant(self):
        gen = np.random.default_rng(5)
        config = tiny_config(ranks=RankBounds(K_max=3, K_m_max=(2,)))
        state = sample_prior_state(config, 6, (3, 4), RngStream(1))
        shared = random_orthogonal(gen, 3)
        specific = [random_orthogonal(gen, 2), random_orthogonal(gen, 2)]
        out = transform_state(state, shared, specific)
        for a, b in zip(state.views, out.views):
            np.testing.assert_allclose(a.loadings @ a.loadings.T, b.loadings @ b.loadings.T, atol=1e-10)
            np.testing.assert_allclose(a.specific @ a.specific.T, b.specific @ b.specific.T, atol=1e-10)
        np.testing.assert_allclose(
            state.stacked_factors() @ state.response.stacked,
            out.stacked_factors() @ out.response.stacked,
            atol=1e-10,
        )
        np.testing.assert_allclose(out.views[0].loadings, state.views[0].loadings @ shared)

    def test_hyperparameters_follow_their_columns(self):
        config = tiny_config(ranks=RankBounds(K_max=3, K_m_max=(2,)))
        state = sample_prior_state(config, 6, (3, 4), RngStream(2))
        for view in state.views:
            view.zeta = np.array([2, 0, 1])
            view.tau2 = np.array([1.0, 2.0, 3.0])
        state.response.active = np.array([1, 0, 0])
        shared = signed_permutation(np.array([1, 0, 2]), np.array([1.0, -1.0, 1.0]))
        swap = signed_permutation(np.array([1, 0]), np.ones(2))
        out = transform_state(state, shared, [swap, swap])
        for raw, view in zip(state.views, out.views):
            np.testing.assert_array_equal(view.tau2, [2.0, 1.0, 3.0])
            np.testing.assert_array_equal(view.shared_active(), [False, True, False])
            np.testing.assert_array_equal(view.chi2, raw.chi2[[1, 0]])
            np.testing.assert_array_equal(view.nu, raw.nu)
        np.testing.assert_array_equal(out.response.active, [0, 1, 0])
        np.testing.assert_array_equal(out.response.active_specific[1], state.response.active_specific[1][[1, 0]])

    def test_column_sources_of_a_rotation(self):
        c, s = np.cos(0.3), np.sin(0.3)
        rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_array_equal(column_sources(rotation), [0, 1, 2])
        np.testing.assert_array_equal(column_sources(rotation[:, [2, 0, 1]]), [2, 0, 1])
        assert column_sources(np.eye(0)).size == 0


class TestModalRank:
    def test_off_mode_samples_are_excluded(self):
        config = tiny_config()
        states = [sample_prior_state(config, 4, (3, 4), RngStream(i), ranks=(2, [1, 1])) for i in range(3)]
        states.insert(1, sample_prior_state(config, 4, (3, 4), RngStream(9), ranks=(1, [1, 1])))
        modal, keep, excluded = modal_rank_filter(archive_of(states))
        assert modal == (2, 1, 1)
        assert keep == [0, 2, 3]
        assert excluded == [2]

    def test_too_few_samples(self):
        state = sample_prior_state(tiny_config(), 4, (3, 4), RngStream(0))
        with pytest.raises(PostprocessError):
            postprocess_chain(archive_of([state]))


class TestPostprocessChain:
    @pytest.fixture(scope="class")
    def archive(self):
        data = standardize(tiny_dataset())[0]
        return GibbsSampler(tiny_config(ranks=RankBounds(K_max=3, K_m_max=(2,))), data).run()

    def test_alignment_preserves_induced_covariance(self, archive):
        aligned = postprocess_chain(archive)
        assert aligned.report()["n_aligned"] == len(archive)
        for raw, out in zip(archive.states, aligned.states):
            for a, b in zip(raw.views, out.views):
                np.testing.assert_allclose(a.loadings @ a.loadings.T, b.loadings @ b.loadings.T, atol=1e-10)
            np.testing.assert_allclose(
                raw.eta @ raw.response.theta, out.eta @ out.response.theta, atol=1e-10
            )

    def test_transforms_reproduce_aligned_samples(self, archive):
        aligned = postprocess_chain(archive)
        for raw, out, t in zip(archive.states, aligned.states, aligned.shared_transforms):
            np.testing.assert_allclose(raw.views[1].loadings @ t, out.views[1].loadings, atol=1e-10)

    def test_threads_do_not_change_the_result(self, archive):
        one = postprocess_chain(archive, n_jobs=1)
        two = postprocess_chain(archive, n_jobs=2)
        for a, b in zip(one.states, two.states):
            np.testing.assert_array_equal(a.views[0].loadings, b.views[0].loadings)

    def test_save_aligned(self, archive, tmp_path):
        aligned = postprocess_chain(archive)
        save_aligned(aligned, archive, tmp_path / "aligned")
        report = json.loads((tmp_path / "aligned" / "report.json").read_text())
        assert report["pivot_iteration"] in archive.iterations
        loaded = load_archive(tmp_path / "aligned")
        assert loaded.meta["aligned"] is True
        np.testing.assert_array_equal(loaded.states[0].views[0].loadings, aligned.states[0].views[0].loadings)

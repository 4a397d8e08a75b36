import numpy as np
import pytest

from jafar.copula import MarginalModel, from_latent, monotone_stress, to_latent
from jafar.data import MultiviewDataset
from jafar.errors import MarginError


def single_view(column, mask=None):
    x = np.asarray(column, dtype=float).reshape(-1, 1)
    w = np.ones_like(x, dtype=bool) if mask is None else np.asarray(mask).reshape(-1, 1)
    return MultiviewDataset(views=(x,), masks=(w,))


class TestToLatent:
    def test_probit_of_scaled_ecdf(self):
        latent, _ = to_latent(single_view([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(latent.views[0][:, 0], [-0.6745, 0.0, 0.6745], atol=1e-4)

    def test_maximum_stays_finite(self):
        latent, _ = to_latent(single_view([0.5, 9.0, 2.0, 4.0]))
        assert np.all(np.isfinite(latent.views[0]))

    def test_ties_share_values(self):
        latent, _ = to_latent(single_view([0.1, 0.7, 0.7, 1.3, 2.2]))
        z = latent.views[0][:, 0]
        assert z[1] == z[2]

    def test_rank_order_preserved(self):
        x = np.random.default_rng(0).standard_normal(200)
        latent, _ = to_latent(single_view(x))
        np.testing.assert_array_equal(np.argsort(latent.views[0][:, 0]), np.argsort(x))

    def test_missing_entries_untouched(self):
        latent, model = to_latent(single_view([1.0, 5.0, 2.0, 3.0], mask=[True, False, True, True]))
        assert not latent.masks[0][1, 0]
        assert model.supports[0][0].tolist() == [1.0, 2.0, 3.0]

    def test_all_missing_feature(self):
        with pytest.raises(MarginError, match="no observed"):
            to_latent(single_view([1.0, 2.0], mask=[False, False]))

    def test_discrete_feature_rejected(self):
        values = np.tile([0.0, 1.0, 2.0], 10)
        with pytest.raises(MarginError, match="discrete"):
            to_latent(single_view(values))

    def test_discrete_check_can_be_disabled(self):
        values = np.tile([0.0, 1.0, 2.0], 10)
        latent, _ = to_latent(single_view(values), max_levels=0)
        assert np.all(np.isfinite(latent.views[0]))


class TestFromLatent:
    def test_round_trip_is_exact(self):
        x = np.random.default_rng(1).gamma(2.0, size=50)
        latent, model = to_latent(single_view(x))
        np.testing.assert_array_equal(model.invert_view(0, latent.views[0])[:, 0], x)

    def test_clamps_to_support(self):
        support = np.array([1.0, 2.0, 3.0])
        assert from_latent(np.array([-10.0]), support)[0] == 1.0
        assert from_latent(np.array([10.0]), support)[0] == 3.0

    def test_median(self):
        assert from_latent(np.array([0.0]), np.array([1.0, 2.0, 3.0]))[0] == 2.0

    def test_monotone(self):
        support = np.sort(np.random.default_rng(2).standard_normal(30))
        values = from_latent(np.linspace(-4, 4, 1000), support)
        assert np.all(np.diff(values) >= 0)


class TestMarginalModel:
    def test_transform_new_data_clamps(self):
        _, model = to_latent(single_view([1.0, 2.0, 3.0]))
        z = model.transform(single_view([-5.0, 10.0])).views[0][:, 0]
        np.testing.assert_allclose(z, [-0.6745, 0.6745], atol=1e-4)

    def test_serializes(self):
        _, model = to_latent(single_view([1.0, 2.0, 3.0]))
        again = MarginalModel.from_dict(model.to_dict())
        assert again.supports[0][0].tolist() == [1.0, 2.0, 3.0]

    def test_invert_dataset(self):
        data = single_view([4.0, 1.0, 3.0])
        latent, model = to_latent(data)
        np.testing.assert_array_equal(model.invert(latent).views[0], data.views[0])


class TestMonotoneStress:
    def test_exp_and_cube(self):
        data = single_view([-1.0, 0.0, 2.0])
        np.testing.assert_allclose(monotone_stress(data, "exp").views[0][:, 0], np.exp([-1.0, 0.0, 2.0]))
        np.testing.assert_allclose(monotone_stress(data, "cube").views[0][:, 0], [-1.0, 0.0, 8.0])

    def test_latent_scale_is_invariant(self):
        x = np.random.default_rng(3).standard_normal(40)
        a, _ = to_latent(single_view(x))
        b, _ = to_latent(monotone_stress(single_view(x), "exp"))
        np.testing.assert_array_equal(a.views[0], b.views[0])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            monotone_stress(single_view([1.0]), "log")

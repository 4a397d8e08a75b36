"""
Gaussian copula layer: scaled empirical CDFs and their pseudo-inverse
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .data import MISSING_SENTINEL
from .errors import MarginError

MAX_DISCRETE_LEVELS = 10
ROUNDOFF = 1e-10


@dataclass(frozen=True, eq=False)
class MarginalModel:
    """Sorted observed values per feature, per view"""

    supports: tuple

    def ecdf(self, m, j, values):
        """Scaled ECDF n/(n+1) * (count <= t)/n, clamped to the support"""
        support = self.supports[m][j]
        n = support.shape[0]
        counts = np.searchsorted(support, values, side="right")
        return np.clip(counts, 1, n) / (n + 1.0)

    def transform(self, data):
        """Map a dataset to the latent normal scale with these margins"""
        views = []
        for m, (x, w) in enumerate(zip(data.views, data.masks)):
            z = np.zeros_like(x)
            for j in range(x.shape[1]):
                rows = w[:, j]
                z[rows, j] = ndtri(self.ecdf(m, j, x[rows, j]))
            views.append(np.where(w, z, MISSING_SENTINEL))
        return data.with_views(views)

    def invert_view(self, m, z):
        """Back-transform an n x p_m block of latent values"""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.empty_like(z)
        for j in range(z.shape[1]):
            out[:, j] = from_latent(z[:, j], self.supports[m][j])
        return out

    def invert(self, data_z):
        views = [
            np.where(w, self.invert_view(m, z), MISSING_SENTINEL)
            for m, (z, w) in enumerate(zip(data_z.views, data_z.masks))
        ]
        return data_z.with_views(views)

    def to_dict(self):
        return {"supports": [[s.tolist() for s in view] for view in self.supports]}

    @classmethod
    def from_dict(cls, payload):
        return cls(tuple(tuple(np.asarray(s, dtype=float) for s in view) for view in payload["supports"]))


def check_continuous(values, feature, max_levels=MAX_DISCRETE_LEVELS):
    levels = np.unique(values)
    heavy_ties = levels.size < 0.5 * values.size
    if heavy_ties and levels.size <= max_levels and np.all(levels == np.round(levels)):
        raise MarginError(
            f"feature {feature!r} looks discrete ({levels.size} integer levels); "
            "the empirical-CDF copula supports continuous margins only"
        )


def to_latent(data, max_levels=MAX_DISCRETE_LEVELS):
    """Fit scaled-ECDF margins on observed entries and map to z = probit(F(x))"""
    supports = []
    for m, (x, w) in enumerate(zip(data.views, data.masks)):
        view_supports = []
        for j in range(x.shape[1]):
            observed = x[w[:, j], j]
            name = data.feature_names[m][j]
            if observed.size == 0:
                raise MarginError(f"feature {name!r} has no observed entries")
            if max_levels:
                check_continuous(observed, name, max_levels)
            view_supports.append(np.sort(observed))
        supports.append(tuple(view_supports))
    model = MarginalModel(tuple(supports))
    return model.transform(data), model


def from_latent(z, support):
    """Smallest support value whose scaled ECDF reaches probit^-1(z)"""
    support = np.asarray(support, dtype=float)
    n = support.shape[0]
    levels = np.searchsorted(support, support, side="right") / (n + 1.0)
    u = ndtr(np.asarray(z, dtype=float))
    index = np.searchsorted(levels, u - ROUNDOFF, side="left")
    return support[np.clip(index, 0, n - 1)]


def monotone_stress(data, kind="exp"):
    """Monotone-transform every view to create non-Gaussian margins"""
    transforms = {"exp": np.exp, "cube": lambda v: v ** 3}
    if kind not in transforms:
        raise ValueError(f"unknown monotone transform {kind!r}")
    fn = transforms[kind]
    views = [np.where(w, fn(x), MISSING_SENTINEL) for x, w in zip(data.views, data.masks)]
    return data.with_views(views)

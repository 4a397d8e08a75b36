"""
Gibbs state containers.

Membership labels are stored 0-based: shared column h (0-based) is active
in view m iff zeta[m][h] > h, which is the same rule as the 1-based form.
JFR states carry zero-width specific blocks.
"""

import copy
from dataclasses import dataclass, field

import numpy as np


def stick_weights(nu):
    """omega_h = nu_h * prod_{l<h} (1 - nu_l)"""
    nu = np.asarray(nu, dtype=float)
    if nu.size == 0:
        return nu.copy()
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - nu[:-1])))
    return nu * remaining


def prob_active(nu):
    """Prior P[zeta_h > h] for every column h under the sticks nu"""
    return 1.0 - np.cumsum(stick_weights(nu))


@dataclass
class ViewState:
    mu: np.ndarray
    loadings: np.ndarray
    specific: np.ndarray
    sigma2: np.ndarray
    tau2: np.ndarray
    chi2: np.ndarray
    zeta: np.ndarray
    delta: np.ndarray
    nu: np.ndarray
    rho: np.ndarray
    phi: np.ndarray

    @property
    def p(self):
        return self.loadings.shape[0]

    @property
    def n_specific(self):
        return self.specific.shape[1]

    @property
    def omega(self):
        return stick_weights(self.nu)

    @property
    def varpi(self):
        return stick_weights(self.rho)

    def shared_active(self):
        return self.zeta > np.arange(self.zeta.size)

    def specific_active(self):
        return self.delta > np.arange(self.delta.size)


@dataclass
class ResponseState:
    mu: float
    theta: np.ndarray
    theta_specific: list
    sigma2: float
    active: np.ndarray
    active_specific: list
    psi2: float
    xi: float

    def coefficient_variances(self, psi2_inf):
        """Spike or slab variance of every coefficient, shared block first"""
        bits = np.concatenate([self.active] + list(self.active_specific)).astype(bool)
        return np.where(bits, self.psi2, psi2_inf)

    @property
    def stacked(self):
        return np.concatenate([self.theta] + list(self.theta_specific))


@dataclass
class ModelState:
    views: list
    eta: np.ndarray
    response: ResponseState | None = None
    iteration: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_views(self):
        return len(self.views)

    @property
    def n_shared(self):
        return self.views[0].loadings.shape[1]

    @property
    def n_specific(self):
        return [v.n_specific for v in self.views]

    @property
    def ranks(self):
        return (self.views[0].loadings.shape[1], *self.n_specific)

    @property
    def total_rank(self):
        return sum(self.ranks)

    def copy(self):
        return copy.deepcopy(self)

    def specific_offsets(self):
        """Column offset of each specific block inside the stacked factors"""
        offsets, start = [], self.views[0].loadings.shape[1]
        for v in self.views:
            offsets.append(start)
            start += v.n_specific
        return offsets

    def stacked_loadings(self, m):
        """Lambda-tilde_m = [Lambda_m, 0, ..., Gamma_m, ..., 0]"""
        view = self.views[m]
        out = np.zeros((view.p, self.total_rank))
        K = view.loadings.shape[1]
        out[:, :K] = view.loadings
        start = self.specific_offsets()[m]
        out[:, start:start + view.n_specific] = view.specific
        return out

    def stacked_factors(self):
        return np.concatenate([self.eta] + [v.phi for v in self.views], axis=1)

    def set_stacked_factors(self, factors):
        K = self.views[0].loadings.shape[1]
        self.eta = factors[:, :K].copy()
        for view, start in zip(self.views, self.specific_offsets()):
            view.phi = factors[:, start:start + view.n_specific].copy()

    def to_arrays(self):
        """Flat name -> array mapping for archiving"""
        arrays = {"eta": self.eta}
        for m, v in enumerate(self.views, start=1):
            arrays.update({
                f"mu_{m}": v.mu, f"lambda_{m}": v.loadings, f"gamma_{m}": v.specific,
                f"sigma2_{m}": v.sigma2, f"tau2_{m}": v.tau2, f"chi2_{m}": v.chi2,
                f"zeta_{m}": v.zeta, f"delta_{m}": v.delta, f"nu_{m}": v.nu,
                f"rho_{m}": v.rho, f"phi_{m}": v.phi,
            })
        r = self.response
        if r is not None:
            arrays.update({
                "mu_y": np.array([r.mu]), "theta": r.theta, "sigma2_y": np.array([r.sigma2]),
                "r": r.active, "psi2": np.array([r.psi2]), "xi": np.array([r.xi]),
            })
            for m, (t, a) in enumerate(zip(r.theta_specific, r.active_specific), start=1):
                arrays[f"theta_{m}"] = t
                arrays[f"r_{m}"] = a
        return arrays

    @classmethod
    def from_arrays(cls, arrays, n_views, iteration=0):
        views = []
        for m in range(1, n_views + 1):
            views.append(ViewState(
                mu=arrays[f"mu_{m}"], loadings=arrays[f"lambda_{m}"], specific=arrays[f"gamma_{m}"],
                sigma2=arrays[f"sigma2_{m}"], tau2=arrays[f"tau2_{m}"], chi2=arrays[f"chi2_{m}"],
                zeta=arrays[f"zeta_{m}"].astype(np.int64), delta=arrays[f"delta_{m}"].astype(np.int64),
                nu=arrays[f"nu_{m}"], rho=arrays[f"rho_{m}"], phi=arrays[f"phi_{m}"],
            ))
        response = None
        if "theta" in arrays:
            response = ResponseState(
                mu=float(arrays["mu_y"][0]), theta=arrays["theta"],
                theta_specific=[arrays[f"theta_{m}"] for m in range(1, n_views + 1)],
                sigma2=float(arrays["sigma2_y"][0]), active=arrays["r"].astype(np.int64),
                active_specific=[arrays[f"r_{m}"].astype(np.int64) for m in range(1, n_views + 1)],
                psi2=float(arrays["psi2"][0]), xi=float(arrays["xi"][0]),
            )
        return cls(views=views, eta=arrays["eta"], response=response, iteration=iteration)

    def slim(self):
        """Copy without factor scores"""
        out = self.copy()
        out.eta = np.zeros((0, out.eta.shape[1]))
        for v in out.views:
            v.phi = np.zeros((0, v.n_specific))
        return out

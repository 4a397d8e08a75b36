"""
Multiview data simulator with block-structured loadings and known truth
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import build_section
from .data import MISSING_SENTINEL, MultiviewDataset
from .distributions import draw_inverse_gamma
from .errors import ConfigError, DataError
from .gibbs.archive import read_arrays, write_arrays
from .rng import RngStream


@dataclass(frozen=True)
class SimConfig:
    p: tuple = (100, 200, 300)
    n: int = 50
    n_test: int = 50
    K_true: int = 4
    K_m_true: tuple = (9, 10, 11)
    response_factors: int = 9
    groups: int = 10
    group_weights: tuple | None = None
    pi_group: float = 0.5
    pi_sign: float = 0.5
    pi_entry: float = 0.9
    v2: float = 0.1
    r_damp: float = 1e-2
    hyper_a: float = 5.0
    hyper_b: float = 3.0
    snr_shape: float = 10.0
    snr_rate: float = 30.0
    response_snr: float = 1.0
    view_sparsity: bool = True
    view_activity: float = 0.5
    train_missing_rate: float = 0.0
    test_missing_view_rate: float = 0.0
    seed: int = 0

    @property
    def n_views(self):
        return len(self.p)

    def validate(self):
        for name in ("pi_group", "pi_sign", "pi_entry", "view_activity",
                     "train_missing_rate", "test_missing_view_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"simulation.{name} must lie in [0, 1]")
        if self.n < 2 or self.n_test < 0:
            raise ConfigError("simulation.n must be >= 2 and n_test >= 0")
        if not self.p or any(p < 1 for p in self.p):
            raise ConfigError("simulation.p entries must be >= 1")
        if len(self.K_m_true) != self.n_views:
            raise ConfigError("simulation.K_m_true needs one entry per view")
        if self.K_true < 0 or any(k < 0 for k in self.K_m_true) or self.response_factors < 0:
            raise ConfigError("simulation ranks must be nonnegative")
        if self.groups < 1:
            raise ConfigError("simulation.groups must be >= 1")
        if self.group_weights is not None:
            w = np.asarray(self.group_weights, dtype=float)
            if w.size != self.groups or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
                raise ConfigError("simulation.group_weights must be G nonnegative weights summing to 1")
        for name in ("v2", "hyper_a", "hyper_b", "snr_shape", "snr_rate", "response_snr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"simulation.{name} must be positive")
        if self.r_damp < 0:
            raise ConfigError("simulation.r_damp must be nonnegative")
        return self


def sim_config_from_dict(tree):
    return build_section(SimConfig, tree.get("simulation"), "simulation").validate()


def gen_loading_matrix(rng, p, K, config):
    """Grouped, signed, sparse loadings plus a damped noise layer; returns (matrix, groups)"""
    gen = rng.generator if isinstance(rng, RngStream) else rng
    G = config.groups
    weights = np.full(G, 1.0 / G) if config.group_weights is None else np.asarray(config.group_weights)
    if K == 0:
        return np.zeros((p, 0)), gen.choice(G, size=p, p=weights)
    magnitude = gen.beta(config.hyper_a, config.hyper_b, size=G)
    hyper = np.where(np.arange(1, G + 1) % 2 == 0, 1.0, -1.0) * magnitude
    group_on = gen.random((G, K)) < config.pi_group
    group_sign = 2.0 * (gen.random((G, K)) < config.pi_sign) - 1.0
    groups = gen.choice(G, size=p, p=weights)
    entry_on = gen.random((p, K)) < config.pi_entry
    scale = np.sqrt(config.v2 / K)
    main = hyper[groups][:, None] / np.sqrt(K) + scale * gen.standard_normal((p, K))
    spurious = np.sqrt(config.r_damp) * scale * gen.standard_normal((p, K))
    loadings = group_on[groups] * group_sign[groups] * entry_on * main + spurious
    return loadings, groups


@dataclass(eq=False)
class SimTruth:
    loadings: list
    specific: list
    sigma2: list
    mu: list
    theta: np.ndarray
    theta_specific: list
    mu_y: float
    sigma2_y: float
    snr: list
    groups: list
    view_activity: np.ndarray
    eta: np.ndarray
    phi: list
    eta_test: np.ndarray
    phi_test: list
    correlation: dict = field(default_factory=dict)

    @property
    def n_views(self):
        return len(self.loadings)

    def covariance(self):
        blocks = {}
        for m in range(self.n_views):
            for m2 in range(self.n_views):
                block = self.loadings[m] @ self.loadings[m2].T
                if m == m2:
                    block = block + self.specific[m] @ self.specific[m].T + np.diag(self.sigma2[m])
                blocks[m, m2] = block
        return blocks

    def induced_correlation(self):
        blocks = self.covariance()
        sd = [np.sqrt(np.diag(blocks[m, m])) for m in range(self.n_views)]
        return {(m, m2): b / np.outer(sd[m], sd[m2]) for (m, m2), b in blocks.items()}


def _view_activity(gen, M, K, probability):
    """Per (view, shared column) activity with at least two active views per column"""
    if M < 2:
        return np.ones((M, K), dtype=bool)
    active = np.zeros((M, K), dtype=bool)
    for h in range(K):
        draw = gen.random(M) < probability
        while draw.sum() < 2:
            draw = gen.random(M) < probability
        active[:, h] = draw
    return active


def _draw_views(gen, truth, n, eta, phi):
    views = []
    for m in range(truth.n_views):
        mean = truth.mu[m] + eta @ truth.loadings[m].T + phi[m] @ truth.specific[m].T
        views.append(mean + gen.standard_normal(mean.shape) * np.sqrt(truth.sigma2[m]))
    theta = np.concatenate([truth.theta] + truth.theta_specific)
    stacked = np.concatenate([eta] + phi, axis=1)
    y = truth.mu_y + stacked @ theta + gen.standard_normal(n) * np.sqrt(truth.sigma2_y)
    return views, y


def gen_dataset(config, rng=None):
    """Draw train and test datasets that share one set of true parameters"""
    config.validate()
    rng = rng or RngStream(config.seed, ("simulate",))
    M = config.n_views
    K = config.K_true
    gen = rng.child("structure").generator
    activity = _view_activity(gen, M, K, config.view_activity) if config.view_sparsity else np.ones((M, K), bool)
    loadings, specific, sigma2, snr, groups = [], [], [], [], []
    for m, p_m in enumerate(config.p):
        lam, g = gen_loading_matrix(rng.child("lambda", m), p_m, K, config)
        if K:
            noise_only = np.sqrt(config.r_damp * config.v2 / K) * gen.standard_normal((p_m, K))
            lam = np.where(activity[m][None, :], lam, noise_only)
        gam, _ = gen_loading_matrix(rng.child("gamma", m), p_m, config.K_m_true[m], config)
        signal = np.sum(lam ** 2, axis=1) + np.sum(gam ** 2, axis=1)
        ratio = draw_inverse_gamma(gen, config.snr_shape, config.snr_rate, size=p_m)
        loadings.append(lam)
        specific.append(gam)
        snr.append(ratio)
        sigma2.append(np.where(signal > 0, signal / ratio, 1.0))
        groups.append(g)

    total = K + sum(config.K_m_true)
    chosen = np.sort(gen.choice(total, size=min(config.response_factors, total), replace=False))
    theta_all = np.zeros(total)
    theta_all[chosen] = gen.beta(config.hyper_a, config.hyper_b, size=chosen.size) * gen.choice([-1.0, 1.0], size=chosen.size)
    signal_y = float(theta_all @ theta_all)
    sigma2_y = signal_y / config.response_snr if signal_y > 0 else 1.0
    bounds = np.cumsum([K] + list(config.K_m_true))

    factors = rng.child("factors").generator
    eta = factors.standard_normal((config.n, K))
    phi = [factors.standard_normal((config.n, k)) for k in config.K_m_true]
    eta_test = factors.standard_normal((config.n_test, K))
    phi_test = [factors.standard_normal((config.n_test, k)) for k in config.K_m_true]

    truth = SimTruth(
        loadings=loadings, specific=specific, sigma2=sigma2, mu=[np.zeros(p) for p in config.p],
        theta=theta_all[:K], theta_specific=[theta_all[bounds[m]:bounds[m + 1]] for m in range(M)],
        mu_y=0.0, sigma2_y=sigma2_y, snr=snr, groups=groups, view_activity=activity,
        eta=eta, phi=phi, eta_test=eta_test, phi_test=phi_test,
    )
    truth.correlation = truth.induced_correlation()

    noise = rng.child("noise").generator
    train_views, y = _draw_views(noise, truth, config.n, eta, phi)
    test_views, y_test = _draw_views(noise, truth, config.n_test, eta_test, phi_test)

    missing = rng.child("missing").generator
    train_masks = [missing.random(x.shape) >= config.train_missing_rate for x in train_views]
    test_masks = [np.ones(x.shape, dtype=bool) for x in test_views]
    if config.test_missing_view_rate > 0 and M > 1:
        for i in range(config.n_test):
            drop = missing.random(M) < config.test_missing_view_rate
            if drop.all():
                drop[missing.integers(M)] = False
            for m in np.flatnonzero(drop):
                test_masks[m][i] = False

    names = tuple(tuple(f"v{m + 1}_f{j + 1}" for j in range(p)) for m, p in enumerate(config.p))
    view_names = tuple(f"view_{m + 1}" for m in range(M))

    def build(views, masks, response, prefix):
        return MultiviewDataset(
            views=tuple(np.where(w, x, MISSING_SENTINEL) for x, w in zip(views, masks)),
            masks=tuple(masks),
            response=response,
            subject_ids=tuple(f"{prefix}{i + 1}" for i in range(response.shape[0])),
            feature_names=names,
            view_names=view_names,
        )

    train = build(train_views, train_masks, y, "s")
    test = build(test_views, test_masks, y_test, "t") if config.n_test else None
    return train, test, truth


def save_truth(truth, directory, config=None):
    """Write the truth with the archive float format"""
    directory = Path(directory)
    records = [("theta", 0, truth.theta), ("mu_y", 0, [truth.mu_y]), ("sigma2_y", 0, [truth.sigma2_y]),
               ("eta", 0, truth.eta), ("eta_test", 0, truth.eta_test),
               ("view_activity", 0, truth.view_activity.astype(float))]
    for m in range(truth.n_views):
        k = m + 1
        records += [
            (f"lambda_{k}", 0, truth.loadings[m]), (f"gamma_{k}", 0, truth.specific[m]),
            (f"sigma2_{k}", 0, truth.sigma2[m]), (f"mu_{k}", 0, truth.mu[m]),
            (f"theta_{k}", 0, truth.theta_specific[m]), (f"snr_{k}", 0, truth.snr[m]),
            (f"groups_{k}", 0, truth.groups[m].astype(float)), (f"phi_{k}", 0, truth.phi[m]),
            (f"phi_test_{k}", 0, truth.phi_test[m]),
        ]
    write_arrays(records, directory)
    manifest = {"format": "jafar-sim-truth", "n_views": truth.n_views}
    if config is not None:
        manifest["config"] = asdict(config)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return directory


def load_truth(directory):
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no truth manifest in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    a = read_arrays(directory)[0]
    M = manifest["n_views"]
    truth = SimTruth(
        loadings=[a[f"lambda_{m}"] for m in range(1, M + 1)],
        specific=[a[f"gamma_{m}"] for m in range(1, M + 1)],
        sigma2=[a[f"sigma2_{m}"] for m in range(1, M + 1)],
        mu=[a[f"mu_{m}"] for m in range(1, M + 1)],
        theta=a["theta"], theta_specific=[a[f"theta_{m}"] for m in range(1, M + 1)],
        mu_y=float(a["mu_y"][0]), sigma2_y=float(a["sigma2_y"][0]),
        snr=[a[f"snr_{m}"] for m in range(1, M + 1)],
        groups=[a[f"groups_{m}"].astype(np.int64) for m in range(1, M + 1)],
        view_activity=a["view_activity"].astype(bool),
        eta=a["eta"], phi=[a[f"phi_{m}"] for m in range(1, M + 1)],
        eta_test=a["eta_test"], phi_test=[a[f"phi_test_{m}"] for m in range(1, M + 1)],
    )
    truth.correlation = truth.induced_correlation()
    return truth

"""
Model configuration: typed settings, validation and the config-file reader
"""

import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError

EXPECTED_RANK_TERMS = 10_000


class Family(str, Enum):
    JFR = "JFR"
    JAFAR = "JAFAR"


class PriorVariant(str, Enum):
    ICUSP = "ICUSP"
    DCUSP = "DCUSP"
    NAIVE = "NAIVE"
    FULLD = "FULLD"


@dataclass(frozen=True)
class HyperParams:
    """Prior hyperparameters; defaults are the robust values used throughout"""

    a_sigma: float = 3.0
    b_sigma: float = 1.0
    upsilon2_m: float = 0.25
    upsilon2_y: float = 0.25
    a_L: float = 0.5
    b_L: float = 0.1
    tau2_inf: float = 0.005
    a_theta: float = 0.5
    b_theta: float = 0.1
    psi2_inf: float = 0.005
    a_xi: float = 3.0
    b_xi: float = 2.0
    # Scalar or one value per view; in JFR alpha_lambda plays alpha_L.
    alpha_lambda: float | tuple = 5.0
    alpha_gamma: float | tuple = 5.0

    def alpha_shared(self, m):
        return _per_view(self.alpha_lambda, m)

    def alpha_specific(self, m):
        return _per_view(self.alpha_gamma, m)


def _per_view(value, m):
    if isinstance(value, (tuple, list)):
        return float(value[m])
    return float(value)


@dataclass(frozen=True)
class RankBounds:
    K_max: int = 20
    K_m_max: tuple | None = None

    def specific_bound(self, m, n_views):
        if self.K_m_max is None:
            return 0
        if len(self.K_m_max) == 1:
            return int(self.K_m_max[0])
        if len(self.K_m_max) != n_views:
            raise ConfigError(
                f"ranks.K_m_max has {len(self.K_m_max)} entries but the data has {n_views} views"
            )
        return int(self.K_m_max[m])


@dataclass(frozen=True)
class MCMCSettings:
    T_mcmc: int = 10000
    T_burnin: int = 5000
    T_thin: int = 10
    seed: int = 0
    progress_every: int = 500
    slim: bool = False


@dataclass(frozen=True)
class AdaptationSettings:
    t_adapt: int = 200
    d0: float = -0.5
    d1: float = -5e-4
    enabled: bool = True

    def probability(self, iteration):
        """Activation probability of the rank-adaptation move"""
        if iteration < self.t_adapt:
            return 0.0
        return math.exp(self.d0 + self.d1 * iteration)


@dataclass(frozen=True)
class PredictionSettings:
    draws_per_state: int = 1
    level: float = 0.9
    keep_draws: bool = False
    impute: bool = False


@dataclass(frozen=True)
class DataSettings:
    path: str | None = None
    test: str | None = None
    max_levels: int = 10


@dataclass(frozen=True)
class RuntimeSettings:
    threads: int | None = None


@dataclass(frozen=True)
class ModelConfig:
    family: Family = Family.JAFAR
    supervised: bool = True
    prior_variant: PriorVariant = PriorVariant.DCUSP
    hyperparams: HyperParams = field(default_factory=HyperParams)
    ranks: RankBounds = field(default_factory=lambda: RankBounds(K_max=20, K_m_max=(10,)))
    tempering: bool = False
    mcmc: MCMCSettings = field(default_factory=MCMCSettings)
    adaptation: AdaptationSettings = field(default_factory=AdaptationSettings)
    collapsed_factors: bool = True
    response_activation: str = "collapsed"
    copula: bool = False

    @property
    def is_jafar(self):
        return self.family is Family.JAFAR

    def validate(self):
        """Raise ConfigError on the first violated constraint"""
        hp = self.hyperparams
        for f in fields(hp):
            value = getattr(hp, f.name)
            values = value if isinstance(value, (tuple, list)) else (value,)
            if not values or any(not np.isfinite(v) or v <= 0 for v in values):
                raise ConfigError(f"hyperparams.{f.name} must be strictly positive, got {value!r}")
        if hp.b_L / hp.a_L <= hp.tau2_inf:
            raise ConfigError("hyperparams: b_L / a_L must exceed tau2_inf for increasing shrinkage")
        if hp.b_theta / hp.a_theta <= hp.psi2_inf:
            raise ConfigError("hyperparams: b_theta / a_theta must exceed psi2_inf")

        mc = self.mcmc
        if mc.T_mcmc < 1:
            raise ConfigError("mcmc.T_mcmc must be at least 1")
        if not 0 <= mc.T_burnin < mc.T_mcmc:
            raise ConfigError("mcmc.T_burnin must be nonnegative and smaller than mcmc.T_mcmc")
        if mc.T_thin < 1:
            raise ConfigError("mcmc.T_thin must be at least 1")
        if mc.progress_every < 1:
            raise ConfigError("mcmc.progress_every must be at least 1")

        ad = self.adaptation
        if ad.t_adapt < 1:
            raise ConfigError("adaptation.t_adapt must be at least 1")
        if ad.d1 > 0:
            raise ConfigError("adaptation.d1 must be nonpositive")

        if self.ranks.K_max < 1:
            raise ConfigError("ranks.K_max must be at least 1")
        if self.family is Family.JFR:
            if self.ranks.K_m_max is not None:
                raise ConfigError("ranks.K_m_max is not allowed for the JFR family")
            if self.prior_variant is not PriorVariant.ICUSP:
                raise ConfigError("the JFR family requires prior_variant = ICUSP")
        else:
            if self.prior_variant is PriorVariant.ICUSP:
                raise ConfigError("prior_variant ICUSP requires family = JFR")
            if self.ranks.K_m_max is None or any(k < 1 for k in self.ranks.K_m_max):
                raise ConfigError("ranks.K_m_max entries must be at least 1 for JAFAR")
        if self.response_activation not in ("collapsed", "conditional"):
            raise ConfigError("model.response_activation must be 'collapsed' or 'conditional'")
        return self


def q_ratio(alpha):
    return alpha / (1.0 + alpha)


def expected_rank(alphas, prior_variant=PriorVariant.DCUSP, terms=EXPECTED_RANK_TERMS):
    """Prior expected number of active shared columns"""
    q = np.asarray(alphas, dtype=float)[:, None] / (1.0 + np.asarray(alphas, dtype=float)[:, None])
    h = np.arange(1, terms + 1)[None, :]
    active = q ** h
    inactive = 1.0 - active
    none_active = np.prod(inactive, axis=0)
    if PriorVariant(prior_variant) in (PriorVariant.ICUSP, PriorVariant.NAIVE):
        return float(np.sum(1.0 - none_active))
    one_only = np.zeros(terms)
    for m in range(q.shape[0]):
        others = np.prod(np.delete(inactive, m, axis=0), axis=0)
        one_only += active[m] * others
    return float(np.sum(1.0 - none_active - one_only))


def alpha_for_expected_rank(target, n_views, prior_variant=PriorVariant.DCUSP, rule="sqrt"):
    """Common stick-breaking concentration giving roughly `target` shared factors"""
    if target <= 0:
        raise ConfigError("hyperparams.expected_rank must be positive")
    if rule == "sqrt":
        return target / math.sqrt(n_views)
    if rule != "exact":
        raise ConfigError(f"unknown expected-rank rule {rule!r}")

    def gap(alpha):
        return expected_rank([alpha] * n_views, prior_variant) - target

    hi = max(1.0, target)
    while gap(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise ConfigError(f"expected_rank {target} is not reachable")
    return brentq(gap, 1e-8, hi, xtol=1e-10)


SECTIONS = {
    "hyperparams": HyperParams,
    "ranks": RankBounds,
    "mcmc": MCMCSettings,
    "adaptation": AdaptationSettings,
    "data": DataSettings,
    "prediction": PredictionSettings,
    "runtime": RuntimeSettings,
}
TOP_LEVEL = {"model", "simulation", *SECTIONS}
MODEL_KEYS = {"family", "supervised", "prior_variant", "tempering", "collapsed_factors",
              "response_activation", "copula"}


def read_config_file(path):
    """Read a TOML or JSON config tree"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            tree = json.loads(path.read_text(encoding="utf-8"))
        else:
            with open(path, "rb") as f:
                tree = tomllib.load(f)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    unknown = sorted(set(tree) - TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown table(s) in {path}: {', '.join(unknown)}")
    return tree


def build_section(cls, table, section):
    """Instantiate a settings dataclass from one config table"""
    table = dict(table or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    for key, value in table.items():
        if isinstance(value, list):
            table[key] = tuple(value)
    try:
        return cls(**table)
    except TypeError as e:
        raise ConfigError(f"invalid [{section}] table: {e}") from e


def model_config_from_dict(tree, n_views=None):
    """Build and validate a ModelConfig from a config tree"""
    model = dict(tree.get("model", {}))
    unknown = sorted(set(model) - MODEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) in [model]: {', '.join(unknown)}")
    try:
        family = Family(str(model.pop("family", "JAFAR")).upper())
        default_prior = "ICUSP" if family is Family.JFR else "DCUSP"
        prior = PriorVariant(str(model.pop("prior_variant", default_prior)).upper().replace("-", ""))
    except ValueError as e:
        raise ConfigError(f"[model]: {e}") from e

    hyper_table = dict(tree.get("hyperparams", {}))
    expected = hyper_table.pop("expected_rank", None)
    rule = hyper_table.pop("expected_rank_rule", "sqrt")
    hyper = build_section(HyperParams, hyper_table, "hyperparams")
    if expected is not None:
        views = n_views or 1
        alpha = alpha_for_expected_rank(float(expected), views, prior, rule)
        hyper = replace(hyper, alpha_lambda=alpha)

    ranks_table = tree.get("ranks")
    if ranks_table is None:
        ranks = RankBounds(K_max=20, K_m_max=None if family is Family.JFR else (10,))
    else:
        ranks = build_section(RankBounds, ranks_table, "ranks")

    config = ModelConfig(
        family=family,
        prior_variant=prior,
        hyperparams=hyper,
        ranks=ranks,
        mcmc=build_section(MCMCSettings, tree.get("mcmc"), "mcmc"),
        adaptation=build_section(AdaptationSettings, tree.get("adaptation"), "adaptation"),
        **model,
    )
    return config.validate()


def prediction_settings_from_dict(tree):
    settings = build_section(PredictionSettings, tree.get("prediction"), "prediction")
    if settings.draws_per_state < 1:
        raise ConfigError("prediction.draws_per_state must be at least 1")
    if not 0 < settings.level < 1:
        raise ConfigError("prediction.level must lie in (0, 1)")
    return settings


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    return value


def config_to_dict(config):
    """Fully-defaulted config tree, suitable for a run manifest"""
    tree = _plain(asdict(config))
    model = {k: tree.pop(k) for k in list(tree) if k in MODEL_KEYS}
    return {"model": model, **tree}


def data_settings_from_dict(tree):
    settings = build_section(DataSettings, tree.get("data"), "data")
    if settings.max_levels < 0:
        raise ConfigError("data.max_levels must be nonnegative")
    return settings


def runtime_settings_from_dict(tree):
    settings = build_section(RuntimeSettings, tree.get("runtime"), "runtime")
    if settings.threads is not None and settings.threads < 1:
        raise ConfigError("runtime.threads must be at least 1")
    return settings

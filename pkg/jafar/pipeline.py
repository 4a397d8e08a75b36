"""
Pipeline runner behind the CLI: simulate, fit, align, predict and metrics
"""

import json
import logging
import shutil
from dataclasses import asdict, replace
from pathlib import Path

import pandas as pd

from . import __version__
from .config import (
    config_to_dict,
    data_settings_from_dict,
    model_config_from_dict,
    prediction_settings_from_dict,
    runtime_settings_from_dict,
)
from .copula import MarginalModel, monotone_stress, to_latent
from .data import StandardizationRecord, load_dataset_dir, standardize, write_dataset
from .errors import ConfigError, DataError
from .gibbs import GibbsSampler, load_archive, save_archive
from .metrics import correlation_errors, count_active_factors, ess_summaries, predictive_metrics
from .parallel import default_threads
from .postprocess import postprocess_chain, save_aligned
from .prediction import impute_features, predict_features, predict_response
from .simulation import gen_dataset, load_truth, save_truth, sim_config_from_dict

logger = logging.getLogger(__name__)

PREPROCESSING_NAME = "preprocessing.json"
DRAWS_NAME = "predictive_draws.csv"


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class PipelineRunner:
    """One method per subcommand; every artifact lands under `out_dir`"""

    def __init__(self, tree=None, out_dir=".", seed=None, threads=None):
        self.tree = dict(tree or {})
        self.out_dir = Path(out_dir)
        self.seed = seed
        runtime = runtime_settings_from_dict(self.tree)
        self.threads = threads or runtime.threads or default_threads()
        self.data_settings = data_settings_from_dict(self.tree)

    def _write_manifest(self, command, config, outputs=None):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        payload = {"command": command, "version": __version__, "config": config}
        if outputs is not None:
            payload["outputs"] = sorted(outputs)
        write_json(self.out_dir / f"{command}_manifest.json", payload)

    def _require_dir(self, path, what):
        if path is None:
            raise ConfigError(f"no {what} given (flag or config)")
        path = Path(path)
        if not path.exists():
            raise DataError(f"{what} not found: {path}")
        return path

    def simulate(self, monotone=None):
        config = sim_config_from_dict(self.tree)
        if self.seed is not None:
            config = replace(config, seed=int(self.seed))
        train, test, truth = gen_dataset(config)
        if monotone:
            train = monotone_stress(train, monotone)
            test = monotone_stress(test, monotone) if test is not None else None
        write_dataset(train, self.out_dir / "train")
        if test is not None:
            write_dataset(test, self.out_dir / "test")
        save_truth(truth, self.out_dir / "truth", config)
        self._write_manifest("simulate", {"simulation": asdict(config), "monotone": monotone})
        logger.info("simulated n=%d n_test=%d p=%s seed=%d", config.n, config.n_test, list(config.p), config.seed)
        return {"train": train.n, "test": test.n if test is not None else 0, "p": list(config.p)}

    def fit(self, data_dir=None, copula=None):
        data_dir = self._require_dir(data_dir or self.data_settings.path, "dataset directory")
        data = load_dataset_dir(data_dir)
        config = model_config_from_dict(self.tree, n_views=data.n_views)
        if copula is not None:
            config = replace(config, copula=bool(copula))
        if self.seed is not None:
            config = replace(config, mcmc=replace(config.mcmc, seed=int(self.seed)))
        marginals = None
        if config.copula:
            data, marginals = to_latent(data, self.data_settings.max_levels)
        data, record = standardize(data)
        archive = GibbsSampler(config, data, n_jobs=self.threads).run()
        archive_dir = self.out_dir / "archive"
        save_archive(archive, archive_dir)
        write_json(
            archive_dir / PREPROCESSING_NAME,
            {"standardization": record.to_dict(), "marginals": marginals.to_dict() if marginals else None},
        )
        self._write_manifest("fit", config_to_dict(config))
        return {"stored": len(archive), "final_ranks": list(archive.ranks[-1].tolist()) if len(archive.ranks) else []}

    def align(self, archive_dir):
        archive_dir = self._require_dir(archive_dir, "archive")
        archive = load_archive(archive_dir)
        aligned = postprocess_chain(archive, n_jobs=self.threads)
        target = self.out_dir / "aligned"
        save_aligned(aligned, archive, target)
        if (archive_dir / PREPROCESSING_NAME).exists():
            shutil.copyfile(archive_dir / PREPROCESSING_NAME, target / PREPROCESSING_NAME)
        self._write_manifest("align", {"archive": str(archive_dir)})
        return aligned.report()

    def _preprocessing(self, archive_dir):
        path = Path(archive_dir) / PREPROCESSING_NAME
        if not path.exists():
            return None, None
        payload = json.loads(path.read_text(encoding="utf-8"))
        record = StandardizationRecord.from_dict(payload["standardization"])
        marginals = MarginalModel.from_dict(payload["marginals"]) if payload.get("marginals") else None
        return record, marginals

    def _prepared(self, archive_dir, test_dir):
        archive = load_archive(archive_dir)
        raw = load_dataset_dir(test_dir)
        record, marginals = self._preprocessing(archive_dir)
        data = raw.with_views(raw.views, keep_response=False)
        if marginals is not None:
            data = marginals.transform(data)
        if record is not None:
            data = record.apply(data)
        return archive, raw, data, record, marginals

    def predict(self, archive_dir, test_dir=None, target_view=None):
        archive_dir = self._require_dir(archive_dir, "archive")
        test_dir = self._require_dir(test_dir or self.data_settings.test, "test dataset directory")
        settings = prediction_settings_from_dict(self.tree)
        archive, raw, data, record, marginals = self._prepared(archive_dir, test_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        out = {}
        written = []
        if target_view is None:
            summary = predict_response(
                archive, data, settings.draws_per_state, settings.level, record=record,
                keep_draws=settings.keep_draws,
            )
            summary.to_frame(raw.subject_ids).to_csv(self.out_dir / "predictions.csv", index=False, float_format="%.17g")
            written.append("predictions.csv")
            out["predictions"] = raw.n
            if settings.keep_draws:
                draws = pd.DataFrame(
                    summary.draws.T, columns=[f"draw_{d + 1}" for d in range(summary.draws.shape[0])]
                )
                draws.insert(0, "subject", list(raw.subject_ids))
                draws.to_csv(self.out_dir / DRAWS_NAME, index=False, float_format="%.17g")
                written.append(DRAWS_NAME)
                out["draws"] = int(summary.draws.shape[0])
        else:
            t = int(target_view)
            if not 0 <= t < data.n_views:
                raise ConfigError(f"target view {t + 1} out of range 1..{data.n_views}")
            values = predict_features(archive, data, t, record=record, marginals=marginals,
                                      draws_per_state=settings.draws_per_state)
            table = pd.DataFrame(values, columns=list(raw.feature_names[t]))
            table.insert(0, "subject", list(raw.subject_ids))
            table.to_csv(self.out_dir / f"features_view_{t + 1}.csv", index=False, float_format="%.17g")
            written.append(f"features_view_{t + 1}.csv")
            out["features"] = int(values.size)
        if settings.impute:
            completed = impute_features(archive, data, original=raw, record=record, marginals=marginals,
                                        draws_per_state=settings.draws_per_state)
            for m, values in enumerate(completed):
                table = pd.DataFrame(values, columns=list(raw.feature_names[m]))
                table.insert(0, "subject", list(raw.subject_ids))
                table.to_csv(self.out_dir / f"imputed_view_{m + 1}.csv", index=False, float_format="%.17g")
                written.append(f"imputed_view_{m + 1}.csv")
            out["imputed"] = int(sum((~w).sum() for w in data.masks))
        self._write_manifest("predict", {"prediction": asdict(settings), "target_view": target_view}, written)
        return out

    def metrics(self, archive_dir, truth_dir=None, test_dir=None):
        archive_dir = self._require_dir(archive_dir, "archive")
        archive = load_archive(archive_dir)
        report = {
            "active_factors": count_active_factors(archive).to_dict(),
            "ess_percent": ess_summaries(archive),
            "n_states": len(archive),
        }
        if truth_dir is not None:
            truth = load_truth(self._require_dir(truth_dir, "truth directory"))
            report["correlation_errors"] = correlation_errors(archive, truth)
        test_dir = test_dir or self.data_settings.test
        if test_dir is not None:
            settings = prediction_settings_from_dict(self.tree)
            _, raw, data, record, _ = self._prepared(archive_dir, self._require_dir(test_dir, "test dataset directory"))
            y = raw.require_response()
            summary = predict_response(archive, data, settings.draws_per_state, settings.level, record=record)
            report["prediction"] = predictive_metrics(summary, y)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_json(self.out_dir / "metrics.json", report)
        return report

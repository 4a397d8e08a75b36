"""
Multiview datasets: validated ingestion, CSV emission and standardization
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConstantFeatureError, DataError, DataParseError, SchemaMismatchError, StructuralError

logger = logging.getLogger(__name__)

MISSING_SENTINEL = 0.0
NA_TOKENS = ("", "NA")
MANIFEST_NAME = "dataset.json"


@dataclass(frozen=True)
class CsvSchema:
    delimiter: str = ","
    header: bool = True
    id_column: str | None = None


@dataclass(frozen=True, eq=False)
class MultiviewDataset:
    """M views on shared subjects; masked entries hold MISSING_SENTINEL"""

    views: tuple
    masks: tuple
    response: np.ndarray | None = None
    subject_ids: tuple = ()
    feature_names: tuple = ()
    view_names: tuple = ()

    def __post_init__(self):
        views = tuple(np.array(v, dtype=float) for v in self.views)
        masks = tuple(np.array(w, dtype=bool) for w in self.masks)
        if not views:
            raise StructuralError("a dataset needs at least one view")
        if len(masks) != len(views):
            raise StructuralError("one mask per view is required")
        n = views[0].shape[0]
        for m, (x, w) in enumerate(zip(views, masks)):
            if x.ndim != 2 or x.shape[1] < 1:
                raise StructuralError(f"view {m + 1} must be a matrix with at least one feature")
            if x.shape[0] != n:
                raise StructuralError(
                    f"view {m + 1} has {x.shape[0]} rows but view 1 has {n}"
                )
            if w.shape != x.shape:
                raise StructuralError(f"mask of view {m + 1} does not match its shape")
            if not np.all(np.isfinite(x[w])):
                raise DataError(f"view {m + 1} has non-finite observed entries")
            x = np.where(w, x, MISSING_SENTINEL)
            x.setflags(write=False)
            w.setflags(write=False)
            views = views[:m] + (x,) + views[m + 1:]
        response = self.response
        if response is not None:
            response = np.array(response, dtype=float).reshape(-1)
            if response.shape[0] != n:
                raise StructuralError(f"response has {response.shape[0]} entries for {n} subjects")
            response.setflags(write=False)
        subject_ids = tuple(self.subject_ids) or tuple(str(i + 1) for i in range(n))
        if len(subject_ids) != n:
            raise StructuralError("subject_ids length differs from the number of rows")
        feature_names = tuple(tuple(names) for names in self.feature_names) or tuple(
            tuple(f"x{m + 1}_{j + 1}" for j in range(x.shape[1])) for m, x in enumerate(views)
        )
        if [len(f) for f in feature_names] != [x.shape[1] for x in views]:
            raise StructuralError("feature_names do not match the view widths")
        view_names = tuple(self.view_names) or tuple(f"view_{m + 1}" for m in range(len(views)))
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "subject_ids", subject_ids)
        object.__setattr__(self, "feature_names", feature_names)
        object.__setattr__(self, "view_names", view_names)

    @property
    def n(self):
        return self.views[0].shape[0]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def p(self):
        return tuple(x.shape[1] for x in self.views)

    @property
    def fully_observed(self):
        return all(w.all() for w in self.masks)

    def with_views(self, views, masks=None, response=None, keep_response=True):
        """Copy with replaced values, same schema"""
        if response is None and keep_response:
            response = self.response
        return MultiviewDataset(
            views=tuple(views),
            masks=tuple(masks) if masks is not None else self.masks,
            response=response,
            subject_ids=self.subject_ids,
            feature_names=self.feature_names,
            view_names=self.view_names,
        )

    def require_response(self):
        if self.response is None:
            raise DataError("supervised fitting requires a response")
        if not np.all(np.isfinite(self.response)):
            raise DataError("the response has missing entries")
        return self.response

    def check_schema(self, feature_names):
        """Raise SchemaMismatchError unless feature names match the training schema"""
        expected = tuple(tuple(f) for f in feature_names)
        if len(expected) != self.n_views:
            raise SchemaMismatchError(
                f"expected {len(expected)} views, new data has {self.n_views}"
            )
        for m, (a, b) in enumerate(zip(expected, self.feature_names)):
            if a != b:
                raise SchemaMismatchError(f"feature names of view {m + 1} differ from training")


def _read_table(path, schema):
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    try:
        raw = pd.read_csv(
            path,
            sep=schema.delimiter,
            header=0 if schema.header else None,
            dtype=str,
            keep_default_na=False,
            encoding="utf-8",
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot read {path}: {e}") from e
    ids = None
    if schema.id_column is not None:
        if schema.id_column not in raw.columns:
            raise StructuralError(f"{path} has no id column {schema.id_column!r}")
        ids = tuple(raw.pop(schema.id_column).astype(str))
    if not schema.header:
        raw.columns = [f"{path.stem}_{j + 1}" for j in range(raw.shape[1])]
    cells = raw.apply(lambda col: col.str.strip())
    missing = cells.isin(NA_TOKENS).to_numpy()
    values = cells.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~missing & ~np.isfinite(values)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataParseError(path, int(i) + 1, raw.columns[j], cells.iat[i, j])
    return values, ~missing, tuple(str(c) for c in raw.columns), ids


def load_dataset(paths, response_path=None, schema=None, view_names=None):
    """Read one CSV per view (and optionally the response) into a dataset"""
    schema = schema or CsvSchema()
    views, masks, names, ids = [], [], [], None
    for path in paths:
        values, mask, columns, view_ids = _read_table(path, schema)
        if views and values.shape[0] != views[0].shape[0]:
            raise StructuralError(
                f"{path} has {values.shape[0]} rows but {paths[0]} has {views[0].shape[0]}"
            )
        if view_ids is not None:
            if ids is not None and view_ids != ids:
                raise StructuralError(f"subject ids of {path} differ from {paths[0]}")
            ids = view_ids
        views.append(np.where(mask, values, MISSING_SENTINEL))
        masks.append(mask)
        names.append(columns)

    response = None
    if response_path is not None:
        values, mask, _, resp_ids = _read_table(response_path, schema)
        if values.shape[1] != 1:
            raise StructuralError(f"{response_path} must hold exactly one response column")
        if values.shape[0] != views[0].shape[0]:
            raise StructuralError(f"{response_path} has {values.shape[0]} rows, views have {views[0].shape[0]}")
        if resp_ids is not None and ids is not None and resp_ids != ids:
            raise StructuralError(f"subject ids of {response_path} differ from the views")
        response = np.where(mask[:, 0], values[:, 0], np.nan)

    dataset = MultiviewDataset(
        views=tuple(views),
        masks=tuple(masks),
        response=response,
        subject_ids=ids or (),
        feature_names=tuple(names),
        view_names=tuple(view_names or (Path(p).stem for p in paths)),
    )
    logger.debug("loaded n=%d p=%s response=%s", dataset.n, list(dataset.p), response is not None)
    return dataset


def write_dataset(data, out_dir, delimiter=","):
    """Write views, response and a dataset.json manifest; returns the manifest path"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for m, (x, w) in enumerate(zip(data.views, data.masks)):
        frame = pd.DataFrame(np.where(w, x, np.nan), columns=list(data.feature_names[m]))
        frame.insert(0, "subject", list(data.subject_ids))
        name = f"view_{m + 1}.csv"
        frame.to_csv(out_dir / name, sep=delimiter, index=False, na_rep="NA", float_format="%.17g")
        files.append(name)
    response_file = None
    if data.response is not None:
        response_file = "response.csv"
        frame = pd.DataFrame({"subject": list(data.subject_ids), "y": data.response})
        frame.to_csv(out_dir / response_file, sep=delimiter, index=False, na_rep="NA", float_format="%.17g")
    manifest = {
        "views": files,
        "view_names": list(data.view_names),
        "response": response_file,
        "delimiter": delimiter,
        "id_column": "subject",
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def load_dataset_dir(directory):
    """Load a dataset written by write_dataset"""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataError(f"no {MANIFEST_NAME} in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    schema = CsvSchema(delimiter=manifest.get("delimiter", ","), id_column=manifest.get("id_column"))
    response = manifest.get("response")
    return load_dataset(
        [directory / f for f in manifest["views"]],
        response_path=directory / response if response else None,
        schema=schema,
        view_names=manifest.get("view_names"),
    )


@dataclass(frozen=True, eq=False)
class StandardizationRecord:
    """Per-feature and response moments used to standardize a dataset"""

    means: tuple
    sds: tuple
    y_mean: float | None = None
    y_sd: float | None = None

    def apply(self, data):
        views = [
            np.where(w, (x - mu) / sd, MISSING_SENTINEL)
            for x, w, mu, sd in zip(data.views, data.masks, self.means, self.sds)
        ]
        response = data.response
        if response is not None and self.y_mean is not None:
            response = (response - self.y_mean) / self.y_sd
        return data.with_views(views, response=response)

    def invert(self, data):
        views = [
            np.where(w, x * sd + mu, MISSING_SENTINEL)
            for x, w, mu, sd in zip(data.views, data.masks, self.means, self.sds)
        ]
        response = data.response
        if response is not None and self.y_mean is not None:
            response = self.invert_response(response)
        return data.with_views(views, response=response)

    def invert_view(self, m, values):
        return np.asarray(values) * self.sds[m] + self.means[m]

    def invert_response(self, values):
        if self.y_mean is None:
            return np.asarray(values)
        return np.asarray(values) * self.y_sd + self.y_mean

    def to_dict(self):
        return {
            "means": [v.tolist() for v in self.means],
            "sds": [v.tolist() for v in self.sds],
            "y_mean": self.y_mean,
            "y_sd": self.y_sd,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            means=tuple(np.asarray(v, dtype=float) for v in payload["means"]),
            sds=tuple(np.asarray(v, dtype=float) for v in payload["sds"]),
            y_mean=payload.get("y_mean"),
            y_sd=payload.get("y_sd"),
        )


def observed_moments(x, w):
    """Column means and n-1 standard deviations over observed entries"""
    counts = w.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(w, x, 0.0).sum(axis=0) / counts
        centered = np.where(w, x - means, 0.0)
        sds = np.sqrt((centered ** 2).sum(axis=0) / (counts - 1))
    return means, sds, counts


def standardize(data):
    """Center and scale every feature (and the response) over observed entries"""
    means, sds = [], []
    for m, (x, w) in enumerate(zip(data.views, data.masks)):
        mu, sd, counts = observed_moments(x, w)
        bad = np.flatnonzero((counts < 2) | ~(sd > 0))
        if bad.size:
            raise ConstantFeatureError(data.feature_names[m][bad[0]], data.view_names[m])
        means.append(mu)
        sds.append(sd)
    y_mean = y_sd = None
    if data.response is not None:
        y = data.response
        observed = np.isfinite(y)
        if observed.sum() < 2 or not np.std(y[observed], ddof=1) > 0:
            raise ConstantFeatureError("response")
        y_mean = float(np.mean(y[observed]))
        y_sd = float(np.std(y[observed], ddof=1))
    record = StandardizationRecord(tuple(means), tuple(sds), y_mean, y_sd)
    return record.apply(data), record

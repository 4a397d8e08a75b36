"""
Chain archive: thinned states plus run metadata, stored as flat float64 files
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..errors import DataError
from .state import ModelState

ARCHIVE_FORMAT = "jafar-chain-archive"
ARCHIVE_VERSION = 1
INDEX_NAME = "index.txt"
FLOAT = "<f8"


@dataclass(eq=False)
class ChainArchive:
    states: list
    iterations: list
    ranks: np.ndarray
    seed: int
    config: dict
    meta: dict = field(default_factory=dict)

    @property
    def n_views(self):
        return self.ranks.shape[1] - 1

    def __len__(self):
        return len(self.states)


def write_arrays(records, directory):
    """Append (name, iteration, array) records to <name>.f64 files and write the index"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    offsets = {}
    handles = {}
    lines = ["# name iteration offset shape"]
    try:
        for name, iteration, array in records:
            array = np.asarray(array, dtype=float)
            if name not in handles:
                handles[name] = open(directory / f"{name}.f64", "wb")
                offsets[name] = 0
            handles[name].write(array.astype(FLOAT).tobytes(order="C"))
            shape = "x".join(str(s) for s in array.shape) or "scalar"
            lines.append(f"{name} {iteration} {offsets[name]} {shape}")
            offsets[name] += array.size
    finally:
        for handle in handles.values():
            handle.close()
    (directory / INDEX_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_arrays(directory):
    """Inverse of write_arrays: {iteration: {name: array}} in index order"""
    directory = Path(directory)
    index_path = directory / INDEX_NAME
    if not index_path.exists():
        raise DataError(f"no {INDEX_NAME} in {directory}")
    blobs = {}
    out = {}
    for line in index_path.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        name, iteration, offset, shape = line.split()
        if name not in blobs:
            blobs[name] = np.fromfile(directory / f"{name}.f64", dtype=FLOAT)
        dims = () if shape == "scalar" else tuple(int(s) for s in shape.split("x"))
        size = int(np.prod(dims)) if dims else 1
        start = int(offset)
        out.setdefault(int(iteration), {})[name] = blobs[name][start:start + size].reshape(dims).astype(float)
    return out


def save_archive(archive, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = (
        (name, iteration, array)
        for state, iteration in zip(archive.states, archive.iterations)
        for name, array in state.to_arrays().items()
    )
    write_arrays(records, directory)
    columns = ["K"] + [f"K_{m + 1}" for m in range(archive.n_views)]
    ranks = pd.DataFrame(archive.ranks, columns=columns)
    ranks.insert(0, "iteration", np.arange(1, len(ranks) + 1))
    ranks.to_csv(directory / "ranks.csv", index=False)
    manifest = {
        "format": ARCHIVE_FORMAT,
        "version": ARCHIVE_VERSION,
        "n_views": archive.n_views,
        "n_states": len(archive.states),
        "iterations": list(archive.iterations),
        "seed": archive.seed,
        "meta": archive.meta,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    (directory / "config.json").write_text(json.dumps(archive.config, indent=2, sort_keys=True), encoding="utf-8")
    return directory


def load_archive(directory):
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"not a chain archive (no manifest.json): {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != ARCHIVE_FORMAT:
        raise DataError(f"unrecognized archive format in {directory}")
    config = json.loads((directory / "config.json").read_text(encoding="utf-8"))
    by_iteration = read_arrays(directory)
    n_views = manifest["n_views"]
    iterations = manifest["iterations"]
    states = [ModelState.from_arrays(by_iteration[t], n_views, iteration=t) for t in iterations]
    ranks = pd.read_csv(directory / "ranks.csv").drop(columns="iteration").to_numpy(dtype=np.int64)
    return ChainArchive(
        states=states,
        iterations=iterations,
        ranks=ranks,
        seed=manifest["seed"],
        config=config,
        meta=manifest.get("meta", {}),
    )

"""On-disk dataset layout: a directory of ``.hsc`` files plus ``manifest.json``.

Each sample has a cube and optionally a label mask (segmentation), a pixel
selection mask and a target cube (regression). Paths in the manifest are
relative to the directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import store
from .errors import ConfigError, DataError
from .hypercube import HyperCube, load_cube, load_mask, save_cube, save_mask

MANIFEST = "manifest.json"
TASKS = ("segmentation", "regression")


@dataclass
class Dataset:
    task: str
    cubes: list
    labels: list = field(default_factory=list)  # [H, W] int masks (segmentation)
    masks: list | None = None  # [H, W] bool pixel selections (regression)
    targets: list = field(default_factory=list)  # [H, W, M] (regression)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.cubes)

    def references(self) -> list:
        return self.labels if self.task == "segmentation" else self.targets


def save_dataset(ds: Dataset, directory) -> Path:
    if ds.task not in TASKS:
        raise ConfigError(f"unknown task {ds.task!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    samples = []
    for i, cube in enumerate(ds.cubes):
        entry = {"cube": f"cube_{i:03d}.hsc"}
        save_cube(cube, directory / entry["cube"])
        if ds.task == "segmentation":
            entry["labels"] = f"labels_{i:03d}.hsc"
            save_mask(ds.labels[i], directory / entry["labels"])
        else:
            entry["targets"] = f"targets_{i:03d}.hsc"
            save_cube(HyperCube(ds.targets[i]), directory / entry["targets"])
        if ds.masks is not None:
            entry["mask"] = f"mask_{i:03d}.hsc"
            save_mask(ds.masks[i], directory / entry["mask"])
        samples.append(entry)
    store.dump_json({"task": ds.task, "samples": samples, "meta": ds.meta}, directory / MANIFEST)
    return directory


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.is_file():
        raise ConfigError(f"{directory}: no {MANIFEST} found")
    try:
        doc = json.loads(path.read_text())
        task, samples = doc["task"], doc["samples"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{path}: malformed manifest ({exc})") from exc
    if task not in TASKS:
        raise DataError(f"{path}: unknown task {task!r}")
    if not samples:
        raise DataError(f"{path}: dataset is empty")
    ds = Dataset(task, [], meta=doc.get("meta", {}))
    has_mask = all("mask" in s for s in samples)
    ds.masks = [] if has_mask else None
    for s in samples:
        cube = load_cube(directory / s["cube"])
        ds.cubes.append(cube)
        if task == "segmentation":
            ds.labels.append(load_mask(directory / s["labels"]).astype(np.int64))
        else:
            t = load_cube(directory / s["targets"]).data.astype(np.float64)
            if t.shape[:2] != cube.shape[:2]:
                raise DataError(f"{s['targets']}: target shape does not match its cube")
            ds.targets.append(t)
        if has_mask:
            ds.masks.append(load_mask(directory / s["mask"]))
    return ds

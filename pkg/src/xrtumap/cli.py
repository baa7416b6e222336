"""Command-line interface.

Every command is deterministic given its seed when run with ``--threads 1``.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__, dataset, evaluation, hypercube, manifold, metrics, parametric, reducers, store, synth
from .errors import ConfigError, DataError, XrtUmapError

log = logging.getLogger("xrtumap")

# section -> key -> (type, default)
CONFIG_SCHEMA = {
    "data": {
        "train": (str, ""),
        "test": (str, ""),
        "pool": (str, ""),  # "H,W" or empty for no pooling
        "white": (str, ""),  # reference cube for intensity data
    },
    "method": {
        "name": (str, "umap"),
        "dims": (int, 5),
        "fit_fraction": (float, 1.0),
        "standardize": (bool, False),
        "refine_epochs": (int, 0),
        "nmf_iters": (int, 300),
    },
    "umap": {
        "n_neighbors": (int, 15),
        "min_dist": (float, 0.1),
        "spread": (float, 1.0),
        "n_epochs": (int, 200),
        "learning_rate": (float, 1.0),
        "negative_sample_rate": (int, 5),
    },
    "parametric": {
        "batch_edges": (int, 256),
        "epochs": (int, 50),
        "step_size": (float, 1e-3),
        "negative_sample_rate": (int, 5),
    },
    "shallow": {
        "epochs": (int, 200),
        "step": (float, 1.0),
        "spatial": (bool, False),
    },
    "run": {
        "seed": (int, 0),
        "runs": (int, 10),
        "out": (str, "out"),
        "dump": (bool, False),
    },
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(section, key, raw):
    if section not in CONFIG_SCHEMA or key not in CONFIG_SCHEMA[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    kind = CONFIG_SCHEMA[section][key][0]
    if not isinstance(raw, str):
        return kind(raw)
    text = raw.strip()
    try:
        if kind is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {kind.__name__}") from exc


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the INI file, then ``section.key=value`` overrides."""
    cfg = {s: {k: v[1] for k, v in keys.items()} for s, keys in CONFIG_SCHEMA.items()}
    if path:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.setdefault(section, {})[key] = _coerce(section, key, raw)
    for item in overrides:
        name, sep, raw = item.partition("=")
        section, dot, key = name.partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        cfg[section][key] = _coerce(section, key, raw)
    return cfg


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def umap_params(cfg: dict, seed: int) -> manifold.UmapParams:
    u = cfg["umap"]
    return manifold.UmapParams(
        n_neighbors=u["n_neighbors"], min_dist=u["min_dist"], spread=u["spread"],
        target_dim=cfg["method"]["dims"], n_epochs=u["n_epochs"],
        learning_rate=u["learning_rate"], negative_sample_rate=u["negative_sample_rate"],
        seed=seed,
    )


def train_config(cfg: dict, seed: int) -> parametric.TrainConfig:
    p = cfg["parametric"]
    return parametric.TrainConfig(
        batch_edges=p["batch_edges"], epochs=p["epochs"], step_size=p["step_size"],
        negative_sample_rate=p["negative_sample_rate"], seed=seed,
    )


def reducer_options(cfg: dict, seed: int) -> dict:
    m = cfg["method"]
    return {
        "umap_params": umap_params(cfg, seed),
        "train_config": train_config(cfg, seed),
        "fit_fraction": m["fit_fraction"],
        "standardize": m["standardize"],
        "refine_epochs": m["refine_epochs"],
        "nmf_iters": m["nmf_iters"],
    }


def _parse_pool(text):
    if not text:
        return None
    try:
        h, w = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"pool must be 'H,W', got {text!r}") from exc
    return h, w


def _pool_reference(ref: hypercube.WhiteReference, out_w: int) -> hypercube.WhiteReference:
    pooled = hypercube.avg_pool2d(hypercube.HyperCube(ref.data[None]), 1, out_w)
    return hypercube.WhiteReference(pooled.data[0])


def _load_white(path) -> hypercube.WhiteReference:
    cube = hypercube.load_cube(path)
    if cube.height != 1:
        raise DataError(f"{path}: white reference cube must have height 1")
    return hypercube.WhiteReference(cube.data[0])


def prepare_dataset(ds: dataset.Dataset, pool=None, white=None) -> dataset.Dataset:
    """Pool then white-normalize every cube (labels and targets follow)."""
    cubes, labels, masks, targets = [], [], None if ds.masks is None else [], []
    for i, cube in enumerate(ds.cubes):
        h, w = pool if pool else cube.shape[:2]
        if pool:
            cube = hypercube.avg_pool2d(cube, h, w)
        if not cube.transmittance:
            if white is None:
                raise ConfigError("intensity cubes need a white reference (data.white)")
            ref = _pool_reference(white, w) if white.data.shape[0] != w else white
            cube = hypercube.white_normalize(cube, ref)
        cubes.append(cube)
        if ds.task == "segmentation":
            lab = ds.labels[i]
            if pool:
                lab = (_pool_plane(lab, h, w) >= 0.5).astype(np.int64)
            labels.append(lab)
        else:
            t = ds.targets[i]
            targets.append(hypercube.avg_pool2d(hypercube.HyperCube(t), h, w).data.astype(np.float64) if pool else t)
        if masks is not None:
            m = ds.masks[i]
            masks.append(_pool_plane(m, h, w) >= 0.5 if pool else m)
    return dataset.Dataset(ds.task, cubes, labels, masks, targets, ds.meta)


def _pool_plane(plane, h, w):
    cube = hypercube.HyperCube(np.asarray(plane, dtype=np.float32)[..., None])
    return hypercube.avg_pool2d(cube, h, w).data[..., 0]


def pixel_set(ds: dataset.Dataset) -> evaluation.PixelSet:
    return evaluation.PixelSet.from_cubes(ds.cubes, ds.references(), ds.masks)


def _check_dims(dims, ds):
    bands = ds.cubes[0].bands
    if not 1 <= dims <= bands:
        raise ConfigError(f"dims must be in [1, {bands}], got {dims}")


def _set_threads(threads: int) -> bool:
    if threads < 1:
        raise ConfigError("--threads must be at least 1")
    if threads > 1:
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    return threads > 1


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = synth.SynthConfig(
        height=args.height, width=args.width, bands=args.bands,
        photons=args.photons, seed=args.seed,
    )
    out = Path(args.out)
    meta = {"synth": asdict(cfg)}
    for split, n, stream in (("train", args.train, 0), ("test", args.test, 1)):
        if n <= 0:
            continue
        if args.task == "segmentation":
            samples = synth.make_segmentation_set(n, cfg, stream=stream)
            ds = dataset.Dataset(
                "segmentation", [s.cube for s in samples],
                labels=[s.mask.astype(np.int64) for s in samples],
                meta=dict(meta, profiles=[s.profile for s in samples]),
            )
            if args.keep_sources:
                src = out / split / "sources"
                src.mkdir(parents=True, exist_ok=True)
                for i, s in enumerate(samples):
                    hypercube.save_cube(s.container, src / f"container_{i:03d}.hsc")
                    hypercube.save_cube(s.insert, src / f"insert_{i:03d}.hsc")
        else:
            samples = synth.make_regression_set(n, cfg, stream=stream)
            ds = dataset.Dataset(
                "regression", [s.cube for s in samples],
                masks=[s.mask for s in samples], targets=[s.targets for s in samples],
                meta=dict(meta, targets=list(synth.REGRESSION_TARGETS)),
            )
        dataset.save_dataset(ds, out / split)
        print(f"wrote {n} {args.task} samples to {out / split}")
    return 0


def _read_array(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".hsc":
        return hypercube.load_cube(path).data
    try:
        return np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read array ({exc})") from exc


def cmd_convert(args) -> int:
    axes = args.axes.upper()
    if sorted(axes) != ["C", "H", "W"]:
        raise ConfigError(f"--axes must be a permutation of HWC, got {args.axes!r}")
    arr = _read_array(args.input)
    if arr.ndim != 3:
        raise DataError(f"{args.input}: expected a 3-D array, got shape {arr.shape}")
    arr = np.transpose(arr, [axes.index(a) for a in "HWC"])
    cube = hypercube.HyperCube(arr, transmittance=args.transmittance)
    pool = _parse_pool(args.pool)
    if pool:
        cube = hypercube.avg_pool2d(cube, *pool)
    if args.white:
        ref = _load_white(args.white)
        if ref.data.shape[0] != cube.width:
            ref = _pool_reference(ref, cube.width)
        cube = hypercube.white_normalize(cube, ref)
    hypercube.save_cube(cube, args.output)
    print(f"wrote {args.output} shape={cube.shape} transmittance={cube.transmittance}")
    return 0


def _fit(cfg, train: dataset.Dataset, parallel: bool):
    seed = cfg["run"]["seed"]
    m = cfg["method"]
    dims = train.cubes[0].bands if m["name"] == "raw" else m["dims"]
    _check_dims(dims, train)
    reducer = reducers.make_reducer(m["name"], dims, seed=seed, **reducer_options(cfg, seed))
    if parallel and isinstance(reducer, reducers.UmapReducer):
        reducer.parallel = True
    return reducer.fit(pixel_set(train).X)


def _config_from_args(args) -> dict:
    overrides = list(getattr(args, "set", None) or [])
    for attr, key in (("train", "data.train"), ("test", "data.test"), ("method", "method.name"),
                      ("dims", "method.dims"), ("seed", "run.seed"), ("runs", "run.runs"),
                      ("fit_fraction", "method.fit_fraction"), ("out", "run.out"),
                      ("pool", "data.pool"), ("white", "data.white")):
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    return load_config(getattr(args, "config", None), overrides)


def _load_split(cfg, key) -> dataset.Dataset:
    path = cfg["data"][key]
    if not path:
        raise ConfigError(f"data.{key} is not set")
    white = _load_white(cfg["data"]["white"]) if cfg["data"]["white"] else None
    return prepare_dataset(dataset.load_dataset(path), _parse_pool(cfg["data"]["pool"]), white)


def cmd_fit(args) -> int:
    cfg = _config_from_args(args)
    reducer = _fit(cfg, _load_split(cfg, "train"), args.parallel)
    Path(args.model).parent.mkdir(parents=True, exist_ok=True)
    reducer.save(args.model)
    print(f"wrote {reducer.method} model to {args.model}")
    return 0


def _transform(reducer, X, parallel):
    if parallel and isinstance(reducer, reducers.UmapReducer):
        reducer.parallel = True
    return reducer.transform(X)


def cmd_project(args) -> int:
    reducer = reducers.load_reducer(args.model)
    out = Path(args.output)
    inputs = [Path(p) for p in args.inputs]
    if len(inputs) == 1 and inputs[0].is_dir():
        ds = dataset.load_dataset(inputs[0])
        cubes = ds.cubes
        names = [f"proj_{i:03d}.npy" for i in range(len(cubes))]
        out.mkdir(parents=True, exist_ok=True)
        targets = [out / n for n in names]
    else:
        cubes = [hypercube.load_cube(p) for p in inputs]
        if len(cubes) == 1 and out.suffix == ".npy":
            targets = [out]
        else:
            out.mkdir(parents=True, exist_ok=True)
            targets = [out / (p.stem + ".npy") for p in inputs]
    for cube, target in zip(cubes, targets):
        Z = _transform(reducer, hypercube.flatten_pixels(cube), args.parallel)
        np.save(target, hypercube.reshape_pixels(Z, cube.height, cube.width))
    print(f"projected {len(cubes)} cube(s) with {reducer.method} to {out}")
    return 0


def _evaluate(reducer, cfg, train, test, parallel, run=0):
    seed = cfg["run"]["seed"]
    sh = cfg["shallow"]
    P, Q = pixel_set(train), pixel_set(test)
    Ztr, Zte = _transform(reducer, P.X, parallel), _transform(reducer, Q.X, parallel)
    Ftr, Fte = Ztr, Zte
    if sh["spatial"]:
        Ftr, Fte = evaluation.neighborhood_features(Ztr, P), evaluation.neighborhood_features(Zte, Q)
    model = evaluation.fit_shallow(Ftr, P.y, epochs=sh["epochs"], step=sh["step"], seed=seed)
    report = evaluation.evaluate_pixelwise(
        model, Fte, Q.y, method=reducer.method, image_ids=Q.image_ids,
        explained_variance=reducer.explained_variance_ratio, run=run, seed=seed,
    )
    if sh["spatial"]:
        report.dims = Zte.shape[1]
        report.component_labels = [f"c{i}" for i in range(Zte.shape[1])]
        if report.task == "segmentation":
            report.mutual_information = metrics.mutual_information_per_component(Zte, Q.y)
    return report, (Ztr, Zte)


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    reducer = reducers.load_reducer(args.model)
    train, test = _load_split(cfg, "train"), _load_split(cfg, "test")
    report, _ = _evaluate(reducer, cfg, train, test, args.parallel)
    stem = Path(args.output)
    stem.parent.mkdir(parents=True, exist_ok=True)
    report.save(stem)
    _print_metrics(report)
    return 0


def _print_metrics(report):
    for name in sorted(report.metrics):
        print(f"{report.method}\t{name}\t{report.metrics[name]:.6f}")


def cmd_compare(args) -> int:
    cfg = _config_from_args(args)
    train, test = _load_split(cfg, "train"), _load_split(cfg, "test")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in reducers.METHODS]
    if unknown:
        raise ConfigError(f"unknown methods {unknown}; choose from {', '.join(reducers.METHODS)}")
    dims = cfg["method"]["dims"]
    _check_dims(dims, train)
    seed = cfg["run"]["seed"]
    opts = reducer_options(cfg, seed)
    opts.pop("umap_params")
    opts.pop("train_config")
    table = evaluation.ComparisonTable()
    # per-run seeds are seed + run, so UMAP/encoder params are rebuilt per run
    for method in methods:
        for run in range(cfg["run"]["runs"]):
            s = seed + run
            report = evaluation.evaluate_method(
                method, dims, pixel_set(train), pixel_set(test), seed=s, run=run,
                epochs=cfg["shallow"]["epochs"], step=cfg["shallow"]["step"],
                spatial=cfg["shallow"]["spatial"], umap_params=umap_params(cfg, s),
                train_config=train_config(cfg, s), **opts,
            )
            table.add(report)
    stem = Path(args.output)
    stem.parent.mkdir(parents=True, exist_ok=True)
    table.save(stem)
    agg = table.aggregate()
    for method in methods:
        for metric in sorted(agg[method]):
            a = agg[method][metric]
            print(f"{method}\t{metric}\t{a['mean']:.6f}\t±{a['std']:.6f} (std)\t±{a['stderr']:.6f} (se)")
    return 0


def _load_reports(path) -> list:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read report ({exc})") from exc
    docs = doc["reports"] if isinstance(doc, dict) and "reports" in doc else [doc]
    out = []
    for d in docs:
        if not isinstance(d, dict) or not {f.name for f in fields(metrics.EvalReport)} >= set(d) \
                or not {"method", "dims", "task"} <= set(d):
            raise DataError(f"{path}: schema mismatch, not an evaluation report")
        out.append(metrics.EvalReport.from_dict(d))
    return out


def cmd_report(args) -> int:
    reports, task = [], None
    for path in args.inputs:
        for r in _load_reports(path):
            if task is not None and r.task != task:
                raise DataError(f"{path}: schema mismatch, {r.task} report among {task} reports")
            task = r.task
            reports.append(r)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = [row for r in reports for row in r.rows()]
    (out / "merged.csv").write_text(metrics.rows_to_csv(rows))
    store.dump_json({"reports": [r.to_dict() for r in reports]}, out / "merged.json")
    series = {}
    for r in reports:
        for name, values in (("mi", r.mutual_information), ("evr", r.explained_variance_ratio)):
            if values:
                series.setdefault((name, r.method, r.dims), []).append((r.run, values))
    for (name, method, dims), entries in sorted(series.items()):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["run"] + [f"c{i}" for i in range(dims)])
        for run, values in sorted(entries, key=lambda e: e[0]):
            writer.writerow([run] + [repr(float(v)) for v in values])
        (out / f"{name}_{method}_d{dims}.csv").write_text(buf.getvalue())
    print(f"merged {len(reports)} report(s) into {out}")
    return 0


def cmd_run(args) -> int:
    """pool -> normalize -> flatten -> fit -> project -> reshape -> evaluate."""
    cfg = _config_from_args(args)
    for key in ("train", "test"):
        if not cfg["data"][key]:
            raise ConfigError(f"data.{key} is not set")
        if not (Path(cfg["data"][key]) / dataset.MANIFEST).is_file():
            raise ConfigError(f"data.{key}: {cfg['data'][key]} is not a dataset directory")
    if cfg["data"]["white"] and not Path(cfg["data"]["white"]).is_file():
        raise ConfigError(f"data.white: {cfg['data']['white']} does not exist")
    work = Path(cfg["run"]["out"]) / config_hash(cfg)
    work.mkdir(parents=True, exist_ok=True)
    store.dump_json(cfg, work / "config.json")

    def stage(name, fn, *a):
        log.info("stage %s", name)
        try:
            return fn(*a)
        except XrtUmapError as exc:
            raise type(exc)(f"stage '{name}' failed: {exc}") from exc

    pool = _parse_pool(cfg["data"]["pool"])
    white = _load_white(cfg["data"]["white"]) if cfg["data"]["white"] else None
    raw = [stage("load", dataset.load_dataset, cfg["data"][k]) for k in ("train", "test")]
    pooled = [stage("pool", prepare_dataset, ds, pool, None) if _all_transmittance(ds)
              else stage("pool+normalize", prepare_dataset, ds, pool, white) for ds in raw]
    train, test = pooled
    dump = cfg["run"]["dump"]
    if dump:
        dataset.save_dataset(train, work / "prepared" / "train")
        dataset.save_dataset(test, work / "prepared" / "test")
    if cfg["method"]["name"] == "raw":
        reducer = reducers.RawReducer(train.cubes[0].bands)  # nothing to fit
    else:
        reducer = stage("fit", _fit, cfg, train, args.parallel)
    if dump:
        reducer.save(work / "model.json")
    report, (Ztr, Zte) = stage("project+evaluate", _evaluate, reducer, cfg, train, test, args.parallel)
    if dump:
        for split, ds, Z in (("train", train, Ztr), ("test", test, Zte)):
            d = work / "projections" / split
            d.mkdir(parents=True, exist_ok=True)
            start = 0
            for i, cube in enumerate(ds.cubes):
                n = cube.height * cube.width if ds.masks is None else int(np.count_nonzero(ds.masks[i]))
                img = hypercube.reshape_pixels(Z[start : start + n], cube.height, cube.width,
                                               None if ds.masks is None else ds.masks[i])
                np.save(d / f"proj_{i:03d}.npy", img)
                start += n
    report.save(work / "report")
    _print_metrics(report)
    print(f"report written to {work / 'report.json'}")
    return 0


def _all_transmittance(ds):
    return all(c.transmittance for c in ds.cubes)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_config_args(p, data=True):
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a configuration value (repeatable)")
    if data:
        p.add_argument("--train", help="training dataset directory")
        p.add_argument("--test", help="test dataset directory")
        p.add_argument("--pool", help="average-pool every cube to H,W")
        p.add_argument("--white", help="white reference cube (height 1) for intensity data")
    p.add_argument("--method", choices=reducers.METHODS)
    p.add_argument("--dims", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--fit-fraction", type=float, dest="fit_fraction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xrtumap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads; 1 (default) is bit-for-bit reproducible")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    p.add_argument("out", help="output directory (gets train/ and test/)")
    p.add_argument("--task", choices=dataset.TASKS, default="segmentation")
    p.add_argument("--train", type=int, default=20)
    p.add_argument("--test", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    defaults = synth.SynthConfig()
    p.add_argument("--height", type=int, default=defaults.height)
    p.add_argument("--width", type=int, default=defaults.width)
    p.add_argument("--bands", type=int, default=defaults.bands)
    p.add_argument("--photons", type=float, default=defaults.photons)
    p.add_argument("--keep-sources", action="store_true",
                   help="also write the container and insert cubes before fusion")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert a .npy/.hsc array into a cube file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--axes", default="HWC", help="axis order of the input, e.g. CHW")
    p.add_argument("--pool", help="average-pool to H,W")
    p.add_argument("--white", help="white reference cube (height 1) to normalize with")
    p.add_argument("--transmittance", action="store_true", help="input is already transmittance")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("fit", help="fit a reduction model on a training dataset")
    _add_config_args(p)
    p.add_argument("--model", required=True, help="output model path (.json)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train", help="fit a parametric encoder (fit --method parametric-umap)")
    _add_config_args(p)
    p.add_argument("--model", required=True, help="output encoder path (.json)")
    p.set_defaults(func=cmd_fit, method="parametric-umap")

    for name, text in (("project", "project cubes with a fitted model"),
                       ("apply", "run a fitted encoder (alias of project)")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--model", required=True)
        p.add_argument("inputs", nargs="+", help="cube files or one dataset directory")
        p.add_argument("--output", "-o", required=True, help=".npy file or output directory")
        p.set_defaults(func=cmd_project)

    p = sub.add_parser("eval", help="score a fitted model with the shallow evaluator")
    _add_config_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--output", "-o", required=True, help="report path stem (.json/.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="repeated-run comparison of several methods")
    _add_config_args(p)
    p.add_argument("--methods", default="pca,nmf,umap")
    p.add_argument("--runs", type=int)
    p.add_argument("--output", "-o", required=True, help="table path stem (.json/.csv)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="merge reports and emit per-component series")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--output", "-o", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="full pipeline from a configuration file")
    _add_config_args(p)
    p.add_argument("--out", help="output root (a config-hash subdirectory is created)")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.parallel = _set_threads(args.threads)
        return args.func(args)
    except XrtUmapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

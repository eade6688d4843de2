"""Command-line pipeline around the library.

Subcommands: synth, render, analyze, cluster, purify, baseline, metrics.
Options resolve as defaults < config file (flat TOML) < explicit flags.
Exit codes: 0 ok, 1 internal/stage failure, 2 usage or config error.
All JSON reports carry {"schema": 1}, the resolved config and a content
hash of the inputs; worker counts are execution detail and are not
embedded, so reports are byte-identical for any thread count.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import images, metrics
from .cameras import load_views, save_views
from .clustering import ClusterParams, build_features, cluster_features, cluster_mean_weights
from .ply_io import load_ply, save_ply
from .purify import PruneThresholds, feature_scale, noise_inject, purify, random_prune
from .renderer import ContributionReport, accumulate_weights, render
from .synth import evaluate_purification, make_scene

SCHEMA_VERSION = 1


class StageError(Exception):
    """Pipeline failure inside a named stage (exit code 1)."""


class ConfigError(Exception):
    """Bad usage or configuration (exit code 2)."""


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


# execution details that do not affect results; keeping them out of the
# embedded config makes reports byte-comparable across runs
_NON_SEMANTIC_KEYS = ("threads", "out")


def _report(config: dict, input_paths: dict, **payload) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "config": {k: v for k, v in sorted(config.items()) if k not in _NON_SEMANTIC_KEYS},
        "input_hash": {name: _sha256(p) for name, p in sorted(input_paths.items())},
        **payload,
    }


def _load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags (flags win)."""
    config = dict(defaults)
    if getattr(args, "config", None):
        fromfile = _load_config_file(args.config)
        unknown = set(fromfile) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config.update(fromfile)
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            config[key] = flag
    return config


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(f"[{name}] {exc}") from exc


def _out_dir(config: dict) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    defaults = {
        "seed": 0,
        "n_scene": 2000,
        "n_wm": 240,
        "resolution": 96,
        "train_views": 16,
        "out": "synth_out",
    }
    config = _resolve(args, defaults)
    out = _out_dir(config)
    scene = _stage(
        "synth",
        make_scene,
        config["seed"],
        config["n_scene"],
        config["n_wm"],
        resolution=config["resolution"],
        n_train_views=config["train_views"],
    )
    _stage("synth", save_ply, scene.cloud, out / "scene.ply")
    save_views(scene.train_views, out / "views_train.json")
    save_views(scene.hidden_views, out / "views_hidden.json")
    _write_json(
        out / "labels.json",
        {
            "schema": SCHEMA_VERSION,
            "seed": config["seed"],
            "scene_indices": scene.scene_indices.tolist(),
            "watermark_indices": scene.watermark_indices.tolist(),
        },
    )
    print(f"wrote scene with {len(scene.cloud)} primitives to {out}")
    return 0


def cmd_render(args) -> int:
    defaults = {"ply": "", "views": "", "out": "renders", "npy": False, "threads": 0}
    config = _resolve(args, defaults)
    ply_path = _require_file(config["ply"], "input ply")
    views_path = _require_file(config["views"], "views file")
    cloud = _stage("load", load_ply, ply_path)
    views = _stage("load", load_views, views_path)
    out = _out_dir(config)
    for i, view in enumerate(views):
        result = _stage("render", render, cloud, view)
        images.write_png(out / f"view_{i:03d}.png", result.image)
        if config["npy"]:
            images.write_npy(out / f"view_{i:03d}.npy", result.image)
    print(f"rendered {len(views)} views to {out}")
    return 0


def cmd_analyze(args) -> int:
    defaults = {"ply": "", "views": "", "out": "analysis", "threads": 0}
    config = _resolve(args, defaults)
    ply_path = _require_file(config["ply"], "input ply")
    views_path = _require_file(config["views"], "views file")
    cloud = _stage("load", load_ply, ply_path)
    views = _stage("load", load_views, views_path)
    report = _stage("weights", accumulate_weights, cloud, views, max_workers=config["threads"])
    out = _out_dir(config)
    _write_json(
        out / "contribution.json",
        _report(config, {"ply": ply_path, "views": views_path}, **report.to_dict()),
    )
    print(f"mean contribution {report.global_mean:.6g} over {len(views)} views")
    return 0


def _cluster_params(config: dict, n_primitives: int) -> ClusterParams:
    if config["min_cluster_size"] > 0:
        return ClusterParams(config["min_cluster_size"], config["min_samples"])
    base = ClusterParams.defaults_for(n_primitives)
    return ClusterParams(base.min_cluster_size, config["min_samples"])


def cmd_cluster(args) -> int:
    defaults = {
        "ply": "",
        "contribution": "",
        "out": "analysis",
        "min_cluster_size": 0,
        "min_samples": 10,
    }
    config = _resolve(args, defaults)
    ply_path = _require_file(config["ply"], "input ply")
    contrib_path = _require_file(config["contribution"], "contribution report")
    cloud = _stage("load", load_ply, ply_path)
    report = _stage(
        "load",
        lambda: ContributionReport.from_dict(json.loads(Path(contrib_path).read_text())),
    )
    params = _cluster_params(config, len(cloud))
    features = _stage("features", build_features, cloud, report)
    labels = _stage("cluster", cluster_features, features, params)
    assignment = _stage("cluster", cluster_mean_weights, labels, report, params)
    out = _out_dir(config)
    _write_json(
        out / "clusters.json",
        _report(config, {"ply": ply_path, "contribution": contrib_path}, **assignment.to_dict()),
    )
    print(f"{assignment.n_clusters} clusters, {int(assignment.noise_mask().sum())} noise points")
    return 0


def cmd_purify(args) -> int:
    defaults = {
        "ply": "",
        "views": "",
        "out": "purified",
        "tau_c": 4.0,
        "tau_n": 4.0,
        "min_cluster_size": 0,
        "min_samples": 10,
        "threads": 0,
        "labels": "",
        "seed": 0,
    }
    config = _resolve(args, defaults)
    ply_path = _require_file(config["ply"], "input ply")
    views_path = _require_file(config["views"], "views file")
    cloud = _stage("load", load_ply, ply_path)
    views = _stage("load", load_views, views_path)

    report = _stage("weights", accumulate_weights, cloud, views, max_workers=config["threads"])
    features = _stage("features", build_features, cloud, report)
    params = _cluster_params(config, len(cloud))
    labels = _stage("cluster", cluster_features, features, params)
    assignment = _stage("cluster", cluster_mean_weights, labels, report, params)
    thresholds = PruneThresholds(tau_c=config["tau_c"], tau_n=config["tau_n"])
    purified, prune_report = _stage("prune", purify, cloud, assignment, report, thresholds)

    out = _out_dir(config)
    inputs = {"ply": ply_path, "views": views_path}
    _stage("save", save_ply, purified, out / "purified.ply")
    _write_json(out / "contribution.json", _report(config, inputs, **report.to_dict()))
    _write_json(out / "clusters.json", _report(config, inputs, **assignment.to_dict()))

    payload = prune_report.to_dict()
    if config["labels"]:
        labels_path = _require_file(config["labels"], "labels file")
        truth = json.loads(Path(labels_path).read_text())
        pruned = set(prune_report.pruned_indices.tolist())
        wm = truth.get("watermark_indices", [])
        scene_idx = truth.get("scene_indices", [])
        payload["watermark_recall"] = (
            sum(1 for i in wm if i in pruned) / len(wm) if wm else 1.0
        )
        payload["scene_retention"] = (
            sum(1 for i in scene_idx if i not in pruned) / len(scene_idx)
            if scene_idx
            else 1.0
        )
    _write_json(out / "report.json", _report(config, inputs, **payload))
    print(
        f"pruned {prune_report.pruned_count}/{len(cloud)} primitives "
        f"(tau_c={thresholds.tau_c}, tau_n={thresholds.tau_n})"
    )
    return 0


def cmd_baseline(args) -> int:
    defaults = {
        "ply": "",
        "method": "random",
        "ratio": 0.25,
        "color_gain": 1.0,
        "opacity_gain": 1.0,
        "sigma": 0.1,
        "seed": 0,
        "out": "baseline",
    }
    config = _resolve(args, defaults)
    ply_path = _require_file(config["ply"], "input ply")
    cloud = _stage("load", load_ply, ply_path)
    method = config["method"]
    if method == "random":
        result = _stage("baseline", random_prune, cloud, config["ratio"], config["seed"])
    elif method == "scale":
        result = _stage(
            "baseline", feature_scale, cloud, config["color_gain"], config["opacity_gain"]
        )
    elif method == "noise":
        result = _stage("baseline", noise_inject, cloud, config["sigma"], config["seed"])
    else:
        raise ConfigError(f"unknown baseline method {method!r} (random, scale, noise)")
    out = _out_dir(config)
    _stage("save", save_ply, result, out / "baseline.ply")
    _write_json(
        out / "baseline.json",
        _report(config, {"ply": ply_path}, kept_count=len(result), input_count=len(cloud)),
    )
    print(f"{method} baseline: {len(result)}/{len(cloud)} primitives kept")
    return 0


def cmd_metrics(args) -> int:
    defaults = {"reference": "", "candidate": "", "out": ""}
    config = _resolve(args, defaults)
    ref_dir = Path(config["reference"])
    cand_dir = Path(config["candidate"])
    if not ref_dir.is_dir() or not cand_dir.is_dir():
        raise ConfigError("reference and candidate must be directories of PNGs")
    names = sorted(p.name for p in ref_dir.glob("*.png"))
    if not names:
        raise ConfigError(f"no PNG files in {ref_dir}")
    per_view = []
    for name in names:
        other = cand_dir / name
        if not other.is_file():
            raise ConfigError(f"candidate image missing: {other}")
        ref = images.read_png(ref_dir / name)
        cand = images.read_png(other)
        per_view.append(
            {
                "name": name,
                "psnr": _stage("metrics", metrics.psnr, ref, cand),
                "ssim": _stage("metrics", metrics.ssim, ref, cand),
            }
        )
    payload = {
        "schema": SCHEMA_VERSION,
        "per_view": per_view,
        "mean_psnr": float(np.mean([v["psnr"] for v in per_view])),
        "mean_ssim": float(np.mean([v["ssim"] for v in per_view])),
    }
    if config["out"]:
        _write_json(config["out"], payload)
    print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat TOML config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatpurify",
        description="Contribution analysis, clustering and adaptive pruning for splat scenes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic scene")
    _add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-scene", dest="n_scene", type=int)
    p.add_argument("--n-wm", dest="n_wm", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--train-views", dest="train_views", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="render every view to PNG")
    _add_common(p)
    p.add_argument("--ply")
    p.add_argument("--views")
    p.add_argument("--out")
    p.add_argument("--npy", action="store_const", const=True)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("analyze", help="accumulate per-primitive contribution weights")
    _add_common(p)
    p.add_argument("--ply")
    p.add_argument("--views")
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cluster", help="cluster primitives in feature space")
    _add_common(p)
    p.add_argument("--ply")
    p.add_argument("--contribution")
    p.add_argument("--out")
    p.add_argument("--min-cluster-size", dest="min_cluster_size", type=int)
    p.add_argument("--min-samples", dest="min_samples", type=int)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("purify", help="full pipeline: weights, clusters, pruning")
    _add_common(p)
    p.add_argument("--ply")
    p.add_argument("--views")
    p.add_argument("--out")
    p.add_argument("--tau-c", dest="tau_c", type=float)
    p.add_argument("--tau-n", dest="tau_n", type=float)
    p.add_argument("--min-cluster-size", dest="min_cluster_size", type=int)
    p.add_argument("--min-samples", dest="min_samples", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--labels", help="optional ground-truth labels.json for recall/retention")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_purify)

    p = sub.add_parser("baseline", help="random prune / feature scale / noise baselines")
    _add_common(p)
    p.add_argument("--ply")
    p.add_argument("--method", choices=["random", "scale", "noise"])
    p.add_argument("--ratio", type=float)
    p.add_argument("--color-gain", dest="color_gain", type=float)
    p.add_argument("--opacity-gain", dest="opacity_gain", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("metrics", help="PSNR/SSIM between two image directories")
    _add_common(p)
    p.add_argument("--reference")
    p.add_argument("--candidate")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - unexpected
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

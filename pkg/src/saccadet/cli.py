"""Command line pipeline: generate data, train detectors and search
policies, evaluate, and merge reports.

Subcommands
    gen-data        build a synthetic dataset file
    train-detector  fit a confidence function (modes: bb, eye, il)
    train-policy    fit a sequential search policy on top of a detector
    evaluate        score a detector (and optionally its policy) on the test split
    report          merge evaluation files into comparison tables

All randomness is seeded; artifacts embed the dataset hash and a hash of
the fully resolved configuration, and rerunning a subcommand with the
same inputs reproduces its artifacts byte for byte at any --jobs level.
Wall-clock timings are written to a separate ``*.timing.json`` sidecar
that is excluded from that guarantee.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import agent, dataset, metrics, mil, reinforce, svm
from .dataset import MODE_BB, MODE_EYE, MODE_IL

log = logging.getLogger("saccadet")


class UsageError(Exception):
    pass


def _config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return data


def _merge(defaults: dict, config: dict, overrides: dict) -> dict:
    out = dict(defaults)
    for src in (config, overrides):
        for key, value in src.items():
            if value is None:
                continue
            if key not in out:
                raise UsageError(f"unknown configuration key {key!r}")
            out[key] = value
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

_GEN_DEFAULTS = {
    "images": 80,
    "regions_lo": 18,
    "regions_hi": 30,
    "feature_dim": 24,
    "signature_separation": 3.0,
    "subpart_pattern_strength": 3.5,
    "context_strength": 5.0,
    "noise_scale": 0.8,
    "fixation_fraction": 0.34,
    "fixation_best_bias": 0.3,
    "classes": 1,
    "seed": 0,
}


def _generator_config(resolved: dict) -> dataset.GeneratorConfig:
    try:
        return dataset.GeneratorConfig(
            images=int(resolved["images"]),
            regions_per_image=(int(resolved["regions_lo"]), int(resolved["regions_hi"])),
            feature_dim=int(resolved["feature_dim"]),
            signature_separation=float(resolved["signature_separation"]),
            subpart_pattern_strength=float(resolved["subpart_pattern_strength"]),
            context_strength=float(resolved["context_strength"]),
            noise_scale=float(resolved["noise_scale"]),
            fixation_fraction=float(resolved["fixation_fraction"]),
            fixation_best_bias=float(resolved["fixation_best_bias"]),
            classes=int(resolved["classes"]),
            seed=int(resolved["seed"]),
        )
    except ValueError as exc:
        raise UsageError(f"invalid generator configuration: {exc}") from exc


def cmd_gen_data(args) -> int:
    overrides = {
        key: getattr(args, key.replace("-", "_"), None) for key in _GEN_DEFAULTS
    }
    resolved = _merge(_GEN_DEFAULTS, _load_config_file(args.config), overrides)
    config = _generator_config(resolved)
    data = dataset.generate(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataset.save(data, out)
    summary = dataset.calibration_summary(data)
    log.info("dataset written to %s (%d images, hash %s)",
             out, len(data.images), dataset.file_hash(out)[:12])
    log.info("fixation calibration: fraction %.3f, best overlap fixated %.3f "
             "vs all segments %.3f",
             summary["mean_fixated_fraction"],
             summary["mean_best_overlap_fixated"],
             summary["mean_best_overlap_all"])
    return 0


# ---------------------------------------------------------------------------
# train-detector
# ---------------------------------------------------------------------------

_DET_DEFAULTS = {
    "mode": MODE_EYE,
    "constraints": "on",
    "c_grid": [0.5, 5.0],
    "restarts": 30,
    "subregion_threshold": 0.2,
    "fringe_threshold": 0.2,
    "max_outer_iters": 50,
    "svm_tol": 1e-5,
    "svm_max_epochs": 10_000,
    "seed": 0,
}


def _confidence_fn(model: svm.LinearModel):
    return lambda region: svm.decision(model, region.features)


def _score_detector(model, images, target_class, nms_threshold=0.2):
    """Exhaustive evaluation: detections after suppression plus image scores."""
    detections = []
    image_scores = {}
    for image in images:
        dets = [
            metrics.Detection(image.id, r.rect, svm.decision(model, r.features))
            for r in image.regions
        ]
        image_scores[image.id] = max(d.confidence for d in dets)
        detections.extend(metrics.nms(dets, nms_threshold))
    return detections, image_scores


def _class_gts(images, target_class):
    return {
        im.id: list(im.gt_rects) if im.class_id == target_class else []
        for im in images
    }


def _class_labels(images, target_class):
    return {im.id: (1 if im.class_id == target_class else -1) for im in images}


def _fit_mode(mode, constraints, images, cfg, jobs):
    """One detector fit on the given images; returns (model, extras)."""
    target_class = cfg["target_class"]
    bags, bb_labels = dataset.make_bags(
        images, mode, target_class=target_class,
        fringe_threshold=cfg["fringe_threshold"],
    )
    svm_config = svm.SvmConfig(
        c=cfg["c"], tol=cfg["svm_tol"], max_epochs=cfg["svm_max_epochs"],
        seed=cfg["seed"],
    )
    if mode == MODE_BB:
        ids = sorted(rid for rid, lab in bb_labels.items() if lab != 0)
        table = {r.id: r for im in images for r in im.regions}
        x = np.stack([table[rid].features for rid in ids])
        y = np.array([float(bb_labels[rid]) for rid in ids])
        solution = svm.train_detailed(x, y, svm_config)
        assignment = {rid: bb_labels[rid] for rid in bb_labels}
        return solution.model, {
            "assignment": assignment,
            "objective": solution.objective,
            "iterations": solution.epochs,
            "converged": solution.converged,
        }
    mil_config = mil.CmiConfig(
        subregion_threshold=cfg["subregion_threshold"],
        fringe_threshold=cfg["fringe_threshold"],
        restarts=cfg["restarts"],
        max_outer_iters=cfg["max_outer_iters"],
        svm=svm_config,
        constraints=constraints,
        seed=cfg["seed"],
    )
    trainer = mil.cmi_svm_train if constraints else mil.mi_svm_train
    result = trainer(bags, images, mil_config, jobs=jobs)
    return result.model, {
        "assignment": result.assignment,
        "objective": result.objective,
        "iterations": result.iterations,
        "converged": result.converged,
        "chosen_restart": result.chosen_restart,
    }


def cmd_train_detector(args) -> int:
    overrides = {
        "mode": args.mode,
        "constraints": args.constraints,
        "c_grid": [float(v) for v in args.c_grid.split(",")] if args.c_grid else None,
        "restarts": args.restarts,
        "seed": args.seed,
        "subregion_threshold": args.subregion_threshold,
        "fringe_threshold": args.fringe_threshold,
        "max_outer_iters": None,
        "svm_tol": args.svm_tol,
        "svm_max_epochs": None,
    }
    resolved = _merge(_DET_DEFAULTS, _load_config_file(args.config), overrides)
    mode = resolved["mode"]
    if mode not in (MODE_BB, MODE_EYE, MODE_IL):
        raise UsageError(f"unknown mode {mode!r} (expected bb, eye or il)")
    if resolved["constraints"] not in ("on", "off"):
        raise UsageError("constraints must be 'on' or 'off'")
    constraints = resolved["constraints"] == "on"
    if mode == MODE_BB and not constraints:
        log.warning("bb mode ignores the constraints flag")
    data = dataset.load(args.data)
    data_hash = dataset.file_hash(args.data)

    train_images = data.split("train")
    val_images = data.split("val")
    trainval = train_images + val_images
    target_class = args.target_class
    if target_class < 1 or target_class > data.config.classes:
        raise UsageError(f"target class {target_class} outside 1..{data.config.classes}")

    base_cfg = dict(resolved)
    base_cfg["target_class"] = target_class
    val_gts = _class_gts(val_images, target_class)
    val_labels = _class_labels(val_images, target_class)

    grid_scores = {}
    for c in resolved["c_grid"]:
        cfg = dict(base_cfg, c=float(c))
        model, _ = _fit_mode(mode, constraints, train_images, cfg, args.jobs)
        _, image_scores = _score_detector(model, val_images, target_class)
        grid_scores[float(c)] = metrics.classification_ap(image_scores, val_labels)
        log.info("C=%g -> validation classification AP %.3f", c, grid_scores[float(c)])
    best_c = max(sorted(grid_scores), key=lambda c: grid_scores[c])

    cfg = dict(base_cfg, c=best_c)
    model, extras = _fit_mode(mode, constraints, trainval, cfg, args.jobs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    svm.save_model(model, out / "model.txt")
    mil.save_assignment(extras["assignment"], out / "assignment.txt")
    meta = {
        "kind": "detector",
        "method": _method_name(mode, constraints),
        "mode": mode,
        "constraints": constraints,
        "target_class": target_class,
        "chosen_c": best_c,
        "grid_scores": {str(k): v for k, v in grid_scores.items()},
        "objective": extras["objective"],
        "iterations": extras["iterations"],
        "converged": extras["converged"],
        "dataset_hash": data_hash,
        "dataset_path": str(args.data),
        "config": {k: v for k, v in resolved.items()},
        "config_hash": _config_hash(resolved),
        "feature_dim": data.config.feature_dim,
    }
    _write_json(out / "meta.json", meta)
    log.info("detector %s written to %s (C=%g, objective %.4f)",
             meta["method"], out, best_c, extras["objective"])
    return 0


def _method_name(mode, constraints):
    if mode == MODE_BB:
        return "bb-det"
    prefix = "cmi" if constraints else "mi"
    return f"{prefix}-{mode}-det"


# ---------------------------------------------------------------------------
# train-policy
# ---------------------------------------------------------------------------

_POL_DEFAULTS = {
    "lambda_grid": [0.0, 0.01],
    "rollouts_per_estimate": 64,
    "saccade_penalty": 0.05,
    "step_size": 0.5,
    "step_decay": 0.05,
    "max_iterations": 40,
    "patience": 10,
    "restarts": 8,
    "t_max": 20,
    "val_repeats": 2,
    "seed": 0,
}


def cmd_train_policy(args) -> int:
    overrides = {
        "lambda_grid": [float(v) for v in args.lambda_grid.split(",")]
        if args.lambda_grid else None,
        "restarts": args.restarts,
        "max_iterations": args.max_iterations,
        "rollouts_per_estimate": args.rollouts,
        "seed": args.seed,
        "saccade_penalty": args.saccade_penalty,
        "step_size": None,
        "step_decay": None,
        "patience": None,
        "t_max": args.t_max,
        "val_repeats": None,
    }
    resolved = _merge(_POL_DEFAULTS, _load_config_file(args.config), overrides)
    data = dataset.load(args.data)
    data_hash = dataset.file_hash(args.data)
    detector_dir = Path(args.detector)
    model = svm.load_model(detector_dir / "model.txt")
    det_meta = json.loads((detector_dir / "meta.json").read_text())
    if det_meta.get("dataset_hash") != data_hash:
        raise UsageError(
            "detector was trained on a different dataset "
            f"({det_meta.get('dataset_hash')} vs {data_hash})"
        )
    if model.w.shape[0] != data.config.feature_dim:
        raise UsageError("detector feature dimension does not match dataset")

    confidence_fn = _confidence_fn(model)
    train_images = data.split("train")
    val_images = data.split("val")

    best = None
    for lam in resolved["lambda_grid"]:
        config = reinforce.TrainConfig(
            rollouts_per_estimate=int(resolved["rollouts_per_estimate"]),
            l2_penalty=float(lam),
            saccade_penalty=float(resolved["saccade_penalty"]),
            step_size=float(resolved["step_size"]),
            step_decay=float(resolved["step_decay"]),
            max_iterations=int(resolved["max_iterations"]),
            patience=int(resolved["patience"]),
            restarts=int(resolved["restarts"]),
            t_max=int(resolved["t_max"]),
            val_repeats=int(resolved["val_repeats"]),
            seed=int(resolved["seed"]),
        )
        result = reinforce.train_policy(
            train_images, val_images, confidence_fn, config, jobs=args.jobs
        )
        log.info("lambda=%g -> validation reward %.4f (restart %d)",
                 lam, result.val_reward, result.chosen_restart)
        if best is None or result.val_reward > best[1].val_reward:
            best = (float(lam), result)
    lam, result = best

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    agent.save_policy(result.params, out / "policy.txt")
    log_lines = [
        f"{e.restart} {e.iteration} {e.train_reward!r} {e.val_reward!r} "
        f"{e.evaluated_fraction!r} {e.grad_norm!r} {int(e.accepted)}"
        for e in result.log
    ]
    (out / "training_log.txt").write_text(
        "restart iteration train_reward val_reward evaluated_fraction "
        "grad_norm accepted\n" + "\n".join(log_lines) + "\n"
    )
    meta = {
        "kind": "policy",
        "method": det_meta["method"].replace("-det", "-seq"),
        "detector": str(detector_dir),
        "detector_method": det_meta["method"],
        "chosen_lambda": lam,
        "chosen_restart": result.chosen_restart,
        "val_reward": result.val_reward,
        "dataset_hash": data_hash,
        "config": resolved,
        "config_hash": _config_hash(resolved),
        "feature_dim": data.config.feature_dim,
        "target_class": det_meta.get("target_class", 1),
    }
    _write_json(out / "meta.json", meta)
    log.info("policy %s written to %s (lambda=%g, val reward %.4f)",
             meta["method"], out, lam, result.val_reward)
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _evaluate_exhaustive(model, images, target_class):
    started = time.perf_counter()
    detections, image_scores = _score_detector(model, images, target_class)
    elapsed = time.perf_counter() - started
    gts = _class_gts(images, target_class)
    labels = _class_labels(images, target_class)
    return {
        "ap_iou": metrics.detection_ap(
            detections, gts, metrics.MatchCriterion("iou", 0.5)
        ),
        "ap_inclusion": metrics.detection_ap(
            detections, gts, metrics.MatchCriterion("inclusion", 0.5)
        ),
        "ap_classification": metrics.classification_ap(image_scores, labels),
        "seconds": elapsed,
        "image_scores": image_scores,
    }


def _evaluate_sequential(model, params, images, target_class, repeats, seed,
                         t_max, saccade_penalty):
    confidence_fn = _confidence_fn(model)
    gts = _class_gts(images, target_class)
    labels = _class_labels(images, target_class)
    per_repeat = []
    episodes = []
    started = time.perf_counter()
    for repeat in range(repeats):
        detections = []
        image_scores = {}
        for image in images:
            rng = np.random.default_rng((seed, 101, repeat, image.id))
            episode = agent.rollout(image, params, confidence_fn, rng,
                                    t_max=t_max, saccade_penalty=saccade_penalty)
            episodes.append(episode)
            rect = {r.id: r.rect for r in image.regions}[episode.predicted_region]
            detections.append(
                metrics.Detection(image.id, rect, episode.confidence)
            )
            image_scores[image.id] = episode.confidence
        per_repeat.append({
            "ap_iou": metrics.detection_ap(
                detections, gts, metrics.MatchCriterion("iou", 0.5)
            ),
            "ap_inclusion": metrics.detection_ap(
                detections, gts, metrics.MatchCriterion("inclusion", 0.5)
            ),
            "ap_classification": metrics.classification_ap(image_scores, labels),
            "fraction": float(np.mean(
                [e.evaluated_fraction for e in episodes[-len(images):]]
            )),
        })
    elapsed = time.perf_counter() - started
    cost = metrics.cost_report(episodes)
    return per_repeat, cost, elapsed, episodes


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = float(np.mean(vals))
    std = float(np.std(vals)) if len(vals) > 1 else 0.0
    return mean, std


def cmd_evaluate(args) -> int:
    data = dataset.load(args.data)
    data_hash = dataset.file_hash(args.data)
    detector_dir = Path(args.detector)
    model = svm.load_model(detector_dir / "model.txt")
    det_meta = json.loads((detector_dir / "meta.json").read_text())
    if model.w.shape[0] != data.config.feature_dim:
        raise UsageError("detector feature dimension does not match dataset")
    if det_meta.get("dataset_hash") != data_hash:
        raise UsageError("detector was trained on a different dataset")
    target_class = det_meta.get("target_class", 1)
    images = data.split(args.split)

    policy_params = None
    pol_meta = None
    if args.policy is not None:
        policy_dir = Path(args.policy)
        policy_params = agent.load_policy(policy_dir / "policy.txt")
        pol_meta = json.loads((policy_dir / "meta.json").read_text())
        if pol_meta.get("dataset_hash") != data_hash:
            raise UsageError("policy was trained on a different dataset")
        if policy_params.feature_dim != data.config.feature_dim:
            raise UsageError("policy feature dimension does not match dataset")

    exhaustive = _evaluate_exhaustive(model, images, target_class)
    n_images = len(images)
    timing = {"exhaustive_seconds_per_image": exhaustive["seconds"] / n_images}

    if policy_params is None:
        report = metrics.EvalReport(
            method=det_meta["method"],
            dataset_hash=data_hash,
            sequential=False,
            repeats=1,
            classes=(metrics.ClassReport(
                class_id=target_class,
                ap_iou=exhaustive["ap_iou"],
                ap_inclusion=exhaustive["ap_inclusion"],
                ap_classification=exhaustive["ap_classification"],
                evaluated_fraction=1.0,
                evaluated_fraction_std=0.0,
                count_speedup=1.0,
                wallclock_per_image=None,
            ),),
        )
    else:
        t_max = int(pol_meta["config"].get("t_max", 20))
        penalty = float(pol_meta["config"].get("saccade_penalty", 0.05))
        per_repeat, cost, seq_seconds, _ = _evaluate_sequential(
            model, policy_params, images, target_class, args.repeats,
            args.seed, t_max, penalty,
        )
        timing["sequential_seconds_per_image"] = seq_seconds / (n_images * args.repeats)
        timing["wallclock_speedup"] = (
            timing["exhaustive_seconds_per_image"]
            / timing["sequential_seconds_per_image"]
        )
        ap_iou, ap_iou_std = _mean_std([r["ap_iou"] for r in per_repeat])
        ap_inc, ap_inc_std = _mean_std([r["ap_inclusion"] for r in per_repeat])
        ap_cls, ap_cls_std = _mean_std([r["ap_classification"] for r in per_repeat])
        if args.repeats == 1:
            ap_iou_std = ap_inc_std = ap_cls_std = None
        report = metrics.EvalReport(
            method=pol_meta["method"],
            dataset_hash=data_hash,
            sequential=True,
            repeats=args.repeats,
            classes=(metrics.ClassReport(
                class_id=target_class,
                ap_iou=ap_iou,
                ap_inclusion=ap_inc,
                ap_classification=ap_cls,
                ap_iou_std=ap_iou_std,
                ap_inclusion_std=ap_inc_std,
                ap_classification_std=ap_cls_std,
                evaluated_fraction=cost.mean_fraction,
                evaluated_fraction_std=cost.std_fraction if args.repeats > 1 else None,
                count_speedup=cost.count_speedup,
                wallclock_per_image=None,
            ),),
        )

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "method": report.method,
        "dataset_hash": report.dataset_hash,
        "sequential": report.sequential,
        "repeats": report.repeats,
        "split": args.split,
        "exhaustive_ap_classification": exhaustive["ap_classification"],
        "classes": [dataclasses.asdict(c) for c in report.classes],
        "mean": dataclasses.asdict(report.mean_row()),
    }
    _write_json(out, payload)
    _write_json(out.with_suffix(".timing.json"), timing)
    mean = report.mean_row()
    log.info(
        "%s on %s split: AP(iou) %s AP(incl) %s AP(cls) %s evaluated fraction %s",
        report.method, args.split,
        _fmt(mean.ap_iou), _fmt(mean.ap_inclusion),
        _fmt(mean.ap_classification), _fmt(mean.evaluated_fraction),
    )
    return 0


def _fmt(v):
    return "n/a" if v is None else f"{v:.3f}"


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

_REPORT_METRICS = (
    ("ap_iou", "detection AP (iou >= 0.5)"),
    ("ap_inclusion", "detection AP (inclusion >= 0.5)"),
    ("ap_classification", "classification AP"),
    ("evaluated_fraction", "evaluated region fraction"),
    ("count_speedup", "count speedup vs exhaustive"),
)


def cmd_report(args) -> int:
    runs = []
    for path in args.evals:
        payload = json.loads(Path(path).read_text())
        runs.append(payload)
    hashes = {r["dataset_hash"] for r in runs}
    if len(hashes) > 1:
        raise UsageError(
            "refusing to merge evaluations from different datasets: "
            + ", ".join(sorted(h[:12] for h in hashes))
        )

    lines = []
    merged = {"dataset_hash": runs[0]["dataset_hash"], "methods": {}}
    for metric_key, metric_label in _REPORT_METRICS:
        lines.append(metric_label)
        header = ["class"] + [r["method"] for r in runs]
        widths = [max(12, len(h) + 2) for h in header]
        lines.append("".join(h.ljust(w) for h, w in zip(header, widths)))
        class_ids = sorted({
            c["class_id"] for r in runs for c in r["classes"]
        })
        for cid in class_ids:
            row = [str(cid)]
            for r in runs:
                cell = next(
                    (c for c in r["classes"] if c["class_id"] == cid), None
                )
                row.append(_cell(cell, metric_key))
            lines.append("".join(v.ljust(w) for v, w in zip(row, widths)))
        row = ["mean"] + [_cell(r["mean"], metric_key) for r in runs]
        lines.append("".join(v.ljust(w) for v, w in zip(row, widths)))
        lines.append("")
        merged["methods"][metric_key] = {
            r["method"]: r["mean"].get(metric_key) for r in runs
        }

    table = "\n".join(lines)
    if args.out:
        Path(args.out).write_text(table + "\n")
        _write_json(Path(args.out).with_suffix(".json"), merged)
    sys.stdout.write(table + "\n")
    return 0


def _cell(entry, key):
    if entry is None or entry.get(key) is None:
        return "n/a"
    value = entry[key]
    std = entry.get(key + "_std")
    if std is None:
        return f"{value:.3f}"
    return f"{value:.3f}±{std:.3f}"


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saccadet",
        description="synthetic weakly-supervised detection benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True)
    for key, default in _GEN_DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, int):
            p.add_argument(flag, type=int, default=None)
        else:
            p.add_argument(flag, type=float, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-detector", help="train a confidence function")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=[MODE_BB, MODE_EYE, MODE_IL], default=None)
    p.add_argument("--constraints", choices=["on", "off"], default=None)
    p.add_argument("--c-grid", help="comma separated C values")
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--subregion-threshold", type=float, default=None)
    p.add_argument("--fringe-threshold", type=float, default=None)
    p.add_argument("--svm-tol", type=float, default=None)
    p.add_argument("--target-class", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_train_detector)

    p = sub.add_parser("train-policy", help="train a sequential search policy")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--detector", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda-grid", help="comma separated L2 penalties")
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--rollouts", type=int, default=None)
    p.add_argument("--saccade-penalty", type=float, default=None)
    p.add_argument("--t-max", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("evaluate", help="evaluate detector or policy")
    p.add_argument("--data", required=True)
    p.add_argument("--detector", required=True)
    p.add_argument("--policy")
    p.add_argument("--split", choices=list(dataset.SPLITS), default="test")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge evaluation files into tables")
    p.add_argument("evals", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return 1
    except (dataset.DatasetFormatError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

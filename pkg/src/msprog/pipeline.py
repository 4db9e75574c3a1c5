"""File-based pipeline stages behind the CLI.

Every stage reads JSON config plus input files, writes its artifacts into an
output directory, and drops a manifest (config hash, seed, tool version,
output digests). Nothing here embeds wall-clock time or machine identity, so
re-running a stage with identical config and seed reproduces every artifact
byte for byte. ``run_all`` chains the stages through the same functions and
files, which keeps the chained and single-shot paths identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, _kernels
from ._util import canonical_json, config_hash
from .evaluation import (FoldPlan, MetricsReport, PredictionRecord, SubgroupScheme,
                         evaluate, kfold_split, read_records, write_records)
from .features import (ALL_GROUPS, GROUP_FULL, apply_feature_group_mask,
                       build_feature_space, build_instances, exclude_leaky_features,
                       instances_matrix, instances_tensor)
from .ingest import AdapterMapping, compute_feature_sparsity, ingest_cohort
from .labels import LabelConfig, annotate_cohort, label_histogram, parse_task_name
from .models import ModelSpec, fit, grid_search, save_model
from .models.losses import LossSpec
from .subject import read_cohort, write_cohort
from .synth import GeneratorConfig, generate_cohort, summarize_cohort

log = logging.getLogger("msprog")


class ConfigError(ValueError):
    """Bad or incomplete configuration (CLI exit code 2)."""


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, stage: str, config: dict, seed: Optional[int],
                    outputs: list[Path]) -> Path:
    manifest = {
        "stage": stage,
        "config_hash": config_hash(config),
        "seed": seed,
        "tool_version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "outputs": {p.name: _sha256(p) for p in sorted(outputs)},
    }
    path = out / f"manifest_{stage}.json"
    path.write_text(canonical_json(manifest) + "\n", encoding="utf-8")
    return path


def _write_json(path: Path, obj) -> Path:
    path.write_text(canonical_json(obj) + "\n", encoding="utf-8")
    return path


def _load_config(config) -> dict:
    if isinstance(config, dict):
        return config
    path = Path(config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# Stages

def run_synth(config, out, seed: Optional[int] = None, jobs: int = 1) -> dict:
    cfg_dict = _load_config(config)
    if seed is not None:
        cfg_dict = {**cfg_dict, "seed": seed}
    try:
        gen = GeneratorConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cohort = generate_cohort(gen)
    cohort_path = out / "cohort.jsonl"
    write_cohort(cohort_path, cohort)
    stats_path = _write_json(out / "cohort_stats.json", summarize_cohort(cohort))
    _write_manifest(out, "synth", cfg_dict, gen.seed, [cohort_path, stats_path])
    log.info("synth: %d subjects -> %s", len(cohort), cohort_path)
    return {"cohort": str(cohort_path), "stats": str(stats_path)}


def run_ingest(config, out, seed: Optional[int] = None, jobs: int = 1) -> dict:
    cfg = _load_config(config)
    if "mapping" not in cfg and "mapping_file" not in cfg:
        raise ConfigError("ingest config needs 'mapping' or 'mapping_file'")
    mapping_dict = cfg.get("mapping") or _load_config(cfg["mapping_file"])
    files = cfg.get("files", [])
    for f in files:
        if not Path(f).exists():
            raise ConfigError(f"input file not found: {f}")
    mapping = AdapterMapping.from_dict(mapping_dict)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cohort, summary = ingest_cohort(files, mapping)
    cohort_path = out / "cohort.jsonl"
    write_cohort(cohort_path, cohort)
    summary_path = _write_json(out / "ingest_summary.json", summary.to_dict())
    _write_manifest(out, "ingest", cfg, seed, [cohort_path, summary_path])
    log.info("ingest: %d rows -> %d subjects", summary.rows_read, summary.subjects)
    return {"cohort": str(cohort_path), "summary": str(summary_path)}


def run_label(config, out, seed: Optional[int] = None, jobs: int = 1) -> dict:
    cfg = _load_config(config)
    if "cohort" not in cfg:
        raise ConfigError("label config needs 'cohort'")
    cohort_path = Path(cfg["cohort"])
    if not cohort_path.exists():
        raise ConfigError(f"cohort not found: {cohort_path}")
    label_cfg = LabelConfig.from_dict(cfg.get("labels", {}))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cohort = read_cohort(cohort_path)
    labeled = annotate_cohort(cohort, label_cfg)
    labeled_path = out / "labeled.jsonl"
    write_cohort(labeled_path, labeled)
    stats_path = _write_json(out / "label_stats.json", label_histogram(labeled))
    _write_manifest(out, "label", cfg, seed, [labeled_path, stats_path])
    return {"labeled": str(labeled_path), "stats": str(stats_path)}


def run_sparsity(config, out, seed: Optional[int] = None, jobs: int = 1) -> dict:
    cfg = _load_config(config)
    if "cohort" not in cfg:
        raise ConfigError("sparsity config needs 'cohort'")
    cohort = read_cohort(cfg["cohort"])
    bucket = int(cfg.get("bucket_s", 30 * 86400))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table = compute_feature_sparsity(cohort, bucket)
    csv_path = out / "sparsity.csv"
    table.to_csv(csv_path)
    _write_manifest(out, "sparsity", cfg, seed, [csv_path])
    return {"sparsity": str(csv_path)}


def _task_instances(cohort, task, mode, cfg, group):
    space = build_feature_space(cohort)
    space = exclude_leaky_features(space, task, strict_leakage=cfg.get("strict_leakage", False),
                                   score_categories=cfg.get("labels", {}).get("score_categories"))
    label_cfg = LabelConfig.from_dict(cfg.get("labels", {}))
    instances = build_instances(
        cohort, task, space, mode=mode,
        lookback_s=cfg.get("lookback_s"),
        bucket_s=int(cfg.get("bucket_s", 7 * 86400)),
        n_buckets=int(cfg.get("n_buckets", 26)),
        config=label_cfg)
    if group != GROUP_FULL:
        instances = [apply_feature_group_mask(inst, group, space) for inst in instances]
    return space, instances


def run_featurize(config, out, seed: Optional[int] = None, jobs: int = 1) -> dict:
    cfg = _load_config(config)
    for key in ("cohort", "task"):
        if key not in cfg:
            raise ConfigError(f"featurize config needs '{key}'")
    cohort = read_cohort(cfg["cohort"])
    task = parse_task_name(cfg["task"])
    mode = cfg.get("mode", "tabular")
    group = cfg.get("feature_group", GROUP_FULL)
    if group not in ALL_GROUPS:
        raise ConfigError(f"unknown feature group {group!r}")
    space, instances = _task_instances(cohort, task, mode, cfg, group)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    safe = task.name.replace("@", "_")
    if mode == "tabular":
        path = out / f"instances_{safe}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            header = ["subject_id", "trigger_t", "target", "sex", "age", *space.names]
            fh.write(",".join(header) + "\n")
            for inst in instances:
                row = [inst.subject_id, str(inst.trigger_t), repr(inst.target),
                       inst.sex, "" if inst.age is None else repr(inst.age)]
                row += [repr(v) for v in inst.values]
                fh.write(",".join(row) + "\n")
    else:
        path = out / f"instances_{safe}.npz"
        X, y = instances_tensor(instances)
        np.savez(path, values=X, presence=np.stack([i.presence for i in instances]),
                 targets=y,
                 subject_ids=np.array([i.subject_id for i in instances]),
                 meta=canonical_json({"task": task.name, "features": list(space.names),
                                      "mode": mode}))
    _write_manifest(out, "featurize", cfg, seed, [path])
    return {"instances": str(path), "n_instances": len(instances)}


def _subgroup_attrs(inst) -> dict:
    attrs: dict = {"Sex": inst.sex}
    if inst.age is not None:
        attrs["Age"] = inst.age
    return attrs


def _model_name(entry: dict) -> str:
    return entry.get("name", entry["family"])


def _fit_fold(args):
    """Train one (model, fold) cell; top-level function so jobs>1 can pickle it."""
    (entry, fold_id, Xt, yt, Xv, yv, Xe, test_meta, task, fold_seed, fingerprint) = args
    family = entry["family"]
    task_kind = task["kind"]
    n_classes = task["n_classes"]
    loss = LossSpec(**entry["loss"]) if entry.get("loss") else None
    if entry.get("grid"):
        grid = entry["grid"] if isinstance(entry["grid"], dict) else None
        metric = "rmse" if task_kind == "regression" else "auprc"
        result = grid_search(family, grid, (Xt, yt), (Xv, yv), metric,
                             task_kind, n_classes=n_classes, loss=loss,
                             seed=fold_seed, fingerprint=fingerprint)
        if result.best_model is None:
            return fold_id, None, {"error": "no grid cell trained", "cells": result.cells}
        model = result.best_model
        info = {"best_hyperparams": result.best_spec.hyperparams,
                "validation_score": result.best_score}
    else:
        spec = ModelSpec(family=family, task_kind=task_kind, n_classes=n_classes,
                         hyperparams=entry.get("hyperparams", {}), loss=loss)
        model = fit(spec, np.concatenate([Xt, Xv]) if len(Xv) else Xt,
                    np.concatenate([yt, yv]) if len(yv) else yt,
                    seed=fold_seed, fingerprint=fingerprint)
        info = {}
    scores = model.predict(Xe, fingerprint)
    return fold_id, (model, scores, test_meta), info


def run_train(config, out, seed: Optional[int] = None, jobs: int = 1) -> dict:
    cfg = _load_config(config)
    for key in ("cohort", "tasks", "models"):
        if key not in cfg:
            raise ConfigError(f"train config needs '{key}'")
    eff_seed = seed if seed is not None else int(cfg.get("seed", 0))
    k = int(cfg.get("k", 10))
    if k < 2:
        raise ConfigError("k must be >= 2")
    group = cfg.get("feature_group", GROUP_FULL)
    if group not in ALL_GROUPS:
        raise ConfigError(f"unknown feature group {group!r}")
    cohort = read_cohort(cfg["cohort"])
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    plan = kfold_split([s.subject_id for s in cohort], k, eff_seed)
    plan_path = _write_json(out / "fold_plan.json",
                            {"seed": plan.seed, "k": k,
                             "folds": [list(f) for f in plan.folds]})

    outputs = [plan_path]
    save_checkpoints = bool(cfg.get("save_models", False))
    # model -> (subject, t) -> record parts, merged across tasks
    merged: dict[str, dict[tuple, PredictionRecord]] = {}

    for task_name in cfg["tasks"]:
        task = parse_task_name(task_name)
        for entry in cfg["models"]:
            mode = "sequence" if entry["family"] == "TCN" else "tabular"
            space, instances = _task_instances(cohort, task, mode, cfg, group)
            if not instances:
                log.warning("no instances for task %s; skipping", task_name)
                continue
            to_xy = instances_tensor if mode == "sequence" else instances_matrix
            name = _model_name(entry)
            fold_of = plan.fold_of()
            work = []
            for fold_id in range(k):
                test = [i for i in instances if fold_of[i.subject_id] == fold_id]
                train = [i for i in instances if fold_of[i.subject_id] != fold_id]
                if not test or not train:
                    continue
                # inner split for grid selection: last tenth of training subjects
                train_sids = sorted({i.subject_id for i in train})
                inner = kfold_split(train_sids, max(2, min(5, len(train_sids))),
                                    eff_seed * 1009 + fold_id)
                val_sids = set(inner.folds[0]) if entry.get("grid") else set()
                fit_insts = [i for i in train if i.subject_id not in val_sids]
                val_insts = [i for i in train if i.subject_id in val_sids]
                Xt, yt = to_xy(fit_insts)
                Xv, yv = to_xy(val_insts) if val_insts else (Xt[:0], yt[:0])
                Xe, _ye = to_xy(test)
                test_meta = [(i.subject_id, i.trigger_t, i.target, _subgroup_attrs(i))
                             for i in test]
                work.append((entry, fold_id, Xt, yt, Xv, yv, Xe, test_meta,
                             {"kind": task.kind, "n_classes": task.n_classes},
                             eff_seed * 1009 + fold_id, space.fingerprint))

            if jobs > 1:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    results = list(pool.map(_fit_fold, work))
            else:
                results = [_fit_fold(w) for w in work]

            for fold_id, payload, info in sorted(results, key=lambda r: r[0]):
                if payload is None:
                    log.warning("fold %d of %s failed: %s", fold_id, name, info)
                    continue
                model, scores, test_meta = payload
                if save_checkpoints:
                    ckpt = out / f"model_{name}_{task_name.replace('@', '_')}_fold{fold_id}.npz"
                    save_model(model, ckpt)
                    outputs.append(ckpt)
                for (sid, trigger_t, target, attrs), row in zip(test_meta, scores):
                    key = (sid, trigger_t)
                    rec = merged.setdefault(name, {}).get(key)
                    if rec is None:
                        rec = PredictionRecord(sid, trigger_t, {}, {}, attrs)
                        merged[name][key] = rec
                    rec.label_targets[task.name] = float(target)
                    rec.label_predictions[task.name] = [float(v) for v in row]

    pred_paths = {}
    for name in sorted(merged):
        records = [merged[name][key] for key in sorted(merged[name])]
        path = out / f"predictions_{name}.jsonl"
        write_records(path, records)
        outputs.append(path)
        pred_paths[name] = str(path)
    _write_manifest(out, "train", cfg, eff_seed, outputs)
    return {"predictions": pred_paths, "fold_plan": str(plan_path)}


def run_evaluate(config, out, seed: Optional[int] = None, jobs: int = 1) -> dict:
    cfg = _load_config(config)
    for key in ("predictions", "fold_plan"):
        if key not in cfg:
            raise ConfigError(f"evaluate config needs '{key}'")
    plan_dict = _load_config(cfg["fold_plan"])
    plan = FoldPlan(folds=tuple(tuple(f) for f in plan_dict["folds"]),
                    seed=plan_dict["seed"])
    scheme = SubgroupScheme()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = MetricsReport()
    for name in sorted(cfg["predictions"]):
        records = read_records(cfg["predictions"][name])
        part = evaluate(records, scheme, plan, model=name)
        report.rows.extend(part.rows)
    csv_path = out / "metrics.csv"
    report.to_csv(csv_path)
    json_path = out / "metrics_summary.json"
    report.to_json(json_path)
    _write_manifest(out, "evaluate", cfg, seed, [csv_path, json_path])
    return {"metrics": str(csv_path), "summary": str(json_path)}


def run_ablate(config, out, seed: Optional[int] = None, jobs: int = 1) -> dict:
    """Feature-group ablation: the train+evaluate loop over configured groups."""
    cfg = _load_config(config)
    groups = cfg.get("feature_groups",
                     ["Demographics", "FunctionalTests", "Questionnaires", "POMs", "Full"])
    for g in groups:
        if g not in ALL_GROUPS:
            raise ConfigError(f"unknown feature group {g!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = MetricsReport()
    outputs = []
    for group in groups:
        sub = out / f"group_{group}"
        train_cfg = {**cfg, "feature_group": group}
        train_cfg.pop("feature_groups", None)
        result = run_train(train_cfg, sub, seed=seed, jobs=jobs)
        plan_dict = _load_config(result["fold_plan"])
        plan = FoldPlan(folds=tuple(tuple(f) for f in plan_dict["folds"]),
                        seed=plan_dict["seed"])
        for name, path in sorted(result["predictions"].items()):
            records = read_records(path)
            part = evaluate(records, SubgroupScheme(), plan, model=f"{name}[{group}]")
            report.rows.extend(part.rows)
    csv_path = out / "ablation_metrics.csv"
    report.to_csv(csv_path)
    json_path = out / "ablation_summary.json"
    report.to_json(json_path)
    _write_manifest(out, "ablate", cfg, seed, [csv_path, json_path])
    return {"metrics": str(csv_path), "summary": str(json_path)}


def run_report(config, out, seed: Optional[int] = None, jobs: int = 1) -> dict:
    """Join metric summaries into one paper-style table."""
    cfg = _load_config(config)
    if "summaries" not in cfg:
        raise ConfigError("report config needs 'summaries'")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in cfg["summaries"]:
        summary = _load_config(path)
        for task in sorted(summary):
            for model in sorted(summary[task]):
                for subgroup in sorted(summary[task][model]):
                    for metric, cell in sorted(summary[task][model][subgroup].items()):
                        rows.append((task, model, subgroup, metric,
                                     cell["display"], cell["n_folds"]))
    csv_path = out / "report.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("task,model,subgroup,metric,mean_std,n_folds\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    _write_manifest(out, "report", cfg, seed, [csv_path])
    return {"report": str(csv_path)}


def run_all(config, out, seed: Optional[int] = None, jobs: int = 1) -> dict:
    """synth -> label -> train -> evaluate -> report through the stage functions."""
    cfg = _load_config(config)
    for key in ("synth", "label", "train"):
        if key not in cfg:
            raise ConfigError(f"all config needs '{key}'")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    synth_out = run_synth(cfg["synth"], out, seed=seed, jobs=jobs)
    label_cfg = {**cfg["label"], "cohort": synth_out["cohort"]}
    label_out = run_label(label_cfg, out, seed=seed, jobs=jobs)
    train_cfg = {**cfg["train"], "cohort": label_out["labeled"],
                 "labels": cfg["label"].get("labels", {})}
    train_out = run_train(train_cfg, out, seed=seed, jobs=jobs)
    eval_cfg = {"predictions": train_out["predictions"],
                "fold_plan": train_out["fold_plan"]}
    eval_out = run_evaluate(eval_cfg, out, seed=seed, jobs=jobs)
    report_out = run_report({"summaries": [eval_out["summary"]]}, out, seed=seed, jobs=jobs)
    return {**synth_out, **label_out, **train_out, **eval_out, **report_out}


STAGES = {
    "synth": run_synth,
    "ingest": run_ingest,
    "label": run_label,
    "featurize": run_featurize,
    "train": run_train,
    "evaluate": run_evaluate,
    "ablate": run_ablate,
    "sparsity": run_sparsity,
    "report": run_report,
    "all": run_all,
}

"""Experiment grids: config file -> (seed x method x regularizer x budget) runs.

Each grid cell trains independently with a PRNG derived from the master
seed and the cell descriptor, so results do not depend on execution order.
Outputs are a deterministic ``results.csv``, aggregate ``summary.json``,
and ``plotdata.csv`` keyed for budget-on-x comparison plots. Wall-clock
timings are reported in the summary and the run log only; keeping them out
of results.csv makes that file byte-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .data import load_dataset_csv, make_synthetic_gaussian, split_class_incremental, split_per_class
from .errors import ConfigError, DataError, NumericError, ParseError
from .metrics import compute_acc, compute_fr
from .regularizers import RegKind, RegTarget
from .training import Method, TrainConfig, run_sequence

_DATASET_KEYS = {
    "synthetic": {"kind", "classes", "per_class", "dim", "spread"},
    "csv": {"kind", "path"},
}

_DEFAULTS = {
    "tasks": 5,
    "budgets": [5],
    "regularizers": ["none"],
    "reg_target": "ct",
    "reg_weight": 0.5,
    "alpha": 0.3,
    "beta": 0.5,
    "ewc_strength": 1.0,
    "si_strength": 1.0,
    "si_damping": 0.1,
    "epochs_per_task": 5,
    "batch_size": 16,
    "lr": 0.1,
    "hidden_dims": [64],
    "insert_at": "batch",
    "seeds": [1],
    "out_dir": "results",
}

_SYNTH_DEFAULTS = {"classes": 10, "per_class": 100, "dim": 16, "spread": 0.3}


@dataclass
class ExperimentConfig:
    dataset: dict
    methods: list
    tasks: int = 5
    budgets: list = field(default_factory=lambda: [5])
    regularizers: list = field(default_factory=lambda: [RegKind.NONE])
    reg_target: RegTarget = RegTarget.CURRENT
    reg_weight: float = 0.5
    alpha: float = 0.3
    beta: float = 0.5
    ewc_strength: float = 1.0
    si_strength: float = 1.0
    si_damping: float = 0.1
    epochs_per_task: int = 5
    batch_size: int = 16
    lr: float = 0.1
    hidden_dims: tuple = (64,)
    insert_at: str = "batch"
    seeds: list = field(default_factory=lambda: [1])
    out_dir: str = "results"

    def to_json_dict(self):
        return {
            "dataset": dict(self.dataset),
            "tasks": self.tasks,
            "budgets": list(self.budgets),
            "methods": [m.value for m in self.methods],
            "regularizers": [r.value for r in self.regularizers],
            "reg_target": self.reg_target.value,
            "reg_weight": self.reg_weight,
            "alpha": self.alpha,
            "beta": self.beta,
            "ewc_strength": self.ewc_strength,
            "si_strength": self.si_strength,
            "si_damping": self.si_damping,
            "epochs_per_task": self.epochs_per_task,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "hidden_dims": list(self.hidden_dims),
            "insert_at": self.insert_at,
            "seeds": list(self.seeds),
            "out_dir": self.out_dir,
        }

    def fingerprint(self):
        """Stable digest of everything that affects results (out_dir excluded)."""
        payload = self.to_json_dict()
        payload.pop("out_dir")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class ResultRecord:
    fingerprint: str
    seed: int
    method: str
    regularizer: str
    budget: int
    acc: float
    fr: float
    per_task_acc: list
    seconds: float
    error: str | None = None


def _enum_value(enum_cls, raw, fieldname):
    try:
        return enum_cls(raw)
    except ValueError:
        choices = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{fieldname}: unknown value '{raw}' (choices: {choices})") from None


def config_from_dict(raw):
    """Validate a parsed config mapping; returns (config, applied_defaults)."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    known = {"dataset", "methods"} | set(_DEFAULTS)
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config key '{key}'")
    if "dataset" not in raw:
        raise ConfigError("missing required key 'dataset'")
    if "methods" not in raw or not raw["methods"]:
        raise ConfigError("missing required key 'methods' (nonempty list)")

    dataset = dict(raw["dataset"])
    kind = dataset.get("kind")
    if kind not in _DATASET_KEYS:
        raise ConfigError(f"dataset.kind must be one of {sorted(_DATASET_KEYS)}")
    for key in dataset:
        if key not in _DATASET_KEYS[kind]:
            raise ConfigError(f"unknown dataset key '{key}'")
    applied = {}
    if kind == "synthetic":
        for key, value in _SYNTH_DEFAULTS.items():
            if key not in dataset:
                dataset[key] = value
                applied[f"dataset.{key}"] = value
    elif "path" not in dataset:
        raise ConfigError("csv dataset requires 'path'")

    merged = {}
    for key, default in _DEFAULTS.items():
        if key in raw:
            merged[key] = raw[key]
        else:
            merged[key] = default
            applied[key] = default

    for listname in ("budgets", "seeds"):
        if not merged[listname]:
            raise ConfigError(f"{listname} must be a nonempty list")
    if not merged["regularizers"]:
        raise ConfigError("regularizers must be a nonempty list")

    cfg = ExperimentConfig(
        dataset=dataset,
        methods=[_enum_value(Method, m, "methods") for m in raw["methods"]],
        tasks=int(merged["tasks"]),
        budgets=[int(b) for b in merged["budgets"]],
        regularizers=[_enum_value(RegKind, r, "regularizers") for r in merged["regularizers"]],
        reg_target=_enum_value(RegTarget, merged["reg_target"], "reg_target"),
        reg_weight=float(merged["reg_weight"]),
        alpha=float(merged["alpha"]),
        beta=float(merged["beta"]),
        ewc_strength=float(merged["ewc_strength"]),
        si_strength=float(merged["si_strength"]),
        si_damping=float(merged["si_damping"]),
        epochs_per_task=int(merged["epochs_per_task"]),
        batch_size=int(merged["batch_size"]),
        lr=float(merged["lr"]),
        hidden_dims=tuple(int(h) for h in merged["hidden_dims"]),
        insert_at=str(merged["insert_at"]),
        seeds=[int(s) for s in merged["seeds"]],
        out_dir=str(merged["out_dir"]),
    )
    # surface constraint violations now, with the field name
    _cell_train_config(cfg, cfg.methods[0], cfg.regularizers[0], cfg.budgets[0], 0).validate()
    return cfg, applied


def parse_config(path):
    """Load and validate a JSON experiment config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    return config_from_dict(raw)


def _stable_seed(*parts):
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _cell_train_config(cfg, method, reg, budget, master_seed):
    return TrainConfig(
        epochs_per_task=cfg.epochs_per_task,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        seed=_stable_seed("cell", master_seed, method.value, reg.value, budget),
        method=method,
        alpha=cfg.alpha,
        beta=cfg.beta,
        regularizer=reg,
        reg_weight=cfg.reg_weight,
        reg_target=cfg.reg_target,
        per_class_budget=budget,
        ewc_strength=cfg.ewc_strength,
        si_strength=cfg.si_strength,
        si_damping=cfg.si_damping,
        hidden_dims=cfg.hidden_dims,
        insert_at=cfg.insert_at,
    )


def _build_stream(cfg, master_seed, cache):
    if master_seed not in cache:
        spec = cfg.dataset
        if spec["kind"] == "synthetic":
            ds = make_synthetic_gaussian(spec["classes"], spec["per_class"], spec["dim"],
                                         spec["spread"], seed=_stable_seed("dataset", master_seed))
        else:
            raw = load_dataset_csv(spec["path"])
            ds = split_per_class(raw.features, raw.labels, raw.num_classes, raw.label_map)
        cache[master_seed] = split_class_incremental(ds, cfg.tasks, seed=_stable_seed("split", master_seed))
    return cache[master_seed]


def run_grid(cfg, log=None):
    """Run every (method, regularizer, budget, seed) cell; failures are isolated.

    A cell that diverges is recorded with an error message instead of
    aborting the grid. Records come back in canonical order.
    """
    log = log or (lambda msg: None)
    fingerprint = cfg.fingerprint()
    records = []
    streams = {}
    for method in cfg.methods:
        for reg in cfg.regularizers:
            for budget in cfg.budgets:
                for seed in cfg.seeds:
                    label = f"{method.value}/{reg.value}/budget{budget}/seed{seed}"
                    start = time.perf_counter()
                    try:
                        stream = _build_stream(cfg, seed, streams)
                        tc = _cell_train_config(cfg, method, reg, budget, seed)
                        matrix, _, _ = run_sequence(stream, tc)
                        acc = compute_acc(matrix)
                        fr = compute_fr(matrix) if cfg.tasks >= 2 else math.nan
                        record = ResultRecord(
                            fingerprint=fingerprint, seed=seed, method=method.value,
                            regularizer=reg.value, budget=budget, acc=acc, fr=fr,
                            per_task_acc=[float(v) for v in matrix.final_accuracies()],
                            seconds=time.perf_counter() - start,
                        )
                        log(f"cell {label}: acc={acc:.4f} fr={fr:.4f} ({record.seconds:.2f}s)")
                    except NumericError as exc:
                        record = ResultRecord(
                            fingerprint=fingerprint, seed=seed, method=method.value,
                            regularizer=reg.value, budget=budget, acc=math.nan, fr=math.nan,
                            per_task_acc=[], seconds=time.perf_counter() - start,
                            error=str(exc),
                        )
                        log(f"cell {label}: FAILED ({exc})")
                    records.append(record)
    return records


def summarize(records):
    """Per-(method, regularizer, budget) mean and spread over seeds.

    Spread is the population standard deviation. Failed cells are excluded.
    """
    groups = {}
    for r in records:
        if r.error is not None:
            continue
        groups.setdefault((r.method, r.regularizer, r.budget), []).append(r)
    rows = []
    for (method, reg, budget), cells in sorted(groups.items()):
        accs = np.array([c.acc for c in cells])
        frs = np.array([c.fr for c in cells])
        rows.append({
            "method": method,
            "regularizer": reg,
            "budget": budget,
            "n_seeds": len(cells),
            "acc_mean": float(accs.mean()),
            "acc_std": float(accs.std()),
            "fr_mean": float(frs.mean()),
            "fr_std": float(frs.std()),
            "seconds_mean": float(np.mean([c.seconds for c in cells])),
        })
    return rows


def emit_results(records, out_dir):
    """Write results.csv, summary.json, plotdata.csv (and failures.log if needed).

    results.csv holds one row per successful cell with shortest round-trip
    float formatting; re-parsing it reproduces the in-memory values exactly.
    """
    if not records:
        raise DataError("no records to emit")
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    results_path = os.path.join(out_dir, "results.csv")
    with open(results_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "regularizer", "budget", "seed", "acc", "fr"])
        for r in records:
            if r.error is None:
                writer.writerow([r.method, r.regularizer, r.budget, r.seed,
                                 repr(float(r.acc)), repr(float(r.fr))])
    paths["results"] = results_path

    summary_path = os.path.join(out_dir, "summary.json")
    summary = {
        "fingerprint": records[0].fingerprint,
        "cells": summarize(records),
        "failures": [
            {"method": r.method, "regularizer": r.regularizer, "budget": r.budget,
             "seed": r.seed, "error": r.error}
            for r in records if r.error is not None
        ],
    }
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    paths["summary"] = summary_path

    plot_path = os.path.join(out_dir, "plotdata.csv")
    with open(plot_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "regularizer", "budget",
                         "acc_mean", "acc_std", "fr_mean", "fr_std"])
        for row in summary["cells"]:
            writer.writerow([row["method"], row["regularizer"], row["budget"],
                             repr(row["acc_mean"]), repr(row["acc_std"]),
                             repr(row["fr_mean"]), repr(row["fr_std"])])
    paths["plotdata"] = plot_path

    failures = summary["failures"]
    if failures:
        failures_path = os.path.join(out_dir, "failures.log")
        with open(failures_path, "w", encoding="utf-8") as fh:
            for f in failures:
                fh.write(f"{f['method']},{f['regularizer']},{f['budget']},{f['seed']}: {f['error']}\n")
        paths["failures"] = failures_path
    return paths


def read_results_csv(path):
    """Re-ingest a results.csv written by :func:`emit_results`."""
    with open(path, "r", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    records = []
    for row in rows:
        records.append(ResultRecord(
            fingerprint="", seed=int(row["seed"]), method=row["method"],
            regularizer=row["regularizer"], budget=int(row["budget"]),
            acc=float(row["acc"]), fr=float(row["fr"]),
            per_task_acc=[], seconds=0.0,
        ))
    return records

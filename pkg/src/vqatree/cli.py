"""Command-line front end: generate task families, run, compare, and sweep studies.

Exit codes
    0  success
    2  invalid generator spec or output directory already exists (generate)
    3  invalid run config, budget, or sweep
    4  task files could not be ingested
    5  compared records describe different task sets
"""

from __future__ import annotations

import argparse
import copy
import csv
import glob
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import bench
from .bench import BenchError, TaskFamily, exact_ground_energy, parse_range
from .engine import RunConfig, RunRecord, run, shots_to_threshold
from .engine.config import AnsatzConfig, ConfigError, InitConfig, OptimizerConfig
from .engine.controller import TaskIngestionError
from .engine.metrics import fidelity_curve
from .engine.monitor import WINDOW_FLOOR, MonitorConfig
from .pauli import Hamiltonian, PauliError, load_hamiltonian, save_hamiltonian

log = logging.getLogger("vqatree")

EXIT_SPEC = 2
EXIT_CONFIG = 3
EXIT_INGEST = 4
EXIT_MISMATCH = 5

LANCZOS_QUBIT_CAP = 16


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- run-config schema ------------------------------------------------------------------

_range = {"oneOf": [{"type": "string"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}

_generator = {
    "type": "object",
    "oneOf": [
        {
            "properties": {
                "kind": {"const": "tfim"},
                "sites": {"type": "integer", "minimum": 2},
                "J": {"type": "number"},
                "h": _range,
            },
            "required": ["kind", "sites", "h"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "kind": {"const": "xxz"},
                "sites": {"type": "integer", "minimum": 2},
                "J": {"type": "number"},
                "delta": _range,
            },
            "required": ["kind", "sites", "delta"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "kind": {"const": "maxcut"},
                "graph": {
                    "oneOf": [
                        {"type": "string"},
                        {
                            "type": "object",
                            "properties": {
                                "nodes": {"type": "integer", "minimum": 2},
                                "extra_edges": {"type": "integer", "minimum": 0},
                                "seed": {"type": "integer"},
                            },
                            "required": ["nodes"],
                            "additionalProperties": False,
                        },
                    ]
                },
                "scales": _range,
            },
            "required": ["kind", "graph", "scales"],
            "additionalProperties": False,
        },
    ],
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "mode": {"enum": ["tree", "baseline", "forced-split"]},
        "tasks": {
            "type": "object",
            "oneOf": [
                {"required": ["generator"]},
                {"required": ["files"]},
                {"required": ["manifest"]},
            ],
            "properties": {
                "generator": _generator,
                "files": {"type": "string"},
                "manifest": {"type": "string"},
                "references": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "budget": {"type": "number", "exclusiveMinimum": 0},
        "shots_per_term": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "optimizer": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["spsa", "simplex"]},
                "calibrate": {"type": "boolean"},
                "target_first_step": {"type": "number", "exclusiveMinimum": 0},
                "calibration_probes": {"type": "integer", "minimum": 1},
                "a": {"type": "number", "exclusiveMinimum": 0},
                "A": {"type": ["number", "null"], "minimum": 0},
                "c": {"type": "number", "exclusiveMinimum": 0},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "gamma": {"type": "number", "exclusiveMinimum": 0},
                "initial_step": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "monitor": {
            "type": "object",
            "properties": {
                "warmup": {"type": ["integer", "null"], "minimum": 2},
                "window": {"type": ["integer", "null"], "minimum": 2},
                "eps_split": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "ansatz": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["hea", "maqaoa"]},
                "layers": {"type": "integer", "minimum": 0},
                "p": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "init": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["zeros", "uniform", "qaoa"]},
                "scale": {"type": "number", "minimum": 0},
                "gamma": {"type": "number"},
                "beta": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "forced_split_fraction": {"type": ["number", "null"]},
        "baseline_budget": {"enum": ["strict", "converge"]},
        "history_stride": {"type": "integer", "minimum": 1},
        "trace": {"type": "boolean"},
        "output": {"type": "string"},
    },
    "required": ["tasks", "budget"],
    "additionalProperties": False,
}


def validate_config(doc: dict) -> None:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError(EXIT_CONFIG, f"config error at {where}: {exc.message}") from exc


def run_config_from_doc(doc: dict, seed: Optional[int] = None, threads: int = 1) -> RunConfig:
    kw = {k: doc[k] for k in ("mode", "budget", "shots_per_term", "seed", "forced_split_fraction",
                               "baseline_budget", "history_stride", "trace") if k in doc}
    cfg = RunConfig(
        **kw,
        ansatz=AnsatzConfig(**doc.get("ansatz", {})),
        optimizer=OptimizerConfig(**doc.get("optimizer", {})),
        monitor=MonitorConfig(**doc.get("monitor", {})),
        init=InitConfig(**doc.get("init", {})),
        threads=threads,
    )
    if seed is not None:
        cfg.seed = seed
    try:
        cfg.validate()
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from exc
    return cfg


# -- task sources ---------------------------------------------------------------------


@dataclass
class TaskSet:
    task_ids: list[str]
    hamiltonians: list[Hamiltonian]
    references: list[Optional[float]]


def _values(v) -> list[float]:
    return parse_range(v) if isinstance(v, str) else [float(x) for x in v]


def family_from_generator(gen: dict, base: Path = Path(".")) -> TaskFamily:
    kind = gen["kind"]
    if kind == "tfim":
        return bench.tfim_family(gen["sites"], gen.get("J", 1.0), _values(gen["h"]))
    if kind == "xxz":
        return bench.xxz_family(gen["sites"], gen.get("J", 1.0), _values(gen["delta"]))
    g = gen["graph"]
    if isinstance(g, str):
        graph = bench.load_graph(base / g)
    else:
        graph = bench.synthetic_grid_graph(g["nodes"], g.get("extra_edges", 4), g.get("seed", 14))
    return bench.maxcut_family(graph, _values(gen["scales"]))


def _reference(h: Hamiltonian) -> Optional[float]:
    if h.n_qubits > LANCZOS_QUBIT_CAP:
        log.warning("no reference energy for %d qubits", h.n_qubits)
        return None
    return exact_ground_energy(h)


def load_tasks(source: dict, base: Path = Path(".")) -> TaskSet:
    """Resolve a task source block; relative paths are taken from ``base``."""
    try:
        if "generator" in source:
            fam = family_from_generator(source["generator"], base)
            return TaskSet(fam.task_ids, fam.hamiltonians, fam.reference_energies)
        if "manifest" in source:
            path = base / source["manifest"]
            doc = json.loads(path.read_text())
            entries = doc["tasks"]
            hams = [load_hamiltonian(path.parent / e["file"]) for e in entries]
            refs = [e.get("reference_energy") for e in entries]
            return TaskSet([e["id"] for e in entries], hams, refs)
        files = sorted(glob.glob(str(base / source["files"])))
        files = [f for f in files if Path(f).name != "manifest.json"]
        if not files:
            raise CliError(EXIT_INGEST, f"no task files match {source['files']!r}")
        hams = [load_hamiltonian(f) for f in files]
        refs = [_reference(h) for h in hams] if source.get("references", True) else [None] * len(hams)
        return TaskSet([Path(f).stem for f in files], hams, refs)
    except CliError:
        raise
    except BenchError as exc:
        raise CliError(EXIT_CONFIG, f"invalid generator spec: {exc}") from exc
    except (OSError, KeyError, TypeError, json.JSONDecodeError, PauliError) as exc:
        raise CliError(EXIT_INGEST, f"task ingestion failed: {exc}") from exc


# -- generate --------------------------------------------------------------------------------


def cmd_generate(args) -> int:
    out = Path(args.out)
    try:
        if args.kind == "tfim":
            fam = bench.tfim_family(args.sites, args.J, parse_range(args.h))
        elif args.kind == "xxz":
            fam = bench.xxz_family(args.sites, args.J, parse_range(args.delta))
        else:
            if args.graph:
                graph = bench.load_graph(args.graph)
            else:
                graph = bench.synthetic_grid_graph(args.synthetic, args.extra_edges, args.graph_seed)
            fam = bench.maxcut_family(graph, parse_range(args.scales))
    except (BenchError, PauliError, OSError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_SPEC, f"invalid generator spec: {exc}") from exc
    if out.exists() and any(out.iterdir()) and not args.force:
        raise CliError(EXIT_SPEC, f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for tid, h in zip(fam.task_ids, fam.hamiltonians):
        name = f"{tid}.json"
        save_hamiltonian(h, out / name)
        files.append(name)
    if fam.graph is not None:
        bench.save_graph(fam.graph, out / "base_graph.json")
    (out / "manifest.json").write_text(json.dumps(fam.manifest(files), indent=1, sort_keys=True) + "\n")
    for tid, e in zip(fam.task_ids, fam.reference_energies):
        print(f"task={tid} reference_energy={e!r}")
    return 0


# -- run ---------------------------------------------------------------------------------------


def _read_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_CONFIG, f"cannot read config {path}: {exc}") from exc
    validate_config(doc)
    return doc


def execute(doc: dict, base: Path, seed=None, threads: int = 1, tasks: Optional[TaskSet] = None) -> RunRecord:
    cfg = run_config_from_doc(doc, seed, threads)
    tasks = tasks or load_tasks(doc["tasks"], base)
    try:
        record = run(tasks.hamiltonians, cfg, tasks.task_ids, tasks.references)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from exc
    except (TaskIngestionError, PauliError) as exc:
        raise CliError(EXIT_INGEST, f"task ingestion failed: {exc}") from exc
    record.source_config = copy.deepcopy(doc)
    return record


def _fmt(x) -> str:
    return "nan" if x is None else f"{x:.10g}"


def cmd_run(args) -> int:
    path = Path(args.config)
    doc = _read_config(path)
    out = Path(args.output or doc.get("output") or path.with_suffix("").name + "_out")
    if not out.is_absolute() and not args.output:
        out = path.parent / out
    record = execute(doc, path.parent, args.seed, args.threads)
    out.mkdir(parents=True, exist_ok=True)
    record.save(out / "run.json")
    record.write_histories_csv(out / "histories.csv")
    for r in record.results:
        print(
            f"task={r.task_id} energy={_fmt(r.energy)} exact={_fmt(r.exact_energy)} "
            f"fidelity={_fmt(r.fidelity)} cluster={r.cluster}"
        )
    m = record.metrics
    print(
        f"run mode={record.mode} total_shots={record.total_shots} rounds={record.rounds} "
        f"depth={m['tree_critical_depth']} final_clusters={m['n_final_clusters']} output={out}"
    )
    return 0


# -- compare ------------------------------------------------------------------------------------


def _load_record(path) -> RunRecord:
    try:
        return RunRecord.load(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CliError(EXIT_INGEST, f"cannot read run record {path}: {exc}") from exc


def check_same_tasks(a: RunRecord, b: RunRecord) -> None:
    ra = [r.reference_energy for r in sorted(a.results, key=lambda r: r.task)]
    rb = [r.reference_energy for r in sorted(b.results, key=lambda r: r.task)]
    if a.task_ids != b.task_ids or a.n_qubits != b.n_qubits or ra != rb:
        raise CliError(EXIT_MISMATCH, "records describe different task sets")


def comparison(tree: RunRecord, baseline: RunRecord, T: float) -> dict:
    check_same_tasks(tree, baseline)
    t_shots = shots_to_threshold(tree, T)
    b_shots = shots_to_threshold(baseline, T)
    ratio = b_shots / t_shots if t_shots is not None and b_shots is not None else None
    by_task = {r.task_id: r for r in baseline.results}
    return {
        "threshold": T,
        "savings_ratio": ratio,
        "tree_shots_to_threshold": t_shots,
        "baseline_shots_to_threshold": b_shots,
        "tree_reached": t_shots is not None,
        "baseline_reached": b_shots is not None,
        "tree_critical_depth": tree.metrics.get("tree_critical_depth"),
        "tree_total_shots": tree.total_shots,
        "baseline_total_shots": baseline.total_shots,
        "tasks": [
            {"task": r.task_id, "tree_fidelity": r.fidelity, "baseline_fidelity": by_task[r.task_id].fidelity}
            for r in tree.results
        ],
    }


def cmd_compare(args) -> int:
    tree = _load_record(args.tree)
    baseline = _load_record(args.baseline)
    report = comparison(tree, baseline, args.fidelity)
    out = Path(args.out) if args.out else Path(args.tree).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    grid = sorted({round(x, 6) for x in np.linspace(args.grid_min, args.grid_max, args.grid_points)} | {args.fidelity})
    with open(out / "shots_vs_fidelity.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["fidelity", "tree_shots", "baseline_shots"])
        for (T, ts), (_, bs) in zip(fidelity_curve(tree, grid), fidelity_curve(baseline, grid)):
            w.writerow([T, "" if ts is None else ts, "" if bs is None else bs])

    def reached(name, shots):
        return f"{name}_shots={shots}" if shots is not None else f"{name}=did not reach"

    ratio = report["savings_ratio"]
    print(
        f"threshold={args.fidelity} savings_ratio={'n/a' if ratio is None else repr(ratio)} "
        f"{reached('tree', report['tree_shots_to_threshold'])} "
        f"{reached('baseline', report['baseline_shots_to_threshold'])} "
        f"depth={report['tree_critical_depth']}"
    )
    for t in report["tasks"]:
        print(f"task={t['task']} tree_fidelity={_fmt(t['tree_fidelity'])} baseline_fidelity={_fmt(t['baseline_fidelity'])}")
    return 0


# -- study ----------------------------------------------------------------------------------------


@dataclass
class SweepPoint:
    value: float
    effective: float
    note: str
    doc: dict


def sweep_points(kind: str, base_doc: dict, values: Sequence[float]) -> list[SweepPoint]:
    if not values:
        raise CliError(EXIT_CONFIG, "empty sweep")
    pts = []
    for v in values:
        doc = copy.deepcopy(base_doc)
        note = ""
        eff = v
        if kind == "split-timing":
            if not 0 < v < 1:
                raise CliError(EXIT_CONFIG, f"split fraction {v} outside (0, 1)")
            doc["mode"] = "forced-split"
            doc["forced_split_fraction"] = v
        elif kind == "window":
            if v != int(v) or v < 2:
                raise CliError(EXIT_CONFIG, f"window {v} must be an integer >= 2")
            eff = max(int(v), WINDOW_FLOOR)
            if eff != v:
                note = f"clamped to floor {WINDOW_FLOOR}"
            doc["mode"] = "tree"
            mon = doc.setdefault("monitor", {})
            mon["window"] = int(eff)
            if mon.get("warmup") is not None and mon["warmup"] < eff:
                mon["warmup"] = None
        elif kind == "threshold":
            if not v > 0:
                raise CliError(EXIT_CONFIG, f"split threshold {v} must be positive")
            doc["mode"] = "tree"
            doc.setdefault("monitor", {})["eps_split"] = v
        else:
            raise CliError(EXIT_CONFIG, f"unknown study {kind!r}")
        pts.append(SweepPoint(v, eff, note, doc))
    return pts


def study_rows(kind: str, base_doc: dict, values: Sequence[float], base: Path, seed=None, threads: int = 1):
    points = sweep_points(kind, base_doc, values)
    tasks = load_tasks(base_doc["tasks"], base)
    rows = []
    for pt in points:
        record = execute(pt.doc, base, seed, threads, tasks)
        errors = [r.error for r in record.results]
        known = [e for e in errors if e is not None]
        rows.append(
            {
                "value": pt.value,
                "effective_value": pt.effective,
                "note": pt.note,
                "mean_error": float(np.mean(known)) if known else math.nan,
                "max_error": float(np.max(known)) if known else math.nan,
                "tree_critical_depth": record.metrics["tree_critical_depth"],
                "final_clusters": record.metrics["n_final_clusters"],
                "total_shots": record.total_shots,
                **{f"error_{r.task_id}": r.error for r in record.results},
            }
        )
    return rows


def write_rows(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: "" if v is None else v for k, v in row.items()})


def cmd_study(args) -> int:
    path = Path(args.config)
    doc = _read_config(path)
    try:
        values = parse_range(args.values)
    except (BenchError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid sweep: {exc}") from exc
    if args.log:
        if ":" not in args.values:
            raise CliError(EXIT_CONFIG, "--log needs a start:stop:count range")
        start, stop, count = args.values.split(":")
        if not (float(start) > 0 and float(stop) > 0):
            raise CliError(EXIT_CONFIG, "log sweep endpoints must be positive")
        values = [float(x) for x in np.geomspace(float(start), float(stop), int(count))]
    rows = study_rows(args.kind, doc, values, path.parent, args.seed, args.threads)
    out = Path(args.out) if args.out else path.parent / f"study_{args.kind}"
    out.mkdir(parents=True, exist_ok=True)
    write_rows(rows, out / "study.csv")
    for row in rows:
        note = f" note={row['note'].replace(' ', '_')}" if row["note"] else ""
        print(
            f"value={row['value']!r} mean_error={row['mean_error']:.6g} max_error={row['max_error']:.6g} "
            f"depth={row['tree_critical_depth']} shots={row['total_shots']}{note}"
        )
    best = min(rows, key=lambda r: r["mean_error"])
    print(f"best value={best['value']!r} mean_error={best['mean_error']:.6g} output={out / 'study.csv'}")
    return 0


# -- entry point -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vqatree", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a task family and its manifest")
    gsub = g.add_subparsers(dest="kind", required=True)
    for kind, param in (("tfim", "h"), ("xxz", "delta")):
        k = gsub.add_parser(kind)
        k.add_argument("--sites", type=int, required=True)
        k.add_argument("--J", type=float, default=1.0)
        k.add_argument(f"--{param}", required=True, help="start:stop:count or comma list")
        k.add_argument("--out", required=True)
        k.add_argument("--force", action="store_true")
    m = gsub.add_parser("maxcut")
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="graph JSON file")
    src.add_argument("--synthetic", type=int, metavar="NODES", help="ring-plus-chords graph with NODES nodes")
    m.add_argument("--extra-edges", type=int, default=4)
    m.add_argument("--graph-seed", type=int, default=14)
    m.add_argument("--scales", required=True, help="start:stop:count or comma list")
    m.add_argument("--out", required=True)
    m.add_argument("--force", action="store_true")

    r = sub.add_parser("run", help="run a config (tree, baseline or forced-split)")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    r.add_argument("--seed", type=int)
    r.add_argument("--output", help="output directory (overrides the config)")

    c = sub.add_parser("compare", help="savings ratio and fidelity table for two runs")
    c.add_argument("tree")
    c.add_argument("baseline")
    c.add_argument("--fidelity", type=float, required=True)
    c.add_argument("--out")
    c.add_argument("--grid-min", type=float, default=0.9)
    c.add_argument("--grid-max", type=float, default=0.999)
    c.add_argument("--grid-points", type=int, default=34)

    s = sub.add_parser("study", help="sweep one knob and tabulate final errors")
    s.add_argument("kind", choices=["window", "threshold", "split-timing"])
    s.add_argument("config")
    s.add_argument("--values", required=True, help="start:stop:count or comma list")
    s.add_argument("--log", action="store_true", help="space a start:stop:count range geometrically")
    s.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    return p


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "compare": cmd_compare, "study": cmd_study}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

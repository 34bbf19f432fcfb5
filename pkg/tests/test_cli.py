import csv
import json

import pytest

from vqatree.cli import (
    EXIT_CONFIG,
    EXIT_INGEST,
    EXIT_MISMATCH,
    EXIT_SPEC,
    main,
)
from vqatree.engine import RunRecord, savings_ratio, shots_to_threshold
from vqatree.engine.monitor import WINDOW_FLOOR


def write_config(path, **kw):
    doc = {
        "tasks": {"generator": {"kind": "tfim", "sites": 3, "h": "0.2:1.0:3"}, "references": True},
        "budget": 2e6,
        "shots_per_term": 256,
        "ansatz": {"kind": "hea", "layers": 1},
    }
    doc.update(kw)
    path.write_text(json.dumps(doc))
    return path


def test_generate_tfim(tmp_path, capsys):
    out = tmp_path / "fam"
    assert main(["generate", "tfim", "--sites", "4", "--h", "0.2:2.0:10", "--out", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert len(files) == 11 and "manifest.json" in files
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["tasks"]) == 10
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 10 and all(l.startswith("task=") and "reference_energy=" in l for l in lines)
    # refuses to clobber, unless forced
    assert main(["generate", "tfim", "--sites", "4", "--h", "0.2:2.0:10", "--out", str(out)]) == EXIT_SPEC
    assert main(["generate", "tfim", "--sites", "4", "--h", "0.2:2.0:10", "--out", str(out), "--force"]) == 0


def test_generate_bad_spec(tmp_path):
    assert main(["generate", "tfim", "--sites", "0", "--h", "1", "--out", str(tmp_path / "x")]) == EXIT_SPEC
    assert main(["generate", "xxz", "--sites", "3", "--delta", "a:b:c", "--out", str(tmp_path / "y")]) == EXIT_SPEC


def test_generate_maxcut_writes_graph(tmp_path):
    out = tmp_path / "mc"
    assert main(["generate", "maxcut", "--synthetic", "6", "--extra-edges", "1", "--scales", "0.9,1.1", "--out", str(out)]) == 0
    assert (out / "base_graph.json").exists() and len(list(out.glob("*.json"))) == 4


def test_run_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    assert main(["run", str(cfg), "--output", str(tmp_path / "a"), "--threads", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert sum(l.startswith("task=") for l in out) == 3 and out[-1].startswith("run mode=tree")
    assert main(["run", str(cfg), "--output", str(tmp_path / "b"), "--threads", "2"]) == 0
    a = (tmp_path / "a" / "run.json").read_bytes()
    assert a == (tmp_path / "b" / "run.json").read_bytes()
    assert (tmp_path / "a" / "histories.csv").read_bytes() == (tmp_path / "b" / "histories.csv").read_bytes()
    rec = RunRecord.load(tmp_path / "a" / "run.json")
    assert rec.source_config == json.loads(cfg.read_text())


def test_run_seed_override(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    main(["run", str(cfg), "--output", str(tmp_path / "a")])
    main(["run", str(cfg), "--output", str(tmp_path / "b"), "--seed", "7"])
    a = RunRecord.load(tmp_path / "a" / "run.json")
    b = RunRecord.load(tmp_path / "b" / "run.json")
    assert b.config["seed"] == 7 and a.nodes[0].theta != b.nodes[0].theta


def test_run_config_errors(tmp_path):
    assert main(["run", str(write_config(tmp_path / "u.json", bogus=1))]) == EXIT_CONFIG
    assert main(["run", str(write_config(tmp_path / "m.json", mode="nope"))]) == EXIT_CONFIG
    assert main(["run", str(write_config(tmp_path / "o.json", optimizer={"kind": "spsa", "step": 1}))]) == EXIT_CONFIG
    assert main(["run", str(write_config(tmp_path / "f.json", mode="forced-split"))]) == EXIT_CONFIG
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["run", str(tmp_path / "bad.json")]) == EXIT_CONFIG
    assert main(["run", str(write_config(tmp_path / "t.json")), "--threads", "0"]) == EXIT_CONFIG


def _ham(path, n, terms):
    path.write_text(json.dumps({"n_qubits": n, "terms": [{"pauli": p, "coeff": c} for p, c in terms.items()]}))


def test_run_ingestion_errors(tmp_path):
    (tmp_path / "tasks").mkdir()
    _ham(tmp_path / "tasks" / "a.json", 2, {"ZZ": 1.0, "XI": 0.5})
    cfg = write_config(tmp_path / "ok.json", tasks={"files": "tasks/*.json"})
    assert main(["run", str(cfg), "--output", str(tmp_path / "ok")]) == 0
    # mixed qubit counts
    _ham(tmp_path / "tasks" / "b.json", 3, {"ZZI": 1.0})
    assert main(["run", str(cfg)]) == EXIT_INGEST
    # no matching files
    cfg = write_config(tmp_path / "d.json", tasks={"files": "nothing/*.json"})
    assert main(["run", str(cfg)]) == EXIT_INGEST
    # bad Pauli character
    _ham(tmp_path / "tasks" / "b.json", 2, {"ZQ": 1.0})
    assert main(["run", str(write_config(tmp_path / "e.json", tasks={"files": "tasks/*.json"}))]) == EXIT_INGEST
    # malformed document
    (tmp_path / "tasks" / "b.json").write_text(json.dumps({"n_qubits": 2, "terms": {"ZZ": 1.0}}))
    assert main(["run", str(write_config(tmp_path / "f.json", tasks={"files": "tasks/*.json"}))]) == EXIT_INGEST
    # identity-only task
    _ham(tmp_path / "tasks" / "b.json", 2, {"II": 1.0})
    assert main(["run", str(write_config(tmp_path / "g.json", tasks={"files": "tasks/*.json"}))]) == EXIT_INGEST


def test_run_from_generated_files(tmp_path, capsys):
    main(["generate", "tfim", "--sites", "3", "--h", "0.3,0.9", "--out", str(tmp_path / "fam")])
    cfg = write_config(tmp_path / "c.json", tasks={"manifest": "fam/manifest.json"})
    assert main(["run", str(cfg)]) == 0
    rec = RunRecord.load(tmp_path / "c_out" / "run.json")
    assert len(rec.results) == 2 and all(r.reference_energy is not None for r in rec.results)


@pytest.fixture(scope="module")
def tree_and_baseline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cmp")
    tree = write_config(d / "tree.json", budget=2e7)
    base = write_config(d / "base.json", budget=2e7, mode="baseline")
    assert main(["run", str(tree)]) == 0
    assert main(["run", str(base)]) == 0
    return d / "tree_out" / "run.json", d / "base_out" / "run.json"


def test_compare_identical_records(tmp_path, capsys, tree_and_baseline):
    tree, _ = tree_and_baseline
    assert main(["compare", str(tree), str(tree), "--fidelity", "0.9", "--out", str(tmp_path)]) == 0
    cmp = json.loads((tmp_path / "compare.json").read_text())
    assert cmp["savings_ratio"] == 1.0


def test_compare_matches_library(tmp_path, capsys, tree_and_baseline):
    tree, base = tree_and_baseline
    assert main(["compare", str(tree), str(base), "--fidelity", "0.9", "--out", str(tmp_path)]) == 0
    cmp = json.loads((tmp_path / "compare.json").read_text())
    expected = savings_ratio(RunRecord.load(base), RunRecord.load(tree), 0.9)
    assert cmp["savings_ratio"] == expected
    with open(tmp_path / "shots_vs_fidelity.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 34
    for r in rows:
        T = float(r["fidelity"])
        for col, path in (("tree_shots", tree), ("baseline_shots", base)):
            want = shots_to_threshold(RunRecord.load(path), T)
            assert r[col] == ("" if want is None else str(want))


def test_compare_unreached_threshold(tmp_path, capsys, tree_and_baseline):
    tree, base = tree_and_baseline
    assert main(["compare", str(tree), str(base), "--fidelity", "0.999999999", "--out", str(tmp_path)]) == 0
    assert "did not reach" in capsys.readouterr().out
    assert json.loads((tmp_path / "compare.json").read_text())["savings_ratio"] is None


def test_compare_task_mismatch(tmp_path, tree_and_baseline):
    tree, _ = tree_and_baseline
    other = write_config(tmp_path / "o.json", tasks={"generator": {"kind": "tfim", "sites": 3, "h": "0.3:1.0:3"}, "references": True})
    main(["run", str(other)])
    assert main(["compare", str(tree), str(tmp_path / "o_out" / "run.json"), "--fidelity", "0.9"]) == EXIT_MISMATCH


def test_study_split_timing(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", budget=5e6)
    out = tmp_path / "st"
    assert main(["study", "split-timing", str(cfg), "--values", "0.1:0.9:5", "--out", str(out)]) == 0
    with open(out / "study.csv") as f:
        rows = list(csv.DictReader(f))
    assert [float(r["value"]) for r in rows] == pytest.approx([0.1, 0.3, 0.5, 0.7, 0.9])
    assert all(int(r["tree_critical_depth"]) == 1 for r in rows)
    assert "best value=" in capsys.readouterr().out


def test_study_window_clamp(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", budget=3e6)
    assert main(["study", "window", str(cfg), "--values", f"2,{WINDOW_FLOOR + 5}", "--out", str(tmp_path / "w")]) == 0
    with open(tmp_path / "w" / "study.csv") as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["note"].startswith("clamped") and int(float(rows[0]["effective_value"])) == WINDOW_FLOOR
    assert rows[1]["note"] == ""


def test_study_invalid_sweeps(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    assert main(["study", "split-timing", str(cfg), "--values", "0,0.5"]) == EXIT_CONFIG
    assert main(["study", "window", str(cfg), "--values", "2.5"]) == EXIT_CONFIG
    assert main(["study", "threshold", str(cfg), "--values=-1e-3"]) == EXIT_CONFIG
    assert main(["study", "threshold", str(cfg), "--values", "0:1:3", "--log"]) == EXIT_CONFIG


def test_study_threshold_log(tmp_path):
    cfg = write_config(tmp_path / "c.json", budget=3e6)
    assert main(["study", "threshold", str(cfg), "--values", "1e-5:1e-3:3", "--log", "--out", str(tmp_path / "t")]) == 0
    with open(tmp_path / "t" / "study.csv") as f:
        rows = list(csv.DictReader(f))
    assert [float(r["value"]) for r in rows] == pytest.approx([1e-5, 1e-4, 1e-3])


def test_six_task_tree_splits(tmp_path):
    cfg = write_config(tmp_path / "c.json", budget=8e7,
                       tasks={"generator": {"kind": "tfim", "sites": 4, "h": "0.2:1.2:6"}, "references": True})
    assert main(["run", str(cfg)]) == 0
    rec = RunRecord.load(tmp_path / "c_out" / "run.json")
    assert len(rec.nodes) >= 3 and len(rec.final_nodes()) >= 2

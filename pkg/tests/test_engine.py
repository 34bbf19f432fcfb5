import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vqatree.bench import gen_maxcut, maxcut_family, synthetic_grid_graph, tfim_family
from vqatree.engine import (
    ClusterNode,
    RunConfig,
    RunRecord,
    TaskResult,
    baseline_run,
    controller_run,
    fidelity,
    post_process,
    run,
    savings_ratio,
    shot_accounting,
    tree_critical_depth,
)
from vqatree.engine.cluster import ClusterState, per_task_losses, recombine, stream, TAG_EVAL
from vqatree.engine.config import AnsatzConfig, ConfigError, InitConfig, OptimizerConfig
from vqatree.engine.controller import EmptyTaskSet, TaskIngestionError, forced_split_round
from vqatree.engine.metrics import (
    LedgerMismatch,
    MissingReference,
    ThresholdNotMet,
    ZeroGroundEnergy,
    meets_threshold,
    overall_shots,
    shots_to_threshold,
)
from vqatree.engine.monitor import (
    InsufficientHistory,
    MonitorConfig,
    default_eps_split,
    default_warmup,
    default_window,
    slope,
    split_condition,
)
from vqatree.pauli import Hamiltonian, QubitCountMismatch, build_padded_set, pauli_table
from vqatree.statevec import HeaSpec, build_hea, exact_energy, sampled_energy


def tfim(sites, hs):
    fam = tfim_family(sites, 1.0, hs)
    return fam.hamiltonians, fam.task_ids, fam.reference_energies


def small_config(**kw):
    base = dict(budget=4e6, shots_per_term=256, ansatz=AnsatzConfig("hea", 1))
    base.update(kw)
    return RunConfig(**base)


# -- monitor ---------------------------------------------------------------------------


def test_slope_examples():
    assert slope([3, 2, 1], 3) == pytest.approx(-1.0)
    assert slope([5, 5, 5, 5], 4) == 0.0
    assert slope([0, 1, 0, 1], 4) == pytest.approx(0.2)
    assert slope([9, 9, 3, 2, 1], 3) == pytest.approx(-1.0)
    with pytest.raises(InsufficientHistory):
        slope([1, 2], 3)
    with pytest.raises(InsufficientHistory):
        slope([1, 2], 1)


@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(2, 30))
def test_slope_recovers_lines(a, b, W):
    assert slope([a + b * k for k in range(W)], W) == pytest.approx(b, abs=1e-9)


def test_split_condition_examples():
    assert split_condition(-1e-9, [-1.0, -2.0], 1e-6)
    assert split_condition(-1.0, [-1.0, 0.01], 1e-6)
    assert not split_condition(-1.0, [-1.0, 0.0], 1e-6)


def test_monitor_defaults():
    assert default_window(1000) == 20
    assert default_window(500_000) == 100
    assert default_warmup(20) == 50 and default_warmup(100) == 200
    assert default_eps_split(-5.0, 20) == pytest.approx(1e-4 * 5 / 20)
    cfg = MonitorConfig().resolve(1000)
    assert (cfg.window, cfg.warmup) == (20, 50)


def test_monitor_invariants():
    for bad in (MonitorConfig(window=1), MonitorConfig(window=10, warmup=5), MonitorConfig(eps_split=0)):
        with pytest.raises(ValueError):
            bad.validate()


# -- recombination -----------------------------------------------------------------------


def test_per_task_losses_examples():
    est = np.array([0.5, -0.25, 1.0])
    row = np.array([1.0, 2.0, -1.0])
    assert per_task_losses(est, row[None])[0] == pytest.approx(recombine(row, est))
    assert per_task_losses(est, np.zeros((1, 3)))[0] == 0.0
    with pytest.raises(ValueError):
        per_task_losses(est, np.zeros((1, 2)))


def test_recombine_skips_unmeasured_zero_terms():
    est = np.array([0.5, np.nan])
    assert recombine(np.array([2.0, 0.0]), est) == 1.0
    assert math.isnan(recombine(np.array([2.0, 1.0]), est))


def test_per_task_losses_replay_sampled_energy():
    tasks = [Hamiltonian.from_terms(3, {"ZZI": -1.0, "XII": -0.3, "IXI": -0.3}),
             Hamiltonian.from_terms(3, {"ZZI": -1.0, "IZZ": -0.5, "XII": -0.6})]
    p = build_padded_set(tasks)
    state = build_hea(HeaSpec(3, 1), np.linspace(-1, 1, 12))
    from vqatree.statevec import sample_terms

    measure = (p.coeff_vectors != 0).any(axis=0)
    sampled = sample_terms(state, pauli_table(p.superset), measure, 512, stream(9, TAG_EVAL, 0, 0, 0))
    losses = per_task_losses(sampled.estimates, p.coeff_vectors)
    # replaying each task alone with the same stream draws the same binomials for the shared terms
    for i in range(2):
        e, _ = sampled_energy(state, p.superset, np.where(measure, p.coeff_vectors[i], 0.0), 512, stream(9, TAG_EVAL, 0, 0, 0))
        # sampled_energy measures only that task's nonzero terms, so compare on the common support
        if np.array_equal(p.coeff_vectors[i] != 0, measure):
            assert losses[i] == e
    assert np.isfinite(losses).all()


# -- controller ------------------------------------------------------------------------------


def test_empty_and_mismatched_tasks():
    with pytest.raises(EmptyTaskSet):
        controller_run([], small_config())
    with pytest.raises(QubitCountMismatch):
        controller_run([Hamiltonian.from_terms(1, {"Z": 1}), Hamiltonian.from_terms(2, {"ZZ": 1})], small_config())


def test_identity_only_task_rejected():
    with pytest.raises(TaskIngestionError):
        controller_run([Hamiltonian.from_terms(2, {"II": 1.0})], small_config())


def test_config_validation():
    for bad in (dict(budget=0), dict(mode="nope"), dict(mode="forced-split"), dict(shots_per_term=0),
                dict(mode="forced-split", forced_split_fraction=1.5), dict(threads=0)):
        with pytest.raises(ConfigError):
            small_config(**bad).validate()


def test_budget_below_one_round():
    hams, ids, refs = tfim(3, [0.2, 0.8])
    rec = controller_run(hams, small_config(budget=1.0), ids, refs)
    assert rec.rounds == 1 and tree_critical_depth(rec) == 0
    assert rec.metrics["overshoot"] == rec.total_shots - 1


def test_identical_tasks_single_cluster():
    hams, _, _ = tfim(3, [0.5])
    rec = controller_run(hams * 3, small_config(budget=2e7))
    assert len(rec.nodes) == 1 and rec.final_nodes()[0].members == [0, 1, 2]
    assert "unsplittable" in " ".join(rec.nodes[0].events)
    assert len({r.energy for r in rec.results}) == 1


def test_single_member_never_splits():
    hams, ids, refs = tfim(3, [0.5])
    rec = controller_run(hams, small_config(budget=2e7), ids, refs)
    assert len(rec.nodes) == 1 and not rec.nodes[0].events[1:]


def test_distant_pair_splits():
    hams, ids, refs = tfim(4, [0.1, 1.5])
    rec = controller_run(hams, small_config(budget=5e7), ids, refs)
    assert tree_critical_depth(rec) == 1
    assert {tuple(n.members) for n in rec.final_nodes()} == {(0,), (1,)}


@pytest.fixture(scope="module")
def six_task_tree():
    hams, ids, refs = tfim(4, list(np.linspace(0.2, 1.2, 6)))
    return controller_run(hams, small_config(budget=8e7), ids, refs), hams


def test_six_task_leaves_partition(six_task_tree):
    rec, _ = six_task_tree
    assert tree_critical_depth(rec) >= 1
    members = sorted(m for n in rec.final_nodes() for m in n.members)
    assert members == list(range(6))
    assert sorted(r.task for r in rec.results) == list(range(6))


def test_children_partition_parents_and_inherit(six_task_tree):
    rec, _ = six_task_tree
    by_parent = {}
    for n in rec.nodes:
        if n.parent is not None:
            by_parent.setdefault(n.parent, []).append(n)
    for pid, kids in by_parent.items():
        parent = rec.node(pid)
        assert len(kids) == 2 and parent.status == "retired"
        assert sorted(kids[0].members + kids[1].members) == parent.members
        assert all(k.created_at_iter == parent.retired_at_iter for k in kids)


def test_history_lengths_and_mixed_identity(six_task_tree):
    rec, _ = six_task_tree
    for cid, h in rec.histories.items():
        node = rec.node(int(cid))
        assert len(h["mixed"]) == node.iterations
        tasks = np.array(list(h["tasks"].values()))
        assert tasks.shape == (len(node.members), node.iterations)
        np.testing.assert_allclose(tasks.mean(axis=0), h["mixed"], atol=1e-10)


def test_ledger_exact(six_task_tree):
    rec, _ = six_task_tree
    assert shot_accounting(rec) == rec.total_shots
    assert sum(rec.per_cluster_shots.values()) == rec.total_shots
    assert rec.metrics["ledger_verified"]
    assert all(s2 >= s1 for s1, s2 in zip(rec.trace_shots, rec.trace_shots[1:]))


def test_post_processing_dominance(six_task_tree):
    rec, _ = six_task_tree
    finals = rec.final_nodes()
    padded_rows = build_padded_set(six_task_tree[1]).coeff_vectors
    for r in rec.results:
        est = lambda n: np.array([np.nan if x is None else x for x in n.last_estimates])
        energies = [recombine(padded_rows[r.task], est(n)) for n in finals]
        assert r.energy == min(e for e in energies if not math.isnan(e))
        home = next(n for n in finals if r.task in n.members)
        assert r.energy <= recombine(padded_rows[r.task], est(home))


def test_inheritance_bit_exact():
    hams, ids, refs = tfim(4, [0.1, 1.5])
    # fixed schedule so the trajectory does not depend on the planned iteration count
    opt = OptimizerConfig(calibrate=False, a=0.05, A=10.0)
    cfg = small_config(budget=5e7, mode="forced-split", forced_split_fraction=0.5, optimizer=opt)
    rec = controller_run(hams, cfg, ids, refs)
    root, a, b = rec.nodes
    split_round = forced_split_round(0.5, rec.metrics["planned_iterations"])
    assert root.retired_at_iter == split_round + 1
    # replay the root alone up to the split to get its parameters at that instant
    stopped = controller_run(hams, replace(cfg, mode="tree", budget=root.shots_used, monitor=MonitorConfig(warmup=10**6, window=2)), ids, refs)
    assert stopped.nodes[0].iterations == root.iterations
    assert stopped.nodes[0].theta == root.theta
    # children start from the parent's final parameters and continue its schedule
    first_a = rec.histories[str(a.id)]
    assert a.created_at_iter == root.retired_at_iter and len(first_a["mixed"]) == a.iterations


def test_forced_split_timing():
    assert forced_split_round(0.5, 300) == 100
    hams, ids, refs = tfim(3, [0.2, 0.3, 0.9])
    rec = controller_run(hams, small_config(budget=3e7, mode="forced-split", forced_split_fraction=0.3), ids, refs)
    assert len(rec.nodes) == 3 and tree_critical_depth(rec) == 1
    frac = rec.nodes[0].retired_at_iter / rec.rounds
    assert abs(frac - 0.3) < 0.05


def test_deterministic_across_threads():
    hams, ids, refs = tfim(4, list(np.linspace(0.2, 1.2, 4)))
    a = controller_run(hams, small_config(budget=3e7, threads=1), ids, refs).to_json()
    b = controller_run(hams, small_config(budget=3e7, threads=4), ids, refs).to_json()
    assert a == b


def test_simplex_plugs_in():
    hams, ids, refs = tfim(3, [0.2, 0.9])
    cfg = small_config(budget=2e7, optimizer=OptimizerConfig(kind="simplex"))
    rec = controller_run(hams, cfg, ids, refs)
    assert shot_accounting(rec) == rec.total_shots
    assert all(r.fidelity > 0.8 for r in rec.results)


def test_maqaoa_requires_maxcut_tasks():
    hams, ids, refs = tfim(3, [0.2])
    with pytest.raises(ConfigError):
        controller_run(hams, small_config(ansatz=AnsatzConfig("maqaoa", p=1)), ids, refs)


def test_maxcut_identity_terms_free():
    fam = maxcut_family(synthetic_grid_graph(5, 1, seed=0), [0.9, 1.1])
    cfg = small_config(budget=5e6, ansatz=AnsatzConfig("maqaoa", p=1), init=InitConfig("qaoa"))
    rec = controller_run(fam.hamiltonians, cfg, fam.task_ids, fam.reference_energies)
    n_edges = len(synthetic_grid_graph(5, 1, seed=0).edges)
    assert rec.nodes[0].n_measured_terms == n_edges
    assert shot_accounting(rec) == rec.total_shots


# -- baseline ------------------------------------------------------------------------------------


def test_baseline_single_task_matches_tree():
    hams, ids, refs = tfim(3, [0.6])
    t = controller_run(hams, small_config(budget=1e7), ids, refs)
    b = baseline_run(hams, small_config(budget=1e7, mode="baseline"), ids, refs)
    assert t.nodes[0].theta == b.nodes[0].theta
    assert [r.energy for r in t.results] == [r.energy for r in b.results]
    assert t.total_shots == b.total_shots


def test_baseline_allocation_bound():
    hams, ids, refs = tfim(3, [0.2, 0.5, 0.9])
    cfg = small_config(budget=1.5e7, mode="baseline", optimizer=OptimizerConfig(calibrate=False))
    rec = run(hams, cfg, ids, refs)
    per_iter = 2 * cfg.shots_per_term * 5
    for n in rec.nodes:
        assert cfg.budget / 3 <= n.shots_used <= cfg.budget / 3 + per_iter
    assert tree_critical_depth(rec) == 0
    assert [r.cluster for r in rec.results] == [0, 1, 2]


def test_baseline_converge_mode_respects_budget():
    hams, ids, refs = tfim(3, [0.2, 0.9])
    cfg = small_config(budget=1e7, mode="baseline", baseline_budget="converge")
    rec = run(hams, cfg, ids, refs)
    assert rec.total_shots - cfg.budget < 2 * 2 * cfg.shots_per_term * 5 * 6
    assert shot_accounting(rec) == rec.total_shots


# -- post-processing --------------------------------------------------------------------------------


def _cluster(cid, members, est, mixed_len):
    return ClusterState(cid, tuple(members), np.zeros(mixed_len), np.ones(mixed_len, bool), np.zeros(1), last_estimates=np.asarray(est, float))


def test_post_process_single_cluster():
    p = build_padded_set([Hamiltonian.from_terms(1, {"Z": 1.0}), Hamiltonian.from_terms(1, {"Z": -2.0})])
    res = post_process([_cluster(0, [0, 1], [0.5], 1)], p)
    assert [r.cluster for r in res] == [0, 0] and [r.energy for r in res] == [0.5, -1.0]


def test_post_process_ties():
    p = build_padded_set([Hamiltonian.from_terms(1, {"Z": 1.0}), Hamiltonian.from_terms(1, {"Z": 2.0})])
    c3 = _cluster(3, [0], [0.5], 1)
    c5 = _cluster(5, [1], [0.5], 1)
    res = post_process([c3, c5], p)
    assert [r.cluster for r in res] == [3, 5]
    c7 = _cluster(7, [0, 1], [0.5], 1)
    res = post_process([c7, c5], replace(p))
    assert [r.cluster for r in res] == [7, 5]


def test_post_process_missing_estimates():
    from vqatree.engine.controller import MissingEstimates

    p = build_padded_set([Hamiltonian.from_terms(1, {"Z": 1.0})])
    c = _cluster(0, [0], [0.5], 1)
    c.last_estimates = None
    with pytest.raises(MissingEstimates):
        post_process([c], p)


def test_post_process_matches_exact_reevaluation():
    tasks = [Hamiltonian.from_terms(3, {"ZZI": -1.0, "IZZ": -1.0, "XII": -h, "IXI": -h, "IIX": -h}) for h in (0.1, 0.5, 1.4)]
    p = build_padded_set(tasks)
    spec = HeaSpec(3, 1)
    table = pauli_table(p.superset)
    rng = np.random.default_rng(5)
    clusters = []
    for cid, members in ((1, [0, 1]), (2, [2])):
        state = build_hea(spec, rng.uniform(-1, 1, spec.n_params))
        clusters.append((cid, members, state, table.expectations(state.amplitudes)))
    finals = [_cluster(cid, m, est, p.n_terms) for cid, m, _, est in clusters]
    res = post_process(finals, p)
    for r in res:
        exact = [exact_energy(state, p.superset, p.coeff_vectors[r.task]) for _, _, state, _ in clusters]
        assert r.cluster == clusters[int(np.argmin(exact))][0]
        assert r.energy == pytest.approx(min(exact), abs=1e-12)


# -- metrics --------------------------------------------------------------------------------------------


def test_fidelity_examples():
    assert fidelity(-3.0, -3.0) == (0.0, 1.0)
    eps, F = fidelity(-7.6, -8.0)
    assert eps == pytest.approx(0.05) and F == pytest.approx(0.95)
    with pytest.raises(ZeroGroundEnergy):
        fidelity(1.0, 0.0)


def _result(F):
    return TaskResult(0, "t", 0.0, 0, fidelity=F)


def test_meets_threshold():
    assert meets_threshold([_result(1.0), _result(1.0)], 0.99)
    assert not meets_threshold([_result(0.99), _result(0.97)], 0.98)
    with pytest.raises(MissingReference):
        meets_threshold([], 0.9)
    with pytest.raises(MissingReference):
        meets_threshold([_result(None)], 0.9)


def test_overall_shots_formula():
    assert overall_shots(10, 15) == 1_228_800
    assert overall_shots(0, 15) == 0


def make_record(nodes, total=None, trace=((), ())):
    nodes = [ClusterNode(i, p, [0], 0, 0, "final", 0, 0, 0, 1) for i, p in nodes]
    return RunRecord(
        config={"optimizer": {"kind": "spsa"}}, mode="tree", task_ids=["t"], n_qubits=1, superset=["Z"],
        shots_per_term=4096, evals_per_iter=2, budget=1.0, nodes=nodes, results=[],
        total_shots=total or 0, rounds=len(trace[0]), trace_shots=list(trace[0]), trace_min_fidelity=list(trace[1]),
    )


def test_tree_depth():
    assert tree_critical_depth(make_record([(0, None)])) == 0
    assert tree_critical_depth(make_record([(0, None), (1, 0), (2, 0)])) == 1
    chain = [(0, None), (1, 0), (2, 0), (3, 1), (4, 1), (5, 3), (6, 3)]
    assert tree_critical_depth(make_record(chain)) == 3


def test_shot_accounting_detects_mismatch():
    rec = make_record([(0, None)])
    rec.nodes[0].iterations, rec.nodes[0].evaluations = 10, 20
    rec.nodes[0].n_measured_terms = 15
    rec.nodes[0].shots_used = rec.total_shots = 1_228_800
    assert shot_accounting(rec) == 1_228_800
    rec.total_shots += 1
    with pytest.raises(LedgerMismatch):
        shot_accounting(rec)


def test_savings_ratio():
    tree = make_record([(0, None)], trace=([1e6, 2e6], [0.99, 0.995]))
    base = make_record([(0, None)], trace=([1e6, 2e6, 3e6], [0.5, 0.99, 0.999]))
    assert savings_ratio(base, tree, 0.98) == 2.0
    assert savings_ratio(tree, tree, 0.98) == 1.0
    assert shots_to_threshold(base, 0.999) == 3e6
    with pytest.raises(ThresholdNotMet) as exc:
        savings_ratio(base, tree, 0.9999)
    assert exc.value.which == "baseline"


def test_record_round_trip(tmp_path, six_task_tree):
    rec, _ = six_task_tree
    rec.save(tmp_path / "run.json")
    back = RunRecord.load(tmp_path / "run.json")
    assert back.to_json() == rec.to_json()
    rec.write_histories_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "cluster,iteration,round,series,loss"
    expected = sum(len(h["iteration"]) * (1 + len(h["tasks"])) for h in rec.histories.values())
    assert len(lines) == 1 + expected


def test_history_stride():
    hams, ids, refs = tfim(3, [0.5])
    full = controller_run(hams, small_config(budget=5e6), ids, refs)
    thin = controller_run(hams, small_config(budget=5e6, history_stride=5), ids, refs)
    assert thin.histories["0"]["mixed"] == full.histories["0"]["mixed"][::5]
    assert [r.energy for r in thin.results] == [r.energy for r in full.results]


def test_children_copy_parent_theta(monkeypatch):
    import vqatree.engine.controller as ctl

    created = []
    real = ctl.new_cluster

    def spy(ctx, cid, members, theta, parent=None, created_at_iter=0):
        c = real(ctx, cid, members, theta, parent, created_at_iter)
        created.append((c, np.array(theta, copy=True)))
        return c

    monkeypatch.setattr(ctl, "new_cluster", spy)
    hams, ids, refs = tfim(3, [0.1, 1.5])
    rec = controller_run(hams, small_config(budget=1e7, mode="forced-split", forced_split_fraction=0.5), ids, refs)
    root = rec.nodes[0]
    kids = [c for c, th in created if c.parent == 0]
    assert len(kids) == 2
    for c, th in created[1:]:
        assert th.tobytes() == np.array(root.theta).tobytes()
        # the schedule counter continues from the parent's
        assert c.opt_state.t == root.iterations + c.iterations

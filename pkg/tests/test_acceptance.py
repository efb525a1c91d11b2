"""Acceptance suite: one test per shipped criterion, each printing a
PASS line with the measured values (run with ``pytest -s`` to see them).
"""

import json
import random
import shutil
import time
from pathlib import Path

import pytest

from procforge.metrics import breakpoints, ngram_overlap
from procforge.pipeline import load_config, run_all
from procforge.repair import (
    PrecedenceConstraint,
    Procedure,
    RepairWeights,
    SearchParams,
    Step,
    brute_force_repair,
    objective_cost,
    repair,
)
from procforge.rules import ExtractionConfig, INITIAL_STATE, STRONG, WEAK, extract_rules
from procforge.sampling import NoiseSpec, OracleRule, OracleSpec, SampleBatch, TransitionSample, simulate_oracle
from procforge.templates import bound_action_from_parts
from procforge.world_model import aggregate

from conftest import (
    DRAW,
    POUR,
    POWER_OFF,
    POWER_ON,
    V_CAP,
    V_FLASK,
    V_MATERIAL,
    V_POWER,
)

SEED = 0
DEFAULTS = ExtractionConfig(theta_hi=0.8, theta_lo=0.2, gamma=0.9, epsilon0=0.05)

DRAW_REQUIRED = {(V_CAP, "opened"), (V_MATERIAL, "none"), (V_POWER, "on")}
DRAW_FORBIDDEN = {(V_CAP, "closed"), (V_MATERIAL, "ddH2O"), (V_POWER, "off")}
POUR_REQUIRED = {(V_MATERIAL, "ddH2O"), (V_POWER, "on")}
POUR_FORBIDDEN = {(V_MATERIAL, "none"), (V_POWER, "off")}


def ok(criterion, detail):
    print(f"ACCEPTANCE {criterion}: PASS — {detail}")


def full_sampling(oracle):
    return OracleSpec(
        rules={k: OracleRule(r.preconditions, r.effects, valid_only=False) for k, r in oracle.rules.items()}
    )


def extracted_sets(rule_set, action):
    got = {"required": set(), "forbidden": set()}
    for p in rule_set.preconditions:
        if p.action == action:
            got[p.kind].add((p.variable, p.value))
    return got


def test_criterion_1_oracle_rule_reproduction(pipette_template, pipette_oracles, pipette_inventory):
    started = time.perf_counter()
    oracle = full_sampling(pipette_oracles["electronic_pipette"])
    batch = simulate_oracle(pipette_template, oracle, 250, NoiseSpec(seed=SEED))
    rule_set = extract_rules([aggregate(batch)], pipette_inventory, DEFAULTS)
    draw = extracted_sets(rule_set, DRAW)
    pour = extracted_sets(rule_set, POUR)
    elapsed = time.perf_counter() - started
    assert draw["required"] == DRAW_REQUIRED
    assert draw["forbidden"] == DRAW_FORBIDDEN
    assert pour["required"] == POUR_REQUIRED
    assert pour["forbidden"] == POUR_FORBIDDEN
    assert elapsed < 5.0
    ok(1, f"draw/pour required+forbidden sets exact at n=250, seed {SEED}, {elapsed:.2f}s")


@pytest.fixture(scope="module")
def weak_rule_set(pipette_template, bottle_template, pipette_oracles, pipette_inventory):
    pipette_wm = aggregate(
        simulate_oracle(pipette_template, pipette_oracles["electronic_pipette"], 250, NoiseSpec(seed=SEED))
    )
    bottle_wm = aggregate(
        simulate_oracle(bottle_template, pipette_oracles["ddh2o_bottle"], 250, NoiseSpec(seed=SEED + 1000))
    )
    return extract_rules([pipette_wm, bottle_wm], pipette_inventory, DEFAULTS)


def test_criterion_2_weak_rule_reproduction(weak_rule_set):
    for action, value in ((POWER_ON, "off"), (POWER_OFF, "on")):
        sets = extracted_sets(weak_rule_set, action)
        assert sets["required"] == {(V_POWER, value)}
        assert sets["forbidden"] == set()
        required = [p for p in weak_rule_set.preconditions if p.action == action and p.kind == "required"]
        assert required[0].strength == WEAK
    draw = extracted_sets(weak_rule_set, DRAW)
    pour = extracted_sets(weak_rule_set, POUR)
    assert draw["required"] == DRAW_REQUIRED and draw["forbidden"] == DRAW_FORBIDDEN
    assert pour["required"] == POUR_REQUIRED and pour["forbidden"] == POUR_FORBIDDEN
    for p in weak_rule_set.preconditions:
        if p.action in (DRAW, POUR) and p.kind == "required":
            assert p.strength == STRONG
    rules = weak_rule_set.causal_rules
    strong = [r for r in rules if r.strength == STRONG]
    weak = [r for r in rules if r.strength == WEAK]
    assert len(rules) == 8
    assert len(strong) == 6
    assert len(weak) == 2
    ok(2, "power actions weak with empty forbidden sets; 8 rules, 6 strong / 2 weak")


def test_criterion_3_producer_linkage(weak_rule_set):
    pour_rules = [r for r in weak_rule_set.causal_rules if r.action == POUR and r.variable == V_MATERIAL]
    assert len(pour_rules) == 1
    assert pour_rules[0].value == "ddH2O"
    assert DRAW in pour_rules[0].producers
    draw_rules = [r for r in weak_rule_set.causal_rules if r.action == DRAW and r.variable == V_MATERIAL]
    assert len(draw_rules) == 1
    assert draw_rules[0].value == "none"
    assert set(draw_rules[0].producers) == {INITIAL_STATE, POUR}
    ok(3, "draw-before-pour rule present; material=none produced by initial state and pour")


def test_criterion_4_aggregation_fidelity(pipette_template):
    draw_action = bound_action_from_parts(DRAW, {})
    pour_action = bound_action_from_parts(POUR, {})
    good = {V_MATERIAL: "none", V_POWER: "on", V_CAP: "opened", V_FLASK: "none"}
    after = {**good, V_MATERIAL: "ddH2O"}
    batch = SampleBatch(
        pipette_template,
        tuple(TransitionSample(good, draw_action, after, 1) for _ in range(27)),
        "file",
    )
    entry = next(iter(aggregate(batch).entries.values()))
    assert entry.total_count == 27
    assert entry.probability(entry.outcomes[0]) == 1.0
    assert entry.outcomes[0].avg_reward == 1.0

    state = {V_MATERIAL: "ddH2O", V_POWER: "on", V_CAP: "opened", V_FLASK: "ddH2O"}
    moved = {**state, V_MATERIAL: "none"}
    samples = [TransitionSample(state, pour_action, moved, 1) for _ in range(6)]
    samples.append(TransitionSample(state, pour_action, moved, 0))
    samples += [TransitionSample(state, pour_action, dict(state), 0) for _ in range(13)]
    mixed = next(iter(aggregate(SampleBatch(pipette_template, tuple(samples), "file")).entries.values()))
    probs = sorted(mixed.probability(o) for o in mixed.outcomes)
    assert probs == [7 / 20, 13 / 20]
    assert probs == [0.35, 0.65]
    ok(4, "27-sample entry exact; mixed 7/13 outcome probabilities are exactly 0.35/0.65")


def test_criterion_5_metrics_internal_consistency():
    assert round(14 / 29, 3) == 0.483
    assert round(23 / 29, 3) == 0.793
    rng = random.Random(SEED)
    trials = 0
    for _ in range(1000):
        n = rng.randint(2, 50)
        truth = list(range(n))
        cand = list(truth)
        rng.shuffle(cand)
        matched = round(ngram_overlap(cand, truth, 2) * (n - 1))
        assert breakpoints(cand, truth) + matched == n - 1
        trials += 1
    ok(5, f"{trials} random permutation pairs satisfy breakpoints = (n-1) - matched bigrams")


def _redirect_out(cfg, base: Path):
    for key, value in list(cfg.paths.items()):
        if "out" in value.parts:
            rel = Path(*value.parts[value.parts.index("out") + 1 :])
            cfg.paths[key] = base / rel


@pytest.fixture(scope="module")
def benchmark_run(tmp_path_factory, benchmark_dir):
    workdir = tmp_path_factory.mktemp("benchmark_run")
    for name in ("inventory.json", "oracles.json", "truth_procedure.json", "config.toml"):
        shutil.copy(benchmark_dir / name, workdir / name)
    cfg = load_config(workdir / "config.toml")
    _redirect_out(cfg, workdir / "out")
    started = time.perf_counter()
    run_all(cfg)
    elapsed = time.perf_counter() - started
    return cfg, elapsed


def test_criterion_6_repair_improvement(benchmark_run):
    cfg, elapsed = benchmark_run
    assert cfg.weights == RepairWeights(0.5, 1.0, 0.0, 2.0)
    metrics = json.loads(cfg.path("metrics").read_text())
    log = json.loads(cfg.path("perturbation_log").read_text())
    assert len(log["moves"]) == 6
    draft, repaired = metrics["draft"], metrics["repaired"]
    assert draft["n"] == 30
    assert repaired["raw_slack"] == 0.0
    assert repaired["kendall_tau"] > draft["kendall_tau"]
    assert repaired["breakpoints"] < draft["breakpoints"]
    assert repaired["lcs"] >= draft["lcs"]
    assert repaired["max_displacement"] < draft["max_displacement"]
    assert elapsed < 10.0
    ok(
        6,
        f"slack 0.0, kendall {draft['kendall_tau']:.3f}->{repaired['kendall_tau']:.3f}, "
        f"breakpoints {draft['breakpoints']}->{repaired['breakpoints']}, "
        f"lcs {draft['lcs']}->{repaired['lcs']}, "
        f"max disp {draft['max_displacement']}->{repaired['max_displacement']}, {elapsed:.1f}s",
    )


def test_criterion_7_optimizer_optimality():
    # Brute-force oracle first: hand-computed 4-step fixture.
    draft = Procedure(steps=tuple(Step(id=s) for s in "abcd"))
    w = RepairWeights(0.5, 1.0, 0.0, 2.0)
    constraints = [PrecedenceConstraint("d", "b")]
    hand = objective_cost(["c", "a", "b", "d"], draft, constraints, (), w)
    assert (hand.position, hand.edge, hand.raw, hand.total) == (4.0, 2.0, 1.0, 6.0)
    oracle_best = brute_force_repair(draft, constraints, weights=w)
    by_hand = min(
        (objective_cost(list(p), draft, constraints, (), w).total, p)
        for p in __import__("itertools").permutations("abcd")
    )
    assert oracle_best.cost.total == by_hand[0]

    rng = random.Random(SEED)
    exact = 0
    worst_excess = 0.0
    for trial in range(100):
        n = rng.randint(4, 8)
        ids = [f"s{i}" for i in range(n)]
        steps = tuple(Step(id=i) for i in ids)
        instance = Procedure(steps=steps)
        constraints = [
            PrecedenceConstraint(*rng.sample(ids, 2)) for _ in range(rng.randint(0, n // 2))
        ]
        weights = RepairWeights(
            lambda_pos=rng.choice([0.25, 0.5, 1.0]),
            lambda_edge=rng.choice([0.5, 1.0]),
            lambda_cluster=0.0,
            lambda_raw=rng.choice([1.0, 2.0, 4.0]),
        )
        ls = repair(
            instance, constraints, weights=weights, search=SearchParams(restarts=4), seed=trial
        )
        bf = brute_force_repair(instance, constraints, weights=weights)
        if abs(ls.cost.total - bf.cost.total) <= 1e-9:
            exact += 1
        elif bf.cost.total > 0:
            worst_excess = max(worst_excess, (ls.cost.total - bf.cost.total) / bf.cost.total)
        assert ls.cost.total <= bf.cost.total * 1.05 + 1e-9
    assert exact >= 99
    ok(7, f"local search matched brute force exactly in {exact}/100 instances (worst excess {worst_excess:.3%})")


def test_criterion_8_noise_robustness(pipette_template, pipette_oracles, pipette_inventory):
    oracle = full_sampling(pipette_oracles["electronic_pipette"])
    seeds = list(range(100))  # documented seed list
    intact = 0
    for seed in seeds:
        noise = NoiseSpec(reward_flip_rate=0.05, seed=seed)
        batch = simulate_oracle(pipette_template, oracle, 250, noise, actions=[DRAW])
        rule_set = extract_rules([aggregate(batch)], pipette_inventory, DEFAULTS)
        required = extracted_sets(rule_set, DRAW)["required"]
        if DRAW_REQUIRED <= required:
            intact += 1
    assert intact >= 95
    ok(8, f"draw required set intact in {intact}/100 noisy trials (flip rate 0.05, seeds 0..99)")


def test_criterion_9_pipeline_determinism(tmp_path, benchmark_dir):
    for name in ("inventory.json", "oracles.json", "truth_procedure.json", "config.toml"):
        shutil.copy(benchmark_dir / name, tmp_path / name)

    def run_into(subdir):
        cfg = load_config(tmp_path / "config.toml")
        _redirect_out(cfg, tmp_path / subdir)
        run_all(cfg)
        return tmp_path / subdir

    a = run_into("first")
    b = run_into("second")
    compared = []
    for name in ("rules.json", "repaired.json", "metrics.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
        compared.append(name)
    ok(9, f"byte-identical artifacts across two runs: {', '.join(compared)}")

"""Acceptance criteria, each at its stated tolerance and runtime bound.

Every test records one PASS/FAIL line; the lines are printed in the
terminal summary (see conftest.py) and when this file is run directly.
"""
from __future__ import annotations

import math
import random
import time

import numpy as np
import pytest

from conftest import grid_rows, make_scene
from oracles import bellman_ford, meters
from subtasknav import fixtures
from subtasknav.cli import main as cli_main
from subtasknav.episodes import ActionKind, Pose, check_episode, generate_suite_dataset
from subtasknav.llm import FixtureStore, LlmClient
from subtasknav.metrics import Reading, annotate_rewards, csr, evaluate, step_reward
from subtasknav.navigation import (
    AgentAction,
    ExecutorConfig,
    GoToOnlyNavigator,
    OracleNavigator,
    RandomPolicy,
    Status,
    execute_instruction,
)
from subtasknav.parser import (
    ActionLexicon,
    ParserKind,
    PromptStyle,
    canonicalize_action,
    default_fixtures_path,
    load_corpus,
    matches_expected,
    parse_instruction,
)
from subtasknav.subtask import SubTask

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(RESULTS[n])


@pytest.fixture(scope="module")
def suite():
    return fixtures.fixture_suite()


# 1 -------------------------------------------------------------------------

CSR_ROWS = [(35.0, 10.0, 28.6, 0.1), (38.9, 15.0, 38.6, 0.1), (19.3, 14.2, 73.6, 0.1), (7.1, 9.1, 77.8, 0.3), (0.0, 6.0, 0.0, 0.1)]


def test_1_csr_regression():
    t0 = time.perf_counter()
    got = [csr(a, b) for a, b, _, _ in CSR_ROWS]
    elapsed = time.perf_counter() - t0
    ok = all(abs(g - want) <= tol for g, (_, _, want, tol) in zip(got, CSR_ROWS)) and elapsed < 1.0
    record(1, ok, "CSR " + ", ".join(f"{g:.2f}" for g in got) + f" ({elapsed * 1e3:.2f} ms)")
    assert ok


# 2 -------------------------------------------------------------------------


def test_2_dataset_invariants(suite):
    by_id = {s.id: s for s in suite}
    t0 = time.perf_counter()
    rates = {}
    for kind in ActionKind:
        eps = generate_suite_dataset(suite, kind, 10_000, seed=2024)
        passed = sum(not check_episode(by_id[e.scene_id], e) for e in eps)
        rates[kind.value] = (passed, len(eps))
    elapsed = time.perf_counter() - t0
    ok = all(p == n == 10_000 for p, n in rates.values()) and elapsed < 60
    record(2, ok, ", ".join(f"{k} {p}/{n}" for k, (p, n) in rates.items()) + f" in {elapsed:.1f} s")
    assert ok


# 3 -------------------------------------------------------------------------


def test_3_reward(suite):
    rng = random.Random(3)
    worst = 0.0
    for i in range(1000):
        scene = suite[i % len(suite)]
        cells = scene.grid.free_cells()
        start = Pose(scene.grid.to_world(rng.choice(cells)), rng.choice(range(12)) * math.pi / 6)
        goal = Pose(scene.grid.to_world(rng.choice(cells)), rng.uniform(0, 2 * math.pi))
        traj = execute_instruction(scene, start, [SubTask(ActionKind.GO_TO, scene.objects[0].label)], RandomPolicy(i),
                                   ExecutorConfig(40, 40))
        comps = annotate_rewards(scene, traj, goal)
        if not comps:
            continue
        dtg0 = scene.geodesic_distance(start.position, goal.position)
        worst = max(worst, abs(sum(c.neg_delta_dtg for c in comps) - (dtg0 - traj.steps[-1].dtg)))
    slack = step_reward(Reading(5.0, 1.0), Reading(5.0, 1.0), False).total
    approach = step_reward(Reading(2.0, 0.5), Reading(1.75, 0.5), False).total
    term = step_reward(Reading(0.8, math.radians(10)), Reading(0.8, math.radians(10)), True)
    examples = (
        math.isclose(slack, -0.01, abs_tol=1e-12)
        and math.isclose(approach, 0.24, abs_tol=1e-12)
        and term.r_success + term.r_angle_success == 10.0
    )
    ok = worst <= 1e-9 and examples
    record(3, ok, f"telescoping max error {worst:.2e} over 1000 trajectories; examples {slack:.2f}, {approach:.2f}, "
                  f"{term.r_success + term.r_angle_success:.0f}")
    assert ok


# 4 -------------------------------------------------------------------------


def test_4_geodesic_oracle():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    pairs = mismatches = 0
    for _ in range(50):
        h, w = rng.integers(4, 21, size=2)
        free = rng.random((h, w)) > rng.uniform(0.1, 0.35)
        scene = make_scene(grid_rows(free))
        axis, diag = bellman_ford(free)
        cells = scene.grid.free_cells()
        pts = [scene.grid.to_world(c) for c in cells]
        idx = [scene.grid.index(c) for c in cells]
        for a, ia in zip(pts, idx):
            for b, ib in zip(pts, idx):
                pairs += 1
                mismatches += scene.geodesic_distance(a, b) != meters(axis[ia, ib], diag[ia, ib], 0.25)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 30
    record(4, ok, f"{pairs} cell pairs on 50 grids, {mismatches} mismatches, {elapsed:.1f} s")
    assert ok


# 5 -------------------------------------------------------------------------


def test_5_oracle_competence(suite):
    by_id = {s.id: s for s in suite}
    config = ExecutorConfig(100, 500, 1.0)
    rates = {}
    for kind in ActionKind:
        eps = generate_suite_dataset(suite, kind, 200, seed=5)
        rates[kind.value] = evaluate(eps, by_id, OracleNavigator(), config).sr
    ok = all(sr >= 95.0 for sr in rates.values())
    record(5, ok, "oracle SR " + ", ".join(f"{k} {v:.1f}%" for k, v in rates.items()) + " (need >= 95% each)")
    assert ok


# 6 -------------------------------------------------------------------------


def test_6_exit_trap_direction():
    scene = fixtures.generate_fixture("exit-trap")
    t0 = time.perf_counter()
    eps = generate_suite_dataset([scene], ActionKind.EXIT, 200, seed=6)
    config = ExecutorConfig(100, 500, 1.0)
    sr_exit = evaluate(eps, {scene.id: scene}, OracleNavigator(), config).sr
    sr_goto = evaluate(eps, {scene.id: scene}, GoToOnlyNavigator(), config).sr
    elapsed = time.perf_counter() - t0
    ok = sr_exit - sr_goto >= 20.0 and elapsed < 120
    record(6, ok, f"Exit oracle {sr_exit:.1f}% vs GoTo-only {sr_goto:.1f}% (gap {sr_exit - sr_goto:.1f} pp), {elapsed:.1f} s")
    assert ok


# 7 -------------------------------------------------------------------------


class _NeverStop:
    def __init__(self):
        self.max_seen = -1

    def step(self, obs, state):
        self.max_seen = max(self.max_seen, obs.steps_in_subtask)
        return AgentAction.TURN_RIGHT


def test_7_executor_contract(suite):
    scene = suite[0]
    start = Pose(scene.grid.to_world(scene.grid.free_cells()[0]), 0.0)
    task = SubTask(ActionKind.GO_TO, scene.objects[0].label)
    one = _NeverStop()
    single = execute_instruction(scene, start, [task], one, ExecutorConfig(100, 500))
    six = _NeverStop()
    many = execute_instruction(scene, start, [task] * 6, six, ExecutorConfig(100, 500))
    per_task = [sum(s.subtask_index == k for s in many.steps) for k in range(6)]
    ok = (
        len(single.steps) == 100
        and single.status is Status.ALL_SUBTASKS_DONE
        and len(many.steps) == 500
        and many.status is Status.EPISODE_BUDGET_EXHAUSTED
        and per_task[:5] == [100] * 5
        and max(one.max_seen, six.max_seen) == 99
    )
    record(7, ok, f"single sub-task {len(single.steps)} steps; six sub-tasks {len(many.steps)} steps, {many.status.value}")
    assert ok


# 8 -------------------------------------------------------------------------


def test_8_parser_golden_suite():
    corpus = load_corpus()
    heur = sum(matches_expected(parse_instruction(e.instruction), e) for e in corpus)
    lexicon = ActionLexicon.default()
    lex_ok = sum(canonicalize_action(p) is k for p, k in lexicon.items())
    client = LlmClient(fixtures=FixtureStore.load(default_fixtures_path()))
    llm = {
        style.value: sum(
            matches_expected(parse_instruction(e.instruction, ParserKind.LLM, style, client), e) for e in corpus
        )
        for style in PromptStyle
    }
    n = len(corpus)
    ok = n == 20 and heur / n >= 0.8 and lex_ok == len(lexicon) and all(v == n for v in llm.values())
    record(8, ok, f"heuristic {heur}/{n} = {100 * heur / n:.0f}%, lexicon {lex_ok}/{len(lexicon)}, LLM "
                  + ", ".join(f"{k} {v}/{n}" for k, v in llm.items()))
    assert ok


# 9 -------------------------------------------------------------------------


def test_9_determinism(tmp_path, capsys):
    outputs = []
    for k in range(2):
        data, report = tmp_path / f"d{k}.jsonl", tmp_path / f"r{k}.json"
        codes = [
            cli_main(["dataset", "generate", "--scene", "four-room-ring", "--action", "gothrough", "--count", "40", "--seed", "9", "--out", str(data)]),
            cli_main(["eval", "--scene", "four-room-ring", "--dataset", str(data), "--policy", "random", "--seed", "9", "--out", str(report)]),
        ]
        assert codes == [0, 0]
        outputs.append((data.read_bytes(), report.read_bytes()))
    capsys.readouterr()
    same_data = outputs[0][0] == outputs[1][0]
    same_eval = outputs[0][1] == outputs[1][1]
    ok = same_data and same_eval
    record(9, ok, f"dataset generate identical: {same_data}; eval identical: {same_eval}")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))

import io
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_scene
from oracles import reference_reward
from subtasknav.episodes import ActionKind, Episode, Pose, generate_suite_dataset
from subtasknav.metrics import (
    EmptyResultSet,
    EpisodeResult,
    EvalResult,
    Reading,
    annotate_rewards,
    csr,
    episode_success,
    episode_target,
    evaluate,
    report_sr,
    spl,
    spl_term,
    step_reward,
    success_rate,
    write_report,
)
from subtasknav.navigation import AgentAction, OracleNavigator, RandomPolicy, Status, StepRecord, Trajectory
from subtasknav.scene import WorldPoint

LINE = make_scene(["." * 24] * 3)


def at(x, y=0.375, heading=0.0):
    return Pose(WorldPoint(x, y), heading)


def result(success, shortest, traveled):
    return EpisodeResult(0, "s", "GoTo", success, shortest, traveled, spl_term(success, shortest, traveled), 0.0, 1, "AllSubtasksDone")


# -- reward ------------------------------------------------------------------


def test_stationary_step_far_from_goal():
    assert step_reward(Reading(5.0, 1.0), Reading(5.0, 1.0), False).total == pytest.approx(-0.01)


def test_approach_step():
    rc = step_reward(Reading(2.0, 0.3), Reading(1.75, 0.3), False)
    assert rc.neg_delta_dtg == pytest.approx(0.25)
    assert rc.total == pytest.approx(0.24)


def test_terminal_bonuses():
    rc = step_reward(Reading(0.8, math.radians(10)), Reading(0.8, math.radians(10)), True)
    assert rc.r_success + rc.r_angle_success == 10
    assert rc.total == pytest.approx(10 - 0.01)


def test_angle_change_only_counts_inside_the_gate():
    assert step_reward(Reading(3.0, 1.0), Reading(3.0, 0.5), False).neg_delta_atg == 0
    assert step_reward(Reading(0.9, 1.0), Reading(0.9, 0.5), False).neg_delta_atg == pytest.approx(0.5)


_dist = st.floats(0, 20, allow_nan=False)
_ang = st.floats(0, math.pi, allow_nan=False)


@given(_dist, _ang, _dist, _ang, st.booleans())
def test_reward_matches_reference(d0, a0, d1, a1, stop):
    assert step_reward(Reading(d0, a0), Reading(d1, a1), stop).total == pytest.approx(reference_reward(d0, a0, d1, a1, stop), abs=1e-9)


@given(st.lists(_dist, min_size=2, max_size=80))
def test_distance_terms_telescope(dtgs):
    total = sum(step_reward(Reading(a, 0.0), Reading(b, 0.0), False).neg_delta_dtg for a, b in zip(dtgs, dtgs[1:]))
    assert total == pytest.approx(dtgs[0] - dtgs[-1], abs=1e-9)


def test_annotate_rewards_fills_every_step():
    start = at(0.125)
    steps, pose = [], start
    for _ in range(4):
        nxt = Pose(WorldPoint(pose.position.x + 0.25, pose.position.y), 0.0)
        steps.append(StepRecord(0, AgentAction.FORWARD, pose, nxt))
        pose = nxt
    steps.append(StepRecord(0, AgentAction.STOP, pose, pose))
    traj = Trajectory("t", start, (), steps)
    comps = annotate_rewards(LINE, traj, at(1.625))
    assert [s.dtg for s in traj.steps] == pytest.approx([1.25, 1.0, 0.75, 0.5, 0.5])
    assert comps[-1].r_success == 5.0
    assert sum(c.neg_delta_dtg for c in comps) == pytest.approx(1.5 - 0.5)


# -- success -----------------------------------------------------------------


def _traj(end, last=AgentAction.STOP, status=Status.ALL_SUBTASKS_DONE):
    start = at(0.125)
    return Trajectory("t", start, (), [StepRecord(0, last, start, Pose(end, 0.0))], status)


def test_success_rules():
    goal = at(3.125)
    assert episode_success(LINE, _traj(WorldPoint(0.125 + 0.25, 0.375)), goal, 3.0)  # 2.75 m
    assert episode_success(LINE, _traj(WorldPoint(0.125, 0.375)), goal, 3.0)  # exactly at the radius
    assert not episode_success(LINE, _traj(WorldPoint(0.125, 0.375)), goal, 2.99)
    never = _traj(WorldPoint(2.625, 0.375), AgentAction.FORWARD, Status.EPISODE_BUDGET_EXHAUSTED)
    assert not episode_success(LINE, never, goal, 3.0)
    assert episode_success(LINE, never, goal, 3.0, lenient=True)
    errored = _traj(WorldPoint(3.125, 0.375), AgentAction.STOP, Status.ERROR)
    assert not episode_success(LINE, errored, goal, 3.0, lenient=True)


# -- aggregates --------------------------------------------------------------


def test_spl_terms():
    assert spl_term(True, 4.0, 4.0) == 1.0
    assert spl_term(False, 4.0, 4.0) == 0.0
    assert spl_term(True, 4.0, 8.0) == 0.5
    assert spl_term(True, 0.0, 1.0) == 1.0


def test_empty_aggregates():
    with pytest.raises(EmptyResultSet):
        success_rate([])
    with pytest.raises(EmptyResultSet):
        spl([])


@given(st.lists(st.tuples(st.booleans(), st.floats(0, 50), st.floats(0, 50)), min_size=1, max_size=30))
def test_spl_never_exceeds_sr(rows):
    results = [result(*r) for r in rows]
    assert 0 <= spl(results) <= success_rate(results) + 1e-9


@pytest.mark.parametrize(
    "a, b, expected, tol",
    [(35.0, 10.0, 28.6, 0.1), (38.9, 15.0, 38.6, 0.1), (19.3, 14.2, 73.6, 0.1), (7.1, 9.1, 77.8, 0.3), (0.0, 6.0, 0.0, 0.1)],
)
def test_csr_examples(a, b, expected, tol):
    assert abs(csr(a, b) - expected) <= tol


@given(st.floats(0, 100), st.floats(0, 100))
def test_csr_is_symmetric_and_bounded(a, b):
    assert csr(a, b) == csr(b, a)
    assert 0 <= csr(a, b) <= 100
    assert csr(a, a) == 100


def test_csr_rejects_negative_rates():
    with pytest.raises(ValueError):
        csr(-1, 3)


# -- evaluation --------------------------------------------------------------


def test_episode_target_is_the_route_end(two_room):
    (ep,) = generate_suite_dataset([two_room], ActionKind.GO_PAST, 1, 0)
    target = episode_target(ep)
    assert target.position == ep.path_end
    (goto,) = generate_suite_dataset([two_room], ActionKind.GO_TO, 1, 0)
    assert episode_target(goto) == goto.goal


def test_evaluate_orders_and_isolates_failures(suite):
    eps = generate_suite_dataset(list(suite.values()), ActionKind.GO_TO, 12, 3)
    ghost = Episode(99, "nowhere", ActionKind.GO_TO, "lamp", eps[0].start, eps[0].path, eps[0].goal, 0)
    bad = Episode(98, eps[0].scene_id, ActionKind.GO_TO, "piano", eps[0].start, eps[0].path, eps[0].goal, 0)
    res = evaluate(list(reversed(eps)) + [ghost, bad], suite, OracleNavigator())
    keys = [(r.scene_id, r.id) for r in res.episodes]
    assert keys == sorted(keys)
    by_id = {(r.scene_id, r.id): r for r in res.episodes}
    assert by_id[("nowhere", 99)].status == "Error" and not by_id[("nowhere", 99)].success
    assert by_id[(eps[0].scene_id, 98)].status == "Error"
    report = res.to_report({"pair": (35.0, 10.0)})
    json.dumps(report, allow_nan=False)
    assert report["aggregate"]["CSR"]["pair"] == pytest.approx(28.571, abs=1e-3)
    assert set(report["by_action"]) == {"GoTo"}


def test_evaluate_is_deterministic_with_a_factory(suite):
    eps = generate_suite_dataset(list(suite.values()), ActionKind.EXIT, 8, 1)
    reports = []
    for _ in range(2):
        buf = io.StringIO()
        write_report(buf, evaluate(eps, suite, lambda ep: RandomPolicy(ep.seed)).to_report())
        reports.append(buf.getvalue())
    assert reports[0] == reports[1]


def test_report_sr_accepts_both_shapes():
    assert report_sr({"SR": 12.5}) == 12.5
    assert report_sr(EvalResult([result(True, 1, 1), result(False, 1, 1)]).to_report()) == 50.0

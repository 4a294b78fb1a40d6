"""From a sentence to a trajectory.

A route instruction is split into (action, landmark) sub-tasks, first by
the rule-based chunker and then by the LLM path answered from the shipped
offline fixtures. The sub-tasks are executed one after another in the
two-room scene and the route is drawn with one colour per sub-task.

    python3 demos/parse_and_run.py [--out demo_out]
"""
import argparse
from pathlib import Path

from subtasknav import fixtures
from subtasknav.episodes import Pose
from subtasknav.llm import FixtureStore, LlmClient
from subtasknav.navigation import ExecutorConfig, OracleNavigator, execute_instruction
from subtasknav.parser import ParserKind, default_fixtures_path, parse_instruction
from subtasknav.plot import render_svg
from subtasknav.scene import WorldPoint

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="demo_out")
args = ap.parse_args()
out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)

instruction = "Exit the bedroom. Then go past the sofa."
client = LlmClient(fixtures=FixtureStore.load(default_fixtures_path()))
for kind in ParserKind:
    parsed = parse_instruction(instruction, kind, llm=client)
    print(f"{kind.value:9s} -> {' '.join(parsed.lines())}")

scene = fixtures.generate_fixture("two-room")
start = Pose(WorldPoint(1.125, 2.125), 0.0)
traj = execute_instruction(scene, start, parsed.subtasks, OracleNavigator(), ExecutorConfig())
for k, task in enumerate(parsed.subtasks):
    n = sum(s.subtask_index == k for s in traj.steps)
    print(f"  sub-task {k} {task}: {n} steps")
where = scene.region_containing(traj.final_pose.position)
print(f"  finished in region {where!r}, status {traj.status.value}")

path = out / "parse_and_run.svg"
path.write_text(render_svg(scene, traj))
print(f"  wrote {path}")

"""Why knowing the action matters: leaving a room whose door faces away.

In the exit-trap scene the only door of the bedroom opens onto a hallway
that leads south, away from the room. A navigator that only understands
"go to <landmark>" walks towards the bedroom when told to exit it and
never leaves. The action-aware oracle walks out through the door.

    python3 demos/exit_trap.py [--out demo_out]
"""
import argparse
from pathlib import Path

from subtasknav import fixtures
from subtasknav.episodes import ActionKind, generate_dataset
from subtasknav.metrics import evaluate, run_episode
from subtasknav.navigation import ExecutorConfig, GoToOnlyNavigator, OracleNavigator
from subtasknav.plot import render_svg

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="demo_out")
ap.add_argument("--episodes", type=int, default=200)
args = ap.parse_args()
out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)

scene = fixtures.generate_fixture("exit-trap")
episodes = generate_dataset(scene, ActionKind.EXIT, args.episodes, seed=6)
config = ExecutorConfig(max_subtask_steps=100, max_episode_steps=500, success_radius=1.0)

print(f"{len(episodes)} Exit episodes on {scene.id}")
for name, policy in (("action-aware", OracleNavigator()), ("landmark-only", GoToOnlyNavigator())):
    res = evaluate(episodes, {scene.id: scene}, policy, config)
    print(f"  {name:14s} SR {res.sr:5.1f}%   SPL {res.spl:5.1f}%")

# draw the first episode under both policies
ep = episodes[0]
for name, policy in (("aware", OracleNavigator()), ("goto_only", GoToOnlyNavigator())):
    traj = run_episode(scene, ep, policy, config)
    path = out / f"exit_trap_{name}.svg"
    path.write_text(render_svg(scene, traj))
    print(f"  wrote {path} ({len(traj.steps)} steps)")

"""Command-line entry point.

Exit codes: 0 ok, 1 any other error, 2 episode sampling failed, 3 the LLM
client failed, 4 a trace could not be read or plotted.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from pathlib import Path

from . import fixtures
from .episodes import (
    ActionKind,
    Pose,
    ResourceUnavailable,
    RetriesExhausted,
    SamplerConfig,
    check_episode,
    episode_seed,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .llm import FixtureStore, LlmClient, LlmError
from .metrics import (
    RewardConfig,
    annotate_rewards,
    csr,
    episode_success,
    episode_target,
    evaluate,
    report_sr,
    run_episode,
    write_report,
)
from .navigation import (
    ExecutorConfig,
    GoToOnlyNavigator,
    GreedyBaseline,
    OracleNavigator,
    RandomPolicy,
    TraceError,
    execute_instruction,
    read_trace,
    write_trace,
)
from .parser import (
    ActionLexicon,
    ParserKind,
    PromptStyle,
    default_fixtures_path,
    load_corpus,
    matches_expected,
    parse_instruction,
    parse_llm_output,
    to_subtask,
)
from .plot import render_svg
from .scene import SceneError, WorldPoint, read_scene

EXIT_OK, EXIT_OTHER, EXIT_SAMPLING, EXIT_LLM, EXIT_TRACE = 0, 1, 2, 3, 4

POLICIES = ("oracle", "goto-only", "random", "greedy", "greedy-backtrack")
GLOBAL_DESTS = frozenset({"seed", "config", "fixture_seed"})
GREEDY_BACKTRACK_AFTER = 30  # steps without seeing the landmark before jumping back


class ConfigError(ValueError):
    """Bad --config file or conflicting flags."""


# -- helpers -----------------------------------------------------------------


def resolve_scene(spec: str, fixture_seed: int = 0):
    """A scene file path, or the name of a procedural fixture."""
    if os.path.exists(spec):
        return read_scene(spec)
    if spec in fixtures.GENERATORS:
        return fixtures.generate_fixture(spec, seed=fixture_seed)
    raise ConfigError(f"--scene {spec!r} is neither a file nor one of: {', '.join(fixtures.GENERATORS)}")


@contextlib.contextmanager
def open_out(path: str | None):
    if path in (None, "-"):
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def parse_pose(text: str) -> Pose:
    parts = [float(v) for v in text.split(",")]
    if len(parts) not in (2, 3):
        raise ConfigError(f"expected x,y or x,y,heading; got {text!r}")
    return Pose(WorldPoint(parts[0], parts[1]), parts[2] if len(parts) == 3 else 0.0)


def read_config(path: str) -> dict:
    """key=value lines; '#' starts a comment. Keys use flag names with '_' or '-'."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def make_policy(name: str, seed: int, threshold: float = 0.8):
    if name == "oracle":
        return OracleNavigator()
    if name == "goto-only":
        return GoToOnlyNavigator()
    if name == "random":
        return RandomPolicy(seed)
    if name == "greedy":
        return GreedyBaseline(threshold, seed)
    if name == "greedy-backtrack":
        return GreedyBaseline(threshold, seed, backtrack_after=GREEDY_BACKTRACK_AFTER)
    raise ConfigError(f"unknown policy {name!r}")


def executor_config(args) -> ExecutorConfig:
    return ExecutorConfig(args.max_subtask_steps, args.max_episode_steps, args.success_radius)


def llm_client(args) -> LlmClient:
    if args.llm_fixtures:
        path = default_fixtures_path() if args.llm_fixtures == "builtin" else args.llm_fixtures
        return LlmClient(fixtures=FixtureStore.load(path))
    return LlmClient.from_env()


def _fmt(x: float) -> str:
    return "n/a" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.1f}"


# -- commands ----------------------------------------------------------------


def cmd_scene_validate(args) -> int:
    scene = read_scene(args.path)
    n_free = int(scene.grid.free.sum())
    print(f"scene {scene.id}: {scene.grid.width}x{scene.grid.height} cells, {n_free} free, "
          f"{len(scene.regions)} regions, {len(scene.objects)} objects")
    for r in scene.regions:
        print(f"  region {r.id} ({r.label}): {len(r.entrances)} entrance(s)")
    return EXIT_OK


def cmd_fixture_generate(args) -> int:
    scene = fixtures.generate_fixture(args.name, args.size, args.seed)
    with open_out(args.out) as fh:
        fh.write(scene.dumps() + "\n")
    return EXIT_OK


def cmd_dataset_generate(args) -> int:
    scene = resolve_scene(args.scene, args.fixture_seed)
    kind = ActionKind.parse(args.action)
    cfg = SamplerConfig(max_attempts=args.max_attempts)
    try:
        episodes = generate_dataset(scene, kind, args.count, args.seed, cfg)
    except (ResourceUnavailable, RetriesExhausted) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SAMPLING
    with open_out(args.out) as fh:
        write_dataset(fh, episodes, scene.id, kind, args.seed)
    bad = sum(1 for ep in episodes if check_episode(scene, ep, cfg))
    print(f"{kind.value}: {len(episodes)} episodes, {len(episodes) - bad} pass invariants, {bad} fail",
          file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK if bad == 0 else EXIT_SAMPLING


def cmd_parse(args) -> int:
    lexicon = ActionLexicon.load(args.lexicon) if args.lexicon else None
    parser = ParserKind.LLM if args.parser == "llm" else ParserKind.HEURISTIC
    style = PromptStyle.parse(args.style)
    client = llm_client(args) if parser is ParserKind.LLM else None
    if args.corpus is not None:
        corpus = load_corpus(args.corpus or None)
        hits = 0
        with open_out(args.out) as fh:
            for entry in corpus:
                parsed = parse_instruction(entry.instruction, parser, style, client, lexicon=lexicon)
                ok = matches_expected(parsed, entry)
                hits += ok
                fh.write(json.dumps({"id": entry.id, "match": ok, **parsed.to_json()}) + "\n")
        print(f"exact-match: {hits}/{len(corpus)} = {100.0 * hits / len(corpus):.1f}%")
        return EXIT_OK
    parsed = parse_instruction(args.instruction, parser, style, client, lexicon=lexicon)
    with open_out(args.out) as fh:
        if args.out in (None, "-"):
            fh.write("".join(line + "\n" for line in parsed.lines()))
        else:
            fh.write(json.dumps(parsed.to_json()) + "\n")
    if args.out not in (None, "-"):
        print("\n".join(parsed.lines()))
    return EXIT_OK


def cmd_run(args) -> int:
    sources = [x is not None for x in (args.dataset, args.instruction, args.subtasks)]
    if sum(sources) != 1:
        raise ConfigError("run needs exactly one of --dataset, --instruction, --subtasks")
    scene = resolve_scene(args.scene, args.fixture_seed)
    config = executor_config(args)
    policy = make_policy(args.policy, args.seed, args.threshold)
    if args.dataset is not None:
        with open(args.dataset, encoding="utf-8") as fh:
            _, episodes = read_dataset(fh)
        matches = [ep for ep in episodes if ep.id == args.episode_id]
        if not matches:
            raise ConfigError(f"episode {args.episode_id} not in {args.dataset}")
        ep = matches[0]
        traj = run_episode(scene, ep, policy, config)
        goal = episode_target(ep)
    else:
        if args.start is None:
            raise ConfigError("--start x,y[,heading] is required with --instruction/--subtasks")
        if args.subtasks is not None:
            subtasks = [to_subtask(r) for r in parse_llm_output(args.subtasks.replace(";", "\n"))]
        else:
            parser = ParserKind.LLM if args.parser == "llm" else ParserKind.HEURISTIC
            client = llm_client(args) if parser is ParserKind.LLM else None
            subtasks = list(parse_instruction(args.instruction, parser, PromptStyle.parse(args.style), client).subtasks)
        goal = parse_pose(args.goal) if args.goal else None
        traj = execute_instruction(scene, parse_pose(args.start), subtasks, policy, config, goal=goal, trajectory_id="run")
        if goal is not None:
            annotate_rewards(scene, traj, goal, RewardConfig())
    with open_out(args.out) as fh:
        write_trace(fh, traj)
    line = f"{len(traj.steps)} steps, status {traj.status.value}"
    if goal is not None:
        ok = episode_success(scene, traj, goal, config.success_radius, args.lenient_success)
        line += f", success {str(ok).lower()}"
    print(line, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.report_a or args.report_b:
        if not (args.report_a and args.report_b):
            raise ConfigError("--report-a and --report-b go together")
        with open(args.report_a, encoding="utf-8") as fa, open(args.report_b, encoding="utf-8") as fb:
            a, b = report_sr(json.load(fa)), report_sr(json.load(fb))
        print(f"SR_a {a:.1f}%  SR_b {b:.1f}%  CSR {csr(a, b):.1f}%")
        return EXIT_OK
    if not args.dataset:
        raise ConfigError("eval needs --dataset (one or more) or --report-a/--report-b")
    scenes = {}
    for spec in args.scene or []:
        s = resolve_scene(spec, args.fixture_seed)
        scenes[s.id] = s
    episodes = []
    for path in args.dataset:
        with open(path, encoding="utf-8") as fh:
            _, eps = read_dataset(fh)
        episodes.extend(eps)
    config = executor_config(args)
    result = evaluate(
        episodes,
        scenes,
        lambda ep: make_policy(args.policy, episode_seed(args.seed, ep.id), args.threshold),
        config,
        lenient=args.lenient_success,
    )
    with open_out(args.out) as fh:
        write_report(fh, result.to_report())
    summary = f"episodes {len(result.episodes)}  SR {_fmt(result.sr)}%  SPL {_fmt(result.spl)}%"
    print(summary, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    errors = sum(1 for r in result.episodes if r.error)
    if errors:
        print(f"{errors} episode(s) ended with an error", file=sys.stderr)
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        with open(args.trace, encoding="utf-8") as fh:
            traj = read_trace(fh)
    except OSError as exc:
        raise TraceError(str(exc)) from exc
    if args.scene:
        scene = resolve_scene(args.scene, args.fixture_seed)
    else:
        name, _, seed = traj.scene_id.rpartition("-")
        if name not in fixtures.GENERATORS or not seed.isdigit():
            raise ConfigError(f"trace scene {traj.scene_id!r} is not a fixture; pass --scene")
        scene = fixtures.generate_fixture(name, seed=int(seed))
    if traj.scene_id and scene.id != traj.scene_id:
        raise TraceError(f"trace was recorded on scene {traj.scene_id!r}, not {scene.id!r}")
    with open_out(args.out) as fh:
        fh.write(render_svg(scene, traj))
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def _add_run_flags(p) -> None:
    p.add_argument("--policy", choices=POLICIES, default="oracle")
    p.add_argument("--max-subtask-steps", type=int, default=100, help="m_s; 50 matches the shorter budget")
    p.add_argument("--max-episode-steps", type=int, default=500, help="m_e")
    p.add_argument("--success-radius", type=float, default=3.0)
    p.add_argument("--lenient-success", action="store_true", help="count episodes that end in range without stopping")
    p.add_argument("--threshold", type=float, default=0.8, help="stop score for the greedy baselines")


def _add_parser_flags(p) -> None:
    p.add_argument("--parser", choices=("heuristic", "llm"), default="heuristic")
    p.add_argument("--style", default="Both", help="Definition, Examples or Both")
    p.add_argument("--llm-fixtures", help="fixture file for offline LLM use ('builtin' for the shipped one)")


def build_parser() -> argparse.ArgumentParser:
    def global_flags(default):
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=default(0))
        g.add_argument("--config", default=default(None), help="file of key=value lines overriding defaults")
        g.add_argument("--fixture-seed", type=int, default=default(0), help="seed for fixture scenes named by --scene")
        return g

    # accepted before or after the sub-command; the sub-command copy must not
    # clobber a value given before it, hence SUPPRESS there
    ap = argparse.ArgumentParser(prog="subtasknav", description=__doc__.splitlines()[0], parents=[global_flags(lambda v: v)])
    common = global_flags(lambda v: argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)

    scene = sub.add_parser("scene", help="scene documents").add_subparsers(dest="action", required=True)
    p = scene.add_parser("validate", parents=[common])
    p.add_argument("path")
    p.set_defaults(func=cmd_scene_validate)

    fx = sub.add_parser("fixture", help="procedural scenes").add_subparsers(dest="action", required=True)
    p = fx.add_parser("generate", parents=[common])
    p.add_argument("--name", choices=fixtures.GENERATORS, required=True)
    p.add_argument("--size", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fixture_generate)

    ds = sub.add_parser("dataset", help="episode datasets").add_subparsers(dest="action", required=True)
    p = ds.add_parser("generate", parents=[common])
    p.add_argument("--scene", required=True, help="scene file or fixture name")
    p.add_argument("--action", required=True, help="goto, gopast, gointo, gothrough or exit")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--max-attempts", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dataset_generate)

    p = sub.add_parser("parse", parents=[common], help="instruction -> sub-tasks")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instruction")
    src.add_argument("--corpus", nargs="?", const="", help="golden corpus file (shipped corpus if no path)")
    _add_parser_flags(p)
    p.add_argument("--lexicon", help="phrase<TAB>kind table replacing the shipped lexicon")
    p.add_argument("--out")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("run", parents=[common], help="execute one instruction or episode")
    p.add_argument("--scene", required=True)
    p.add_argument("--dataset")
    p.add_argument("--episode-id", type=int, default=0)
    p.add_argument("--instruction")
    p.add_argument("--subtasks", help="sub-tasks in the '(action, landmark)' grammar, ';'-separated")
    p.add_argument("--start", help="x,y[,heading]")
    p.add_argument("--goal", help="x,y[,heading]")
    _add_parser_flags(p)
    _add_run_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", parents=[common], help="batch evaluation or CSR of two reports")
    p.add_argument("--scene", action="append")
    p.add_argument("--dataset", action="append")
    p.add_argument("--report-a")
    p.add_argument("--report-b")
    _add_run_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", parents=[common], help="SVG of a trace")
    p.add_argument("trace")
    p.add_argument("--scene")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return ap


def _subparsers(ap: argparse.ArgumentParser):
    for action in ap._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                yield child
                yield from _subparsers(child)


def _apply_config(ap: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    for p in [ap, *_subparsers(ap)]:
        # global flags take their config value on the top-level parser only, so a
        # value typed before the sub-command is not replaced by the file's
        by_dest = {a.dest: a for a in p._actions if p is ap or a.dest not in GLOBAL_DESTS}
        overrides = {}
        for key, raw in values.items():
            action = by_dest.get(key)
            if action is None:
                continue
            if isinstance(action, argparse._StoreTrueAction):
                overrides[key] = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                overrides[key] = action.type(raw)
            else:
                overrides[key] = raw
        p.set_defaults(**overrides)
    known_keys = {a.dest for p in [ap, *_subparsers(ap)] for a in p._actions}
    unknown = sorted(set(values) - known_keys)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = build_parser()
    try:
        _apply_config(ap, argv)
        args = ap.parse_args(argv)
        return args.func(args)
    except TraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except LlmError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_LLM
    except (ResourceUnavailable, RetriesExhausted) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SAMPLING
    except (SceneError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())

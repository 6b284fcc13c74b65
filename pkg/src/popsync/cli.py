"""Command-line entry point.

Exit codes: 0 success/consistent, 1 property violation or inconsistency,
2 input error, 3 configuration-space cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from popsync import montecarlo
from popsync.countdown import GameError, CountdownGame, parse_game, random_game, solve_game
from popsync.harness import game_summary, verify_lemma
from popsync.mdp import dumps as mdp_dumps
from popsync.pilot import PilotContext, PilotError, pilot_action
from popsync.population import MAX_FULL_N, CapExceeded, check_sync, full_sync
from popsync.reduction import compile_game, export_dot

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_CAP = 0, 1, 2, 3


class InputError(Exception):
    pass


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _report(args: argparse.Namespace, doc: dict) -> None:
    if args.out:
        write_atomic(Path(args.out), json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_game(path: str) -> CountdownGame:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return parse_game(text)


def cmd_solve_game(args: argparse.Namespace) -> int:
    game = load_game(args.path)
    wt = solve_game(game)
    print(f"Player {wt.winner} wins from ({game.init_vertex}, {game.init_counter})")
    moves = {}
    if wt.player1_wins:
        for c in range(1, game.init_counter + 1):
            for v in game.vertices:
                if (v, c) in wt.move:
                    moves[f"{v},{c}"] = wt.move[(v, c)]
                    print(f"  ({v}, {c}) -> play {wt.move[(v, c)]}")
    _report(args, {"winner": f"player {wt.winner}", "moves": moves})
    return EXIT_OK


def cmd_compile(args: argparse.Namespace) -> int:
    game = load_game(args.path)
    mdp, gm = compile_game(game, literal_control_error=args.literal_control_error)
    out = Path(args.out)
    write_atomic(out / "mdp.json", mdp_dumps(mdp))
    write_atomic(out / "gadgets.json", gm.dumps())
    if args.dot:
        write_atomic(out / "mdp.dot", export_dot(mdp, gm))
    print(f"{mdp.n_states} states, {mdp.n_actions} actions, min_sync_n={gm.min_sync_n} -> {out}")
    return EXIT_OK


def cmd_check_sync(args: argparse.Namespace) -> int:
    game = load_game(args.path)
    mdp, gm = compile_game(game, literal_control_error=args.literal_control_error)
    res = check_sync(mdp, args.n, args.cap)
    doc = {"game": game_summary(game, gm.k_mc, gm.k_ac), **res.diagnostics()}
    verdict = "synchronizable" if res.synchronizable else "not synchronizable"
    print(f"n={args.n}: {verdict} ({res.reachable_configs} configurations)")
    code = EXIT_OK
    if args.full_product:
        if args.n > MAX_FULL_N:
            raise InputError(f"--full-product needs n <= {MAX_FULL_N}")
        full_verdict, full, _ = full_sync(mdp, args.n)
        doc["full_product"] = {"synchronizable": full_verdict, "tuples": len(full.tuples)}
        print(f"full product: {'synchronizable' if full_verdict else 'not synchronizable'} ({len(full.tuples)} tuples)")
        if full_verdict != res.synchronizable:
            print("counting quotient and full product disagree", file=sys.stderr)
            code = EXIT_VIOLATION
    _report(args, doc)
    return code


def cmd_verify_lemma(args: argparse.Namespace) -> int:
    game = load_game(args.path)
    report = verify_lemma(game, args.extra, args.literal_control_error, args.cap)
    print(f"Player {report.dp_winner} wins; min_sync_n={report.game['min_sync_n']}")
    for r in report.results:
        pilot = "" if r.pilot_certified is None else f", pilot {'certified' if r.pilot_certified else 'NOT certified'}"
        print(f"  n={r.n}: {'sync' if r.synchronizable else 'no sync'} ({r.reachable_configs} configs{pilot})")
    print("consistent" if report.consistent else "INCONSISTENT")
    _report(args, report.to_document())
    return EXIT_OK if report.consistent else EXIT_VIOLATION


def cmd_simulate(args: argparse.Namespace) -> int:
    game = load_game(args.path)
    mdp, gm = compile_game(game, literal_control_error=args.literal_control_error)
    if args.strategy == "pilot":
        wt = solve_game(game)
        if not wt.player1_wins:
            print("Player 2 wins this game; the pilot strategy is undefined", file=sys.stderr)
            return EXIT_VIOLATION
        ctx = PilotContext(gm, wt)
        strategy = lambda cfg: pilot_action(ctx, cfg)  # noqa: E731
    else:
        res = check_sync(mdp, args.n, args.cap)
        if not res.synchronizable:
            print(f"no synchronizing strategy at this n (n={args.n})", file=sys.stderr)
            return EXIT_VIOLATION
        strategy = res.action_for
    budget = args.max_steps or montecarlo.default_max_steps(game.init_counter, args.n, gm.k_mc, gm.k_ac)
    try:
        est = montecarlo.estimate(mdp, args.n, strategy, args.runs, args.seed, budget)
    except (PilotError, ValueError) as exc:
        print(f"strategy failed: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    print(
        f"{est.successes}/{est.runs} runs reached End within {budget} steps "
        f"(mean {est.mean_steps:.2f}, min {est.min_steps}, max {est.max_steps})"
    )
    _report(args, {"n": args.n, "strategy": args.strategy, "seed": args.seed, "max_steps": budget, **est.to_document()})
    return EXIT_OK if est.successes == est.runs else EXIT_VIOLATION


def cmd_gen(args: argparse.Namespace) -> int:
    if args.vertices < 1 or args.max_weight < 1 or args.c0 < 0:
        raise InputError("need vertices >= 1, max_weight >= 1, c0 >= 0")
    game = random_game(args.vertices, args.max_weight, args.c0, args.seed)
    text = f"# random_game({args.vertices}, {args.max_weight}, {args.c0}, seed={args.seed})\n" + game.to_text()
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="popsync", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def with_game(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("path", help="countdown game file")
        return p

    def with_compile_opts(p: argparse.ArgumentParser) -> None:
        p.add_argument("--literal-control-error", action="store_true",
                       help="control error daemonic at W only (unrepaired construction)")
        p.add_argument("--cap", type=_positive, default=None,
                       help="configuration cap (default: $POPSYNC_CAP or 5000000)")

    p = with_game("solve-game", "solve a countdown game")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_solve_game)

    p = with_game("compile", "compile a game into the gadget MDP")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dot", action="store_true", help="also write mdp.dot")
    p.add_argument("--literal-control-error", action="store_true")
    p.set_defaults(func=cmd_compile)

    p = with_game("check-sync", "decide synchronizability of the n-fold product")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--full-product", action="store_true", help=f"also check the tuple product (n <= {MAX_FULL_N})")
    p.add_argument("--out", help="JSON report path")
    with_compile_opts(p)
    p.set_defaults(func=cmd_check_sync)

    p = with_game("verify-lemma", "compare synchronizability for small n with the game's winner")
    p.add_argument("--extra", type=int, default=1, help="check n up to min_sync_n + EXTRA")
    p.add_argument("--out", help="JSON report path")
    with_compile_opts(p)
    p.set_defaults(func=cmd_verify_lemma)

    p = with_game("simulate", "Monte Carlo runs of a synchronizing strategy")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--runs", type=_positive, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=_positive, default=None)
    p.add_argument("--strategy", choices=("pilot", "solver"), default="pilot")
    p.add_argument("--out", help="JSON report path")
    with_compile_opts(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen", help="write a seeded random countdown game")
    p.add_argument("vertices", type=int)
    p.add_argument("max_weight", type=int)
    p.add_argument("c0", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "extra", 0) < 0:
        parser.error("--extra must be nonnegative")
    try:
        return args.func(args)
    except (GameError, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())

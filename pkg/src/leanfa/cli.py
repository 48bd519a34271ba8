"""Command-line front end: simulate, check, seq, enumerate, export-dot.

Exit codes: 0 holds / success, 1 fails, 2 holds-within-bound, 64 usage
errors, 65 parse errors.  Reports are plain "key: value" text with stable
field order so they can be parsed by scripts and diffed across runs.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .equilibrium import (
    FAILS,
    HOLDS,
    Measure,
    SearchBound,
    Verdict,
    default_bound,
    enumerate_machines,
    is_abreu_rubinstein,
    is_lean,
    is_nash,
)
from .games import BUILTIN_GAMES, ParseError, StageGame, is_strictly_enforceable, parse_game
from .machines import (
    Machine,
    classify_states,
    finite_mean_payoff,
    limit_mean_payoff,
    machine_to_dot,
    machine_to_text,
    parse_machine,
    played_states,
    simulate,
    validate_machine,
)
from .sequences import (
    build_internal_threat_machines,
    build_trigger_machines,
    is_foolable,
    is_irreducible,
    is_rigid,
    is_strictly_enforceable_seq,
    parse_sequence,
    seq_payoff,
)
from .structure import audit_pair, chain_decompose

EXIT_USAGE = 64
EXIT_PARSE = 65


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


@dataclass
class Workspace:
    """Objects loaded for one invocation, validated against the game."""

    game: StageGame
    machines: dict[tuple[int, str], Machine] = field(default_factory=dict)

    def add_machine(self, machine: Machine) -> Machine:
        key = (machine.player, machine.name)
        if key in self.machines:
            raise ParseError(
                f"duplicate machine name {machine.name!r} for player {machine.player}"
            )
        validate_machine(machine, self.game)
        self.machines[key] = machine
        return machine


def _load_game(ref: str) -> StageGame:
    if ref in BUILTIN_GAMES:
        return BUILTIN_GAMES[ref]
    path = Path(ref)
    if not path.exists():
        raise ParseError(f"no such game {ref!r} (not a builtin, not a file)")
    return parse_game(path.read_text())


def _load_machine(ws: Workspace, ref: str, player: int) -> Machine:
    path = Path(ref)
    if not path.exists():
        raise ParseError(f"no such machine file {ref!r}")
    machine = parse_machine(path.read_text())
    if machine.player != player:
        raise ParseError(
            f"{ref}: declares player {machine.player}, expected player {player}"
        )
    return ws.add_machine(machine)


def _machine_brief(machine: Machine) -> str:
    parts = []
    for q in machine.states:
        moves = ",".join(
            f"{a}>{machine.transition[(q, a)]}" for a in machine.input_actions
        )
        parts.append(f"{q}:{machine.output[q]}[{moves}]")
    return ";".join(parts)


def _print_verdict(verdict: Verdict, out) -> None:
    print(f"kind: {verdict.kind}", file=out)
    if verdict.measure is not None:
        print(f"measure: {verdict.measure.value}", file=out)
    print(f"result: {verdict.result}", file=out)
    if verdict.bound is not None:
        print(f"bound: {verdict.bound}", file=out)
    for side in verdict.sides:
        print(f"side: {side}", file=out)
    for cert in verdict.certificates:
        print(f"certificate: player {cert.player} {cert}", file=out)
    if verdict.witness is None:
        print("witness: none", file=out)
    else:
        print(f"witness-player: {verdict.witness_player}", file=out)
        print("witness:", file=out)
        text = machine_to_text(verdict.witness)
        for line in text.rstrip().splitlines():
            print(f"  {line}", file=out)


def _cmd_simulate(args, out) -> int:
    ws = Workspace(_load_game(args.game))
    m1 = _load_machine(ws, args.machine1, 1)
    m2 = _load_machine(ws, args.machine2, 2)
    play = simulate(m1, m2)
    print(f"game: {ws.game.name}", file=out)
    print(f"machine-1: {m1.name} ({len(m1.states)} states)", file=out)
    print(f"machine-2: {m2.name} ({len(m2.states)} states)", file=out)
    fmt = lambda steps: " ".join(f"({a},{b})" for _, (a, b) in steps)
    fmt_q = lambda steps: " ".join(f"({q1},{q2})" for (q1, q2), _ in steps)
    print(f"preperiod: {fmt(play.preperiod)}", file=out)
    print(f"preperiod-states: {fmt_q(play.preperiod)}", file=out)
    print(f"cycle: {fmt(play.cycle)}", file=out)
    print(f"cycle-states: {fmt_q(play.cycle)}", file=out)
    payoff = limit_mean_payoff(play, ws.game)
    print(f"payoff: {payoff}", file=out)
    enforce = is_strictly_enforceable(ws.game, payoff)
    print(f"strictly-enforceable: {'yes' if enforce else 'no'}", file=out)
    for i, m in ((1, m1), (2, m2)):
        played = ",".join(sorted(played_states(play, i)))
        print(f"played-{i}: {played}", file=out)
        rep = classify_states(m, ws.game)
        threat = ",".join(sorted(rep.threat_states)) or "-"
        print(
            f"measures-{i}: total={rep.total_states} threat={threat} "
            f"normal={len(rep.normal_states)} normal-transitions={rep.normal_transitions}",
            file=out,
        )
    if args.horizon is not None:
        avg = finite_mean_payoff(play, ws.game, args.horizon)
        print(f"average-T{args.horizon}: {avg}", file=out)
    return 0


def _cmd_check(args, out) -> int:
    ws = Workspace(_load_game(args.game))
    m1 = _load_machine(ws, args.machine1, 1)
    m2 = _load_machine(ws, args.machine2, 2)
    if args.kind == "nash":
        if args.measure is not None:
            raise _UsageError("--measure only applies to --kind ar|lean")
        verdict = is_nash(m1, m2, ws.game)
    else:
        if args.measure is None:
            raise _UsageError(f"--kind {args.kind} requires --measure")
        measure = Measure.from_text(args.measure)
        bound = None
        if args.bound is not None:
            if args.bound < 1:
                raise _UsageError("--bound must be a positive state count")
            threat = max(
                default_bound(m1, ws.game, measure).max_threat_states,
                default_bound(m2, ws.game, measure).max_threat_states,
            )
            bound = SearchBound(args.bound, threat)
        check = is_abreu_rubinstein if args.kind == "ar" else is_lean
        verdict = check(m1, m2, ws.game, measure, bound, certify=args.certify)
    _print_verdict(verdict, out)
    return verdict.exit_code()


def _parse_player(text: str, what: str) -> int:
    if text not in ("1", "2"):
        raise _UsageError(f"{what} expects a player id 1 or 2, got {text!r}")
    return int(text)


def _cmd_seq(args, out) -> int:
    ws = Workspace(_load_game(args.game))
    seq = parse_sequence(args.sequence, ws.game)
    print(f"sequence: {seq}", file=out)
    payoff = seq_payoff(seq, ws.game)
    print(f"payoff: {payoff}", file=out)
    enforce = is_strictly_enforceable_seq(seq, ws.game)
    print(f"strictly-enforceable: {'yes' if enforce else 'no'}", file=out)
    if args.irreducible is not None:
        player = _parse_player(args.irreducible, "--irreducible")
        answer = is_irreducible(seq, player)
        print(f"irreducible-{player}: {'yes' if answer else 'no'}", file=out)
    if args.rigid is not None:
        arg = args.rigid
        if ":" not in arg:
            raise _UsageError("--rigid expects <player>:<action>[,<action>...]")
        who, _, actions = arg.partition(":")
        player = _parse_player(who, "--rigid")
        subset = frozenset(actions.split(","))
        verdict = is_rigid(seq, player, subset, ws.game)
        label = ",".join(sorted(subset))
        if verdict.rigid:
            print(f"rigid-{player}-{{{label}}}: yes", file=out)
        else:
            print(
                f"rigid-{player}-{{{label}}}: no "
                f"(rotation offset {verdict.rotation_offset}, prefix {verdict.prefix_len})",
                file=out,
            )
    if args.foolable is not None:
        player = _parse_player(args.foolable, "--foolable")
        witness = is_foolable(seq, player, ws.game)
        if witness is None:
            print(f"foolable-{player}: no", file=out)
        else:
            print(
                f"foolable-{player}: yes (rotation offset {witness.rotation_offset}, "
                f"s'={witness.action})",
                file=out,
            )
    if args.build is not None:
        if args.build == "sigma":
            try:
                pair = build_trigger_machines(seq, ws.game)
            except ValueError as exc:
                print(f"build rejected: {exc}", file=out)
                return 1
        else:
            blocks = {"CD": 0, "DD": 0, "DC": 0}
            order = []
            for a1, a2 in seq.entries:
                key = a1 + a2
                if key not in blocks:
                    print(f"build rejected: entry ({a1},{a2}) outside the C/D blocks", file=out)
                    return 1
                if key not in order:
                    order.append(key)
                blocks[key] += 1
            if order != ["CD", "DD", "DC"]:
                print(
                    "build rejected: internal-threat needs the block order "
                    "(C,D)..., (D,D)..., (D,C)...",
                    file=out,
                )
                return 1
            try:
                pair = build_internal_threat_machines(
                    blocks["CD"], blocks["DD"], blocks["DC"], ws.game
                )
            except ValueError as exc:
                print(f"build rejected: {exc}", file=out)
                return 1
        outdir = Path(args.out_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        for m in pair:
            path = outdir / f"{m.name}.machine"
            path.write_text(machine_to_text(m))
            written.append(str(path))
        print(f"wrote: {' '.join(written)}", file=out)
    return 0


def _pair_budget() -> int:
    return int(os.environ.get("LEANFA_BUDGET", "1000000"))


def _examine_pair(task) -> tuple[bool, str | None]:
    """Check one indexed pair; returns (is nash, hit line or None)."""
    game, i, j, m1, m2, find, measure_text, audit_structure = task
    nash = is_nash(m1, m2, game)
    if nash.result != HOLDS:
        return False, None
    payoff = limit_mean_payoff(simulate(m1, m2), game)
    if find == "nash":
        verdict = nash
    else:
        measure = Measure.from_text(measure_text)
        check = is_abreu_rubinstein if find == "ar" else is_lean
        verdict = check(m1, m2, game, measure)
    if verdict.result == FAILS:
        return True, None
    line = (
        f"hit m1={i} m2={j} payoff={payoff} result={verdict.result} "
        f"def1={_machine_brief(m1)} def2={_machine_brief(m2)}"
    )
    if audit_structure:
        audit = audit_pair(m1, m2, game)
        sizes = []
        for m in (m1, m2):
            chain = chain_decompose(m, game)
            sizes.append("-" if chain is None else f"{len(chain.tail)}+{len(chain.head)}")
        line += (
            f" audit: reuse={_yn(audit.first_reuse_ok)}"
            f" count-R={_yn(audit.counting_states_ok)}"
            f" count-delta={_yn(audit.counting_transitions_ok)}"
            f" relations={_yn(audit.relations_ok)}"
            f" chain={_yn(all(audit.chains_ok))}"
            f" tail+head={sizes[0]},{sizes[1]}"
            f" infer={_yn(all(audit.inference_ok))}"
        )
    return True, line


def _examine_chunk(tasks) -> list[tuple[bool, str | None]]:
    return [_examine_pair(t) for t in tasks]


def _cmd_enumerate(args, out) -> int:
    ws = Workspace(_load_game(args.game))
    bound = SearchBound(args.states, args.threat if args.threat is not None else args.states)
    pool1 = tuple(enumerate_machines(1, ws.game, bound))
    pool2 = tuple(enumerate_machines(2, ws.game, bound))
    print(f"machines-1: {len(pool1)}", file=out)
    print(f"machines-2: {len(pool2)}", file=out)
    measure = Measure.from_text(args.measure) if args.measure else None
    if args.find in ("ar", "lean") and measure is None:
        raise _UsageError(f"--find {args.find} requires --measure")
    budget = _pair_budget()
    pairs = [(i, j) for i in range(len(pool1)) for j in range(len(pool2))]
    truncated = len(pairs) > budget
    pairs = pairs[:budget]
    tasks = [
        (
            ws.game,
            i,
            j,
            pool1[i],
            pool2[j],
            args.find,
            args.measure,
            args.audit == "structure",
        )
        for i, j in pairs
    ]
    if args.jobs > 1 and len(tasks) > 1:
        # buffer per-partition results and merge in canonical pair order so
        # output is byte-identical to a sequential run
        import multiprocessing

        step = max(1, len(tasks) // (args.jobs * 4))
        chunks = [tasks[k : k + step] for k in range(0, len(tasks), step)]
        with multiprocessing.Pool(args.jobs) as pool:
            results = [r for chunk in pool.map(_examine_chunk, chunks) for r in chunk]
    else:
        results = [_examine_pair(t) for t in tasks]
    nash_count = sum(1 for was_nash, _ in results if was_nash)
    hits = 0
    for _, line in results:
        if line is not None:
            hits += 1
            print(line, file=out)
    if truncated:
        print(f"truncated: pair budget {budget} exceeded, partial results", file=out)
    print(f"summary: pairs={len(pairs)} nash={nash_count} hits={hits}", file=out)
    return 0


def _yn(flag: bool) -> str:
    return "yes" if flag else "no"


def _cmd_export_dot(args, out) -> int:
    ws = Workspace(_load_game(args.game))
    path = Path(args.machine)
    if not path.exists():
        raise ParseError(f"no such machine file {args.machine!r}")
    machine = parse_machine(path.read_text())
    ws.add_machine(machine)
    out.write(machine_to_dot(machine, ws.game))
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="leanfa",
        description="Exact analysis of repeated two-player games played by finite-state machines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a machine pair to its eventual play")
    p.add_argument("game", help="builtin game name (pd) or game file")
    p.add_argument("machine1", help="player-1 machine file")
    p.add_argument("machine2", help="player-2 machine file")
    p.add_argument("--horizon", type=int, default=None, help="also print the first-T average")

    p = sub.add_parser("check", help="decide nash / ar / lean for a machine pair")
    p.add_argument("game")
    p.add_argument("machine1")
    p.add_argument("machine2")
    p.add_argument("--kind", choices=("nash", "ar", "lean"), required=True)
    p.add_argument("--measure", choices=("Q", "R", "delta"), default=None)
    p.add_argument("--bound", type=int, default=None, help="max total states searched")
    p.add_argument(
        "--certify",
        choices=("auto", "irreducible", "rigid", "foolable", "none"),
        default="auto",
    )

    p = sub.add_parser("seq", help="analyze a finite action sequence")
    p.add_argument("game")
    p.add_argument("sequence", help='e.g. "2*(C,C) 1*(D,D)"')
    p.add_argument("--irreducible", metavar="PLAYER", default=None)
    p.add_argument("--rigid", metavar="PLAYER:ACTS", default=None)
    p.add_argument("--foolable", metavar="PLAYER", default=None)
    p.add_argument("--build", choices=("sigma", "internal-threat"), default=None)
    p.add_argument("--out-dir", default=".", help="directory for --build machine files")

    p = sub.add_parser("enumerate", help="enumerate canonical machine pairs")
    p.add_argument("game")
    p.add_argument("--states", type=int, required=True)
    p.add_argument("--threat", type=int, default=None)
    p.add_argument("--find", choices=("nash", "ar", "lean"), default="nash")
    p.add_argument("--measure", choices=("Q", "R", "delta"), default=None)
    p.add_argument("--audit", choices=("structure",), default=None)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for pair checks")

    p = sub.add_parser("export-dot", help="emit a machine as a DOT graph")
    p.add_argument("game")
    p.add_argument("machine")

    return parser


_DISPATCH = {
    "simulate": _cmd_simulate,
    "check": _cmd_check,
    "seq": _cmd_seq,
    "enumerate": _cmd_enumerate,
    "export-dot": _cmd_export_dot,
}


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else EXIT_USAGE
    try:
        return _DISPATCH[args.command](args, out)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


def main_entry() -> None:
    sys.exit(main())

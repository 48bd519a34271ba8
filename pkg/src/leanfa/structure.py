"""Structural validators for machine pairs and observer inference.

Pairs at lean equilibrium under the normal-state or normal-transition
measures are highly constrained: the first state either player ever reuses
must recur forever, both machines play exactly as many states as their
measure, the four time equivalences collapse into one, every reachable
normal state has a unique normal successor, and the machines' played parts
can be reconstructed from the action sequence alone.  The validators here
check those conclusions on a raw pair and report the hypothesis status
alongside, so a violation doubles as a refutation of leanness.
"""

from __future__ import annotations

from dataclasses import dataclass

from .games import PlayerId, StageGame, is_strictly_enforceable, opponent
from .machines import (
    EquivalenceClasses,
    Machine,
    Play,
    Relation,
    classify_states,
    equivalence_relation,
    limit_mean_payoff,
    played_states,
    reachable_states,
    simulate,
)


@dataclass(frozen=True)
class FirstReuseReport:
    """Whether the first reused state recurs infinitely often for both players."""

    ok: bool
    first_reuse_time: int
    recurrent: tuple[bool, bool]
    strictly_enforceable: bool
    note: str


def check_first_reuse(m1: Machine, m2: Machine, game: StageGame) -> FirstReuseReport:
    play = simulate(m1, m2)
    enforceable = is_strictly_enforceable(game, limit_mean_payoff(play, game))
    horizon = play.horizon
    cycle_states = [
        {q[i] for q, _ in play.cycle} for i in (0, 1)
    ]
    later: list[set[str]] = [set(cycle_states[0]), set(cycle_states[1])]
    # states seen strictly after time t, walking backwards over the preperiod
    reuse_time = None
    for t in range(horizon, 0, -1):
        q = play.state_at(t)
        if q[0] in later[0] or q[1] in later[1]:
            reuse_time = t
        later[0].add(q[0])
        later[1].add(q[1])
    assert reuse_time is not None, "cycle states always recur"
    q = play.state_at(reuse_time)
    recurrent = (q[0] in cycle_states[0], q[1] in cycle_states[1])
    ok = all(recurrent)
    note = (
        "first reused state recurs forever for both players"
        if ok
        else "structure violated: a transient state is reused, so the pair is not lean "
        "under the normal-state or normal-transition measures (given a strictly "
        "enforceable profile)"
    )
    return FirstReuseReport(ok, reuse_time, recurrent, enforceable, note)


@dataclass(frozen=True)
class CountingReport:
    """Measure values versus played-state counts for both machines."""

    ok: bool
    measure_values: tuple[int, int]
    played_counts: tuple[int, int]
    strictly_enforceable: bool


def check_counting(
    m1: Machine, m2: Machine, game: StageGame, use_transitions: bool
) -> CountingReport:
    """Both machines' measure (normal states, or normal transitions when
    `use_transitions`) must equal both played-state counts."""
    play = simulate(m1, m2)
    enforceable = is_strictly_enforceable(game, limit_mean_payoff(play, game))
    values = []
    for m in (m1, m2):
        report = classify_states(m, game)
        values.append(report.normal_transitions if use_transitions else len(report.normal_states))
    played = [len(played_states(play, i)) for i in (1, 2)]
    numbers = values + played
    return CountingReport(
        len(set(numbers)) == 1, tuple(values), tuple(played), enforceable
    )


@dataclass(frozen=True)
class RelationReport:
    ok: bool
    partitions: dict[Relation, EquivalenceClasses]
    strictly_enforceable: bool
    # per player: if the own-state relation sits inside the suffix relation,
    # the two must coincide
    contained_equal: tuple[bool, bool]


def check_relation_equalities(m1: Machine, m2: Machine, game: StageGame) -> RelationReport:
    play = simulate(m1, m2)
    enforceable = is_strictly_enforceable(game, limit_mean_payoff(play, game))
    parts = {rel: equivalence_relation(play, rel) for rel in Relation}
    suffix = parts[Relation.SUFFIX]
    ok = all(parts[rel].same_partition(suffix) for rel in Relation)
    contained_equal = tuple(
        (not parts[rel].refines(suffix)) or parts[rel].same_partition(suffix)
        for rel in (Relation.STATE_1, Relation.STATE_2)
    )
    return RelationReport(ok, parts, enforceable, contained_equal)


@dataclass(frozen=True)
class ChainDecomposition:
    """Unique-normal-successor structure of one machine.

    Defined when every reachable normal state has exactly one transition to
    a normal state; walking that successor map from the initial state splits
    the reachable normal states into a transient tail and a recurrent head.
    """

    successor: dict[str, str]
    tail: tuple[str, ...]
    head: tuple[str, ...]


def chain_decompose(machine: Machine, game: StageGame) -> ChainDecomposition | None:
    report = classify_states(machine, game)
    inputs = game.actions(opponent(machine.player))
    reachable = reachable_states(machine, inputs)
    normal = [q for q in reachable if q in report.normal_states]
    if machine.initial not in report.normal_states:
        return None
    successor = {}
    for q in normal:
        targets = [
            machine.transition[(q, a)]
            for a in inputs
            if machine.transition[(q, a)] in report.normal_states
        ]
        if len(targets) != 1:
            return None
        successor[q] = targets[0]
    walk = [machine.initial]
    seen = {machine.initial: 0}
    while True:
        nxt = successor[walk[-1]]
        if nxt in seen:
            cut = seen[nxt]
            return ChainDecomposition(successor, tuple(walk[:cut]), tuple(walk[cut:]))
        seen[nxt] = len(walk)
        walk.append(nxt)


@dataclass(frozen=True)
class InferredSkeleton:
    """Machine structure reconstructed from the action sequence alone.

    One abstract state per suffix class; outputs and transitions read off
    the class's own action and the class of the following time point.
    """

    player: PlayerId
    states: tuple[str, ...]
    initial: str
    output: dict[str, str]
    transition: dict[tuple[str, str], str]


@dataclass(frozen=True)
class InferenceReport:
    skeletons: tuple[InferredSkeleton, InferredSkeleton]
    isomorphic: tuple[bool, bool]
    notes: tuple[str, str]


def _skeleton(play: Play, suffix: EquivalenceClasses, player: PlayerId) -> InferredSkeleton:
    j = opponent(player)
    names = {cls: f"c{cls[0]}" for cls in suffix.classes}
    output: dict[str, str] = {}
    transition: dict[tuple[str, str], str] = {}
    for cls in suffix.classes:
        name = names[cls]
        outs = {play.action_at(t)[player - 1] for t in cls}
        if len(outs) != 1:
            raise AssertionError("suffix class members disagree on the current action")
        output[name] = outs.pop()
        moves = {}
        for t in cls:
            observed = play.action_at(t)[j - 1]
            nxt = names[suffix.class_of(t + 1)]
            if moves.setdefault(observed, nxt) != nxt:
                raise AssertionError("suffix class members disagree on the next class")
            moves[observed] = nxt
        for observed, nxt in moves.items():
            transition[(name, observed)] = nxt
    initial = names[suffix.class_of(1)]
    return InferredSkeleton(
        player, tuple(names[cls] for cls in suffix.classes), initial, output, transition
    )


def _skeleton_matches(
    skeleton: InferredSkeleton, machine: Machine, play: Play, suffix: EquivalenceClasses
) -> tuple[bool, str]:
    """Isomorphism between the skeleton and the machine's played substructure.

    Played substructure means played states with outputs, plus transitions on
    the inputs actually observed in the play; off-play transitions are not
    the observer's to know.
    """
    player = skeleton.player
    j = opponent(player)
    mapping: dict[str, str] = {}
    for cls in suffix.classes:
        name = f"c{cls[0]}"
        actual = {play.state_at(t)[player - 1] for t in cls}
        if len(actual) != 1:
            return False, f"class {name} is played by several machine states {sorted(actual)}"
        state = actual.pop()
        mapping[name] = state
    if len(set(mapping.values())) != len(mapping):
        return False, "two classes map to the same machine state"
    if mapping[skeleton.initial] != machine.initial:
        return False, "initial states do not correspond"
    for name, state in mapping.items():
        if machine.output[state] != skeleton.output[name]:
            return False, f"output mismatch at {name}"
    for (name, observed), nxt in skeleton.transition.items():
        if machine.transition[(mapping[name], observed)] != mapping[nxt]:
            return False, f"transition mismatch at ({name},{observed})"
    return True, "skeleton is isomorphic to the played substructure"


def infer_machines(m1: Machine, m2: Machine, game: StageGame) -> InferenceReport:
    """Rebuild both machines' played parts from the action sequence alone.

    The reconstruction is faithful for pairs that are lean under the
    normal-transition measure with a strictly enforceable profile; on other
    pairs the isomorphism check may fail, which is itself evidence against
    leanness.
    """
    play = simulate(m1, m2)
    suffix = equivalence_relation(play, Relation.SUFFIX)
    skeletons = []
    matches = []
    notes = []
    for player, machine in ((1, m1), (2, m2)):
        sk = _skeleton(play, suffix, player)
        ok, note = _skeleton_matches(sk, machine, play, suffix)
        skeletons.append(sk)
        matches.append(ok)
        notes.append(note)
    return InferenceReport(tuple(skeletons), tuple(matches), tuple(notes))


@dataclass(frozen=True)
class StructureAudit:
    first_reuse_ok: bool
    counting_states_ok: bool
    counting_transitions_ok: bool
    relations_ok: bool
    chains_ok: tuple[bool, bool]
    inference_ok: tuple[bool, bool]

    @property
    def all_ok(self) -> bool:
        return (
            self.first_reuse_ok
            and self.counting_transitions_ok
            and self.relations_ok
            and all(self.chains_ok)
            and all(self.inference_ok)
        )


def audit_pair(m1: Machine, m2: Machine, game: StageGame) -> StructureAudit:
    """Run every structural validator on a pair; one record per pair."""
    return StructureAudit(
        check_first_reuse(m1, m2, game).ok,
        check_counting(m1, m2, game, use_transitions=False).ok,
        check_counting(m1, m2, game, use_transitions=True).ok,
        check_relation_equalities(m1, m2, game).ok,
        (
            chain_decompose(m1, game) is not None,
            chain_decompose(m2, game) is not None,
        ),
        infer_machines(m1, m2, game).isomorphic,
    )

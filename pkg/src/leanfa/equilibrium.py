"""Nash, Abreu-Rubinstein, and lean equilibrium checks for machine pairs.

Nash is decided exactly by comparing each side's limit-of-means payoff with
the best-response value of the opposing machine.  The two refinements
quantify over every strictly simpler machine for one player, which the
checker covers by a combination of

  * canonical bounded enumeration (one representative per isomorphism
    class, all states reachable, duplicate absorbing states merged), and
  * certificates on the pair's played cycle (irreducibility class counts,
    rigidity, foolability) that rule out *all* smaller machines, not just
    the enumerated ones.

Verdicts carry the search bound they were decided under; "holds" without
qualification is only issued when a certificate (or, for the state-count
measure, a provably complete enumeration) covers every simpler machine.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

from .cycles import best_response_value, construct_best_response, is_sequence_forcing
from .games import PlayerId, StageGame, forcing_actions, is_strictly_enforceable, opponent
from .machines import (
    Machine,
    classify_states,
    limit_mean_payoff,
    simulate,
)
from .sequences import (
    ActionSeq,
    incompatible,
    is_foolable,
    is_rigid,
    seq_payoff,
    suffix_classes,
)


class Measure(enum.Enum):
    """The three strategy-complexity measures."""

    TOTAL_STATES = "Q"
    NORMAL_STATES = "R"
    NORMAL_TRANSITIONS = "delta"

    @classmethod
    def from_text(cls, text: str) -> "Measure":
        for m in cls:
            if m.value == text:
                return m
        raise ValueError(f"unknown measure {text!r} (expected Q, R, or delta)")


@lru_cache(maxsize=None)
def measure_value(machine: Machine, game: StageGame, measure: Measure) -> int:
    report = classify_states(machine, game)
    if measure is Measure.TOTAL_STATES:
        return report.total_states
    if measure is Measure.NORMAL_STATES:
        return len(report.normal_states)
    return report.normal_transitions


@dataclass(frozen=True)
class SearchBound:
    """Limits for the bounded exhaustive search over deviating machines."""

    max_total_states: int
    max_threat_states: int

    def __post_init__(self):
        if self.max_total_states < 1 or self.max_threat_states < 0:
            raise ValueError("bounds must be positive")

    def __str__(self) -> str:
        return f"states<={self.max_total_states} threat<={self.max_threat_states}"


def default_bound(machine: Machine, game: StageGame, measure: Measure) -> SearchBound:
    """Incumbent's measure value plus two states; one threat state per forcing output."""
    value = measure_value(machine, game, measure)
    return SearchBound(value + 2, len(forcing_actions(game, machine.player)))


HOLDS = "holds"
FAILS = "fails"
HOLDS_WITHIN_BOUND = "holds-within-bound"


@dataclass(frozen=True)
class Certificate:
    """Why no strictly simpler deviation can exist, beyond any search bound."""

    name: str
    player: PlayerId
    detail: str

    def __str__(self) -> str:
        return f"{self.name} [{self.detail}]"


@dataclass(frozen=True)
class Verdict:
    kind: str  # "nash" | "ar" | "lean"
    result: str  # HOLDS | FAILS | HOLDS_WITHIN_BOUND
    measure: Measure | None = None
    witness: Machine | None = None
    witness_player: PlayerId | None = None
    certificates: tuple[Certificate, ...] = ()
    bound: SearchBound | None = None
    sides: tuple[str, ...] = ()

    @property
    def holds(self) -> bool:
        return self.result in (HOLDS, HOLDS_WITHIN_BOUND)

    def exit_code(self) -> int:
        return {HOLDS: 0, FAILS: 1, HOLDS_WITHIN_BOUND: 2}[self.result]


def is_best_response(m_i: Machine, m_j: Machine, game: StageGame) -> bool:
    """Exact check that m_i's limit-of-means payoff attains the best-response value."""
    if m_i.player == m_j.player:
        raise ValueError("machines must belong to opposite players")
    play = simulate(m_i, m_j) if m_i.player == 1 else simulate(m_j, m_i)
    payoff = limit_mean_payoff(play, game).for_player(m_i.player)
    return payoff == best_response_value(m_j, game)


def is_nash(m1: Machine, m2: Machine, game: StageGame) -> Verdict:
    """Mutual best responses; on failure the witness is a best-response machine."""
    play = simulate(m1, m2)
    payoff = limit_mean_payoff(play, game)
    for i, m_i, m_j in ((1, m1, m2), (2, m2, m1)):
        if payoff.for_player(i) != best_response_value(m_j, game):
            return Verdict(
                "nash",
                FAILS,
                witness=construct_best_response(m_j, game),
                witness_player=i,
            )
    return Verdict("nash", HOLDS)


# --- canonical machine enumeration --------------------------------------------

def _structures(n: int, degree: int) -> Iterator[tuple[int, ...]]:
    """Transition tables of initially connected machines in canonical order.

    Rows are scanned state by state, inputs in fixed order; a target may be
    any already-seen state or the next fresh one, and a state's row may only
    be scanned once the state has been discovered.  This yields exactly one
    table per isomorphism class.
    """
    total = n * degree
    table = [0] * total

    def rec(pos: int, maxseen: int) -> Iterator[tuple[int, ...]]:
        if pos == total:
            if maxseen == n - 1:
                yield tuple(table)
            return
        if pos % degree == 0 and pos // degree > maxseen:
            return
        cap = min(maxseen + 1, n - 1)
        for target in range(cap + 1):
            table[pos] = target
            yield from rec(pos + 1, max(maxseen, target))

    yield from rec(0, 0)


@lru_cache(maxsize=None)
def _machine_pool(
    game: StageGame, player: PlayerId, max_states: int, max_threat: int
) -> tuple[Machine, ...]:
    own = game.actions(player)
    inputs = game.actions(opponent(player))
    degree = len(inputs)
    force = set(forcing_actions(game, player))
    pool: list[Machine] = []
    for n in range(1, max_states + 1):
        names = tuple(str(i) for i in range(n))
        for table in _structures(n, degree):
            rows = [table[i * degree : (i + 1) * degree] for i in range(n)]
            absorbing = [i for i in range(n) if all(t == i for t in rows[i])]
            transition = {
                (names[i], a): names[rows[i][k]]
                for i in range(n)
                for k, a in enumerate(inputs)
            }
            for outs in itertools.product(own, repeat=n):
                absorbing_outputs = [outs[i] for i in absorbing]
                if len(set(absorbing_outputs)) != len(absorbing_outputs):
                    continue  # duplicate absorbing states collapse to one
                if sum(1 for i in absorbing if outs[i] in force) > max_threat:
                    continue
                output = {names[i]: outs[i] for i in range(n)}
                pool.append(Machine(player, names, "0", output, transition))
    return tuple(pool)


def enumerate_machines(
    player: PlayerId, game: StageGame, bound: SearchBound
) -> Iterator[Machine]:
    """One canonical representative per isomorphism class within the bound.

    All states are reachable; states are labelled by first-visit order under
    the game's input ordering, so renamings collide; machines containing two
    absorbing states with the same output are dropped (their merged form is
    enumerated at a smaller size).
    """
    yield from _machine_pool(game, player, bound.max_total_states, bound.max_threat_states)


@lru_cache(maxsize=None)
def _measured_pool(
    game: StageGame, player: PlayerId, max_states: int, max_threat: int, measure: Measure
) -> tuple[tuple[int, Machine], ...]:
    pool = _machine_pool(game, player, max_states, max_threat)
    scored = [(measure_value(m, game, measure), m) for m in pool]
    scored.sort(key=lambda pair: (pair[0], pair[1]._key))
    return tuple(scored)


def _enumeration_cap(measure: Measure, incumbent_value: int, game: StageGame, player: PlayerId) -> int:
    """State bound that already covers every canonical machine below the measure.

    Below a state count M every machine has fewer than M states.  Below a
    normal-state count M, a canonical machine has at most M-1 normal states
    plus one threat state per forcing output.  Below a transition count M, a
    canonical machine whose normal part contains a cycle has at most M-1
    normal states (tree plus a closing edge); acyclic normal parts are
    covered separately by chain machines.
    """
    n_force = len(forcing_actions(game, player))
    if measure is Measure.TOTAL_STATES:
        return incumbent_value - 1
    return incumbent_value - 1 + n_force


def _chain_machine(
    word: tuple[str, ...], punish: str, opp: Machine, game: StageGame, player: PlayerId
) -> Machine:
    """Play `word` against `opp`'s actual responses, then `punish` forever.

    Off-script observations jump straight to the absorbing punish state, so
    the normal part is a bare chain: length-L word costs L normal states and
    L-1 normal transitions.
    """
    inputs = game.actions(opponent(player))
    q = opp.initial
    responses = []
    for a in word:
        responses.append(opp.output[q])
        q = opp.transition[(q, a)]
    L = len(word)
    states = tuple(f"c{i}" for i in range(L)) + ("punish",)
    output = {f"c{i}": word[i] for i in range(L)}
    output["punish"] = punish
    transition: dict[tuple[str, str], str] = {}
    for i in range(L):
        nxt = f"c{i + 1}" if i + 1 < L else "punish"
        for a in inputs:
            transition[(f"c{i}", a)] = nxt if a == responses[i] and i + 1 < L else "punish"
    for a in inputs:
        transition[("punish", a)] = "punish"
    return Machine(player, states, "c0", output, transition, name="chain")


def _deviation_candidates(
    game: StageGame,
    player: PlayerId,
    measure: Measure,
    incumbent_value: int,
    bound: SearchBound,
    opp: Machine,
) -> Iterator[Machine]:
    """Machines with a strictly smaller measure, covering all such behaviors.

    Enumerated canonical machines come first in (measure, canonical key)
    order; for the transition-count measure they are followed by punishing
    chain machines, which realize the acyclic-normal-part behaviors whose
    state count exceeds the enumeration cap.
    """
    cap = min(bound.max_total_states, _enumeration_cap(measure, incumbent_value, game, player))
    if cap >= 1:
        for value, m in _measured_pool(game, player, cap, bound.max_threat_states, measure):
            if value >= incumbent_value:
                break  # pool is sorted by measure
            yield m
    if measure is Measure.NORMAL_TRANSITIONS:
        lo = max(cap, 1)
        for L in range(lo, incumbent_value + 1):
            if L + 1 > bound.max_total_states:
                break
            for word in itertools.product(game.actions(player), repeat=L):
                for punish in forcing_actions(game, player):
                    yield _chain_machine(word, punish, opp, game, player)


def _oriented(i: PlayerId, m_i: Machine, m_j: Machine):
    return (m_i, m_j) if i == 1 else (m_j, m_i)


def _find_deviation(
    game: StageGame,
    i: PlayerId,
    incumbent_value: int,
    m_j: Machine,
    measure: Measure,
    bound: SearchBound,
    require_nash: bool,
) -> Machine | None:
    """First strictly simpler machine for player i that is a best response
    to m_j (and, when require_nash, keeps the whole pair at Nash)."""
    target = best_response_value(m_j, game)
    for cand in _deviation_candidates(game, i, measure, incumbent_value, bound, m_j):
        play = simulate(*_oriented(i, cand, m_j))
        payoff = limit_mean_payoff(play, game)
        if payoff.for_player(i) != target:
            continue
        if require_nash and payoff.for_player(opponent(i)) != best_response_value(cand, game):
            continue
        return cand
    return None


# --- certificates ---------------------------------------------------------------

def _max_clique(members: list[int], compatible) -> int:
    best = 0

    def grow(clique: list[int], rest: list[int]):
        nonlocal best
        if len(clique) > best:
            best = len(clique)
        for idx, v in enumerate(rest):
            if len(clique) + len(rest) - idx <= best:
                break
            if all(compatible(v, u) for u in clique):
                grow(clique + [v], rest[idx + 1 :])

    grow([], members)
    return best


def _incompatible_clique(seq: ActionSeq, player: PlayerId, positions: list[int]) -> int:
    """Largest set of pairwise player-incompatible suffix classes among positions.

    Pairwise incompatible class representatives force pairwise distinct
    played states, so the clique size lower-bounds the player's played-state
    count in any pair replaying the sequence.
    """
    classes = [cls for cls in suffix_classes(seq) if cls[0] in positions]
    reps = [cls[0] for cls in classes]
    return _max_clique(reps, lambda a, b: incompatible(seq, a, b, player))


def _nonempty_subsets(actions: tuple[str, ...]) -> Iterator[frozenset[str]]:
    for size in range(1, len(actions) + 1):
        for combo in itertools.combinations(actions, size):
            yield frozenset(combo)


_CERT_MODES = ("auto", "irreducible", "rigid", "foolable", "none")


def _side_certificate(
    game: StageGame,
    i: PlayerId,
    m_j: Machine,
    measure: Measure,
    incumbent_value: int,
    seq: ActionSeq | None,
    kind: str,
    certify: str,
) -> Certificate | None:
    """Certificate that no strictly simpler player-i deviation exists.

    Requires the pair's play to be a strictly enforceable cycle from the
    first step with m_j forcing it; then any simpler best response would
    replay the sequence, and the sequence's combinatorics bound its played
    states from below (irreducibility cliques), refute Nash for machines
    playing few states with given outputs (rigidity), or refute Nash when
    all states are played (foolability).
    """
    if certify == "none" or seq is None:
        return None
    M = incumbent_value
    profile = seq_payoff(seq, game)
    if not is_strictly_enforceable(game, profile):
        return None
    forcing, _ = is_sequence_forcing(m_j, seq, i, game)
    if not forcing:
        return None
    k = len(seq)
    all_positions = list(range(1, k + 1))
    clique_all = _incompatible_clique(seq, i, all_positions)

    def rigid_below(played_cap: int) -> Certificate | None:
        # any best response with at most played_cap played states has too few
        # B-outputting states, so the pair cannot be at Nash
        for subset in _nonempty_subsets(game.actions(i)):
            b = sum(1 for e in seq.entries if e[i - 1] in subset)
            if b == 0:
                continue
            verdict = is_rigid(seq, i, subset, game)
            if not verdict.rigid:
                continue
            outside = [n for n in all_positions if seq.entries[n - 1][i - 1] not in subset]
            clique_out = _incompatible_clique(seq, i, outside) if outside else 0
            if played_cap - clique_out < b:
                label = ",".join(sorted(subset))
                return Certificate(
                    "rigid",
                    i,
                    f"B={{{label}}} b={b}: at most {played_cap} played states, "
                    f"{clique_out} forced outside B",
                )
        return None

    if measure in (Measure.NORMAL_STATES, Measure.NORMAL_TRANSITIONS):
        if certify in ("auto", "irreducible", "foolable") and clique_all >= M:
            return Certificate(
                "irreducible-classes",
                i,
                f"{clique_all} pairwise-incompatible suffix classes >= measure {M}",
            )
        if kind == "lean" and certify in ("auto", "rigid", "foolable"):
            return rigid_below(M - 1)
        return None

    # total-state measure: smaller machines either play all their states
    # (killed by foolability) or play at most M-2 states
    if kind != "lean" or certify not in ("auto", "foolable"):
        return None
    witness = is_foolable(seq, i, game)
    if witness is None:
        return None
    fool_note = f"foolable via rotation offset {witness.rotation_offset}, action {witness.action}"
    if clique_all >= M - 1:
        return Certificate(
            "foolable+irreducible",
            i,
            f"{fool_note}; {clique_all} incompatible classes >= {M - 1}",
        )
    partial = rigid_below(M - 2)
    if partial is not None:
        return Certificate("foolable+rigid", i, f"{fool_note}; {partial.detail}")
    return None


def _pair_sequence(m1: Machine, m2: Machine) -> ActionSeq | None:
    """The pair's played cycle as a sequence, when the play is purely cyclic."""
    play = simulate(m1, m2)
    if play.preperiod:
        return None
    return ActionSeq(play.cycle_actions)


def _refinement_verdict(
    kind: str,
    m1: Machine,
    m2: Machine,
    game: StageGame,
    measure: Measure,
    bound: SearchBound | None,
    certify: str,
) -> Verdict:
    if certify not in _CERT_MODES:
        raise ValueError(f"certify must be one of {_CERT_MODES}")
    nash = is_nash(m1, m2, game)
    if nash.result == FAILS:
        return Verdict(
            kind,
            FAILS,
            measure=measure,
            witness=nash.witness,
            witness_player=nash.witness_player,
            bound=bound,
            sides=(f"pair is not a Nash equilibrium (player {nash.witness_player} deviates)",),
        )
    seq = _pair_sequence(m1, m2)
    sides: list[str] = []
    certificates: list[Certificate] = []
    used_bounds: list[SearchBound] = []
    all_unconditional = True
    for i in (1, 2):
        m_i, m_j = (m1, m2) if i == 1 else (m2, m1)
        M = measure_value(m_i, game, measure)
        if M == 0:
            sides.append(f"player {i}: no simpler machine exists (measure 0)")
            continue
        side_bound = bound if bound is not None else default_bound(m_i, game, measure)
        used_bounds.append(side_bound)
        cert = _side_certificate(game, i, m_j, measure, M, seq, kind, certify)
        if cert is not None:
            certificates.append(cert)
            sides.append(f"player {i}: certificate {cert}")
            continue
        dev = _find_deviation(
            game, i, M, m_j, measure, side_bound, require_nash=(kind == "lean")
        )
        if dev is not None:
            return Verdict(
                kind,
                FAILS,
                measure=measure,
                witness=dev,
                witness_player=i,
                bound=side_bound,
                sides=tuple(sides)
                + (f"player {i}: simpler deviation found ({side_bound})",),
            )
        if measure is Measure.TOTAL_STATES and side_bound.max_total_states >= M - 1:
            sides.append(
                f"player {i}: complete enumeration of all machines with fewer than {M} states"
            )
        else:
            sides.append(f"player {i}: no deviation within bound ({side_bound})")
            all_unconditional = False
    result = HOLDS if all_unconditional else HOLDS_WITHIN_BOUND
    agg_bound = bound
    if agg_bound is None and used_bounds:
        agg_bound = SearchBound(
            max(b.max_total_states for b in used_bounds),
            max(b.max_threat_states for b in used_bounds),
        )
    return Verdict(
        kind,
        result,
        measure=measure,
        certificates=tuple(certificates),
        bound=agg_bound,
        sides=tuple(sides),
    )


def is_abreu_rubinstein(
    m1: Machine,
    m2: Machine,
    game: StageGame,
    measure: Measure,
    bound: SearchBound | None = None,
    certify: str = "auto",
) -> Verdict:
    """Nash plus: no strictly simpler machine is an equally good response.

    Fails whenever some player could keep the exact same payoff with a
    simpler machine, whether or not the opponent would then deviate.
    """
    return _refinement_verdict("ar", m1, m2, game, measure, bound, certify)


def is_lean(
    m1: Machine,
    m2: Machine,
    game: StageGame,
    measure: Measure,
    bound: SearchBound | None = None,
    certify: str = "auto",
) -> Verdict:
    """Nash plus: no strictly simpler unilateral deviation preserves Nash.

    A player only counts a simplification against leanness when the
    simplified pair would still be a Nash equilibrium, so a simplification
    that invites the opponent to deviate does not refute leanness.
    """
    return _refinement_verdict("lean", m1, m2, game, measure, bound, certify)


def simplify_to_lean(
    m1: Machine,
    m2: Machine,
    game: StageGame,
    measure: Measure,
    bound: SearchBound | None = None,
) -> tuple[Machine, Machine]:
    """Descend from a Nash pair to a lean-within-bound pair.

    Repeatedly replaces one side by the first strictly simpler machine
    (measure ascending, then canonical order) that keeps the pair at Nash;
    measures are nonnegative integers, so the descent terminates with
    componentwise measure at most the input's.
    """
    if is_nash(m1, m2, game).result != HOLDS:
        raise ValueError("simplify_to_lean requires a Nash equilibrium as input")
    current = [m1, m2]
    changed = True
    while changed:
        changed = False
        for i in (1, 2):
            m_i = current[i - 1]
            m_j = current[2 - i]
            M = measure_value(m_i, game, measure)
            if M == 0:
                continue
            seq = _pair_sequence(current[0], current[1])
            cert = _side_certificate(game, i, m_j, measure, M, seq, "lean", "auto")
            if cert is not None:
                continue
            side_bound = bound if bound is not None else default_bound(m_i, game, measure)
            dev = _find_deviation(game, i, M, m_j, measure, side_bound, require_nash=True)
            if dev is not None:
                current[i - 1] = dev
                changed = True
                break
    return current[0], current[1]


def ar_implies_lean(
    m1: Machine,
    m2: Machine,
    game: StageGame,
    measure: Measure,
    bound: SearchBound | None = None,
) -> bool:
    """Audit helper: an AR verdict at a bound implies a lean verdict at it."""
    ar = is_abreu_rubinstein(m1, m2, game, measure, bound)
    if not ar.holds:
        return True
    return is_lean(m1, m2, game, measure, bound).holds

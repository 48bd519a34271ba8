"""Finite action sequences: payoffs, trigger constructions, certificates.

The certificate predicates (irreducibility, rigidity, foolability) are
combinatorial conditions on a finite sequence of action pairs that bound,
from below, how many states any machine reproducing the repeated sequence
must play, or refute equilibrium for machines that are too small.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .games import (
    ParseError,
    PayoffProfile,
    PlayerId,
    StageGame,
    forcing_actions,
    is_strictly_enforceable,
    opponent,
)
from .machines import Machine, Play, suffix_partition


@dataclass(frozen=True)
class ActionSeq:
    """A nonempty finite sequence of action pairs."""

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty action sequence")

    def __len__(self) -> int:
        return len(self.entries)

    def action_at(self, t: int) -> tuple[str, str]:
        """Entry at 1-based time t of the infinite repetition."""
        return self.entries[(t - 1) % len(self.entries)]

    def rotation(self, offset: int) -> "ActionSeq":
        """The rotation starting at 1-based position `offset`."""
        k = len(self.entries)
        if not 1 <= offset <= k:
            raise ValueError(f"rotation offset must be in 1..{k}")
        i = offset - 1
        return ActionSeq(self.entries[i:] + self.entries[:i])

    def __str__(self) -> str:
        return " ".join(f"({a},{b})" for a, b in self.entries)


_TERM_RE = re.compile(r"^(?:(\d+)\*)?\(([^,()\s]+),([^,()\s]+)\)$")


def parse_sequence(text: str, game: StageGame | None = None) -> ActionSeq:
    """Parse whitespace-separated terms "N*(a1,a2)" or "(a1,a2)"."""
    entries: list[tuple[str, str]] = []
    for term in text.split():
        m = _TERM_RE.match(term)
        if not m:
            raise ParseError(f"bad sequence term {term!r}")
        count = int(m.group(1)) if m.group(1) else 1
        if count < 1:
            raise ParseError(f"repetition count must be positive in {term!r}")
        entries.extend([(m.group(2), m.group(3))] * count)
    if not entries:
        raise ParseError("empty action sequence")
    seq = ActionSeq(tuple(entries))
    if game is not None:
        validate_sequence(seq, game)
    return seq


def validate_sequence(seq: ActionSeq, game: StageGame) -> None:
    for a1, a2 in seq.entries:
        if a1 not in game.actions1:
            raise ValueError(f"action {a1!r} not in player 1's actions")
        if a2 not in game.actions2:
            raise ValueError(f"action {a2!r} not in player 2's actions")


def seq_payoff(seq: ActionSeq, game: StageGame) -> PayoffProfile:
    k = len(seq)
    p1 = sum((game.u(1, *e) for e in seq.entries), Fraction(0)) / k
    p2 = sum((game.u(2, *e) for e in seq.entries), Fraction(0)) / k
    return PayoffProfile(p1, p2)


def is_strictly_enforceable_seq(seq: ActionSeq, game: StageGame) -> bool:
    return is_strictly_enforceable(game, seq_payoff(seq, game))


def _punish_action(game: StageGame, player: PlayerId) -> str:
    # several actions may force the opponent's minmax; pick the first in
    # the game's declared order so fixtures are reproducible
    return forcing_actions(game, player)[0]


def build_trigger_machines(seq: ActionSeq, game: StageGame) -> tuple[Machine, Machine]:
    """Machines that jointly play the repeated sequence and punish deviations.

    Each machine has one normal state per sequence position plus an
    absorbing punish state whose output holds the opponent at minmax.  Any
    observed deviation from the sequence sends the machine to the punish
    state forever.  Only defined for strictly enforceable sequences.
    """
    validate_sequence(seq, game)
    if not is_strictly_enforceable_seq(seq, game):
        raise ValueError(
            f"sequence payoff {seq_payoff(seq, game)} is not strictly enforceable; "
            "the punish state could not deter deviations"
        )
    k = len(seq)
    machines = []
    for player in (1, 2):
        opp = opponent(player)
        inputs = game.actions(opp)
        states = tuple(str(n) for n in range(1, k + 1)) + ("punish",)
        output = {str(n): seq.entries[n - 1][player - 1] for n in range(1, k + 1)}
        output["punish"] = _punish_action(game, player)
        transition: dict[tuple[str, str], str] = {}
        for n in range(1, k + 1):
            expected = seq.entries[n - 1][opp - 1]
            nxt = str(n + 1) if n < k else "1"
            for a in inputs:
                transition[(str(n), a)] = nxt if a == expected else "punish"
        for a in inputs:
            transition[("punish", a)] = "punish"
        machines.append(
            Machine(player, states, "1", output, transition, name=f"trigger{player}")
        )
    return machines[0], machines[1]


def build_internal_threat_machines(
    k_cd: int, k_dd: int, k_dc: int, game: StageGame
) -> tuple[Machine, Machine]:
    """Punishment routed through the cycle itself instead of an absorbing state.

    For the sequence k_cd*(C,D), k_dd*(D,D), k_dc*(D,C) over the PD action
    names, each machine has exactly k = k_cd+k_dd+k_dc states.  Where the
    opponent is due to defect the machine advances regardless; where the
    opponent is due to cooperate, a defection is answered by jumping to the
    machine's first mutual-defection-facing state, so every state stays on
    the main cycle and no extra threat state is needed.
    """
    if min(k_cd, k_dd, k_dc) < 1:
        raise ValueError("all three block lengths must be positive")
    for player in (1, 2):
        if tuple(game.actions(player)) != ("C", "D"):
            raise ValueError("internal-threat construction is defined for C/D action sets")
    entries = (
        [("C", "D")] * k_cd + [("D", "D")] * k_dd + [("D", "C")] * k_dc
    )
    seq = ActionSeq(tuple(entries))
    if not is_strictly_enforceable_seq(seq, game):
        raise ValueError(
            f"block lengths ({k_cd},{k_dd},{k_dc}) give payoff {seq_payoff(seq, game)}, "
            "not strictly enforceable"
        )
    k = len(seq)
    rescue = {1: k_cd + k_dd + 1, 2: 1}
    machines = []
    for player in (1, 2):
        opp = opponent(player)
        states = tuple(str(n) for n in range(1, k + 1))
        output = {str(n): seq.entries[n - 1][player - 1] for n in range(1, k + 1)}
        transition: dict[tuple[str, str], str] = {}
        for n in range(1, k + 1):
            nxt = str(n + 1) if n < k else "1"
            if seq.entries[n - 1][opp - 1] == "D":
                transition[(str(n), "C")] = nxt
                transition[(str(n), "D")] = nxt
            else:
                transition[(str(n), "C")] = nxt
                transition[(str(n), "D")] = str(rescue[player])
        machines.append(
            Machine(player, states, "1", output, transition, name=f"internal{player}")
        )
    return machines[0], machines[1]


def _suffix_source(source: ActionSeq | Play):
    if isinstance(source, ActionSeq):
        return (), source.entries
    return source.preperiod_actions, source.cycle_actions


def incompatible(
    source: ActionSeq | Play, t1: int, t2: int, player: PlayerId
) -> bool:
    """Whether times t1, t2 force distinct states on `player`'s machine.

    True when there is an offset at which the two own-action continuations
    differ while the opponent's actions agreed strictly earlier.  A scan of
    length preperiod+cycle decides it: full agreement that far means the
    suffixes agree forever.
    """
    if t1 < 1 or t2 < 1:
        raise ValueError("time points are 1-based")
    pre, cyc = _suffix_source(source)
    horizon = len(pre) + len(cyc)
    own = player - 1
    other = opponent(player) - 1

    def at(t: int) -> tuple[str, str]:
        if t <= len(pre):
            return pre[t - 1]
        return cyc[(t - len(pre) - 1) % len(cyc)]

    for n in range(horizon):
        a, b = at(t1 + n), at(t2 + n)
        if a[own] != b[own]:
            return True
        if a[other] != b[other]:
            return False
    return False


def suffix_classes(seq: ActionSeq) -> tuple[tuple[int, ...], ...]:
    """Suffix-equality classes of positions 1..k in the repeated sequence."""
    return suffix_partition((), seq.entries)


def is_irreducible(seq: ActionSeq, player: PlayerId) -> bool:
    """All pairs of distinct positions are incompatible for `player`.

    Positions sharing an action suffix can never be incompatible, so a
    sequence whose repetition has fewer suffix classes than entries is
    not irreducible.
    """
    classes = suffix_classes(seq)
    if len(classes) < len(seq):
        return False
    reps = [cls[0] for cls in classes]
    return all(
        incompatible(seq, reps[i], reps[j], player)
        for i in range(len(reps))
        for j in range(i + 1, len(reps))
    )


class RigidityVerdict(NamedTuple):
    rigid: bool
    rotation_offset: int | None
    prefix_len: int | None


def is_rigid(
    seq: ActionSeq, player: PlayerId, outputs: frozenset[str] | set[str], game: StageGame
) -> RigidityVerdict:
    """No proper prefix between two `outputs` positions matches the mean payoff.

    Scans every rotation and every proper prefix whose first entry and
    successor entry both show `player` using an action from `outputs`; the
    opponent's mean over such a prefix must differ from the sequence mean.
    On failure the violating rotation offset and prefix length are returned.
    """
    outputs = frozenset(outputs)
    if not outputs <= set(game.actions(player)):
        raise ValueError("outputs must be a subset of the player's actions")
    j = opponent(player)
    target = seq_payoff(seq, game).for_player(j)
    k = len(seq)
    own = player - 1
    for offset in range(1, k + 1):
        rotated = seq.rotation(offset)
        total = Fraction(0)
        for n in range(1, k):
            total += game.u(j, *rotated.entries[n - 1])
            if rotated.entries[0][own] in outputs and rotated.entries[n][own] in outputs:
                if total / n == target:
                    return RigidityVerdict(False, offset, n)
    return RigidityVerdict(True, None, None)


class FoolabilityWitness(NamedTuple):
    rotation_offset: int
    rotation: ActionSeq
    action: str


def is_foolable(
    seq: ActionSeq, player: PlayerId, game: StageGame
) -> FoolabilityWitness | None:
    """Search for a rotation and opponent action that beat the sequence mean.

    A witness is a rotation and an opponent action s' such that every tail
    segment of the rotation, with its final entry's opponent component replaced
    by s', gives the opponent a strictly higher mean than the sequence
    itself.  Returns the first witness in rotation-then-action order, or
    None.
    """
    j = opponent(player)
    target = seq_payoff(seq, game).for_player(j)
    k = len(seq)
    for offset in range(1, k + 1):
        rotated = seq.rotation(offset)
        last_own = rotated.entries[k - 1][player - 1]
        for s_prime in game.actions(j):
            pair = (last_own, s_prime) if player == 1 else (s_prime, last_own)
            bonus = game.u(j, *pair)
            ok = True
            for n in range(1, k + 1):
                total = sum(
                    (game.u(j, *rotated.entries[m - 1]) for m in range(n, k)), Fraction(0)
                )
                if (total + bonus) / (k - n + 1) <= target:
                    ok = False
                    break
            if ok:
                return FoolabilityWitness(offset, rotated, s_prime)
    return None

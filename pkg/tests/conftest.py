import random
from fractions import Fraction

import pytest

from leanfa import (
    Machine,
    PRISONERS_DILEMMA,
    PayoffProfile,
    StageGame,
    constant_machine,
    grim_trigger,
)


@pytest.fixture(scope="session")
def pd() -> StageGame:
    return PRISONERS_DILEMMA


@pytest.fixture(scope="session")
def grim1() -> Machine:
    return grim_trigger(1)


@pytest.fixture(scope="session")
def grim2() -> Machine:
    return grim_trigger(2)


@pytest.fixture(scope="session")
def always(pd):
    def make(player: int, action: str) -> Machine:
        return constant_machine(player, action, pd.actions(3 - player))

    return make


def random_game(rng: random.Random, size1: int = 2, size2: int = 2) -> StageGame:
    actions1 = tuple(f"a{i}" for i in range(size1))
    actions2 = tuple(f"b{i}" for i in range(size2))
    table = {
        (p, q): PayoffProfile(
            Fraction(rng.randint(-8, 8), rng.randint(1, 4)),
            Fraction(rng.randint(-8, 8), rng.randint(1, 4)),
        )
        for p in actions1
        for q in actions2
    }
    return StageGame("random", actions1, actions2, table)


def random_machine(rng: random.Random, player: int, game: StageGame, n_states: int) -> Machine:
    own = game.actions(player)
    inputs = game.actions(3 - player)
    states = tuple(f"s{i}" for i in range(n_states))
    output = {q: rng.choice(own) for q in states}
    transition = {(q, a): rng.choice(states) for q in states for a in inputs}
    return Machine(player, states, "s0", output, transition)

import random

import pytest

from mkep.domain import BloodGroup, CompatibilityGraph, HlaProfile, Pair, blood_compatible
from mkep.scoring import match_score

WEIGHTS = (10.0, 25.5, 47.5, 60.25, 88.75, 110.0, 150.0)


def hla(*values):
    return HlaProfile.from_sequence(values)


SAME = hla(1, 2, 3, 4, 5, 6)


def make_pair(pid, registry=0, donor_bg="A", recipient_bg="B", donor_hla=SAME, recipient_hla=SAME,
              donor_age=40, recipient_age=40, arrival_round=0, self_compatible=None, crossmatch_positive=None):
    """Pair with consistent self-compatibility fields filled in."""
    dbg, rbg = BloodGroup.parse(donor_bg), BloodGroup.parse(recipient_bg)
    abo = blood_compatible(dbg, rbg)
    if self_compatible is None:
        self_compatible = abo and crossmatch_positive is False
    if crossmatch_positive is None:
        crossmatch_positive = abo and not self_compatible
    own = match_score(donor_hla, recipient_hla, donor_age, recipient_age) if self_compatible else None
    return Pair(pid, registry, dbg, rbg, donor_hla, recipient_hla, donor_age, recipient_age,
                arrival_round, self_compatible, own, crossmatch_positive)


def random_graph(rng: random.Random, n: int, density: float, n_registries: int) -> CompatibilityGraph:
    registry_of = {v: rng.randrange(n_registries) for v in range(n)}
    arcs = {
        (i, j): rng.choice(WEIGHTS)
        for i in range(n)
        for j in range(n)
        if i != j and rng.random() < density
    }
    return CompatibilityGraph(registry_of, arcs)


@pytest.fixture
def rng():
    return random.Random(12345)


def config_dict(n_registries=2, dp=0.2, arrival=(5, 10), bound=3, rounds=4, replications=2, seed=7, **top):
    data = {
        "name": "test",
        "registries": [
            {"cycle_bound": bound, "arrival": list(arrival), "dropout_probability": dp}
            for _ in range(n_registries)
        ],
        "rounds": rounds,
        "replications": replications,
        "seed": seed,
    }
    data.update(top)
    return data


def make_config(**kwargs):
    from mkep.config import config_from_dict

    return config_from_dict(config_dict(**kwargs))


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(request):
    """Call with (passed, detail); records one line per acceptance criterion."""

    def record(passed, detail):
        line = f"{request.node.name}: {'PASS' if passed else 'FAIL'} - {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkep.domain import BloodGroup, ContractError, blood_compatible
from mkep.generator import CrossTissue, ExplicitCrossTissue, GeneratorConfig, PairGenerator
from mkep.graph import build_graph
from mkep.scoring import edge_weight

from conftest import hla, make_pair

NEVER = ExplicitCrossTissue([])


def all_negative(a, b):
    return False


def test_two_pair_swap():
    pool = [make_pair(1, donor_bg="A", recipient_bg="B"), make_pair(2, donor_bg="B", recipient_bg="A")]
    g = build_graph(pool, all_negative)
    assert set(g.arcs) == {(1, 2), (2, 1)}


def test_single_pair_has_no_arcs():
    g = build_graph([make_pair(1, donor_bg="O", recipient_bg="O", crossmatch_positive=True)], all_negative)
    assert g.vertices == (1,) and not g.arcs


def test_duplicate_ids_rejected():
    with pytest.raises(ContractError):
        build_graph([make_pair(1), make_pair(1)], all_negative)


def test_positive_crossmatch_removes_arc():
    pool = [make_pair(1, donor_bg="A", recipient_bg="B"), make_pair(2, donor_bg="B", recipient_bg="A")]
    g = build_graph(pool, ExplicitCrossTissue([(1, 2)]))
    assert set(g.arcs) == {(1, 2)}


def self_compatible_target(own_age_gap):
    # own donor: 2 mismatches (70) plus the given age gap
    return make_pair(
        9, donor_bg="O", recipient_bg="A", donor_hla=hla(1, 9, 3, 9, 5, 6),
        recipient_hla=hla(1, 2, 3, 4, 5, 6), donor_age=40 + own_age_gap, recipient_age=40,
        crossmatch_positive=False,
    )


def test_self_compatible_recipient_filter():
    target = self_compatible_target(8)  # own score 70 + 40 = 110
    assert target.own_match_score == 110
    worse = make_pair(1, donor_bg="A", donor_hla=hla(1, 9, 3, 9, 5, 6), donor_age=48)  # 110
    better = make_pair(2, donor_bg="A", donor_hla=hla(1, 2, 3, 4, 5, 6), donor_age=44)  # 100 + 45
    g = build_graph([worse, better, target], all_negative)
    assert not g.has_arc(1, 9)
    assert g.weight(2, 9) == 145


def test_own_score_120_threshold():
    target = make_pair(9, donor_bg="O", recipient_bg="A", donor_hla=hla(1, 9, 3, 4, 5, 6),
                       recipient_hla=hla(1, 2, 3, 4, 5, 6), donor_age=52, recipient_age=40,
                       crossmatch_positive=False)
    assert target.own_match_score == 120
    at_110 = make_pair(1, donor_bg="A", donor_hla=hla(1, 9, 3, 9, 5, 6), donor_age=48)
    at_130 = make_pair(2, donor_bg="A", donor_hla=hla(1, 9, 3, 4, 5, 6), donor_age=44)
    assert edge_weight(at_110, target) == 110 and edge_weight(at_130, target) == 130
    g = build_graph([at_110, at_130, target], all_negative)
    assert not g.has_arc(1, 9) and g.has_arc(2, 9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 25))
def test_arc_rule_oracle(seed, n):
    from mkep.domain import BloodGroupDistribution, Registry

    dist = BloodGroupDistribution((0.25,) * 4, (0.25,) * 4)
    regs = [Registry(k, f"r{k}", 3, 0, 0, dist, 0.0) for k in range(2)]
    gen = PairGenerator(GeneratorConfig(), seed)
    pool = [gen.draw_pair(regs[i % 2], 0) for i in range(n)]
    ct = CrossTissue(seed, 0.3)
    g = build_graph(pool, ct)
    expected = set()
    for i in pool:
        for j in pool:
            if i.id == j.id or not blood_compatible(i.donor_bg, j.recipient_bg) or ct(i, j):
                continue
            if j.self_compatible and edge_weight(i, j) <= j.own_match_score:
                continue
            expected.add((i.id, j.id))
    assert set(g.arcs) == expected
    by_id = {p.id: p for p in pool}
    assert all(w == edge_weight(by_id[i], by_id[j]) for (i, j), w in g.arcs.items())
    assert {v: g.registry_of[v] for v in g.vertices} == {p.id: p.registry for p in pool}

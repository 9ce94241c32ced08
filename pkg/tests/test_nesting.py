import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import maximally_coupled_tree

from sigmaspace.complex import enumerate_orthants, leaf_map_types
from sigmaspace.nesting import (
    IncompatibleError,
    LeafMap,
    NestedTree,
    NestingSequence,
    admissible_sequences,
    annotated_nesting_sequence,
    canonical_nesting_sequence,
    check_compatibility,
    concordance,
    cospeciation_events,
    decoupled_sequence,
    interleaved_sequence,
    is_admissible,
    is_maximally_coupled,
    nesting_sequence,
    poset_covers,
    poset_leq,
    realize_parasite_map,
)
from sigmaspace.trees import (
    parse_newick,
)

BIJ3 = LeafMap.parse("1:A,2:B,3:C")


def nested(host, parasite, lm):
    return NestedTree(parse_newick(host), parse_newick(parasite), lm)


@pytest.fixture
def interleaved_tree():
    return nested("((A:1,B:1):2,C:3);", "((1:1.5,2:1.5):2,3:3.5);", BIJ3)


@pytest.fixture
def decoupled_tree():
    return nested("((A:1,B:1):2,C:3);", "((1:3.5,3:3.5):0.5,2:4);", BIJ3)


def test_leaf_map_parse_and_degrees():
    lm = LeafMap.parse("1:A,2:A,3:B")
    assert lm.host_labels == ("A", "B")
    assert (lm.n, lm.m, lm.host_degree, lm.parasite_multiplicity) == (2, 3, 2, 1)
    assert LeafMap.parse("1:A,2:A", host_labels=["A", "B"]).host_degree == 1


def test_leaf_map_must_be_total():
    host = parse_newick("(A:1,B:1);")
    para = parse_newick("(1:1,2:1);")
    with pytest.raises(ValueError):
        NestedTree(host, para, LeafMap.parse("1:A"))


def test_compatibility_examples():
    host = parse_newick("((A:1,B:1):1,C:2);")
    assert check_compatibility(host, parse_newick("((1:1,2:1):1,3:2);"), BIJ3)
    assert check_compatibility(host, parse_newick("((1:1.5,2:1.5):1.5,3:3);"), BIJ3)
    h2 = parse_newick("(A:2,B:2);")
    p2 = parse_newick("(1:1,2:1);")
    lm2 = LeafMap.parse("1:A,2:B")
    assert not check_compatibility(h2, p2, lm2)
    with pytest.raises(IncompatibleError) as err:
        NestedTree(h2, p2, lm2)
    assert err.value.pair == ("1", "2") and err.value.margin == pytest.approx(2.0)


def test_figure_sequences(interleaved_tree, decoupled_tree):
    assert str(nesting_sequence(interleaved_tree)) == "HPHP"
    assert str(nesting_sequence(decoupled_tree)) == "HHPP"
    assert str(annotated_nesting_sequence(interleaved_tree)) == "H P^c H P^c"
    assert str(annotated_nesting_sequence(decoupled_tree)) == "H H P^c P^d"


def test_sigma2_is_hp():
    t = nested("(A:1,B:1);", "(1:2,2:2);", LeafMap.parse("1:A,2:B"))
    assert str(nesting_sequence(t)) == "HP"


def test_canonical_of_cone_point_and_simultaneous_split():
    cone = nested("(A:0,B:0);", "(1:0,2:0);", LeafMap.parse("1:A,2:B"))
    assert str(canonical_nesting_sequence(cone)) == "H P^c"
    t = nested("((A:1,B:1):1,C:2);", "((1:1,2:1):2,3:3);", BIJ3)
    seq = canonical_nesting_sequence(t)
    assert str(seq).startswith("H P^c")
    assert cospeciation_events(t).realized == (2,)


def test_canonical_agrees_with_annotated_on_resolved(interleaved_tree, decoupled_tree):
    for t in (interleaved_tree, decoupled_tree):
        assert canonical_nesting_sequence(t) == annotated_nesting_sequence(t)


def test_admissibility_examples():
    assert is_admissible("HPHP", BIJ3)
    assert not is_admissible("HPPH", BIJ3)
    lm = LeafMap.parse("1:A,2:A,3:B")
    assert is_admissible("PHP", lm)
    for t in leaf_map_types(3, 3) + leaf_map_types(2, 3):
        assert is_admissible(decoupled_sequence(t), t)


def test_interleaved_and_decoupled():
    assert str(interleaved_sequence(BIJ3)) == "HPHP"
    assert str(interleaved_sequence(LeafMap.parse("1:A,2:A,3:B"))) == "PHP"
    assert str(decoupled_sequence(LeafMap.parse("1:A,2:B", host_labels="ABC"))) == "HHP"


def test_poset_examples():
    assert poset_covers("HPHP") == [NestingSequence("HHPP")]
    assert poset_covers("HHPP") == []
    assert poset_covers("PHP") == [NestingSequence("HPP")]
    assert poset_leq("HPHP", "HHPP")
    assert poset_leq("HPHP", "HPHP")
    assert not poset_leq("HHPP", "HPHP")


@pytest.mark.parametrize("lm", [t for total in range(2, 7) for n in range(1, total)
                                for t in leaf_map_types(n, total - n)], ids=lambda t: t.format())
def test_admissibility_matches_enumeration(lm):
    carried = {o.sequence for o in enumerate_orthants(lm)}
    letters = ["H"] * (lm.n - 1) + ["P"] * (lm.m - 1)
    for s in {"".join(p) for p in itertools.permutations(letters)}:
        assert is_admissible(s, lm) == (s in carried), s
    for s in carried:
        assert poset_leq(interleaved_sequence(lm), s)
        assert poset_leq(s, decoupled_sequence(lm))
    assert {str(s) for s in admissible_sequences(lm)} == carried


def test_parasite_map_endpoints(interleaved_tree):
    t = interleaved_tree
    leaf = realize_parasite_map(t, "1", 0.0)
    assert leaf.descendants == {"A"} and leaf.time == 0.0
    root = realize_parasite_map(t, "2", t.host.height)
    assert root.descendants == {"A", "B", "C"}
    above = realize_parasite_map(t, "3", t.parasite.height)
    assert above.beyond_root


def test_concordance_examples(decoupled_tree):
    same = nested("((A:1,B:1):1,C:2);", "((1:1,2:1):1,3:2);", BIJ3)
    c = concordance(same)
    assert np.all(c.M == 0) and c.maximally_coupled
    assert np.all(concordance(decoupled_tree).M == 0)
    assert not is_maximally_coupled(decoupled_tree)


def test_cospeciation_counts(interleaved_tree):
    rep = cospeciation_events(interleaved_tree)
    assert rep.realized == () and rep.potential == (2, 4)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["1:A,2:B", "1:A,2:B,3:C", "1:A,2:A,3:B", "1:A,2:B,3:C,4:D",
                        "1:A,2:A,3:B,4:C", "1:A,2:B,3:B,4:C,5:C"]),
       st.integers(0, 2**32 - 1))
def test_maximally_coupled_surjective_realizes_dh_minus_one(spec, seed):
    lm = LeafMap.from_dict(dict(x.split(":") for x in spec.split(",")))
    nt = maximally_coupled_tree(lm, np.random.default_rng(seed))
    assert is_maximally_coupled(nt)
    assert len(cospeciation_events(nt).realized) == lm.host_degree - 1

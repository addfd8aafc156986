import pytest

from privcalc.kernel import (
    DConst, HIDDEN, Known, NIL, PAnon, PIf, PInp, PNil, POut, PPair, PPar,
    PRepl, PRes, PStore, PVar, PrivateData, TConst, TDual, TName, TPriv,
    alpha_eq, free_names, normalize,
)
from privcalc.encoding import (
    BRANCH_LABELS, EncodingError, check_correspondence, core_canonical,
    core_step, encode, render_core, select, branch,
)
from privcalc.syntax import parse_process

import gen


def priv(ident, tok):
    return TPriv(PrivateData(ident, DConst(tok)))


STORE = PStore("r", PrivateData(Known("id"), DConst("c")))


class TestEncode:
    def test_store_becomes_state_cell_with_server(self):
        core = encode(STORE)
        txt = render_core(core)
        assert txt.startswith("(new cell)")
        assert "|> { rd:" in txt and "wr:" in txt
        assert "if sw = id" in txt  # the write-side identity check

    def test_nil_homomorphic(self):
        assert encode(NIL) == NIL

    def test_reference_read_opens_session(self):
        p = PPar(STORE, PInp(TName("r"), (PPair("x", "y"),), NIL))
        txt = render_core(encode(p))
        assert "r!<a>. a <| rd. a?({x # y}). 0" in txt

    def test_anonymous_read_erases_identity(self):
        p = PPar(STORE, PInp(TName("r"), (PAnon("y"),), NIL))
        txt = render_core(encode(p))
        assert "<| rd" in txt and "# y}). 0" in txt

    def test_write_retry_loop(self):
        p = PPar(STORE, POut(TName("r"), (priv(Known("id"), "c2"),), NIL))
        txt = render_core(encode(p))
        assert "<| wr" in txt and "ok:" in txt and "fail:" in txt

    def test_channel_io_untouched(self):
        p = POut(TName("a"), (TConst("k"),), PInp(TName("a"), (PVar("v"),), NIL))
        assert encode(p) == p

    def test_dual_reference_rejected(self):
        p = POut(TDual("r"), (priv(Known("id"), "c"),), NIL)
        with pytest.raises(EncodingError):
            encode(p, refs=frozenset({"r"}))

    def test_uninitialized_store_rejected(self):
        from privcalc.kernel import IVar, DVar
        p = PStore("r", PrivateData(IVar("x"), DVar("y")))
        with pytest.raises(EncodingError):
            encode(p)

    def test_homomorphic_over_par_res_repl_if(self):
        reader = PInp(TName("r"), (PPair("x", "y"),), NIL)
        p = PPar(STORE, reader)
        enc = encode(p)
        assert isinstance(enc, PPar)
        assert alpha_eq(enc.left, encode(STORE))
        assert alpha_eq(enc.right, encode(reader, refs=frozenset({"r"})))
        q = PRepl(PIf("=", TConst("a"), TConst("a"), reader, NIL))
        enc_q = encode(q, refs=frozenset({"r"}))
        assert isinstance(enc_q, PRepl) and isinstance(enc_q.body, PIf)

    def test_fresh_name_hygiene(self):
        for p in gen.store_programs():
            assert free_names(encode(p)) == free_names(p)


class TestCoreStep:
    def test_label_synchronization(self):
        p = PPar(select(TName("a"), "rd", NIL),
                 branch(TName("a"), {"rd": POut(TName("b"), (TConst("k"),), NIL),
                                     "wr": NIL}, "lbl"))
        succs = [core_canonical(s) for s in core_step(p)]
        assert len(succs) == 1
        assert succs[0] == core_canonical(POut(TName("b"), (TConst("k"),), NIL))

    def test_plain_communication(self):
        p = PPar(POut(TName("a"), (TConst("k"),), NIL),
                 PInp(TName("a"), (PVar("x"),), POut(TName("b"), (TVarOr("x"),), NIL)))
        succs = core_step(p)
        assert len(succs) == 1

    def test_encoded_read_starts_with_handshake(self):
        p = PPar(STORE, PInp(TName("r"), (PPair("x", "y"),), NIL))
        enc = encode(p)
        firsts = core_step(enc)
        assert firsts  # the cell hand-off and the session handshake race
        assert all(isinstance(s, (PPar, PRes)) for s in firsts)


def TVarOr(x):
    from privcalc.kernel import TVar
    return TVar(x)


class TestCorrespondence:
    def test_store_read_pair(self):
        p = PPar(STORE, PInp(TName("r"), (PPair("x", "y"),), NIL))
        report = check_correspondence(p, 12)
        assert report.ok and report.source_steps == 1

    def test_mismatched_write_reverts(self):
        p = PPar(STORE, POut(TName("r"), (priv(Known("other"), "c2"),), NIL))
        report = check_correspondence(p, 12)
        assert report.ok
        assert report.source_steps == 0
        assert "revert" in report.complete

    def test_nil_vacuous(self):
        report = check_correspondence(NIL, 4)
        assert report.ok and report.source_steps == 0

    def test_sample_programs(self):
        for p in gen.store_programs()[:6]:
            report = check_correspondence(p, 12)
            assert report.ok, (render_core(p), report.render())

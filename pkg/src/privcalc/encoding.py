"""Translation of store processes and reference I/O into core pi with
selection and branching, plus a bounded operational-correspondence check.

Select and branch are represented over the kernel syntax with the standard
labels-as-constants idiom: `s <| lbl. P` is an output of the label constant
and `s |> {lbl1: P1, lbl2: P2}` is an input followed by a label dispatch.
Label synchronization is then ordinary channel communication, so the kernel
normalizer and the transition engine apply unchanged to core terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .kernel import (
    DConst, DVar, IVar, Known, NIL, PAnon, PIf, PInp, PNil, POut, PPair,
    PPar, PRepl, PRes, PStore, PVar, PrivateData, Process, TConst, TDual,
    TName, TPriv, TVar, Term, alpha_eq, free_atoms, fresh_name, normalize,
    par_components,
)
from .syntax import render_process, render_term
from .semantics import _eval_cond, tau_successors

__all__ = [
    "EncodingError", "BRANCH_LABELS", "select", "branch",
    "encode", "core_step", "core_canonical", "render_core",
    "CorrespondenceReport", "check_correspondence",
]

BRANCH_LABELS = ("rd", "wr", "ok", "fail")


class EncodingError(Exception):
    pass


def select(subject: Term, label: str, cont: Process) -> Process:
    if label not in BRANCH_LABELS:
        raise EncodingError(f"unknown branch label {label}")
    return POut(subject, (TConst(label),), cont)


def branch(subject: Term, arms: dict[str, Process], dispatch_var: str) -> Process:
    """An input followed by a label dispatch; unknown labels dead-end."""
    body: Process = NIL
    for label, cont in reversed(list(arms.items())):
        if label not in BRANCH_LABELS:
            raise EncodingError(f"unknown branch label {label}")
        body = PIf("=", TVar(dispatch_var), TConst(label), cont, body)
    return PInp(subject, (PVar(dispatch_var),), body)


class _Fresh:
    def __init__(self, avoid: Iterable[str]):
        self.avoid = set(avoid) | set(BRANCH_LABELS) | {"unit"}

    def __call__(self, base: str) -> str:
        n = fresh_name(base, self.avoid)
        self.avoid.add(n)
        return n


def _store_refs(p: Process) -> frozenset[str]:
    out: set[str] = set()

    def go(nd):
        match nd:
            case PStore(ref, _):
                out.add(ref)
            case POut(_, _, cont) | PInp(_, _, cont) | PRes(_, _, cont) | PRepl(cont):
                go(cont)
            case PPar(l, r):
                go(l)
                go(r)
            case PIf(_, _, _, t, e):
                go(t)
                go(e)
            case _:
                pass

    go(p)
    return frozenset(out)


def encode(p: Process, refs: Optional[frozenset[str]] = None) -> Process:
    """A store becomes a state cell with a replicated server offering
    rd/wr; reference reads open a session and select rd; reference writes
    run a retry loop selecting wr. Everything else is homomorphic."""
    if refs is None:
        refs = _store_refs(p)
    fresh = _Fresh(free_atoms(p) | _all_atoms(p))

    def enc(nd: Process) -> Process:
        match nd:
            case PNil():
                return nd
            case PStore(ref, datum):
                if not datum.is_constant:
                    raise EncodingError(
                        f"store {ref} holds a non-constant datum; not encodable")
                return _encode_store(ref, datum, fresh)
            case PInp(subject, patterns, cont):
                if isinstance(subject, TDual):
                    raise EncodingError("dual endpoints are not encodable user code")
                is_ref = isinstance(subject, TName) and subject.name in refs
                if is_ref:
                    if len(patterns) != 1 or isinstance(patterns[0], PVar):
                        raise EncodingError(
                            f"reference {render_term(subject)} must be read with a "
                            "private-data pattern")
                    return _encode_read(subject, patterns[0], enc(cont), fresh)
                return replace(nd, cont=enc(cont))
            case POut(subject, objects, cont):
                if isinstance(subject, TDual):
                    raise EncodingError("dual endpoints are not encodable user code")
                is_ref = isinstance(subject, TName) and subject.name in refs
                if is_ref:
                    if len(objects) != 1 or not isinstance(objects[0], TPriv):
                        raise EncodingError(
                            f"reference {render_term(subject)} must be written with "
                            "private data")
                    return _encode_write(subject, objects[0], enc(cont), fresh)
                return replace(nd, cont=enc(cont))
            case PRes(name, annot, body):
                return replace(nd, body=enc(body))
            case PPar(l, r):
                return replace(nd, left=enc(l), right=enc(r))
            case PRepl(body):
                return replace(nd, body=enc(body))
            case PIf(_, _, _, then, els):
                return replace(nd, then=enc(then), els=enc(els))
        raise EncodingError(f"cannot encode {nd!r}")

    return enc(p)


def _all_atoms(p: Process) -> set[str]:
    """Every token in the term, bound or free, to keep fresh names clear."""
    out: set[str] = set()

    def term(t: Term):
        match t:
            case TName(n) | TDual(n) | TVar(n):
                out.add(n)
            case TConst(c):
                out.add(c)
            case TPriv(pd):
                if isinstance(pd.identity, Known):
                    out.add(pd.identity.ident)
                elif isinstance(pd.identity, IVar):
                    out.add(pd.identity.name)
                out.add(pd.data.token if isinstance(pd.data, DConst) else pd.data.name)

    def go(nd):
        match nd:
            case PNil():
                pass
            case POut(s, objs, cont):
                term(s)
                for o in objs:
                    term(o)
                go(cont)
            case PInp(s, pats, cont):
                term(s)
                for k in pats:
                    from .kernel import placeholder_vars
                    out.update(placeholder_vars(k))
                go(cont)
            case PRes(n, _, body):
                out.add(n)
                go(body)
            case PPar(l, r):
                go(l)
                go(r)
            case PRepl(body):
                go(body)
            case PIf(_, a, b, t, e):
                term(a)
                term(b)
                go(t)
                go(e)
            case PStore(ref, datum):
                out.add(ref)
                term(TPriv(datum))

    go(p)
    return out


def _encode_store(ref: str, datum: PrivateData, fresh: _Fresh) -> Process:
    # session first, then the cell: an idle store makes no internal step,
    # which the bounded correspondence check needs
    cell = fresh("cell")
    x, y = fresh("sx"), fresh("sy")
    l = fresh("l")
    w, z = fresh("sw"), fresh("sz")
    ident = datum.identity
    assert isinstance(ident, Known)
    serving = PRepl(PInp(TName(ref), (PVar(l),), PInp(TName(cell), (PPair(x, y),), branch(
        TVar(l),
        {
            "rd": POut(TVar(l), (TPriv(PrivateData(IVar(x), DVar(y))),),
                       POut(TName(cell), (TPriv(PrivateData(IVar(x), DVar(y))),), NIL)),
            "wr": PInp(TVar(l), (PPair(w, z),), PIf(
                "=", TVar(w), TConst(ident.ident),
                select(TVar(l), "ok",
                       POut(TName(cell), (TPriv(PrivateData(IVar(w), DVar(z))),), NIL)),
                select(TVar(l), "fail",
                       POut(TName(cell), (TPriv(PrivateData(IVar(x), DVar(y))),), NIL)))),
        },
        fresh("lbl")))))
    init = POut(TName(cell), (TPriv(datum),), NIL)
    return PRes(cell, None, PPar(init, serving))


def _encode_read(subject: Term, pattern, cont: Process, fresh: _Fresh) -> Process:
    a = fresh("a")
    if isinstance(pattern, PAnon):
        # anonymised read: bind a fresh identity and erase it by never using it
        pattern = PPair(fresh("hid"), pattern.data_var)
    return PRes(a, None, POut(subject, (TName(a),),
                              select(TName(a), "rd",
                                     PInp(TName(a), (pattern,), cont))))


def _encode_write(subject: Term, obj: TPriv, cont: Process, fresh: _Fresh) -> Process:
    a, b, e = fresh("a"), fresh("b"), fresh("e")
    x, y = fresh("wx"), fresh("wy")
    z = fresh("wz")
    loop = PRepl(PInp(TName(b), (PPair(x, y),), PRes(e, None, POut(
        subject, (TName(e),),
        select(TName(e), "wr",
               POut(TName(e), (TPriv(PrivateData(IVar(x), DVar(y))),),
                    branch(TName(e),
                           {"ok": POut(TName(a), (TConst("unit"),), NIL),
                            "fail": POut(TName(b),
                                         (TPriv(PrivateData(IVar(x), DVar(y))),), NIL)},
                           fresh("lbl"))))))))
    seed = POut(TName(b), (obj,), NIL)
    waiter = PInp(TName(a), (PVar(z),), cont)
    return PRes(a, None, PRes(b, None, PPar(seed, PPar(loop, waiter))))


# --- core execution and canonical forms ------------------------------------------------

def core_step(p: Process) -> list[Process]:
    """Immediate internal steps of a core term: channel communication plus
    label synchronization (which is channel communication of a label)."""
    return tau_successors(p)


def _eval_ifs(p: Process) -> Process:
    match p:
        case PIf(op, lhs, rhs, then, els):
            v = _eval_cond(op, lhs, rhs)
            if v is True:
                return _eval_ifs(then)
            if v is False:
                return _eval_ifs(els)
            return replace(p, then=_eval_ifs(then), els=_eval_ifs(els))
        case POut(_, _, cont):
            return replace(p, cont=_eval_ifs(cont))
        case PInp(_, _, cont):
            return replace(p, cont=_eval_ifs(cont))
        case PRes(_, _, body):
            return replace(p, body=_eval_ifs(body))
        case PPar(l, r):
            return replace(p, left=_eval_ifs(l), right=_eval_ifs(r))
        case PRepl(body):
            return replace(p, body=_eval_ifs(body))
        case _:
            return p


def _gc_inert(p: Process) -> Process:
    """Remove replicated inputs guarding a restricted name whose only other
    occurrences sit inside those same guarded bodies: nothing can ever send
    on the name first, so the components are inert."""
    match p:
        case PRes(name, annot, body):
            body = _gc_inert(body)
            comps = par_components(body)
            holders = [c for c in comps if name in free_atoms(c)]
            if holders and all(
                    isinstance(c, PRepl) and isinstance(c.body, PInp)
                    and isinstance(c.body.subject, TName)
                    and c.body.subject.name == name
                    for c in holders):
                keep = [c for c in comps if name not in free_atoms(c)]
                if not keep:
                    return NIL
                out = keep[-1]
                for c in reversed(keep[:-1]):
                    out = PPar(c, out)
                return out
            return replace(p, body=body)
        case POut(_, _, cont):
            return replace(p, cont=_gc_inert(cont))
        case PInp(_, _, cont):
            return replace(p, cont=_gc_inert(cont))
        case PPar(l, r):
            return replace(p, left=_gc_inert(l), right=_gc_inert(r))
        case PRepl(body):
            return replace(p, body=_gc_inert(body))
        case PIf(_, _, _, then, els):
            return replace(p, then=_gc_inert(then), els=_gc_inert(els))
        case _:
            return p


def core_canonical(p: Process) -> Process:
    """Canonical form for state comparison: resolved conditionals evaluated,
    inert service loops collected, then structural normalization."""
    prev = None
    cur = normalize(_eval_ifs(p))
    for _ in range(5):
        cur2 = normalize(_gc_inert(_eval_ifs(cur)))
        if cur2 == cur:
            break
        cur = cur2
    return cur


# --- rendering -------------------------------------------------------------------------

def _match_select(p: Process):
    if (isinstance(p, POut) and len(p.objects) == 1
            and isinstance(p.objects[0], TConst)
            and p.objects[0].token in BRANCH_LABELS):
        return p.subject, p.objects[0].token, p.cont
    return None


def _match_branch(p: Process):
    if not (isinstance(p, PInp) and len(p.patterns) == 1
            and isinstance(p.patterns[0], PVar)):
        return None
    var = p.patterns[0].name
    arms: list[tuple[str, Process]] = []
    body = p.cont
    while (isinstance(body, PIf) and body.op == "="
           and isinstance(body.lhs, TVar) and body.lhs.name == var
           and isinstance(body.rhs, TConst) and body.rhs.token in BRANCH_LABELS):
        arms.append((body.rhs.token, body.then))
        body = body.els
    if arms and isinstance(body, PNil):
        return p.subject, arms
    return None


def render_core(p: Process) -> str:
    sel = _match_select(p)
    if sel is not None:
        s, lbl, cont = sel
        c = render_core(cont)
        return f"{render_term(s)} <| {lbl}. {c}"
    bra = _match_branch(p)
    if bra is not None:
        s, arms = bra
        inner = ", ".join(f"{lbl}: {render_core(cont)}" for lbl, cont in arms)
        return f"{render_term(s)} |> {{ {inner} }}"
    match p:
        case POut(s, objs, cont):
            return f"{render_term(s)}!<{', '.join(render_term(o) for o in objs)}>. " \
                   + _wrap(cont)
        case PInp(s, pats, cont):
            from .syntax import _render_placeholder
            ps = ", ".join(_render_placeholder(k, None) for k in pats)
            return f"{render_term(s)}?({ps}). " + _wrap(cont)
        case PRes(n, _, body):
            return f"(new {n}) " + _wrap(body)
        case PPar(l, r):
            return render_core(l) + " | " + render_core(r)
        case PRepl(body):
            return "* " + _wrap(body)
        case PIf(op, lhs, rhs, t, e):
            return (f"if {render_term(lhs)} {op} {render_term(rhs)} "
                    f"then ({render_core(t)}) else ({render_core(e)})")
        case PNil():
            return "0"
    return render_process(p)


def _wrap(p: Process) -> str:
    txt = render_core(p)
    if isinstance(p, PPar):
        return f"({txt})"
    return txt


# --- operational correspondence ---------------------------------------------------------

@dataclass
class CorrespondenceReport:
    source_steps: int = 0
    encoded_steps: int = 0
    sound: list[str] = field(default_factory=list)        # matched source steps
    complete: list[str] = field(default_factory=list)     # matched encoded steps
    failures: list[str] = field(default_factory=list)
    bound_exhausted: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and not self.bound_exhausted

    def render(self) -> str:
        status = "ok" if self.ok else "PROBLEMS"
        lines = [f"correspondence: {status} "
                 f"({self.source_steps} source steps, {self.encoded_steps} encoded steps)"]
        lines += [f"  failure: {f}" for f in self.failures]
        lines += [f"  inconclusive: {f}" for f in self.bound_exhausted]
        return "\n".join(lines)


def _search(start: Process, targets: list[Process], bound: int
            ) -> tuple[Optional[int], bool]:
    """BFS over internal steps; returns (index of reached target, exhausted)
    where exhausted means the bound cut the search off."""
    seen = {core_canonical(start)}
    frontier = [core_canonical(start)]
    for i, t in enumerate(targets):
        if frontier[0] == t:
            return i, False
    for _ in range(bound):
        nxt: list[Process] = []
        for node in frontier:
            for succ in core_step(node):
                c = core_canonical(succ)
                if c in seen:
                    continue
                seen.add(c)
                for i, t in enumerate(targets):
                    if c == t:
                        return i, False
                nxt.append(c)
        frontier = nxt
        if not frontier:
            return None, False
    return None, bool(frontier)


def check_correspondence(p: Process, bound: int,
                         refs: Optional[frozenset[str]] = None) -> CorrespondenceReport:
    """Soundness: every source step is matched by the encoding within the
    bound. Completeness: every first encoded step either reverts to the
    encoded source or completes to the encoding of some source successor."""
    report = CorrespondenceReport()
    if refs is None:
        refs = _store_refs(p)
    enc_root = encode(p, refs)
    src_succs = [normalize(s) for s in tau_successors(p)]
    # deduplicate source successors
    uniq: list[Process] = []
    for s in src_succs:
        if not any(alpha_eq(s, u) for u in uniq):
            uniq.append(s)
    report.source_steps = len(uniq)
    enc_targets = [core_canonical(encode(s, refs)) for s in uniq]

    for s, target in zip(uniq, enc_targets):
        idx, exhausted = _search(enc_root, [target], bound)
        desc = render_process(s)
        if idx is not None:
            report.sound.append(desc)
        elif exhausted:
            report.bound_exhausted.append(f"soundness: {desc}")
        else:
            report.failures.append(f"soundness: encoding never reaches [{desc}]")

    enc_canon = core_canonical(enc_root)
    first = []
    seenq: list[Process] = []
    for q in core_step(enc_root):
        c = core_canonical(q)
        if not any(c == u for u in seenq):
            seenq.append(c)
            first.append(c)
    report.encoded_steps = len(first)
    targets = [enc_canon] + enc_targets
    for q in first:
        idx, exhausted = _search(q, targets, bound)
        if idx is not None:
            report.complete.append("revert" if idx == 0 else f"completes: {idx - 1}")
        elif exhausted:
            report.bound_exhausted.append("completeness: encoded step")
        else:
            report.failures.append("completeness: encoded step reaches neither the "
                                   "source image nor any successor image")
    return report

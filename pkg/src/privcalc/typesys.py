"""Permission inference: value and match typing, process typing producing a
permission environment, system typing producing a group-path interface, and
the capability order over all of them.

The checker is syntax-directed: instead of subtracting binders from the
environment it extends the environment going under them, taking input
pattern types from the channel payload and restriction types from
annotations (with a narrow object-position inference fallback).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .kernel import (
    DConst, DVar, Hidden, IVar, Known, PAnon, PIf, PInp, PNil, POut, PPair,
    PPar, PRepl, PRes, PStore, PVar, Placeholder, PrivacyType, PrivateData,
    Process, SBare, SGroupProc, SGroupSys, SSysPar, SSysRes, Span, System,
    TChan, TConst, TDual, TName, TPriv, TPrivate, TPurpose, TVar, Term,
    placeholder_vars,
)
from .policy import (
    AGGREGATE, FlatHierarchy, Lambda, OMEGA, Perm, PermSet, READ, READID,
    REFERENCE, STORE, UPDATE, disseminate, identify, lambda_leq, perm_union,
    usage,
)
from .syntax import Gamma, render_term

__all__ = [
    "TypingError", "Delta", "Theta", "ThetaEntry", "ProcTyping", "SysTyping",
    "type_value", "type_match", "type_process", "type_system",
    "interface_leq", "permset_leq", "EMPTY_DELTA",
]


class TypingError(Exception):
    def __init__(self, code: str, message: str, span: Optional[Span] = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.span = span

    def __str__(self) -> str:
        where = f" at {self.span}" if self.span else ""
        return f"{self.code}{where}: {self.message}"


# --- permission environments -----------------------------------------------------

class Delta:
    """Maps private types to the permission sets a process exercises."""

    __slots__ = ("entries",)

    def __init__(self, entries: Optional[dict[str, PermSet]] = None):
        self.entries = dict(entries or {})

    def uplus(self, other: "Delta") -> "Delta":
        out = dict(self.entries)
        for t, ps in other.entries.items():
            out[t] = perm_union(out[t], ps) if t in out else ps
        return Delta({t: ps for t, ps in out.items() if ps})

    def get(self, t: str) -> PermSet:
        return self.entries.get(t, PermSet())

    def types(self) -> list[str]:
        return sorted(self.entries)

    def star(self) -> "Delta":
        """Lift every finite dissemination budget to the unlimited one."""
        out: dict[str, PermSet] = {}
        for t, ps in self.entries.items():
            perms = [p if p.kind != "disseminate" else disseminate(p.group, OMEGA)
                     for p in ps]
            out[t] = PermSet(perms)
        return Delta(out)

    def __eq__(self, other) -> bool:
        return isinstance(other, Delta) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(tuple(sorted((t, ps) for t, ps in self.entries.items())))

    def __bool__(self) -> bool:
        return bool(self.entries)

    def __repr__(self) -> str:
        inner = ", ".join(f"{t}: {self.entries[t]!r}" for t in self.types())
        return "Delta(" + inner + ")"


EMPTY_DELTA = Delta()


def _delta1(t: str, perms: Iterable[Perm]) -> Delta:
    ps = PermSet(perms)
    return Delta({t: ps}) if ps else Delta()


@dataclass(frozen=True)
class ThetaEntry:
    ptype: str
    path: tuple[str, ...]  # empty while a bare component awaits its group
    perms: PermSet

    def render(self) -> str:
        flat = FlatHierarchy(self.path or ("?",), self.perms)
        return f"{self.ptype}: {flat}"


class Theta:
    """The system interface: an order-preserving multiset of entries."""

    __slots__ = ("entries",)

    def __init__(self, entries: Iterable[ThetaEntry] = ()):
        self.entries = list(entries)

    def prefixed(self, group: str) -> "Theta":
        return Theta(ThetaEntry(e.ptype, (group,) + e.path, e.perms)
                     for e in self.entries)

    def concat(self, other: "Theta") -> "Theta":
        return Theta([*self.entries, *other.entries])

    def canonical(self) -> "Theta":
        return Theta(sorted(self.entries,
                            key=lambda e: (e.ptype, e.path, repr(e.perms))))

    def lookup(self, ptype: str, path: tuple[str, ...]) -> list[PermSet]:
        return [e.perms for e in self.entries if e.ptype == ptype and e.path == path]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, Theta) and self.canonical().entries == other.canonical().entries

    def __repr__(self) -> str:
        return "Theta(" + "; ".join(e.render() for e in self.canonical().entries) + ")"


@dataclass(frozen=True)
class ProcTyping:
    lam: frozenset[str]
    zrecs: tuple[tuple[tuple[str, str], str], ...]  # ((kind, token), private type)
    delta: Delta


@dataclass(frozen=True)
class SysTyping:
    lam: frozenset[str]
    theta: Theta


# --- value typing ------------------------------------------------------------------

def _identity_key(i) -> tuple[str, str]:
    if isinstance(i, Known):
        return ("id", i.ident)
    if isinstance(i, IVar):
        return ("var", i.name)
    return ("hidden", "_")


def _identify_delta(ptype: str, identity) -> Delta:
    if isinstance(identity, Hidden):
        return Delta({ptype: PermSet()})
    return Delta({ptype: PermSet([READID])})


def _resolve_priv(gamma: Gamma, pd: PrivateData, span=None) -> TPrivate:
    ty = gamma.priv_type(pd.identity, pd.data)
    if ty is not None:
        return ty
    # identity-instantiated literal: resolve by its constant component when
    # that resolution is unique (store updates produce such literals)
    if isinstance(pd.data, DConst):
        cands = {t for _, t in gamma.priv_types_for_data(pd.data.token)}
        if len(cands) == 1:
            return next(iter(cands))
    raise TypingError("UnboundTerm",
                      f"private data {render_term(TPriv(pd))} has no type", span)


def type_value(gamma: Gamma, v: Term, span=None) -> tuple[PrivacyType, Delta]:
    match v:
        case TName(tok) | TVar(tok):
            ty = gamma.atom_type(tok)
            if ty is None:
                raise TypingError("UnboundTerm", f"{tok} is not typed", span)
            return ty, EMPTY_DELTA
        case TConst(tok):
            ty = gamma.atom_type(tok)
            if ty is not None:
                return ty, EMPTY_DELTA
            privs = gamma.priv_types_for_data(tok)
            if len({t for _, t in privs}) == 1:
                # a datum component used as a bare term
                key, ty2 = privs[0]
                return ty2, _identify_delta(ty2.ptype, Known(key[0]) if key[0] != "_" else Hidden())
            raise TypingError("UnboundTerm", f"{tok} is not typed", span)
        case TPriv(pd):
            ty = _resolve_priv(gamma, pd, span)
            return ty, _identify_delta(ty.ptype, pd.identity)
        case TDual(tok):
            raise TypingError("UnboundTerm",
                              f"dual endpoint ~{tok} cannot be typed in user code", span)
    raise TypingError("UnboundTerm", f"cannot type {v!r}", span)


# --- match typing -------------------------------------------------------------------

@dataclass(frozen=True)
class _Operand:
    kind: str  # "private" | "purpose" | "name"
    ptype: Optional[str] = None
    ground: Optional[str] = None
    hidden: bool = False
    delta: Delta = field(default_factory=Delta)


def _resolve_operand(gamma: Gamma, t: Term, span=None) -> _Operand:
    match t:
        case TPriv(pd):
            ty = _resolve_priv(gamma, pd, span)
            return _Operand("private", ty.ptype, ty.ground,
                            hidden=isinstance(pd.identity, Hidden),
                            delta=_identify_delta(ty.ptype, pd.identity))
        case TVar(tok) | TConst(tok) | TName(tok):
            ty = gamma.atom_type(tok)
            if isinstance(ty, TPurpose):
                return _Operand("purpose", ty.purpose, ty.ground)
            if isinstance(ty, TChan):
                return _Operand("name")
            if isinstance(ty, TPrivate):
                return _Operand("private", ty.ptype, ty.ground, hidden=False,
                                delta=_delta1(ty.ptype, [READID]))
            # fall back to the private entry whose data component this token is
            privs = gamma.priv_types_for_data(tok)
            if privs:
                keys = {k for k, _ in privs}
                tys = {t2 for _, t2 in privs}
                if len(keys) > 1 or len(tys) > 1:
                    raise TypingError("IllTypedMatch",
                                      f"{tok} is data of several private entries", span)
                (itok, _), ty2 = privs[0]
                hidden = itok == "_"
                ident = Hidden() if hidden else Known(itok)
                return _Operand("private", ty2.ptype, ty2.ground, hidden=hidden,
                                delta=_identify_delta(ty2.ptype, ident))
            raise TypingError("UnboundTerm", f"{tok} is not typed", span)
    raise TypingError("IllTypedMatch", f"cannot match on {t!r}", span)


def type_match(gamma: Gamma, lhs: Term, rhs: Term, op: str = "=",
               id_direction: str = "anon", span=None) -> Delta:
    """Permissions exercised by comparing two terms.

    Identification pairs a known-identity datum with an anonymous one; the
    identify permission lands on the anonymous side's type by default
    (id_direction="known" flips it). Usage pairs a datum with a purpose
    constant; for `=` the datum's identity must not be hidden, for `>` it
    may be. Name-name and purpose-purpose comparisons are plumbing.
    """
    a = _resolve_operand(gamma, lhs, span)
    b = _resolve_operand(gamma, rhs, span)

    if a.kind == "name" and b.kind == "name":
        return EMPTY_DELTA
    if a.kind == "purpose" and b.kind == "purpose":
        return EMPTY_DELTA

    if a.kind == "private" and b.kind == "private":
        if a.ground != b.ground:
            raise TypingError("IllTypedMatch",
                              f"ground types differ: {a.ground} vs {b.ground}", span)
        base = a.delta.uplus(b.delta)
        if a.hidden != b.hidden:
            known, anon = (b, a) if a.hidden else (a, b)
            if id_direction == "known":
                extra = _delta1(known.ptype, [identify(anon.ptype)])
            else:
                extra = _delta1(anon.ptype, [identify(known.ptype)])
            return base.uplus(extra)
        if a.ptype != b.ptype:
            raise TypingError("IllTypedMatch",
                              f"cannot compare {a.ptype} with {b.ptype}", span)
        return base

    if {"private", "purpose"} == {a.kind, b.kind}:
        datum, purp = (a, b) if a.kind == "private" else (b, a)
        if datum.ground != purp.ground:
            raise TypingError("IllTypedMatch",
                              f"ground types differ: {datum.ground} vs {purp.ground}", span)
        if datum.hidden and op == "=":
            raise TypingError("IllTypedMatch",
                              "anonymised data cannot be matched against a purpose constant",
                              span)
        return datum.delta.uplus(_delta1(datum.ptype, [usage(purp.ptype)]))

    raise TypingError("IllTypedMatch",
                      f"cannot compare a {a.kind} with a {b.kind}", span)


# --- process typing -----------------------------------------------------------------

def _u_delta(obj_ty: PrivacyType, subject_group: str) -> Delta:
    match obj_ty:
        case TPrivate(t, _):
            return _delta1(t, [UPDATE])
        case TChan(_, payload) if len(payload) == 1 and isinstance(payload[0], TPrivate):
            return _delta1(payload[0].ptype, [disseminate(subject_group, Lambda(1))])
        case _:
            return EMPTY_DELTA


def _r_delta(obj_ty: PrivacyType) -> Delta:
    match obj_ty:
        case TPrivate(t, _):
            return _delta1(t, [READ])
        case TChan(_, payload) if len(payload) == 1 and isinstance(payload[0], TPrivate):
            return _delta1(payload[0].ptype, [REFERENCE])
        case _:
            return EMPTY_DELTA


def _subject_chan(gamma: Gamma, subject: Term, span=None) -> TChan:
    match subject:
        case TName(tok) | TVar(tok):
            ty = gamma.atom_type(tok)
            if ty is None:
                raise TypingError("UnboundTerm", f"subject {tok} is not typed", span)
            if not isinstance(ty, TChan):
                raise TypingError("UnboundTerm",
                                  f"subject {tok} has non-channel type {ty}", span)
            return ty
        case TDual(tok):
            raise TypingError("UnboundTerm",
                              f"dual endpoint ~{tok} cannot be typed in user code", span)
    raise TypingError("UnboundTerm", f"bad subject {subject!r}", span)


def _bind_pattern(gamma: Gamma, k: Placeholder, ty: PrivacyType,
                  annot: Optional[PrivacyType], span=None) -> tuple[Gamma, Delta]:
    if annot is not None and annot != ty:
        raise TypingError("TypeMismatch",
                          f"annotation {annot} conflicts with payload type {ty}", span)
    match k:
        case PVar(x):
            declared = gamma.atom_type(x)
            if declared is not None and declared != ty:
                raise TypingError("TypeMismatch",
                                  f"{x} declared {declared} but bound at {ty}", span)
            return gamma.bind_atom(x, ty), EMPTY_DELTA
        case PPair(x, y):
            if not isinstance(ty, TPrivate):
                raise TypingError("TypeMismatch",
                                  f"pattern {x} # {y} needs private payload, got {ty}", span)
            declared = gamma.priv_type(IVar(x), DVar(y))
            if declared is not None and declared != ty:
                raise TypingError("TypeMismatch",
                                  f"{x} # {y} declared {declared} but bound at {ty}", span)
            return gamma.bind_priv(IVar(x), DVar(y), ty), _delta1(ty.ptype, [READID])
        case PAnon(y):
            if not isinstance(ty, TPrivate):
                raise TypingError("TypeMismatch",
                                  f"pattern _ # {y} needs private payload, got {ty}", span)
            declared = gamma.priv_type(Hidden(), DVar(y))
            if declared is not None and declared != ty:
                raise TypingError("TypeMismatch",
                                  f"_ # {y} declared {declared} but bound at {ty}", span)
            return gamma.bind_priv(Hidden(), DVar(y), ty), EMPTY_DELTA
    raise TypingError("TypeMismatch", f"bad placeholder {k!r}", span)


def _merge_lam(a: frozenset[str], b: frozenset[str], span=None) -> frozenset[str]:
    both = a & b
    if both:
        r = sorted(both)[0]
        raise TypingError("LinearityViolation",
                          f"store reference {r} is used by more than one store", span)
    return a | b


def _infer_binder_type(gamma: Gamma, name: str, body) -> Optional[PrivacyType]:
    """A restricted name's type is forced when it appears as an object of a
    prefix whose subject is already typed; unique candidates win."""
    candidates: set[PrivacyType] = set()

    def scan(nd, shadowed: bool):
        if shadowed:
            return
        match nd:
            case PNil() | PStore(_, _):
                return
            case POut(s, objs, cont):
                sty = gamma.atom_type(s.name) if isinstance(s, (TName, TVar)) else None
                if isinstance(sty, TChan) and len(sty.payload) == len(objs):
                    for o, ty in zip(objs, sty.payload):
                        if isinstance(o, (TName, TVar)) and o.name == name:
                            candidates.add(ty)
                scan(cont, shadowed)
            case PInp(s, pats, cont):
                inner = shadowed or any(name in placeholder_vars(k) for k in pats)
                scan(cont, inner)
            case PRes(n, _, bd):
                scan(bd, shadowed or n == name)
            case PPar(l, r):
                scan(l, shadowed)
                scan(r, shadowed)
            case PRepl(bd):
                scan(bd, shadowed)
            case PIf(_, _, _, th, el):
                scan(th, shadowed)
                scan(el, shadowed)
            case SGroupProc(_, proc):
                scan(proc, shadowed)
            case SGroupSys(_, bd):
                scan(bd, shadowed)
            case SSysPar(l, r):
                scan(l, shadowed)
                scan(r, shadowed)
            case SSysRes(n, _, bd):
                scan(bd, shadowed or n == name)
            case SBare(proc):
                scan(proc, shadowed)

    scan(body, False)
    if len(candidates) == 1:
        return next(iter(candidates))
    return None


def type_process(gamma: Gamma, p: Process, id_direction: str = "anon") -> ProcTyping:
    match p:
        case PNil():
            return ProcTyping(frozenset(), (), EMPTY_DELTA)

        case PStore(ref, datum):
            rty = gamma.atom_type(ref)
            if rty is None:
                raise TypingError("UnboundTerm", f"store reference {ref} is not typed", p.span)
            if not (isinstance(rty, TChan) and len(rty.payload) == 1
                    and isinstance(rty.payload[0], TPrivate)):
                raise TypingError("TypeMismatch",
                                  f"store reference {ref} needs a G[t<g>] type, has {rty}",
                                  p.span)
            want = rty.payload[0]
            if isinstance(datum.identity, Hidden):
                raise TypingError("TypeMismatch",
                                  "a store cannot hold anonymised data", p.span)
            got = _resolve_priv(gamma, datum, p.span)
            if got != want:
                raise TypingError("TypeMismatch",
                                  f"store {ref} holds {got} but carries {want}", p.span)
            # the datum's readId is not exercised by merely holding it
            ikey = _identity_key(datum.identity)
            return ProcTyping(frozenset([ref]), ((ikey, want.ptype),),
                              _delta1(want.ptype, [STORE]))

        case POut(subject, objects, cont):
            sty = _subject_chan(gamma, subject, p.span)
            if len(objects) != len(sty.payload):
                raise TypingError("ArityMismatch",
                                  f"output carries {len(objects)} objects on a "
                                  f"{len(sty.payload)}-ary channel", p.span)
            delta = EMPTY_DELTA
            for obj, want in zip(objects, sty.payload):
                oty, odelta = type_value(gamma, obj, p.span)
                if oty != want:
                    raise TypingError("TypeMismatch",
                                      f"object {render_term(obj)} has type {oty}, "
                                      f"channel carries {want}", p.span)
                delta = delta.uplus(odelta).uplus(_u_delta(want, sty.group))
            body = type_process(gamma, cont, id_direction)
            return ProcTyping(body.lam, body.zrecs, body.delta.uplus(delta))

        case PInp(subject, patterns, cont):
            sty = _subject_chan(gamma, subject, p.span)
            if len(patterns) != len(sty.payload):
                raise TypingError("ArityMismatch",
                                  f"input binds {len(patterns)} patterns on a "
                                  f"{len(sty.payload)}-ary channel", p.span)
            delta = EMPTY_DELTA
            g2 = gamma
            annots = p.annots or tuple(None for _ in patterns)
            for k, want, an in zip(patterns, sty.payload, annots):
                g2, kdelta = _bind_pattern(g2, k, want, an, p.span)
                delta = delta.uplus(kdelta).uplus(_r_delta(want))
            body = type_process(g2, cont, id_direction)
            return ProcTyping(body.lam, body.zrecs, body.delta.uplus(delta))

        case PRes(name, annot, body):
            ty = annot or _infer_binder_type(gamma, name, body)
            if ty is None:
                raise TypingError("UnannotatedRestriction",
                                  f"cannot determine the type of (new {name})", p.span)
            inner = type_process(gamma.bind_atom(name, ty), body, id_direction)
            return ProcTyping(inner.lam - {name}, inner.zrecs, inner.delta)

        case PPar(left, right):
            lt = type_process(gamma, left, id_direction)
            rt = type_process(gamma, right, id_direction)
            lam = _merge_lam(lt.lam, rt.lam, p.span)
            agg = EMPTY_DELTA
            for (ik1, t1) in lt.zrecs:
                for (ik2, t2) in rt.zrecs:
                    if ik1 == ik2 or ik1[0] == "var" or ik2[0] == "var":
                        agg = agg.uplus(_delta1(t1, [AGGREGATE]))
                        agg = agg.uplus(_delta1(t2, [AGGREGATE]))
            return ProcTyping(lam, lt.zrecs + rt.zrecs,
                              lt.delta.uplus(rt.delta).uplus(agg))

        case PRepl(body):
            inner = type_process(gamma, body, id_direction)
            if inner.lam:
                r = sorted(inner.lam)[0]
                raise TypingError("ReplicatedFreeStore",
                                  f"store reference {r} is free under replication", p.span)
            agg = EMPTY_DELTA
            for (_, t) in inner.zrecs:
                agg = agg.uplus(_delta1(t, [AGGREGATE]))
            return ProcTyping(frozenset(), inner.zrecs, inner.delta.star().uplus(agg))

        case PIf(op, lhs, rhs, then, els):
            mdelta = type_match(gamma, lhs, rhs, op, id_direction, p.span)
            tt = type_process(gamma, then, id_direction)
            et = type_process(gamma, els, id_direction)
            lam = _merge_lam(tt.lam, et.lam, p.span)
            return ProcTyping(lam, tt.zrecs + et.zrecs,
                              mdelta.uplus(tt.delta).uplus(et.delta))

    raise TypingError("TypeMismatch", f"not a process: {p!r}")


# --- system typing ------------------------------------------------------------------

def type_system(gamma: Gamma, s: System, id_direction: str = "anon",
                _at_root: bool = True) -> SysTyping:
    match s:
        case SGroupProc(group, proc):
            pt = type_process(gamma, proc, id_direction)
            theta = Theta(ThetaEntry(t, (group,), pt.delta.entries[t])
                          for t in sorted(pt.delta.entries))
            return SysTyping(pt.lam, theta)

        case SGroupSys(group, body):
            inner = type_system(gamma, body, id_direction, _at_root=False)
            return SysTyping(inner.lam, inner.theta.prefixed(group))

        case SSysPar(left, right):
            lt = type_system(gamma, left, id_direction, _at_root=False)
            rt = type_system(gamma, right, id_direction, _at_root=False)
            lam = _merge_lam(lt.lam, rt.lam, s.span)
            out = SysTyping(lam, lt.theta.concat(rt.theta))
            if _at_root:
                _check_closed(out, s)
            return out

        case SSysRes(name, annot, body):
            ty = annot or _infer_binder_type(gamma, name, body)
            if ty is None:
                raise TypingError("UnannotatedRestriction",
                                  f"cannot determine the type of (new {name})", s.span)
            inner = type_system(gamma.bind_atom(name, ty), body, id_direction,
                                _at_root=False)
            out = SysTyping(inner.lam - {name}, inner.theta)
            if _at_root:
                _check_closed(out, s)
            return out

        case SBare(proc):
            pt = type_process(gamma, proc, id_direction)
            theta = Theta(ThetaEntry(t, (), pt.delta.entries[t])
                          for t in sorted(pt.delta.entries))
            out = SysTyping(pt.lam, theta)
            if _at_root:
                _check_closed(out, s)
            return out

    raise TypingError("TypeMismatch", f"not a system: {s!r}")


def _check_closed(st: SysTyping, s: System):
    for e in st.theta.entries:
        if not e.path:
            raise TypingError("UnclosedBareProcess",
                              f"component exercising {e.ptype} permissions is "
                              "not enclosed by any group", getattr(s, "span", None))


# --- the capability order -----------------------------------------------------------

def permset_leq(a: PermSet, b: PermSet) -> bool:
    for p in a:
        if p.kind == "disseminate":
            budget = b.diss_budget(p.group)
            if budget is None or not lambda_leq(p.lam, budget):
                return False
        elif p.kind == "usage":
            continue  # purposes compared collectively below
        elif p not in b:
            return False
    return a.usage_purposes() <= b.usage_purposes()


def _delta_leq(a: Delta, b: Delta) -> bool:
    return all(t in b.entries and permset_leq(ps, b.entries[t])
               for t, ps in a.entries.items())


def _flat_leq(a: FlatHierarchy, b: FlatHierarchy) -> bool:
    return a.path == b.path and permset_leq(a.perms, b.perms)


def _theta_leq(a: Theta, b: Theta) -> bool:
    """Every entry on the left must be covered by a distinct matching entry
    on the right (same type and path, dominated permissions)."""
    rights = list(b.entries)
    assignment: dict[int, int] = {}

    def augment(i: int, seen: set[int]) -> bool:
        e = a.entries[i]
        for j, r in enumerate(rights):
            if j in seen:
                continue
            if r.ptype == e.ptype and r.path == e.path and permset_leq(e.perms, r.perms):
                seen.add(j)
                holder = next((k for k, v in assignment.items() if v == j), None)
                if holder is None or augment(holder, seen):
                    assignment[i] = j
                    return True
        return False

    return all(augment(i, set()) for i in range(len(a.entries)))


def interface_leq(a, b) -> bool:
    if isinstance(a, PermSet) and isinstance(b, PermSet):
        return permset_leq(a, b)
    if isinstance(a, Delta) and isinstance(b, Delta):
        return _delta_leq(a, b)
    if isinstance(a, FlatHierarchy) and isinstance(b, FlatHierarchy):
        return _flat_leq(a, b)
    if isinstance(a, Theta) and isinstance(b, Theta):
        return _theta_leq(a, b)
    raise TypeError(f"cannot compare {type(a).__name__} with {type(b).__name__}")

"""Core abstract syntax: processes, systems, private data, binding and
structural-congruence normalization.

Values are immutable after construction; every operation here is pure.
Source spans ride along on nodes but never participate in equality, so
normalized forms compare structurally.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Union

__all__ = [
    "Span", "KernelError", "IncompatibleSubstitution",
    "Known", "HIDDEN", "Hidden", "IVar", "Identity",
    "DConst", "DVar", "DataValue", "PrivateData",
    "TName", "TDual", "TConst", "TVar", "TPriv", "Term",
    "PVar", "PPair", "PAnon", "Placeholder",
    "TPrivate", "TPurpose", "TChan", "PrivacyType",
    "PNil", "POut", "PInp", "PRes", "PPar", "PRepl", "PIf", "PStore", "Process",
    "SGroupProc", "SGroupSys", "SSysPar", "SSysRes", "SBare", "System",
    "NIL", "substitute", "free_names", "free_vars", "free_atoms",
    "normalize", "alpha_eq", "par_components", "sys_components", "fresh_name",
]


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}-{self.end_line}:{self.end_col}"


class KernelError(Exception):
    pass


class IncompatibleSubstitution(KernelError):
    def __init__(self, value, placeholder):
        super().__init__(f"cannot substitute {value} for {placeholder}")
        self.value = value
        self.placeholder = placeholder


# --- identities and data values -------------------------------------------

@dataclass(frozen=True)
class Known:
    ident: str


@dataclass(frozen=True)
class Hidden:
    def __repr__(self) -> str:
        return "Hidden()"


HIDDEN = Hidden()


@dataclass(frozen=True)
class IVar:
    name: str


Identity = Union[Known, Hidden, IVar]


@dataclass(frozen=True)
class DConst:
    token: str


@dataclass(frozen=True)
class DVar:
    name: str


DataValue = Union[DConst, DVar]


@dataclass(frozen=True)
class PrivateData:
    """An identity paired with a piece of data.

    Admissible shapes: Known+Const, Hidden+Const, IVar+DVar, Hidden+DVar,
    plus Known+DVar which marks an uninitialized slot and is only accepted
    inside store nodes (POut/PIf constructors reject it).
    """

    identity: Identity
    data: DataValue

    def __post_init__(self):
        ok = (
            (isinstance(self.identity, Known) and isinstance(self.data, DConst))
            or (isinstance(self.identity, Hidden) and isinstance(self.data, DConst))
            or (isinstance(self.identity, IVar) and isinstance(self.data, DVar))
            or (isinstance(self.identity, Hidden) and isinstance(self.data, DVar))
            or (isinstance(self.identity, Known) and isinstance(self.data, DVar))
        )
        if not ok:
            raise KernelError(f"ill-formed private data {self.identity}#{self.data}")

    @property
    def communicable(self) -> bool:
        return not (isinstance(self.identity, Known) and isinstance(self.data, DVar))

    @property
    def is_constant(self) -> bool:
        return isinstance(self.identity, (Known, Hidden)) and isinstance(self.data, DConst)


# --- terms and placeholders -----------------------------------------------

@dataclass(frozen=True)
class TName:
    """A channel or reference name; the two sorts are lexically identical
    and are told apart by their type."""
    name: str


@dataclass(frozen=True)
class TDual:
    name: str


@dataclass(frozen=True)
class TConst:
    token: str


@dataclass(frozen=True)
class TVar:
    name: str


@dataclass(frozen=True)
class TPriv:
    pdata: PrivateData


Term = Union[TName, TDual, TConst, TVar, TPriv]


@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PPair:
    id_var: str
    data_var: str

    def __post_init__(self):
        if self.id_var == self.data_var:
            raise KernelError(f"pattern variables must be distinct: {self.id_var}")


@dataclass(frozen=True)
class PAnon:
    data_var: str


Placeholder = Union[PVar, PPair, PAnon]


def placeholder_vars(k: Placeholder) -> tuple[str, ...]:
    match k:
        case PVar(x):
            return (x,)
        case PPair(x, y):
            return (x, y)
        case PAnon(x):
            return (x,)
    raise KernelError(f"not a placeholder: {k!r}")


# --- types (shared with the typing layer) ----------------------------------

@dataclass(frozen=True)
class TPrivate:
    ptype: str
    ground: str

    def __str__(self) -> str:
        return f"{self.ptype}<{self.ground}>"


@dataclass(frozen=True)
class TPurpose:
    purpose: str
    ground: str

    def __str__(self) -> str:
        return f"{self.purpose}<{self.ground}>"


@dataclass(frozen=True)
class TChan:
    group: str
    payload: tuple["PrivacyType", ...]

    def __post_init__(self):
        if not self.payload:
            raise KernelError("channel types carry at least one payload type")

    def __str__(self) -> str:
        inner = ", ".join(str(t) for t in self.payload)
        return f"{self.group}[{inner}]"


PrivacyType = Union[TPrivate, TPurpose, TChan]


# --- processes --------------------------------------------------------------

@dataclass(frozen=True)
class PNil:
    span: Optional[Span] = field(default=None, compare=False, repr=False)


NIL = PNil()


def _check_subject(subject: Term):
    if isinstance(subject, (TConst, TPriv)):
        raise KernelError(f"prefix subject must be a name or variable, got {subject}")


def _check_object(obj: Term):
    if isinstance(obj, TDual):
        raise KernelError("a dual endpoint cannot appear in object position")
    if isinstance(obj, TPriv) and not obj.pdata.communicable:
        raise KernelError(f"private data {obj.pdata} is not a communicable form")


@dataclass(frozen=True)
class POut:
    subject: Term
    objects: tuple[Term, ...]
    cont: "Process"
    span: Optional[Span] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        _check_subject(self.subject)
        if not self.objects:
            raise KernelError("output carries at least one object")
        for v in self.objects:
            _check_object(v)


@dataclass(frozen=True)
class PInp:
    subject: Term
    patterns: tuple[Placeholder, ...]
    cont: "Process"
    annots: tuple[Optional[PrivacyType], ...] = ()
    span: Optional[Span] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        _check_subject(self.subject)
        if not self.patterns:
            raise KernelError("input binds at least one placeholder")
        if self.annots and len(self.annots) != len(self.patterns):
            raise KernelError("annotation arity mismatch")
        seen: set[str] = set()
        for k in self.patterns:
            for x in placeholder_vars(k):
                if x in seen:
                    raise KernelError(f"pattern variable {x} bound twice in one input")
                seen.add(x)


@dataclass(frozen=True)
class PRes:
    name: str
    annot: Optional[PrivacyType]
    body: "Process"
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PPar:
    left: "Process"
    right: "Process"
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PRepl:
    body: "Process"
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PIf:
    op: str  # "=" or ">"
    lhs: Term
    rhs: Term
    then: "Process"
    els: "Process"
    span: Optional[Span] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.op not in ("=", ">"):
            raise KernelError(f"unknown comparison operator {self.op!r}")
        for t in (self.lhs, self.rhs):
            if isinstance(t, TDual):
                raise KernelError("dual endpoints cannot be compared")
            if isinstance(t, TPriv) and not t.pdata.communicable:
                raise KernelError("uninitialized private data cannot be compared")


@dataclass(frozen=True)
class PStore:
    ref: str  # always a literal reference name, never a variable
    datum: PrivateData
    span: Optional[Span] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if isinstance(self.datum.identity, Hidden) and isinstance(self.datum.data, DVar):
            raise KernelError("a store cannot hold a hidden, uninitialized datum")


Process = Union[PNil, POut, PInp, PRes, PPar, PRepl, PIf, PStore]


# --- systems -----------------------------------------------------------------

@dataclass(frozen=True)
class SGroupProc:
    group: str
    proc: Process
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SGroupSys:
    group: str
    body: "System"
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SSysPar:
    left: "System"
    right: "System"
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SSysRes:
    name: str
    annot: Optional[PrivacyType]
    body: "System"
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SBare:
    proc: Process
    span: Optional[Span] = field(default=None, compare=False, repr=False)


System = Union[SGroupProc, SGroupSys, SSysPar, SSysRes, SBare]


# --- free names / variables ---------------------------------------------------

def _term_tokens(t: Term) -> Iterator[tuple[str, str]]:
    """Yield (token, kind) with kind in {name, var, const, ivar, dvar}."""
    match t:
        case TName(n) | TDual(n):
            yield (n, "name")
        case TVar(x):
            yield (x, "var")
        case TConst(_):
            return
        case TPriv(pd):
            if isinstance(pd.identity, IVar):
                yield (pd.identity.name, "ivar")
            if isinstance(pd.data, DVar):
                yield (pd.data.name, "dvar")


def _walk_free(node, bound_names: frozenset[str], bound_vars: frozenset[str],
               out_names: set[str], out_vars: set[str]) -> None:
    match node:
        case PNil():
            return
        case POut(subject, objects, cont):
            for t in (subject, *objects):
                for tok, kind in _term_tokens(t):
                    if kind == "name" and tok not in bound_names:
                        out_names.add(tok)
                    elif kind in ("var", "ivar", "dvar") and tok not in bound_vars:
                        out_vars.add(tok)
            _walk_free(cont, bound_names, bound_vars, out_names, out_vars)
        case PInp(subject, patterns, cont):
            for tok, kind in _term_tokens(subject):
                if kind == "name" and tok not in bound_names:
                    out_names.add(tok)
                elif kind == "var" and tok not in bound_vars:
                    out_vars.add(tok)
            newly = frozenset(x for k in patterns for x in placeholder_vars(k))
            _walk_free(cont, bound_names, bound_vars | newly, out_names, out_vars)
        case PRes(name, _, body):
            _walk_free(body, bound_names | {name}, bound_vars, out_names, out_vars)
        case PPar(l, r):
            _walk_free(l, bound_names, bound_vars, out_names, out_vars)
            _walk_free(r, bound_names, bound_vars, out_names, out_vars)
        case PRepl(body):
            _walk_free(body, bound_names, bound_vars, out_names, out_vars)
        case PIf(_, lhs, rhs, then, els):
            for t in (lhs, rhs):
                for tok, kind in _term_tokens(t):
                    if kind == "name" and tok not in bound_names:
                        out_names.add(tok)
                    elif kind in ("var", "ivar", "dvar") and tok not in bound_vars:
                        out_vars.add(tok)
            _walk_free(then, bound_names, bound_vars, out_names, out_vars)
            _walk_free(els, bound_names, bound_vars, out_names, out_vars)
        case PStore(ref, datum):
            if ref not in bound_names:
                out_names.add(ref)
            if isinstance(datum.identity, IVar) and datum.identity.name not in bound_vars:
                out_vars.add(datum.identity.name)
            if isinstance(datum.data, DVar) and datum.data.name not in bound_vars:
                out_vars.add(datum.data.name)
        case SGroupProc(_, proc):
            _walk_free(proc, bound_names, bound_vars, out_names, out_vars)
        case SGroupSys(_, body):
            _walk_free(body, bound_names, bound_vars, out_names, out_vars)
        case SSysPar(l, r):
            _walk_free(l, bound_names, bound_vars, out_names, out_vars)
            _walk_free(r, bound_names, bound_vars, out_names, out_vars)
        case SSysRes(name, _, body):
            _walk_free(body, bound_names | {name}, bound_vars, out_names, out_vars)
        case SBare(proc):
            _walk_free(proc, bound_names, bound_vars, out_names, out_vars)
        case TName(_) | TDual(_) | TConst(_) | TVar(_) | TPriv(_):
            for tok, kind in _term_tokens(node):
                if kind == "name" and tok not in bound_names:
                    out_names.add(tok)
                elif kind in ("var", "ivar", "dvar") and tok not in bound_vars:
                    out_vars.add(tok)
        case _:
            raise KernelError(f"unexpected node {node!r}")


def free_names(node) -> frozenset[str]:
    names: set[str] = set()
    _walk_free(node, frozenset(), frozenset(), names, set())
    return frozenset(names)


def free_vars(node) -> frozenset[str]:
    vs: set[str] = set()
    _walk_free(node, frozenset(), frozenset(), set(), vs)
    return frozenset(vs)


def free_atoms(node) -> frozenset[str]:
    """All free tokens, names and variables alike; the safe set for
    capture checks and scope extrusion."""
    names: set[str] = set()
    vs: set[str] = set()
    _walk_free(node, frozenset(), frozenset(), names, vs)
    return frozenset(names | vs)


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    avoid = set(avoid)
    if base not in avoid:
        return base
    for i in itertools.count():
        cand = f"{base}_{i}"
        if cand not in avoid:
            return cand


# --- substitution -------------------------------------------------------------

def _rename_name(node, old: str, new: str):
    """Capture-free textual renaming of a free name token."""
    def rt(t: Term) -> Term:
        match t:
            case TName(n) if n == old:
                return TName(new)
            case TDual(n) if n == old:
                return TDual(new)
            case _:
                return t

    match node:
        case PNil():
            return node
        case POut(s, objs, cont):
            return replace(node, subject=rt(s), objects=tuple(rt(o) for o in objs),
                           cont=_rename_name(cont, old, new))
        case PInp(s, pats, cont):
            return replace(node, subject=rt(s), cont=_rename_name(cont, old, new))
        case PRes(n, annot, body):
            if n == old:
                return node
            if n == new:
                n2 = fresh_name(n, free_atoms(body) | {old, new})
                body = _rename_name(body, n, n2)
                return replace(node, name=n2, body=_rename_name(body, old, new))
            return replace(node, body=_rename_name(body, old, new))
        case PPar(l, r):
            return replace(node, left=_rename_name(l, old, new), right=_rename_name(r, old, new))
        case PRepl(body):
            return replace(node, body=_rename_name(body, old, new))
        case PIf(_, lhs, rhs, then, els):
            return replace(node, lhs=rt(lhs), rhs=rt(rhs),
                           then=_rename_name(then, old, new), els=_rename_name(els, old, new))
        case PStore(ref, datum):
            return replace(node, ref=new if ref == old else ref)
        case SGroupProc(_, proc):
            return replace(node, proc=_rename_name(proc, old, new))
        case SGroupSys(_, body):
            return replace(node, body=_rename_name(body, old, new))
        case SSysPar(l, r):
            return replace(node, left=_rename_name(l, old, new), right=_rename_name(r, old, new))
        case SSysRes(n, annot, body):
            if n == old:
                return node
            if n == new:
                n2 = fresh_name(n, free_atoms(body) | {old, new})
                body = _rename_name(body, n, n2)
                return replace(node, name=n2, body=_rename_name(body, old, new))
            return replace(node, body=_rename_name(body, old, new))
        case SBare(proc):
            return replace(node, proc=_rename_name(proc, old, new))
    raise KernelError(f"cannot rename inside {node!r}")


def _subst_mapping(value: Term, placeholder: Placeholder) -> dict:
    """Validate the (value, placeholder) pair and build slot substitutions.

    Returns a dict with keys:
      term: var -> Term          replacements at term positions
      ident: var -> Identity     replacements at identity slots
      data: var -> DataValue     replacements at data slots
    """
    match placeholder:
        case PVar(x):
            if isinstance(value, (TName, TConst)):
                dv = DConst(value.token) if isinstance(value, TConst) else None
                return {"term": {x: value}, "ident": {}, "data": {x: dv} if dv else {}}
            if isinstance(value, TPriv) and value.pdata.is_constant:
                return {"term": {x: value}, "ident": {}, "data": {}}
            raise IncompatibleSubstitution(value, placeholder)
        case PPair(x, y):
            if (isinstance(value, TPriv) and isinstance(value.pdata.identity, Known)
                    and isinstance(value.pdata.data, DConst)):
                ident = value.pdata.identity
                dat = value.pdata.data
                # term occurrences of the data variable keep the datum's
                # identity tag so successor states stay typable; identity
                # and data slots receive the plain components
                return {
                    "term": {x: TConst(ident.ident), y: value},
                    "ident": {x: ident},
                    "data": {y: dat},
                }
            raise IncompatibleSubstitution(value, placeholder)
        case PAnon(y):
            if (isinstance(value, TPriv) and isinstance(value.pdata.identity, Hidden)
                    and isinstance(value.pdata.data, DConst)):
                return {"term": {y: value},
                        "ident": {}, "data": {y: value.pdata.data}}
            raise IncompatibleSubstitution(value, placeholder)
    raise IncompatibleSubstitution(value, placeholder)


def _apply_subst_term(t: Term, m: dict) -> Term:
    match t:
        case TVar(x) if x in m["term"]:
            return m["term"][x]
        case TPriv(pd):
            ident = pd.identity
            dat = pd.data
            if isinstance(ident, IVar) and ident.name in m["ident"]:
                ident = m["ident"][ident.name]
            if isinstance(dat, DVar) and dat.name in m["data"]:
                dat = m["data"][dat.name]
            elif isinstance(dat, DVar) and dat.name in m["term"]:
                repl = m["term"][dat.name]
                if isinstance(repl, TConst):
                    dat = DConst(repl.token)
                else:
                    raise IncompatibleSubstitution(repl, PVar(dat.name))
            if ident is pd.identity and dat is pd.data:
                return t
            return TPriv(PrivateData(ident, dat))
        case _:
            return t


def _apply_subst(node, m: dict):
    active = set(m["term"]) | set(m["ident"]) | set(m["data"])
    if not active:
        return node

    # names free in the incoming values, for capture avoidance
    value_atoms: set[str] = set()
    for v in m["term"].values():
        value_atoms |= free_atoms(v)

    def go(nd, mm):
        act = set(mm["term"]) | set(mm["ident"]) | set(mm["data"])
        if not act:
            return nd
        match nd:
            case PNil():
                return nd
            case POut(s, objs, cont):
                return replace(nd, subject=_apply_subst_term(s, mm),
                               objects=tuple(_apply_subst_term(o, mm) for o in objs),
                               cont=go(cont, mm))
            case PInp(s, pats, cont):
                bound = {x for k in pats for x in placeholder_vars(k)}
                inner = {
                    "term": {k: v for k, v in mm["term"].items() if k not in bound},
                    "ident": {k: v for k, v in mm["ident"].items() if k not in bound},
                    "data": {k: v for k, v in mm["data"].items() if k not in bound},
                }
                return replace(nd, subject=_apply_subst_term(s, mm), cont=go(cont, inner))
            case PRes(n, annot, body):
                if n in value_atoms:
                    n2 = fresh_name(n, free_atoms(body) | value_atoms | act)
                    body = _rename_name(body, n, n2)
                    return replace(nd, name=n2, body=go(body, mm))
                return replace(nd, body=go(body, mm))
            case PPar(l, r):
                return replace(nd, left=go(l, mm), right=go(r, mm))
            case PRepl(body):
                return replace(nd, body=go(body, mm))
            case PIf(_, lhs, rhs, then, els):
                return replace(nd, lhs=_apply_subst_term(lhs, mm),
                               rhs=_apply_subst_term(rhs, mm),
                               then=go(then, mm), els=go(els, mm))
            case PStore(ref, datum):
                ident = datum.identity
                dat = datum.data
                if isinstance(ident, IVar) and ident.name in mm["ident"]:
                    ident = mm["ident"][ident.name]
                if isinstance(dat, DVar) and dat.name in mm["data"]:
                    dat = mm["data"][dat.name]
                elif isinstance(dat, DVar) and dat.name in mm["term"]:
                    repl = mm["term"][dat.name]
                    if isinstance(repl, TConst):
                        dat = DConst(repl.token)
                    else:
                        raise IncompatibleSubstitution(repl, PVar(dat.name))
                if ident is datum.identity and dat is datum.data:
                    return nd
                return replace(nd, datum=PrivateData(ident, dat))
            case SGroupProc(_, proc):
                return replace(nd, proc=go(proc, mm))
            case SGroupSys(_, body):
                return replace(nd, body=go(body, mm))
            case SSysPar(l, r):
                return replace(nd, left=go(l, mm), right=go(r, mm))
            case SSysRes(n, annot, body):
                if n in value_atoms:
                    n2 = fresh_name(n, free_atoms(body) | value_atoms | act)
                    body = _rename_name(body, n, n2)
                    return replace(nd, name=n2, body=go(body, mm))
                return replace(nd, body=go(body, mm))
            case SBare(proc):
                return replace(nd, proc=go(proc, mm))
            case TName(_) | TDual(_) | TConst(_) | TVar(_) | TPriv(_):
                return _apply_subst_term(nd, mm)
        raise KernelError(f"cannot substitute inside {nd!r}")

    return go(node, m)


def substitute(target, value: Term, placeholder: Placeholder):
    """Replace free occurrences of the placeholder's variables by the value's
    components, renaming bound names where needed to avoid capture. A
    replacement whose result would be ill-formed (say, a constant landing in
    subject position) is undefined, like any other incompatible pair."""
    mapping = _subst_mapping(value, placeholder)
    try:
        return _apply_subst(target, mapping)
    except IncompatibleSubstitution:
        raise
    except KernelError:
        raise IncompatibleSubstitution(value, placeholder)


# --- structural-congruence normalization --------------------------------------

def par_components(p: Process) -> list[Process]:
    match p:
        case PPar(l, r):
            return par_components(l) + par_components(r)
        case PNil():
            return []
        case _:
            return [p]


def sys_components(s: System) -> list[System]:
    match s:
        case SSysPar(l, r):
            return sys_components(l) + sys_components(r)
        case _:
            return [s]


def _par_of(comps: list[Process]) -> Process:
    if not comps:
        return NIL
    out = comps[-1]
    for c in reversed(comps[:-1]):
        out = PPar(c, out)
    return out


def _syspar_of(comps: list[System]) -> System:
    out = comps[-1]
    for c in reversed(comps[:-1]):
        out = SSysPar(c, out)
    return out


def _erased_key(node, free_colors: Optional[dict[str, str]] = None) -> str:
    """Serialization with bound tokens replaced positionally: the sort key
    for parallel components, stable under alpha-renaming. Free tokens can be
    mapped through colors so block-level binder names do not leak in."""
    counter = itertools.count()
    names: dict[str, str] = {}
    fc = free_colors or {}

    def tok(t: str, bound: dict[str, str]) -> str:
        if t in bound:
            return bound[t]
        return fc.get(t, t)

    def term(t: Term, bound) -> str:
        match t:
            case TName(n):
                return f"n:{tok(n, bound)}"
            case TDual(n):
                return f"d:{tok(n, bound)}"
            case TConst(c):
                return f"c:{c}"
            case TVar(x):
                return f"v:{tok(x, bound)}"
            case TPriv(pd):
                i = pd.identity
                istr = (f"i:{i.ident}" if isinstance(i, Known)
                        else "_" if isinstance(i, Hidden) else f"iv:{tok(i.name, bound)}")
                d = pd.data
                dstr = f"dc:{d.token}" if isinstance(d, DConst) else f"dv:{tok(d.name, bound)}"
                return f"p:{istr}#{dstr}"
        raise KernelError(str(t))

    def go(nd, bound: dict[str, str]) -> str:
        match nd:
            case PNil():
                return "0"
            case POut(s, objs, cont):
                return f"out({term(s, bound)};{','.join(term(o, bound) for o in objs)};{go(cont, bound)})"
            case PInp(s, pats, cont):
                b2 = dict(bound)
                ps = []
                for k in pats:
                    for x in placeholder_vars(k):
                        b2[x] = f"β{next(counter)}"
                    match k:
                        case PVar(x):
                            ps.append(b2[x])
                        case PPair(x, y):
                            ps.append(f"{b2[x]}#{b2[y]}")
                        case PAnon(y):
                            ps.append(f"_#{b2[y]}")
                return f"inp({term(s, bound)};{','.join(ps)};{go(cont, b2)})"
            case PRes(n, annot, body):
                b2 = dict(bound)
                b2[n] = f"ν{next(counter)}"
                return f"res({annot};{go(body, b2)})"
            case PPar(l, r):
                return f"par({go(l, bound)}|{go(r, bound)})"
            case PRepl(body):
                return f"rep({go(body, bound)})"
            case PIf(op, lhs, rhs, then, els):
                return f"if({op};{term(lhs, bound)};{term(rhs, bound)};{go(then, bound)};{go(els, bound)})"
            case PStore(ref, datum):
                return f"st({tok(ref, bound)};{term(TPriv(datum), bound)})"
            case SGroupProc(g, proc):
                return f"gp({g};{go(proc, bound)})"
            case SGroupSys(g, body):
                return f"gs({g};{go(body, bound)})"
            case SSysPar(l, r):
                return f"sp({go(l, bound)}|{go(r, bound)})"
            case SSysRes(n, annot, body):
                b2 = dict(bound)
                b2[n] = f"ν{next(counter)}"
                return f"sr({annot};{go(body, b2)})"
            case SBare(proc):
                return f"sb({go(proc, bound)})"
        raise KernelError(str(nd))

    return go(node, names)


def _hoist_proc(p: Process) -> tuple[list[tuple[str, Optional[PrivacyType]]], list[Process]]:
    """Split a normalized scope body into its restriction block and flat
    parallel components, extruding component-level restrictions upward."""
    binders: list[tuple[str, Optional[PrivacyType]]] = []
    body = p
    while isinstance(body, PRes):
        binders.append((body.name, body.annot))
        body = body.body
    comps: list[Process] = []
    for c in par_components(body):
        # component-level restrictions float up to this block
        if isinstance(c, PRes):
            inner_binders, inner_comps = _hoist_proc(c)
            taken = set(n for n, _ in binders) | free_atoms(p)
            for n, annot in inner_binders:
                avoid = taken | {b for b, _ in binders} | set().union(*[free_atoms(x) for x in comps] or [set()])
                n2 = fresh_name(n, avoid)
                if n2 != n:
                    inner_comps = [_rename_name(x, n, n2) for x in inner_comps]
                binders.append((n2, annot))
            comps.extend(inner_comps)
        else:
            comps.append(c)
    return binders, comps


def _sort_block(comps: list, binder_names: list[str]) -> list:
    """Order parallel components independently of the block binders' current
    names: binders are colored first uniformly, then by the multiset of
    component shapes referencing them."""
    holes = {n: "ν" for n in binder_names}
    keys0 = [_erased_key(c, holes) for c in comps]
    colors: dict[str, str] = {}
    for n in binder_names:
        touching = sorted(keys0[i] for i, c in enumerate(comps)
                          if n in free_atoms(c))
        colors[n] = "ν(" + "|".join(touching) + ")"
    keyed = sorted(range(len(comps)), key=lambda i: (_erased_key(comps[i], colors),
                                                     keys0[i]))
    return [comps[i] for i in keyed]


_norm_cache: dict = {}


def normalize(node):
    """Canonical representative of the structural-congruence class.

    Flattens and sorts parallel compositions, removes inert terms, hoists
    restrictions to the top of their scope block, sorts restriction blocks,
    and alpha-renames binders canonically. Never crosses group boundaries.
    """
    key = node
    try:
        hit = _norm_cache.get(key)
    except TypeError:
        hit = None
        key = None
    if hit is not None:
        return hit
    result = _normalize_fix(node)
    if key is not None and len(_norm_cache) < 100_000:
        _norm_cache[key] = result
    return result


def _normalize_fix(node):
    prev = node
    for _ in range(6):
        cur = _normalize1(prev)
        cur = _canonical_rename(cur)
        if cur == prev:
            return cur
        prev = cur
    return prev


def _normalize1(node):
    match node:
        case PNil():
            return NIL
        case POut(s, objs, cont):
            return replace(node, cont=_normalize1(cont))
        case PInp(s, pats, cont):
            return replace(node, cont=_normalize1(cont))
        case PRepl(body):
            b = _normalize1(body)
            if b == NIL:
                return NIL
            return replace(node, body=b)
        case PIf(op, lhs, rhs, then, els):
            return replace(node, then=_normalize1(then), els=_normalize1(els))
        case PStore(_, _):
            return node
        case PRes(_, _, _) | PPar(_, _):
            flat = _flatten_proc_block(node)
            return flat
        case SGroupProc(g, proc):
            p = _normalize1(proc)
            return replace(node, proc=p)
        case SGroupSys(g, body):
            b = _normalize1(body)
            if isinstance(b, SBare):
                return SGroupProc(g, b.proc)
            return replace(node, body=b)
        case SSysRes(_, _, _) | SSysPar(_, _):
            return _flatten_sys_block(node)
        case SBare(proc):
            p = _normalize1(proc)
            return SBare(p)
    raise KernelError(f"cannot normalize {node!r}")


def _flatten_proc_block(p: Process) -> Process:
    binders, comps = _hoist_proc(p)
    comps = [_normalize1(c) for c in comps]
    comps = [c for c in comps if c != NIL]
    # re-hoist: normalization of components may have exposed restrictions
    changed = True
    while changed:
        changed = False
        out: list[Process] = []
        for c in comps:
            if isinstance(c, (PRes, PPar)):
                b2, c2 = _hoist_proc(c)
                if b2 or len(c2) != 1 or c2[0] != c:
                    avoid = set(n for n, _ in binders)
                    for x in comps:
                        avoid |= free_atoms(x)
                    for n, annot in b2:
                        n2 = fresh_name(n, avoid)
                        avoid.add(n2)
                        if n2 != n:
                            c2 = [_rename_name(x, n, n2) for x in c2]
                        binders.append((n2, annot))
                    out.extend(c2)
                    changed = True
                else:
                    out.append(c)
            else:
                out.append(c)
        comps = [c for c in out if c != NIL]
    # drop binders with no occurrence (covers (new a) 0 = 0)
    used = set()
    for c in comps:
        used |= free_atoms(c)
    binders = [(n, a) for (n, a) in binders if n in used]
    comps = _sort_block(comps, [n for n, _ in binders])
    body = _par_of(comps)
    # binder order: sorted by (first-use position in the sorted body, name)
    serial = _occurrence_order(body)
    binders.sort(key=lambda na: (serial.get(na[0], 10**9), na[0]))
    for n, annot in reversed(binders):
        body = PRes(n, annot, body)
    return body


def _flatten_sys_block(s: System) -> System:
    binders: list[tuple[str, Optional[PrivacyType]]] = []
    body = s
    while isinstance(body, SSysRes):
        binders.append((body.name, body.annot))
        body = body.body
    comps: list[System] = []
    for c in sys_components(body):
        comps.append(c)
    comps = [_normalize1(c) for c in comps]
    # drop inert components and hoist nested restriction blocks
    changed = True
    while changed:
        changed = False
        out: list[System] = []
        for c in comps:
            if isinstance(c, SBare) and c.proc == NIL:
                changed = True
                continue
            if isinstance(c, SSysRes):
                inner: list[tuple[str, Optional[PrivacyType]]] = []
                b = c
                while isinstance(b, SSysRes):
                    inner.append((b.name, b.annot))
                    b = b.body
                sub = sys_components(b)
                avoid = set(n for n, _ in binders)
                for x in comps:
                    avoid |= free_atoms(x)
                for n, annot in inner:
                    n2 = fresh_name(n, avoid)
                    avoid.add(n2)
                    if n2 != n:
                        sub = [_rename_name(x, n, n2) for x in sub]
                    binders.append((n2, annot))
                out.extend(sub)
                changed = True
            elif isinstance(c, SSysPar):
                out.extend(sys_components(c))
                changed = True
            else:
                out.append(c)
        comps = out
    if not comps:
        comps = [SBare(NIL)]
    used = set()
    for c in comps:
        used |= free_atoms(c)
    binders = [(n, a) for (n, a) in binders if n in used]
    comps = _sort_block(comps, [n for n, _ in binders])
    body2 = _syspar_of(comps)
    serial = _occurrence_order(body2)
    binders.sort(key=lambda na: (serial.get(na[0], 10**9), na[0]))
    for n, annot in reversed(binders):
        body2 = SSysRes(n, annot, body2)
    return body2


def _occurrence_order(node) -> dict[str, int]:
    order: dict[str, int] = {}
    i = itertools.count()

    def see(tokens: Iterable[str]):
        for t in tokens:
            if t not in order:
                order[t] = next(i)

    def term(t: Term):
        see(tk for tk, _ in _term_tokens(t))

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
                go(cont)
            case PRes(n, _, body):
                see([n])
                go(body)
            case PPar(l, r):
                go(l)
                go(r)
            case PRepl(body):
                go(body)
            case PIf(_, lhs, rhs, then, els):
                term(lhs)
                term(rhs)
                go(then)
                go(els)
            case PStore(ref, datum):
                see([ref])
                term(TPriv(datum))
            case SGroupProc(_, proc):
                go(proc)
            case SGroupSys(_, body):
                go(body)
            case SSysPar(l, r):
                go(l)
                go(r)
            case SSysRes(n, _, body):
                see([n])
                go(body)
            case SBare(proc):
                go(proc)

    go(node)
    return order


def _canonical_rename(node):
    """Rename every binder to a canonical positional name."""
    counter = itertools.count()
    free = free_atoms(node)

    def nm(kind: str) -> str:
        while True:
            cand = f"_{kind}{next(counter)}"
            if cand not in free:
                return cand

    def term(t: Term, env: dict[str, str]) -> Term:
        match t:
            case TName(n) if n in env:
                return TName(env[n])
            case TDual(n) if n in env:
                return TDual(env[n])
            case TVar(x) if x in env:
                return TVar(env[x])
            case TPriv(pd):
                ident = pd.identity
                dat = pd.data
                if isinstance(ident, IVar) and ident.name in env:
                    ident = IVar(env[ident.name])
                if isinstance(dat, DVar) and dat.name in env:
                    dat = DVar(env[dat.name])
                if ident is pd.identity and dat is pd.data:
                    return t
                return TPriv(PrivateData(ident, dat))
            case _:
                return t

    def go(nd, env: dict[str, str]):
        match nd:
            case PNil():
                return nd
            case POut(s, objs, cont):
                return replace(nd, subject=term(s, env),
                               objects=tuple(term(o, env) for o in objs),
                               cont=go(cont, env))
            case PInp(s, pats, cont):
                env2 = dict(env)
                new_pats = []
                for k in pats:
                    match k:
                        case PVar(x):
                            env2[x] = nm("x")
                            new_pats.append(PVar(env2[x]))
                        case PPair(x, y):
                            env2[x] = nm("x")
                            env2[y] = nm("x")
                            new_pats.append(PPair(env2[x], env2[y]))
                        case PAnon(y):
                            env2[y] = nm("x")
                            new_pats.append(PAnon(env2[y]))
                return replace(nd, subject=term(s, env), patterns=tuple(new_pats),
                               cont=go(cont, env2))
            case PRes(n, annot, body):
                env2 = dict(env)
                env2[n] = nm("n")
                return replace(nd, name=env2[n], body=go(body, env2))
            case PPar(l, r):
                return replace(nd, left=go(l, env), right=go(r, env))
            case PRepl(body):
                return replace(nd, body=go(body, env))
            case PIf(_, lhs, rhs, then, els):
                return replace(nd, lhs=term(lhs, env), rhs=term(rhs, env),
                               then=go(then, env), els=go(els, env))
            case PStore(ref, datum):
                d = term(TPriv(datum), env)
                assert isinstance(d, TPriv)
                return replace(nd, ref=env.get(ref, ref), datum=d.pdata)
            case SGroupProc(_, proc):
                return replace(nd, proc=go(proc, env))
            case SGroupSys(_, body):
                return replace(nd, body=go(body, env))
            case SSysPar(l, r):
                return replace(nd, left=go(l, env), right=go(r, env))
            case SSysRes(n, annot, body):
                env2 = dict(env)
                env2[n] = nm("n")
                return replace(nd, name=env2[n], body=go(body, env2))
            case SBare(proc):
                return replace(nd, proc=go(proc, env))
        raise KernelError(str(nd))

    return go(node, {})


# --- alpha equivalence ---------------------------------------------------------

def alpha_eq(p, q) -> bool:
    """Equality up to consistent renaming of bound names and variables."""

    def term(t: Term, u: Term, env: dict[str, str], venv: dict[str, str]) -> bool:
        match (t, u):
            case (TName(a), TName(b)) | (TDual(a), TDual(b)):
                return env.get(a, a) == b
            case (TConst(a), TConst(b)):
                return a == b
            case (TVar(a), TVar(b)):
                return venv.get(a, a) == b
            case (TPriv(pa), TPriv(pb)):
                ia, ib = pa.identity, pb.identity
                da, db = pa.data, pb.data
                iok = ((isinstance(ia, Known) and isinstance(ib, Known) and ia.ident == ib.ident)
                       or (isinstance(ia, Hidden) and isinstance(ib, Hidden))
                       or (isinstance(ia, IVar) and isinstance(ib, IVar)
                           and venv.get(ia.name, ia.name) == ib.name))
                dok = ((isinstance(da, DConst) and isinstance(db, DConst) and da.token == db.token)
                       or (isinstance(da, DVar) and isinstance(db, DVar)
                           and venv.get(da.name, da.name) == db.name))
                return iok and dok
            case _:
                return False

    def go(a, b, env: dict[str, str], venv: dict[str, str]) -> bool:
        if type(a) is not type(b):
            return False
        match (a, b):
            case (PNil(), PNil()):
                return True
            case (POut(s1, o1, c1), POut(s2, o2, c2)):
                return (len(o1) == len(o2) and term(s1, s2, env, venv)
                        and all(term(x, y, env, venv) for x, y in zip(o1, o2))
                        and go(c1, c2, env, venv))
            case (PInp(s1, k1, c1), PInp(s2, k2, c2)):
                if len(k1) != len(k2) or not term(s1, s2, env, venv):
                    return False
                venv2 = dict(venv)
                for ka, kb in zip(k1, k2):
                    if type(ka) is not type(kb):
                        return False
                    for xa, xb in zip(placeholder_vars(ka), placeholder_vars(kb)):
                        venv2[xa] = xb
                return go(c1, c2, env, venv2)
            case (PRes(n1, a1, b1), PRes(n2, a2, b2)):
                if a1 != a2:
                    return False
                env2 = dict(env)
                env2[n1] = n2
                return go(b1, b2, env2, venv)
            case (PPar(l1, r1), PPar(l2, r2)) | (SSysPar(l1, r1), SSysPar(l2, r2)):
                return go(l1, l2, env, venv) and go(r1, r2, env, venv)
            case (PRepl(b1), PRepl(b2)):
                return go(b1, b2, env, venv)
            case (PIf(op1, x1, y1, t1, e1), PIf(op2, x2, y2, t2, e2)):
                return (op1 == op2 and term(x1, x2, env, venv) and term(y1, y2, env, venv)
                        and go(t1, t2, env, venv) and go(e1, e2, env, venv))
            case (PStore(r1, d1), PStore(r2, d2)):
                return env.get(r1, r1) == r2 and term(TPriv(d1), TPriv(d2), env, venv)
            case (SGroupProc(g1, p1), SGroupProc(g2, p2)):
                return g1 == g2 and go(p1, p2, env, venv)
            case (SGroupSys(g1, s1), SGroupSys(g2, s2)):
                return g1 == g2 and go(s1, s2, env, venv)
            case (SSysRes(n1, a1, b1), SSysRes(n2, a2, b2)):
                if a1 != a2:
                    return False
                env2 = dict(env)
                env2[n1] = n2
                return go(b1, b2, env2, venv)
            case (SBare(p1), SBare(p2)):
                return go(p1, p2, env, venv)
        return False

    return go(p, q, {}, {})

"""Labelled transition semantics: label duality, transition enumeration,
bounded state-graph exploration, and the type-preservation harness.

Internal steps are found by pairing one side's output capabilities with the
other side's input capabilities under the duality relation; store endpoints
additionally admit the anonymised exchange of private data.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .kernel import (
    DConst, HIDDEN, Hidden, IVar, Known, PIf, PInp, PNil, POut, PPar, PRepl,
    PRes, PStore, PrivacyType, PrivateData, SBare, SGroupProc, SGroupSys,
    SSysPar, SSysRes, System, TChan, TConst, TDual, TName, TPriv, TPurpose,
    TVar, Term, IncompatibleSubstitution, free_atoms, fresh_name, normalize,
    substitute, _rename_name,
)
from .syntax import Gamma, render_process, render_system, render_term
from .typesys import Theta, TypingError, interface_leq, type_system

__all__ = [
    "OutLabel", "InpLabel", "TAU", "Label", "dual",
    "transitions", "tau_successors", "StateGraph", "explore",
    "PreservationReport", "check_preservation", "state_key", "default_universe",
]


@dataclass(frozen=True)
class OutLabel:
    subject: str
    on_dual: bool
    objects: tuple[Term, ...]
    extruded: tuple[tuple[str, Optional[PrivacyType]], ...] = ()

    def render(self) -> str:
        nu = ""
        if self.extruded:
            nu = "(new " + ", ".join(n for n, _ in self.extruded) + ") "
        s = ("~" if self.on_dual else "") + self.subject
        return f"{nu}{s}!<{', '.join(render_term(o) for o in self.objects)}>"


@dataclass(frozen=True)
class InpLabel:
    subject: str
    on_dual: bool
    objects: tuple[Term, ...]

    def render(self) -> str:
        s = ("~" if self.on_dual else "") + self.subject
        return f"{s}?({', '.join(render_term(o) for o in self.objects)})"


class _Tau:
    def render(self) -> str:
        return "tau"

    def __repr__(self) -> str:
        return "TAU"


TAU = _Tau()
Label = Union[OutLabel, InpLabel, _Tau]


def _anonymized(v: Term) -> Optional[Term]:
    if isinstance(v, TPriv) and isinstance(v.pdata.identity, Known) \
            and isinstance(v.pdata.data, DConst):
        return TPriv(PrivateData(HIDDEN, v.pdata.data))
    return None


def _component_dual(v_out: Term, v_in: Term, anonymize_out: bool) -> bool:
    if v_out == v_in:
        return True
    if anonymize_out:
        return _anonymized(v_out) == v_in
    return False


def dual(l1: Label, l2: Label) -> bool:
    """The symmetric duality relation over labels. Channel endpoints match
    on identical objects; reference endpoints additionally match a known
    datum on the store side against its anonymised form on the other."""
    if isinstance(l1, InpLabel) and isinstance(l2, OutLabel):
        l1, l2 = l2, l1
    if not (isinstance(l1, OutLabel) and isinstance(l2, InpLabel)):
        return False
    if l1.subject != l2.subject or len(l1.objects) != len(l2.objects):
        return False
    if not l1.on_dual and not l2.on_dual:
        return all(a == b for a, b in zip(l1.objects, l2.objects))
    if l1.on_dual and not l2.on_dual:
        # store output against a client input: the client may see it anonymised
        return all(_component_dual(a, b, True) for a, b in zip(l1.objects, l2.objects))
    if not l1.on_dual and l2.on_dual:
        # client output against a store input: the client may write anonymously
        return all(_component_dual(b, a, True) for a, b in zip(l1.objects, l2.objects))
    return False


# --- conditional evaluation ---------------------------------------------------------

def _numeric(t: Term) -> Optional[int]:
    tok = None
    if isinstance(t, TConst):
        tok = t.token
    elif isinstance(t, TPriv) and isinstance(t.pdata.data, DConst):
        tok = t.pdata.data.token
    if tok is not None and tok.isdigit():
        return int(tok)
    return None


def _eval_cond(op: str, lhs: Term, rhs: Term) -> Optional[bool]:
    if op == ">":
        a, b = _numeric(lhs), _numeric(rhs)
        if a is None or b is None:
            return None
        return a > b
    for t in (lhs, rhs):
        if isinstance(t, TVar):
            return None
        if isinstance(t, TPriv) and not t.pdata.is_constant:
            return None
    if isinstance(lhs, TPriv) and isinstance(rhs, TPriv):
        da, db = lhs.pdata.data, rhs.pdata.data
        ia, ib = lhs.pdata.identity, rhs.pdata.identity
        if da != db:
            return False
        if isinstance(ia, Hidden) or isinstance(ib, Hidden):
            return True
        return ia == ib
    if isinstance(lhs, TPriv) or isinstance(rhs, TPriv):
        pd, other = (lhs, rhs) if isinstance(lhs, TPriv) else (rhs, lhs)
        if isinstance(other, (TConst, TName)):
            tok = other.token if isinstance(other, TConst) else other.name
            return pd.pdata.data == DConst(tok)
        return None
    ta = lhs.name if isinstance(lhs, TName) else lhs.token
    tb = rhs.name if isinstance(rhs, TName) else rhs.token
    return ta == tb


def _closed_term(t: Term) -> bool:
    if isinstance(t, TVar):
        return False
    if isinstance(t, TPriv):
        return t.pdata.is_constant
    return True


# --- output capabilities ------------------------------------------------------------

def _rename_clash(label: OutLabel, succ, avoid: frozenset[str]) -> tuple[OutLabel, object]:
    for n, annot in label.extruded:
        if n in avoid:
            n2 = fresh_name(n, avoid | free_atoms(succ) |
                            {m for m, _ in label.extruded})
            succ = _rename_name(succ, n, n2)
            objects = tuple(_rename_term(o, n, n2) for o in label.objects)
            extruded = tuple((n2 if m == n else m, a) for m, a in label.extruded)
            label = OutLabel(label.subject, label.on_dual, objects, extruded)
    return label, succ


def _rename_term(t: Term, old: str, new: str) -> Term:
    if isinstance(t, TName) and t.name == old:
        return TName(new)
    if isinstance(t, TDual) and t.name == old:
        return TDual(new)
    return t


def visible_outs(node) -> list[tuple[OutLabel, object]]:
    out: list[tuple[OutLabel, object]] = []
    match node:
        case PNil():
            pass
        case POut(subject, objects, cont):
            if isinstance(subject, (TName, TDual)) and all(_closed_term(o) for o in objects):
                out.append((OutLabel(subject.name, isinstance(subject, TDual), objects), cont))
        case PInp(_, _, _):
            pass
        case PStore(ref, datum):
            if datum.is_constant:
                out.append((OutLabel(ref, True, (TPriv(datum),)), node))
        case PRes(name, annot, body):
            for label, succ in visible_outs(body):
                if label.subject == name:
                    continue
                objs_atoms = set()
                for o in label.objects:
                    objs_atoms |= free_atoms(o)
                if name in objs_atoms:
                    label = OutLabel(label.subject, label.on_dual, label.objects,
                                     label.extruded + ((name, annot),))
                    out.append((label, succ))
                else:
                    out.append((label, PRes(name, annot, succ)))
        case PPar(l, r):
            for label, succ in visible_outs(l):
                label, succ = _rename_clash(label, succ, free_atoms(r))
                out.append((label, PPar(succ, r)))
            for label, succ in visible_outs(r):
                label, succ = _rename_clash(label, succ, free_atoms(l))
                out.append((label, PPar(l, succ)))
        case PRepl(body):
            for label, succ in visible_outs(body):
                out.append((label, PPar(succ, node)))
        case PIf(op, lhs, rhs, then, els):
            v = _eval_cond(op, lhs, rhs)
            if v is True:
                out.extend(visible_outs(then))
            elif v is False:
                out.extend(visible_outs(els))
        case SBare(proc):
            out.extend((lb, SBare(sc)) for lb, sc in visible_outs(proc))
        case SGroupProc(g, proc):
            out.extend((lb, SGroupProc(g, sc)) for lb, sc in visible_outs(proc))
        case SGroupSys(g, body):
            out.extend((lb, SGroupSys(g, sc)) for lb, sc in visible_outs(body))
        case SSysRes(name, annot, body):
            for label, succ in visible_outs(body):
                if label.subject == name:
                    continue
                objs_atoms = set()
                for o in label.objects:
                    objs_atoms |= free_atoms(o)
                if name in objs_atoms:
                    label = OutLabel(label.subject, label.on_dual, label.objects,
                                     label.extruded + ((name, annot),))
                    out.append((label, succ))
                else:
                    out.append((label, SSysRes(name, annot, succ)))
        case SSysPar(l, r):
            for label, succ in visible_outs(l):
                label, succ = _rename_clash(label, succ, free_atoms(r))
                out.append((label, SSysPar(succ, r)))
            for label, succ in visible_outs(r):
                label, succ = _rename_clash(label, succ, free_atoms(l))
                out.append((label, SSysPar(l, succ)))
    return out


# --- input capabilities -------------------------------------------------------------

def feed(node, subject: str, to_dual: bool, values: tuple[Term, ...]) -> list:
    """All ways the node can consume the given delivery. For a store input
    (to_dual) the delivery is the writer's object and the store applies the
    endpoint duality itself."""
    out: list = []
    match node:
        case PNil() | POut(_, _, _):
            pass
        case PInp(subj, patterns, cont):
            if (not to_dual and isinstance(subj, TName) and subj.name == subject
                    and len(patterns) == len(values)):
                try:
                    body = cont
                    for k, v in zip(patterns, values):
                        body = substitute(body, v, k)
                    out.append(body)
                except IncompatibleSubstitution:
                    pass
        case PStore(ref, datum):
            if to_dual and ref == subject and len(values) == 1:
                v = values[0]
                if isinstance(v, TPriv) and v.pdata.is_constant:
                    wid, wdat = v.pdata.identity, v.pdata.data
                    if isinstance(wid, Known):
                        # plain write: the store must be uninitialised or match
                        if isinstance(datum.identity, IVar) or datum.identity == wid:
                            out.append(PStore(ref, PrivateData(wid, wdat)))
                    elif isinstance(wid, Hidden) and isinstance(datum.identity, Known):
                        # anonymous write keeps the store's identity
                        out.append(PStore(ref, PrivateData(datum.identity, wdat)))
        case PRes(name, annot, body):
            if name != subject:
                atoms = set()
                for v in values:
                    atoms |= free_atoms(v)
                if name in atoms:
                    n2 = fresh_name(name, atoms | free_atoms(body))
                    body = _rename_name(body, name, n2)
                    name = n2
                for succ in feed(body, subject, to_dual, values):
                    out.append(PRes(name, annot, succ))
        case PPar(l, r):
            for succ in feed(l, subject, to_dual, values):
                out.append(PPar(succ, r))
            for succ in feed(r, subject, to_dual, values):
                out.append(PPar(l, succ))
        case PRepl(body):
            for succ in feed(body, subject, to_dual, values):
                out.append(PPar(succ, node))
        case PIf(op, lhs, rhs, then, els):
            v = _eval_cond(op, lhs, rhs)
            if v is True:
                out.extend(feed(then, subject, to_dual, values))
            elif v is False:
                out.extend(feed(els, subject, to_dual, values))
        case SBare(proc):
            out.extend(SBare(s) for s in feed(proc, subject, to_dual, values))
        case SGroupProc(g, proc):
            out.extend(SGroupProc(g, s) for s in feed(proc, subject, to_dual, values))
        case SGroupSys(g, body):
            out.extend(SGroupSys(g, s) for s in feed(body, subject, to_dual, values))
        case SSysRes(name, annot, body):
            if name != subject:
                atoms = set()
                for v in values:
                    atoms |= free_atoms(v)
                if name in atoms:
                    n2 = fresh_name(name, atoms | free_atoms(body))
                    body = _rename_name(body, name, n2)
                    name = n2
                for succ in feed(body, subject, to_dual, values):
                    out.append(SSysRes(name, annot, succ))
        case SSysPar(l, r):
            for succ in feed(l, subject, to_dual, values):
                out.append(SSysPar(succ, r))
            for succ in feed(r, subject, to_dual, values):
                out.append(SSysPar(l, succ))
    return out


def _deliveries(label: OutLabel, refs: frozenset[str]
                ) -> list[tuple[str, bool, tuple[Term, ...]]]:
    """The (subject, to_dual, values) attempts dual to an output label.
    Plain outputs on reference names only reach the store endpoint: clients
    of a store do not exchange data with each other directly."""
    if label.on_dual:
        # store emitting: a client may receive the anonymised form, per component
        variants: list[list[Term]] = [[]]
        for o in label.objects:
            alts = [o]
            anon = _anonymized(o)
            if anon is not None:
                alts.append(anon)
            variants = [v + [a] for v in variants for a in alts]
        return [(label.subject, False, tuple(v)) for v in variants]
    attempts = []
    if label.subject not in refs:
        attempts.append((label.subject, False, label.objects))
    # a plain output may be a store write on the dual endpoint
    attempts.append((label.subject, True, label.objects))
    return attempts


_PROC_TYPES = (PNil, POut, PInp, PRes, PPar, PRepl, PIf, PStore)


def reference_names(node) -> frozenset[str]:
    """Names used as store references anywhere in the term."""
    out: set[str] = set()

    def go(nd):
        match nd:
            case PStore(ref, _):
                out.add(ref)
            case POut(_, _, cont) | PInp(_, _, cont) | PRes(_, _, cont) | PRepl(cont):
                go(cont)
            case PPar(l, r) | SSysPar(l, r):
                go(l)
                go(r)
            case PIf(_, _, _, t, e):
                go(t)
                go(e)
            case SBare(p) | SGroupProc(_, p):
                go(p)
            case SGroupSys(_, b) | SSysRes(_, _, b):
                go(b)
            case _:
                pass

    go(node)
    return frozenset(out)


def _pair(outs_side, other, wrap, refs: frozenset[str]) -> list:
    """Internal steps from one side's outputs against the other's inputs;
    names the output extrudes get re-restricted around the pair."""
    out = []
    for label, succ in outs_side:
        label, succ = _rename_clash(label, succ, free_atoms(other))
        for subject, to_dual, values in _deliveries(label, refs):
            for osucc in feed(other, subject, to_dual, values):
                combined = wrap(succ, osucc)
                for name, annot in reversed(label.extruded):
                    if isinstance(combined, _PROC_TYPES):
                        combined = PRes(name, annot, combined)
                    else:
                        combined = SSysRes(name, annot, combined)
                out.append(combined)
    return out


def tau_successors(node, refs: Optional[frozenset[str]] = None) -> list:
    if refs is None:
        refs = reference_names(node)
    out: list = []
    match node:
        case PNil() | POut(_, _, _) | PInp(_, _, _) | PStore(_, _):
            pass
        case PRes(name, annot, body):
            out.extend(PRes(name, annot, s) for s in tau_successors(body, refs))
        case PPar(l, r):
            out.extend(PPar(s, r) for s in tau_successors(l, refs))
            out.extend(PPar(l, s) for s in tau_successors(r, refs))
            out.extend(_pair(visible_outs(l), r, lambda a, b: PPar(a, b), refs))
            out.extend(_pair(visible_outs(r), l, lambda a, b: PPar(b, a), refs))
        case PRepl(body):
            out.extend(PPar(s, node) for s in tau_successors(body, refs))
        case PIf(op, lhs, rhs, then, els):
            v = _eval_cond(op, lhs, rhs)
            if v is True:
                out.extend(tau_successors(then, refs))
            elif v is False:
                out.extend(tau_successors(els, refs))
        case SBare(proc):
            out.extend(SBare(s) for s in tau_successors(proc, refs))
        case SGroupProc(g, proc):
            out.extend(SGroupProc(g, s) for s in tau_successors(proc, refs))
        case SGroupSys(g, body):
            out.extend(SGroupSys(g, s) for s in tau_successors(body, refs))
        case SSysRes(name, annot, body):
            out.extend(SSysRes(name, annot, s) for s in tau_successors(body, refs))
        case SSysPar(l, r):
            out.extend(SSysPar(s, r) for s in tau_successors(l, refs))
            out.extend(SSysPar(l, s) for s in tau_successors(r, refs))
            out.extend(_pair(visible_outs(l), r, lambda a, b: SSysPar(a, b), refs))
            out.extend(_pair(visible_outs(r), l, lambda a, b: SSysPar(b, a), refs))
    return out


# --- visible input labels over a value universe --------------------------------------

def default_universe(gamma: Gamma) -> list[Term]:
    """The constants the environment knows, plus one fresh symbol per
    channel-typed name, for open simulation."""
    values: list[Term] = []
    for tok, ty in sorted(gamma.atoms.items()):
        if isinstance(ty, TPurpose):
            values.append(TConst(tok))
        elif isinstance(ty, TChan):
            values.append(TName(tok))
    for (itok, dtok), _ in sorted(gamma.privs.items()):
        if itok == "_":
            values.append(TPriv(PrivateData(HIDDEN, DConst(dtok))))
        else:
            values.append(TPriv(PrivateData(Known(itok), DConst(dtok))))
    return values


def input_labels(node, universe: Iterable[Term], cap: int = 256
                 ) -> list[tuple[InpLabel, object]]:
    """Input transitions the node offers for values drawn from a universe."""
    universe = list(universe)
    out: list[tuple[InpLabel, object]] = []

    def collect_inps(nd):
        found: list[tuple[str, int]] = []
        match nd:
            case PInp(subj, patterns, _):
                if isinstance(subj, TName):
                    found.append((subj.name, len(patterns)))
            case PStore(ref, _):
                found.append((ref, 1))
            case POut(_, _, _) | PNil():
                pass
            case PRes(_, _, body) | PRepl(body) | SGroupSys(_, body) | SSysRes(_, _, body):
                found.extend(collect_inps(body))
            case PPar(l, r) | SSysPar(l, r):
                found.extend(collect_inps(l))
                found.extend(collect_inps(r))
            case PIf(_, _, _, then, els):
                found.extend(collect_inps(then))
                found.extend(collect_inps(els))
            case SBare(p) | SGroupProc(_, p):
                found.extend(collect_inps(p))
        return found

    for subject, arity in sorted(set(collect_inps(node))):
        for values in itertools.islice(itertools.product(universe, repeat=arity), cap):
            for to_dual in (False, True):
                for succ in feed(node, subject, to_dual, tuple(values)):
                    out.append((InpLabel(subject, to_dual, tuple(values)), succ))
    return out


def transitions(node, universe: Optional[Iterable[Term]] = None
                ) -> list[tuple[Label, object]]:
    """Immediate transitions: outputs, internal steps, and (when a universe
    is supplied) input transitions for values drawn from it."""
    out: list[tuple[Label, object]] = list(visible_outs(node))
    out.extend((TAU, s) for s in tau_successors(node))
    if universe is not None:
        out.extend(input_labels(node, universe))
    return out


# --- bounded exploration --------------------------------------------------------------

def state_key(node) -> str:
    norm = normalize(node)
    txt = render_system(norm) if not isinstance(
        norm, (PNil, POut, PInp, PRes, PPar, PRepl, PIf, PStore)) else render_process(norm)
    return hashlib.sha256(txt.encode()).hexdigest()[:12]


@dataclass
class StateGraph:
    root: str
    nodes: dict[str, object] = field(default_factory=dict)
    edges: list[tuple[str, str, str]] = field(default_factory=list)
    truncated: bool = False
    depths: dict[str, int] = field(default_factory=dict)

    def trace_lines(self) -> list[str]:
        return [f"{src} --{lab}--> {dst}" for src, lab, dst in self.edges]

    def dot(self) -> str:
        lines = ["digraph states {"]
        for key in self.nodes:
            shape = "doublecircle" if key == self.root else "circle"
            lines.append(f'  "{key}" [shape={shape}];')
        for src, lab, dst in self.edges:
            lines.append(f'  "{src}" -> "{dst}" [label="{lab}"];')
        lines.append("}")
        return "\n".join(lines)


def explore(s: System, depth: int) -> StateGraph:
    """Breadth-first internal-step exploration up to the depth bound, with
    states deduplicated by their canonical form."""
    root = normalize(s)
    rkey = state_key(root)
    graph = StateGraph(root=rkey)
    graph.nodes[rkey] = root
    graph.depths[rkey] = 0
    frontier = [(rkey, root)]
    seen_edges: set[tuple[str, str, str]] = set()
    for d in range(depth):
        nxt: list[tuple[str, object]] = []
        for key, node in frontier:
            for succ in tau_successors(node):
                sn = normalize(succ)
                skey = state_key(sn)
                if skey not in graph.nodes:
                    graph.nodes[skey] = sn
                    graph.depths[skey] = d + 1
                    nxt.append((skey, sn))
                edge = (key, "tau", skey)
                if edge not in seen_edges:
                    seen_edges.add(edge)
                    graph.edges.append(edge)
        frontier = nxt
        if not frontier:
            break
    else:
        if frontier and any(tau_successors(n) for _, n in frontier):
            graph.truncated = True
    return graph


# --- type preservation harness ---------------------------------------------------------

@dataclass
class PreservationReport:
    edges_checked: int = 0
    violations: list[str] = field(default_factory=list)
    truncated: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations

    def render(self) -> str:
        status = "ok" if self.ok else "VIOLATIONS"
        lines = [f"preservation: {status} ({self.edges_checked} edges"
                 f"{', truncated' if self.truncated else ''})"]
        lines += [f"  {v}" for v in self.violations]
        return "\n".join(lines)


def check_preservation(gamma: Gamma, s: System, depth: int,
                       id_direction: str = "anon") -> PreservationReport:
    """Re-type every internal-step successor and check the interface never
    grows along an edge."""
    graph = explore(s, depth)
    report = PreservationReport(truncated=graph.truncated)
    thetas: dict[str, Theta] = {}

    def theta_of(key: str) -> Optional[Theta]:
        if key not in thetas:
            try:
                thetas[key] = type_system(gamma, graph.nodes[key],
                                          id_direction=id_direction).theta
            except TypingError as e:
                thetas[key] = None
                report.violations.append(f"state {key} fails to type: {e}")
        return thetas[key]

    for src, _, dst in graph.edges:
        report.edges_checked += 1
        t0 = theta_of(src)
        t1 = theta_of(dst)
        if t0 is None or t1 is None:
            continue
        if not interface_leq(t1, t0):
            report.violations.append(
                f"interface grows on {src} -> {dst}: {t1!r} not below {t0!r}")
    return report

"""Static error-system detection against a policy, reference counting for
dissemination budgets, and the bounded safety scan over reachable states."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .kernel import (
    IVar, Known, PIf, PInp, PNil, POut, PPair, PPar, PRepl, PRes, PStore,
    PrivacyType, Process, SBare, SGroupProc, SGroupSys, SSysPar, SSysRes,
    Span, System, TChan, TName, TPrivate, TVar, Term, normalize,
    par_components,
)
from .policy import Hierarchy, PermSet, Policy, flatten, NotFound
from .syntax import Gamma, render_process
from .typesys import (TypingError, _bind_pattern, _infer_binder_type,
                      _resolve_operand, type_value)
from .semantics import explore

__all__ = ["ErrorFinding", "count_links", "detect_errors", "safety_scan", "ScanReport"]


@dataclass(frozen=True)
class ErrorFinding:
    clause: int
    ptype: str
    group_path: tuple[str, ...]
    permission: str
    subterm: str
    span: Optional[Span] = field(default=None, compare=False)

    def render(self) -> str:
        path = ".".join(self.group_path) or "<bare>"
        return (f"clause {self.clause}: {self.ptype} at {path}: "
                f"{self.permission} [{self.subterm}]")

    def record(self) -> dict:
        return {
            "clause": self.clause,
            "type": self.ptype,
            "path": ".".join(self.group_path),
            "permission": self.permission,
            "span": str(self.span) if self.span else "",
            "subterm": self.subterm,
        }


def _subject_type(gamma: Gamma, subject) -> Optional[TChan]:
    if isinstance(subject, (TName, TVar)):
        ty = gamma.atom_type(subject.name)
        if isinstance(ty, TChan):
            return ty
    return None


def _object_type(gamma: Gamma, obj: Term) -> Optional[PrivacyType]:
    try:
        ty, _ = type_value(gamma, obj)
        return ty
    except TypingError:
        return None


def _is_ref_to(ty, ptype: Optional[str] = None) -> bool:
    return (isinstance(ty, TChan) and len(ty.payload) == 1
            and isinstance(ty.payload[0], TPrivate)
            and (ptype is None or ty.payload[0].ptype == ptype))


def count_links(p: Process, gamma: Gamma, target: TChan, literal: bool = False,
                subject_group: Optional[str] = None) -> int:
    """Count output prefixes whose object carries the target's payload.

    Default reading: the object's type is the reference type itself.
    Literal reading: the object's type is the bare payload type. With
    subject_group set, the carrying channel's group must match and the
    object may be a reference of any group to the payload (the
    dissemination shape a budget bounds).
    """
    if not (len(target.payload) == 1 and isinstance(target.payload[0], TPrivate)):
        raise ValueError("count_links target must be a reference type")
    want_payload = target.payload[0]

    def obj_hit(gamma2: Gamma, obj: Term) -> bool:
        ty = _object_type(gamma2, obj)
        if literal:
            return ty == want_payload
        if subject_group is not None:
            return _is_ref_to(ty) and ty.payload[0] == want_payload
        return ty == target

    def go(nd: Process, gamma2: Gamma) -> int:
        match nd:
            case PNil() | PStore(_, _):
                return 0
            case POut(subject, objects, cont):
                n = 0
                sty = _subject_type(gamma2, subject)
                group_ok = subject_group is None or (sty is not None
                                                     and sty.group == subject_group)
                if group_ok:
                    n += sum(1 for o in objects if obj_hit(gamma2, o))
                return n + go(cont, gamma2)
            case PInp(subject, patterns, cont):
                g3 = gamma2
                sty = _subject_type(gamma2, subject)
                if sty is not None and len(sty.payload) == len(patterns):
                    annots = nd.annots or tuple(None for _ in patterns)
                    for k, ty, an in zip(patterns, sty.payload, annots):
                        try:
                            g3, _ = _bind_pattern(g3, k, ty, an)
                        except TypingError:
                            pass
                return go(cont, g3)
            case PRes(name, annot, body):
                ty = annot or _infer_binder_type(gamma2, name, body)
                g3 = gamma2.bind_atom(name, ty) if ty is not None else gamma2
                return go(body, g3)
            case PPar(l, r):
                return go(l, gamma2) + go(r, gamma2)
            case PRepl(body):
                return go(body, gamma2)
            case PIf(_, _, _, then, els):
                return go(then, gamma2) + go(els, gamma2)
        return 0

    return go(p, gamma)


@dataclass
class _ClauseCtx:
    policy: Policy
    path: tuple[str, ...]
    permis: dict[str, Optional[PermSet]]  # policy type -> accumulated grant
    nd_nodes: dict[str, list[tuple[tuple[str, ...], Hierarchy]]]
    findings: list[ErrorFinding]
    id_direction: str
    countlink_literal: bool


def _grants(policy: Policy, path: tuple[str, ...]) -> tuple[dict, dict]:
    """Accumulated permissions and nondisclosure-carrying ancestors along a
    group path, per policy-bound type; paths outside the hierarchy grant
    nothing."""
    permis: dict[str, Optional[PermSet]] = {}
    nd_nodes: dict[str, list[tuple[tuple[str, ...], Hierarchy]]] = {}
    for t in policy.types():
        h = policy.lookup(t)
        flat = flatten(h, path) if path else NotFound((), "<root>")
        permis[t] = None if isinstance(flat, NotFound) else flat.perms
        nodes: list[tuple[tuple[str, ...], Hierarchy]] = []
        node = h
        walked: tuple[str, ...] = ()
        if path and h.group == path[0]:
            walked = (h.group,)
            if node.perms.nondisclose_kinds():
                nodes.append((walked, node))
            for g in path[1:]:
                node = next((c for c in node.children if c.group == g), None)
                if node is None:
                    break
                walked = walked + (g,)
                if node.perms.nondisclose_kinds():
                    nodes.append((walked, node))
        nd_nodes[t] = nodes
    return permis, nd_nodes


def _perm_of(ctx: _ClauseCtx, t: str) -> PermSet:
    ps = ctx.permis.get(t)
    return ps if ps is not None else PermSet()


def _emit(ctx: _ClauseCtx, clause: int, t: str, perm: str, nd, span=None):
    ctx.findings.append(ErrorFinding(clause, t, ctx.path, perm,
                                     render_process(nd) if not isinstance(nd, str) else nd,
                                     span))


def _scan_if(ctx: _ClauseCtx, gamma: Gamma, nd: PIf):
    try:
        a = _resolve_operand(gamma, nd.lhs, nd.span)
        b = _resolve_operand(gamma, nd.rhs, nd.span)
    except TypingError:
        return
    if a.kind == "private" and b.kind == "private" and a.hidden != b.hidden:
        known, anon = (b, a) if a.hidden else (a, b)
        if ctx.id_direction == "known":
            holder, other = known.ptype, anon.ptype
        else:
            holder, other = anon.ptype, known.ptype
        if holder in ctx.permis:
            from .policy import identify
            if identify(other) not in _perm_of(ctx, holder):
                _emit(ctx, 9, holder, f"identify {other}", nd, nd.span)
    if {"private", "purpose"} == {a.kind, b.kind}:
        datum, purp = (a, b) if a.kind == "private" else (b, a)
        if (not datum.hidden or nd.op == ">") and datum.ptype in ctx.permis:
            if purp.ptype not in _perm_of(ctx, datum.ptype).usage_purposes():
                _emit(ctx, 8, datum.ptype, f"usage {purp.ptype}", nd, nd.span)


def _unifiable(i1, i2) -> bool:
    if isinstance(i1, IVar) or isinstance(i2, IVar):
        return True
    return isinstance(i1, Known) and isinstance(i2, Known) and i1 == i2


def _scan_process(ctx: _ClauseCtx, gamma: Gamma, p: Process):
    comps = par_components(p) or [p]
    # clause 7: parallel stores with unifiable identities
    stores = [c for c in comps if isinstance(c, PStore)]
    for i in range(len(stores)):
        for j in range(i + 1, len(stores)):
            s1, s2 = stores[i], stores[j]
            if not _unifiable(s1.datum.identity, s2.datum.identity):
                continue
            pair = f"{render_process(s1)} | {render_process(s2)}"
            for st in (s1, s2):
                ty = _subject_type(gamma, TName(st.ref))
                if _is_ref_to(ty):
                    t = ty.payload[0].ptype
                    if t in ctx.permis and not _perm_of(ctx, t).has_kind("aggregate"):
                        _emit(ctx, 7, t, "aggregate", pair, st.span)
    for c in comps:
        _scan_component(ctx, gamma, c)


def _scan_component(ctx: _ClauseCtx, gamma: Gamma, nd: Process):
    match nd:
        case PNil():
            return
        case PStore(ref, _):
            ty = _subject_type(gamma, TName(ref))
            if _is_ref_to(ty):
                t = ty.payload[0].ptype
                if t in ctx.permis and not _perm_of(ctx, t).has_kind("store"):
                    _emit(ctx, 6, t, "store", nd, nd.span)
            return
        case POut(subject, objects, cont):
            sty = _subject_type(gamma, subject)
            if sty is not None and len(sty.payload) == len(objects):
                for want in sty.payload:
                    if isinstance(want, TPrivate) and want.ptype in ctx.permis:
                        if not _perm_of(ctx, want.ptype).has_kind("update"):
                            _emit(ctx, 2, want.ptype, "update", nd, nd.span)
                    if _is_ref_to(want):
                        t = want.payload[0].ptype
                        if t in ctx.permis:
                            allowed = _perm_of(ctx, t)
                            if allowed.diss_budget(sty.group) is None:
                                _emit(ctx, 4, t, f"disseminate {sty.group}", nd, nd.span)
                            for npath, hnode in ctx.nd_nodes.get(t, []):
                                from .policy import hierarchy_groups
                                if sty.group not in hierarchy_groups(hnode):
                                    _emit(ctx, 11, t,
                                          f"nondisclosure at {'.'.join(npath)} "
                                          f"but link sent on a {sty.group} channel",
                                          nd, nd.span)
            _scan_process(ctx, gamma, cont)
            return
        case PInp(subject, patterns, cont):
            sty = _subject_type(gamma, subject)
            g2 = gamma
            if sty is not None and len(sty.payload) == len(patterns):
                annots = nd.annots or tuple(None for _ in patterns)
                for k, want, an in zip(patterns, sty.payload, annots):
                    if isinstance(want, TPrivate) and want.ptype in ctx.permis:
                        allowed = _perm_of(ctx, want.ptype)
                        if not allowed.has_kind("read"):
                            _emit(ctx, 1, want.ptype, "read", nd, nd.span)
                        if isinstance(k, PPair) and not allowed.has_kind("readId"):
                            _emit(ctx, 5, want.ptype, "readId", nd, nd.span)
                    if _is_ref_to(want):
                        t = want.payload[0].ptype
                        if t in ctx.permis and not _perm_of(ctx, t).has_kind("reference"):
                            _emit(ctx, 3, t, "reference", nd, nd.span)
                    try:
                        g2, _ = _bind_pattern(g2, k, want, an)
                    except TypingError:
                        pass
            _scan_process(ctx, g2, cont)
            return
        case PRes(name, annot, body):
            ty = annot or _infer_binder_type(gamma, name, body)
            g2 = gamma.bind_atom(name, ty) if ty is not None else gamma
            _scan_process(ctx, g2, body)
            return
        case PRepl(body):
            _scan_process(ctx, gamma, body)
            return
        case PIf(_, _, _, then, els):
            _scan_if(ctx, gamma, nd)
            _scan_process(ctx, gamma, then)
            _scan_process(ctx, gamma, els)
            return
        case PPar(_, _):
            _scan_process(ctx, gamma, nd)
            return


def _grounds_of(gamma: Gamma, t: str) -> set[str]:
    """Ground types the environment associates with a private type, via its
    data entries and any channel payload mentioning it."""
    out = {ty.ground for ty in gamma.privs.values() if ty.ptype == t}

    def scan_ty(ty):
        if isinstance(ty, TPrivate) and ty.ptype == t:
            out.add(ty.ground)
        elif isinstance(ty, TChan):
            for sub in ty.payload:
                scan_ty(sub)

    for ty in gamma.atoms.values():
        scan_ty(ty)
    return out


def _scan_budgets(ctx: _ClauseCtx, gamma: Gamma, p: Process):
    """Clause 10: a finite dissemination budget exceeded by the number of
    link outputs in the context process."""
    for t in ctx.policy.types():
        allowed = ctx.permis.get(t)
        if allowed is None:
            continue
        grounds = _grounds_of(gamma, t)
        for group in sorted(allowed.diss_groups()):
            lam = allowed.diss_budget(group)
            if lam is None or lam.unlimited:
                continue
            total = 0
            for ground in sorted(grounds):
                target = TChan(group, (TPrivate(t, ground),))
                if ctx.countlink_literal:
                    total += count_links(p, gamma, target, literal=True)
                else:
                    total += count_links(p, gamma, target, literal=False,
                                         subject_group=group)
            if total > (lam.count or 0):
                _emit(ctx, 10, t,
                      f"disseminate {group} {lam} exceeded ({total} outputs)",
                      render_process(p))


def detect_errors(policy: Policy, gamma: Gamma, s: System,
                  id_direction: str = "anon",
                  countlink_literal: bool = False) -> list[ErrorFinding]:
    """Evaluate the error clauses at every group context of the normalized
    system, descending through prefixes with the environment extended by
    their bindings."""
    findings: list[ErrorFinding] = []
    norm = normalize(s)

    def walk(node: System, path: tuple[str, ...], g: Gamma):
        match node:
            case SGroupProc(group, proc):
                at(path + (group,), g, proc)
            case SGroupSys(group, body):
                walk(body, path + (group,), g)
            case SSysPar(l, r):
                walk(l, path, g)
                walk(r, path, g)
            case SSysRes(name, annot, body):
                ty = annot or _infer_binder_type(g, name, body)
                walk(body, path, g.bind_atom(name, ty) if ty is not None else g)
            case SBare(proc):
                at(path, g, proc)

    def at(path: tuple[str, ...], g: Gamma, proc: Process):
        permis, nd_nodes = _grants(policy, path)
        ctx = _ClauseCtx(policy, path, permis, nd_nodes, findings,
                         id_direction, countlink_literal)
        _scan_process(ctx, g, normalize(proc))
        _scan_budgets(ctx, g, proc)

    walk(norm, (), gamma)
    # deterministic order, duplicates collapsed
    uniq = sorted(set(findings),
                  key=lambda f: (f.clause, f.ptype, f.group_path, f.permission, f.subterm))
    return uniq


@dataclass
class ScanReport:
    states: int = 0
    findings: list[tuple[str, ErrorFinding]] = field(default_factory=list)
    truncated: bool = False

    @property
    def ok(self) -> bool:
        return not self.findings

    def render(self) -> str:
        status = "ok" if self.ok else "FINDINGS"
        lines = [f"safety scan: {status} ({self.states} states"
                 f"{', truncated' if self.truncated else ''})"]
        lines += [f"  [{key}] {f.render()}" for key, f in self.findings]
        return "\n".join(lines)


def safety_scan(policy: Policy, gamma: Gamma, s: System, depth: int,
                id_direction: str = "anon",
                countlink_literal: bool = False) -> ScanReport:
    """Run the error detector on every state reachable within the bound."""
    graph = explore(s, depth)
    report = ScanReport(states=len(graph.nodes), truncated=graph.truncated)
    for key in sorted(graph.nodes):
        node = graph.nodes[key]
        for f in detect_errors(policy, gamma, node, id_direction=id_direction,
                               countlink_literal=countlink_literal):
            report.findings.append((key, f))
    return report

"""Deciding whether an inferred interface satisfies a policy, and the
end-to-end verdict for a system against a policy and environment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .kernel import System
from .policy import (
    FlatHierarchy, Hierarchy, PermSet, Policy, check_wellformed, lambda_leq,
    perm_union,
)
from .syntax import Gamma
from .typesys import Theta, ThetaEntry, TypingError, permset_leq, type_system

__all__ = ["Witness", "Verdict", "theta_satisfies", "policy_satisfies", "verify"]


@dataclass(frozen=True)
class Witness:
    ptype: str
    theta_path: tuple[str, ...]
    policy_path: tuple[str, ...]
    failing: tuple[str, ...]  # permissions not covered, or a missing-group note

    def render(self) -> str:
        where = ".".join(self.theta_path) or "<bare>"
        at = ".".join(self.policy_path) or "<policy>"
        return f"{self.ptype} at {where}: {'; '.join(self.failing)} (policy node {at})"


@dataclass
class Verdict:
    satisfied: bool
    witnesses: list[Witness] = field(default_factory=list)
    theta: Optional[Theta] = None
    error: Optional[str] = None  # parse or typing failure, if any

    def render(self) -> str:
        if self.error is not None:
            return f"unsatisfied: {self.error}"
        if self.satisfied:
            return "satisfied"
        lines = ["unsatisfied:"]
        lines += [f"  {w.render()}" for w in self.witnesses]
        return "\n".join(lines)


def _uncovered_perms(have: PermSet, allowed: PermSet) -> list[str]:
    out = []
    for p in have.sorted():
        if p.kind == "disseminate":
            budget = allowed.diss_budget(p.group)
            if budget is None or not lambda_leq(p.lam, budget):
                out.append(str(p))
        elif p.kind == "usage":
            if p.purpose not in allowed.usage_purposes():
                out.append(str(p))
        elif p not in allowed:
            out.append(str(p))
    return out


def theta_satisfies(h: Hierarchy, flat: Union[FlatHierarchy, ThetaEntry]
                    ) -> tuple[bool, Optional[Witness]]:
    """Walk the policy hierarchy along the interface's group path,
    accumulating granted permissions, and compare at the end. The terminal
    comparison ignores any unexplored policy children."""
    if isinstance(flat, ThetaEntry):
        path, perms, ptype = flat.path, flat.perms, flat.ptype
    else:
        path, perms, ptype = flat.path, flat.perms, "?"
    if not path:
        return False, Witness(ptype, path, (), ("component not enclosed by a group",))
    if h.group != path[0]:
        return False, Witness(ptype, path, (h.group,),
                              (f"interface roots at {path[0]}, policy at {h.group}",))
    acc = h.perms
    node = h
    walked = (h.group,)
    for g in path[1:]:
        nxt = next((c for c in node.children if c.group == g), None)
        if nxt is None:
            return False, Witness(ptype, path, walked, (f"no policy group {g}",))
        acc = perm_union(acc, nxt.perms)
        node = nxt
        walked = walked + (g,)
    if permset_leq(perms, acc):
        return True, None
    return False, Witness(ptype, path, walked, tuple(_uncovered_perms(perms, acc)))


def policy_satisfies(p: Policy, theta: Theta, strict_coverage: bool = False) -> Verdict:
    """Every interface entry bound by the policy must satisfy its hierarchy;
    entries for types the policy does not bind are ignored by default and
    rejected under strict coverage."""
    witnesses: list[Witness] = []
    for entry in theta.canonical():
        h = p.lookup(entry.ptype)
        if h is None:
            if strict_coverage and entry.perms:
                witnesses.append(Witness(entry.ptype, entry.path, (),
                                         ("type not covered by the policy",)))
            continue
        ok, w = theta_satisfies(h, entry)
        if not ok:
            witnesses.append(w)
    return Verdict(not witnesses, witnesses, theta=theta)


def verify(p: Policy, gamma: Gamma, s: System, strict_coverage: bool = False,
           id_direction: str = "anon") -> Verdict:
    """Type the system and check its interface against the policy. A policy
    that is not well formed, or a system that does not typecheck, yields an
    unsatisfied verdict carrying the failure."""
    wf = check_wellformed(p)
    if wf:
        return Verdict(False, error="; ".join(str(v) for v in wf))
    try:
        st = type_system(gamma, s, id_direction=id_direction)
    except TypingError as e:
        return Verdict(False, error=str(e))
    return policy_satisfies(p, st.theta, strict_coverage=strict_coverage)

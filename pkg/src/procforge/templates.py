"""Per-object behaviour templates: the focal object's own state variables
and actions plus the one-hop contextual variables and interaction actions
needed to describe what it does.

Templates are dictionaries, not transition models: they enumerate
variables, value domains, and actions, and say nothing about effects.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

from .errors import DomainResolutionError, StateSpaceLimitError, UnknownObjectError
from .inventory import DomainInventory, Interaction, LabObject, StateVariable

ORIGIN_OWN = "own"
ORIGIN_CONTEXTUAL = "contextual"

KIND_CONTROL = "control"
KIND_INTERACTION = "interaction"

DEFAULT_STATE_LIMIT = 100_000


@dataclass(frozen=True)
class TemplateVariable:
    id: str
    domain: tuple[str, ...]
    origin: str


@dataclass(frozen=True)
class TemplateAction:
    """An action available in a template.

    ``params`` holds enumerable parameter domains; concrete bindings are
    produced by :meth:`MdpTemplate.bound_actions`.
    """

    id: str
    params: tuple[tuple[str, tuple[str, ...]], ...]
    kind: str


@dataclass(frozen=True)
class BoundAction:
    """An action with every parameter bound to one value."""

    id: str
    params: tuple[tuple[str, str], ...] = ()

    @property
    def key(self) -> str:
        if not self.params:
            return self.id
        inner = ",".join(f"{n}={v}" for n, v in self.params)
        return f"{self.id}({inner})"


def bound_action_from_parts(action_id: str, params: dict[str, str] | None) -> BoundAction:
    items = tuple(sorted((params or {}).items()))
    return BoundAction(id=action_id, params=items)


@dataclass(frozen=True)
class MdpTemplate:
    focal_object: str
    variables: tuple[TemplateVariable, ...]
    actions: tuple[TemplateAction, ...]

    @property
    def variable_ids(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.variables)

    def domain_of(self, var_id: str) -> tuple[str, ...]:
        for v in self.variables:
            if v.id == var_id:
                return v.domain
        raise KeyError(var_id)

    def state_space_size(self) -> int:
        size = 1
        for v in self.variables:
            size *= len(v.domain)
        return size

    def state_tuple(self, assignment: dict[str, str]) -> tuple[str, ...]:
        """Canonical tuple form of a complete state assignment."""
        return tuple(assignment[v.id] for v in self.variables)

    def state_dict(self, values: tuple[str, ...]) -> dict[str, str]:
        return {v.id: value for v, value in zip(self.variables, values)}

    def bound_actions(self) -> list[BoundAction]:
        """All concrete parameter bindings, in deterministic order."""
        out: list[BoundAction] = []
        for act in self.actions:
            if not act.params:
                out.append(BoundAction(id=act.id))
                continue
            names = [n for n, _ in act.params]
            for combo in itertools.product(*(dom for _, dom in act.params)):
                out.append(BoundAction(id=act.id, params=tuple(sorted(zip(names, combo)))))
        return out

    def action_keys(self) -> set[str]:
        return {b.key for b in self.bound_actions()}


def _require_resolved(obj: LabObject) -> None:
    for var in obj.all_variables():
        if var.is_dynamic:
            raise DomainResolutionError(
                f"inventory is not resolved: {var.id} still has a dynamic domain"
            )


def _contextual_variables(inv: DomainInventory, focal: str, inter: Interaction) -> list[StateVariable]:
    source_obj = inter.source.split(".")[0]
    target_obj = inter.target.split(".")[0]
    out: list[StateVariable] = []
    if inter.kind == "transfer_material":
        if focal == target_obj and source_obj != focal:
            # Cap states of the source: the transfer reads whether it is open.
            src = inv.get_object(source_obj)
            if src is not None:
                for comp in src.components:
                    if comp.kind == "cap":
                        out.extend(comp.states)
        if focal == source_obj and target_obj != focal:
            # Material states of the target: the transfer writes them.
            for var in inv.holder_variables(inter.target):
                if var.resolved_from == "transfer_material":
                    out.append(var)
    else:  # move_to_receptor
        if focal == source_obj and target_obj != focal:
            # The receptor's content variable: the placement writes it.
            for var in inv.holder_variables(inter.target):
                if var.resolved_from == "move_to_receptor":
                    out.append(var)
    return out


def build_template(inv: DomainInventory, object_id: str) -> MdpTemplate:
    """Build the behaviour template for one focal object.

    Contextual closure is one interaction hop: for each interaction
    involving the object, the partner-side variables it reads or writes
    are pulled in, along with one interaction action.
    """
    obj = inv.get_object(object_id)
    if obj is None:
        raise UnknownObjectError(f"unknown object id {object_id!r}")
    _require_resolved(obj)

    own_vars = {var.id: var for var in obj.all_variables()}
    ctx_vars: dict[str, StateVariable] = {}
    interaction_actions: dict[str, TemplateAction] = {}
    for inter in inv.interactions:
        source_obj = inter.source.split(".")[0]
        target_obj = inter.target.split(".")[0]
        if object_id not in (source_obj, target_obj):
            continue
        action_id = inter.canonical_action_id()
        interaction_actions.setdefault(
            action_id, TemplateAction(id=action_id, params=(), kind=KIND_INTERACTION)
        )
        for var in _contextual_variables(inv, object_id, inter):
            if var.is_dynamic:
                raise DomainResolutionError(
                    f"inventory is not resolved: {var.id} still has a dynamic domain"
                )
            if var.id not in own_vars:
                ctx_vars.setdefault(var.id, var)

    variables = [
        TemplateVariable(id=v.id, domain=tuple(v.domain), origin=ORIGIN_OWN)
        for v in sorted(own_vars.values(), key=lambda v: v.id)
    ] + [
        TemplateVariable(id=v.id, domain=tuple(v.domain), origin=ORIGIN_CONTEXTUAL)
        for v in sorted(ctx_vars.values(), key=lambda v: v.id)
    ]
    actions = [
        TemplateAction(id=a.id, params=a.params, kind=KIND_CONTROL)
        for a in sorted(obj.all_actions(), key=lambda a: a.id)
    ] + [interaction_actions[k] for k in sorted(interaction_actions)]
    return MdpTemplate(focal_object=object_id, variables=tuple(variables), actions=tuple(actions))


def enumerate_states(tpl: MdpTemplate, limit: int = DEFAULT_STATE_LIMIT) -> list[dict[str, str]]:
    """Cartesian product of the template's variable domains.

    Refuses (reporting the computed size) when the product exceeds
    ``limit``.
    """
    size = tpl.state_space_size()
    if size > limit:
        raise StateSpaceLimitError(size, limit)
    out = []
    for combo in itertools.product(*(v.domain for v in tpl.variables)):
        out.append({v.id: value for v, value in zip(tpl.variables, combo)})
    return out


# ── serialization ─────────────────────────────────────────────────────────


def template_to_dict(tpl: MdpTemplate) -> dict:
    return {
        "focal_object": tpl.focal_object,
        "variables": [
            {"id": v.id, "domain": list(v.domain), "origin": v.origin} for v in tpl.variables
        ],
        "actions": [
            {
                "id": a.id,
                "params": [{"name": n, "domain": list(dom)} for n, dom in a.params],
                "kind": a.kind,
            }
            for a in tpl.actions
        ],
    }


def template_from_dict(doc: dict) -> MdpTemplate:
    variables = tuple(
        TemplateVariable(id=v["id"], domain=tuple(v["domain"]), origin=v["origin"])
        for v in doc["variables"]
    )
    actions = tuple(
        TemplateAction(
            id=a["id"],
            params=tuple((p["name"], tuple(p["domain"])) for p in a.get("params", [])),
            kind=a["kind"],
        )
        for a in doc["actions"]
    )
    return MdpTemplate(focal_object=doc["focal_object"], variables=variables, actions=actions)


def serialize_template(tpl: MdpTemplate) -> str:
    return json.dumps(template_to_dict(tpl), indent=2, sort_keys=True) + "\n"

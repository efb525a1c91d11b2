"""Structured laboratory-domain inventory: parsing, validation, resolution.

The inventory is the controlled vocabulary for everything downstream:
objects with components, symbolic state variables, actions, and the
interactions (placements and material transfers) that tie objects
together.  State domains may be declared ``dynamic``; those are resolved
from the interactions into concrete value sets.

All types are immutable; every function here is pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .errors import (
    DanglingReferenceError,
    DomainResolutionError,
    DuplicateIdError,
    InventorySchemaError,
    InventorySyntaxError,
)

SCHEMA_VERSION = "1"

#: Sentinel domain marker for interaction-dependent state variables.
DYNAMIC = "dynamic"

#: Sentinel value meaning "nothing placed / nothing contained".
NONE_VALUE = "none"

OBJECT_CATEGORIES = ("instrument", "container", "tool", "material")
COMPONENT_KINDS = ("button", "display", "platform", "receptor", "selector", "cap", "other")
INTERACTION_KINDS = ("move_to_receptor", "transfer_material")


@dataclass(frozen=True)
class StateVariable:
    """A symbolic state variable with a finite value domain.

    ``id`` is fully qualified (``object[.component].name``).  ``domain``
    is either a tuple of values or the ``dynamic`` marker.
    ``resolved_from`` records which interaction kind produced the domain
    when it was resolved from a dynamic marker.
    """

    id: str
    domain: tuple[str, ...] | str
    description: str = ""
    resolved_from: str | None = None

    @property
    def is_dynamic(self) -> bool:
        return self.domain == DYNAMIC

    @property
    def name(self) -> str:
        return self.id.rsplit(".", 1)[1]


@dataclass(frozen=True)
class ActionDef:
    """An action with fully-qualified id and finite parameter domains."""

    id: str
    params: tuple[tuple[str, tuple[str, ...]], ...] = ()
    description: str = ""

    @property
    def name(self) -> str:
        return self.id.rsplit(".", 1)[1]


@dataclass(frozen=True)
class Component:
    id: str
    kind: str
    states: tuple[StateVariable, ...] = ()
    actions: tuple[ActionDef, ...] = ()


@dataclass(frozen=True)
class LabObject:
    id: str
    category: str
    components: tuple[Component, ...] = ()
    states: tuple[StateVariable, ...] = ()
    actions: tuple[ActionDef, ...] = ()
    initial_state: dict[str, str] = field(default_factory=dict)

    def all_variables(self) -> list[StateVariable]:
        """Object-level variables followed by component variables."""
        out = list(self.states)
        for comp in self.components:
            out.extend(comp.states)
        return out

    def all_actions(self) -> list[ActionDef]:
        out = list(self.actions)
        for comp in self.components:
            out.extend(comp.actions)
        return out


@dataclass(frozen=True)
class Interaction:
    """A placement (``move_to_receptor``) or a material transfer."""

    kind: str
    source: str
    target: str
    material: str | None = None

    def canonical_action_id(self) -> str:
        base = f"{self.kind}:{self.source}->{self.target}"
        if self.material is not None:
            base += f":{self.material}"
        return base


@dataclass(frozen=True)
class DomainInventory:
    objects: tuple[LabObject, ...]
    interactions: tuple[Interaction, ...]
    schema_version: str = SCHEMA_VERSION

    def object_ids(self) -> list[str]:
        return [obj.id for obj in self.objects]

    def get_object(self, object_id: str) -> LabObject | None:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        return None

    def variable(self, fq_id: str) -> StateVariable | None:
        for obj in self.objects:
            for var in obj.all_variables():
                if var.id == fq_id:
                    return var
        return None

    def variables(self) -> list[StateVariable]:
        out: list[StateVariable] = []
        for obj in self.objects:
            out.extend(obj.all_variables())
        return out

    def initial_value(self, fq_var_id: str) -> str | None:
        """Declared initial value of a variable, or None if unspecified."""
        obj_id, local = fq_var_id.split(".", 1)
        obj = self.get_object(obj_id)
        if obj is None:
            return None
        return obj.initial_state.get(local)

    def holder_variables(self, ref: str) -> list[StateVariable]:
        """Variables attached directly to an object or component ref."""
        parts = ref.split(".")
        obj = self.get_object(parts[0])
        if obj is None:
            return []
        if len(parts) == 1:
            return list(obj.states)
        for comp in obj.components:
            if comp.id == parts[1]:
                return list(comp.states)
        return []


# ── parsing ──────────────────────────────────────────────────────────────

_ID_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")


def _check_identifier(value: object, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise InventorySchemaError("identifier must be a non-empty string", path)
    if not set(value) <= _ID_CHARS or value[0].isdigit():
        raise InventorySchemaError(f"invalid identifier {value!r}", path)
    return value


def _check_value(value: object, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise InventorySchemaError("value must be a non-empty string", path)
    return value


def _parse_domain(raw: object, path: str) -> tuple[str, ...] | str:
    if raw == DYNAMIC:
        return DYNAMIC
    if not isinstance(raw, list) or not raw:
        raise InventorySchemaError("domain must be 'dynamic' or a non-empty list", path)
    values = [_check_value(v, f"{path}[{i}]") for i, v in enumerate(raw)]
    if len(set(values)) != len(values):
        raise DuplicateIdError(f"{path}: duplicate domain values in {values}")
    return tuple(values)


def _parse_states(raw: object, prefix: str, path: str) -> tuple[StateVariable, ...]:
    if not isinstance(raw, list):
        raise InventorySchemaError("states must be a list", path)
    out = []
    for i, item in enumerate(raw):
        p = f"{path}[{i}]"
        if not isinstance(item, dict):
            raise InventorySchemaError("state variable must be an object", p)
        local = _check_identifier(item.get("id"), f"{p}.id")
        domain = _parse_domain(item.get("domain"), f"{p}.domain")
        resolved_from = item.get("resolved_from")
        if resolved_from is not None and resolved_from not in INTERACTION_KINDS:
            raise InventorySchemaError(f"invalid resolved_from {resolved_from!r}", p)
        out.append(
            StateVariable(
                id=f"{prefix}.{local}",
                domain=domain,
                description=str(item.get("description", "")),
                resolved_from=resolved_from,
            )
        )
    return tuple(out)


def _parse_actions(raw: object, prefix: str, path: str) -> tuple[ActionDef, ...]:
    if not isinstance(raw, list):
        raise InventorySchemaError("actions must be a list", path)
    out = []
    for i, item in enumerate(raw):
        p = f"{path}[{i}]"
        if not isinstance(item, dict):
            raise InventorySchemaError("action must be an object", p)
        local = _check_identifier(item.get("id"), f"{p}.id")
        params_raw = item.get("params", [])
        if not isinstance(params_raw, list):
            raise InventorySchemaError("params must be a list", f"{p}.params")
        params = []
        for j, pr in enumerate(params_raw):
            pp = f"{p}.params[{j}]"
            if not isinstance(pr, dict):
                raise InventorySchemaError("param must be an object", pp)
            name = _check_identifier(pr.get("name"), f"{pp}.name")
            dom = pr.get("domain")
            if not isinstance(dom, list) or not dom:
                raise InventorySchemaError("param domain must be a non-empty list", pp)
            params.append((name, tuple(_check_value(v, f"{pp}.domain[{k}]") for k, v in enumerate(dom))))
        out.append(
            ActionDef(
                id=f"{prefix}.{local}",
                params=tuple(params),
                description=str(item.get("description", "")),
            )
        )
    return tuple(out)


def _parse_object(item: object, path: str) -> LabObject:
    if not isinstance(item, dict):
        raise InventorySchemaError("object must be a JSON object", path)
    obj_id = _check_identifier(item.get("id"), f"{path}.id")
    category = item.get("category")
    if category not in OBJECT_CATEGORIES:
        raise InventorySchemaError(f"invalid category {category!r}", f"{path}.category")
    components = []
    comp_raw = item.get("components", [])
    if not isinstance(comp_raw, list):
        raise InventorySchemaError("components must be a list", f"{path}.components")
    for i, citem in enumerate(comp_raw):
        cp = f"{path}.components[{i}]"
        if not isinstance(citem, dict):
            raise InventorySchemaError("component must be an object", cp)
        comp_id = _check_identifier(citem.get("id"), f"{cp}.id")
        kind = citem.get("kind")
        if kind not in COMPONENT_KINDS:
            raise InventorySchemaError(f"invalid component kind {kind!r}", f"{cp}.kind")
        comp_prefix = f"{obj_id}.{comp_id}"
        states = _parse_states(citem.get("states", []), comp_prefix, f"{cp}.states")
        if len({s.name for s in states}) != len(states):
            raise DuplicateIdError(f"{cp}: duplicate variable names in component {comp_id!r}")
        actions = _parse_actions(citem.get("actions", []), comp_prefix, f"{cp}.actions")
        components.append(Component(id=comp_id, kind=kind, states=states, actions=actions))
    if len({c.id for c in components}) != len(components):
        raise DuplicateIdError(f"{path}: duplicate component ids in object {obj_id!r}")
    states = _parse_states(item.get("states", []), obj_id, f"{path}.states")
    if len({s.name for s in states}) != len(states):
        raise DuplicateIdError(f"{path}: duplicate object-level variable names in {obj_id!r}")
    actions = _parse_actions(item.get("actions", []), obj_id, f"{path}.actions")
    initial_raw = item.get("initial_state", {})
    if not isinstance(initial_raw, dict):
        raise InventorySchemaError("initial_state must be an object", f"{path}.initial_state")
    initial_state = {str(k): _check_value(v, f"{path}.initial_state.{k}") for k, v in initial_raw.items()}
    return LabObject(
        id=obj_id,
        category=category,
        components=tuple(components),
        states=states,
        actions=actions,
        initial_state=initial_state,
    )


def _resolve_ref(inv_objects: dict[str, LabObject], ref: str, path: str) -> tuple[LabObject, Component | None]:
    parts = ref.split(".")
    if len(parts) > 2 or not parts[0]:
        raise InventorySchemaError(f"malformed reference {ref!r}", path)
    obj = inv_objects.get(parts[0])
    if obj is None:
        raise DanglingReferenceError(f"{path}: unknown object {parts[0]!r} in reference {ref!r}")
    if len(parts) == 1:
        return obj, None
    for comp in obj.components:
        if comp.id == parts[1]:
            return obj, comp
    raise DanglingReferenceError(f"{path}: unknown component {parts[1]!r} in reference {ref!r}")


def _normalize_interaction(inv_objects: dict[str, LabObject], item: object, path: str) -> Interaction:
    if not isinstance(item, dict):
        raise InventorySchemaError("interaction must be an object", path)
    kind = item.get("kind")
    if kind not in INTERACTION_KINDS:
        raise InventorySchemaError(f"invalid interaction kind {kind!r}", f"{path}.kind")
    source = item.get("source")
    target = item.get("target")
    if not isinstance(source, str) or not isinstance(target, str):
        raise InventorySchemaError("source and target must be reference strings", path)
    _resolve_ref(inv_objects, source, f"{path}.source")
    tgt_obj, tgt_comp = _resolve_ref(inv_objects, target, f"{path}.target")
    material = item.get("material")
    if kind == "transfer_material":
        if not isinstance(material, str) or not material:
            raise InventorySchemaError("transfer_material requires a material", f"{path}.material")
    else:
        if material is not None:
            raise InventorySchemaError("move_to_receptor takes no material", f"{path}.material")
        # Whole-object targets are normalized to the unique receptor component.
        if tgt_comp is None:
            receptors = [c for c in tgt_obj.components if c.kind == "receptor"]
            if len(receptors) != 1:
                raise InventorySchemaError(
                    f"target {target!r} has {len(receptors)} receptor components; "
                    "move_to_receptor needs exactly one",
                    f"{path}.target",
                )
            tgt_comp = receptors[0]
            target = f"{tgt_obj.id}.{tgt_comp.id}"
        elif tgt_comp.kind != "receptor":
            raise InventorySchemaError(
                f"move_to_receptor target {target!r} is a {tgt_comp.kind}, not a receptor",
                f"{path}.target",
            )
    return Interaction(kind=kind, source=source, target=target, material=material)


def _validate_initial_state(obj: LabObject, check_values: bool) -> None:
    declared = {var.id.split(".", 1)[1]: var for var in obj.all_variables()}
    for local, value in obj.initial_state.items():
        var = declared.get(local)
        if var is None:
            raise InventorySchemaError(
                f"initial_state assigns undeclared variable {local!r}",
                f"objects[{obj.id}].initial_state",
            )
        if var.is_dynamic:
            continue  # value checked after resolution
        if check_values and value not in var.domain:
            raise InventorySchemaError(
                f"initial value {value!r} not in domain of {var.id}",
                f"objects[{obj.id}].initial_state.{local}",
            )


def parse_inventory(text: str) -> DomainInventory:
    """Parse and validate a serialized inventory document.

    Dynamic domains are kept unresolved; call
    :func:`resolve_dynamic_domains` afterwards.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InventorySyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(doc, dict):
        raise InventorySchemaError("top level must be a JSON object", "$")
    version = doc.get("schema_version")
    if not isinstance(version, str):
        raise InventorySchemaError("schema_version must be a string", "$.schema_version")
    objects_raw = doc.get("objects")
    if not isinstance(objects_raw, list):
        raise InventorySchemaError("objects must be a list", "$.objects")
    objects = [_parse_object(item, f"$.objects[{i}]") for i, item in enumerate(objects_raw)]
    if len({o.id for o in objects}) != len(objects):
        raise DuplicateIdError("duplicate object ids in inventory")
    by_id = {o.id: o for o in objects}
    interactions_raw = doc.get("interactions", [])
    if not isinstance(interactions_raw, list):
        raise InventorySchemaError("interactions must be a list", "$.interactions")
    interactions = tuple(
        _normalize_interaction(by_id, item, f"$.interactions[{i}]")
        for i, item in enumerate(interactions_raw)
    )
    for obj in objects:
        _validate_initial_state(obj, check_values=True)
    return DomainInventory(objects=tuple(objects), interactions=interactions, schema_version=version)


# ── serialization ─────────────────────────────────────────────────────────


def _state_to_json(var: StateVariable) -> dict:
    out: dict = {"id": var.name, "domain": DYNAMIC if var.is_dynamic else list(var.domain)}
    if var.description:
        out["description"] = var.description
    if var.resolved_from is not None:
        out["resolved_from"] = var.resolved_from
    return out


def _action_to_json(act: ActionDef) -> dict:
    out: dict = {"id": act.name}
    if act.params:
        out["params"] = [{"name": n, "domain": list(dom)} for n, dom in act.params]
    if act.description:
        out["description"] = act.description
    return out


def inventory_to_dict(inv: DomainInventory) -> dict:
    objects = []
    for obj in inv.objects:
        o: dict = {"id": obj.id, "category": obj.category}
        if obj.components:
            o["components"] = [
                {
                    "id": c.id,
                    "kind": c.kind,
                    "states": [_state_to_json(s) for s in c.states],
                    "actions": [_action_to_json(a) for a in c.actions],
                }
                for c in obj.components
            ]
        if obj.states:
            o["states"] = [_state_to_json(s) for s in obj.states]
        if obj.actions:
            o["actions"] = [_action_to_json(a) for a in obj.actions]
        if obj.initial_state:
            o["initial_state"] = dict(sorted(obj.initial_state.items()))
        objects.append(o)
    return {
        "schema_version": inv.schema_version,
        "objects": objects,
        "interactions": [
            {k: v for k, v in (("kind", i.kind), ("source", i.source), ("target", i.target), ("material", i.material)) if v is not None}
            for i in inv.interactions
        ],
    }


def serialize_inventory(inv: DomainInventory) -> str:
    return json.dumps(inventory_to_dict(inv), indent=2, sort_keys=False) + "\n"


# ── dynamic-domain resolution ─────────────────────────────────────────────


def _holder_of(var_id: str, obj: LabObject) -> str:
    parts = var_id.split(".")
    return parts[0] if len(parts) == 2 else f"{parts[0]}.{parts[1]}"


def _resolved_domain(inv: DomainInventory, var: StateVariable, holder: str) -> StateVariable:
    placed: set[str] = set()
    transferred: set[str] = set()
    for inter in inv.interactions:
        if inter.target != holder:
            continue
        if inter.kind == "move_to_receptor":
            placed.add(inter.source.split(".")[0])
        else:
            assert inter.material is not None
            transferred.add(inter.material)
    values = placed | transferred
    if not values:
        raise DomainResolutionError(
            f"dynamic domain of {var.id} cannot be resolved: no interaction targets {holder!r}"
        )
    kind = "move_to_receptor" if placed else "transfer_material"
    domain = (NONE_VALUE,) + tuple(sorted(values))
    return replace(var, domain=domain, resolved_from=kind)


def resolve_dynamic_domains(inv: DomainInventory) -> DomainInventory:
    """Replace every ``dynamic`` domain with its interaction-derived values.

    A receptor variable's domain becomes ``none`` plus the ids of objects
    movable onto it; a contained-material variable's domain becomes
    ``none`` plus the materials transferable into its holder.  Idempotent.
    """

    def resolve_states(states: tuple[StateVariable, ...], holder: str) -> tuple[StateVariable, ...]:
        return tuple(_resolved_domain(inv, v, holder) if v.is_dynamic else v for v in states)

    objects = []
    for obj in inv.objects:
        components = tuple(
            replace(c, states=resolve_states(c.states, f"{obj.id}.{c.id}")) for c in obj.components
        )
        new_obj = replace(obj, states=resolve_states(obj.states, obj.id), components=components)
        _validate_initial_state(new_obj, check_values=True)
        objects.append(new_obj)
    return replace(inv, objects=tuple(objects))

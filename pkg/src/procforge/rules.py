"""Precondition and causal-precedence rule extraction.

World-model entries are classified as valid, invalid, or ambiguous by
plausibility; weighted value supports are computed per action over the
valid and invalid evidence pools; required and forbidden values fall out
of the support thresholds; and required conditions are linked to producer
actions observed to establish them, yielding producer-before-consumer
ordering rules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .inventory import DomainInventory
from .world_model import WorldModel, WorldModelEntry

VALID = "valid"
INVALID = "invalid"
AMBIGUOUS = "ambiguous"

REQUIRED = "required"
FORBIDDEN = "forbidden"

STRONG = "strong"
WEAK = "weak"

#: Producer marker for conditions that may hold before the procedure starts.
INITIAL_STATE = "initial_state"


@dataclass(frozen=True)
class ExtractionConfig:
    """Thresholds driving classification and rule extraction.

    ``theta_hi``/``theta_lo`` split entries into valid/invalid/ambiguous.
    ``gamma`` is the confidence threshold for supports; ``epsilon0`` is
    the tolerance under which a valid support counts as "absent".
    ``min_valid_weight`` is the evidence weight an action needs before
    any precondition is extracted for it.
    """

    theta_hi: float = 0.8
    theta_lo: float = 0.2
    gamma: float = 0.9
    epsilon0: float = 0.05
    min_valid_weight: int = 3

    def __post_init__(self):
        if not 0.0 <= self.theta_lo < self.theta_hi <= 1.0:
            raise ValueError("need 0 <= theta_lo < theta_hi <= 1")
        if not 0.5 < self.gamma <= 1.0:
            raise ValueError("need 0.5 < gamma <= 1")
        if not 0.0 <= self.epsilon0 < 1.0 - self.gamma:
            raise ValueError("need 0 <= epsilon0 < 1 - gamma")
        if self.min_valid_weight < 1:
            raise ValueError("min_valid_weight must be >= 1")

    def to_dict(self) -> dict:
        return {
            "theta_hi": self.theta_hi,
            "theta_lo": self.theta_lo,
            "gamma": self.gamma,
            "epsilon0": self.epsilon0,
            "min_valid_weight": self.min_valid_weight,
        }


@dataclass(frozen=True)
class ActionPools:
    valid: tuple[WorldModelEntry, ...]
    invalid: tuple[WorldModelEntry, ...]
    ambiguous: tuple[WorldModelEntry, ...]

    def pool(self, side: str) -> tuple[WorldModelEntry, ...]:
        return {VALID: self.valid, INVALID: self.invalid, AMBIGUOUS: self.ambiguous}[side]

    @staticmethod
    def weight(entries: tuple[WorldModelEntry, ...]) -> int:
        return sum(e.total_count for e in entries)


@dataclass(frozen=True)
class EvidencePools:
    model: WorldModel
    actions: dict[str, ActionPools]

    def var_index(self, variable: str) -> int:
        return self.model.template.variable_ids.index(variable)


def classify_entries(wm: WorldModel, cfg: ExtractionConfig) -> EvidencePools:
    """Partition each action's entries by plausibility score.

    Valid means plausibility >= theta_hi, invalid means <= theta_lo, and
    everything in between is ambiguous and excluded from supports.
    """
    buckets: dict[str, dict[str, list[WorldModelEntry]]] = {}
    for entry in wm.sorted_entries():
        slot = buckets.setdefault(entry.action.key, {VALID: [], INVALID: [], AMBIGUOUS: []})
        p = entry.plausibility
        if p >= cfg.theta_hi:
            slot[VALID].append(entry)
        elif p <= cfg.theta_lo:
            slot[INVALID].append(entry)
        else:
            slot[AMBIGUOUS].append(entry)
    actions = {
        key: ActionPools(valid=tuple(b[VALID]), invalid=tuple(b[INVALID]), ambiguous=tuple(b[AMBIGUOUS]))
        for key, b in buckets.items()
    }
    return EvidencePools(model=wm, actions=actions)


def support(pools: EvidencePools, action: str, variable: str, value: str, side: str) -> float | None:
    """Weighted fraction of a side's evidence whose state assigns the value.

    Weights are entry sample counts.  Returns None (never 0/0) when the
    side pool is empty.
    """
    action_pools = pools.actions.get(action)
    if action_pools is None:
        return None
    entries = action_pools.pool(side)
    total = ActionPools.weight(entries)
    if total == 0:
        return None
    idx = pools.var_index(variable)
    hit = sum(e.total_count for e in entries if e.state[idx] == value)
    return hit / total


def detect_contrast(pools: EvidencePools, action: str, variable: str, value: str) -> int:
    """Count one-value contrast pairs for (action, variable=value).

    A pair is a valid entry and an invalid entry whose states agree on
    every variable except the given one, where the invalid entry carries
    the value.  Both entries share the action, including its parameters.
    """
    action_pools = pools.actions.get(action)
    if action_pools is None:
        return 0
    idx = pools.var_index(variable)

    def masked(state: tuple[str, ...]) -> tuple[str, ...]:
        return state[:idx] + state[idx + 1 :]

    valid_masks: dict[tuple[str, ...], int] = {}
    for entry in action_pools.valid:
        mask = masked(entry.state)
        valid_masks[mask] = valid_masks.get(mask, 0) + 1
    count = 0
    for entry in action_pools.invalid:
        if entry.state[idx] != value:
            continue
        count += valid_masks.get(masked(entry.state), 0)
    return count


@dataclass(frozen=True)
class Precondition:
    action: str
    variable: str
    value: str
    kind: str  # required | forbidden
    strength: str | None = None  # strong | weak, required conditions only
    valid_support: float | None = None
    invalid_support: float | None = None
    contrast: int = 0
    valid_weight: int = 0

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "variable": self.variable,
            "value": self.value,
            "kind": self.kind,
            "strength": self.strength,
            "valid_support": self.valid_support,
            "invalid_support": self.invalid_support,
            "contrast": self.contrast,
            "valid_weight": self.valid_weight,
        }


@dataclass
class ExtractionReport:
    ambiguous_entries: dict[str, int] = field(default_factory=dict)
    insufficient_evidence: list[str] = field(default_factory=list)
    suppressed_rules: list[dict] = field(default_factory=list)
    conflicts: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ambiguous_entries": dict(sorted(self.ambiguous_entries.items())),
            "insufficient_evidence": sorted(self.insufficient_evidence),
            "suppressed_rules": self.suppressed_rules,
            "conflicts": self.conflicts,
        }


def extract_preconditions(
    pools: EvidencePools, cfg: ExtractionConfig, report: ExtractionReport | None = None
) -> list[Precondition]:
    """Extract required and forbidden values for every action in the pools.

    A value is required when its valid support reaches gamma and every
    alternative value of the same variable stays at or below 1 - gamma.
    A value is forbidden when it is (nearly) absent from valid evidence
    and either a one-value contrast or gamma-level invalid support backs
    the failure.  A required value is strong exactly when every
    alternative of its variable is forbidden.
    """
    report = report if report is not None else ExtractionReport()
    template = pools.model.template
    out: list[Precondition] = []
    for action in sorted(pools.actions):
        action_pools = pools.actions[action]
        if action_pools.ambiguous:
            report.ambiguous_entries[action] = ActionPools.weight(action_pools.ambiguous)
        valid_weight = ActionPools.weight(action_pools.valid)
        if valid_weight < cfg.min_valid_weight:
            report.insufficient_evidence.append(action)
            continue
        required: list[Precondition] = []
        forbidden: dict[str, set[str]] = {}
        for var in template.variables:
            supports = {
                value: support(pools, action, var.id, value, VALID) for value in var.domain
            }
            for value in var.domain:
                vs = supports[value]
                assert vs is not None  # valid pool is non-empty here
                others_dominated = all(
                    supports[v2] <= 1.0 - cfg.gamma for v2 in var.domain if v2 != value
                )
                is_required = vs >= cfg.gamma and others_dominated
                contrast = detect_contrast(pools, action, var.id, value)
                inv_support = support(pools, action, var.id, value, INVALID)
                is_forbidden = vs <= cfg.epsilon0 and (
                    contrast > 0 or (inv_support is not None and inv_support >= cfg.gamma)
                )
                # Disjoint by construction (gamma > epsilon0); assert anyway.
                assert not (is_required and is_forbidden), (action, var.id, value)
                if is_required:
                    required.append(
                        Precondition(
                            action=action,
                            variable=var.id,
                            value=value,
                            kind=REQUIRED,
                            valid_support=vs,
                            invalid_support=inv_support,
                            contrast=contrast,
                            valid_weight=valid_weight,
                        )
                    )
                elif is_forbidden:
                    forbidden.setdefault(var.id, set()).add(value)
                    out.append(
                        Precondition(
                            action=action,
                            variable=var.id,
                            value=value,
                            kind=FORBIDDEN,
                            valid_support=vs,
                            invalid_support=inv_support,
                            contrast=contrast,
                            valid_weight=valid_weight,
                        )
                    )
        for pre in required:
            domain = template.domain_of(pre.variable)
            alternatives = set(domain) - {pre.value}
            strength = STRONG if alternatives and alternatives <= forbidden.get(pre.variable, set()) else WEAK
            if not alternatives:
                strength = STRONG  # single-value domain: nothing left to rule out
            out.append(replace(pre, strength=strength))
    out.sort(key=lambda p: (p.action, p.variable, p.value, p.kind))
    return out


def merge_preconditions(
    per_model: list[list[Precondition]],
    domains: dict[str, tuple[str, ...]],
    report: ExtractionReport,
) -> list[Precondition]:
    """Deduplicate preconditions extracted from several templates.

    The same action can appear in more than one template (interactions
    live in both partners); conditions are merged by (action, variable,
    value), keeping the higher-weight evidence, and required strengths
    are recomputed against the merged forbidden sets.
    """
    by_key: dict[tuple[str, str, str], Precondition] = {}
    kinds: dict[tuple[str, str, str], set[str]] = {}
    for pres in per_model:
        for pre in pres:
            key = (pre.action, pre.variable, pre.value)
            kinds.setdefault(key, set()).add(pre.kind)
            best = by_key.get(key)
            if best is None or pre.valid_weight > best.valid_weight:
                by_key[key] = pre
    merged: list[Precondition] = []
    for key, pre in by_key.items():
        if len(kinds[key]) > 1:
            # Required in one model, forbidden in another: inconsistent
            # evidence; drop it and surface the conflict.
            report.conflicts.append(
                {"action": pre.action, "variable": pre.variable, "value": pre.value}
            )
            continue
        merged.append(pre)
    forbidden: dict[tuple[str, str], set[str]] = {}
    for pre in merged:
        if pre.kind == FORBIDDEN:
            forbidden.setdefault((pre.action, pre.variable), set()).add(pre.value)
    final = []
    for pre in merged:
        if pre.kind == REQUIRED:
            alternatives = set(domains[pre.variable]) - {pre.value}
            strength = (
                STRONG
                if not alternatives or alternatives <= forbidden.get((pre.action, pre.variable), set())
                else WEAK
            )
            pre = replace(pre, strength=strength)
        final.append(pre)
    final.sort(key=lambda p: (p.action, p.variable, p.value, p.kind))
    return final


def find_producers(
    condition: tuple[str, str],
    models: list[WorldModel],
    inv: DomainInventory,
    cfg: ExtractionConfig,
) -> list[str]:
    """Actions observed (in valid evidence) to establish variable=value.

    An action produces the condition when some valid entry for it moves
    the variable from a different value to the target value.  The
    ``initial_state`` marker is included when the inventory declares the
    value as the variable's initial value.  Deduplicated across models.
    """
    variable, value = condition
    producers: set[str] = set()
    for wm in models:
        if variable not in wm.template.variable_ids:
            continue
        idx = wm.template.variable_ids.index(variable)
        for entry in wm.entries.values():
            if entry.plausibility < cfg.theta_hi:
                continue
            if entry.state[idx] == value:
                continue
            if any(o.next_state[idx] == value for o in entry.outcomes):
                producers.add(entry.action.key)
    out = sorted(producers)
    if inv.initial_value(variable) == value:
        out.insert(0, INITIAL_STATE)
    return out


@dataclass(frozen=True)
class CausalRule:
    """Producer-before-consumer ordering rule for one required condition."""

    action: str  # consumer
    variable: str
    value: str
    producers: tuple[str, ...]
    strength: str

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "variable": self.variable,
            "value": self.value,
            "producers": list(self.producers),
            "strength": self.strength,
        }


def extract_causal_rules(
    preconditions: list[Precondition],
    models: list[WorldModel],
    inv: DomainInventory,
    cfg: ExtractionConfig,
    report: ExtractionReport | None = None,
) -> list[CausalRule]:
    """One rule per (consumer action, required condition) with producers.

    Required conditions with no observed producer and no initial-state
    declaration yield no rule; they are logged in the report instead.
    """
    report = report if report is not None else ExtractionReport()
    rules = []
    for pre in preconditions:
        if pre.kind != REQUIRED:
            continue
        producers = find_producers((pre.variable, pre.value), models, inv, cfg)
        producers = [p for p in producers if p != pre.action]  # self-production is no ordering
        if not producers:
            report.suppressed_rules.append(
                {"action": pre.action, "variable": pre.variable, "value": pre.value, "reason": "no producers"}
            )
            continue
        rules.append(
            CausalRule(
                action=pre.action,
                variable=pre.variable,
                value=pre.value,
                producers=tuple(producers),
                strength=pre.strength or WEAK,
            )
        )
    rules.sort(key=lambda r: (r.action, r.variable, r.value))
    return rules


@dataclass(frozen=True)
class RuleSet:
    preconditions: tuple[Precondition, ...]
    causal_rules: tuple[CausalRule, ...]
    report: ExtractionReport
    config: ExtractionConfig

    def rules_for(self, strength: str | None = None) -> list[CausalRule]:
        return [r for r in self.causal_rules if strength is None or r.strength == strength]


def extract_rules(models: list[WorldModel], inv: DomainInventory, cfg: ExtractionConfig) -> RuleSet:
    """Full extraction over one or more world models."""
    report = ExtractionReport()
    domains: dict[str, tuple[str, ...]] = {}
    per_model = []
    for wm in models:
        for v in wm.template.variables:
            domains.setdefault(v.id, v.domain)
        pools = classify_entries(wm, cfg)
        per_model.append(extract_preconditions(pools, cfg, report))
    merged = merge_preconditions(per_model, domains, report)
    rules = extract_causal_rules(merged, models, inv, cfg, report)
    return RuleSet(
        preconditions=tuple(merged), causal_rules=tuple(rules), report=report, config=cfg
    )


# ── serialization ─────────────────────────────────────────────────────────


def rule_set_to_dict(rules: RuleSet) -> dict:
    return {
        "config": rules.config.to_dict(),
        "preconditions": [p.to_dict() for p in rules.preconditions],
        "causal_rules": [r.to_dict() for r in rules.causal_rules],
        "extraction_report": rules.report.to_dict(),
    }


def rule_set_from_dict(doc: dict) -> RuleSet:
    cfg = ExtractionConfig(**doc["config"])
    preconditions = tuple(Precondition(**p) for p in doc["preconditions"])
    rules = tuple(
        CausalRule(
            action=r["action"],
            variable=r["variable"],
            value=r["value"],
            producers=tuple(r["producers"]),
            strength=r["strength"],
        )
        for r in doc["causal_rules"]
    )
    report = ExtractionReport(
        ambiguous_entries=dict(doc["extraction_report"].get("ambiguous_entries", {})),
        insufficient_evidence=list(doc["extraction_report"].get("insufficient_evidence", [])),
        suppressed_rules=list(doc["extraction_report"].get("suppressed_rules", [])),
        conflicts=list(doc["extraction_report"].get("conflicts", [])),
    )
    return RuleSet(preconditions=preconditions, causal_rules=rules, report=report, config=cfg)


def serialize_rule_set(rules: RuleSet) -> str:
    return json.dumps(rule_set_to_dict(rules), indent=2, sort_keys=True) + "\n"

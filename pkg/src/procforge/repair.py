"""Constraint-guided reordering of a draft procedure.

Causal rules are mapped onto concrete steps as soft precedence
constraints; a permutation local search, warm-started at the draft,
minimizes a four-term penalty: step displacement from the draft, broken
draft adjacencies, cluster-order inversions, and precedence violations.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import random
from dataclasses import dataclass, field

from .errors import PermutationError, ProcforgeError
from .metrics import RAW_BINARY, RAW_GAP
from .rules import INITIAL_STATE, CausalRule
from .templates import BoundAction, bound_action_from_parts


@dataclass(frozen=True)
class Step:
    id: str
    action: BoundAction | None = None  # None marks an unmapped step
    text: str = ""
    cluster: str | None = None

    @property
    def action_key(self) -> str | None:
        return self.action.key if self.action is not None else None


@dataclass(frozen=True)
class Procedure:
    steps: tuple[Step, ...]

    def __post_init__(self):
        ids = [s.id for s in self.steps]
        if len(set(ids)) != len(ids):
            raise ProcforgeError("duplicate step ids in procedure")

    @property
    def step_ids(self) -> list[str]:
        return [s.id for s in self.steps]

    def get_step(self, step_id: str) -> Step:
        for s in self.steps:
            if s.id == step_id:
                return s
        raise KeyError(step_id)

    def reordered(self, order: list[str]) -> "Procedure":
        by_id = {s.id: s for s in self.steps}
        return Procedure(steps=tuple(by_id[i] for i in order))


@dataclass(frozen=True)
class PrecedenceConstraint:
    predecessor: str
    successor: str
    origin: str = "manual"

    def __post_init__(self):
        if self.predecessor == self.successor:
            raise ProcforgeError("constraint predecessor and successor must differ")


@dataclass(frozen=True)
class ClusterConstraint:
    earlier: str
    later: str

    def __post_init__(self):
        if self.earlier == self.later:
            raise ProcforgeError("cluster constraint labels must differ")


@dataclass(frozen=True)
class RepairWeights:
    lambda_pos: float = 0.5
    lambda_edge: float = 1.0
    lambda_cluster: float = 0.0
    lambda_raw: float = 2.0

    def __post_init__(self):
        values = (self.lambda_pos, self.lambda_edge, self.lambda_cluster, self.lambda_raw)
        if any(v < 0 for v in values):
            raise ValueError("weights must be non-negative")
        if not any(v > 0 for v in values):
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class SearchParams:
    restarts: int = 4
    max_stale_iters: int = 10

    def __post_init__(self):
        if self.restarts < 1 or self.max_stale_iters < 0:
            raise ValueError("restarts must be >= 1 and max_stale_iters >= 0")


@dataclass(frozen=True)
class CostBreakdown:
    position: float
    edge: float
    cluster: float
    raw: float
    total: float

    def to_dict(self) -> dict:
        return {
            "position": self.position,
            "edge": self.edge,
            "cluster": self.cluster,
            "raw": self.raw,
            "total": self.total,
        }


@dataclass(frozen=True)
class RepairResult:
    order: tuple[str, ...]
    cost: CostBreakdown
    trace: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"order": list(self.order), "cost": self.cost.to_dict(), "trace": self.trace}


# ── rule → constraint mapping ─────────────────────────────────────────────


@dataclass(frozen=True)
class MappingResult:
    constraints: tuple[PrecedenceConstraint, ...]
    unmatched: tuple[CausalRule, ...]
    dropped: tuple[PrecedenceConstraint, ...] = ()

    def __iter__(self):
        # unpacks as (constraints, unmatched) for the common case
        return iter((list(self.constraints), list(self.unmatched)))


def map_rules_to_constraints(proc: Procedure, rules: list[CausalRule]) -> MappingResult:
    """Instantiate causal rules as step-level precedence constraints.

    For each consumer step, the nearest preceding producer step (by draft
    order) becomes the predecessor; when no producer precedes, the
    earliest producer step is used, unless the rule also lists
    ``initial_state`` — then the condition can hold from the start and
    the step gets no constraint.  Rules that match no steps are returned
    as unmatched.

    Toggle-style rule pairs can emit a contradictory 2-cycle on a
    scrambled draft (the corrupted order makes a restore pattern look
    intentional).  When both directions of a step pair are emitted, the
    edge whose rule can be satisfied by the initial state is dropped: the
    other side's condition can only come from its producer.
    """
    positions = {s.id: i for i, s in enumerate(proc.steps)}
    by_action: dict[str, list[Step]] = {}
    for s in proc.steps:
        if s.action_key is not None:
            by_action.setdefault(s.action_key, []).append(s)

    emitted: list[tuple[PrecedenceConstraint, bool]] = []  # (constraint, rule has initial_state)
    unmatched: list[CausalRule] = []
    for rule in rules:
        consumers = by_action.get(rule.action, [])
        producer_keys = [p for p in rule.producers if p != INITIAL_STATE]
        has_initial = INITIAL_STATE in rule.producers
        if not producer_keys and has_initial:
            continue  # condition holds initially; nothing to order
        producer_steps = [s for key in producer_keys for s in by_action.get(key, [])]
        if not consumers or not producer_steps:
            unmatched.append(rule)
            continue
        origin = f"{rule.action}<-{rule.variable}={rule.value}"
        for consumer in consumers:
            candidates = [s for s in producer_steps if s.id != consumer.id]
            if not candidates:
                continue
            preceding = [s for s in candidates if positions[s.id] < positions[consumer.id]]
            if preceding:
                pred = max(preceding, key=lambda s: positions[s.id])
            elif has_initial:
                continue  # first consumption is covered by the initial state
            else:
                pred = min(candidates, key=lambda s: positions[s.id])
            emitted.append(
                (PrecedenceConstraint(predecessor=pred.id, successor=consumer.id, origin=origin), has_initial)
            )

    pairs = {(c.predecessor, c.successor) for c, _ in emitted}
    constraints: list[PrecedenceConstraint] = []
    dropped: list[PrecedenceConstraint] = []
    for constraint, has_initial in emitted:
        reverse = (constraint.successor, constraint.predecessor)
        if reverse in pairs and has_initial:
            dropped.append(constraint)
        else:
            constraints.append(constraint)
    return MappingResult(
        constraints=tuple(constraints), unmatched=tuple(unmatched), dropped=tuple(dropped)
    )


# ── objective ─────────────────────────────────────────────────────────────


class _Instance:
    """Index-space view of one repair problem, for fast cost evaluation."""

    def __init__(self, draft: Procedure, constraints, clusters, weights: RepairWeights, raw_mode: str):
        if raw_mode not in (RAW_BINARY, RAW_GAP):
            raise ValueError(f"unknown raw penalty mode {raw_mode!r}")
        self.weights = weights
        self.raw_mode = raw_mode
        self.ids = [s.id for s in draft.steps]
        self.index = {sid: i for i, sid in enumerate(self.ids)}
        self.n = len(self.ids)
        missing = [
            c for c in constraints if c.predecessor not in self.index or c.successor not in self.index
        ]
        if missing:
            raise ProcforgeError(f"constraint references unknown step ids: {missing[0]}")
        self.constraints = [(self.index[c.predecessor], self.index[c.successor]) for c in constraints]
        self.cluster_pairs: list[tuple[int, int]] = []
        for cc in clusters:
            earlier = [i for i, s in enumerate(draft.steps) if s.cluster == cc.earlier]
            later = [i for i, s in enumerate(draft.steps) if s.cluster == cc.later]
            self.cluster_pairs.extend((u, v) for u in earlier for v in later)

    def order_to_indices(self, order: list[str]) -> list[int]:
        if sorted(order) != sorted(self.ids):
            raise PermutationError("order is not a permutation of the draft's step ids")
        return [self.index[sid] for sid in order]

    def cost(self, perm: list[int]) -> CostBreakdown:
        pos = [0] * self.n
        for p, idx in enumerate(perm):
            pos[idx] = p
        position = float(sum(abs(pos[i] - i) for i in range(self.n)))
        edge = float(sum(1 for i in range(self.n - 1) if pos[i + 1] != pos[i] + 1))
        cluster = float(sum(1 for u, v in self.cluster_pairs if pos[v] < pos[u]))
        raw = 0.0
        for pred, succ in self.constraints:
            deficit = pos[pred] - pos[succ]
            if deficit >= 0:
                raw += 1.0 if self.raw_mode == RAW_BINARY else float(deficit)
        w = self.weights
        total = w.lambda_pos * position + w.lambda_edge * edge + w.lambda_cluster * cluster + w.lambda_raw * raw
        return CostBreakdown(position=position, edge=edge, cluster=cluster, raw=raw, total=total)

    def displacement(self, perm: list[int]) -> int:
        return sum(abs(p - idx) for p, idx in enumerate(perm))


def objective_cost(
    order: list[str],
    draft: Procedure,
    constraints=(),
    clusters=(),
    weights: RepairWeights = RepairWeights(),
    raw_mode: str = RAW_BINARY,
) -> CostBreakdown:
    """Evaluate the four-term objective for one permutation of the draft."""
    inst = _Instance(draft, constraints, clusters, weights, raw_mode)
    return inst.cost(inst.order_to_indices(order))


# ── search ────────────────────────────────────────────────────────────────


def derive_seed(master: int, label: str) -> int:
    digest = hashlib.sha256(f"{master}:{label}".encode()).hexdigest()
    return int(digest[:16], 16)


def _reinsert(perm: list[int], i: int, j: int) -> list[int]:
    out = list(perm)
    moved = out.pop(i)
    out.insert(j, moved)
    return out


def _move_deltas(inst: _Instance, perm: list[int], pos: list[int], i: int, j: int):
    """Exact cost-term deltas for reinserting the element at position i to
    position j, without materializing the candidate permutation.

    Only the moved element and the block between i and j change position;
    the moved element is the only one whose relative order with others
    flips, and adjacency changes at the removal seam and insertion point.
    """
    n = inst.n
    x = perm[i]
    d_pos = abs(j - x) - abs(i - x)
    if i < j:
        for p in range(i + 1, j + 1):
            e = perm[p]
            d_pos += abs(p - 1 - e) - abs(p - e)
    else:
        for p in range(j, i):
            e = perm[p]
            d_pos += abs(p + 1 - e) - abs(p - e)
    lo, hi = (i, j) if i < j else (j, i)

    d_matches = 0
    if i < j:
        right = perm[i + 1]
        if i > 0:
            left = perm[i - 1]
            d_matches += (left + 1 == right) - (left + 1 == x)
        d_matches -= x + 1 == right
        d_matches += perm[j] + 1 == x
        if j + 1 < n:
            after = perm[j + 1]
            d_matches += (x + 1 == after) - (perm[j] + 1 == after)
    else:
        left = perm[i - 1]
        d_matches -= left + 1 == x
        if i + 1 < n:
            right = perm[i + 1]
            d_matches += (left + 1 == right) - (x + 1 == right)
        d_matches += x + 1 == perm[j]
        if j > 0:
            before = perm[j - 1]
            d_matches += (before + 1 == x) - (before + 1 == perm[j])
    d_edge = -d_matches

    gap_mode = inst.raw_mode == RAW_GAP
    shift = -1 if i < j else 1

    def new_pos(p: int) -> int:
        if p == i:
            return j
        if lo <= p <= hi:
            return p + shift
        return p

    d_raw = 0.0
    for a, b in inst.constraints:
        pa, pb = pos[a], pos[b]
        if not (lo <= pa <= hi or lo <= pb <= hi):
            continue
        old = pa - pb
        new = new_pos(pa) - new_pos(pb)
        if gap_mode:
            d_raw += (new if new > 0 else 0) - (old if old > 0 else 0)
        else:
            d_raw += (1 if new > 0 else 0) - (1 if old > 0 else 0)

    d_cluster = 0.0
    for u, v in inst.cluster_pairs:
        pu, pv = pos[u], pos[v]
        if not (lo <= pu <= hi or lo <= pv <= hi):
            continue
        d_cluster += (new_pos(pv) < new_pos(pu)) - (pv < pu)

    w = inst.weights
    d_total = (
        w.lambda_pos * d_pos
        + w.lambda_edge * d_edge
        + w.lambda_cluster * d_cluster
        + w.lambda_raw * d_raw
    )
    return d_total, d_pos


def _descend(inst: _Instance, start: list[int], max_stale: int):
    """Steepest descent over single-step reinsertions (which subsume all
    adjacent swaps), tolerating equal-cost moves for a bounded number of
    stale iterations.  Ties break toward minimum displacement from the
    draft, then lexicographically.
    """
    n = inst.n
    current = list(start)
    pos = [0] * n
    for p, e in enumerate(current):
        pos[e] = p
    current_cost = inst.cost(current).total
    best = list(current)
    best_cost = current_cost
    stale = 0
    iterations = 0
    max_iterations = 200 * max(n, 1)
    while iterations < max_iterations:
        iterations += 1
        best_delta = None
        ties: list[tuple[int, int, int]] = []  # (d_pos, i, j)
        for i in range(n):
            for j in range(n):
                if j == i:
                    continue
                d_total, d_pos = _move_deltas(inst, current, pos, i, j)
                if best_delta is None or d_total < best_delta - 1e-12:
                    best_delta = d_total
                    ties = [(d_pos, i, j)]
                elif d_total <= best_delta + 1e-12:
                    ties.append((d_pos, i, j))
        if best_delta is None:
            break
        min_disp = min(t[0] for t in ties)
        finalists = [t for t in ties if t[0] == min_disp]
        _, i, j = min(finalists, key=lambda t: tuple(_reinsert(current, t[1], t[2])))
        if best_delta < -1e-12:
            stale = 0
        elif best_delta <= 1e-12 and stale < max_stale:
            stale += 1
        else:
            break
        current = _reinsert(current, i, j)
        for p, e in enumerate(current):
            pos[e] = p
        current_cost = inst.cost(current).total
        if current_cost < best_cost - 1e-12:
            best = list(current)
            best_cost = current_cost
    return best, best_cost, iterations


def repair(
    draft: Procedure,
    constraints=(),
    clusters=(),
    weights: RepairWeights = RepairWeights(),
    search: SearchParams = SearchParams(),
    seed: int = 0,
    raw_mode: str = RAW_BINARY,
) -> RepairResult:
    """Local-search repair warm-started at the draft ordering.

    The first restart begins at the draft, so the result never costs more
    than the draft does; later restarts begin at seeded shuffles.
    Contradictory constraints are not an error: violations are soft
    penalties and the search simply minimizes them.  Deterministic given
    the seed.
    """
    inst = _Instance(draft, constraints, clusters, weights, raw_mode)
    draft_perm = list(range(inst.n))
    best_perm = None
    best_cost = None
    total_iterations = 0
    for r in range(search.restarts):
        if r == 0:
            start = draft_perm
        else:
            rng = random.Random(derive_seed(seed, f"restart:{r}"))
            start = list(draft_perm)
            rng.shuffle(start)
        perm, cost, iters = _descend(inst, start, search.max_stale_iters)
        total_iterations += iters
        if best_cost is None or cost < best_cost - 1e-12:
            best_perm, best_cost = perm, cost
    order = tuple(inst.ids[i] for i in best_perm)
    breakdown = inst.cost(best_perm)
    trace = {
        "restarts": search.restarts,
        "iterations": total_iterations,
        "seed": seed,
        "draft_cost": inst.cost(draft_perm).total,
        "method": "local_search",
    }
    return RepairResult(order=order, cost=breakdown, trace=trace)


def brute_force_repair(
    draft: Procedure,
    constraints=(),
    clusters=(),
    weights: RepairWeights = RepairWeights(),
    limit: int = 8,
    raw_mode: str = RAW_BINARY,
) -> RepairResult:
    """Exhaustive minimum over all permutations (independent optimizer
    oracle).  Ties break to the lexicographically first permutation in
    draft-index space.
    """
    inst = _Instance(draft, constraints, clusters, weights, raw_mode)
    if inst.n > limit:
        raise ProcforgeError(f"brute force refuses {inst.n} steps (limit {limit})")
    best_perm = None
    best_total = None
    for cand in itertools.permutations(range(inst.n)):
        total = inst.cost(list(cand)).total
        if best_total is None or total < best_total - 1e-12:
            best_total = total
            best_perm = cand
    order = tuple(inst.ids[i] for i in best_perm)
    return RepairResult(
        order=order,
        cost=inst.cost(list(best_perm)),
        trace={"method": "brute_force", "evaluated": _factorial(inst.n)},
    )


def _factorial(n: int) -> int:
    out = 1
    for i in range(2, n + 1):
        out *= i
    return out


# ── serialization ─────────────────────────────────────────────────────────


def procedure_to_dict(proc: Procedure) -> dict:
    steps = []
    for s in proc.steps:
        item: dict = {"id": s.id, "text": s.text}
        if s.action is None:
            item["action"] = None
        else:
            item["action"] = s.action.id
            item["params"] = dict(s.action.params)
        if s.cluster is not None:
            item["cluster"] = s.cluster
        steps.append(item)
    return {"steps": steps}


def procedure_from_dict(doc: dict) -> Procedure:
    steps = []
    for item in doc["steps"]:
        action = None
        if item.get("action") is not None:
            action = bound_action_from_parts(item["action"], item.get("params", {}))
        steps.append(
            Step(
                id=str(item["id"]),
                action=action,
                text=str(item.get("text", "")),
                cluster=item.get("cluster"),
            )
        )
    return Procedure(steps=tuple(steps))


def serialize_procedure(proc: Procedure) -> str:
    return json.dumps(procedure_to_dict(proc), indent=2, sort_keys=True) + "\n"


def constraints_to_dict(constraints: list[PrecedenceConstraint], clusters: list[ClusterConstraint]) -> dict:
    return {
        "raw": [
            {"predecessor": c.predecessor, "successor": c.successor, "origin": c.origin}
            for c in constraints
        ],
        "cluster": [{"earlier": c.earlier, "later": c.later} for c in clusters],
    }


def constraints_from_dict(doc: dict) -> tuple[list[PrecedenceConstraint], list[ClusterConstraint]]:
    raw = [
        PrecedenceConstraint(
            predecessor=item["predecessor"],
            successor=item["successor"],
            origin=item.get("origin", "manual"),
        )
        for item in doc.get("raw", [])
    ]
    clusters = [
        ClusterConstraint(earlier=item["earlier"], later=item["later"])
        for item in doc.get("cluster", [])
    ]
    return raw, clusters


def serialize_constraints(constraints, clusters) -> str:
    return json.dumps(constraints_to_dict(list(constraints), list(clusters)), indent=2, sort_keys=True) + "\n"

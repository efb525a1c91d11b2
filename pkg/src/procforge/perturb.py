"""Seeded perturbation harness: introduce plausible local misorderings
into a ground-truth procedure to produce benchmark drafts.

Every kind reorders steps only; nothing is inserted or deleted.  Kind
applicability is detected from the step action identifiers (open/close
cap actions, power-button settings, knob resets, transfer interactions).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import ProcforgeError
from .repair import Procedure, Step

KIND_EARLY_TRANSFER = "early_transfer_before_open"
KIND_EARLY_CLOSE = "early_close"
KIND_LATE_POWER_ON = "late_power_on"
KIND_EARLY_POWER_OFF = "early_power_off_before_reset"
KIND_ADJACENT_SWAP = "generic_adjacent_swap"
KIND_REINSERT = "generic_reinsert"

ALL_KINDS = (
    KIND_EARLY_TRANSFER,
    KIND_EARLY_CLOSE,
    KIND_LATE_POWER_ON,
    KIND_EARLY_POWER_OFF,
    KIND_ADJACENT_SWAP,
    KIND_REINSERT,
)


@dataclass(frozen=True)
class PerturbationSpec:
    n_misorderings: int
    kinds: tuple[str, ...]
    seed: int = 0

    def __post_init__(self):
        if self.n_misorderings < 1:
            raise ValueError("n_misorderings must be >= 1")
        unknown = set(self.kinds) - set(ALL_KINDS)
        if unknown:
            raise ValueError(f"unknown perturbation kinds: {sorted(unknown)}")
        if not self.kinds:
            raise ValueError("at least one perturbation kind is required")


@dataclass
class PerturbationLog:
    moves: list[dict] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"moves": self.moves, "skipped": self.skipped}


def _is_open(step: Step) -> bool:
    return step.action_key is not None and step.action.id.endswith(".open")


def _is_close(step: Step) -> bool:
    return step.action_key is not None and step.action.id.endswith(".close")


def _is_transfer(step: Step) -> bool:
    return step.action_key is not None and step.action.id.startswith("transfer_material:")


def _power_value(step: Step) -> str | None:
    if step.action is None or ".power_button.set" not in step.action.id:
        return None
    return dict(step.action.params).get("value")


def _is_reset(step: Step) -> bool:
    if step.action is None or not step.action.id.endswith(".set"):
        return False
    return dict(step.action.params).get("value") == "zero" and ".power_button." not in step.action.id


def _transfer_source_object(step: Step) -> str:
    # transfer_material:<source>-><target>[:material]
    body = step.action.id.split(":", 1)[1]
    return body.split("->", 1)[0].split(".")[0]


def _move(seq: list[Step], i: int, j: int) -> None:
    step = seq.pop(i)
    seq.insert(j, step)


def _pick(rng: random.Random, items: list):
    return items[rng.randrange(len(items))] if items else None


def _candidates_early_transfer(seq: list[Step]) -> list[tuple[int, int, int]]:
    """(transfer index, open index, lowest landing index) triples."""
    out = []
    for ti, step in enumerate(seq):
        if not _is_transfer(step):
            continue
        source = _transfer_source_object(step)
        opens = [
            oi
            for oi, s in enumerate(seq[:ti])
            if _is_open(s) and s.action.id.split(".")[0] == source
        ]
        if opens:
            oi = max(opens)
            out.append((ti, oi, max(0, oi - 4)))
    return out


def _apply_kind(kind: str, seq: list[Step], rng: random.Random) -> dict | None:
    n = len(seq)
    if kind == KIND_EARLY_TRANSFER:
        cand = _pick(rng, _candidates_early_transfer(seq))
        if cand is None:
            return None
        ti, oi, lo = cand
        j = rng.randint(lo, oi)
        _move(seq, ti, j)
        return {"from": ti, "to": j}
    if kind == KIND_EARLY_CLOSE:
        closes = []
        for ci, step in enumerate(seq):
            if not _is_close(step):
                continue
            obj = step.action.id.split(".")[0]
            opens = [oi for oi, s in enumerate(seq[:ci]) if _is_open(s) and s.action.id.split(".")[0] == obj]
            if opens and ci - max(opens) >= 3:
                closes.append((ci, max(opens)))
        cand = _pick(rng, closes)
        if cand is None:
            return None
        ci, oi = cand
        j = rng.randint(oi + 1, ci - 1)
        _move(seq, ci, j)
        return {"from": ci, "to": j}
    if kind == KIND_LATE_POWER_ON:
        ons = [i for i, s in enumerate(seq) if _power_value(s) == "on" and i + 3 <= n - 1]
        i = _pick(rng, ons)
        if i is None:
            return None
        j = rng.randint(i + 3, min(n - 1, i + 8))
        _move(seq, i, j)
        return {"from": i, "to": j}
    if kind == KIND_EARLY_POWER_OFF:
        cands = []
        for fi, step in enumerate(seq):
            if _power_value(step) != "off":
                continue
            obj = step.action.id.split(".")[0]
            resets = [zi for zi, s in enumerate(seq[:fi]) if _is_reset(s) and s.action.id.split(".")[0] == obj]
            if resets:
                cands.append((fi, max(resets)))
        cand = _pick(rng, cands)
        if cand is None:
            return None
        fi, zi = cand
        j = rng.randint(max(0, zi - 3), zi)
        _move(seq, fi, j)
        return {"from": fi, "to": j}
    if kind == KIND_ADJACENT_SWAP:
        if n < 2:
            return None
        i = rng.randrange(n - 1)
        _move(seq, i + 1, i)
        return {"from": i + 1, "to": i}
    if kind == KIND_REINSERT:
        if n < 2:
            return None
        i = rng.randrange(n)
        offset = rng.choice([-4, -3, -2, -1, 1, 2, 3, 4])
        j = min(n - 1, max(0, i + offset))
        if j == i:
            j = max(0, i - 1) if i == n - 1 else i + 1
        _move(seq, i, j)
        return {"from": i, "to": j}
    raise ProcforgeError(f"unknown perturbation kind {kind!r}")


def perturb(truth: Procedure, spec: PerturbationSpec, strict: bool = False) -> tuple[Procedure, PerturbationLog]:
    """Apply the requested misordering kinds to a copy of the procedure.

    Kinds are applied in the listed order, cycling until
    ``n_misorderings`` moves have been made.  Inapplicable kinds are
    logged and skipped unless ``strict`` is set.  Deterministic given the
    seed.
    """
    if len(truth.steps) < 2:
        raise ProcforgeError("perturbation needs at least 2 steps")
    rng = random.Random(spec.seed)
    seq = list(truth.steps)
    log = PerturbationLog()
    applied = 0
    cycles_without_progress = 0
    while applied < spec.n_misorderings:
        progressed = False
        for kind in spec.kinds:
            if applied >= spec.n_misorderings:
                break
            before = [s.id for s in seq]
            move = _apply_kind(kind, seq, rng)
            if move is None:
                message = {"kind": kind, "reason": "no applicable steps"}
                if strict:
                    raise ProcforgeError(f"perturbation kind {kind!r} is not applicable")
                log.skipped.append(message)
                continue
            moved_id = before[move["from"]]
            log.moves.append({"kind": kind, "step_id": moved_id, "from": move["from"], "to": move["to"]})
            applied += 1
            progressed = True
        if not progressed:
            cycles_without_progress += 1
            if cycles_without_progress >= 1:
                break
        else:
            cycles_without_progress = 0
    return Procedure(steps=tuple(seq)), log

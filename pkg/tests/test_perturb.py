import json

import pytest

from procforge.errors import ProcforgeError
from procforge.perturb import (
    ALL_KINDS,
    KIND_ADJACENT_SWAP,
    KIND_EARLY_CLOSE,
    KIND_EARLY_POWER_OFF,
    KIND_EARLY_TRANSFER,
    KIND_LATE_POWER_ON,
    PerturbationSpec,
    perturb,
)
from procforge.repair import procedure_from_dict


@pytest.fixture(scope="module")
def truth(benchmark_dir):
    return procedure_from_dict(json.loads((benchmark_dir / "truth_procedure.json").read_text()))


def positions(proc):
    return {s.id: i for i, s in enumerate(proc.steps)}


def test_reorders_only_never_inserts_or_deletes(truth):
    spec = PerturbationSpec(n_misorderings=6, kinds=ALL_KINDS, seed=3)
    draft, log = perturb(truth, spec)
    assert sorted(s.id for s in draft.steps) == sorted(s.id for s in truth.steps)
    assert len(log.moves) == 6


def test_deterministic_given_seed(truth):
    spec = PerturbationSpec(n_misorderings=6, kinds=ALL_KINDS, seed=11)
    a, log_a = perturb(truth, spec)
    b, log_b = perturb(truth, spec)
    assert [s.id for s in a.steps] == [s.id for s in b.steps]
    assert log_a.to_dict() == log_b.to_dict()


def test_early_transfer_lands_before_its_open_step(truth):
    spec = PerturbationSpec(n_misorderings=1, kinds=(KIND_EARLY_TRANSFER,), seed=5)
    draft, log = perturb(truth, spec)
    move = log.moves[0]
    moved = move["step_id"]
    pos = positions(draft)
    step = draft.get_step(moved)
    source = step.action.id.split(":", 1)[1].split("->", 1)[0].split(".")[0]
    open_pos = [
        i for i, s in enumerate(draft.steps) if s.action is not None and s.action.id == f"{source}.cap.open"
    ]
    assert pos[moved] <= min(open_pos)


def test_late_power_on_moves_a_power_step_later(truth):
    spec = PerturbationSpec(n_misorderings=1, kinds=(KIND_LATE_POWER_ON,), seed=2)
    draft, log = perturb(truth, spec)
    move = log.moves[0]
    assert move["to"] > move["from"]
    step = draft.get_step(move["step_id"])
    assert dict(step.action.params)["value"] == "on"


def test_early_power_off_lands_at_or_before_reset(truth):
    spec = PerturbationSpec(n_misorderings=1, kinds=(KIND_EARLY_POWER_OFF,), seed=1)
    draft, log = perturb(truth, spec)
    move = log.moves[0]
    step = draft.get_step(move["step_id"])
    assert dict(step.action.params)["value"] == "off"
    obj = step.action.id.split(".")[0]
    pos = positions(draft)
    reset_pos = [
        i
        for i, s in enumerate(draft.steps)
        if s.action is not None
        and s.action.id == f"{obj}.speed_knob.set"
        and dict(s.action.params)["value"] == "zero"
    ]
    assert pos[move["step_id"]] <= max(reset_pos)


def test_early_close_stays_after_matching_open(truth):
    spec = PerturbationSpec(n_misorderings=1, kinds=(KIND_EARLY_CLOSE,), seed=4)
    draft, log = perturb(truth, spec)
    move = log.moves[0]
    pos = positions(draft)
    obj = draft.get_step(move["step_id"]).action.id.split(".")[0]
    open_positions = [
        i for i, s in enumerate(draft.steps) if s.action is not None and s.action.id == f"{obj}.cap.open"
    ]
    assert pos[move["step_id"]] > min(open_positions)
    assert move["to"] < move["from"]


def test_adjacent_swap_on_two_step_procedure():
    doc = {"steps": [{"id": "a", "action": None}, {"id": "b", "action": None}]}
    truth = procedure_from_dict(doc)
    spec = PerturbationSpec(n_misorderings=1, kinds=(KIND_ADJACENT_SWAP,), seed=0)
    draft, log = perturb(truth, spec)
    assert [s.id for s in draft.steps] == ["b", "a"]
    assert len(log.moves) == 1


def test_inapplicable_kind_skipped_and_logged():
    doc = {"steps": [{"id": "a", "action": None}, {"id": "b", "action": None}]}
    truth = procedure_from_dict(doc)
    spec = PerturbationSpec(n_misorderings=1, kinds=(KIND_LATE_POWER_ON,), seed=0)
    draft, log = perturb(truth, spec)
    assert [s.id for s in draft.steps] == ["a", "b"]
    assert log.moves == []
    assert log.skipped and log.skipped[0]["kind"] == KIND_LATE_POWER_ON


def test_inapplicable_kind_strict_raises():
    doc = {"steps": [{"id": "a", "action": None}, {"id": "b", "action": None}]}
    truth = procedure_from_dict(doc)
    spec = PerturbationSpec(n_misorderings=1, kinds=(KIND_LATE_POWER_ON,), seed=0)
    with pytest.raises(ProcforgeError):
        perturb(truth, spec, strict=True)


def test_zero_misorderings_rejected():
    with pytest.raises(ValueError):
        PerturbationSpec(n_misorderings=0, kinds=ALL_KINDS)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        PerturbationSpec(n_misorderings=1, kinds=("swap_everything",))

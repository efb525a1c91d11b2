"""Transition sampling and tabular aggregation.

A ground-truth oracle stands in for the transition generator: states are
drawn uniformly, valid actions apply their effects (reward 1), invalid
ones leave the state unchanged (reward 0), and a noise channel flips a
fraction of the judgments.  Samples sharing a (state, action) key are
grouped into world-model entries with outcome counts, probabilities, and
a plausibility score.
"""

import json
from pathlib import Path

from procforge import (
    NoiseSpec,
    OracleSpec,
    aggregate,
    build_template,
    parse_inventory,
    resolve_dynamic_domains,
    simulate_oracle,
)

BENCHMARK = Path(__file__).resolve().parent.parent / "benchmark"


def short(var):
    return ".".join(var.split(".")[-2:])


def label(action_key):
    if action_key.startswith("transfer_material:"):
        src, dst = action_key.split(":")[1].split("->")
        return f"transfer {src}->{dst}"
    return action_key


def main():
    inv = resolve_dynamic_domains(parse_inventory((BENCHMARK / "pipette_inventory.json").read_text()))
    tpl = build_template(inv, "electronic_pipette")
    oracles = json.loads((BENCHMARK / "pipette_oracles.json").read_text())
    oracle = OracleSpec.from_dict(oracles["electronic_pipette"])

    batch = simulate_oracle(tpl, oracle, 250, NoiseSpec(reward_flip_rate=0.05, seed=0))
    print(f"generated {len(batch.samples)} samples; a few of them:")
    for sample in batch.samples[:4]:
        state = ", ".join(f"{short(k)}={v}" for k, v in sorted(sample.state.items()))
        changed = {k: v for k, v in sample.next_state.items() if sample.state[k] != v}
        effect = ", ".join(f"{short(k)}={v}" for k, v in sorted(changed.items())) or "unchanged"
        print(f"  [{sample.reward}] {label(sample.action.key)}: {state} -> {effect}")

    wm = aggregate(batch)
    print(f"\naggregated into {len(wm.entries)} (state, action) entries")
    print("entries with mixed or wrong judgments (plausibility strictly between 0 and 1):")
    for entry in wm.sorted_entries():
        if 0.0 < entry.plausibility < 1.0:
            state = ", ".join(f"{short(k)}={v}" for k, v in sorted(tpl.state_dict(entry.state).items()))
            outs = "; ".join(
                f"count {o.count}, prob {entry.probability(o):.2f}, avg reward {o.avg_reward:.2f}"
                for o in entry.outcomes
            )
            print(f"  {label(entry.action.key)}")
            print(f"    state: {state}")
            print(f"    plausibility {entry.plausibility:.2f}; outcomes: {outs}")


if __name__ == "__main__":
    main()

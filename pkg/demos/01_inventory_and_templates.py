"""From a structured lab inventory to per-object behaviour templates.

The inventory declares objects, components, symbolic state variables,
actions, and the interactions that connect objects.  Receptor and
material domains are declared ``dynamic`` and get their concrete values
from the interactions.  Each object then gets a template: its own
variables and actions plus the one-hop context other objects contribute.
"""

from pathlib import Path

from procforge import build_template, enumerate_states, parse_inventory, resolve_dynamic_domains

BENCHMARK = Path(__file__).resolve().parent.parent / "benchmark"


def main():
    text = (BENCHMARK / "inventory.json").read_text()
    inv = parse_inventory(text)
    print(f"parsed {len(inv.objects)} objects, {len(inv.interactions)} interactions")
    for category in ("instrument", "container", "tool"):
        members = [o.id for o in inv.objects if o.category == category]
        print(f"  {category}s: {', '.join(members)}")

    inv = resolve_dynamic_domains(inv)
    print("\ndynamic domains after resolution:")
    for var in inv.variables():
        if var.resolved_from:
            print(f"  {var.id}: {' | '.join(var.domain)}   (from {var.resolved_from})")

    print("\nelectronic pipette template:")
    tpl = build_template(inv, "electronic_pipette")
    for v in tpl.variables:
        print(f"  [{v.origin}] {v.id}: {' | '.join(v.domain)}")
    for a in tpl.actions:
        print(f"  [{a.kind}] {a.id}")
    states = enumerate_states(tpl)
    print(f"  state space: {len(states)} complete assignments")

    print("\ntemplate sizes across the bench:")
    for obj in inv.objects:
        tpl = build_template(inv, obj.id)
        print(
            f"  {obj.id}: {tpl.state_space_size()} states, "
            f"{len(tpl.bound_actions())} bound actions"
        )


if __name__ == "__main__":
    main()

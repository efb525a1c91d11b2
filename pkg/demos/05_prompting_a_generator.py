"""Prompting a text-generation endpoint for transition samples.

The template dictionary is embedded into a deterministic, versioned
prompt; the endpoint's reply is parsed as line-delimited records and
validated exactly like a samples file.  Here the network transport is a
stub that answers with oracle-generated records (three of them damaged)
so the demo runs offline.
"""

import json
import os
from pathlib import Path

from procforge import (
    EndpointConfig,
    NoiseSpec,
    OracleSpec,
    build_prompt,
    build_template,
    fetch_samples,
    parse_inventory,
    resolve_dynamic_domains,
    simulate_oracle,
)

BENCHMARK = Path(__file__).resolve().parent.parent / "benchmark"


def main():
    inv = resolve_dynamic_domains(parse_inventory((BENCHMARK / "pipette_inventory.json").read_text()))
    tpl = build_template(inv, "electronic_pipette")

    prompt = build_prompt(tpl, 50)
    print("prompt sent to the generator:")
    print("-" * 60)
    print(prompt)
    print("-" * 60)

    oracle = OracleSpec.from_dict(
        json.loads((BENCHMARK / "pipette_oracles.json").read_text())["electronic_pipette"]
    )
    reply_lines = simulate_oracle(tpl, oracle, 50, NoiseSpec(seed=1)).to_jsonl().splitlines()
    reply_lines[4] = "I am a language model and here are your samples:"
    reply_lines[19] = '{"state": "oops"}'
    reply_lines[33] = reply_lines[33].replace('"opened"', '"ajar"')
    reply = "\n".join(reply_lines)

    def stub_transport(url, headers, body, timeout):
        return 200, json.dumps({"choices": [{"message": {"content": reply}}]})

    os.environ.setdefault("PROCFORGE_API_KEY", "demo-key")
    endpoint = EndpointConfig(base_url="https://generator.example/v1/chat", model="demo-model")
    report = fetch_samples(endpoint, prompt, tpl, transport=stub_transport)

    print(f"accepted {len(report.batch.samples)} of 50 records; rejections:")
    for lineno, reason in report.rejections:
        print(f"  line {lineno}: {reason}")


if __name__ == "__main__":
    main()

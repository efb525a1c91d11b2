"""Transition-sample sources.

Three interchangeable producers of ``(state, action, next_state, reward)``
batches over a template: a deterministic ground-truth oracle with
configurable noise injection, line-delimited sample files, and a remote
text-generation endpoint prompted from the template.
"""

from __future__ import annotations

import json
import os
import random
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field

from .errors import (
    EndpointAuthError,
    EndpointError,
    OracleCoverageError,
    SampleValidationError,
)
from .templates import BoundAction, MdpTemplate, bound_action_from_parts, enumerate_states

PROMPT_VERSION = "1"

SOURCE_ORACLE = "oracle"
SOURCE_FILE = "file"
SOURCE_ENDPOINT = "endpoint"


@dataclass(frozen=True)
class TransitionSample:
    state: dict[str, str]
    action: BoundAction
    next_state: dict[str, str]
    reward: int

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "state": dict(sorted(self.state.items())),
                "action": self.action.id,
                "params": dict(self.action.params),
                "next_state": dict(sorted(self.next_state.items())),
                "reward": self.reward,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class SampleBatch:
    template: MdpTemplate
    samples: tuple[TransitionSample, ...]
    source: str

    def to_jsonl(self) -> str:
        return "".join(s.to_json_line() + "\n" for s in self.samples)


@dataclass(frozen=True)
class OracleRule:
    """Ground-truth behaviour of one bound action.

    ``valid_only`` restricts generation for this action to states where
    the preconditions hold, so no invalid-side evidence is produced.
    """

    preconditions: dict[str, str] = field(default_factory=dict)
    effects: dict[str, str] = field(default_factory=dict)
    valid_only: bool = False


@dataclass(frozen=True)
class OracleSpec:
    rules: dict[str, OracleRule]

    def validate_against(self, tpl: MdpTemplate) -> None:
        var_domains = {v.id: v.domain for v in tpl.variables}
        for key, rule in self.rules.items():
            for mapping, label in ((rule.preconditions, "precondition"), (rule.effects, "effect")):
                for var, value in mapping.items():
                    if var not in var_domains:
                        raise OracleCoverageError(f"{key}: {label} variable {var!r} not in template")
                    if value not in var_domains[var]:
                        raise OracleCoverageError(
                            f"{key}: {label} value {value!r} not in domain of {var}"
                        )

    @staticmethod
    def from_dict(doc: dict) -> "OracleSpec":
        rules = {}
        for key, item in doc.items():
            rules[key] = OracleRule(
                preconditions=dict(item.get("preconditions", {})),
                effects=dict(item.get("effects", {})),
                valid_only=bool(item.get("valid_only", False)),
            )
        return OracleSpec(rules=rules)

    def to_dict(self) -> dict:
        out = {}
        for key, rule in sorted(self.rules.items()):
            item: dict = {
                "preconditions": dict(sorted(rule.preconditions.items())),
                "effects": dict(sorted(rule.effects.items())),
            }
            if rule.valid_only:
                item["valid_only"] = True
            out[key] = item
        return out


@dataclass(frozen=True)
class NoiseSpec:
    reward_flip_rate: float = 0.0
    effect_corrupt_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("reward_flip_rate", "effect_corrupt_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")


def simulate_oracle(
    tpl: MdpTemplate,
    oracle: OracleSpec,
    n: int,
    noise: NoiseSpec = NoiseSpec(),
    actions: list[str] | None = None,
) -> SampleBatch:
    """Generate ``n`` samples from the ground-truth oracle.

    States are drawn uniformly from the enumerated state space (restricted
    to precondition-satisfying states for ``valid_only`` actions).  When
    the preconditions hold the effects are applied and the reward is 1;
    otherwise the state is left unchanged and the reward is 0.  Noise then
    flips rewards and corrupts next-states independently.  ``actions``
    optionally restricts generation to a subset of bound-action keys.

    Deterministic given the noise seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    bound = tpl.bound_actions()
    missing = [b.key for b in bound if b.key not in oracle.rules]
    if missing:
        raise OracleCoverageError(f"oracle does not cover template actions: {missing}")
    oracle.validate_against(tpl)
    if actions is not None:
        wanted = set(actions)
        unknown = wanted - {b.key for b in bound}
        if unknown:
            raise OracleCoverageError(f"unknown action keys: {sorted(unknown)}")
        bound = [b for b in bound if b.key in wanted]
        if not bound:
            raise ValueError("action filter excludes every template action")

    states = [tpl.state_tuple(s) for s in enumerate_states(tpl)]
    var_index = {v.id: i for i, v in enumerate(tpl.variables)}
    candidates: dict[str, list[tuple[str, ...]]] = {}
    for b in bound:
        rule = oracle.rules[b.key]
        if rule.valid_only:
            pool = [
                s for s in states if all(s[var_index[v]] == val for v, val in rule.preconditions.items())
            ]
            if not pool:
                raise OracleCoverageError(f"{b.key}: no state satisfies the preconditions")
            candidates[b.key] = pool
        else:
            candidates[b.key] = states

    rng = random.Random(noise.seed)
    samples = []
    for _ in range(n):
        action = bound[rng.randrange(len(bound))]
        rule = oracle.rules[action.key]
        pool = candidates[action.key]
        state = pool[rng.randrange(len(pool))]
        ok = all(state[var_index[v]] == val for v, val in rule.preconditions.items())
        if ok:
            next_state = list(state)
            for v, val in rule.effects.items():
                next_state[var_index[v]] = val
            next_state = tuple(next_state)
            reward = 1
        else:
            next_state = state
            reward = 0
        # Noise draws are consumed unconditionally so that the same seed
        # yields the same underlying transitions at any noise rate.
        flip_u = rng.random()
        corrupt_u = rng.random()
        if flip_u < noise.reward_flip_rate:
            reward = 1 - reward
        if corrupt_u < noise.effect_corrupt_rate:
            next_state = states[rng.randrange(len(states))]
        samples.append(
            TransitionSample(
                state=tpl.state_dict(state),
                action=action,
                next_state=tpl.state_dict(next_state),
                reward=reward,
            )
        )
    return SampleBatch(template=tpl, samples=tuple(samples), source=SOURCE_ORACLE)


# ── ingestion ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class IngestReport:
    batch: SampleBatch
    rejections: tuple[tuple[int, str], ...]


def _validate_assignment(tpl: MdpTemplate, raw: object, label: str) -> dict[str, str]:
    if not isinstance(raw, dict):
        raise SampleValidationError(f"{label} must be an object")
    expected = set(tpl.variable_ids)
    got = set(raw)
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        detail = []
        if missing:
            detail.append(f"missing {missing}")
        if extra:
            detail.append(f"unexpected {extra}")
        raise SampleValidationError(f"{label} variables do not match template: " + ", ".join(detail))
    for var_id, value in raw.items():
        if value not in tpl.domain_of(var_id):
            raise SampleValidationError(f"{label}: value {value!r} not in domain of {var_id}")
    return {k: str(v) for k, v in raw.items()}


def parse_sample_line(tpl: MdpTemplate, line: str, action_keys: set[str] | None = None) -> TransitionSample:
    """Parse and validate one JSONL sample record."""
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SampleValidationError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SampleValidationError("record must be a JSON object")
    for key in ("state", "action", "next_state", "reward"):
        if key not in doc:
            raise SampleValidationError(f"missing key {key!r}")
    action_id = doc["action"]
    params = doc.get("params", {})
    if not isinstance(action_id, str) or not isinstance(params, dict):
        raise SampleValidationError("action must be a string and params an object")
    action = bound_action_from_parts(action_id, {str(k): str(v) for k, v in params.items()})
    keys = action_keys if action_keys is not None else tpl.action_keys()
    if action.key not in keys:
        raise SampleValidationError(f"action {action.key!r} not in template")
    state = _validate_assignment(tpl, doc["state"], "state")
    next_state = _validate_assignment(tpl, doc["next_state"], "next_state")
    reward = doc["reward"]
    if reward not in (0, 1):
        raise SampleValidationError(f"reward must be 0 or 1, got {reward!r}")
    return TransitionSample(state=state, action=action, next_state=next_state, reward=int(reward))


def ingest_samples(
    stream,
    tpl: MdpTemplate,
    strict: bool = False,
    source: str = SOURCE_FILE,
) -> IngestReport:
    """Validate line-delimited sample records against a template.

    Malformed lines are collected into the rejection report (line number,
    reason) rather than raised, unless ``strict`` is set.  Blank lines are
    ignored.
    """
    if isinstance(stream, str):
        stream = stream.splitlines()
    action_keys = tpl.action_keys()
    accepted = []
    rejections = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            accepted.append(parse_sample_line(tpl, line, action_keys))
        except SampleValidationError as exc:
            if strict:
                raise SampleValidationError(f"line {lineno}: {exc}") from exc
            rejections.append((lineno, str(exc)))
    batch = SampleBatch(template=tpl, samples=tuple(accepted), source=source)
    return IngestReport(batch=batch, rejections=tuple(rejections))


# ── prompting ─────────────────────────────────────────────────────────────


def build_prompt(tpl: MdpTemplate, n: int) -> str:
    """Deterministic generation prompt embedding the template dictionary."""
    lines = [
        f"procforge transition-sample prompt, version {PROMPT_VERSION}",
        f"template: {tpl.focal_object}",
        "",
        "You are generating state-transition samples for one piece of",
        "laboratory equipment. A sample is a JSON object on a single line",
        'with the keys "state", "action", "params", "next_state", "reward".',
        "",
        "Use only the state variables, values, and actions listed here.",
        "",
        "State variables (every state must assign all of them):",
    ]
    for v in tpl.variables:
        lines.append(f"- {v.id}: " + " | ".join(v.domain))
    lines.append("")
    lines.append("Actions:")
    for a in tpl.actions:
        if a.params:
            rendered = ", ".join(f"{name}=" + "|".join(dom) for name, dom in a.params)
            lines.append(f"- {a.id} (params: {rendered})")
        else:
            lines.append(f"- {a.id} (no params)")
    lines += [
        "",
        "Judge each transition: set reward to 1 if the transition is",
        "plausible for real equipment of this kind, and 0 if it is",
        "implausible or invalid in that state. Include both plausible and",
        "implausible transitions; failed actions leave the state unchanged.",
        "",
        f"Produce exactly {n} records, one JSON object per line, and no",
        "other text.",
    ]
    return "\n".join(lines) + "\n"


# ── endpoint fetching ─────────────────────────────────────────────────────


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str = "PROCFORGE_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 2
    backoff_s: float = 1.0
    n_requests: int = 1
    response_path: str = "choices.0.message.content"


def _urllib_transport(url: str, headers: dict[str, str], body: bytes, timeout: float) -> tuple[int, str]:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read().decode("utf-8")
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read().decode("utf-8", errors="replace")
    except urllib.error.URLError as exc:
        raise EndpointError(f"transport failure: {exc.reason}") from exc
    except TimeoutError as exc:
        raise EndpointError("request timed out") from exc


def _extract_text(doc: object, path: str) -> str:
    node = doc
    for part in path.split("."):
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError) as exc:
                raise KeyError(part) from exc
        elif isinstance(node, dict):
            node = node[part]
        else:
            raise KeyError(part)
    if not isinstance(node, str):
        raise KeyError(path)
    return node


def _request_once(endpoint: EndpointConfig, prompt: str, transport) -> str:
    api_key = os.environ.get(endpoint.api_key_env)
    if not api_key:
        raise EndpointAuthError(f"environment variable {endpoint.api_key_env} is not set")
    body = json.dumps(
        {"model": endpoint.model, "messages": [{"role": "user", "content": prompt}]}
    ).encode("utf-8")
    headers = {"Content-Type": "application/json", "Authorization": f"Bearer {api_key}"}
    attempt = 0
    while True:
        try:
            status, text = transport(endpoint.base_url, headers, body, endpoint.timeout_s)
        except EndpointError:
            if attempt >= endpoint.max_retries:
                raise
            status, text = None, None
        if status is not None:
            if status in (401, 403):
                raise EndpointAuthError(f"endpoint rejected credentials (HTTP {status})")
            if status == 200:
                try:
                    return _extract_text(json.loads(text), endpoint.response_path)
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    err = EndpointError(f"unparseable endpoint response: {exc}")
                    err.raw_text = text  # preserved for audit
                    raise err from exc
            if status not in (429,) and status < 500:
                raise EndpointError(f"endpoint returned HTTP {status}: {text[:200]}")
        if attempt >= endpoint.max_retries:
            raise EndpointError(f"endpoint failed after {attempt + 1} attempts (HTTP {status})")
        time.sleep(endpoint.backoff_s * (2**attempt))
        attempt += 1


def fetch_samples(
    endpoint: EndpointConfig,
    prompt: str,
    tpl: MdpTemplate,
    transport=None,
    strict: bool = False,
) -> IngestReport:
    """Fetch generated samples from a text-generation endpoint.

    The response text is parsed as line-delimited records and validated
    exactly like :func:`ingest_samples`.  ``transport`` may be injected
    for testing; the default posts JSON over HTTP.  Multiple requests
    (``endpoint.n_requests``) are issued sequentially and merged in
    request order, so the result is deterministic given the responses.
    """
    transport = transport or _urllib_transport
    texts = [_request_once(endpoint, prompt, transport) for _ in range(endpoint.n_requests)]
    return ingest_samples("\n".join(texts), tpl, strict=strict, source=SOURCE_ENDPOINT)

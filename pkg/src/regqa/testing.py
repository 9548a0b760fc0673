"""In-process stubs and generators for offline testing.

The stub LLM clients satisfy the same .complete()/.model_name surface as
LlmClient, so the whole QA path runs with no network and no weights; the
call counter makes "the model was never called" checks observable.
"""

from __future__ import annotations

import random

from .errors import LlmUnreachableError
from .rulecode import RuleSet, StationClass, Tier


class StubLlm:
    """Scripted chat client: replays canned replies and counts calls."""

    def __init__(self, replies: list[str] | None = None, model_name: str = "stub"):
        self.replies = list(replies or [])
        self.model_name = model_name
        self.call_count = 0
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        self.call_count += 1
        self.prompts.append(prompt)
        if not self.replies:
            return ""
        return self.replies[min(self.call_count, len(self.replies)) - 1]


class EchoLlm(StubLlm):
    """Returns each prompt verbatim; handy for prompt-content assertions."""

    def complete(self, prompt: str) -> str:
        self.call_count += 1
        self.prompts.append(prompt)
        return prompt


class DownLlm(StubLlm):
    """Raises LlmUnreachableError on every call."""

    def complete(self, prompt: str) -> str:
        self.call_count += 1
        raise LlmUnreachableError("stub endpoint is down")


class ScriptedReranker:
    """Duck-typed rerank client scoring passages with a supplied function."""

    def __init__(self, score_fn):
        self.score_fn = score_fn
        self.call_count = 0

    def score(self, query: str, passages: list[str]) -> list[float]:
        self.call_count += 1
        return [float(self.score_fn(query, p, i)) for i, p in enumerate(passages)]


def random_ruleset(rng: random.Random, ruleset_id: str = "") -> RuleSet:
    """A structurally valid random rule set for property tests.

    At most one base class per bandwidth rule plus an optional mobile
    class, with strictly increasing tiers and non-increasing limits.
    """
    classes: list[StationClass] = []
    rules = ["absolute", "per_mhz"]
    rng.shuffle(rules)
    n_base = rng.randint(1, 2)
    for bandwidth_rule in rules[:n_base]:
        default_haat = rng.choice([100.0, 200.0, 300.0])
        limit = float(rng.randint(20, 80) * 50)
        tiers = []
        haat = default_haat
        tier_limit = limit
        for _ in range(rng.randint(0, 4)):
            haat += rng.choice([100.0, 250.0, 500.0])
            tier_limit = tier_limit * rng.choice([0.5, 0.75, 1.0])
            tiers.append(Tier(haat, tier_limit))
        urban = limit / 2 if rng.random() < 0.6 else None
        suffix = "wide" if bandwidth_rule == "per_mhz" else "narrow"
        classes.append(StationClass(
            name=f"Base_Stations_{suffix}",
            kind="base_wide" if bandwidth_rule == "per_mhz" else "base_narrow",
            bandwidth_rule=bandwidth_rule,
            default_tier=Tier(default_haat, limit),
            urban_limit_watts=urban,
            haat_tiers=tuple(tiers),
        ))
    if rng.random() < 0.7 or not classes:
        classes.append(StationClass(
            name="Mobile_Stations",
            kind="mobile",
            bandwidth_rule="absolute",
            flat_limit_watts=float(rng.choice([1, 2, 5, 10])),
        ))
    rng.shuffle(classes)
    return RuleSet(
        ruleset_id=ruleset_id or f"band-{rng.randint(0, 10**6)}",
        band_name=f"Test Band {rng.randint(1, 99)}",
        station_classes=tuple(classes),
    )

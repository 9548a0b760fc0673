"""Machine-readable spectrum rules: parsing, evaluation, graphs, ontology.

The rule document format is nested JSON keyed by band, then station group,
then a limit block ("Max_eirp" for absolute limits, "Max_eirp_per_MHz" for
per-megahertz limits). A limit block holds a default HAAT entry
("HAAT_up_to_<N>m"), an optional "Urban_Areas" limit, and an ordered
"Height_Restrictions" array of higher HAAT tiers. Mobile groups carry a
flat quantity instead of a block. Quantities are strings like
"3280 watts" or "490 watts per MHz". See schemas/ruleset.schema.json.

Tier boundaries are inclusive at the upper edge ("up to 300m" means
haat <= 300). In urban areas the effective limit is the minimum of the
urban limit and the tier limit; both candidates are recorded in
applied_rule_path so auditors can see which rule fired. A HAAT above the
last tier is an error, not an extrapolation: silence in the source rules
means "not authorized here".
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import ExtractionFailedError, HaatOutOfDomainError, NoMatchingClassError, \
    RegqaError, SchemaViolationError, TierOrderError, UnitError
from .ingest import Document

BASE_WIDE = "base_wide"
BASE_NARROW = "base_narrow"
MOBILE = "mobile"

ABSOLUTE = "absolute"
PER_MHZ = "per_mhz"

TOTAL = "total"

_HAAT_KEY_RE = re.compile(r"^haat[ _]up[ _]to[ _]?([0-9]+(?:\.[0-9]+)?)\s*m$", re.IGNORECASE)
_QUANTITY_RE = re.compile(
    r"^\s*([0-9][0-9,]*(?:\.[0-9]+)?)\s*([A-Za-z]+)(\s+per\s+MHz)?\s*$", re.IGNORECASE)
_WATT_UNITS = {"watt", "watts", "w"}


def fmt_watts(value: float) -> str:
    """Exact rendering without a trailing .0 (3280.0 -> "3280"); round-trips."""
    if value == int(value):
        return str(int(value))
    return repr(float(value))


@dataclass(frozen=True)
class Tier:
    haat_max_m: float
    limit_watts: float


@dataclass(frozen=True)
class StationClass:
    name: str
    kind: str  # base_wide | base_narrow | mobile
    bandwidth_rule: str  # absolute | per_mhz
    flat_limit_watts: float | None = None
    default_tier: Tier | None = None
    urban_limit_watts: float | None = None
    haat_tiers: tuple[Tier, ...] = ()

    def __post_init__(self):
        if self.kind == MOBILE:
            if self.flat_limit_watts is None or self.haat_tiers:
                raise ValueError("mobile class needs a flat limit and no tiers")
        elif self.default_tier is None:
            raise ValueError(f"base class {self.name!r} needs a default HAAT tier")


@dataclass(frozen=True)
class RuleSet:
    ruleset_id: str
    band_name: str
    station_classes: tuple[StationClass, ...]
    source_doc: str = ""

    def __post_init__(self):
        if not self.station_classes:
            raise ValueError("a rule set needs at least one station class")
        names = [c.name for c in self.station_classes]
        if len(set(names)) != len(names):
            raise ValueError("station class names must be unique")


@dataclass(frozen=True)
class StationQuery:
    station: str  # "base" | "mobile"
    occupied_bandwidth_mhz: float
    haat_m: float = 0.0
    urban: bool = False

    def __post_init__(self):
        if self.station not in ("base", "mobile"):
            raise ValueError(f"unknown station type {self.station!r}")
        if self.occupied_bandwidth_mhz <= 0:
            raise ValueError("occupied_bandwidth_mhz must be > 0")
        if self.haat_m < 0:
            raise ValueError("haat_m must be >= 0")

    def to_dict(self) -> dict:
        return {
            "station": self.station,
            "occupied_bandwidth_mhz": self.occupied_bandwidth_mhz,
            "haat_m": self.haat_m,
            "urban": self.urban,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StationQuery":
        return cls(
            station=d["station"],
            occupied_bandwidth_mhz=d["occupied_bandwidth_mhz"],
            haat_m=d.get("haat_m", 0.0),
            urban=d.get("urban", False),
        )


@dataclass(frozen=True)
class PowerLimit:
    value_watts: float
    basis: str  # "total" | "per_mhz"
    applied_rule_path: list[str]

    def __post_init__(self):
        if self.value_watts <= 0:
            raise ValueError("value_watts must be > 0")
        if not self.applied_rule_path:
            raise ValueError("applied_rule_path must be non-empty")

    def to_dict(self) -> dict:
        return {
            "value_watts": self.value_watts,
            "basis": self.basis,
            "applied_rule_path": list(self.applied_rule_path),
        }


# --- parsing ----------------------------------------------------------------

def _parse_quantity(value, path: str) -> float:
    if not isinstance(value, str):
        raise SchemaViolationError(path, f"expected a quantity string, got {type(value).__name__}")
    m = _QUANTITY_RE.match(value)
    if not m or m.group(2).lower() not in _WATT_UNITS:
        raise UnitError(path, value)
    return float(m.group(1).replace(",", ""))


def _parse_haat_key(key: str, path: str) -> float:
    m = _HAAT_KEY_RE.match(key.replace("_", " ").strip())
    if not m:
        raise SchemaViolationError(path, f"expected a 'HAAT_up_to_<N>m' key, got {key!r}")
    return float(m.group(1))


def _norm_key(key: str) -> str:
    return key.strip().lower().replace("_", " ").replace("-", " ")


def _parse_limit_block(block, path: str) -> tuple[Tier, float | None, tuple[Tier, ...]]:
    if not isinstance(block, dict):
        raise SchemaViolationError(path, "expected an object of HAAT entries")
    default: Tier | None = None
    urban: float | None = None
    tiers: list[Tier] = []
    for key, value in block.items():
        norm = _norm_key(key)
        kpath = f"{path}.{key}"
        if norm == "urban areas":
            urban = _parse_quantity(value, kpath)
        elif norm == "height restrictions":
            if not isinstance(value, list):
                raise SchemaViolationError(kpath, "expected an array of single-key objects")
            for i, entry in enumerate(value):
                epath = f"{kpath}[{i}]"
                if not isinstance(entry, dict) or len(entry) != 1:
                    raise SchemaViolationError(epath, "expected a single-key object")
                (tier_key, tier_value), = entry.items()
                haat = _parse_haat_key(tier_key, f"{epath}.{tier_key}")
                tiers.append(Tier(haat, _parse_quantity(tier_value, f"{epath}.{tier_key}")))
        elif _HAAT_KEY_RE.match(norm):
            if default is not None:
                raise SchemaViolationError(kpath, "duplicate default HAAT entry")
            default = Tier(_parse_haat_key(key, kpath), _parse_quantity(value, kpath))
        else:
            raise SchemaViolationError(kpath, f"unrecognized key {key!r}")
    if default is None:
        raise SchemaViolationError(path, "missing default 'HAAT_up_to_<N>m' entry")

    for i in range(1, len(tiers)):
        if tiers[i].haat_max_m <= tiers[i - 1].haat_max_m:
            raise TierOrderError(path, "tier heights must be strictly increasing")
        if tiers[i].limit_watts > tiers[i - 1].limit_watts:
            raise TierOrderError(path, "tier limits must be non-increasing")
    if tiers and default.haat_max_m >= tiers[0].haat_max_m:
        raise TierOrderError(path, "default HAAT must lie below the first restriction tier")
    return default, urban, tuple(tiers)


def _parse_station_class(name: str, body, path: str) -> StationClass:
    if not isinstance(body, dict):
        raise SchemaViolationError(path, "expected an object")
    by_norm = {_norm_key(k): (k, v) for k, v in body.items()}
    if len(by_norm) != 1:
        raise SchemaViolationError(path, "expected exactly one limit key per station group")
    if "max eirp per mhz" in by_norm:
        key, value = by_norm["max eirp per mhz"]
        default, urban, tiers = _parse_limit_block(value, f"{path}.{key}")
        return StationClass(name, BASE_WIDE, PER_MHZ, None, default, urban, tiers)
    if "max eirp" in by_norm:
        key, value = by_norm["max eirp"]
        if isinstance(value, str):
            return StationClass(name, MOBILE, ABSOLUTE,
                                flat_limit_watts=_parse_quantity(value, f"{path}.{key}"))
        default, urban, tiers = _parse_limit_block(value, f"{path}.{key}")
        return StationClass(name, BASE_NARROW, ABSOLUTE, None, default, urban, tiers)
    raise SchemaViolationError(path, "expected a 'Max_eirp' or 'Max_eirp_per_MHz' key")


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def parse_ruleset(text: str, ruleset_id: str | None = None,
                  source_doc: str = "") -> RuleSet:
    """Parse and validate a rule document (JSON, see module docstring)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolationError("$", f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or len(data) != 1:
        raise SchemaViolationError("$", "expected a single top-level band key")
    (band_name, groups), = data.items()
    if not isinstance(groups, dict) or not groups:
        raise SchemaViolationError(band_name, "expected at least one station group")

    classes = []
    base_rules_seen: set[str] = set()
    for name, body in groups.items():
        cls = _parse_station_class(name, body, f"{band_name}.{name}")
        if cls.kind != MOBILE:
            if cls.bandwidth_rule in base_rules_seen:
                raise SchemaViolationError(
                    f"{band_name}.{name}",
                    f"two base station groups share the {cls.bandwidth_rule!r} bandwidth rule")
            base_rules_seen.add(cls.bandwidth_rule)
        elif any(c.kind == MOBILE for c in classes):
            raise SchemaViolationError(f"{band_name}.{name}", "duplicate mobile station group")
        classes.append(cls)

    return RuleSet(
        ruleset_id=ruleset_id or _slug(band_name),
        band_name=band_name,
        station_classes=tuple(classes),
        source_doc=source_doc,
    )


def serialize_ruleset(rules: RuleSet) -> str:
    """Render a RuleSet back to the rule document format (round-trips)."""
    def quantity(value: float, per_mhz: bool) -> str:
        return f"{fmt_watts(value)} watts" + (" per MHz" if per_mhz else "")

    groups = {}
    for cls in rules.station_classes:
        if cls.kind == MOBILE:
            groups[cls.name] = {"Max_eirp": quantity(cls.flat_limit_watts, False)}
            continue
        per = cls.bandwidth_rule == PER_MHZ
        block = {
            f"HAAT_up_to_{fmt_watts(cls.default_tier.haat_max_m)}m":
                quantity(cls.default_tier.limit_watts, False),
        }
        if cls.urban_limit_watts is not None:
            block["Urban_Areas"] = quantity(cls.urban_limit_watts, False)
        if cls.haat_tiers:
            block["Height_Restrictions"] = [
                {f"HAAT_up_to_{fmt_watts(t.haat_max_m)}m": quantity(t.limit_watts, per)}
                for t in cls.haat_tiers
            ]
        groups[cls.name] = {"Max_eirp_per_MHz" if per else "Max_eirp": block}
    return json.dumps({rules.band_name: groups}, indent=2, ensure_ascii=False)


# --- evaluation ---------------------------------------------------------------

def _select_class(rules: RuleSet, q: StationQuery) -> StationClass:
    if q.station == "mobile":
        for cls in rules.station_classes:
            if cls.kind == MOBILE:
                return cls
        raise NoMatchingClassError(f"{rules.ruleset_id}: no mobile station class")
    wanted = ABSOLUTE if q.occupied_bandwidth_mhz <= 1.0 else PER_MHZ
    for cls in rules.station_classes:
        if cls.kind != MOBILE and cls.bandwidth_rule == wanted:
            return cls
    raise NoMatchingClassError(
        f"{rules.ruleset_id}: no base station class with {wanted!r} bandwidth rule")


def evaluate_limit(rules: RuleSet, q: StationQuery) -> PowerLimit:
    """Deterministic EIRP limit for a station query, with an audit trail.

    Base stations at or below 1 MHz occupied bandwidth use the absolute
    limit class, wider ones the per-MHz class. The HAAT tier whose upper
    edge first covers the query applies; urban limits cap the tier limit
    via min().
    """
    cls = _select_class(rules, q)
    if cls.kind == MOBILE:
        return PowerLimit(
            value_watts=cls.flat_limit_watts,
            basis=TOTAL,
            applied_rule_path=[cls.name,
                               f"flat mobile limit -> {fmt_watts(cls.flat_limit_watts)} W"],
        )

    path = [cls.name]
    default = cls.default_tier
    if q.haat_m <= default.haat_max_m:
        tier_limit = default.limit_watts
        path.append(f"default tier: HAAT {fmt_watts(q.haat_m)} m <= "
                    f"{fmt_watts(default.haat_max_m)} m -> {fmt_watts(tier_limit)} W")
    else:
        tier = next((t for t in cls.haat_tiers if q.haat_m <= t.haat_max_m), None)
        if tier is None:
            raise HaatOutOfDomainError(
                f"{cls.name}: HAAT {fmt_watts(q.haat_m)} m exceeds the last tier; "
                "the rules are silent above it")
        tier_limit = tier.limit_watts
        path.append(f"height tier: HAAT {fmt_watts(q.haat_m)} m <= "
                    f"{fmt_watts(tier.haat_max_m)} m -> {fmt_watts(tier_limit)} W")

    value = tier_limit
    if q.urban and cls.urban_limit_watts is not None:
        value = min(tier_limit, cls.urban_limit_watts)
        path.append(f"urban area: min({fmt_watts(tier_limit)}, "
                    f"{fmt_watts(cls.urban_limit_watts)}) -> {fmt_watts(value)} W")

    basis = PER_MHZ if cls.bandwidth_rule == PER_MHZ else TOTAL
    return PowerLimit(value_watts=value, basis=basis, applied_rule_path=path)


# --- graph and ontology projections -------------------------------------------

@dataclass(frozen=True)
class GraphNode:
    id: str
    label: str
    kind: str  # band | station_class | constraint | limit


@dataclass(frozen=True)
class GraphEdge:
    src: str
    dst: str
    relation: str  # has_class | has_constraint | limits_to


@dataclass(frozen=True)
class RuleGraph:
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "label": n.label, "kind": n.kind} for n in self.nodes],
            "edges": [{"from": e.src, "to": e.dst, "relation": e.relation}
                      for e in self.edges],
        }


def build_knowledge_graph(rules: RuleSet) -> RuleGraph:
    """Band -> station classes -> constraints (tier/urban/default/flat) -> limits."""
    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []
    band_id = f"band:{rules.band_name}"
    nodes.append(GraphNode(band_id, rules.band_name, "band"))

    def add_limit(class_id: str, tag: str, label: str, value: float, per: bool):
        cid = f"{class_id}:constraint:{tag}"
        lid = f"{class_id}:limit:{tag}"
        unit = "W/MHz" if per else "W"
        nodes.append(GraphNode(cid, label, "constraint"))
        nodes.append(GraphNode(lid, f"{fmt_watts(value)} {unit}", "limit"))
        edges.append(GraphEdge(class_id, cid, "has_constraint"))
        edges.append(GraphEdge(cid, lid, "limits_to"))

    for cls in rules.station_classes:
        class_id = f"class:{cls.name}"
        nodes.append(GraphNode(class_id, cls.name, "station_class"))
        edges.append(GraphEdge(band_id, class_id, "has_class"))
        if cls.kind == MOBILE:
            add_limit(class_id, "flat", "any operation", cls.flat_limit_watts, False)
            continue
        per = cls.bandwidth_rule == PER_MHZ
        d = cls.default_tier
        add_limit(class_id, f"haat{fmt_watts(d.haat_max_m)}",
                  f"HAAT <= {fmt_watts(d.haat_max_m)} m", d.limit_watts, per)
        if cls.urban_limit_watts is not None:
            add_limit(class_id, "urban", "urban areas", cls.urban_limit_watts, per)
        for tier in cls.haat_tiers:
            add_limit(class_id, f"haat{fmt_watts(tier.haat_max_m)}",
                      f"HAAT <= {fmt_watts(tier.haat_max_m)} m", tier.limit_watts, per)
    return RuleGraph(tuple(nodes), tuple(edges))


def graph_to_dot(graph: RuleGraph) -> str:
    """Render the rule graph in DOT format."""
    shapes = {"band": "doubleoctagon", "station_class": "box",
              "constraint": "ellipse", "limit": "note"}

    def esc(s: str) -> str:
        return s.replace("\\", "\\\\").replace('"', '\\"')

    lines = ["digraph rules {", "  rankdir=LR;"]
    for node in graph.nodes:
        lines.append(f'  "{esc(node.id)}" [label="{esc(node.label)}" '
                     f'shape={shapes[node.kind]} class="{node.kind}"];')
    for edge in graph.edges:
        lines.append(f'  "{esc(edge.src)}" -> "{esc(edge.dst)}" [label="{edge.relation}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Concept:
    name: str
    parent: str | None = None


@dataclass(frozen=True)
class Property:
    name: str
    domain: str
    range: str


@dataclass(frozen=True)
class Ontology:
    concepts: tuple[Concept, ...]
    properties: tuple[Property, ...]
    constraints: tuple[str, ...]

    def __post_init__(self):
        declared = {c.name for c in self.concepts}
        for prop in self.properties:
            if prop.domain not in declared or prop.range not in declared:
                raise ValueError(f"property {prop.name} references undeclared concepts")
        for concept in self.concepts:
            if concept.parent is not None and concept.parent not in declared:
                raise ValueError(f"concept {concept.name} has undeclared parent")

    def render(self) -> str:
        lines = ["Concepts:"]
        for c in self.concepts:
            if c.parent is None:
                lines.append(f"- {c.name}")
        for c in self.concepts:
            if c.parent is not None:
                lines.append(f"- {c.name} IS-A {c.parent}")
        lines.append("")
        lines.append("Properties:")
        for p in self.properties:
            lines.append(f"- {p.name}: {p.domain} -> {p.range}")
        lines.append("")
        lines.append("Constraints:")
        for text in self.constraints:
            lines.append(f"- {text}")
        return "\n".join(lines) + "\n"


def emit_ontology(rules: RuleSet) -> Ontology:
    """Concepts, properties, and constraint sentences projected from the rules."""
    concepts = [
        Concept("BaseStation"),
        Concept("MobileStation"),
        Concept("HAAT"),
        Concept("EIRP"),
        Concept("Bandwidth"),
    ]
    if any(c.urban_limit_watts is not None for c in rules.station_classes):
        concepts.append(Concept("UrbanBaseStation", "BaseStation"))
        concepts.append(Concept("NonUrbanBaseStation", "BaseStation"))
    properties = (
        Property("hasEIRP", "BaseStation", "EIRP"),
        Property("hasHAAT", "BaseStation", "HAAT"),
        Property("hasBandwidth", "BaseStation", "Bandwidth"),
        Property("hasMaxEIRP", "MobileStation", "EIRP"),
    )

    constraints: list[str] = []
    for cls in rules.station_classes:
        if cls.kind == MOBILE:
            constraints.append(
                f"MobileStation has a maximum EIRP of {fmt_watts(cls.flat_limit_watts)} watts")
            continue
        per = " per MHz" if cls.bandwidth_rule == PER_MHZ else ""
        d = cls.default_tier
        constraints.append(
            f"{cls.name} with HAAT up to {fmt_watts(d.haat_max_m)} m has a maximum EIRP "
            f"of {fmt_watts(d.limit_watts)} watts{per}")
        if cls.urban_limit_watts is not None:
            constraints.append(
                f"{cls.name} in urban areas has a maximum EIRP of "
                f"{fmt_watts(cls.urban_limit_watts)} watts{per}")
        for tier in cls.haat_tiers:
            constraints.append(
                f"{cls.name} with HAAT up to {fmt_watts(tier.haat_max_m)} m has a maximum "
                f"EIRP of {fmt_watts(tier.limit_watts)} watts{per}")
    return Ontology(tuple(concepts), properties, tuple(constraints))


# --- rule test generation ------------------------------------------------------

HAAT_PROBE_EPSILON = 0.001  # metres


def generate_rule_tests(rules: RuleSet) -> list[tuple[StationQuery, PowerLimit]]:
    """Boundary test cases for every tier edge, urban pairing, and mobile class.

    Each HAAT edge is probed at, just below, and just above its value
    (probes above the last tier are omitted: they have no defined limit).
    Expected values come from evaluate_limit, so replaying the output
    against it must be all green.
    """
    cases: list[tuple[StationQuery, PowerLimit]] = []
    for cls in rules.station_classes:
        if cls.kind == MOBILE:
            q = StationQuery("mobile", 1.0)
            cases.append((q, evaluate_limit(rules, q)))
            continue
        bandwidth = 1.0 if cls.bandwidth_rule == ABSOLUTE else 5.0
        edges = [cls.default_tier.haat_max_m] + [t.haat_max_m for t in cls.haat_tiers]
        last = edges[-1]
        probes: list[float] = []
        for edge in edges:
            probes.append(edge)
            below = edge - HAAT_PROBE_EPSILON
            if below >= 0:
                probes.append(below)
            if edge < last:
                probes.append(edge + HAAT_PROBE_EPSILON)
        urban_options = [False, True] if cls.urban_limit_watts is not None else [False]
        for haat in sorted(set(probes)):
            for urban in urban_options:
                q = StationQuery("base", bandwidth, haat, urban)
                cases.append((q, evaluate_limit(rules, q)))
    return cases


# --- LLM-assisted extraction ----------------------------------------------------

RULE_FORMAT_GUIDE = """Return only a JSON object with this shape:
{"<band name>": {
  "<base station group, bandwidth at or below 1 MHz>": {
    "Max_eirp": {
      "HAAT_up_to_<N>m": "<number> watts",
      "Urban_Areas": "<number> watts",
      "Height_Restrictions": [{"HAAT_up_to_<N>m": "<number> watts"}, ...]
    }
  },
  "<base station group, bandwidth above 1 MHz>": {
    "Max_eirp_per_MHz": { ...same keys, quantities may end in "watts per MHz"... }
  },
  "<mobile station group>": {"Max_eirp": "<number> watts"}
}}
Height_Restrictions must be ordered by increasing HAAT with non-increasing limits."""

_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n|\n?```$", re.MULTILINE)


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        text = _FENCE_RE.sub("", text).strip()
    return text


def extract_rules_llm(llm, doc: Document, max_repair_rounds: int = 2) -> RuleSet:
    """Prompt an LLM to emit the rule document for doc, repairing on errors.

    One initial prompt plus up to max_repair_rounds re-prompts, each
    carrying the previous validation error path. Raises
    ExtractionFailedError with the last violation once rounds run out.
    """
    if not doc.blocks:
        raise ValueError("document has no content to extract from")
    base_prompt = (
        "Extract the radiated power and antenna height limits from the document "
        "below as machine-readable rules.\n\n"
        f"{RULE_FORMAT_GUIDE}\n\nDocument:\n{doc.text}"
    )
    prompt = base_prompt
    last_error: RegqaError | None = None
    rounds = 1 + max(0, max_repair_rounds)
    for _ in range(rounds):
        reply = llm.complete(prompt)
        try:
            return parse_ruleset(_strip_fences(reply), source_doc=doc.doc_id)
        except (SchemaViolationError, UnitError, TierOrderError) as exc:
            last_error = exc
            prompt = (
                f"{base_prompt}\n\nYour previous answer was rejected: {exc}\n"
                "Fix the problem and return the corrected JSON only."
            )
    raise ExtractionFailedError(rounds, last_error)

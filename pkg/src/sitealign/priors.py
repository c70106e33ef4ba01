"""Upright-bias priors per BIM family label.

A language-model service is asked, once per unseen label, how strongly an
object family tends to stand upright (0 = tips over freely, 1 = always
plumb). Everything degrades gracefully: responses are cached, malformed or
unreachable services fall back to a keyword table, and the whole module
works offline.
"""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .errors import PriorServiceError

__all__ = [
    "SYSTEM_PROMPT",
    "PriorServiceConfig",
    "SemanticPriorTable",
    "simplify_label",
    "build_detection_prompt",
    "fallback_priors",
    "fetch_priors",
    "effective_gravity_weight",
]

log = logging.getLogger(__name__)

# Protocol constant sent as the chat system message. The service must answer
# with a strict JSON object mapping each given label to a number in [0, 1].
SYSTEM_PROMPT = (
    "You return BIM alignment priors. For each label, output: upright bias "
    "∈ [0,1] (fraction of tilt corrected per ICP iteration). Only include "
    "labels given. No extra text. Take gravity into account, how likely is "
    "this to not be upright? If it is not likely we need a smaller value. "
    "JSON that matches the provided schema strictly."
)

DEFAULT_BIAS = 0.5

# Keyword rules for offline operation: heavy or anchored families stay
# upright (high bias); light, tippable street furniture does not (low bias).
_FALLBACK_RULES: tuple[tuple[str, float], ...] = (
    ("crate", 0.8),
    ("container", 0.8),
    ("box", 0.75),
    ("barrel", 0.75),
    ("drum", 0.75),
    ("pillar", 0.85),
    ("column", 0.85),
    ("wall", 0.85),
    ("slab", 0.85),
    ("beam", 0.75),
    ("girder", 0.75),
    ("equipment", 0.75),
    ("machine", 0.75),
    ("pallet", 0.7),
    ("scaffold", 0.7),
    ("cone", 0.3),
    ("tripod", 0.35),
    ("sign", 0.3),
    ("board", 0.4),
    ("pole", 0.4),
)

_UNIT_RE = re.compile(r"^\d+(\.\d+)?(mm|cm|m|in|ft)$")
_SECTION_RE = re.compile(r"^[a-z]{1,3}\d+x\d+$")  # e.g. w12x26
_DIMENSION_RE = re.compile(r"^\d+(\.\d+)?x\d+(\.\d+)?$")  # e.g. 48x40
_GRADE_RE = re.compile(r"^[a-z]{1,2}\d{2,4}$")  # e.g. a992, s355
_NUMBER_RE = re.compile(r"^\d+(\.\d+)?$")
_COLORS = {
    "red", "orange", "yellow", "green", "blue", "purple", "white",
    "black", "gray", "grey", "brown", "silver", "beige",
}
_STANDARDS = {"eur", "astm", "aisi", "din", "iso", "en"}
_MATERIALS = {"steel", "wooden", "wood", "aluminum", "aluminium", "concrete", "plastic", "metal"}
# Bare structural nouns read better (and detect better) with a material hint.
_ENRICH_WITH_CONCRETE = {"wall", "column", "pillar", "slab"}

_MAX_LABEL_WORDS = 6


def _drop_token(tok: str) -> bool:
    return (
        tok in _COLORS
        or tok in _STANDARDS
        or _UNIT_RE.match(tok) is not None
        or _SECTION_RE.match(tok) is not None
        or _DIMENSION_RE.match(tok) is not None
        or _GRADE_RE.match(tok) is not None
        or _NUMBER_RE.match(tok) is not None
    )


def simplify_label(raw: str) -> str:
    """Collapse a BIM family name to a short lowercase natural phrase.

    Separators become spaces, camelCase is split, and size / grade / color /
    standards tokens are dropped. The result is idempotent, non-empty, and
    at most six words; when every token would be dropped the cleaned,
    lowercased raw text is returned instead.
    """
    if not raw or not raw.strip():
        raise ValueError("label must be non-empty")
    s = re.sub(r"[_\s]+", " ", raw.strip())
    s = re.sub(r"(?<=[a-z0-9])(?=[A-Z])", " ", s)
    tokens = [t.lower() for t in s.split()]
    kept = [t for t in tokens if not _drop_token(t)]
    if not kept:
        kept = tokens
    return " ".join(kept[:_MAX_LABEL_WORDS])


def build_detection_prompt(labels, context: str = "building site") -> str:
    """Render open-vocabulary detection phrases, one per label.

    Every label appears verbatim in its phrase ("a <label> in a <context>");
    bare structural nouns such as "wall" gain a "concrete" material hint.
    """
    labels = list(labels)
    if not labels:
        raise ValueError("at least one label is required")
    phrases = []
    for label in labels:
        words = label.split()
        enriched = label
        if not any(w in _MATERIALS for w in words) and any(w in _ENRICH_WITH_CONCRETE for w in words):
            enriched = "concrete " + label
        article = "an" if enriched[0] in "aeiou" else "a"
        ctx_article = "an" if context[0] in "aeiou" else "a"
        phrases.append(f"{article} {enriched} in {ctx_article} {context}")
    return "; ".join(phrases)


@dataclass(frozen=True)
class PriorServiceConfig:
    """Where and how to reach the chat-completion style prior service."""

    endpoint: str | None = None
    model: str = "prior-model"
    timeout: float = 10.0
    retries: int = 1
    api_key_env: str = "PRIOR_SERVICE_API_KEY"
    cache_path: str | None = None


@dataclass(frozen=True)
class SemanticPriorTable:
    """Resolved upright biases per simplified label."""

    entries: dict
    source: str  # "llm" | "fallback" | "override"
    default_bias: float = DEFAULT_BIAS
    yaw_only: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.source not in ("llm", "fallback", "override"):
            raise ValueError(f"unknown prior source {self.source!r}")
        for label, value in self.entries.items():
            if not 0.0 <= float(value) <= 1.0:
                raise ValueError(f"bias for {label!r} outside [0, 1]: {value}")
        object.__setattr__(self, "yaw_only", frozenset(self.yaw_only))

    def bias(self, label: str) -> float:
        return float(self.entries.get(label, self.default_bias))

    def is_yaw_only(self, label: str) -> bool:
        return label in self.yaw_only

    def as_dict(self) -> dict:
        return {
            "source": self.source,
            "defaultBias": self.default_bias,
            "entries": {k: float(v) for k, v in sorted(self.entries.items())},
            "yawOnly": sorted(self.yaw_only),
        }

    @staticmethod
    def from_dict(d: dict) -> "SemanticPriorTable":
        return SemanticPriorTable(
            entries=dict(d.get("entries", {})),
            source=str(d.get("source", "override")),
            default_bias=float(d.get("defaultBias", DEFAULT_BIAS)),
            yaw_only=frozenset(d.get("yawOnly", [])),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @staticmethod
    def load(path) -> "SemanticPriorTable":
        return SemanticPriorTable.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fallback_priors(labels) -> SemanticPriorTable:
    """Keyword-rule table used whenever the service is unavailable."""
    entries = {}
    for label in labels:
        words = set()
        for w in label.split():
            words.add(w)
            words.update(w.split("-"))
        value = DEFAULT_BIAS
        for keyword, bias in _FALLBACK_RULES:
            if keyword in words:
                value = bias
                break
        entries[label] = value
    return SemanticPriorTable(entries=entries, source="fallback")


def effective_gravity_weight(gamma_initial: float, family_bias: float) -> float:
    """Gravity weight actually used for one object: base weight x family bias."""
    if gamma_initial < 0.0:
        raise ValueError("gamma_initial must be non-negative")
    if not 0.0 <= family_bias <= 1.0:
        raise ValueError("family_bias must lie in [0, 1]")
    return gamma_initial * family_bias


# ---------------------------------------------------------------------------
# service access


def _http_transport(url: str, payload: dict, headers: dict, timeout: float) -> dict:
    import requests

    resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    resp.raise_for_status()
    return resp.json()


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z]*\n?", "", text)
        text = re.sub(r"\n?```$", "", text)
    return text.strip()


def _parse_service_reply(reply: dict, expected: list[str]) -> dict:
    try:
        content = reply["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise PriorServiceError(f"reply missing choices[0].message.content: {exc}") from exc
    try:
        mapping = json.loads(_strip_fences(content))
    except json.JSONDecodeError as exc:
        raise PriorServiceError(f"reply content is not valid JSON: {exc}") from exc
    if not isinstance(mapping, dict):
        raise PriorServiceError("reply content must be a JSON object of label -> bias")
    missing = [l for l in expected if l not in mapping]
    extra = [k for k in mapping if k not in expected]
    if missing:
        raise PriorServiceError(f"reply missing labels: {missing}")
    if extra:
        raise PriorServiceError(f"reply contains labels that were not asked for: {extra}")
    out = {}
    for label in expected:
        value = mapping[label]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise PriorServiceError(f"bias for {label!r} is not a number: {value!r}")
        v = float(value)
        if v < 0.0 or v > 1.0:
            log.warning("bias for %r outside [0, 1] (%.3f); clamping", label, v)
            v = min(1.0, max(0.0, v))
        out[label] = v
    return out


def _load_cache(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return {}


def _store_cache(path: str, cache: dict) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(target.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(cache, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, str(target))  # atomic: readers never see a half-written file
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fetch_priors(
    labels, config: PriorServiceConfig, transport=None, *, allow_fallback: bool = True
) -> SemanticPriorTable:
    """Resolve upright biases for simplified labels.

    Cached values are reused per (label, model); only unseen labels hit the
    service. Any failure (no endpoint, timeout after retries, schema
    violation) downgrades the entire request to the keyword fallback table,
    unless ``allow_fallback`` is false, in which case the error propagates.
    """
    labels = list(labels)
    if not labels:
        raise ValueError("at least one label is required")
    if transport is None:
        transport = _http_transport

    cache = _load_cache(config.cache_path) if config.cache_path else {}
    cached = {
        label: float(cache[f"{config.model}::{label}"])
        for label in labels
        if f"{config.model}::{label}" in cache
    }
    pending = [label for label in labels if label not in cached]

    fresh: dict = {}
    if pending:
        if not config.endpoint:
            if not allow_fallback:
                raise PriorServiceError("no prior service endpoint configured")
            log.warning("no prior service endpoint configured; using fallback table")
            return fallback_priors(labels)
        payload = {
            "model": config.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": json.dumps({"labels": pending})},
            ],
        }
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last_error: Exception | None = None
        for _attempt in range(max(1, config.retries + 1)):
            try:
                reply = transport(config.endpoint, payload, headers, config.timeout)
                fresh = _parse_service_reply(reply, pending)
                last_error = None
                break
            except PriorServiceError as exc:
                last_error = exc  # schema problems will not improve; stop retrying
                break
            except Exception as exc:  # network errors: worth another attempt
                last_error = exc
        if last_error is not None:
            if not allow_fallback:
                if isinstance(last_error, PriorServiceError):
                    raise last_error
                raise PriorServiceError(f"prior service unavailable: {last_error}") from last_error
            log.warning("prior service unavailable (%s); using fallback table", last_error)
            return fallback_priors(labels)
        if config.cache_path:
            for label, value in fresh.items():
                cache[f"{config.model}::{label}"] = value
            _store_cache(config.cache_path, cache)

    return SemanticPriorTable(entries={**cached, **fresh}, source="llm")

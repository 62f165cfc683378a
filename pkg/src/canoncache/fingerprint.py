"""Tier 0: normalize a query, mask typed entities, hash the template.

Parameter variants of the same request ("from Alice" / "from Bob") collapse
to one template and therefore one hash; action variants ("check email" vs.
"send email") keep distinct templates. Entity detection is rule-based over
shipped lexicons: deterministic, dependency-free, and tuned for precision
over recall, which is what a zero-cost first tier needs.

Span offsets are UTF-8 byte offsets so fingerprints are reproducible
bit-for-bit regardless of host language or platform.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyInput, InvalidParams, OverlappingSpans
from .model import ParamSet, Query

ENTITY_KINDS = ("PERSON", "TICKER", "NUMBER", "DATETIME", "EMAIL_ADDR", "URL", "QUOTED")

# Precedence when candidate spans overlap; first wins.
KIND_PRECEDENCE = ("URL", "EMAIL_ADDR", "QUOTED", "DATETIME", "NUMBER", "TICKER", "PERSON")

# Entity kind -> parameter slot. First occurrence wins per slot.
SLOT_FOR_KIND = {
    "PERSON": "who",
    "TICKER": "who",
    "DATETIME": "when",
    "NUMBER": "how_much",
}

FNV64_OFFSET = 14695981039346656037
FNV64_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class EntitySpan:
    """Typed entity occupying [start, end) in UTF-8 byte offsets."""

    start: int
    end: int
    kind: str

    def __post_init__(self):
        if self.kind not in ENTITY_KINDS:
            raise InvalidParams(f"unknown entity kind {self.kind!r}")
        if not (0 <= self.start < self.end):
            raise InvalidParams(f"bad span [{self.start},{self.end})")


@dataclass(frozen=True)
class Template:
    """Normalized text with ``<KIND>`` placeholders plus captured surfaces."""

    text: str
    entities: tuple = ()

    def __post_init__(self):
        placeholders = sum(self.text.count(f"<{k}>") for k in ENTITY_KINDS)
        if placeholders != len(self.entities):
            raise InvalidParams(
                f"{placeholders} placeholders but {len(self.entities)} captured entities"
            )


@dataclass(frozen=True)
class Fingerprint:
    hash: int
    template_text: str


@dataclass(frozen=True)
class Lexicons:
    """Token sets backing the rule-based entity detector."""

    names: frozenset = frozenset()
    tickers: frozenset = frozenset()
    stopwords: frozenset = frozenset()

    @classmethod
    def load(cls, directory: str | Path) -> "Lexicons":
        directory = Path(directory)
        return cls(
            names=_read_lexicon(directory / "names.txt"),
            tickers=_read_lexicon(directory / "tickers.txt"),
            stopwords=_read_lexicon(directory / "stopwords.txt"),
        )


def _read_lexicon(path: Path) -> frozenset:
    """One token per line, '#' comments; missing file means empty set."""
    if not path.exists():
        return frozenset()
    tokens = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            tokens.add(line)
    return frozenset(tokens)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

_WS_RUN = re.compile(r"\s+")
_TERMINAL_PUNCT = ".?!"


def normalize_text(text: str) -> str:
    """NFKC, lowercase, collapse whitespace, trim, strip terminal ``.?!``."""
    if not text.strip():
        raise EmptyInput("text is empty")
    out = unicodedata.normalize("NFKC", text).lower()
    out = _WS_RUN.sub(" ", out).strip()
    out = out.rstrip(_TERMINAL_PUNCT).rstrip()
    if not out:
        raise EmptyInput(f"text {text!r} is empty after normalization")
    return out


# ---------------------------------------------------------------------------
# Entity extraction
# ---------------------------------------------------------------------------

_URL_RE = re.compile(r"(?:https?://|www\.)[^\s]+")
_EMAIL_RE = re.compile(r"\b[a-z0-9._%+-]+@[a-z0-9.-]+\.[a-z]{2,}\b")
# Double quotes always pair; single quotes only at word boundaries so
# apostrophes ("what's") never open a span.
_QUOTED_RE = re.compile(r"\"[^\"]+\"|(?:(?<=\s)|^)'[^']+'(?=\s|$)")
_CLOCK_RE = re.compile(r"\b\d{1,2}:\d{2}(?: ?(?:am|pm))?\b|\b\d{1,2} ?(?:am|pm)\b")
_DAYWORD_RE = re.compile(
    r"\b(?:monday|tuesday|wednesday|thursday|friday|saturday|sunday|today|tomorrow|tonight)\b"
)
_TOKEN_RE = re.compile(r"\S+")
_WORD_RE = re.compile(r"[a-z][a-z0-9']*")

_OPEN_PUNCT = "([{\"'"
_CLOSE_PUNCT = ")]}\"',;:."

_PERSON_TRIGGERS = frozenset({"from", "to", "with", "for"})


def extract_entities(text: str, lexicons: Lexicons) -> list[EntitySpan]:
    """Detect typed entities in normalized text.

    Returns non-overlapping spans sorted by start. On overlap the kind
    earlier in KIND_PRECEDENCE wins; within a kind, leftmost wins.
    """
    candidates: dict[str, list[tuple[int, int]]] = {kind: [] for kind in KIND_PRECEDENCE}

    for match in _URL_RE.finditer(text):
        candidates["URL"].append(match.span())
    for match in _EMAIL_RE.finditer(text):
        candidates["EMAIL_ADDR"].append(match.span())
    for match in _QUOTED_RE.finditer(text):
        candidates["QUOTED"].append(match.span())
    for regex in (_CLOCK_RE, _DAYWORD_RE):
        for match in regex.finditer(text):
            candidates["DATETIME"].append(match.span())
    # NUMBER = whole digit-bearing token, trimmed of enclosing punctuation.
    for match in _TOKEN_RE.finditer(text):
        if any(ch.isdigit() for ch in match.group()):
            start, end = match.span()
            while start < end and text[start] in _OPEN_PUNCT:
                start += 1
            while end > start and text[end - 1] in _CLOSE_PUNCT:
                end -= 1
            if any(ch.isdigit() for ch in text[start:end]):
                candidates["NUMBER"].append((start, end))

    words = list(_WORD_RE.finditer(text))
    prev_token = None
    for match in words:
        token = match.group()
        if 2 <= len(token) <= 5 and token in lexicons.tickers:
            candidates["TICKER"].append(match.span())
        if token in lexicons.names:
            candidates["PERSON"].append(match.span())
        elif (
            prev_token in _PERSON_TRIGGERS
            and token not in lexicons.stopwords
            and token.isalpha()
        ):
            candidates["PERSON"].append(match.span())
        prev_token = token

    accepted: list[tuple[int, int, str]] = []
    for kind in KIND_PRECEDENCE:
        for start, end in sorted(candidates[kind]):
            if all(end <= s or start >= e for s, e, _ in accepted):
                accepted.append((start, end, kind))
    accepted.sort()

    prefix = _byte_offsets(text)
    return [EntitySpan(start=prefix[s], end=prefix[e], kind=kind) for s, e, kind in accepted]


def _byte_offsets(text: str) -> list[int]:
    """Prefix table mapping code-point index -> UTF-8 byte offset."""
    offsets = [0]
    total = 0
    for ch in text:
        total += len(ch.encode("utf-8"))
        offsets.append(total)
    return offsets


# ---------------------------------------------------------------------------
# Templating and hashing
# ---------------------------------------------------------------------------

def templatize(text: str, spans: list[EntitySpan]) -> Template:
    """Replace each span with ``<KIND>``; capture surfaces in order."""
    raw = text.encode("utf-8")
    ordered = sorted(spans, key=lambda s: s.start)
    prev_end = 0
    pieces = []
    entities = []
    for span in ordered:
        if span.start < prev_end:
            raise OverlappingSpans(f"span [{span.start},{span.end}) overlaps previous")
        if span.end > len(raw):
            raise OverlappingSpans(f"span [{span.start},{span.end}) beyond text end {len(raw)}")
        pieces.append(raw[prev_end:span.start])
        pieces.append(f"<{span.kind}>".encode("ascii"))
        entities.append((span.kind, raw[span.start:span.end].decode("utf-8")))
        prev_end = span.end
    pieces.append(raw[prev_end:])
    return Template(text=b"".join(pieces).decode("utf-8"), entities=tuple(entities))


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a; bit-exact across platforms."""
    value = FNV64_OFFSET
    for byte in data:
        value = ((value ^ byte) * FNV64_PRIME) & _MASK64
    return value


def template_hash(template: Template) -> Fingerprint:
    return Fingerprint(hash=fnv1a_64(template.text.encode("utf-8")), template_text=template.text)


def fingerprint(query: Query, lexicons: Lexicons) -> tuple[Fingerprint, ParamSet]:
    """Normalize, mask, and hash a query; extract execution parameters.

    PERSON/TICKER surfaces fill ``who``, DATETIME fills ``when``, NUMBER
    fills ``how_much``; the first occurrence wins per slot.
    """
    text = normalize_text(query.text)
    spans = extract_entities(text, lexicons)
    template = templatize(text, spans)
    slots: dict[str, str] = {}
    for kind, surface in template.entities:
        slot = SLOT_FOR_KIND.get(kind)
        if slot is not None and slot not in slots:
            slots[slot] = surface
    return template_hash(template), ParamSet(slots=slots)

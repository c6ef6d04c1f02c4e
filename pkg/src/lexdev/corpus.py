"""Transcript ingestion and month-sliced corpora.

Input format (UTF-8, LF, one utterance per line):

    <age_months>\t<speaker_role>\t<token token ...>

where speaker_role is CHI (child) or ADU (adult).  Lines starting with
``#`` are comments; a ``#name: <token>`` comment marks a proper noun for
the remainder of that file.  Ages may be fractional; an utterance is
binned into ``floor(age)``.
"""

from __future__ import annotations

import math
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    ConfigError,
    EmptyCorpusError,
    TranscriptParseError,
    TranscriptReadError,
)

NAME_TOKEN = "[NAME]"

# Unicode general categories P* plus a handful of ASCII symbols that are
# treated as punctuation even though Unicode classes them as symbols.
_EXTRA_PUNCT = frozenset("+<>^~")
_punct_cache: dict[str, bool] = {}


class Speaker(str, Enum):
    CHILD = "child"
    ADULT = "adult"
    BOTH = "both"

    @classmethod
    def from_tag(cls, tag: str) -> "Speaker":
        if tag == "CHI":
            return cls.CHILD
        if tag == "ADU":
            return cls.ADULT
        raise ValueError(f"unknown speaker tag {tag!r}")


def _is_punct(ch: str) -> bool:
    flag = _punct_cache.get(ch)
    if flag is None:
        flag = ch in _EXTRA_PUNCT or unicodedata.category(ch).startswith("P")
        _punct_cache[ch] = flag
    return flag


def strip_punctuation(token: str) -> str:
    """Remove punctuation characters from a token."""
    if all(not _is_punct(ch) for ch in token):
        return token
    return "".join(ch for ch in token if not _is_punct(ch))


def preprocess_utterance(
    raw_tokens: Sequence[str], proper_noun_set: frozenset[str] | set[str] = frozenset()
) -> list[str]:
    """Clean one utterance: lowercase, strip punctuation, mask proper nouns.

    Punctuation-only tokens disappear; tokens found in ``proper_noun_set``
    (matched after cleaning) become the literal ``[NAME]`` token.  The
    function is total and idempotent.
    """
    out: list[str] = []
    for tok in raw_tokens:
        if tok == NAME_TOKEN:
            out.append(NAME_TOKEN)
            continue
        tok = strip_punctuation(tok.lower())
        if not tok:
            continue
        out.append(NAME_TOKEN if tok in proper_noun_set else tok)
    return out


@dataclass(frozen=True)
class Utterance:
    speaker_role: Speaker
    tokens: tuple[str, ...]
    child_age_months: int


@dataclass(frozen=True)
class TemporalSlice:
    month_index: int
    utterances: tuple[Utterance, ...]

    @property
    def token_count(self) -> int:
        return sum(len(u.tokens) for u in self.utterances)

    @property
    def type_count(self) -> int:
        return len({t for u in self.utterances for t in u.tokens})


@dataclass(frozen=True)
class SlicedCorpus:
    """Utterances partitioned into contiguous month slices."""

    slices: tuple[TemporalSlice, ...]
    speaker_filter: Speaker

    def __post_init__(self):
        if not self.slices:
            raise ConfigError("corpus must contain at least one slice")
        months = [s.month_index for s in self.slices]
        if months != list(range(months[0], months[0] + len(months))):
            raise ConfigError(f"slice months not contiguous/ascending: {months}")

    @property
    def months(self) -> list[int]:
        return [s.month_index for s in self.slices]

    def utterances(self) -> Iterable[Utterance]:
        for s in self.slices:
            yield from s.utterances

    def token_lists(self) -> list[list[str]]:
        return [list(u.tokens) for u in self.utterances()]

    def summary(self) -> dict:
        """Per-slice token/type/utterance counts plus totals."""
        per_slice = {
            s.month_index: {
                "tokens": s.token_count,
                "types": s.type_count,
                "utterances": len(s.utterances),
            }
            for s in self.slices
        }
        return {
            "speaker": self.speaker_filter.value,
            "months": self.months,
            "per_slice": per_slice,
            "total_tokens": sum(v["tokens"] for v in per_slice.values()),
            "total_types": len({t for u in self.utterances() for t in u.tokens}),
            "total_utterances": sum(v["utterances"] for v in per_slice.values()),
        }


def load_proper_nouns(path) -> frozenset[str]:
    """Read a proper-noun lexicon: one token per line, ``#`` comments."""
    names = set()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TranscriptReadError(path, exc) from exc
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cleaned = strip_punctuation(line.lower())
        if cleaned:
            names.add(cleaned)
    return frozenset(names)


@dataclass
class _ParsedFile:
    path: str
    utterances: list[tuple[int, Speaker, list[str]]] = field(default_factory=list)


def _parse_file(path, proper_nouns: frozenset[str]) -> _ParsedFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TranscriptReadError(path, exc) from exc

    parsed = _ParsedFile(path=str(path))
    file_names = set(proper_nouns)
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("name:"):
                name = strip_punctuation(body[5:].strip().lower())
                if name:
                    file_names.add(name)
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise TranscriptParseError(
                path, lineno, f"expected 3 tab-separated fields, got {len(parts)}"
            )
        try:
            age = float(parts[0])
        except ValueError:
            raise TranscriptParseError(path, lineno, f"bad age field {parts[0]!r}")
        if age < 0 or not math.isfinite(age):
            raise TranscriptParseError(path, lineno, f"bad age value {parts[0]!r}")
        try:
            role = Speaker.from_tag(parts[1])
        except ValueError:
            raise TranscriptParseError(path, lineno, f"bad speaker tag {parts[1]!r}")
        tokens = preprocess_utterance(parts[2].split(), file_names)
        if tokens:
            parsed.utterances.append((int(math.floor(age)), role, tokens))
    return parsed


def ingest_transcripts(
    paths: Sequence,
    speaker_filter: Speaker | str = Speaker.BOTH,
    age_range: tuple[int, int] = (18, 36),
    proper_nouns: frozenset[str] | set[str] = frozenset(),
    jobs: int = 1,
) -> SlicedCorpus:
    """Ingest transcript files into a month-sliced corpus.

    Utterances whose speaker does not match the filter or whose age falls
    outside ``age_range`` are silently dropped.  Files may be parsed in
    parallel (``jobs``); the result only depends on the order of ``paths``
    and the file contents.
    """
    speaker_filter = Speaker(speaker_filter)
    lo, hi = age_range
    if lo < 0 or hi < lo:
        raise ConfigError(f"invalid age range {age_range}")
    if not paths:
        raise ConfigError("no transcript paths given")

    proper_nouns = frozenset(proper_nouns)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parsed = list(pool.map(lambda p: _parse_file(p, proper_nouns), paths))
    else:
        parsed = [_parse_file(p, proper_nouns) for p in paths]

    by_month: dict[int, list[Utterance]] = {m: [] for m in range(lo, hi + 1)}
    kept = 0
    for pf in parsed:
        for age, role, tokens in pf.utterances:
            if not (lo <= age <= hi):
                continue
            if speaker_filter is not Speaker.BOTH and role is not speaker_filter:
                continue
            by_month[age].append(Utterance(role, tuple(tokens), age))
            kept += 1
    if kept == 0:
        raise EmptyCorpusError(
            f"no utterances left after filtering "
            f"(speaker={speaker_filter.value}, age_range={age_range})"
        )

    slices = tuple(
        TemporalSlice(m, tuple(by_month[m])) for m in range(lo, hi + 1)
    )
    return SlicedCorpus(slices=slices, speaker_filter=speaker_filter)

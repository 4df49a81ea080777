"""News article ingestion: RSS/Atom feed parsing, token normalization, JSONL store.

Articles carry seven metadata fields (id, link, published/updated timestamps,
headline, content, feed name). Timestamps are kept as verbatim
"YYYY-MM-DD HH:MM:SS.mmm" strings and parsed lazily; downstream models consume
headlines only.
"""

from __future__ import annotations

import base64
import hashlib
import json
import unicodedata
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import datetime, timezone
from email.utils import parsedate_to_datetime
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S.%f"

ATOM_NS = "{http://www.w3.org/2005/Atom}"

# Apostrophe variants removed entirely during normalization (not split points).
_APOSTROPHES = ("'", "’", "‘")


class FeedParseError(Exception):
    """Malformed XML in a feed payload; carries the byte offset of the fault."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class UnsupportedFeedError(Exception):
    """Well-formed XML that is neither RSS 2.0 nor Atom."""


class StoreFormatError(Exception):
    """Corrupt or schema-violating line in an article store file."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CyberCategory(IntEnum):
    """Five-way cyber news categorization with a fixed code<->name mapping."""

    Other = 0
    Prevention = 1
    RecentCyberAttack = 2
    FutureThreat = 3
    Litigation = 4

    @classmethod
    def from_code(cls, code: int) -> "CyberCategory":
        return cls(code)

    @classmethod
    def from_name(cls, name: str) -> "CyberCategory":
        return cls[name]


class CategoryDistribution:
    """Probability vector over the five categories, indexed by category code."""

    __slots__ = ("p",)

    def __init__(self, p):
        arr = np.asarray(p, dtype=np.float64)
        if arr.shape != (len(CyberCategory),):
            raise ValueError(f"expected {len(CyberCategory)} probabilities, got {arr.shape}")
        if (arr < 0).any() or abs(arr.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be non-negative and sum to 1")
        self.p = arr

    def __getitem__(self, code: int) -> float:
        return float(self.p[code])

    def argmax(self) -> CyberCategory:
        # np.argmax returns the first maximum, i.e. the lowest category code.
        return CyberCategory(int(np.argmax(self.p)))

    def as_list(self) -> list[float]:
        return [float(x) for x in self.p]

    def __repr__(self) -> str:
        return f"CategoryDistribution({self.as_list()})"


@dataclass
class Article:
    id: str
    link: str
    published_datetime: str
    updated_datetime: str
    headline: str
    content: str
    feed_name: str

    def validate(self) -> None:
        if not self.id:
            raise ValueError("article id must be non-empty")
        if not self.headline.strip():
            raise ValueError(f"article {self.id}: headline empty after trimming")
        if self.published_datetime and self.updated_datetime:
            pub = parse_timestamp(self.published_datetime)
            upd = parse_timestamp(self.updated_datetime)
            if upd < pub:
                raise ValueError(
                    f"article {self.id}: updated_datetime precedes published_datetime"
                )

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "link": self.link,
                "published_datetime": self.published_datetime,
                "updated_datetime": self.updated_datetime,
                "headline": self.headline,
                "content": self.content,
                "feed_name": self.feed_name,
            },
            ensure_ascii=False,
        )


@dataclass
class TokenizedDoc:
    article_id: str
    tokens: list[str]


@dataclass
class FeedParseResult:
    articles: list[Article]
    skipped_empty_title: int = 0


@dataclass
class StoreLoadResult:
    articles: list[Article]
    duplicate_ids: int = 0


def format_timestamp(dt: datetime) -> str:
    """Render a datetime as 'YYYY-MM-DD HH:MM:SS.mmm' (millisecond precision)."""
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return dt.strftime(TIMESTAMP_FORMAT)[:-3]


def parse_timestamp(value: str) -> datetime:
    return datetime.strptime(value, TIMESTAMP_FORMAT)


def _byte_offset(data: bytes, line: int, column: int) -> int:
    """Translate an expat (line, column) position into a byte offset."""
    lines = data.split(b"\n")
    return sum(len(ln) + 1 for ln in lines[: line - 1]) + column


def _text(elem: ET.Element | None) -> str:
    if elem is None or elem.text is None:
        return ""
    return elem.text.strip()


def _iso_to_store(value: str) -> str:
    if not value:
        return ""
    cleaned = value.strip().replace("Z", "+00:00")
    try:
        return format_timestamp(datetime.fromisoformat(cleaned))
    except ValueError:
        return ""


def _rfc822_to_store(value: str) -> str:
    if not value:
        return ""
    try:
        return format_timestamp(parsedate_to_datetime(value.strip()))
    except (TypeError, ValueError):
        return ""


def make_article_id(feed_name: str, link: str, headline: str, published: str) -> str:
    """Deterministic 22-character opaque id hashed from article content."""
    digest = hashlib.sha256(
        "\n".join((feed_name, link, headline, published)).encode("utf-8")
    ).digest()
    return base64.urlsafe_b64encode(digest).decode("ascii")[:22]


def parse_feed(feed_bytes: bytes, feed_name: str) -> FeedParseResult:
    """Parse an RSS 2.0 or Atom payload into Articles.

    Items with empty titles are skipped and counted; missing content maps to
    the empty string.
    """
    try:
        root = ET.fromstring(feed_bytes)
    except ET.ParseError as exc:
        line, column = exc.position
        raise FeedParseError(str(exc), _byte_offset(feed_bytes, line, column)) from exc

    tag = root.tag
    if tag == "rss":
        return _parse_rss(root, feed_name)
    if tag == f"{ATOM_NS}feed":
        return _parse_atom(root, feed_name)
    raise UnsupportedFeedError(f"unsupported feed dialect with root element <{tag}>")


def _parse_rss(root: ET.Element, feed_name: str) -> FeedParseResult:
    articles: list[Article] = []
    skipped = 0
    channel = root.find("channel")
    items = channel.findall("item") if channel is not None else []
    for item in items:
        headline = _text(item.find("title"))
        if not headline:
            skipped += 1
            continue
        link = _text(item.find("link"))
        published = _rfc822_to_store(_text(item.find("pubDate")))
        article = Article(
            id=make_article_id(feed_name, link, headline, published),
            link=link,
            published_datetime=published,
            updated_datetime=published,
            headline=headline,
            content=_text(item.find("description")),
            feed_name=feed_name,
        )
        article.validate()
        articles.append(article)
    return FeedParseResult(articles, skipped)


def _parse_atom(root: ET.Element, feed_name: str) -> FeedParseResult:
    articles: list[Article] = []
    skipped = 0
    for entry in root.findall(f"{ATOM_NS}entry"):
        headline = _text(entry.find(f"{ATOM_NS}title"))
        if not headline:
            skipped += 1
            continue
        link_elem = entry.find(f"{ATOM_NS}link")
        link = link_elem.get("href", "") if link_elem is not None else ""
        published = _iso_to_store(_text(entry.find(f"{ATOM_NS}published")))
        updated = _iso_to_store(_text(entry.find(f"{ATOM_NS}updated")))
        content = _text(entry.find(f"{ATOM_NS}content")) or _text(
            entry.find(f"{ATOM_NS}summary")
        )
        article = Article(
            id=make_article_id(feed_name, link, headline, published),
            link=link,
            published_datetime=published,
            updated_datetime=updated or published,
            headline=headline,
            content=content,
            feed_name=feed_name,
        )
        article.validate()
        articles.append(article)
    return FeedParseResult(articles, skipped)


def normalize(text: str) -> list[str]:
    """Lowercase and tokenize.

    Apostrophes vanish entirely; all other Unicode punctuation becomes a split
    point except hyphens flanked by alphanumerics; digits survive.
    """
    s = text.lower()
    for mark in _APOSTROPHES:
        s = s.replace(mark, "")
    out: list[str] = []
    for i, ch in enumerate(s):
        if ch == "-" and 0 < i < len(s) - 1 and s[i - 1].isalnum() and s[i + 1].isalnum():
            out.append(ch)
        elif unicodedata.category(ch).startswith("P"):
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out).split()


def merge_phrases(tokens: Sequence[str], lexicon: Iterable[str]) -> list[str]:
    """Join consecutive tokens matching a lexicon phrase with underscores.

    Matching is left-to-right and longest-match-first; matched spans do not
    overlap. Lexicon terms are normalized, space-separated phrases.
    """
    by_head: dict[str, list[list[str]]] = {}
    for term in lexicon:
        parts = term.split()
        if not parts:
            continue
        by_head.setdefault(parts[0], []).append(parts)
    for entries in by_head.values():
        entries.sort(key=len, reverse=True)

    merged: list[str] = []
    i = 0
    n = len(tokens)
    while i < n:
        matched = False
        for parts in by_head.get(tokens[i], ()):
            end = i + len(parts)
            if end <= n and list(tokens[i:end]) == parts:
                merged.append("_".join(parts))
                i = end
                matched = True
                break
        if not matched:
            merged.append(tokens[i])
            i += 1
    return merged


def tokenize_articles(
    articles: Iterable[Article], lexicon: Iterable[str] | None = None
) -> list[TokenizedDoc]:
    """Normalize article headlines, optionally merging lexicon phrases."""
    terms = list(lexicon) if lexicon is not None else None
    docs = []
    for article in articles:
        tokens = normalize(article.headline)
        if terms:
            tokens = merge_phrases(tokens, terms)
        docs.append(TokenizedDoc(article.id, tokens))
    return docs


def append_articles(articles: Iterable[Article], path: str | Path) -> int:
    """Append validated articles to a JSONL store; returns the count written.

    Appends must come from a single writer at a time; readers may load
    concurrently since loads take an immutable snapshot.
    """
    count = 0
    with open(path, "a", encoding="utf-8") as fh:
        for article in articles:
            article.validate()
            fh.write(article.to_json() + "\n")
            count += 1
    return count


_REQUIRED_KEYS = (
    "id",
    "link",
    "published_datetime",
    "updated_datetime",
    "headline",
    "content",
    "feed_name",
)


def load_articles(path: str | Path) -> StoreLoadResult:
    """Load a JSONL article store; duplicate ids keep the first occurrence."""
    articles: list[Article] = []
    seen: set[str] = set()
    duplicates = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreFormatError(f"invalid JSON: {exc.msg}", line_number) from exc
            if not isinstance(raw, dict):
                raise StoreFormatError("expected a JSON object", line_number)
            missing = [key for key in _REQUIRED_KEYS if key not in raw]
            if missing:
                raise StoreFormatError(f"missing keys {missing}", line_number)
            bad_types = [key for key in _REQUIRED_KEYS if not isinstance(raw[key], str)]
            if bad_types:
                raise StoreFormatError(f"non-string values for {bad_types}", line_number)
            article = Article(**{key: raw[key] for key in _REQUIRED_KEYS})
            try:
                article.validate()
            except ValueError as exc:
                raise StoreFormatError(str(exc), line_number) from exc
            if article.id in seen:
                duplicates += 1
                continue
            seen.add(article.id)
            articles.append(article)
    return StoreLoadResult(articles, duplicates)

"""Corpus ingestion: markdown articles in, registry-linked metadata out.

Articles are identified by the SHA-256 of their markdown, which makes
ingestion idempotent: the same file twice is one article. Bibliographic
metadata comes from a registry lookup on the parsed title and only
auto-links when exactly one candidate clears the similarity bar; everything
else waits for a human.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from .hrm import string_similarity
from .schema import ArticleMetadata, ArticleRecord, LabelStatus

logger = logging.getLogger(__name__)

AUTO_LINK_THRESHOLD = 0.95

_HEADING_RE = re.compile(r"^#{1,2}\s+(.+?)\s*$", re.MULTILINE)
_FRONT_MATTER_RE = re.compile(r"\A---\s*\n(.*?)\n---\s*\n", re.DOTALL)
_TITLE_LINE_RE = re.compile(r"^title\s*:\s*(.+?)\s*$", re.MULTILINE | re.IGNORECASE)


def content_hash(markdown: str) -> str:
    return hashlib.sha256(markdown.encode("utf-8")).hexdigest()


def parse_title(markdown: str) -> str:
    """Title from the front-matter block or the first heading.

    Falls back to the first non-empty line so even bare text gets some
    handle for registry lookup.
    """
    fm = _FRONT_MATTER_RE.match(markdown)
    if fm:
        title_match = _TITLE_LINE_RE.search(fm.group(1))
        if title_match:
            return _clean_title(title_match.group(1))
    heading = _HEADING_RE.search(markdown)
    if heading:
        return _clean_title(heading.group(1))
    for line in markdown.splitlines():
        if line.strip():
            return _clean_title(line)
    return ""


def _clean_title(text: str) -> str:
    text = text.strip().strip("\"'")
    text = re.sub(r"[*_`]", "", text)  # markdown emphasis
    return re.sub(r"\s+", " ", text)


def make_article(markdown: str) -> ArticleRecord:
    digest = content_hash(markdown)
    return ArticleRecord(
        article_id=digest[:12],
        content_hash=digest,
        markdown=markdown,
        metadata=ArticleMetadata(title=parse_title(markdown)),
        label_status=LabelStatus.UNLABELED,
    )


# --------------------------------------------------------------------------
# registry lookup


class RegistryClient(Protocol):
    def search_title(self, title: str, rows: int = 5) -> list[ArticleMetadata]:
        ...


class CrossrefStyleClient:
    """Title search against a Crossref-compatible works endpoint."""

    def __init__(self, base_url: str = "https://api.crossref.org", mailto: str = "",
                 min_interval: float = 1.0, timeout: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.mailto = mailto
        self.min_interval = min_interval
        self.timeout = timeout
        self._last_call = 0.0
        self.session = requests.Session()
        retry = Retry(total=3, backoff_factor=2, status_forcelist=[429, 500, 502, 503, 504])
        self.session.mount("https://", HTTPAdapter(max_retries=retry))
        self.session.mount("http://", HTTPAdapter(max_retries=retry))

    def search_title(self, title: str, rows: int = 5) -> list[ArticleMetadata]:
        wait = self.min_interval - (time.monotonic() - self._last_call)
        if wait > 0:
            time.sleep(wait)
        params = {"query.title": title, "rows": str(rows)}
        if self.mailto:
            params["mailto"] = self.mailto
        try:
            resp = self.session.get(f"{self.base_url}/works", params=params, timeout=self.timeout)
            self._last_call = time.monotonic()
            resp.raise_for_status()
            items = resp.json().get("message", {}).get("items", [])
        except (requests.RequestException, ValueError) as exc:
            logger.warning("registry lookup failed for %r: %s", title, exc)
            return []
        return [self._to_metadata(item) for item in items]

    @staticmethod
    def _to_metadata(item: dict) -> ArticleMetadata:
        titles = item.get("title") or [""]
        authors = tuple(
            " ".join(filter(None, [a.get("given", ""), a.get("family", "")])).strip()
            for a in item.get("author", [])
        )
        year = None
        issued = item.get("issued", {}).get("date-parts", [[None]])
        if issued and issued[0] and issued[0][0]:
            year = int(issued[0][0])
        container = item.get("container-title") or [""]
        return ArticleMetadata(
            title=titles[0],
            authors=authors,
            venue=container[0],
            year=year,
            doi=item.get("DOI", ""),
            source_link=item.get("URL", ""),
        )


class FixtureRegistryClient:
    """Registry backed by a JSON file of metadata entries; ranks by title."""

    def __init__(self, path: str | Path) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        self.entries = [ArticleMetadata.from_dict(e) for e in doc.get("entries", [])]

    def search_title(self, title: str, rows: int = 5) -> list[ArticleMetadata]:
        ranked = sorted(
            self.entries,
            key=lambda md: title_similarity(title, md.title),
            reverse=True,
        )
        return ranked[:rows]


def title_similarity(a: str, b: str) -> float:
    """String similarity over whitespace-collapsed titles."""
    return string_similarity(re.sub(r"\s+", " ", a), re.sub(r"\s+", " ", b))


@dataclass
class MetadataMatch:
    resolution: str  # auto_linked | ambiguous | no_match
    best: Optional[ArticleMetadata] = None
    similarity: float = 0.0
    candidates: list[tuple[float, ArticleMetadata]] = dc_field(default_factory=list)


def resolve_metadata(article: ArticleRecord, registry: RegistryClient,
                     threshold: float = AUTO_LINK_THRESHOLD, rows: int = 5) -> MetadataMatch:
    """Link an article to registry metadata, conservatively.

    Auto-links only when exactly one candidate scores at or above the
    threshold; several qualifying candidates are "ambiguous" and none is
    "no_match", both left for manual entry. Auto-linking fills the
    article's metadata in place while keeping the parsed title if the
    registry title is empty.
    """
    title = article.metadata.title
    candidates = registry.search_title(title, rows=rows)
    scored = sorted(
        ((title_similarity(title, md.title), md) for md in candidates),
        key=lambda pair: pair[0],
        reverse=True,
    )
    qualifying = [(s, md) for s, md in scored if s >= threshold]
    if len(qualifying) == 1:
        similarity, best = qualifying[0]
        merged = ArticleMetadata(
            title=best.title or title,
            authors=best.authors,
            venue=best.venue,
            year=best.year,
            doi=best.doi,
            source_link=best.source_link,
        )
        article.metadata = merged
        return MetadataMatch("auto_linked", best=merged, similarity=similarity, candidates=scored)
    if len(qualifying) > 1:
        return MetadataMatch("ambiguous", similarity=qualifying[0][0], candidates=scored)
    return MetadataMatch(
        "no_match",
        similarity=scored[0][0] if scored else 0.0,
        candidates=scored,
    )


class MissingLinkError(ValueError):
    """Manual metadata must carry a DOI or an alternative source link."""


def set_metadata_manual(article: ArticleRecord, metadata: ArticleMetadata) -> None:
    if not metadata.has_link:
        raise MissingLinkError(
            f"article {article.article_id}: manual metadata needs a DOI or source link"
        )
    article.metadata = metadata


def iter_corpus_files(corpus_dir: str | Path) -> list[Path]:
    return sorted(Path(corpus_dir).glob("*.md"))


def load_corpus(corpus_dir: str | Path) -> list[ArticleRecord]:
    """Articles from every .md file in a directory, duplicate-free.

    Files with identical content collapse onto one article; order follows
    the sorted file names for reproducibility.
    """
    articles: list[ArticleRecord] = []
    seen: set[str] = set()
    for path in iter_corpus_files(corpus_dir):
        markdown = path.read_text(encoding="utf-8")
        digest = content_hash(markdown)
        if digest in seen:
            logger.info("skipping duplicate article file %s", path.name)
            continue
        seen.add(digest)
        articles.append(make_article(markdown))
    return articles

"""Vector knowledge bases for rule pages and historical cases.

Two bases back the reasoning pipelines: one holds the soccer rulebook
segmented at page level, the other 184-odd historical incidents with
their official decisions. Both are exact-scan cosine indexes; corpus
sizes here make approximate search pointless.

Index files are single self-describing JSON documents. Floats are
serialized through Python's repr round-trip, so save/load is bit-exact
and retrieval results survive persistence unchanged.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence, Union

import numpy as np

from .errors import (
    DegenerateVectorError,
    EmptyKnowledgeBaseError,
    IndexFormatError,
    IndexStalenessError,
    IngestionError,
)

INDEX_FORMAT = "refpanel-index/v1"

KIND_RULES = "rules"
KIND_CASES = "cases"

CONTROVERSIALITY_LEVELS = (
    "Non-controversial",
    "Somewhat controversial",
    "Highly controversial",
)

CASE_SOURCES = (
    "FIFA World Cup",
    "Premier League",
    "UEFA Champions League",
    "Bundesliga",
    "La Liga",
    "Euro Cup",
)

# Keyword -> canonical source. Checked in order; first hit wins.
_SOURCE_PATTERNS: tuple[tuple[str, str], ...] = (
    (r"world\s+cup", "FIFA World Cup"),
    (r"premier\s+league", "Premier League"),
    (r"\bucl\b|champions\s+league", "UEFA Champions League"),
    (r"bundesliga", "Bundesliga"),
    (r"la\s+liga", "La Liga"),
    (r"\beuro\b|\beuros\b|euro\s+cup|euro\s+\d{4}", "Euro Cup"),
)


@dataclass(frozen=True)
class EmbeddingVector:
    """A fixed-dimension vector of finite floats."""

    values: tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("embedding vector must be non-empty")
        # Fast path: a finite sum implies all-finite except on overflow,
        # which the element-wise fallback disambiguates.
        if not math.isfinite(sum(self.values)):
            if not all(math.isfinite(v) for v in self.values):
                raise ValueError("embedding vector contains non-finite values")

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class RuleSegment:
    """One page of the rulebook, embedded for retrieval."""

    segment_id: str
    page_number: int
    text: str
    metadata: Mapping[str, str]
    embedding: EmbeddingVector

    def __post_init__(self):
        if not self.text:
            raise ValueError("rule segment text must be non-empty")
        if self.page_number < 1:
            raise ValueError("page_number must be positive")


@dataclass(frozen=True)
class CaseEntry:
    """One historical incident with its official decision."""

    id: int
    case_description: str
    decision: str
    controversiality: str
    source: str
    embedding: EmbeddingVector

    def __post_init__(self):
        if self.id < 1:
            raise ValueError("case id must be a positive integer")
        if self.controversiality not in CONTROVERSIALITY_LEVELS:
            raise ValueError(
                f"unknown controversiality {self.controversiality!r}"
            )
        if self.source not in CASE_SOURCES:
            raise ValueError(f"unknown source {self.source!r}")


Entry = Union[RuleSegment, CaseEntry]


def entry_key(entry: Entry):
    """Stable identifier used for tie-breaking and hit references."""
    return entry.segment_id if isinstance(entry, RuleSegment) else entry.id


@dataclass(frozen=True)
class RetrievalHit:
    entry_ref: Union[str, int]
    score: float
    rank: int


class Embedder(Protocol):
    """Anything that maps text to a fixed-dimension vector."""

    fingerprint: str
    dim: int

    def embed(self, text: str) -> EmbeddingVector: ...


class KnowledgeBase:
    """Immutable embedded store of rule segments or case entries.

    Construction precomputes the score matrix; instances are safe for
    unsynchronized concurrent reads.
    """

    def __init__(self, kind: str, entries: Sequence[Entry], embedder_fingerprint: str):
        if kind not in (KIND_RULES, KIND_CASES):
            raise ValueError(f"unknown knowledge base kind {kind!r}")
        entry_type = RuleSegment if kind == KIND_RULES else CaseEntry
        seen_keys = set()
        for e in entries:
            if not isinstance(e, entry_type):
                raise ValueError(f"{kind} base cannot hold {type(e).__name__}")
            k = entry_key(e)
            if k in seen_keys:
                raise ValueError(f"duplicate entry identifier {k!r}")
            seen_keys.add(k)
        dims = {e.embedding.dim for e in entries}
        if len(dims) > 1:
            raise ValueError(f"mixed embedding dimensions in base: {sorted(dims)}")

        self.kind = kind
        self.entries: tuple[Entry, ...] = tuple(entries)
        self.embedder_fingerprint = embedder_fingerprint

        if entries:
            self._matrix = np.array(
                [e.embedding.values for e in self.entries], dtype=np.float64
            )
            self._norms = np.linalg.norm(self._matrix, axis=1)
            if not np.all(self._norms > 0.0):
                bad = [entry_key(e) for e, n in zip(self.entries, self._norms) if n == 0.0]
                raise DegenerateVectorError(
                    f"zero-magnitude embeddings for entries {bad}"
                )
        else:
            self._matrix = None
            self._norms = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def dim(self) -> int | None:
        return self.entries[0].embedding.dim if self.entries else None


def cosine_similarity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Dot product of the two vectors scaled by their magnitudes.

    Result is clamped to [-1, 1] to absorb floating-point drift.
    """
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} vs {v.dim}")
    a = np.asarray(u.values, dtype=np.float64)
    b = np.asarray(v.values, dtype=np.float64)
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateVectorError("cosine similarity undefined for zero vector")
    score = float(np.dot(a, b)) / (norm_a * norm_b)
    return max(-1.0, min(1.0, score))


def retrieve_top_k(
    query_text: str,
    kb: KnowledgeBase,
    k: int,
    embedder: Embedder,
) -> list[RetrievalHit]:
    """Exact top-k scan of `kb` ranked by cosine similarity to the query.

    Deterministic: ties break on ascending entry identifier; ranks are
    contiguous from 1. Returns min(k, len(kb)) hits.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(kb) == 0:
        raise EmptyKnowledgeBaseError(f"cannot retrieve from empty {kb.kind} base")
    if embedder.fingerprint != kb.embedder_fingerprint:
        raise IndexStalenessError(
            f"embedder {embedder.fingerprint!r} does not match index "
            f"fingerprint {kb.embedder_fingerprint!r}"
        )

    qvec = embedder.embed(query_text)
    if qvec.dim != kb.dim:
        raise IndexStalenessError(
            f"query dimension {qvec.dim} does not match index dimension {kb.dim}"
        )
    q = np.asarray(qvec.values, dtype=np.float64)
    qnorm = float(np.linalg.norm(q))
    if qnorm == 0.0:
        raise DegenerateVectorError("query embedding has zero magnitude")

    scores = (kb._matrix @ q) / (kb._norms * qnorm)
    np.clip(scores, -1.0, 1.0, out=scores)

    ranked = sorted(
        zip(scores.tolist(), kb.entries),
        key=lambda pair: (-pair[0], entry_key(pair[1])),
    )
    return [
        RetrievalHit(entry_ref=entry_key(entry), score=score, rank=i + 1)
        for i, (score, entry) in enumerate(ranked[: min(k, len(kb))])
    ]


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


@dataclass
class IngestionResult:
    """A built base plus the per-record rejection report."""

    kb: KnowledgeBase
    rejected: list[tuple[Union[int, str], str]] = field(default_factory=list)

    @property
    def accepted(self) -> int:
        return len(self.kb)


def _embed_all(
    embedder: Embedder, texts: Sequence[str], parallelism: int
) -> list[EmbeddingVector]:
    """Embed texts, optionally in parallel; output order matches input."""
    if parallelism > 1 and len(texts) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(embedder.embed, texts))
    return [embedder.embed(t) for t in texts]


def ingest_rule_pages(
    pages: Sequence[str],
    metadata: Mapping[str, str],
    embedder: Embedder,
    parallelism: int = 1,
) -> IngestionResult:
    """Build the rules base from ordered page texts.

    Page numbers follow input order starting at 1; blank pages are
    rejected individually and leave a gap so surviving segments keep
    their physical page identity.
    """
    if not pages:
        raise IngestionError("no pages supplied")
    for key in ("document", "edition"):
        if key not in metadata:
            raise ValueError(f"rule ingestion metadata must include {key!r}")

    rejected: list[tuple[Union[int, str], str]] = []
    numbered: list[tuple[int, str]] = []
    for position, text in enumerate(pages, start=1):
        if not text or not text.strip():
            rejected.append((position, "empty page text"))
            continue
        numbered.append((position, text))

    if not numbered:
        raise IngestionError("all pages were rejected; nothing to ingest")

    meta = dict(metadata)
    vectors = _embed_all(embedder, [t for _, t in numbered], parallelism)
    segments = [
        RuleSegment(
            segment_id=f"{meta['document']}:{page:04d}",
            page_number=page,
            text=text,
            metadata=meta,
            embedding=vec,
        )
        for (page, text), vec in zip(numbered, vectors)
    ]
    return IngestionResult(
        kb=KnowledgeBase(KIND_RULES, segments, embedder.fingerprint),
        rejected=rejected,
    )


def infer_case_source(text: str) -> str | None:
    """Map competition keywords in a case description to a canonical source."""
    lowered = text.lower()
    for pattern, source in _SOURCE_PATTERNS:
        if re.search(pattern, lowered):
            return source
    return None


def fuse_case_text(description: str, decision: str) -> str:
    """The text a case entry is embedded over."""
    return f"{description}\n{decision}"


def ingest_cases(
    records: Sequence[Mapping],
    embedder: Embedder,
    parallelism: int = 1,
) -> IngestionResult:
    """Build the cases base from structured records.

    Each record needs `id`, `case`, `decision`, `controversiality`;
    `source` is taken verbatim when present and otherwise inferred from
    competition keywords in the case text. Bad records are rejected
    one by one; a duplicate id fails the whole ingestion.
    """
    rejected: list[tuple[Union[int, str], str]] = []
    staged: list[dict] = []
    seen_ids: set[int] = set()

    for index, record in enumerate(records):
        ref: Union[int, str] = record.get("id", f"record #{index}")
        missing = [f for f in ("id", "case", "decision", "controversiality") if f not in record]
        if missing:
            rejected.append((ref, f"missing fields: {', '.join(missing)}"))
            continue
        case_id = record["id"]
        if not isinstance(case_id, int) or case_id < 1:
            rejected.append((ref, f"id must be a positive integer, got {case_id!r}"))
            continue
        if case_id in seen_ids:
            raise IngestionError(f"duplicate case id {case_id}")
        seen_ids.add(case_id)
        if record["controversiality"] not in CONTROVERSIALITY_LEVELS:
            rejected.append(
                (case_id, f"unknown controversiality {record['controversiality']!r}")
            )
            continue
        source = record.get("source") or infer_case_source(str(record["case"]))
        if source not in CASE_SOURCES:
            rejected.append((case_id, f"could not determine source ({source!r})"))
            continue
        staged.append(
            {
                "id": case_id,
                "case": str(record["case"]),
                "decision": str(record["decision"]),
                "controversiality": record["controversiality"],
                "source": source,
            }
        )

    if records and not staged:
        raise IngestionError("all case records were rejected; nothing to ingest")

    vectors = _embed_all(
        embedder,
        [fuse_case_text(r["case"], r["decision"]) for r in staged],
        parallelism,
    )
    entries = [
        CaseEntry(
            id=r["id"],
            case_description=r["case"],
            decision=r["decision"],
            controversiality=r["controversiality"],
            source=r["source"],
            embedding=vec,
        )
        for r, vec in zip(staged, vectors)
    ]
    return IngestionResult(
        kb=KnowledgeBase(KIND_CASES, entries, embedder.fingerprint),
        rejected=rejected,
    )


def source_distribution(kb: KnowledgeBase) -> dict[str, int]:
    """Case counts per source, in canonical source order."""
    if kb.kind != KIND_CASES:
        raise ValueError("source distribution is defined for case bases only")
    counts = {s: 0 for s in CASE_SOURCES}
    for entry in kb.entries:
        counts[entry.source] += 1
    return counts


# ---------------------------------------------------------------------------
# Input loaders
# ---------------------------------------------------------------------------


def load_rule_pages(path: Union[str, Path]) -> list[str]:
    """Read rule page texts from a `page_NNN.txt` directory or a JSONL file.

    JSONL records carry {page, text}; files sort by name, records by page.
    Returned list is ordered; ingestion assigns numbers positionally.
    """
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("page_*.txt"))
        if not files:
            raise IngestionError(f"no page_*.txt files in {p}")
        return [f.read_text(encoding="utf-8") for f in files]
    if not p.exists():
        raise IngestionError(f"rule page input {p} does not exist")
    pages: list[tuple[int, str]] = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{p}:{lineno}: not valid JSON: {exc}") from exc
        if "page" not in record or "text" not in record:
            raise IngestionError(f"{p}:{lineno}: record needs page and text fields")
        pages.append((int(record["page"]), str(record["text"])))
    pages.sort(key=lambda pair: pair[0])
    return [text for _, text in pages]


def load_case_records(path: Union[str, Path]) -> list[dict]:
    """Read the structured case array file."""
    p = Path(path)
    if not p.exists():
        raise IngestionError(f"case input {p} does not exist")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{p}: not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise IngestionError(f"{p}: expected a JSON array of case records")
    return data


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _entry_to_dict(entry: Entry) -> dict:
    if isinstance(entry, RuleSegment):
        return {
            "segment_id": entry.segment_id,
            "page_number": entry.page_number,
            "text": entry.text,
            "metadata": dict(entry.metadata),
            "embedding": list(entry.embedding.values),
        }
    return {
        "id": entry.id,
        "case_description": entry.case_description,
        "decision": entry.decision,
        "controversiality": entry.controversiality,
        "source": entry.source,
        "embedding": list(entry.embedding.values),
    }


def _entry_from_dict(kind: str, payload: dict) -> Entry:
    vec = EmbeddingVector(tuple(float(v) for v in payload["embedding"]))
    if kind == KIND_RULES:
        return RuleSegment(
            segment_id=payload["segment_id"],
            page_number=payload["page_number"],
            text=payload["text"],
            metadata=dict(payload["metadata"]),
            embedding=vec,
        )
    return CaseEntry(
        id=payload["id"],
        case_description=payload["case_description"],
        decision=payload["decision"],
        controversiality=payload["controversiality"],
        source=payload["source"],
        embedding=vec,
    )


def save_index(kb: KnowledgeBase, location: Union[str, Path]) -> None:
    """Write the base as one self-describing JSON document."""
    document = {
        "format": INDEX_FORMAT,
        "kind": kb.kind,
        "embedder_fingerprint": kb.embedder_fingerprint,
        "entries": [_entry_to_dict(e) for e in kb.entries],
    }
    path = Path(location)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, ensure_ascii=False, indent=1), encoding="utf-8")


def load_index(
    location: Union[str, Path],
    expected_fingerprint: str | None = None,
) -> KnowledgeBase:
    """Load a previously saved base; bit-exact inverse of save_index."""
    path = Path(location)
    if not path.exists():
        raise IndexFormatError(f"index file {path} does not exist")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IndexFormatError(f"{path}: corrupted index payload: {exc}") from exc
    if not isinstance(document, dict) or "format" not in document:
        raise IndexFormatError(f"{path}: not a knowledge base index file")
    if document["format"] != INDEX_FORMAT:
        raise IndexStalenessError(
            f"{path}: format {document['format']!r}, expected {INDEX_FORMAT!r}"
        )
    fingerprint = document["embedder_fingerprint"]
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise IndexStalenessError(
            f"{path}: built with {fingerprint!r}, expected {expected_fingerprint!r}"
        )
    kind = document["kind"]
    try:
        entries: list[Entry] = [
            _entry_from_dict(kind, e) for e in document["entries"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise IndexFormatError(f"{path}: malformed entry payload: {exc}") from exc
    return KnowledgeBase(kind, entries, fingerprint)

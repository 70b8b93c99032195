"""Exception hierarchy shared across the package.

Contract violations (bad arguments, broken preconditions) raise plain
ValueError; everything that callers are expected to catch and route on
gets a typed subclass of RefPanelError.
"""

from __future__ import annotations


class RefPanelError(Exception):
    """Base class for all typed errors raised by this package."""


class DegenerateVectorError(RefPanelError):
    """A zero-magnitude vector reached the similarity math."""


class EmptyKnowledgeBaseError(RefPanelError):
    """Retrieval was attempted against a knowledge base with no entries."""


class IndexStalenessError(RefPanelError):
    """A persisted index does not match the embedder or format version in use."""


class IndexFormatError(RefPanelError):
    """A persisted index file could not be parsed."""


class IngestionError(RefPanelError):
    """Ingestion failed as a whole (duplicate ids, zero surviving entries)."""


class TransportError(RefPanelError):
    """A remote backend call failed after exhausting retries."""


class BackendConfigError(RefPanelError):
    """Backend configuration is unusable (bad auth, missing mock script entry)."""


class CapabilityError(RefPanelError):
    """A request needs a capability the selected backend does not have."""


class TemplateError(RefPanelError):
    """Prompt rendering failed; `missing` lists unresolved placeholder names."""

    def __init__(self, message: str, missing: list[str] | None = None):
        super().__init__(message)
        self.missing = missing or []


class AgentOutputError(RefPanelError):
    """An agent's reply stayed unusable after the single re-prompt.

    `raw` preserves the last backend reply verbatim so traces can
    reproduce the parser input exactly.
    """

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class FrameSourceError(RefPanelError):
    """No frames could be produced for a video clip path."""


class ValidationError(RefPanelError):
    """A benchmark item, packet, or rating record violates its schema."""

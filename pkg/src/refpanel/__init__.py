"""Retrieval-augmented multi-agent adjudication of soccer refereeing questions."""

from .agents import (
    CaseSummary,
    ContextAnalysis,
    RuleSummary,
    Verdict,
    VideoAnalysis,
)
from .backends import (
    ChatRequest,
    ChatResponse,
    HashingEmbedder,
    MockChatBackend,
    RemoteChatBackend,
    complete_chat,
    embed_text,
)
from .bench import (
    BenchItem,
    EvalReport,
    RatingRecord,
    evaluate,
    load_benchmark,
    weighted_overall,
)
from .kb import (
    CaseEntry,
    EmbeddingVector,
    KnowledgeBase,
    RetrievalHit,
    RuleSegment,
    cosine_similarity,
    ingest_cases,
    ingest_rule_pages,
    load_index,
    retrieve_top_k,
    save_index,
)
from .pipeline import (
    AblationConfig,
    AgentRoster,
    AgentTrace,
    Modality,
    Query,
    Retriever,
    VideoMaterial,
    route,
    run,
    run_text_pipeline,
    run_video_pipeline,
)

__version__ = "0.1.0"

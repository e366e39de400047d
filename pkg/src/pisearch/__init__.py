"""Search-agent harness: tunable BM25 retrieval behind a three-tool controller.

Core pieces: a docid-addressed JSONL corpus store, an inverted BM25 index
with configurable (k1, b) and depth, a session controller exposing search /
read_search_results / read_document with caching and spill files, an agent
loop with time-budget steering, trajectory logging with four evidence tiers,
and an evaluation suite (LLM judge, tiered recall, calibration, token cost).
"""

from .agent import (
    FinalResponse,
    TimeBudget,
    Trajectory,
    build_agent_prompt,
    parse_final_response,
    run_query,
)
from .backends import (
    CONFIG_ENV_VAR,
    ControllerConfig,
    ControllerLimits,
    EmbeddedBackend,
    HttpJsonBackend,
    MockBackend,
    build_backend,
    config_from_env,
    parse_config,
)
from .bm25 import (
    Bm25Params,
    Index,
    LONG_DOC_PARAMS,
    Ranking,
    STOCK_PARAMS,
    build_index,
    score,
    search,
    tokenize,
)
from .clock import SimulatedClock, SystemClock
from .controller import (
    SearchSession,
    ToolResult,
    make_excerpt,
    spill_if_needed,
    tool_read_document,
    tool_read_search_results,
    tool_search,
)
from .corpus import (
    CorpusHandle,
    Document,
    DocumentChunk,
    QueryRecord,
    ingest_corpus,
    load_ground_truth,
)
from .evaluation import RunMetrics, aggregate, calibration_error, recall
from .judge import JudgeOutcome, JudgeVerdict, MockJudgeClient, build_judge_prompt, judge
from .policies import LlmPolicy, ScriptBook, ScriptedPolicy, answer_step, tool_step
from .pricing import PricingEntry, cost, default_pricing, load_pricing
from .runner import RunConfig, execute_run
from .trajectory import (
    DocumentTiers,
    RunArtifact,
    derive_tiers,
    load_run_artifacts,
    read_artifact,
    write_artifact,
)
from .tuning import DepthCurve, GridResult, depth_sweep, grid_search

__version__ = "0.1.0"

"""Visual-property-guided hierarchical image annotation toolkit.

Builds category hierarchies with genus/differentia definitions, runs the
interactive yes/no classification engine over them, orchestrates replicated
annotation campaigns with consensus and escalation, measures agreement with
Krippendorff's alpha, and simulates full campaigns with parameterized
annotator models.
"""
from .assignment import (
    Assignment,
    AssignmentStatus,
    ConsensusKind,
    ConsensusResult,
    Task,
    VoteSet,
    aggregate,
    build_tasks,
)
from .campaign import (
    AnnotatorInfo,
    Campaign,
    CampaignConfig,
    CampaignState,
    MetricsReport,
    ProgressReport,
    assign_next,
    campaign_progress,
    replay_state,
)
from .engine import (
    NONE_OF_THESE,
    AnnotationSession,
    Answer,
    AnswerKind,
    LabelOutcome,
    OutcomeKind,
    Protocol,
    Question,
    QuestionKind,
    question_upper_bound,
    replay,
    start_session,
    submit_answer,
    validate_answer,
)
from .errors import (
    AnswerKindError,
    AuthorizationError,
    ConfigurationError,
    DegenerateDataError,
    HierarchyParseError,
    HierarchyValidationError,
    InsufficientDataError,
    IntegrityError,
    ManifestError,
    NodeNotFoundError,
    NotFoundError,
    ReplayError,
    StateError,
    Violation,
    VisannoError,
)
from .hierarchy import (
    ConceptId,
    Hierarchy,
    VisualCategory,
    hierarchy_from_document,
    parse_hierarchy,
    to_document,
)
from .reliability import (
    DEFAULT_RATES,
    CategoryCountTable,
    CostReport,
    RateModel,
    ReliabilityData,
    SessionStats,
    brute_force_alpha_oracle,
    category_count_table,
    coincidence_matrix,
    cost_report,
    krippendorff_alpha_nominal,
    reliability_key,
)
from .simulation import (
    OUT_OF_SCOPE,
    AnnotatorModel,
    SimReport,
    SimulationConfig,
    SimulationResult,
    generate_synthetic_corpus,
    load_simulation_config,
    oracle_models,
    run_campaign,
    run_from_config,
    run_method_comparison,
    simulated_answer,
)
from .storage import (
    CropBox,
    DetectorCrop,
    EventLog,
    EventRecord,
    ImageRecord,
    apply_localization,
    compose_description,
    export_rows,
    ingest_manifest,
    parse_detections,
    parse_export,
    parse_manifest,
    render_export,
)

__version__ = "0.1.0"

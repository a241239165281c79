"""atelier: human-in-the-loop symbolic dance score generation.

A desk-scale creative loop: a generator writes symbolic movement scores, an
artist (or scripted oracle) rates and critiques them, and the engine
alternates utility-driven generator updates with reward learning from the
accumulated feedback.
"""

from .labanstr import (
    ActionAttrs,
    Column,
    Direction,
    Facing,
    Flexion,
    LabanToken,
    Level,
    PathShape,
    Rotation,
    Score,
    ScoreError,
    ScoreParseError,
    SpatialAttrs,
    StagePosition,
    TimeAttrs,
    attribute_histogram,
    canonicalize,
    decode_channels,
    make_token,
    parse_score,
    serialize_score,
    validate_score,
)
from .phase import CyclicElement, PhaseFit, blend_transition, fit_cyclic_elements, reconstruct_signal
from .embedding import (
    EncoderDecoderParams,
    Vocab,
    VocabWord,
    default_vocab,
    dot_similarity,
    encode_motion,
    encode_text,
    init_encoder_params,
    interpolate_embeddings,
    load_vocab,
    save_vocab,
    sc_score,
    train_alignment,
)
from .composer import (
    AttributeDistribution,
    ComposerParams,
    GenerationResult,
    TexturalElement,
    compose_attributes,
    generate_score,
    init_composer_params,
    parse_textural_elements,
    procedural_corpus,
    procedural_pairs,
    train_composer,
)
from .engine import (
    Decision,
    FeedbackEvent,
    FlowError,
    Judgement,
    LoopConfig,
    RewardParams,
    SessionState,
    Stage,
    ToySpace,
    TrajectoryRecord,
    build_toy_space,
    create_session,
    drive,
    flow_step,
    init_reward_params,
    judgement_to_guidance,
    lint_event_log,
    load_config,
    phase1_objective,
    phase1_optimize,
    phase2_optimize,
    run_session,
    save_config,
    trajectory_loglik,
)
from .artistio import (
    OracleSpec,
    load_oracle_spec,
    make_oracle,
    replay_feedback,
    save_oracle_spec,
    scripted_feedback,
    total_variation,
)
from .store import EventLog, StoreError, attach_log, read_log, session_load

__version__ = "0.1.0"

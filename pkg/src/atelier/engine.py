"""The two-phase creative loop: utility ascent, reward learning, process flow.

Phase 1 freezes the reward and ascends a weighted utility over paired samples:

    alpha*SC(x1, x1', R) + beta*SC(x2, x2', R) + gamma_weight*dot(z1, z1')

where SC damps a parameter-norm term by exp(-R).  Phase 2 freezes the
generator and fits reward weights by maximum likelihood over recorded
trajectories, normalized by the partition function of an enumerable toy space
(the raw likelihood is unbounded in the reward scale without it).  A staged
controller alternates the two phases around generation and artist feedback;
the posterior update of the symbiotic loop is realized by this interleaving.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import composer as cp
from . import embedding as em
from . import labanstr as lb
from .optim import ascend, l2_norm, pack, unpack

MAX_ENUMERABLE_TRAJECTORIES = 10**6


class Stage(enum.Enum):
    MULTIMODAL_TRAIN = "multimodal_train"
    GENERATOR_TRAIN = "generator_train"
    GENERATE = "generate"
    ARTIST_EVAL = "artist_eval"
    REWARD_LEARN = "reward_learn"
    ACCEPTED = "accepted"


FLOW_EDGES = frozenset(
    {
        (Stage.MULTIMODAL_TRAIN, Stage.GENERATOR_TRAIN),
        (Stage.GENERATOR_TRAIN, Stage.GENERATE),
        (Stage.GENERATE, Stage.ARTIST_EVAL),
        (Stage.ARTIST_EVAL, Stage.ACCEPTED),
        (Stage.ARTIST_EVAL, Stage.GENERATE),
        (Stage.ARTIST_EVAL, Stage.REWARD_LEARN),
        (Stage.ARTIST_EVAL, Stage.GENERATOR_TRAIN),
        (Stage.ARTIST_EVAL, Stage.MULTIMODAL_TRAIN),
        (Stage.REWARD_LEARN, Stage.GENERATOR_TRAIN),
        (Stage.REWARD_LEARN, Stage.MULTIMODAL_TRAIN),
    }
)


class FlowError(RuntimeError):
    pass


class Decision(enum.Enum):
    RESAMPLE = "resample"
    RETRAIN_GENERATOR = "retrain_generator"
    RETRAIN_MULTIMODAL = "retrain_multimodal"
    ACCEPT = "accept"
    NONE = "none"


@dataclass(frozen=True)
class LoopConfig:
    """Loop weights, schedules and thresholds.

    alpha/beta/gamma_weight must lie on the simplex (sum 1 within 1e-12).
    The discount schedule is gamma_t = discount0 * discount_decay**t.
    """

    alpha: float = 0.4
    beta: float = 0.3
    gamma_weight: float = 0.3
    lam: float = 0.5
    discount0: float = 1.0
    discount_decay: float = 0.9
    sign_mode: str = "penalty"
    accept_threshold: float = 0.92
    phase2_trigger_count: int = 3
    stagnation_window: int = 4
    trajectory_length: int = 4
    reward_l2: float = 1e-3
    # desk-scale session knobs
    embed_dim: int = 16
    gen_length: int = 6
    guidance_weight: float = 16.0
    temperature: float = 0.6
    session_pairs: int = 4
    align_steps: int = 30
    align_step_size: float = 0.02
    phase1_steps: int = 2
    phase1_step_size: float = 0.01
    phase2_steps: int = 20
    phase2_step_size: float = 0.5

    def __post_init__(self):
        if abs(self.alpha + self.beta + self.gamma_weight - 1.0) > 1e-12:
            raise ValueError(
                f"alpha+beta+gamma_weight must equal 1, got {self.alpha + self.beta + self.gamma_weight!r}"
            )
        for name in ("alpha", "beta", "gamma_weight", "lam"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        for name in ("discount0", "discount_decay"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {value}")
        if self.sign_mode not in ("penalty", "as_written"):
            raise ValueError(f"unknown sign_mode {self.sign_mode!r}")
        if self.reward_l2 < 0:
            raise ValueError(f"reward_l2 must be >= 0, got {self.reward_l2}")
        for name in ("phase2_trigger_count", "stagnation_window", "trajectory_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


_CONFIG_ALIASES = {"lambda": "lam"}


def save_config(config: LoopConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        key = "lambda" if f.name == "lam" else f.name
        lines.append(f"{key} {getattr(config, f.name)}")
    return "\n".join(lines) + "\n"


def load_config(text: str) -> LoopConfig:
    kwargs = {}
    types = {f.name: f.type for f in dataclasses.fields(LoopConfig)}
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(" ")
        name = _CONFIG_ALIASES.get(key, key)
        if name not in types:
            raise ValueError(f"line {line_no}: unknown config key {key!r}")
        if types[name] == "int":
            kwargs[name] = int(value)
        elif types[name] == "float":
            kwargs[name] = float(value)
        else:
            kwargs[name] = value.strip()
    return LoopConfig(**kwargs)


Cell = tuple[lb.Column, lb.Direction, lb.Level]


@dataclass(frozen=True)
class Judgement:
    """Structured artist critique: controlled-vocab words plus cell deltas."""

    text: tuple[str, ...] = ()
    targets: tuple[tuple[Cell, float], ...] = ()

    def __post_init__(self):
        for (column, direction, level), delta in self.targets:
            if not isinstance(column, lb.Column):
                raise ValueError(f"invalid cell column {column!r}")
            if not isinstance(direction, lb.Direction) or not isinstance(level, lb.Level):
                raise ValueError("invalid cell direction/level")
            if not math.isfinite(delta):
                raise ValueError("judgement delta must be finite")


@dataclass(frozen=True)
class FeedbackEvent:
    iteration: int
    rating: float
    judgement: Judgement
    decision: Decision = Decision.NONE

    def __post_init__(self):
        if not math.isfinite(self.rating) or self.rating < 0:
            raise ValueError(f"rating must be finite and >= 0, got {self.rating}")


@dataclass(frozen=True)
class RewardParams:
    """Linear reward over [attribute histogram (216) ; judgement embedding (d)]."""

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)) or not math.isfinite(self.bias):
            raise ValueError("reward parameters must be finite")


def init_reward_params(dim: int) -> RewardParams:
    return RewardParams(weights=np.zeros(lb.N_COLUMNS * lb.N_DIRECTIONS * lb.N_LEVELS + dim))


def reward_value(rp: RewardParams, score: lb.Score, judgement_emb: np.ndarray) -> float:
    features = np.concatenate([lb.attribute_histogram(score).ravel(), judgement_emb])
    return float(rp.weights @ features + rp.bias)


@dataclass(frozen=True)
class TrajectoryRecord:
    states: tuple[lb.Score, ...]       # X'_0 .. X'_T
    actions: tuple[Judgement, ...]     # A_0 .. A_{T-1}
    conditions: tuple[tuple[str, ...], ...]
    step_log_probs: tuple[float, ...]

    def __post_init__(self):
        t = len(self.actions)
        if len(self.states) != t + 1:
            raise ValueError(f"need T+1 states for T actions, got {len(self.states)} and {t}")
        if len(self.conditions) != t or len(self.step_log_probs) != t:
            raise ValueError("conditions and step_log_probs must align with actions")
        if not all(math.isfinite(p) for p in self.step_log_probs):
            raise ValueError("step log-probabilities must be finite")


@dataclass(frozen=True)
class ToySpace:
    """A deliberately small state space with per-step transition matrices.

    Trajectories range over state index paths (the artist's actions are fixed
    inputs); the partition function sums p0 * prod(trans) * exp(sum gamma_t R)
    over all of them.
    """

    states: tuple[lb.Score, ...]
    p0: np.ndarray
    transitions: tuple[np.ndarray, ...]
    action_features: np.ndarray        # (T, d) embedded judgements per step
    state_features: np.ndarray         # (n, 216) attribute histograms

    def __post_init__(self):
        n = len(self.states)
        if self.p0.shape != (n,) or abs(float(self.p0.sum()) - 1.0) > 1e-9:
            raise ValueError("p0 must be a distribution over states")
        for t, matrix in enumerate(self.transitions):
            if matrix.shape != (n, n):
                raise ValueError(f"transition {t} has shape {matrix.shape}, want ({n}, {n})")
            if np.max(np.abs(matrix.sum(axis=1) - 1.0)) > 1e-9:
                raise ValueError(f"transition {t} rows must sum to 1")
        if self.state_features.shape[0] != n:
            raise ValueError("state_features must have one row per state")

    @property
    def horizon(self) -> int:
        return len(self.transitions)

    @property
    def trajectory_count(self) -> int:
        return len(self.states) ** (self.horizon + 1)

    def require_enumerable(self):
        if self.trajectory_count > MAX_ENUMERABLE_TRAJECTORIES:
            raise ValueError("space too large to enumerate")

    def state_index(self, score: lb.Score) -> int:
        key = lb.serialize_score(score)
        for i, state in enumerate(self.states):
            if lb.serialize_score(state) == key:
                return i
        raise ValueError("state not present in toy space")


def build_toy_space(states, p0, transitions, judgements, enc: em.EncoderDecoderParams) -> ToySpace:
    action_features = np.array([judgement_to_guidance(j, enc) for j in judgements])
    state_features = np.array([lb.attribute_histogram(s).ravel() for s in states])
    return ToySpace(
        states=tuple(states),
        p0=np.asarray(p0, dtype=float),
        transitions=tuple(np.asarray(m, dtype=float) for m in transitions),
        action_features=action_features,
        state_features=state_features,
    )


def discount_schedule(config: LoopConfig, horizon: int) -> np.ndarray:
    return np.array([config.discount0 * config.discount_decay**t for t in range(horizon)])


def _per_step_rewards(rp: RewardParams, space: ToySpace) -> np.ndarray:
    """(T, n) matrix of R_theta(state, action_t)."""
    n_state_features = space.state_features.shape[1]
    w_state = rp.weights[:n_state_features]
    w_action = rp.weights[n_state_features:]
    state_part = space.state_features @ w_state
    action_part = space.action_features @ w_action
    return action_part[:, None] + state_part[None, :] + rp.bias


def _forward_backward(rp: RewardParams, config: LoopConfig, space: ToySpace):
    """Partition function and per-step state marginals of the Gibbs trajectory
    distribution, via the forward-backward recursion (the fast route; tests
    compare it against direct path enumeration)."""
    horizon = space.horizon
    gammas = discount_schedule(config, horizon)
    rewards = _per_step_rewards(rp, space)
    boosts = np.exp(gammas[:, None] * rewards)      # (T, n)

    alphas = [space.p0 * boosts[0]]
    for t in range(1, horizon):
        alphas.append((alphas[-1] @ space.transitions[t - 1]) * boosts[t])
    alpha_final = alphas[-1] @ space.transitions[horizon - 1]
    z = float(alpha_final.sum())

    betas = [np.zeros(0)] * horizon
    last = space.transitions[horizon - 1] @ np.ones(len(space.states))
    betas[horizon - 1] = last
    for t in range(horizon - 2, -1, -1):
        betas[t] = space.transitions[t] @ (boosts[t + 1] * betas[t + 1])
    marginals = np.array([alphas[t] * betas[t] / z for t in range(horizon)])
    return z, marginals, gammas, rewards


def trajectory_loglik(
    traj: TrajectoryRecord, rp: RewardParams, config: LoopConfig, space: ToySpace,
    normalize: bool = True,
) -> float:
    """log p(X'_0) + sum log Q(X'_{t+1}|X'_t,...) + sum gamma_t R(X'_t, A_t) - log Z.

    Normalization requires an enumerable space (<= 10^6 trajectories); without
    it the value is the raw score, bounded in training only by the L2 penalty.
    """
    horizon = space.horizon
    if len(traj.actions) != horizon:
        raise ValueError(f"record has {len(traj.actions)} actions, space horizon is {horizon}")
    indices = [space.state_index(s) for s in traj.states]
    gammas = discount_schedule(config, horizon)
    rewards = _per_step_rewards(rp, space)
    value = math.log(space.p0[indices[0]])
    for t in range(horizon):
        value += math.log(space.transitions[t][indices[t], indices[t + 1]])
        value += gammas[t] * rewards[t, indices[t]]
    if normalize:
        space.require_enumerable()
        z, _, _, _ = _forward_backward(rp, config, space)
        value -= math.log(z)
    return value


def trajectory_loglik_gradient(
    traj: TrajectoryRecord, rp: RewardParams, config: LoopConfig, space: ToySpace
) -> np.ndarray:
    """Gradient wrt packed (weights, bias): visited feature sums minus the
    Gibbs expectation.  The action-feature and bias blocks cancel exactly."""
    indices = [space.state_index(s) for s in traj.states]
    _, marginals, gammas, _ = _forward_backward(rp, config, space)
    n_state_features = space.state_features.shape[1]
    g_state = np.zeros(n_state_features)
    for t in range(space.horizon):
        g_state += gammas[t] * (space.state_features[indices[t]] - marginals[t] @ space.state_features)
    g_action = np.zeros(rp.weights.size - n_state_features)
    return np.concatenate([g_state, g_action, [0.0]])


def phase2_objective(rp: RewardParams, records, spaces, config: LoopConfig) -> float:
    total = sum(
        trajectory_loglik(traj, rp, config, space) for traj, space in zip(records, spaces)
    )
    penalty = config.reward_l2 * (float(np.sum(rp.weights**2)) + rp.bias**2)
    return total / len(records) - penalty


def phase2_gradient(rp: RewardParams, records, spaces, config: LoopConfig) -> np.ndarray:
    grad = np.zeros(rp.weights.size + 1)
    for traj, space in zip(records, spaces):
        grad += trajectory_loglik_gradient(traj, rp, config, space)
    grad /= len(records)
    grad[:-1] -= 2.0 * config.reward_l2 * rp.weights
    grad[-1] -= 2.0 * config.reward_l2 * rp.bias
    return grad


def _rp_from_vector(vector: np.ndarray) -> RewardParams:
    return RewardParams(weights=vector[:-1].copy(), bias=float(vector[-1]))


def optimize_reward(rp, records, spaces, config, steps, step_size):
    theta0 = np.concatenate([rp.weights, [rp.bias]])
    theta, trace = ascend(
        theta0,
        lambda v: phase2_objective(_rp_from_vector(v), records, spaces, config),
        lambda v: phase2_gradient(_rp_from_vector(v), records, spaces, config),
        steps,
        step_size,
    )
    return _rp_from_vector(theta), trace


# --- Phase 1 -----------------------------------------------------------------


def phase1_objective(
    x1, x1p, x2, x2p, z1, z1p, config: LoopConfig, reward_energy: float, theta_norm: float
) -> float:
    """alpha*SC(x1,x1') + beta*SC(x2,x2') + gamma_weight*dot(z1,z1')."""
    return (
        config.alpha * em.sc_score(x1, x1p, reward_energy, theta_norm, config.lam, config.sign_mode)
        + config.beta * em.sc_score(x2, x2p, reward_energy, theta_norm, config.lam, config.sign_mode)
        + config.gamma_weight * em.dot_similarity(z1, z1p)
    )


def _phase1_arrays(enc: em.EncoderDecoderParams, comp: cp.ComposerParams) -> list[np.ndarray]:
    arrays = em._align_arrays(enc) + [enc.decoder_matrix, enc.decoder_bias]
    for family in cp.HEAD_FAMILIES:
        w, b = comp.heads[family]
        arrays.extend([w, b])
    arrays.append(comp.history)
    return arrays


def _phase1_unpack(enc, comp, vector):
    shapes = [a.shape for a in _phase1_arrays(enc, comp)]
    arrays = unpack(vector, shapes)
    n_align = len(em._align_arrays(enc))
    enc_new = em._with_align_vector(enc, pack(arrays[:n_align]))
    enc_new = replace(enc_new, decoder_matrix=arrays[n_align], decoder_bias=arrays[n_align + 1])
    heads = {}
    pos = n_align + 2
    for family in cp.HEAD_FAMILIES:
        heads[family] = (arrays[pos], arrays[pos + 1])
        pos += 2
    comp_new = cp.ComposerParams(heads=heads, history=arrays[pos], temperature=comp.temperature)
    return enc_new, comp_new


def _phase1_generate(enc, comp, words, config: LoopConfig, seed) -> lb.Score:
    prompt = em.encode_text(words, enc)
    condition = enc.decoder_matrix @ prompt + enc.decoder_bias
    result = cp.generate_score(condition, None, 0.0, config.gen_length, comp, seed=seed)
    return result.score


def phase1_batch_objective(enc, comp, batch, config: LoopConfig, reward_energy: float, seed) -> float:
    """Mean utility over the batch; generation is re-sampled from the fixed
    seed schedule so the value is a deterministic function of the parameters."""
    theta_norm = l2_norm(_phase1_arrays(enc, comp))
    total = 0.0
    for i, (words, ref_score) in enumerate(batch):
        text = em.encode_text(words, enc)
        generated = _phase1_generate(enc, comp, words, config, seed=(seed, i))
        gen_emb = em.encode_motion(generated, enc)
        ref_emb = em.encode_motion(ref_score, enc)
        total += phase1_objective(
            text, gen_emb, ref_emb, gen_emb, text, gen_emb, config, reward_energy, theta_norm
        )
    return total / len(batch)


def phase1_batch_gradient(enc, comp, batch, config: LoopConfig, reward_energy: float, seed) -> np.ndarray:
    """Analytic gradient treating the sampled scores as locally constant in
    the parameters (they are, except on sampling decision boundaries)."""
    arrays = _phase1_arrays(enc, comp)
    theta_norm = l2_norm(arrays)
    n = len(batch)

    g_rows = np.zeros_like(enc.text_rows)
    g_tables = {name: np.zeros_like(tab) for name, tab in enc.motion_tables.items()}
    g_time = np.zeros_like(enc.time_vectors)
    g_pool = 0.0

    def add_text_grad(words, coeff_vec):
        if not words:
            return
        share = coeff_vec / len(words)
        for w in words:
            g_rows[enc.vocab.index(w)] += share

    def add_motion_grad(score, coeff_vec):
        nonlocal g_pool
        if not score.tokens:
            return
        ordered = sorted(score.tokens, key=lambda t: t.canonical_key)
        pooled = np.mean([em._token_vector(tok, enc) for tok in ordered], axis=0)
        g_pool += float(np.dot(coeff_vec, pooled))
        share = enc.pool_scale * coeff_vec / len(score.tokens)
        for tok in ordered:
            for name, idx in em._token_indices(tok).items():
                g_tables[name][idx] += share
            g_time[0] += float(tok.time.start) * share
            g_time[1] += float(tok.time.duration) * share

    for i, (words, ref_score) in enumerate(batch):
        text = em.encode_text(words, enc)
        generated = _phase1_generate(enc, comp, words, config, seed=(seed, i))
        gen_emb = em.encode_motion(generated, enc)
        ref_emb = em.encode_motion(ref_score, enc)
        # d/dtext of (alpha+gamma)*dot(text, gen); d/dmotion via both scores.
        add_text_grad(words, (config.alpha + config.gamma_weight) / n * gen_emb)
        add_motion_grad(ref_score, config.beta / n * gen_emb)
        add_motion_grad(generated, ((config.alpha + config.gamma_weight) * text + config.beta * ref_emb) / n)

    grad_arrays = (
        [g_rows]
        + [g_tables[name] for name in em.MOTION_FAMILIES]
        + [g_time, np.array([g_pool])]
        + [np.zeros_like(enc.decoder_matrix), np.zeros_like(enc.decoder_bias)]
    )
    for family in cp.HEAD_FAMILIES:
        w, b = comp.heads[family]
        grad_arrays.extend([np.zeros_like(w), np.zeros_like(b)])
    grad_arrays.append(np.zeros_like(comp.history))
    grad = pack(grad_arrays)

    # Norm term: -/+ (alpha+beta)*lam*exp(-R)*theta/|theta| over every parameter.
    if config.lam > 0 and theta_norm > 0:
        coeff = (config.alpha + config.beta) * config.lam * math.exp(-reward_energy) / theta_norm
        if config.sign_mode == "penalty":
            coeff = -coeff
        grad = grad + coeff * pack(arrays)
    return grad


def phase1_optimize(session, batch, steps: int, step_size: float):
    """Ascend the Phase-1 utility in the encoder/decoder parameters.

    Reward parameters stay frozen; generation inside the objective reuses one
    fixed seed per call so repeated evaluations differ only through the
    parameters.  Returns (enc, comp, trace) and updates the session bundles.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    config = session.config
    reward_energy = session.reward_energy()
    seed = (session.seed, 7001, session.phase1_calls)
    session.phase1_calls += 1
    enc0, comp0 = session.enc, session.comp
    theta0 = pack(_phase1_arrays(enc0, comp0))

    def objective(vector):
        enc, comp = _phase1_unpack(enc0, comp0, vector)
        return phase1_batch_objective(enc, comp, batch, config, reward_energy, seed)

    def gradient(vector):
        enc, comp = _phase1_unpack(enc0, comp0, vector)
        return phase1_batch_gradient(enc, comp, batch, config, reward_energy, seed)

    theta, trace = ascend(theta0, objective, gradient, steps, step_size)
    session.enc, session.comp = _phase1_unpack(enc0, comp0, theta)
    return session.enc, session.comp, trace


# --- judgement guidance --------------------------------------------------------


def canonical_cell_embedding(cell: Cell, enc: em.EncoderDecoderParams) -> np.ndarray:
    """Embedding of a unit token (start 0, duration 1) in the given cell."""
    column, direction, level = cell
    token = lb.make_token(column, direction, level, start=0, duration=1)
    return em.encode_motion(lb.Score((4, 4), (token,)), enc)


def judgement_to_guidance(judgement: Judgement, enc: em.EncoderDecoderParams) -> np.ndarray:
    """encode_text of the words plus delta-weighted canonical cell embeddings."""
    guidance = em.encode_text(list(judgement.text), enc)
    for cell, delta in judgement.targets:
        guidance = guidance + delta * canonical_cell_embedding(cell, enc)
    return guidance


# --- session state and process flow ---------------------------------------------

_LOG_EPOCH = "2000-01-01T00:00:"


def _logical_time(seq: int) -> str:
    # Deterministic logical clock: byte-identical reruns need reproducible times.
    minutes, seconds = divmod(seq, 60)
    hours, minutes = divmod(minutes, 60)
    return f"2000-01-01T{hours:02d}:{minutes:02d}:{seconds:02d}+00:00"


@dataclass
class SessionState:
    config: LoopConfig
    vocab: em.Vocab
    seed: int
    enc: em.EncoderDecoderParams
    comp: cp.ComposerParams
    reward: RewardParams
    pairs: list
    prompt: tuple[str, ...]
    stage: Stage = Stage.MULTIMODAL_TRAIN
    iteration: int = 0
    feedback_log: list = field(default_factory=list)
    trajectories: list = field(default_factory=list)
    round_buffer: list = field(default_factory=list)
    best_rating: float = -math.inf
    rounds_since_improvement: int = 0
    feedback_since_reward_learn: int = 0
    last_guidance: np.ndarray | None = None
    last_score: lb.Score | None = None
    last_log_prob: float = 0.0
    phase1_calls: int = 0
    generate_calls: int = 0
    events: list = field(default_factory=list)
    sink: object = None
    seq: int = 0

    def emit(self, kind: str, payload: dict) -> dict:
        self.seq += 1
        event = {"seq": self.seq, "iso_time": _logical_time(self.seq), "kind": kind, "payload": payload}
        self.events.append(event)
        if self.sink is not None:
            self.sink(event)
        return event

    def reward_energy(self) -> float:
        """Mean rating over the current feedback window, clamped to >= 0."""
        window = self.feedback_log[-self.config.phase2_trigger_count :]
        if not window:
            return 0.0
        return max(0.0, sum(e.rating for e in window) / len(window))

    def rating_history(self) -> list[float]:
        return [e.rating for e in self.feedback_log]


def create_session(config: LoopConfig, vocab: em.Vocab, seed: int, sink=None) -> SessionState:
    enc = em.init_encoder_params(vocab, dim=config.embed_dim, seed=seed)
    comp = cp.init_composer_params(enc, seed=seed + 1, temperature=config.temperature)
    reward = init_reward_params(config.embed_dim)
    pairs = cp.procedural_pairs(vocab, seed, config.session_pairs)
    verbs = vocab.by_role("verb")
    nouns = vocab.by_role("noun")
    prompt = (verbs[0].text, nouns[0].text) if verbs and nouns else ()
    session = SessionState(
        config=config, vocab=vocab, seed=seed, enc=enc, comp=comp, reward=reward,
        pairs=pairs, prompt=prompt, sink=sink,
    )
    session.emit(
        "session_created",
        {
            "config": {f.name: getattr(config, f.name) for f in dataclasses.fields(config)},
            "seed": seed,
            "vocab": em.save_vocab(vocab),
            "version": 1,
        },
    )
    return session


def _judgement_payload(judgement: Judgement) -> dict:
    return {
        "text": list(judgement.text),
        "targets": [
            [cell[0].value, cell[1].value, cell[2].value, delta]
            for cell, delta in judgement.targets
        ],
    }


def judgement_from_payload(payload: dict) -> Judgement:
    columns = {m.value: m for m in lb.Column}
    directions = {m.value: m for m in lb.Direction}
    levels = {m.value: m for m in lb.Level}
    targets = tuple(
        ((columns[c], directions[d], levels[l]), float(delta))
        for c, d, l, delta in payload.get("targets", [])
    )
    return Judgement(text=tuple(payload.get("text", [])), targets=targets)


def _transition(session: SessionState, target: Stage):
    if (session.stage, target) not in FLOW_EDGES:
        raise FlowError(f"transition {session.stage.value} -> {target.value} not in the flow graph")
    session.stage = target
    session.emit("stage_entered", {"stage": target.value})


def _close_trajectory(session: SessionState, min_len: int) -> bool:
    """Close a trajectory record from the round buffer when long enough."""
    if len(session.round_buffer) < min_len:
        return False
    entries = session.round_buffer
    states = tuple(score for score, _, _, _ in entries)
    actions = tuple(judgement for _, judgement, _, _ in entries[:-1])
    conditions = tuple(words for _, _, words, _ in entries[:-1])
    logps = tuple(logp for _, _, _, logp in entries[:-1])
    session.trajectories.append(
        TrajectoryRecord(states=states, actions=actions, conditions=conditions, step_log_probs=logps)
    )
    session.round_buffer = []
    return True


def _session_toy_spaces(session: SessionState):
    """Uniform-transition toy spaces, one per record over that record's own
    states, so normalization stays enumerable however long the session runs."""
    spaces = []
    for traj in session.trajectories:
        texts = sorted({lb.serialize_score(s) for s in traj.states})
        states = tuple(lb.parse_score(t) for t in texts)
        n = len(states)
        p0 = np.full(n, 1.0 / n)
        uniform = np.full((n, n), 1.0 / n)
        spaces.append(
            build_toy_space(
                states, p0, [uniform] * len(traj.actions), list(traj.actions), session.enc
            )
        )
    return spaces


def phase2_optimize(session: SessionState, toy_space: ToySpace | None, steps: int, step_size: float):
    """Fit reward weights on the recorded trajectories; decoder stays frozen.

    With ``toy_space`` given, all records are scored against it; otherwise a
    uniform-transition space over the observed states backs each record.
    """
    records = list(session.trajectories)
    if not records:
        raise ValueError("no recorded trajectories with artist actions")
    spaces = [toy_space] * len(records) if toy_space is not None else _session_toy_spaces(session)
    reward, trace = optimize_reward(session.reward, records, spaces, session.config, steps, step_size)
    session.reward = reward
    return reward, trace


def flow_step(session: SessionState, event: FeedbackEvent | None = None):
    """Run the current stage's work and take one edge of the process flow.

    MultimodalTrain -> GeneratorTrain -> Generate -> ArtistEval always; at
    ArtistEval the rating and decision pick the next stage (accept wins, then
    the explicit decision, then the reward-learning trigger, then resampling);
    RewardLearn returns to GeneratorTrain, or to MultimodalTrain after
    ``stagnation_window`` rounds without a best-rating improvement.
    """
    config = session.config
    actions: list[str] = []
    stage = session.stage

    if stage is Stage.ACCEPTED:
        return stage, actions

    if stage is Stage.MULTIMODAL_TRAIN:
        session.enc, trace = em.train_alignment(
            session.pairs, session.enc, config.align_steps, config.align_step_size
        )
        actions.append("train_alignment")
        session.emit("phase1_trace", {"stage": stage.value, "trace": trace})
        _transition(session, Stage.GENERATOR_TRAIN)

    elif stage is Stage.GENERATOR_TRAIN:
        _, _, trace = phase1_optimize(session, session.pairs, config.phase1_steps, config.phase1_step_size)
        # Re-tie the generation heads to the trained encoder so judgement
        # guidance keeps decoding onto the intended cells.
        session.comp = cp.retie_generation_heads(session.enc, session.comp)
        actions.append("phase1_optimize")
        session.emit("phase1_trace", {"stage": stage.value, "trace": trace})
        _transition(session, Stage.GENERATE)

    elif stage is Stage.GENERATE:
        prompt_emb = em.encode_text(list(session.prompt), session.enc)
        condition = session.enc.decoder_matrix @ prompt_emb + session.enc.decoder_bias
        result = cp.generate_score(
            condition,
            session.last_guidance,
            config.guidance_weight if session.last_guidance is not None else 0.0,
            config.gen_length,
            session.comp,
            seed=(session.seed, 11, session.generate_calls),
        )
        session.generate_calls += 1
        session.last_score = result.score
        session.last_log_prob = result.log_prob
        actions.append("generate")
        session.emit(
            "generated",
            {
                "iteration": session.iteration,
                "score": lb.serialize_score(result.score),
                "exhausted": result.exhausted,
                "log_prob": result.log_prob,
            },
        )
        _transition(session, Stage.ARTIST_EVAL)

    elif stage is Stage.ARTIST_EVAL:
        if event is None:
            raise FlowError("artist_eval requires a feedback event")
        event = replace(event, iteration=session.iteration)
        session.feedback_log.append(event)
        session.emit(
            "feedback",
            {
                "iteration": event.iteration,
                "rating": event.rating,
                "judgement": _judgement_payload(event.judgement),
                "decision": event.decision.value,
            },
        )
        actions.append("record_feedback")
        session.round_buffer.append(
            (session.last_score, event.judgement, session.prompt, session.last_log_prob)
        )
        _close_trajectory(session, config.trajectory_length + 1)
        if event.rating > session.best_rating:
            session.best_rating = event.rating
            session.rounds_since_improvement = 0
        else:
            session.rounds_since_improvement += 1
        session.feedback_since_reward_learn += 1
        session.last_guidance = judgement_to_guidance(event.judgement, session.enc)
        session.iteration += 1

        if event.rating >= config.accept_threshold or event.decision is Decision.ACCEPT:
            session.emit("accepted", {"iteration": event.iteration, "rating": event.rating})
            _transition(session, Stage.ACCEPTED)
        elif event.decision is Decision.RESAMPLE:
            _transition(session, Stage.GENERATE)
        elif event.decision is Decision.RETRAIN_GENERATOR:
            _transition(session, Stage.GENERATOR_TRAIN)
        elif event.decision is Decision.RETRAIN_MULTIMODAL:
            _transition(session, Stage.MULTIMODAL_TRAIN)
        elif session.feedback_since_reward_learn >= config.phase2_trigger_count and (
            session.trajectories or len(session.round_buffer) >= 2
        ):
            _transition(session, Stage.REWARD_LEARN)
        else:
            _transition(session, Stage.GENERATE)

    elif stage is Stage.REWARD_LEARN:
        # A partial record (>= 2 rounds) closes here so the trigger rule and
        # the "at least one trajectory" precondition never conflict.
        if not session.trajectories:
            _close_trajectory(session, 2)
        _, trace = phase2_optimize(session, None, config.phase2_steps, config.phase2_step_size)
        session.feedback_since_reward_learn = 0
        actions.append("phase2_optimize")
        session.emit("phase2_trace", {"stage": stage.value, "trace": trace})
        if session.rounds_since_improvement >= config.stagnation_window:
            _transition(session, Stage.MULTIMODAL_TRAIN)
        else:
            _transition(session, Stage.GENERATOR_TRAIN)

    return session.stage, actions


def drive(session: SessionState, oracle, max_iterations: int) -> SessionState:
    """Advance the flow until acceptance or the iteration budget runs out.

    ``oracle`` is a callable Score -> FeedbackEvent; one iteration is one
    completed generate/evaluate round.
    """
    while session.stage is not Stage.ACCEPTED and session.iteration < max_iterations:
        if session.stage is Stage.ARTIST_EVAL:
            flow_step(session, oracle(session.last_score))
        else:
            flow_step(session)
    return session


def run_session(
    config: LoopConfig,
    vocab: em.Vocab,
    oracle,
    max_iterations: int,
    seed: int,
    sink=None,
) -> SessionState:
    """Create a session and run it headless against a feedback oracle."""
    session = create_session(config, vocab, seed, sink=sink)
    return drive(session, oracle, max_iterations)


def lint_event_log(events) -> list[str]:
    """Check every stage_entered transition against the flow edge set."""
    problems = []
    stages = {s.value: s for s in Stage}
    current = Stage.MULTIMODAL_TRAIN
    for event in events:
        if event["kind"] != "stage_entered":
            continue
        target = stages.get(event["payload"]["stage"])
        if target is None:
            problems.append(f"seq {event['seq']}: unknown stage {event['payload']['stage']!r}")
            continue
        if (current, target) not in FLOW_EDGES:
            problems.append(
                f"seq {event['seq']}: transition {current.value} -> {target.value} outside the flow graph"
            )
        current = target
    return problems

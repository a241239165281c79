"""The shared embedding space: text/motion encoders, similarity scores, alignment.

Both encoders pool into one d-dimensional space (default 16).  Text pools word
rows by mean; motion sums per-token attribute rows plus scaled time features
and pools tokens by mean, so both are permutation-invariant by construction.
Alignment training pulls matched text/motion pairs together against in-batch
mismatches.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace

import numpy as np

from . import labanstr as lb
from .optim import ascend, l2_norm, pack, unpack

DEFAULT_DIM = 16

MOTION_FAMILIES = {
    "column": lb.Column,
    "direction": lb.Direction,
    "level": lb.Level,
    "rotation": lb.Rotation,
    "flexion": lb.Flexion,
    "path": lb.PathShape,
    "facing": lb.Facing,
    "position": lb.StagePosition,
}

ROLES = ("verb", "noun", "adverb")


class VocabError(ValueError):
    pass


class OutOfVocabularyError(VocabError):
    def __init__(self, word: str):
        super().__init__(f"word {word!r} is not in the vocabulary")
        self.word = word


@dataclass(frozen=True)
class VocabWord:
    text: str
    role: str
    column: lb.Column | None = None      # nouns name exactly one staff column
    duration_scale: float = 1.0           # adverbs scale composed durations

    def __post_init__(self):
        if self.role not in ROLES:
            raise VocabError(f"unknown role {self.role!r} for word {self.text!r}")
        if self.role == "noun" and self.column is None:
            raise VocabError(f"noun {self.text!r} must name a column")
        if self.duration_scale <= 0:
            raise VocabError(f"duration scale must be positive for {self.text!r}")


@dataclass(frozen=True)
class Vocab:
    words: tuple[VocabWord, ...]

    def __post_init__(self):
        seen = set()
        for word in self.words:
            if word.text in seen:
                raise VocabError(f"duplicate word {word.text!r}")
            seen.add(word.text)

    def __len__(self):
        return len(self.words)

    def index(self, text: str) -> int:
        for i, word in enumerate(self.words):
            if word.text == text:
                return i
        raise OutOfVocabularyError(text)

    def lookup(self, text: str) -> VocabWord:
        return self.words[self.index(text)]

    def by_role(self, role: str) -> list[VocabWord]:
        return [w for w in self.words if w.role == role]


def default_vocab() -> Vocab:
    """Small controlled vocabulary: verbs, column-bearing nouns, adverbs."""
    verbs = ["lift", "step", "turn", "bend", "reach", "swing", "hold", "drop"]
    nouns = [
        ("arm_l", lb.Column.ARM_L),
        ("arm_r", lb.Column.ARM_R),
        ("leg_l", lb.Column.LEG_L),
        ("leg_r", lb.Column.LEG_R),
        ("support_l", lb.Column.SUPPORT_L),
        ("support_r", lb.Column.SUPPORT_R),
        ("body", lb.Column.BODY),
        ("head", lb.Column.HEAD),
    ]
    adverbs = [("slowly", 2.0), ("quickly", 0.5), ("softly", 1.0), ("sharply", 1.0)]
    words = [VocabWord(v, "verb") for v in verbs]
    words += [VocabWord(text, "noun", column=col) for text, col in nouns]
    words += [VocabWord(text, "adverb", duration_scale=s) for text, s in adverbs]
    return Vocab(tuple(words))


def save_vocab(vocab: Vocab) -> str:
    lines = []
    for w in vocab.words:
        parts = [f"word {w.text} role={w.role}"]
        if w.column is not None:
            parts.append(f"col={w.column.value}")
        if w.duration_scale != 1.0:
            parts.append(f"durscale={w.duration_scale}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def load_vocab(text: str) -> Vocab:
    words = []
    columns = {m.value: m for m in lb.Column}
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "word" or len(parts) < 3:
            raise VocabError(f"line {line_no}: expected 'word <text> role=<role> ...'")
        text_word = parts[1]
        role = None
        column = None
        durscale = 1.0
        for item in parts[2:]:
            key, sep, value = item.partition("=")
            if not sep:
                raise VocabError(f"line {line_no}: malformed field {item!r}")
            if key == "role":
                role = value
            elif key == "col":
                if value not in columns:
                    raise VocabError(f"line {line_no}: unknown column {value!r}")
                column = columns[value]
            elif key == "durscale":
                durscale = float(value)
            else:
                raise VocabError(f"line {line_no}: unknown key {key!r}")
        if role is None:
            raise VocabError(f"line {line_no}: missing role")
        words.append(VocabWord(text_word, role, column=column, duration_scale=durscale))
    return Vocab(tuple(words))


@dataclass(frozen=True)
class EncoderDecoderParams:
    """Trainable text/motion encoder tables plus the decoder conditioning map."""

    vocab: Vocab
    text_rows: np.ndarray                 # (len(vocab), d)
    motion_tables: dict                   # family name -> (cardinality, d)
    time_vectors: np.ndarray              # (2, d): start row, duration row
    pool_scale: float
    decoder_matrix: np.ndarray            # (d, d) prompt embedding -> conditioning
    decoder_bias: np.ndarray              # (d,)

    @property
    def dim(self) -> int:
        return self.text_rows.shape[1]

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        items = [("text_encoder", self.text_rows)]
        items += [(f"motion_{name}", table) for name, table in self.motion_tables.items()]
        items += [
            ("time_vectors", self.time_vectors),
            ("pool_scale", np.array([[self.pool_scale]])),
            ("decoder_matrix", self.decoder_matrix),
            ("decoder_bias", self.decoder_bias.reshape(1, -1)),
        ]
        return items


def init_encoder_params(vocab: Vocab, dim: int = DEFAULT_DIM, seed: int = 0) -> EncoderDecoderParams:
    rng = np.random.default_rng(seed)
    def uniform(*shape):
        return rng.uniform(-0.1, 0.1, size=shape)
    return EncoderDecoderParams(
        vocab=vocab,
        text_rows=uniform(len(vocab), dim),
        motion_tables={name: uniform(len(family), dim) for name, family in MOTION_FAMILIES.items()},
        time_vectors=uniform(2, dim),
        pool_scale=1.0,
        decoder_matrix=np.eye(dim) + uniform(dim, dim) * 0.1,
        decoder_bias=np.zeros(dim),
    )


def encode_text(words, params: EncoderDecoderParams) -> np.ndarray:
    """Mean of word rows; empty input gives the zero vector.

    Rows are summed in sorted index order so the result is exactly (bitwise)
    permutation-invariant.
    """
    if not words:
        return np.zeros(params.dim)
    indices = sorted(params.vocab.index(w) for w in words)
    rows = [params.text_rows[i] for i in indices]
    return np.mean(rows, axis=0)


def _token_indices(token: lb.LabanToken) -> dict:
    return {
        "column": lb.COLUMN_INDEX[token.action.column],
        "direction": lb.DIRECTION_INDEX[token.action.direction],
        "level": lb.LEVEL_INDEX[token.action.level],
        "rotation": lb.ROTATION_INDEX[token.action.rotation],
        "flexion": lb.FLEXION_INDEX[token.action.flexion],
        "path": lb.PATH_INDEX[token.spatial.path],
        "facing": lb.FACING_INDEX[token.spatial.facing],
        "position": lb.POSITION_INDEX[token.spatial.position],
    }


def _token_vector(token: lb.LabanToken, params: EncoderDecoderParams) -> np.ndarray:
    idx = _token_indices(token)
    vec = np.zeros(params.dim)
    for name, i in idx.items():
        vec = vec + params.motion_tables[name][i]
    vec = vec + float(token.time.start) * params.time_vectors[0]
    vec = vec + float(token.time.duration) * params.time_vectors[1]
    return vec


def encode_motion(score: lb.Score, params: EncoderDecoderParams) -> np.ndarray:
    """Mean over per-token attribute sums, scaled; empty score gives zero.

    Tokens are pooled in canonical order so the embedding is exactly (bitwise)
    permutation-invariant, mirroring the score's own permutation invariance.
    """
    report = lb.validate_score(score)
    if not report.ok:
        raise lb.ScoreError(f"invalid score: {report.violations[0].message}")
    if not score.tokens:
        return np.zeros(params.dim)
    ordered = sorted(score.tokens, key=lambda t: t.canonical_key)
    pooled = np.mean([_token_vector(tok, params) for tok in ordered], axis=0)
    return params.pool_scale * pooled


def dot_similarity(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.dot(x, y))


def sc_score(
    x: np.ndarray,
    x_prime: np.ndarray,
    reward_energy: float,
    theta_norm: float,
    lam: float,
    sign_mode: str = "penalty",
) -> float:
    """Similarity-and-creativity score: dot plus a reward-damped norm term.

    ``penalty`` subtracts lam*exp(-R)*theta_norm (the regularizing reading);
    ``as_written`` adds it.  Either way the norm term's weight shrinks as the
    reward energy R grows.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if theta_norm < 0:
        raise ValueError(f"theta_norm must be >= 0, got {theta_norm}")
    if sign_mode not in ("penalty", "as_written"):
        raise ValueError(f"unknown sign_mode {sign_mode!r}")
    term = lam * math.exp(-reward_energy) * theta_norm
    base = dot_similarity(x, x_prime)
    return base + term if sign_mode == "as_written" else base - term


def interpolate_embeddings(e1: np.ndarray, e2: np.ndarray, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    if e1.shape != e2.shape:
        raise ValueError(f"dimension mismatch: {e1.shape} vs {e2.shape}")
    return (1.0 - t) * e1 + t * e2


# --- alignment training -----------------------------------------------------

_ALIGN_KEYS = ("text_rows", "tables", "time_vectors", "pool_scale")


def _align_arrays(params: EncoderDecoderParams) -> list[np.ndarray]:
    return (
        [params.text_rows]
        + [params.motion_tables[name] for name in MOTION_FAMILIES]
        + [params.time_vectors, np.array([params.pool_scale])]
    )


def _align_shapes(params: EncoderDecoderParams) -> list[tuple]:
    return [a.shape for a in _align_arrays(params)]


def _with_align_vector(params: EncoderDecoderParams, vector: np.ndarray) -> EncoderDecoderParams:
    arrays = unpack(vector, _align_shapes(params))
    tables = {name: arrays[1 + i] for i, name in enumerate(MOTION_FAMILIES)}
    return replace(
        params,
        text_rows=arrays[0],
        motion_tables=tables,
        time_vectors=arrays[-2],
        pool_scale=float(arrays[-1][0]),
    )


def alignment_objective(params: EncoderDecoderParams, pairs) -> float:
    """Mean over pairs of matched dot minus logsumexp of in-batch mismatches."""
    texts = [encode_text(words, params) for words, _ in pairs]
    motions = [encode_motion(score, params) for _, score in pairs]
    scores = np.array([[dot_similarity(t, m) for m in motions] for t in texts])
    n = len(pairs)
    total = 0.0
    for i in range(n):
        mism = np.delete(scores[i], i)
        m = mism.max()
        total += scores[i, i] - (m + math.log(np.sum(np.exp(mism - m))))
    return total / n


def alignment_gradient(params: EncoderDecoderParams, pairs) -> np.ndarray:
    """Analytic gradient of alignment_objective wrt the encoder arrays (packed)."""
    n = len(pairs)
    texts = [encode_text(words, params) for words, _ in pairs]
    motions = [encode_motion(score, params) for _, score in pairs]
    scores = np.array([[dot_similarity(t, m) for m in motions] for t in texts])
    coeff = np.zeros((n, n))
    for i in range(n):
        mism = np.delete(scores[i], i)
        m = mism.max()
        weights = np.exp(mism - m)
        weights /= weights.sum()
        coeff[i, i] = 1.0
        k = 0
        for j in range(n):
            if j == i:
                continue
            coeff[i, j] = -weights[k]
            k += 1
    coeff /= n

    d_text = [coeff[i] @ motions for i in range(n)]      # dJ/dT_i
    d_motion = [coeff[:, j] @ texts for j in range(n)]   # dJ/dM_j

    g_rows = np.zeros_like(params.text_rows)
    g_tables = {name: np.zeros_like(tab) for name, tab in params.motion_tables.items()}
    g_time = np.zeros_like(params.time_vectors)
    g_pool = 0.0
    for i, (words, _) in enumerate(pairs):
        if not words:
            continue
        share = d_text[i] / len(words)
        for w in words:
            g_rows[params.vocab.index(w)] += share
    for j, (_, score) in enumerate(pairs):
        if not score.tokens:
            continue
        ordered = sorted(score.tokens, key=lambda t: t.canonical_key)
        pooled = np.mean([_token_vector(tok, params) for tok in ordered], axis=0)
        g_pool += float(np.dot(d_motion[j], pooled))
        share = params.pool_scale * d_motion[j] / len(score.tokens)
        for tok in ordered:
            for name, idx in _token_indices(tok).items():
                g_tables[name][idx] += share
            g_time[0] += float(tok.time.start) * share
            g_time[1] += float(tok.time.duration) * share
    return pack(
        [g_rows]
        + [g_tables[name] for name in MOTION_FAMILIES]
        + [g_time, np.array([g_pool])]
    )


def train_alignment(
    pairs,
    params: EncoderDecoderParams,
    steps: int,
    step_size: float,
    seed: int | None = None,
) -> tuple[EncoderDecoderParams, list[float]]:
    """Gradient ascent on the contrastive alignment objective.

    Deterministic: the objective has no sampling, so runs with identical
    inputs produce bit-identical parameters.  ``seed`` only matters when
    ``params`` is None, in which case it seeds the initial tables.
    """
    if params is None:
        raise ValueError("params must be provided (see init_encoder_params)")
    if len(pairs) < 2:
        raise ValueError(f"need at least 2 pairs, got {len(pairs)}")
    theta0 = pack(_align_arrays(params))
    theta, trace = ascend(
        theta0,
        lambda v: alignment_objective(_with_align_vector(params, v), pairs),
        lambda v: alignment_gradient(_with_align_vector(params, v), pairs),
        steps,
        step_size,
    )
    return _with_align_vector(params, theta), trace


# --- parameter snapshots ----------------------------------------------------

def save_matrices(items) -> str:
    """Versioned textual matrix form; 17 significant digits round-trip floats."""
    out = io.StringIO()
    out.write("PARAMS 1\n")
    for name, array in items:
        mat = np.atleast_2d(np.asarray(array, dtype=float))
        out.write(f"mat {name} {mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            out.write(" ".join(format(v, ".17g") for v in row) + "\n")
    return out.getvalue()


def load_matrices(text: str) -> dict:
    lines = text.split("\n")
    if not lines or lines[0] != "PARAMS 1":
        raise ValueError("missing 'PARAMS 1' header")
    matrices: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        parts = line.split()
        if parts[0] != "mat" or len(parts) != 4:
            raise ValueError(f"malformed matrix header: {line!r}")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        data = []
        for _ in range(rows):
            data.append([float(v) for v in lines[i].split()])
            if len(data[-1]) != cols:
                raise ValueError(f"matrix {name!r}: expected {cols} columns")
            i += 1
        matrices[name] = np.array(data)
    return matrices


def save_encoder_params(params: EncoderDecoderParams) -> str:
    return save_matrices(params.arrays())


def load_encoder_params(text: str, vocab: Vocab) -> EncoderDecoderParams:
    mats = load_matrices(text)
    return EncoderDecoderParams(
        vocab=vocab,
        text_rows=mats["text_encoder"],
        motion_tables={name: mats[f"motion_{name}"] for name in MOTION_FAMILIES},
        time_vectors=mats["time_vectors"],
        pool_scale=float(mats["pool_scale"][0, 0]),
        decoder_matrix=mats["decoder_matrix"],
        decoder_bias=mats["decoder_bias"][0],
    )

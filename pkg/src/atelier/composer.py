"""Textural-element composition and conditional score generation.

Verb/noun/adverb word groups map to motion attributes through small linear
heads over the shared embedding space; scores are then sampled token by token
on a discretized action grid (half-beat starts, durations 1/2, 1 or 2 beats)
with overlap-violating placements masked out, so generated scores always
validate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import labanstr as lb
from .embedding import (
    EncoderDecoderParams,
    OutOfVocabularyError,
    Vocab,
    encode_text,
    load_matrices,
    save_matrices,
)
from .optim import ascend, pack, unpack

DURATIONS = (Fraction(1, 2), Fraction(1), Fraction(2))
DEFAULT_HORIZON_BEATS = 8

HEAD_FAMILIES = {
    "direction": len(lb.Direction),
    "level": len(lb.Level),
    "rotation": len(lb.Rotation),
    "flexion": len(lb.Flexion),
    "column": len(lb.Column),
    "duration": len(DURATIONS),
    "start": DEFAULT_HORIZON_BEATS * 2,
}

COMPOSE_FAMILIES = ("direction", "level", "rotation", "flexion")


class TexturalError(ValueError):
    pass


@dataclass(frozen=True)
class TexturalElement:
    verb: str
    noun: str
    adverb: str | None = None


@dataclass(frozen=True)
class AttributeDistribution:
    direction: np.ndarray   # (9,)
    level: np.ndarray       # (3,)
    rotation: np.ndarray    # (5,)
    flexion: np.ndarray     # (3,)
    duration_scale: float
    column: lb.Column

    def __post_init__(self):
        for name in ("direction", "level", "rotation", "flexion"):
            dist = getattr(self, name)
            if abs(float(dist.sum()) - 1.0) > 1e-9:
                raise ValueError(f"{name} distribution must sum to 1")
        if self.duration_scale <= 0:
            raise ValueError("duration scale must be positive")


@dataclass(frozen=True)
class ComposerParams:
    heads: dict                 # family -> (W: (d, cardinality), b: (cardinality,))
    history: np.ndarray         # (d, d) autoregressive conditioning of placed tokens
    temperature: float = 1.0

    @property
    def dim(self) -> int:
        return self.heads["direction"][0].shape[0]

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        items = []
        for name, (w, b) in self.heads.items():
            items.append((f"head_{name}_w", w))
            items.append((f"head_{name}_b", b.reshape(1, -1)))
        items.append(("history", self.history))
        items.append(("temperature", np.array([[self.temperature]])))
        return items


def _default_cell_constant(enc: EncoderDecoderParams) -> np.ndarray:
    """The part of a unit-cell embedding shared by every cell: default
    rotation/flexion/spatial rows plus the duration-1 time vector."""
    return (
        enc.motion_tables["rotation"][0]
        + enc.motion_tables["flexion"][0]
        + enc.motion_tables["path"][0]
        + enc.motion_tables["facing"][0]
        + enc.motion_tables["position"][lb.POSITION_INDEX[lb.StagePosition.CENTER_CENTER]]
        + enc.time_vectors[1]
    )


def _dual_head(enc: EncoderDecoderParams, family: str) -> np.ndarray:
    """Ridge-regularized dual of a motion table, orthogonal to the constant
    part of unit-cell embeddings: a table row then decodes predominantly to
    its own member's logit, so judgement guidance built from cell embeddings
    lands on the right cells."""
    table = enc.motion_tables[family]
    gram = table @ table.T
    ridge = 0.1 * np.trace(gram) / table.shape[0]
    w = table.T @ np.linalg.inv(gram + ridge * np.eye(table.shape[0]))
    constant = _default_cell_constant(enc)
    constant_norm2 = float(constant @ constant)
    if constant_norm2 > 0:
        w = w - np.outer(constant, constant @ w) / constant_norm2
    return w


def retie_generation_heads(enc: EncoderDecoderParams, comp: ComposerParams) -> ComposerParams:
    """Rebuild the enum-family heads as duals of the current encoder tables,
    keeping the grid heads, history and temperature.  Generator training calls
    this so conditioning stays decodable after the encoder moves."""
    heads = dict(comp.heads)
    for name in HEAD_FAMILIES:
        if name in enc.motion_tables:
            heads[name] = (_dual_head(enc, name), comp.heads[name][1])
    return ComposerParams(heads=heads, history=comp.history, temperature=comp.temperature)


def init_composer_params(enc: EncoderDecoderParams, seed: int = 0, temperature: float = 1.0) -> ComposerParams:
    rng = np.random.default_rng(seed)
    d = enc.dim
    heads = {}
    for name, cardinality in HEAD_FAMILIES.items():
        if name in enc.motion_tables:
            w = _dual_head(enc, name)
        else:
            w = rng.uniform(-0.1, 0.1, size=(d, cardinality))
        heads[name] = (w, np.zeros(cardinality))
    # Dual-basis token features carry norms well above the table rows', so the
    # history mixing starts near zero to keep conditioning in charge.
    return ComposerParams(
        heads=heads,
        history=rng.uniform(-0.001, 0.001, size=(d, d)),
        temperature=temperature,
    )


def parse_textural_elements(words, vocab: Vocab) -> list[TexturalElement]:
    """Greedy left-to-right grouping of verbs, nouns and adverbs.

    Each verb opens an element; the next noun closes it; an adverb attaches
    to the nearest preceding element.  Elements without a noun are rejected.
    """
    elements: list[dict] = []
    for word_text in words:
        word = vocab.lookup(word_text)
        if word.role == "verb":
            elements.append({"verb": word.text, "noun": None, "adverb": None})
        elif word.role == "noun":
            open_elements = [e for e in elements if e["noun"] is None]
            if not open_elements:
                raise TexturalError(f"noun {word.text!r} has no verb to attach to")
            open_elements[0]["noun"] = word.text
        else:
            if not elements:
                raise TexturalError(f"adverb {word.text!r} has no element to attach to (verb with no noun)")
            elements[-1]["adverb"] = word.text
    for e in elements:
        if e["noun"] is None:
            raise TexturalError(f"verb {e['verb']!r} has no noun")
    return [TexturalElement(e["verb"], e["noun"], e["adverb"]) for e in elements]


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def _element_words(element: TexturalElement) -> list[str]:
    words = [element.verb, element.noun]
    if element.adverb is not None:
        words.append(element.adverb)
    return words


def compose_attributes(
    element: TexturalElement, enc: EncoderDecoderParams, comp: ComposerParams
) -> AttributeDistribution:
    """Per-family softmax over the element's pooled word embedding.

    The noun's column comes straight from the lexicon and the adverb's
    duration scale from its vocab entry; neither is learned.
    """
    noun = enc.vocab.lookup(element.noun)
    if noun.role != "noun" or noun.column is None:
        raise TexturalError(f"{element.noun!r} is not a column-bearing noun")
    emb = encode_text(_element_words(element), enc)
    dists = {}
    for family in COMPOSE_FAMILIES:
        w, b = comp.heads[family]
        dists[family] = _softmax(w.T @ emb + b)
    scale = 1.0
    if element.adverb is not None:
        scale = enc.vocab.lookup(element.adverb).duration_scale
    return AttributeDistribution(
        direction=dists["direction"],
        level=dists["level"],
        rotation=dists["rotation"],
        flexion=dists["flexion"],
        duration_scale=scale,
        column=noun.column,
    )


# --- composer training --------------------------------------------------------

_LABEL_INDEX = {
    "direction": lambda tok: lb.DIRECTION_INDEX[tok.action.direction],
    "level": lambda tok: lb.LEVEL_INDEX[tok.action.level],
    "rotation": lambda tok: lb.ROTATION_INDEX[tok.action.rotation],
    "flexion": lambda tok: lb.FLEXION_INDEX[tok.action.flexion],
}


def _composer_arrays(comp: ComposerParams) -> list[np.ndarray]:
    out = []
    for family in COMPOSE_FAMILIES:
        w, b = comp.heads[family]
        out.extend([w, b])
    return out


def _with_composer_vector(comp: ComposerParams, vector: np.ndarray) -> ComposerParams:
    shapes = [a.shape for a in _composer_arrays(comp)]
    arrays = unpack(vector, shapes)
    heads = dict(comp.heads)
    for i, family in enumerate(COMPOSE_FAMILIES):
        heads[family] = (arrays[2 * i], arrays[2 * i + 1])
    return ComposerParams(heads=heads, history=comp.history, temperature=comp.temperature)


def composer_objective(comp: ComposerParams, corpus, enc: EncoderDecoderParams) -> float:
    """Mean log-probability of the labelled attribute values."""
    total = 0.0
    for element, token in corpus:
        emb = encode_text(_element_words(element), enc)
        for family in COMPOSE_FAMILIES:
            w, b = comp.heads[family]
            logits = w.T @ emb + b
            shifted = logits - logits.max()
            log_probs = shifted - math.log(np.sum(np.exp(shifted)))
            total += float(log_probs[_LABEL_INDEX[family](token)])
    return total / len(corpus)


def composer_gradient(comp: ComposerParams, corpus, enc: EncoderDecoderParams) -> np.ndarray:
    grads = {family: (np.zeros_like(comp.heads[family][0]), np.zeros_like(comp.heads[family][1]))
             for family in COMPOSE_FAMILIES}
    for element, token in corpus:
        emb = encode_text(_element_words(element), enc)
        for family in COMPOSE_FAMILIES:
            w, b = comp.heads[family]
            probs = _softmax(w.T @ emb + b)
            delta = -probs
            delta[_LABEL_INDEX[family](token)] += 1.0
            gw, gb = grads[family]
            gw += np.outer(emb, delta)
            gb += delta
    n = len(corpus)
    flat = []
    for family in COMPOSE_FAMILIES:
        gw, gb = grads[family]
        flat.extend([gw / n, gb / n])
    return pack(flat)


def train_composer(
    corpus,
    enc: EncoderDecoderParams,
    comp: ComposerParams,
    steps: int,
    step_size: float,
    seed: int | None = None,
) -> tuple[ComposerParams, list[float]]:
    """Gradient ascent on attribute log-likelihood; encoder params stay fixed."""
    if not corpus:
        raise ValueError("corpus must be nonempty")
    theta0 = pack(_composer_arrays(comp))
    theta, trace = ascend(
        theta0,
        lambda v: composer_objective(_with_composer_vector(comp, v), corpus, enc),
        lambda v: composer_gradient(_with_composer_vector(comp, v), corpus, enc),
        steps,
        step_size,
    )
    return _with_composer_vector(comp, theta), trace


# --- generation ----------------------------------------------------------------

@dataclass(frozen=True)
class GenerationResult:
    score: lb.Score
    exhausted: bool            # true when the legal action grid ran out early
    log_prob: float            # sum of per-token sampling log-probabilities


def _token_feature(comp: ComposerParams, start_idx, col_idx, dur_idx, dir_idx, lvl_idx, rot_idx, flex_idx):
    return (
        comp.heads["start"][0][:, start_idx]
        + comp.heads["column"][0][:, col_idx]
        + comp.heads["duration"][0][:, dur_idx]
        + comp.heads["direction"][0][:, dir_idx]
        + comp.heads["level"][0][:, lvl_idx]
        + comp.heads["rotation"][0][:, rot_idx]
        + comp.heads["flexion"][0][:, flex_idx]
    )


def generate_score(
    condition: np.ndarray,
    guidance: np.ndarray | None,
    guidance_weight: float,
    length: int,
    comp: ComposerParams,
    seed,
    meter: tuple[int, int] = (4, 4),
) -> GenerationResult:
    """Sample a valid score autoregressively from the conditioned heads.

    The effective conditioning vector is condition + guidance_weight*guidance,
    so generation depends on the two inputs only through their weighted sum.
    Candidate (start, column, duration) placements that would overlap an
    already placed token are masked; if every placement is masked the result
    is returned shorter with ``exhausted`` set.
    """
    if length < 0:
        raise ValueError(f"length must be >= 0, got {length}")
    if guidance_weight < 0:
        raise ValueError(f"guidance_weight must be >= 0, got {guidance_weight}")
    cond = np.asarray(condition, dtype=float)
    if guidance is not None:
        cond = cond + guidance_weight * np.asarray(guidance, dtype=float)

    n_starts = comp.heads["start"][0].shape[1]
    starts = [Fraction(k, 2) for k in range(n_starts)]
    horizon = Fraction(n_starts, 2)
    columns = list(lb.Column)
    rng = np.random.default_rng(seed)

    # Grid times are halves of beats, exact in floats, so the legality mask
    # can be maintained with vectorized comparisons.
    starts_f = np.array([float(s) for s in starts])
    ends_f = starts_f[:, None] + np.array([float(d) for d in DURATIONS])[None, :]  # (starts, durs)
    mask = np.repeat((ends_f > float(horizon))[:, None, :], len(columns), axis=1)  # (s, col, d)

    placed: list[lb.LabanToken] = []
    features: list[np.ndarray] = []
    exhausted = False
    log_prob = 0.0
    for _ in range(length):
        h = cond if not features else cond + comp.history @ np.mean(features, axis=0)
        logits = {
            family: (w.T @ h + b) / comp.temperature
            for family, (w, b) in comp.heads.items()
        }
        joint = (
            logits["start"][:, None, None]
            + logits["column"][None, :, None]
            + logits["duration"][None, None, :]
        )
        if mask.all():
            exhausted = True
            break
        flat = np.where(mask.ravel(), -np.inf, joint.ravel())
        probs = _softmax(flat)
        probs = probs / probs.sum()
        pick = int(rng.choice(probs.size, p=probs))
        si, ci, di = np.unravel_index(pick, joint.shape)
        log_prob += math.log(probs[pick])

        attr_idx = {}
        for family in COMPOSE_FAMILIES:
            p = _softmax(logits[family])
            p = p / p.sum()
            attr_idx[family] = int(rng.choice(p.size, p=p))
            log_prob += math.log(p[attr_idx[family]])

        start, duration = starts[si], DURATIONS[di]
        token = lb.make_token(
            column=columns[ci],
            direction=list(lb.Direction)[attr_idx["direction"]],
            level=list(lb.Level)[attr_idx["level"]],
            start=start,
            duration=duration,
            rotation=list(lb.Rotation)[attr_idx["rotation"]],
            flexion=list(lb.Flexion)[attr_idx["flexion"]],
            meter=meter,
        )
        placed.append(token)
        mask[:, ci, :] |= (starts_f[:, None] < float(start + duration)) & (ends_f > float(start))
        features.append(
            _token_feature(comp, si, ci, di, attr_idx["direction"], attr_idx["level"],
                           attr_idx["rotation"], attr_idx["flexion"])
        )
    score = lb.canonicalize(lb.Score(meter, tuple(placed)))
    return GenerationResult(score=score, exhausted=exhausted, log_prob=log_prob)


# --- procedural corpus ----------------------------------------------------------

def procedural_assignment(vocab: Vocab, seed: int) -> dict:
    """Fixed attribute assignment: direction/rotation follow the verb,
    level/flexion follow the noun.  Single-word dependence keeps the mapping
    learnable by linear heads over pooled word embeddings."""
    verbs = vocab.by_role("verb")
    nouns = vocab.by_role("noun")
    rng = np.random.default_rng((seed, 101))
    return {
        "direction": {v.text: int(i) for v, i in zip(verbs, rng.integers(0, len(lb.Direction), len(verbs)))},
        "rotation": {v.text: int(i) for v, i in zip(verbs, rng.integers(0, len(lb.Rotation), len(verbs)))},
        "level": {n.text: int(i) for n, i in zip(nouns, rng.integers(0, len(lb.Level), len(nouns)))},
        "flexion": {n.text: int(i) for n, i in zip(nouns, rng.integers(0, len(lb.Flexion), len(nouns)))},
    }


def _assigned_token(vocab: Vocab, assignment, verb: str, noun: str, start=0, duration=1) -> lb.LabanToken:
    return lb.make_token(
        column=vocab.lookup(noun).column,
        direction=list(lb.Direction)[assignment["direction"][verb]],
        level=list(lb.Level)[assignment["level"][noun]],
        start=start,
        duration=duration,
        rotation=list(lb.Rotation)[assignment["rotation"][verb]],
        flexion=list(lb.Flexion)[assignment["flexion"][noun]],
    )


def procedural_corpus(vocab: Vocab, seed: int, items_per_pair: int = 2, noise: float = 0.05):
    """Labelled (element, token) items pairing each (verb, noun) with its
    assigned attributes, plus a little seeded label noise."""
    assignment = procedural_assignment(vocab, seed)
    rng = np.random.default_rng((seed, 202))
    corpus = []
    for verb in vocab.by_role("verb"):
        for noun in vocab.by_role("noun"):
            for _ in range(items_per_pair):
                token = _assigned_token(vocab, assignment, verb.text, noun.text)
                if rng.random() < noise:
                    token = lb.make_token(
                        column=noun.column,
                        direction=list(lb.Direction)[rng.integers(0, len(lb.Direction))],
                        level=list(lb.Level)[rng.integers(0, len(lb.Level))],
                        rotation=list(lb.Rotation)[rng.integers(0, len(lb.Rotation))],
                        flexion=list(lb.Flexion)[rng.integers(0, len(lb.Flexion))],
                    )
                corpus.append((TexturalElement(verb.text, noun.text), token))
    return corpus


def procedural_pairs(vocab: Vocab, seed: int, n: int):
    """Paired (text tokens, Score) samples for alignment training.

    Verbs and nouns are drawn without replacement (cycling once exhausted) so
    small batches never share words across pairs.
    """
    assignment = procedural_assignment(vocab, seed)
    verbs = vocab.by_role("verb")
    nouns = vocab.by_role("noun")
    rng = np.random.default_rng((seed, 303))
    verb_order = [verbs[i] for i in rng.permutation(len(verbs))]
    noun_order = [nouns[i] for i in rng.permutation(len(nouns))]
    pairs = []
    for k in range(n):
        verb = verb_order[k % len(verb_order)]
        noun = noun_order[k % len(noun_order)]
        n_tokens = 1 + k % 3
        tokens = tuple(
            _assigned_token(vocab, assignment, verb.text, noun.text, start=j, duration=1)
            for j in range(n_tokens)
        )
        pairs.append(([verb.text, noun.text], lb.Score((4, 4), tokens)))
    return pairs


def save_composer_params(comp: ComposerParams) -> str:
    return save_matrices(comp.arrays())


def load_composer_params(text: str) -> ComposerParams:
    mats = load_matrices(text)
    heads = {
        name: (mats[f"head_{name}_w"], mats[f"head_{name}_b"][0])
        for name in HEAD_FAMILIES
    }
    return ComposerParams(
        heads=heads,
        history=mats["history"],
        temperature=float(mats["temperature"][0, 0]),
    )

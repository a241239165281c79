"""Symbolic dance scores: tokens, strict text format, canonical ordering, decoding.

A score is a bag of movement tokens written on a staff of eight body-part
columns.  Each token carries three attribute groups:

* time     -- meter, start beat and duration (exact rationals),
* spatial  -- progression path, stage facing and stage position,
* action   -- column, direction, level, rotation and flexion.

Tokens are permutation-invariant values: every token knows its own start and
duration, so the order of a score's token list never changes its meaning.
``canonicalize`` fixes one order, ``serialize_score`` emits one byte form, and
``parse_score`` reads it back strictly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

FORMAT_VERSION = 1

_KEY_SCALE = 1 << 128  # exact rational ordering for denominators < 2**64


class Column(enum.Enum):
    SUPPORT_L = "support_l"
    SUPPORT_R = "support_r"
    LEG_L = "leg_l"
    LEG_R = "leg_r"
    BODY = "body"
    ARM_L = "arm_l"
    ARM_R = "arm_r"
    HEAD = "head"


class Direction(enum.Enum):
    PLACE = "place"
    FORWARD = "forward"
    BACK = "back"
    LEFT = "left"
    RIGHT = "right"
    LEFT_FORWARD = "left_forward"
    RIGHT_FORWARD = "right_forward"
    LEFT_BACK = "left_back"
    RIGHT_BACK = "right_back"


class Level(enum.Enum):
    LOW = "low"
    MIDDLE = "middle"
    HIGH = "high"


class Rotation(enum.Enum):
    NONE = "none"
    CW_QUARTER = "cw_quarter"
    CW_HALF = "cw_half"
    CCW_QUARTER = "ccw_quarter"
    CCW_HALF = "ccw_half"


class Flexion(enum.Enum):
    NONE = "none"
    FLEXED = "flexed"
    EXTENDED = "extended"


class PathShape(enum.Enum):
    NONE = "none"
    STRAIGHT = "straight"
    CIRCULAR_CW = "circular_cw"
    CIRCULAR_CCW = "circular_ccw"


class Facing(enum.Enum):
    FRONT = "front"
    FRONT_RIGHT = "front_right"
    RIGHT = "right"
    BACK_RIGHT = "back_right"
    BACK = "back"
    BACK_LEFT = "back_left"
    LEFT = "left"
    FRONT_LEFT = "front_left"


class StagePosition(enum.Enum):
    UPSTAGE_LEFT = "upstage_left"
    UPSTAGE_CENTER = "upstage_center"
    UPSTAGE_RIGHT = "upstage_right"
    CENTER_LEFT = "center_left"
    CENTER_CENTER = "center_center"
    CENTER_RIGHT = "center_right"
    DOWNSTAGE_LEFT = "downstage_left"
    DOWNSTAGE_CENTER = "downstage_center"
    DOWNSTAGE_RIGHT = "downstage_right"


def _index_map(enum_cls):
    return {member: i for i, member in enumerate(enum_cls)}


def _value_map(enum_cls):
    return {member.value: member for member in enum_cls}


COLUMN_INDEX = _index_map(Column)
DIRECTION_INDEX = _index_map(Direction)
LEVEL_INDEX = _index_map(Level)
ROTATION_INDEX = _index_map(Rotation)
FLEXION_INDEX = _index_map(Flexion)
PATH_INDEX = _index_map(PathShape)
FACING_INDEX = _index_map(Facing)
POSITION_INDEX = _index_map(StagePosition)

N_COLUMNS = len(Column)
N_DIRECTIONS = len(Direction)
N_LEVELS = len(Level)

_SQ2 = math.sqrt(2.0) / 2.0

# Planar offset per direction; level supplies the z component.
DIRECTION_OFFSETS = {
    Direction.PLACE: (0.0, 0.0),
    Direction.FORWARD: (0.0, 1.0),
    Direction.BACK: (0.0, -1.0),
    Direction.LEFT: (-1.0, 0.0),
    Direction.RIGHT: (1.0, 0.0),
    Direction.LEFT_FORWARD: (-_SQ2, _SQ2),
    Direction.RIGHT_FORWARD: (_SQ2, _SQ2),
    Direction.LEFT_BACK: (-_SQ2, -_SQ2),
    Direction.RIGHT_BACK: (_SQ2, -_SQ2),
}

LEVEL_Z = {Level.LOW: -1.0, Level.MIDDLE: 0.0, Level.HIGH: 1.0}


class ScoreError(ValueError):
    """Base class for score format and value errors."""


class ScoreParseError(ScoreError):
    def __init__(self, message: str, line: int, column: int | None = None):
        loc = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{loc}: {message}")
        self.line = line
        self.column = column


class VersionMismatchError(ScoreParseError):
    pass


class MalformedRationalError(ScoreParseError):
    pass


class UnknownEnumError(ScoreParseError):
    def __init__(self, message: str, line: int, column: int | None, field_name: str):
        super().__init__(message, line, column)
        self.field_name = field_name


def _as_fraction(value) -> Fraction:
    frac = Fraction(value)
    if frac.denominator <= 0:  # Fraction normalizes, guard stays for clarity
        raise ScoreError(f"non-positive denominator in {value!r}")
    return frac


@dataclass(frozen=True)
class TimeAttrs:
    """Meter plus start/duration in beats.  Rationals are kept in lowest terms.

    Non-positive durations and negative starts are representable so that
    ``validate_score`` can report them; valid scores never contain them.
    """

    meter: tuple[int, int] = (4, 4)
    start: Fraction = Fraction(0)
    duration: Fraction = Fraction(1)

    def __post_init__(self):
        num, den = self.meter
        if not (isinstance(num, int) and isinstance(den, int) and num > 0 and den > 0):
            raise ScoreError(f"meter must be a pair of positive ints, got {self.meter!r}")
        object.__setattr__(self, "start", _as_fraction(self.start))
        object.__setattr__(self, "duration", _as_fraction(self.duration))

    @property
    def end(self) -> Fraction:
        return self.start + self.duration


@dataclass(frozen=True)
class SpatialAttrs:
    path: PathShape = PathShape.NONE
    facing: Facing = Facing.FRONT
    position: StagePosition = StagePosition.CENTER_CENTER


@dataclass(frozen=True)
class ActionAttrs:
    column: Column
    direction: Direction = Direction.PLACE
    level: Level = Level.MIDDLE
    rotation: Rotation = Rotation.NONE
    flexion: Flexion = Flexion.NONE


def _scaled(frac: Fraction) -> int:
    return (frac.numerator * _KEY_SCALE) // frac.denominator


@dataclass(frozen=True)
class LabanToken:
    time: TimeAttrs
    spatial: SpatialAttrs
    action: ActionAttrs

    @cached_property
    def canonical_key(self) -> tuple:
        t, a, s = self.time, self.action, self.spatial
        return (
            _scaled(t.start),
            COLUMN_INDEX[a.column],
            _scaled(t.duration),
            DIRECTION_INDEX[a.direction],
            LEVEL_INDEX[a.level],
            ROTATION_INDEX[a.rotation],
            FLEXION_INDEX[a.flexion],
            PATH_INDEX[s.path],
            FACING_INDEX[s.facing],
            POSITION_INDEX[s.position],
        )

    @cached_property
    def text_line(self) -> str:
        t, a, s = self.time, self.action, self.spatial
        return (
            f"tok start={t.start.numerator}/{t.start.denominator}"
            f" dur={t.duration.numerator}/{t.duration.denominator}"
            f" col={a.column.value} dir={a.direction.value} lvl={a.level.value}"
            f" rot={a.rotation.value} flex={a.flexion.value}"
            f" path={s.path.value} face={s.facing.value} pos={s.position.value}"
        )


def make_token(
    column: Column,
    direction: Direction = Direction.PLACE,
    level: Level = Level.MIDDLE,
    start=0,
    duration=1,
    rotation: Rotation = Rotation.NONE,
    flexion: Flexion = Flexion.NONE,
    meter: tuple[int, int] = (4, 4),
    spatial: SpatialAttrs | None = None,
) -> LabanToken:
    """Convenience constructor with spatial defaults (none, front, center_center)."""
    return LabanToken(
        time=TimeAttrs(meter=meter, start=Fraction(start), duration=Fraction(duration)),
        spatial=spatial if spatial is not None else SpatialAttrs(),
        action=ActionAttrs(column, direction, level, rotation, flexion),
    )


@dataclass(frozen=True)
class Score:
    meter: tuple[int, int] = (4, 4)
    tokens: tuple[LabanToken, ...] = ()

    def __post_init__(self):
        num, den = self.meter
        if not (isinstance(num, int) and isinstance(den, int) and num > 0 and den > 0):
            raise ScoreError(f"meter must be a pair of positive ints, got {self.meter!r}")
        object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def end_beats(self) -> Fraction:
        return max((tok.time.end for tok in self.tokens), default=Fraction(0))


def canonicalize(score: Score) -> Score:
    """Return the score with tokens in canonical order; idempotent."""
    return Score(score.meter, tuple(sorted(score.tokens, key=lambda t: t.canonical_key)))


def serialize_score(score: Score) -> str:
    """Emit the single canonical byte form (UTF-8 text, LF endings).

    Tokens are emitted in canonical order regardless of the input order, so
    two permutations of the same token list serialize identically.
    """
    lines = [f"LABANSTR {FORMAT_VERSION}", f"meter {score.meter[0]}/{score.meter[1]}"]
    lines.extend(tok.text_line for tok in sorted(score.tokens, key=lambda t: t.canonical_key))
    return "\n".join(lines) + "\n"


_TOKEN_KEYS = ("start", "dur", "col", "dir", "lvl", "rot", "flex", "path", "face", "pos")

_ENUM_FIELDS = {
    "col": _value_map(Column),
    "dir": _value_map(Direction),
    "lvl": _value_map(Level),
    "rot": _value_map(Rotation),
    "flex": _value_map(Flexion),
    "path": _value_map(PathShape),
    "face": _value_map(Facing),
    "pos": _value_map(StagePosition),
}


def _parse_rational(text: str, line_no: int, col: int, *, allow_negative: bool) -> Fraction:
    num_s, sep, den_s = text.partition("/")
    if not sep:
        raise MalformedRationalError(f"expected <num>/<den>, got {text!r}", line_no, col)
    try:
        num = int(num_s)
        den = int(den_s)
    except ValueError:
        raise MalformedRationalError(f"non-integer rational part in {text!r}", line_no, col) from None
    if den <= 0:
        raise MalformedRationalError(f"denominator must be positive in {text!r}", line_no, col)
    if num < 0 and not allow_negative:
        raise MalformedRationalError(f"negative value not allowed: {text!r}", line_no, col)
    return Fraction(num, den)


def _parse_meter(text: str, line_no: int, col: int) -> tuple[int, int]:
    num_s, sep, den_s = text.partition("/")
    try:
        num, den = int(num_s), int(den_s)
    except ValueError:
        raise MalformedRationalError(f"malformed meter {text!r}", line_no, col) from None
    if not sep or num <= 0 or den <= 0:
        raise MalformedRationalError(f"malformed meter {text!r}", line_no, col)
    return num, den


def _parse_token_line(line: str, line_no: int, meter: tuple[int, int]) -> LabanToken:
    fields = line.split(" ")
    if len(fields) != 1 + len(_TOKEN_KEYS):
        raise ScoreParseError(
            f"token line must have exactly {len(_TOKEN_KEYS)} key=value fields", line_no
        )
    values: dict[str, object] = {}
    col = len(fields[0]) + 1  # char offset of the current field
    for expected_key, item in zip(_TOKEN_KEYS, fields[1:]):
        key, sep, raw = item.partition("=")
        if not sep or key != expected_key:
            raise ScoreParseError(
                f"expected key {expected_key!r} at this position, got {item!r}", line_no, col
            )
        value_col = col + len(key) + 1
        if expected_key == "start":
            values[key] = _parse_rational(raw, line_no, value_col, allow_negative=True)
        elif expected_key == "dur":
            values[key] = _parse_rational(raw, line_no, value_col, allow_negative=True)
        else:
            mapping = _ENUM_FIELDS[expected_key]
            if raw not in mapping:
                raise UnknownEnumError(
                    f"unknown value {raw!r} for field {expected_key!r}",
                    line_no,
                    value_col,
                    expected_key,
                )
            values[key] = mapping[raw]
        col += len(item) + 1
    return LabanToken(
        time=TimeAttrs(meter=meter, start=values["start"], duration=values["dur"]),
        spatial=SpatialAttrs(values["path"], values["face"], values["pos"]),
        action=ActionAttrs(values["col"], values["dir"], values["lvl"], values["rot"], values["flex"]),
    )


def parse_score(text: str) -> Score:
    """Parse score text.  Strict: fixed key order, lowest-term rationals.

    Neither canonicalizes nor checks overlaps; use ``canonicalize`` and
    ``validate_score`` for those.  Comment (``#``) and blank lines are skipped.
    """
    header_seen = False
    meter: tuple[int, int] | None = None
    tokens: list[LabanToken] = []
    for line_no, raw_line in enumerate(text.split("\n"), start=1):
        line = raw_line.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if not header_seen:
            parts = line.split(" ")
            if parts[0] != "LABANSTR" or len(parts) != 2:
                raise ScoreParseError(f"expected 'LABANSTR {FORMAT_VERSION}' header", line_no, 1)
            if parts[1] != str(FORMAT_VERSION):
                raise VersionMismatchError(
                    f"unsupported format version {parts[1]!r} (expected {FORMAT_VERSION})",
                    line_no,
                    len(parts[0]) + 2,
                )
            header_seen = True
        elif meter is None:
            key, sep, raw = line.partition(" ")
            if key != "meter" or not sep:
                raise ScoreParseError("expected 'meter <num>/<den>' line", line_no, 1)
            meter = _parse_meter(raw, line_no, len(key) + 2)
        elif line.startswith("tok ") or line == "tok":
            tokens.append(_parse_token_line(line, line_no, meter))
        else:
            raise ScoreParseError(f"unexpected line {line.split(' ')[0]!r}", line_no, 1)
    if not header_seen:
        raise ScoreParseError("empty input: missing header", 1, 1)
    if meter is None:
        raise ScoreParseError("missing meter line", 1, 1)
    return Score(meter, tuple(tokens))


@dataclass(frozen=True)
class Violation:
    kind: str  # overlap | nonpositive_duration | negative_start | meter_mismatch
    message: str
    token_indices: tuple[int, ...]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]


def validate_score(score: Score) -> ValidationReport:
    """Report every violation; never raises (violations are data, not faults)."""
    violations: list[Violation] = []
    for i, tok in enumerate(score.tokens):
        if tok.time.duration <= 0:
            violations.append(
                Violation("nonpositive_duration", f"token {i} has duration {tok.time.duration}", (i,))
            )
        if tok.time.start < 0:
            violations.append(
                Violation("negative_start", f"token {i} starts at {tok.time.start}", (i,))
            )
        if tok.time.meter != score.meter:
            violations.append(
                Violation(
                    "meter_mismatch",
                    f"token {i} meter {tok.time.meter} != score meter {score.meter}",
                    (i,),
                )
            )
    by_column: dict[Column, list[int]] = {}
    for i, tok in enumerate(score.tokens):
        by_column.setdefault(tok.action.column, []).append(i)
    for column, indices in by_column.items():
        # Half-open interval sweep; touching intervals do not overlap.
        ordered = sorted(indices, key=lambda i: (score.tokens[i].time.start, score.tokens[i].time.end))
        for pos, i in enumerate(ordered):
            end_i = score.tokens[i].time.end
            for j in ordered[pos + 1 :]:
                if score.tokens[j].time.start >= end_i:
                    break
                lo, hi = min(i, j), max(i, j)
                violations.append(
                    Violation(
                        "overlap",
                        f"tokens {lo} and {hi} overlap in column {column.value}",
                        (lo, hi),
                    )
                )
    return ValidationReport(ok=not violations, violations=tuple(violations))


def direction_level_target(direction: Direction, level: Level) -> tuple[float, float, float]:
    dx, dy = DIRECTION_OFFSETS[direction]
    return (dx, dy, LEVEL_Z[level])


def decode_channels(score: Score, sample_rate: int, n_beats=None):
    """Decode a valid score into per-column piecewise-linear 3-vector trajectories.

    Each column's value ramps linearly from its previous value to the token's
    direction/level target over [start, start+duration) and holds afterward;
    the rest value is (0, 0, 0).  Returns ``(times, channels)`` where times is
    a float array of beats sampled at ``sample_rate`` samples per beat and
    channels maps each Column to an (n, 3) array.
    """
    if sample_rate < 1:
        raise ScoreError(f"sample_rate must be >= 1, got {sample_rate}")
    report = validate_score(score)
    if not report.ok:
        raise ScoreError(f"invalid score: {report.violations[0].message}")
    end = Fraction(n_beats) if n_beats is not None else score.end_beats
    ticks = end * sample_rate
    n_samples = -(-ticks.numerator // ticks.denominator) + 1  # ceil + 1 => covers [0, end]
    sample_times = [Fraction(i, sample_rate) for i in range(n_samples)]
    times = np.array([float(t) for t in sample_times])

    channels: dict[Column, np.ndarray] = {}
    for column in Column:
        tokens = sorted(
            (tok for tok in score.tokens if tok.action.column is column),
            key=lambda t: t.time.start,
        )
        values = np.zeros((n_samples, 3))
        if tokens:
            # Breakpoints: (time, value) nodes of the piecewise-linear channel.
            nodes: list[tuple[Fraction, tuple[float, float, float]]] = []
            prev_value = (0.0, 0.0, 0.0)
            prev_end = Fraction(0)
            for tok in tokens:
                start, end_t = tok.time.start, tok.time.end
                if not nodes or start > prev_end:
                    nodes.append((start, prev_value))
                target = direction_level_target(tok.action.direction, tok.action.level)
                nodes.append((end_t, target))
                prev_value = target
                prev_end = end_t
            for i, t in enumerate(sample_times):
                values[i] = _eval_nodes(nodes, t)
        channels[column] = values
    return times, channels


def _eval_nodes(nodes, t: Fraction):
    if t <= nodes[0][0]:
        if t < nodes[0][0]:
            return (0.0, 0.0, 0.0)
        return nodes[0][1]
    for (t0, v0), (t1, v1) in zip(nodes, nodes[1:]):
        if t0 <= t < t1:
            w = (t - t0) / (t1 - t0)  # exact rational, converted to float last
            fw = float(w)
            return tuple(a + (b - a) * fw for a, b in zip(v0, v1))
    return nodes[-1][1]


def attribute_histogram(score: Score) -> np.ndarray:
    """Normalized (column, direction, level) distribution, shape (8, 9, 3).

    Empty scores yield the all-zero array (the zero sum is the empty flag);
    any nonempty score sums to exactly 1.
    """
    hist = np.zeros((N_COLUMNS, N_DIRECTIONS, N_LEVELS))
    if not score.tokens:
        return hist
    for tok in score.tokens:
        a = tok.action
        hist[COLUMN_INDEX[a.column], DIRECTION_INDEX[a.direction], LEVEL_INDEX[a.level]] += 1.0
    return hist / len(score.tokens)

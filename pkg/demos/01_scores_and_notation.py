#!/usr/bin/env python3
# Symbolic movement scores: build, serialize, validate, decode.
#
# A score is a bag of tokens on an eight-column staff.  Each token knows its
# own start and duration, so token order never matters: one canonical byte
# form exists for every score.

from fractions import Fraction

from atelier import (
    Column,
    Direction,
    Level,
    Score,
    attribute_histogram,
    canonicalize,
    decode_channels,
    make_token,
    parse_score,
    serialize_score,
    validate_score,
)

# A two-bar phrase: right arm sweeps up while the left leg steps back.
tokens = (
    make_token(Column.ARM_R, Direction.RIGHT, Level.HIGH, start=0, duration=2),
    make_token(Column.LEG_L, Direction.BACK, Level.LOW, start=Fraction(1, 2), duration=1),
    make_token(Column.ARM_R, Direction.PLACE, Level.MIDDLE, start=2, duration=1),
    make_token(Column.HEAD, Direction.LEFT_FORWARD, Level.HIGH, start=1, duration=Fraction(1, 2)),
)
score = Score(meter=(4, 4), tokens=tokens)

text = serialize_score(score)
print("canonical text:")
print(text)

# Round trip: parsing the canonical text gives back the canonical score.
assert parse_score(text) == canonicalize(score)

# Shuffling tokens changes nothing observable.
shuffled = Score(score.meter, tuple(reversed(score.tokens)))
assert serialize_score(shuffled) == text
print("permutation invariance holds: reversed token list serializes identically\n")

report = validate_score(score)
print("validation:", "ok" if report.ok else report.violations)

# Decode each column into a piecewise-linear 3-vector trajectory.
times, channels = decode_channels(score, sample_rate=4)
arm = channels[Column.ARM_R]
print("\narm_r trajectory (t, x, y, z):")
for t, value in list(zip(times, arm))[:12]:
    print(f"  t={t:4.2f}  ({value[0]: .3f}, {value[1]: .3f}, {value[2]: .3f})")

hist = attribute_histogram(score)
print(f"\nattribute histogram: {int((hist > 0).sum())} occupied cells, total mass {hist.sum():.3f}")

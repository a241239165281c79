"""Shared fixtures and generators for the test suite."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from atelier import labanstr as lb


def random_token(rng: np.random.Generator, meter=(4, 4), max_start_halves=16) -> lb.LabanToken:
    start = Fraction(int(rng.integers(0, max_start_halves)), 2)
    duration = Fraction(int(rng.integers(1, 5)), 2)
    return lb.LabanToken(
        time=lb.TimeAttrs(meter=meter, start=start, duration=duration),
        spatial=lb.SpatialAttrs(
            path=list(lb.PathShape)[rng.integers(0, len(lb.PathShape))],
            facing=list(lb.Facing)[rng.integers(0, len(lb.Facing))],
            position=list(lb.StagePosition)[rng.integers(0, len(lb.StagePosition))],
        ),
        action=lb.ActionAttrs(
            column=list(lb.Column)[rng.integers(0, len(lb.Column))],
            direction=list(lb.Direction)[rng.integers(0, len(lb.Direction))],
            level=list(lb.Level)[rng.integers(0, len(lb.Level))],
            rotation=list(lb.Rotation)[rng.integers(0, len(lb.Rotation))],
            flexion=list(lb.Flexion)[rng.integers(0, len(lb.Flexion))],
        ),
    )


def random_score(rng: np.random.Generator, n_tokens: int, meter=(4, 4), valid=True) -> lb.Score:
    """Random score; with valid=True tokens never overlap within a column."""
    tokens = []
    used: dict[lb.Column, list[tuple[Fraction, Fraction]]] = {}
    attempts = 0
    while len(tokens) < n_tokens and attempts < n_tokens * 40:
        attempts += 1
        tok = random_token(rng, meter=meter)
        if valid:
            spans = used.setdefault(tok.action.column, [])
            t = tok.time
            if any(t.start < end and start < t.end for start, end in spans):
                continue
            spans.append((t.start, t.end))
        tokens.append(tok)
    return lb.Score(meter, tuple(tokens))


def overlap_pairs_bruteforce(score: lb.Score) -> set[tuple[int, int]]:
    """Independent O(n^2) interval-intersection oracle for overlap detection."""
    pairs = set()
    for i in range(len(score.tokens)):
        for j in range(i + 1, len(score.tokens)):
            a, b = score.tokens[i], score.tokens[j]
            if a.action.column is not b.action.column:
                continue
            if a.time.start < b.time.end and b.time.start < a.time.end:
                pairs.add((min(i, j), max(i, j)))
    return pairs

"""Artist-side adapters: a deterministic scripted oracle and feedback replay.

The oracle stands in for the human: it rates a score by how close its
attribute histogram is to a target (total-variation distance) and points its
judgement at the most under-served cells, so its guidance always pushes the
generator toward the target.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import labanstr as lb
from .engine import Decision, FeedbackEvent, Judgement, judgement_from_payload


class OracleError(ValueError):
    pass


class ReplayError(ValueError):
    def __init__(self, message: str, seq: int | None = None):
        super().__init__(f"seq {seq}: {message}" if seq is not None else message)
        self.seq = seq


@dataclass(frozen=True)
class OracleSpec:
    """Target (column, direction, level) histogram plus rating scale and
    how many deficit cells each judgement names."""

    target: np.ndarray      # (8, 9, 3), sums to 1
    r_max: float = 1.0
    budget: int = 3

    def __post_init__(self):
        if self.target.shape != (lb.N_COLUMNS, lb.N_DIRECTIONS, lb.N_LEVELS):
            raise OracleError(f"target must have shape (8, 9, 3), got {self.target.shape}")
        if abs(float(self.target.sum()) - 1.0) > 1e-9:
            raise OracleError("target histogram must sum to 1")
        if np.any(self.target < 0):
            raise OracleError("target histogram must be non-negative")
        if not self.r_max > 0:
            raise OracleError(f"r_max must be positive, got {self.r_max}")
        if self.budget < 0:
            raise OracleError(f"budget must be >= 0, got {self.budget}")


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Half the L1 distance between two histograms."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


_COLUMNS = list(lb.Column)
_DIRECTIONS = list(lb.Direction)
_LEVELS = list(lb.Level)


def scripted_feedback(spec: OracleSpec, score: lb.Score) -> FeedbackEvent:
    """Rate R_max*(1 - TV(histogram, target)); judge the largest deficits.

    Pure: identical (spec, score) inputs give identical payloads.  The engine
    stamps the iteration index when it consumes the event.
    """
    if not score.tokens:
        return FeedbackEvent(iteration=0, rating=0.0, judgement=Judgement(), decision=Decision.NONE)
    observed = lb.attribute_histogram(score)
    # Clamp against float rounding: TV can land epsilon outside [0, 1].
    rating = min(max(spec.r_max * (1.0 - total_variation(observed, spec.target)), 0.0), spec.r_max)
    deficits = spec.target - observed
    flat = deficits.ravel()
    order = sorted(range(flat.size), key=lambda i: (-flat[i], i))
    targets = []
    for idx in order[: spec.budget]:
        if flat[idx] <= 0:
            break
        ci, di, li = np.unravel_index(idx, deficits.shape)
        cell = (_COLUMNS[ci], _DIRECTIONS[di], _LEVELS[li])
        targets.append((cell, float(flat[idx])))
    judgement = Judgement(text=(), targets=tuple(targets))
    return FeedbackEvent(iteration=0, rating=float(rating), judgement=judgement, decision=Decision.NONE)


def make_oracle(spec: OracleSpec):
    """Wrap a spec as the Score -> FeedbackEvent callable the engine drives."""
    return lambda score: scripted_feedback(spec, score)


def save_oracle_spec(spec: OracleSpec) -> str:
    lines = [f"rmax {spec.r_max}", f"budget {spec.budget}"]
    for ci, column in enumerate(_COLUMNS):
        for di, direction in enumerate(_DIRECTIONS):
            for li, level in enumerate(_LEVELS):
                mass = spec.target[ci, di, li]
                if mass != 0.0:
                    lines.append(f"cell {column.value} {direction.value} {level.value} {format(mass, '.17g')}")
    return "\n".join(lines) + "\n"


def load_oracle_spec(text: str) -> OracleSpec:
    target = np.zeros((lb.N_COLUMNS, lb.N_DIRECTIONS, lb.N_LEVELS))
    r_max, budget = 1.0, 3
    columns = {m.value: m for m in lb.Column}
    directions = {m.value: m for m in lb.Direction}
    levels = {m.value: m for m in lb.Level}
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "rmax" and len(parts) == 2:
            r_max = float(parts[1])
        elif parts[0] == "budget" and len(parts) == 2:
            budget = int(parts[1])
        elif parts[0] == "cell" and len(parts) == 5:
            col, direction, level, mass = parts[1], parts[2], parts[3], float(parts[4])
            if col not in columns or direction not in directions or level not in levels:
                raise OracleError(f"line {line_no}: unknown cell {parts[1:4]}")
            target[
                lb.COLUMN_INDEX[columns[col]],
                lb.DIRECTION_INDEX[directions[direction]],
                lb.LEVEL_INDEX[levels[level]],
            ] = mass
        else:
            raise OracleError(f"line {line_no}: unrecognized line {line!r}")
    return OracleSpec(target=target, r_max=r_max, budget=budget)


def replay_feedback(log_text: str):
    """Yield the FeedbackEvents recorded in a JSONL event log, in seq order.

    Replaying them into a fresh session with the recorded config and seed
    reproduces the recorded log byte-for-byte (the rest of the loop is a
    deterministic function of config, seed and feedback).
    """
    entries = []
    for line_no, line in enumerate(log_text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as err:
            raise ReplayError(f"malformed JSON line {line_no}: {err}", seq=line_no) from None
        if not isinstance(event, dict) or "kind" not in event or "seq" not in event:
            raise ReplayError(f"line {line_no} is not an event object", seq=line_no)
        entries.append(event)
    entries.sort(key=lambda e: e["seq"])
    for event in entries:
        if event["kind"] != "feedback":
            continue
        payload = event["payload"]
        try:
            yield FeedbackEvent(
                iteration=int(payload["iteration"]),
                rating=float(payload["rating"]),
                judgement=judgement_from_payload(payload["judgement"]),
                decision=Decision(payload["decision"]),
            )
        except (KeyError, ValueError) as err:
            raise ReplayError(f"bad feedback payload: {err}", seq=event["seq"]) from None


def replay_oracle(log_text: str):
    """An oracle that ignores the score and replays recorded feedback."""
    iterator = replay_feedback(log_text)

    def oracle(_score):
        try:
            return next(iterator)
        except StopIteration:
            raise ReplayError("replay exhausted: no more recorded feedback") from None

    return oracle

"""Deterministic gradient-ascent helpers shared by the trainable objectives."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

_MIN_STEP = 1e-14


def ascend(
    theta: np.ndarray,
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    steps: int,
    step_size: float,
) -> tuple[np.ndarray, list[float]]:
    """Gradient ascent with backtracking: halve the step until no decrease.

    The returned trace holds the objective before any step followed by the
    value after each accepted step; it is non-decreasing by construction.
    A step that cannot improve even at the minimum step size is a no-move.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if not step_size > 0:
        raise ValueError(f"step_size must be positive, got {step_size}")
    theta = np.array(theta, dtype=float)
    current = float(objective(theta))
    trace = [current]
    for _ in range(steps):
        grad = np.asarray(gradient(theta), dtype=float)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient")
        eta = step_size
        moved = False
        while eta >= _MIN_STEP:
            candidate = theta + eta * grad
            value = float(objective(candidate))
            # Non-finite values count as decreases: unbounded objectives must
            # not drag the parameters past the floating-point range.
            if math.isfinite(value) and value >= current:
                theta, current, moved = candidate, value, True
                break
            eta /= 2.0
        trace.append(current)
        if not moved and float(np.linalg.norm(grad)) < 1e-15:
            break
    return theta, trace


def pack(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Flatten a sequence of arrays into one vector."""
    if not arrays:
        return np.zeros(0)
    return np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])

def unpack(vector: np.ndarray, shapes: Sequence[tuple]) -> list[np.ndarray]:
    """Split a flat vector back into arrays of the given shapes."""
    out = []
    pos = 0
    for shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        out.append(np.array(vector[pos : pos + size]).reshape(shape))
        pos += size
    if pos != vector.size:
        raise ValueError(f"vector of size {vector.size} does not match shapes (need {pos})")
    return out


def l2_norm(arrays: Sequence[np.ndarray]) -> float:
    """Euclidean norm over every entry of every array."""
    return float(np.sqrt(sum(float(np.sum(np.square(a))) for a in arrays)))


def finite_difference_gradient(objective, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient; the independent oracle for gradient checks."""
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        down = theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (objective(up) - objective(down)) / (2.0 * h)
    return grad

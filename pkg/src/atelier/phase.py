"""Cyclic-element fitting of motion channels and phase-aligned transition blending.

Every motion channel is modelled as a sum of sinusoids plus a DC level:

    x(t) ~ sum_k a_k * sin(2*pi*f_k*t + phi_k) + offset

Fitting is matching pursuit: take the largest spectral peak of the residual,
refine its frequency over a +/-1 bin grid at 1/16-bin resolution, subtract,
repeat, then re-solve amplitudes/phases/offset jointly by least squares.
Blending interpolates matched elements on the phase manifold so transitions
stay continuous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_phase(phi: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    wrapped = math.remainder(phi, 2.0 * math.pi)
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    if wrapped < -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class CyclicElement:
    frequency: float  # cycles per beat, > 0
    amplitude: float  # channel units, >= 0
    phase: float      # radians in [-pi, pi)
    offset: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError(f"frequency must be positive, got {self.frequency}")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        object.__setattr__(self, "phase", wrap_phase(self.phase))

    def instantaneous_phase(self, t: float) -> float:
        return 2.0 * math.pi * self.frequency * t + self.phase


@dataclass(frozen=True)
class PhaseFit:
    """Fitted cyclic elements, ordered by descending amplitude, plus the DC level."""

    elements: tuple[CyclicElement, ...] = ()
    offset: float = 0.0
    residual_rms: float = 0.0

    def __post_init__(self):
        if self.residual_rms < 0:
            raise ValueError("residual_rms must be >= 0")
        ordered = tuple(sorted(self.elements, key=lambda e: -e.amplitude))
        object.__setattr__(self, "elements", ordered)

    @property
    def dc(self) -> float:
        """Total DC level: fit offset plus the mean of element offsets."""
        if not self.elements:
            return self.offset
        return self.offset + sum(e.offset for e in self.elements) / len(self.elements)


def reconstruct_signal(fit: PhaseFit, times) -> np.ndarray:
    """Evaluate sum_k a_k*sin(2*pi*f_k*t + phi_k) + mean offset pointwise."""
    t = np.asarray(times, dtype=float)
    out = np.full(t.shape, fit.dc)
    for el in fit.elements:
        out = out + el.amplitude * np.sin(2.0 * math.pi * el.frequency * t + el.phase)
    return out


def _solve_joint(signal, times, freqs):
    """Least squares of signal on sin/cos pairs at freqs plus a constant column."""
    columns = [np.ones_like(times)]
    for f in freqs:
        columns.append(np.sin(2.0 * math.pi * f * times))
        columns.append(np.cos(2.0 * math.pi * f * times))
    design = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(design, signal, rcond=None)
    offset = float(coef[0])
    elements = []
    for k, f in enumerate(freqs):
        a_sin, a_cos = coef[1 + 2 * k], coef[2 + 2 * k]
        amplitude = math.hypot(a_sin, a_cos)
        phase = math.atan2(a_cos, a_sin) if amplitude > 0 else 0.0
        elements.append((f, amplitude, wrap_phase(phase)))
    residual = signal - design @ coef
    return offset, elements, float(np.sqrt(np.mean(residual**2)))


def _refine_frequency(residual, times, f_init, bin_width):
    """Search f over a +/-1 bin grid at 1/16-bin steps for the best single-component fit."""
    best_f, best_err = f_init, math.inf
    for j in range(-16, 17):
        f = f_init + j * bin_width / 16.0
        if f <= 0:
            continue
        _, _, err = _solve_joint(residual, times, [f])
        if err < best_err:
            best_f, best_err = f, err
    return best_f


def fit_cyclic_elements(signal, sample_rate: float, k_max: int) -> PhaseFit:
    """Fit up to k_max cyclic elements to a uniformly sampled scalar series.

    ``sample_rate`` is in samples per beat.  Elements whose fitted amplitude
    falls below 1e-6 of the signal scale are dropped, so a constant signal
    yields zero elements and a pure offset.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or x.size < 8:
        raise ValueError(f"signal must be 1-D with at least 8 samples, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    if not sample_rate > 0:
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")
    if not 0 <= k_max <= 8:
        raise ValueError(f"k_max must be in [0, 8], got {k_max}")

    n = x.size
    times = np.arange(n, dtype=float) / float(sample_rate)
    bin_width = float(sample_rate) / n
    scale = max(float(np.sqrt(np.mean(x**2))), float(np.ptp(x)))
    threshold = 1e-6 * scale

    # Greedy stage: peak pick + per-element frequency refinement on the residual.
    # The frequency sequence depends only on the signal, never on k_max, which
    # makes residual_rms monotone non-increasing in k_max by construction.
    freqs: list[float] = []
    residual = x - float(np.mean(x))
    for _ in range(k_max):
        spectrum = np.abs(np.fft.rfft(residual))
        if spectrum.size <= 1:
            break
        peak_bin = int(np.argmax(spectrum[1:])) + 1
        peak_amplitude = 2.0 * spectrum[peak_bin] / n
        if peak_amplitude <= threshold:
            break
        f = _refine_frequency(residual, times, peak_bin * bin_width, bin_width)
        offset_r, elements_r, _ = _solve_joint(residual, times, [f])
        f_r, a_r, phi_r = elements_r[0]
        residual = residual - (offset_r + a_r * np.sin(2.0 * math.pi * f_r * times + phi_r))
        freqs.append(f)

    offset, raw_elements, _ = _solve_joint(x, times, freqs)
    elements = tuple(
        CyclicElement(f, a, phi) for f, a, phi in raw_elements if a > threshold
    )
    fit = PhaseFit(elements=elements, offset=offset, residual_rms=0.0)
    final_rms = float(np.sqrt(np.mean((x - reconstruct_signal(fit, times)) ** 2)))
    return PhaseFit(elements=elements, offset=offset, residual_rms=final_rms)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _match_elements(fit_a: PhaseFit, fit_b: PhaseFit):
    """Greedy pairing by frequency proximity; returns (pairs, only_a, only_b)."""
    candidates = sorted(
        ((abs(ea.frequency - eb.frequency), i, j) for i, ea in enumerate(fit_a.elements)
         for j, eb in enumerate(fit_b.elements)),
        key=lambda item: (item[0], item[1], item[2]),
    )
    used_a: set[int] = set()
    used_b: set[int] = set()
    pairs = []
    for _, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        pairs.append((fit_a.elements[i], fit_b.elements[j]))
        used_a.add(i)
        used_b.add(j)
    only_a = [e for i, e in enumerate(fit_a.elements) if i not in used_a]
    only_b = [e for j, e in enumerate(fit_b.elements) if j not in used_b]
    return pairs, only_a, only_b


def blend_transition(fit_a: PhaseFit, fit_b: PhaseFit, seam_time: float, blend_width: float):
    """Return a callable time series blending fit_a into fit_b around seam_time.

    Outside [seam - width/2, seam + width/2] the output is exactly the pure
    reconstruction of the corresponding fit.  Inside, matched elements (paired
    greedily by frequency proximity) interpolate amplitude and instantaneous
    phase under a smoothstep weight; the incoming element's phase is pre-shifted
    by whole cycles so the pair agrees in instantaneous phase at the seam, which
    keeps the output C0 everywhere.  Unmatched elements fade by amplitude ramp.
    """
    if not blend_width > 0:
        raise ValueError(f"blend_width must be positive, got {blend_width}")
    half = blend_width / 2.0
    pairs, only_a, only_b = _match_elements(fit_a, fit_b)
    two_pi = 2.0 * math.pi
    shifts = [
        two_pi * round((ea.instantaneous_phase(seam_time) - eb.instantaneous_phase(seam_time)) / two_pi)
        for ea, eb in pairs
    ]

    def evaluate(times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.empty_like(t)
        before = t <= seam_time - half
        after = t >= seam_time + half
        inside = ~(before | after)
        out[before] = reconstruct_signal(fit_a, t[before])
        out[after] = reconstruct_signal(fit_b, t[after])
        if np.any(inside):
            ti = t[inside]
            w = _smoothstep((ti - (seam_time - half)) / blend_width)
            acc = (1.0 - w) * fit_a.dc + w * fit_b.dc
            for (ea, eb), shift in zip(pairs, shifts):
                theta_a = two_pi * ea.frequency * ti + ea.phase
                theta_b = two_pi * eb.frequency * ti + eb.phase + shift
                amplitude = (1.0 - w) * ea.amplitude + w * eb.amplitude
                acc = acc + amplitude * np.sin((1.0 - w) * theta_a + w * theta_b)
            for ea in only_a:
                acc = acc + (1.0 - w) * ea.amplitude * np.sin(two_pi * ea.frequency * ti + ea.phase)
            for eb in only_b:
                acc = acc + w * eb.amplitude * np.sin(two_pi * eb.frequency * ti + eb.phase)
            out[inside] = acc
        return out[0] if scalar else out

    return evaluate

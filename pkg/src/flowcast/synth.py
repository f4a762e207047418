"""Synthetic flow groups with recurring peak-rise structure.

Each flow repeats a burst cycle: an idle gap, a rising phase whose load
climbs linearly to the peak level, and a body that holds near the peak.
A periodic impulse pattern (period ``impulse_period_s``) modulates the
envelope; per-flow seeded jitter perturbs impulse timing and amplitude
so flows within a group are similar but not identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadTemplate
from .trace_io import FlowKey, FlowTrace, Protocol


@dataclass(frozen=True)
class BurstTemplate:
    rise_duration_s: float
    body_duration_s: float
    peak_kbit: float
    impulse_period_s: float
    impulse_jitter: float = 0.0
    amplitude_jitter: float = 0.0
    inter_burst_gap_s: float = 1.0
    rise_shape: str = "linear"  # or "exponential", for robustness checks

    def __post_init__(self):
        for name in ("rise_duration_s", "body_duration_s", "peak_kbit",
                     "impulse_period_s", "inter_burst_gap_s"):
            if not getattr(self, name) > 0:
                raise BadTemplate(f"{name} must be positive")
        for name in ("impulse_jitter", "amplitude_jitter"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise BadTemplate(f"{name} must lie in [0, 1)")
        if self.rise_shape not in ("linear", "exponential"):
            raise BadTemplate(f"unknown rise_shape {self.rise_shape!r}")


def _envelope(template: BurstTemplate, duration_s: float, t_s: float) -> np.ndarray:
    """Peak envelope: 0 in gaps, ramp during rises, peak_kbit during bodies."""
    n = int(round(duration_s / t_s))
    env = np.zeros(n)
    gap = int(round(template.inter_burst_gap_s / t_s))
    rise = int(round(template.rise_duration_s / t_s))
    body = int(round(template.body_duration_s / t_s))
    if template.rise_shape == "linear":
        ramp = template.peak_kbit * (np.arange(1, rise + 1) / rise)
    else:
        ramp = template.peak_kbit * (np.expm1(3.0 * np.arange(1, rise + 1) / rise)
                                     / np.expm1(3.0))
    pos = gap
    while pos < n:
        r_end = min(pos + rise, n)
        env[pos:r_end] = ramp[:r_end - pos]
        b_end = min(pos + rise + body, n)
        env[r_end:b_end] = template.peak_kbit
        pos = b_end + gap
    return env


def _impulse_bins(template: BurstTemplate, n: int, t_s: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Bin indices carrying an impulse; timing jittered per impulse."""
    period = template.impulse_period_s
    count = int(math.floor((n * t_s) / period)) + 1
    times = np.arange(count) * period
    if template.impulse_jitter > 0:
        times = times + rng.uniform(-template.impulse_jitter * period,
                                    template.impulse_jitter * period, size=count)
    bins = np.round(times / t_s).astype(int)
    return np.unique(bins[(bins >= 0) & (bins < n)])


def generate_flow(template: BurstTemplate, duration_s: float, t_s: float,
                  rng: np.random.Generator) -> np.ndarray:
    env = _envelope(template, duration_s, t_s)
    aj = template.amplitude_jitter
    samples = env * (1.0 - aj)
    bins = _impulse_bins(template, env.size, t_s, rng)
    heights = 1.0 + aj * rng.uniform(-1.0, 1.0, size=bins.size)
    samples[bins] = env[bins] * heights
    return samples


def generate_group(template: BurstTemplate, n_flows: int, duration_s: float,
                   sample_interval_s: float, seed: int,
                   group_id: int = 0) -> list:
    """n_flows seeded variations of one template, as FlowTraces.

    The same seed reproduces byte-identical flows; flows differ only in
    their jitter streams (and their synthetic socket endpoints).
    """
    if n_flows < 2:
        raise ValueError("n_flows must be >= 2")
    if template.rise_duration_s > duration_s:
        raise BadTemplate("rise_duration_s exceeds the flow duration")
    children = np.random.SeedSequence(seed).spawn(n_flows)
    flows = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        samples = generate_flow(template, duration_s, sample_interval_s, rng)
        key = FlowKey(src_addr=f"10.{group_id}.0.{i + 1}", src_port=5000 + i,
                      dst_addr=f"10.{group_id}.1.1", dst_port=80,
                      protocol=Protocol.TCP)
        flows.append(FlowTrace(key=key, start_time=0.0,
                               sample_interval_s=sample_interval_s,
                               samples=samples))
    return flows


def default_templates(n_groups: int, peak_kbit: float = 100.0) -> list:
    """A spread of burst geometries, one template per group.

    Gaps are kept long relative to the burst so flows are mostly idle,
    like the recurring connections the predictor targets.
    """
    templates = []
    for g in range(n_groups):
        templates.append(BurstTemplate(
            rise_duration_s=0.4 + 0.05 * (g % 5),
            body_duration_s=0.5 + 0.1 * (g % 3),
            peak_kbit=peak_kbit * (1.0 + 0.5 * g),
            # keep impulse periods well below the Nyquist rate of the
            # default 10 ms sampling so jitter cannot flip coefficient signs
            impulse_period_s=0.03 + 0.01 * (g % 4),
            impulse_jitter=0.1,
            amplitude_jitter=0.1,
            inter_burst_gap_s=1.8 + 0.15 * (g % 4),
        ))
    return templates

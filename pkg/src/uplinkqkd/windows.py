"""Timing-window analysis: folding, background error model, optimization.

A window of width W centered on the pulse arrival keeps the fraction of
signal detections given by the Gaussian jitter mass inside W while
admitting background at W * r * C_bkgd erroneous-candidate counts per
second.  Sweeping W trades raw rate against QBER; the secure rate has an
interior maximum whenever background is present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .keyrate import (
    ProtocolParams,
    decoy_bounds,
    model_observables,
    secure_key_rate,
)
from .photonics import (
    CLASS_SIGNAL,
    DetectorConfig,
    PhaseWindow,
    PulseSchedule,
    observables_from_tallies,
    tally,
)
from .timetags import TimetagStream

DEFAULT_GRID_MIN = 20e-12
DEFAULT_GRID_POINTS = 50


@dataclass(frozen=True)
class BackgroundModel:
    """Total background + dark count rate and the laser repetition rate."""

    rate_total: float
    rep_rate: float

    def __post_init__(self) -> None:
        if self.rate_total < 0:
            raise ParameterError(f"rate_total must be >= 0, got {self.rate_total}")
        if not self.rep_rate > 0:
            raise ParameterError(f"rep_rate must be > 0, got {self.rep_rate}")


@dataclass(eq=False)
class WindowSweep:
    """Rates versus window width, and the secure-rate optimum."""

    widths: np.ndarray
    raw_rate_cps: np.ndarray
    qber: np.ndarray
    secure_rate_bps: np.ndarray
    optimal_width: float
    optimal_index: int
    degenerate: bool = False


def background_error_count(width: float, bg: BackgroundModel) -> float:
    """Erroneous background counts per second admitted by a window of width
    ``width``: W * r * C_bkgd.  (Half of these land on the correct bit on
    average; this counts included background events.)"""
    if width < 0 or width > 1.0 / bg.rep_rate * (1 + 1e-9):
        raise ParameterError(
            f"width must be in [0, 1/rep_rate], got {width} (period {1.0 / bg.rep_rate})"
        )
    return width * bg.rep_rate * bg.rate_total


def window_acceptance(width: float, jitter_sigma: float) -> float:
    """Fraction of the Gaussian jitter kernel inside a centered window."""
    if width < 0:
        raise ParameterError(f"width must be >= 0, got {width}")
    if jitter_sigma <= 0:
        return 1.0 if width > 0 else 0.0
    return math.erf(width / (2.0 * math.sqrt(2.0) * jitter_sigma))


def default_width_grid(period: float, n_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Logarithmic width grid from 20 ps up to the full period."""
    if not period > DEFAULT_GRID_MIN:
        raise ParameterError("period must exceed the 20 ps grid floor")
    return np.geomspace(DEFAULT_GRID_MIN, period, n_points)


def closed_form_point(
    params: ProtocolParams,
    loss_db: float,
    bg: BackgroundModel,
    jitter_sigma: float,
    width: float,
) -> tuple[float, float, float]:
    """(raw rate cps, QBER, secure rate bps) for one window width.

    Total transmittance is 10^(-loss/10); the in-window background yield
    per pulse is rate_total * W; signal acceptance is the jitter mass.
    """
    eta = 10.0 ** (-loss_db / 10.0)
    acc = window_acceptance(width, jitter_sigma)
    y0w = min(1.0, bg.rate_total * width)
    obs = model_observables(params, eta, y0w, acceptance=acc)
    bounds = decoy_bounds(params, obs)
    rate_pp = secure_key_rate(params, obs, bounds)
    raw_cps = params.clock_rate * params.p_signal * obs.Q_mu
    return raw_cps, obs.E_mu, rate_pp * params.clock_rate


def fold_histogram(
    stream: TimetagStream,
    period: float,
    bin_width: float,
    section_length: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-section histograms of detection time modulo the pulse period.

    Returns (section_starts, counts[n_sections, n_bins], bin_edges); the
    actual bin width is period / round(period / bin_width).
    """
    if not 0 < bin_width <= period:
        raise ParameterError("need 0 < bin_width <= period")
    if not section_length > 0:
        raise ParameterError("section_length must be > 0")
    n_bins = max(1, int(round(period / bin_width)))
    times = stream.times()
    if len(times) == 0:
        return np.zeros(0), np.zeros((0, n_bins), dtype=np.int64), np.linspace(0, period, n_bins + 1)
    t0 = float(times[0])
    sections = np.floor((times - t0) / section_length).astype(np.int64)
    n_sections = int(sections.max()) + 1
    phase = np.mod(times, period)
    bins = np.minimum((phase / (period / n_bins)).astype(np.int64), n_bins - 1)
    counts = np.zeros((n_sections, n_bins), dtype=np.int64)
    np.add.at(counts, (sections, bins), 1)
    starts = t0 + np.arange(n_sections) * section_length
    return starts, counts, np.linspace(0.0, period, n_bins + 1)


def peak_centroid(stream: TimetagStream, period: float, n_bins: int | None = None) -> float:
    """Phase (seconds in [0, period)) of the folded coincidence peak."""
    times = stream.times()
    if len(times) == 0:
        return 0.0
    if n_bins is None:
        n_bins = max(16, int(round(period / stream.tick_resolution)))
    phase = np.mod(times, period)
    counts, edges = np.histogram(phase, bins=n_bins, range=(0.0, period))
    peak = int(np.argmax(counts))
    ref = (edges[peak] + edges[peak + 1]) / 2.0
    d = np.mod(phase - ref + period / 2.0, period) - period / 2.0
    near = np.abs(d) <= period / 4.0
    if not np.any(near):
        return ref % period
    return float((ref + np.mean(d[near])) % period)


def sweep_and_optimize(
    subject: float | TimetagStream,
    widths: np.ndarray | None,
    params: ProtocolParams,
    bg: BackgroundModel,
    *,
    jitter_sigma: float | None = None,
    schedule: PulseSchedule | None = None,
    det: DetectorConfig | None = None,
    center: float | None = None,
) -> WindowSweep:
    """Sweep window widths and return the secure-rate optimum.

    ``subject`` is either a total loss in dB (closed-form sweep, requires
    ``jitter_sigma``) or an aligned TimetagStream (Monte Carlo sweep,
    requires ``schedule``; the window centers on the folded peak centroid
    unless ``center`` is given).  Ties break toward the smaller width; an
    all-zero sweep returns the smallest width flagged degenerate.
    """
    period = 1.0 / bg.rep_rate
    if widths is None:
        widths = default_width_grid(period)
    widths = np.asarray(widths, dtype=np.float64)
    if len(widths) == 0:
        raise ParameterError("widths must be non-empty")
    if np.any(widths <= 0) or np.any(widths > period * (1 + 1e-9)):
        raise ParameterError("widths must be positive and at most one pulse period")
    widths = np.sort(widths)

    raw = np.zeros(len(widths))
    qber = np.zeros(len(widths))
    secure = np.zeros(len(widths))

    if isinstance(subject, TimetagStream):
        if schedule is None:
            raise ParameterError("Monte Carlo sweep needs the pulse schedule")
        res = subject.tick_resolution
        period_s = schedule.config.pulse_period_ticks * res
        duration = schedule.n_pulses * period_s
        if center is None:
            center = peak_centroid(subject, period_s)
        for i, w in enumerate(widths):
            window = PhaseWindow(period=period_s, width=min(w, period_s), center=center)
            counts = tally(subject, schedule, window)
            obs = observables_from_tallies(counts, params)
            bounds = decoy_bounds(params, obs)
            raw[i] = counts.detected[CLASS_SIGNAL] / duration
            qber[i] = obs.E_mu
            secure[i] = secure_key_rate(params, obs, bounds) * params.clock_rate
    else:
        if jitter_sigma is None:
            raise ParameterError("closed-form sweep needs jitter_sigma")
        for i, w in enumerate(widths):
            raw[i], qber[i], secure[i] = closed_form_point(
                params, float(subject), bg, jitter_sigma, float(w)
            )

    degenerate = bool(np.all(secure <= 0.0))
    best = 0 if degenerate else int(np.argmax(secure))
    return WindowSweep(
        widths=widths,
        raw_rate_cps=raw,
        qber=qber,
        secure_rate_bps=secure,
        optimal_width=float(widths[best]),
        optimal_index=best,
        degenerate=degenerate,
    )


def optimal_window(
    params: ProtocolParams,
    loss_db: float,
    bg: BackgroundModel,
    jitter_sigma: float,
    widths: np.ndarray | None = None,
) -> float:
    """Secure-rate-optimal window width at one loss (closed form)."""
    sweep = sweep_and_optimize(loss_db, widths, params, bg, jitter_sigma=jitter_sigma)
    return sweep.optimal_width


def sweep_rows(sweep: WindowSweep) -> list[tuple]:
    """(width_ns, raw_rate_cps, qber, secure_rate_bps) rows for CSV."""
    return [
        (w * 1e9, r, q, s)
        for w, r, q, s in zip(
            sweep.widths, sweep.raw_rate_cps, sweep.qber, sweep.secure_rate_bps
        )
    ]

"""Seeded Monte Carlo of the physical layer: pulses, channel, detector.

Pulse trains are generated lazily in fixed-size blocks, each block drawing
from an independent substream keyed by (master seed, block index).  That
keeps gigapulse runs in bounded memory and makes results invariant to how
blocks are grouped across workers.  Photon-level transport collapses to
Poisson thinning: detected photons per pulse ~ Poisson(m * eta * efficiency),
statistically identical to per-photon Bernoulli loss and orders of magnitude
faster at 50+ dB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParameterError
from .keyrate import ChannelObservables, ProtocolParams
from .timetags import (
    TRUTH_BACKGROUND,
    TRUTH_DARK,
    TRUTH_DECOY,
    TRUTH_SIGNAL,
    TimetagStream,
)

CLASS_SIGNAL, CLASS_DECOY, CLASS_VACUUM = 0, 1, 2

BLOCK_PULSES = 1 << 20
PHOTON_NUMBER_CAP = 20

# Substream tags so classes, bits, transport and noise never share a stream.
_TAG_PATTERN, _TAG_CLASSES, _TAG_BITS, _TAG_TRANSPORT, _TAG_NOISE = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class DetectorConfig:
    """Receiver-side detection parameters.

    Rates are counts per second for the whole receiver; ``efficiency``
    multiplies the channel transmittance per photon; ``tick_resolution`` is
    the timetagger quantization step.
    """

    efficiency: float = 0.48
    dark_rate: float = 20.0
    background_rate: float = 120.0
    jitter_sigma: float = 30e-12
    dead_time: float = 70e-9
    tick_resolution: float = 156e-12

    def __post_init__(self) -> None:
        if not 0.0 <= self.efficiency <= 1.0:
            raise ParameterError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if self.dark_rate < 0 or self.background_rate < 0:
            raise ParameterError("dark_rate and background_rate must be >= 0")
        if self.jitter_sigma < 0:
            raise ParameterError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")
        if self.dead_time < 0:
            raise ParameterError(f"dead_time must be >= 0, got {self.dead_time}")
        if not self.tick_resolution > 0:
            raise ParameterError(f"tick_resolution must be > 0, got {self.tick_resolution}")

    @property
    def noise_rate(self) -> float:
        """Total dark + stray-light count rate in Hz."""
        return self.dark_rate + self.background_rate

    def replace(self, **kw) -> "DetectorConfig":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(frozen=True)
class SourceConfig:
    """Transmitter-side pulse train parameters.

    ``pulse_period_ticks`` is the laser period expressed in timetag ticks
    (need not be an integer).  ``pattern_mode`` selects either independently
    seeded pulse classes or a fixed 256-entry pseudorandom pattern that
    repeats, matching the characterization mode of the hardware.
    """

    protocol: ProtocolParams
    pattern_mode: str = "seeded_random"
    pulse_period_ticks: float = 13e-9 / 156e-12
    source_jitter: float = 300e-12

    def __post_init__(self) -> None:
        if self.pattern_mode not in ("seeded_random", "repeating_256"):
            raise ParameterError(
                f"pattern_mode must be 'seeded_random' or 'repeating_256', got {self.pattern_mode!r}"
            )
        if not self.pulse_period_ticks > 0:
            raise ParameterError(
                f"pulse_period_ticks must be > 0, got {self.pulse_period_ticks}"
            )
        if self.source_jitter < 0:
            raise ParameterError(f"source_jitter must be >= 0, got {self.source_jitter}")

    @classmethod
    def for_clock(
        cls,
        protocol: ProtocolParams,
        tick_resolution: float,
        pattern_mode: str = "seeded_random",
        source_jitter: float = 300e-12,
    ) -> "SourceConfig":
        """Source whose pulse period matches the protocol clock rate."""
        return cls(
            protocol=protocol,
            pattern_mode=pattern_mode,
            pulse_period_ticks=1.0 / (protocol.clock_rate * tick_resolution),
            source_jitter=source_jitter,
        )


@dataclass(eq=False)
class TallyCounts:
    """Per-class sent/detected/error counts, plus an optional oracle
    per-photon-number histogram (index clipped at PHOTON_NUMBER_CAP)."""

    sent: np.ndarray
    detected: np.ndarray
    errors: np.ndarray
    sent_by_n: np.ndarray | None = None
    detected_by_n: np.ndarray | None = None
    errors_by_n: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.sent = np.asarray(self.sent, dtype=np.int64)
        self.detected = np.asarray(self.detected, dtype=np.int64)
        self.errors = np.asarray(self.errors, dtype=np.int64)
        if np.any(self.errors > self.detected):
            raise ParameterError("error counts cannot exceed detected counts")

    @classmethod
    def zeros(cls, oracle: bool = False) -> "TallyCounts":
        n = PHOTON_NUMBER_CAP + 1
        return cls(
            sent=np.zeros(3, dtype=np.int64),
            detected=np.zeros(3, dtype=np.int64),
            errors=np.zeros(3, dtype=np.int64),
            sent_by_n=np.zeros(n, dtype=np.int64) if oracle else None,
            detected_by_n=np.zeros(n, dtype=np.int64) if oracle else None,
            errors_by_n=np.zeros(n, dtype=np.int64) if oracle else None,
        )


@dataclass(eq=False)
class PulseSchedule:
    """Lazy pulse train: class, bit and nominal emission tick per pulse.

    Blocks of ``block_pulses`` pulses regenerate deterministically from the
    master seed, so arbitrarily long trains never need materializing.
    """

    config: SourceConfig
    n_pulses: int
    seed: int
    block_pulses: int = BLOCK_PULSES

    def __post_init__(self) -> None:
        if self.n_pulses <= 0:
            raise ParameterError(f"n_pulses must be > 0, got {self.n_pulses}")
        if self.block_pulses <= 0:
            raise ParameterError("block_pulses must be > 0")

    @cached_property
    def _pattern(self) -> tuple[np.ndarray, np.ndarray] | None:
        if self.config.pattern_mode != "repeating_256":
            return None
        rng = np.random.default_rng([self.seed, _TAG_PATTERN])
        classes = self._draw_classes(rng, 256)
        bits = rng.integers(0, 2, size=256, dtype=np.uint8)
        return classes, bits

    def _draw_classes(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cum = np.cumsum(self.config.protocol.class_probabilities)
        cum[-1] = 1.0
        return np.searchsorted(cum, rng.random(n), side="right").astype(np.uint8)

    @property
    def n_blocks(self) -> int:
        return -(-self.n_pulses // self.block_pulses)

    def block_range(self, block: int) -> tuple[int, int]:
        start = block * self.block_pulses
        return start, min(start + self.block_pulses, self.n_pulses)

    def classes_for_block(self, block: int) -> np.ndarray:
        start, stop = self.block_range(block)
        if self._pattern is not None:
            idx = np.arange(start, stop, dtype=np.int64) % 256
            return self._pattern[0][idx]
        rng = np.random.default_rng([self.seed, _TAG_CLASSES, block])
        return self._draw_classes(rng, stop - start)

    def bits_for_block(self, block: int) -> np.ndarray:
        start, stop = self.block_range(block)
        if self._pattern is not None:
            idx = np.arange(start, stop, dtype=np.int64) % 256
            return self._pattern[1][idx]
        rng = np.random.default_rng([self.seed, _TAG_BITS, block])
        return rng.integers(0, 2, size=stop - start, dtype=np.uint8)

    def class_of(self, pulse_idx: np.ndarray) -> np.ndarray:
        if self._pattern is not None:
            return self._pattern[0][np.asarray(pulse_idx, dtype=np.int64) % 256]
        return self._gather(pulse_idx, self.classes_for_block)

    def bit_of(self, pulse_idx: np.ndarray) -> np.ndarray:
        if self._pattern is not None:
            return self._pattern[1][np.asarray(pulse_idx, dtype=np.int64) % 256]
        return self._gather(pulse_idx, self.bits_for_block)

    def _gather(self, pulse_idx: np.ndarray, block_fn) -> np.ndarray:
        pulse_idx = np.asarray(pulse_idx, dtype=np.int64)
        out = np.empty(len(pulse_idx), dtype=np.uint8)
        blocks = pulse_idx // self.block_pulses
        for b in np.unique(blocks):
            sel = blocks == b
            start, _ = self.block_range(int(b))
            out[sel] = block_fn(int(b))[pulse_idx[sel] - start]
        return out

    @cached_property
    def sent_counts(self) -> np.ndarray:
        """Pulses emitted per class over the whole train."""
        if self._pattern is not None:
            classes = self._pattern[0]
            full, rem = divmod(self.n_pulses, 256)
            counts = np.bincount(classes, minlength=3).astype(np.int64) * full
            if rem:
                counts += np.bincount(classes[:rem], minlength=3).astype(np.int64)
            return counts
        counts = np.zeros(3, dtype=np.int64)
        for b in range(self.n_blocks):
            counts += np.bincount(self.classes_for_block(b), minlength=3)
        return counts


def generate_pulse_train(
    cfg: SourceConfig, n_pulses: int, seed: int, block_pulses: int = BLOCK_PULSES
) -> PulseSchedule:
    """Deterministic pulse schedule for ``n_pulses`` pulses."""
    return PulseSchedule(config=cfg, n_pulses=n_pulses, seed=seed, block_pulses=block_pulses)


@dataclass(frozen=True)
class PhaseWindow:
    """Acceptance window of full width ``width`` seconds, centered at phase
    ``center`` seconds within each pulse period."""

    period: float
    width: float
    center: float = 0.0

    def __post_init__(self) -> None:
        if not self.period > 0:
            raise ParameterError(f"period must be > 0, got {self.period}")
        if not 0.0 <= self.width <= self.period * (1 + 1e-12):
            raise ParameterError(
                f"window width must be in [0, period], got {self.width} (period {self.period})"
            )

    @classmethod
    def full(cls, period: float) -> "PhaseWindow":
        return cls(period=period, width=period)

    def fold(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pulse index and phase offset (seconds, in [-period/2, period/2])."""
        shifted = np.asarray(times, dtype=np.float64) - self.center
        idx = np.rint(shifted / self.period).astype(np.int64)
        return idx, shifted - idx * self.period

    def contains(self, times: np.ndarray) -> np.ndarray:
        _, off = self.fold(times)
        return np.abs(off) <= self.width / 2.0


def eta_from_total_loss(loss_db: float, det: DetectorConfig) -> float:
    """Channel transmittance such that channel x detector efficiency equals
    the requested total loss."""
    if loss_db < 0:
        raise ParameterError(f"loss_db must be >= 0, got {loss_db}")
    if det.efficiency <= 0:
        raise ParameterError("detector efficiency must be > 0 to invert a total loss")
    eta = 10.0 ** (-loss_db / 10.0) / det.efficiency
    if eta > 1.0:
        raise ParameterError(f"total loss {loss_db} dB is below the detector's own loss")
    return eta


def _dead_time_filter(ticks: np.ndarray, dead_ticks: float) -> np.ndarray:
    """Indices of events surviving greedy dead-time removal."""
    keep = np.empty(len(ticks), dtype=bool)
    last = None
    for i, t in enumerate(ticks):
        if last is None or t - last >= dead_ticks:
            keep[i] = True
            last = t
        else:
            keep[i] = False
    return np.nonzero(keep)[0]


def _pulse_block_events(
    schedule: PulseSchedule,
    block: int,
    p_click: float,
    jitter: float,
    res: float,
    seed: int,
    oracle: bool,
) -> tuple[dict | None, np.ndarray | None]:
    """Detection events caused by one block of pulses.

    Returns (events, photon_numbers_for_block).  Substream keyed by
    (seed, transport tag, block) only, so blocks can run in any order.
    """
    params = schedule.config.protocol
    mus = np.asarray(params.mean_photon_numbers)
    period_s = schedule.config.pulse_period_ticks * res
    e_d = params.e_detector

    start, stop = schedule.block_range(block)
    rng = np.random.default_rng([seed, _TAG_TRANSPORT, block])
    classes = schedule.classes_for_block(block)
    pn = None
    if oracle:
        n_emitted = rng.poisson(mus[classes]).astype(np.int64)
        k = (
            rng.binomial(n_emitted, p_click)
            if p_click > 0
            else np.zeros_like(n_emitted)
        )
        pn = np.minimum(n_emitted, PHOTON_NUMBER_CAP).astype(np.int16)
    else:
        k = rng.poisson(mus[classes] * p_click).astype(np.int64)

    hit = np.nonzero(k)[0]
    if len(hit) == 0:
        return None, pn
    pulse_idx = start + hit
    t = pulse_idx * period_s
    if jitter > 0:
        t = t + rng.normal(0.0, jitter, size=len(hit))
    k_hit = k[hit]
    wrong = rng.binomial(k_hit, e_d) if e_d > 0 else np.zeros_like(k_hit)
    all_wrong = (wrong == k_hit) & (k_hit > 0)
    mixed = (wrong > 0) & ~all_wrong
    flip = all_wrong.copy()
    if np.any(mixed):
        flip[mixed] = rng.random(int(mixed.sum())) < 0.5
    bits = schedule.bits_for_block(block)[hit] ^ flip.astype(np.uint8)
    events = {
        "ticks": np.rint(t / res).astype(np.int64),
        "channel": bits,
        "truth": np.where(
            classes[hit] == CLASS_DECOY, TRUTH_DECOY, TRUTH_SIGNAL
        ).astype(np.uint8),
        "pulse_index": pulse_idx,
    }
    return events, pn


def _noise_block_events(
    block: int, block_span: float, duration: float, det: DetectorConfig, seed: int
) -> dict | None:
    """Dark + stray-light events over one time block (homogeneous Poisson)."""
    t0 = block * block_span
    t1 = min(duration, t0 + block_span)
    if t1 <= t0 or det.noise_rate <= 0:
        return None
    rng = np.random.default_rng([seed, _TAG_NOISE, block])
    n_noise = rng.poisson(det.noise_rate * (t1 - t0))
    if n_noise == 0:
        return None
    t = np.sort(t0 + rng.random(n_noise) * (t1 - t0))
    dark_frac = det.dark_rate / det.noise_rate
    return {
        "ticks": np.rint(t / det.tick_resolution).astype(np.int64),
        "channel": rng.integers(0, 2, size=n_noise, dtype=np.uint8),
        "truth": np.where(
            rng.random(n_noise) < dark_frac, TRUTH_DARK, TRUTH_BACKGROUND
        ).astype(np.uint8),
        "pulse_index": np.full(n_noise, -1, dtype=np.int64),
    }


def _assemble_stream(
    pulse_parts: dict[int, dict],
    noise_parts: dict[int, dict],
    det: DetectorConfig,
) -> TimetagStream:
    """Merge per-block events in canonical order, sort, apply dead time."""
    ordered = [pulse_parts[b] for b in sorted(pulse_parts)] + [
        noise_parts[b] for b in sorted(noise_parts)
    ]
    if ordered:
        ticks = np.concatenate([p["ticks"] for p in ordered])
        channel = np.concatenate([p["channel"] for p in ordered])
        truth = np.concatenate([p["truth"] for p in ordered])
        pulse_index = np.concatenate([p["pulse_index"] for p in ordered])
    else:
        ticks = np.empty(0, dtype=np.int64)
        channel = np.empty(0, dtype=np.uint8)
        truth = np.empty(0, dtype=np.uint8)
        pulse_index = np.empty(0, dtype=np.int64)

    np.clip(ticks, 0, None, out=ticks)
    order = np.argsort(ticks, kind="stable")
    ticks, channel, truth, pulse_index = (
        ticks[order], channel[order], truth[order], pulse_index[order],
    )
    if det.dead_time > 0 and len(ticks) > 1:
        keep = _dead_time_filter(ticks, det.dead_time / det.tick_resolution)
        ticks, channel, truth, pulse_index = (
            ticks[keep], channel[keep], truth[keep], pulse_index[keep],
        )
    return TimetagStream(
        ticks=ticks,
        channel=channel,
        truth=truth,
        tick_resolution=det.tick_resolution,
        pulse_index=pulse_index,
    )


def simulate_detections(
    schedule: PulseSchedule,
    eta: float,
    det: DetectorConfig,
    duration: float | None = None,
    seed: int = 0,
    oracle: bool = False,
    n_segments: int = 1,
) -> tuple[TimetagStream, TallyCounts]:
    """Simulate transmission and detection of a pulse train.

    Per pulse of mean photon number m the detected photon count is
    Poisson(m * eta * efficiency); in oracle mode the emitted photon number
    n ~ Poisson(m) is drawn first and thinned binomially so the per-photon-
    number histogram is available.  Detection times get Gaussian jitter
    (source and detector contributions in quadrature) and quantize to the
    tick grid.  Dark and stray-light counts form a homogeneous Poisson
    process over ``duration``; dead-time filtering then removes any event
    within ``dead_time`` of an accepted one.

    Bit errors: each detected photon carries the intrinsic error probability
    independently; a pulse whose detected photons disagree reads out a
    random bit (squashing convention).  Noise events carry a random bit.

    ``n_segments`` only changes the block evaluation order (what a parallel
    driver would do); the output is bit-identical for any value.

    Returns the merged, sorted stream plus full-period window tallies.
    """
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"eta must be in [0, 1], got {eta}")
    if n_segments <= 0:
        raise ParameterError("n_segments must be > 0")
    res = det.tick_resolution
    period_s = schedule.config.pulse_period_ticks * res
    if duration is None:
        duration = schedule.n_pulses * period_s
    if duration < 0:
        raise ParameterError("duration must be >= 0")

    p_click = eta * det.efficiency
    jitter = math.hypot(schedule.config.source_jitter, det.jitter_sigma)
    photon_numbers = np.zeros(schedule.n_pulses, dtype=np.int16) if oracle else None

    block_span = schedule.block_pulses * period_s
    n_noise_blocks = max(1, math.ceil(duration / block_span)) if det.noise_rate > 0 else 0

    pulse_parts: dict[int, dict] = {}
    noise_parts: dict[int, dict] = {}
    for segment in range(n_segments):
        for block in range(segment, schedule.n_blocks, n_segments):
            events, pn = _pulse_block_events(
                schedule, block, p_click, jitter, res, seed, oracle
            )
            if pn is not None:
                start, stop = schedule.block_range(block)
                photon_numbers[start:stop] = pn
            if events is not None:
                pulse_parts[block] = events
        for block in range(segment, n_noise_blocks, n_segments):
            events = _noise_block_events(block, block_span, duration, det, seed)
            if events is not None:
                noise_parts[block] = events

    stream = _assemble_stream(pulse_parts, noise_parts, det)
    tallies = tally(stream, schedule, PhaseWindow.full(period_s), photon_numbers)
    return stream, tallies


def tally(
    stream: TimetagStream,
    schedule: PulseSchedule,
    window: PhaseWindow,
    photon_numbers: np.ndarray | None = None,
) -> TallyCounts:
    """Aggregate in-window detections per pulse class.

    Each event is assigned to its nearest pulse; a pulse counts as detected
    at most once (its earliest in-window click, matching the gain
    definition of detections per pulse sent).  Errors compare the click's
    bit value against the scheduled bit.  With ``photon_numbers`` given,
    per-photon-number sent/detected/error histograms are filled in.
    """
    counts = TallyCounts.zeros(oracle=photon_numbers is not None)
    counts.sent = schedule.sent_counts.copy()
    if photon_numbers is not None:
        counts.sent_by_n = np.bincount(
            np.clip(photon_numbers, 0, PHOTON_NUMBER_CAP),
            minlength=PHOTON_NUMBER_CAP + 1,
        ).astype(np.int64)

    if len(stream) == 0:
        return counts

    idx, offset = window.fold(stream.times())
    inside = (
        (np.abs(offset) <= window.width / 2.0)
        & (idx >= 0)
        & (idx < schedule.n_pulses)
    )
    if not np.any(inside):
        return counts
    idx_in = idx[inside]
    bit_in = stream.channel[inside]
    # First in-window click per pulse: the stream is tick-sorted and
    # np.unique keeps the first occurrence in array order.
    det_pulses, first = np.unique(idx_in, return_index=True)
    det_bits = bit_in[first]
    classes = schedule.class_of(det_pulses)
    sched_bits = schedule.bit_of(det_pulses)
    err = det_bits != sched_bits

    counts.detected = np.bincount(classes, minlength=3).astype(np.int64)
    counts.errors = np.bincount(classes[err], minlength=3).astype(np.int64)

    if photon_numbers is not None:
        n_of = np.clip(photon_numbers[det_pulses], 0, PHOTON_NUMBER_CAP)
        counts.detected_by_n = np.bincount(
            n_of, minlength=PHOTON_NUMBER_CAP + 1
        ).astype(np.int64)
        counts.errors_by_n = np.bincount(
            n_of[err], minlength=PHOTON_NUMBER_CAP + 1
        ).astype(np.int64)
    return counts


def observables_from_tallies(
    counts: TallyCounts, params: ProtocolParams
) -> ChannelObservables:
    """Convert tallies to the observables the decoy analysis consumes.

    The vacuum-class yield supplies Y0 (vacuum slots measure background
    directly).  Classes with no detections report the background error
    rate.
    """
    if counts.sent[CLASS_VACUUM] <= 0:
        raise ParameterError(
            "vacuum-class pulses are required to estimate Y0 (p_vacuum > 0)"
        )

    def ratio(c: int) -> tuple[float, float]:
        sent = counts.sent[c]
        if sent <= 0:
            return 0.0, params.e_zero
        gain = counts.detected[c] / sent
        if counts.detected[c] == 0:
            return gain, params.e_zero
        return gain, counts.errors[c] / counts.detected[c]

    q_mu, e_mu = ratio(CLASS_SIGNAL)
    q_nu, e_nu = ratio(CLASS_DECOY)
    y0 = counts.detected[CLASS_VACUUM] / counts.sent[CLASS_VACUUM]
    return ChannelObservables(
        Q_mu=q_mu,
        Q_nu=q_nu,
        E_mu=min(1.0, e_mu),
        E_nu=min(1.0, e_nu),
        Y_zero=min(1.0, y0),
        N_mu=float(counts.detected[CLASS_SIGNAL]),
        N_nu=float(counts.detected[CLASS_DECOY]),
    )


def sample_tallies(
    params: ProtocolParams,
    n_pulses: int,
    gain_per_class: np.ndarray,
    qber_per_class: np.ndarray,
    rng: np.random.Generator,
) -> TallyCounts:
    """Count-level Monte Carlo: multinomial class split, binomial detection
    and error draws.  Statistically equivalent to windowed tallies of the
    event-level simulator, and fast enough for multi-hour stability runs."""
    if n_pulses <= 0:
        raise ParameterError("n_pulses must be > 0")
    sent = rng.multinomial(n_pulses, params.class_probabilities)
    detected = rng.binomial(sent, np.clip(gain_per_class, 0.0, 1.0))
    errors = rng.binomial(detected, np.clip(qber_per_class, 0.0, 1.0))
    return TallyCounts(sent=sent, detected=detected, errors=errors)

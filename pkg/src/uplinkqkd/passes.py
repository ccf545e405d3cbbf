"""Rate-vs-loss curves, pass integration, and the loss cutoff.

Combines the closed-form window-optimized rate pipeline with loss-vs-time
profiles to produce key yield over a satellite pass, and bisects the
rate-to-zero boundary in loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BracketError, ParameterError
from .keyrate import ProtocolParams
from .linkmodel import PassProfile
from .windows import BackgroundModel, sweep_and_optimize

_LOG_FLOOR = 1e-300


@dataclass(eq=False)
class RateCurve:
    """Secure rate (bits per pulse) versus total loss, non-increasing."""

    loss_db: np.ndarray
    rate_bits_per_pulse: np.ndarray
    clock_rate: float

    def __post_init__(self) -> None:
        self.loss_db = np.asarray(self.loss_db, dtype=np.float64)
        self.rate_bits_per_pulse = np.asarray(self.rate_bits_per_pulse, dtype=np.float64)
        if len(self.loss_db) != len(self.rate_bits_per_pulse):
            raise ParameterError("loss and rate arrays must have equal length")
        if len(self.loss_db) < 1:
            raise ParameterError("rate curve needs at least one point")
        if np.any(np.diff(self.loss_db) <= 0):
            raise ParameterError("loss grid must be strictly increasing")
        if np.any(self.rate_bits_per_pulse < 0):
            raise ParameterError("rates must be non-negative")

    def rate_at(self, loss_db) -> np.ndarray:
        """Interpolated rate in bits per pulse.

        Interpolation is linear in loss-dB versus log-rate (the curve is
        near-exponential in dB); across the zero boundary it ramps linearly
        to zero.  Queries beyond the high-loss end return 0; below the
        low-loss end clamp to the first value.
        """
        loss = np.atleast_1d(np.asarray(loss_db, dtype=np.float64))
        out = np.zeros_like(loss)
        grid = self.loss_db
        rates = self.rate_bits_per_pulse

        below = loss <= grid[0]
        out[below] = rates[0]
        above = loss >= grid[-1]
        out[above] = rates[-1]

        inside = ~(below | above)
        if np.any(inside):
            x = loss[inside]
            hi = np.searchsorted(grid, x, side="right")
            lo = hi - 1
            f = (x - grid[lo]) / (grid[hi] - grid[lo])
            r_lo, r_hi = rates[lo], rates[hi]
            both_pos = (r_lo > 0) & (r_hi > 0)
            vals = np.where(
                both_pos,
                np.exp(
                    (1 - f) * np.log(np.maximum(r_lo, _LOG_FLOOR))
                    + f * np.log(np.maximum(r_hi, _LOG_FLOOR))
                ),
                (1 - f) * r_lo + f * r_hi,
            )
            out[inside] = vals
        return out if np.ndim(loss_db) else float(out[0])

    def rows(self) -> list[tuple]:
        """(loss_db, rate_bits_per_pulse, rate_bps) rows for CSV."""
        return [
            (l, r, r * self.clock_rate)
            for l, r in zip(self.loss_db, self.rate_bits_per_pulse)
        ]


def rate_vs_loss(
    params: ProtocolParams,
    bg: BackgroundModel,
    jitter_sigma: float,
    loss_grid: np.ndarray,
    widths: np.ndarray | None = None,
) -> RateCurve:
    """Window-optimized closed-form secure rate over a loss grid.

    Each grid point sweeps the acceptance window and keeps the optimum, so
    the curve reflects the temporal-filtering policy the hardware would
    run.
    """
    loss_grid = np.asarray(loss_grid, dtype=np.float64)
    if np.any(np.diff(loss_grid) <= 0):
        raise ParameterError("loss grid must be strictly increasing")
    rates = np.empty(len(loss_grid))
    for i, loss in enumerate(loss_grid):
        sweep = sweep_and_optimize(float(loss), widths, params, bg, jitter_sigma=jitter_sigma)
        rates[i] = sweep.secure_rate_bps[sweep.optimal_index] / params.clock_rate
    return RateCurve(loss_db=loss_grid, rate_bits_per_pulse=rates, clock_rate=params.clock_rate)


@dataclass(eq=False)
class PassYield:
    """Key rate over one pass and its running integral."""

    times: np.ndarray
    loss_db: np.ndarray
    rate_bps: np.ndarray
    cumulative_bits: np.ndarray
    total_bits: float

    def rows(self) -> list[tuple]:
        """(time_s, loss_db, rate_bps, cumulative_bits) rows for CSV."""
        return list(zip(self.times, self.loss_db, self.rate_bps, self.cumulative_bits))


def key_per_pass(profile: PassProfile, curve: RateCurve) -> PassYield:
    """Integrate rate(loss(t)) over a pass (trapezoidal rule).

    The rate curve extrapolates to zero beyond its high-loss end, so a
    profile entirely above cutoff integrates to zero.
    """
    if len(profile) == 0:
        raise ParameterError("pass profile is empty")
    rate_bps = curve.rate_at(profile.loss_db) * curve.clock_rate
    cumulative = np.zeros(len(profile))
    if len(profile) > 1:
        dt = np.diff(profile.times)
        increments = 0.5 * (rate_bps[1:] + rate_bps[:-1]) * dt
        cumulative[1:] = np.cumsum(increments)
    return PassYield(
        times=profile.times.copy(),
        loss_db=profile.loss_db.copy(),
        rate_bps=rate_bps,
        cumulative_bits=cumulative,
        total_bits=float(cumulative[-1]),
    )


def max_tolerable_loss(
    rate_fn,
    lo: float,
    hi: float,
    resolution: float = 0.1,
) -> float:
    """Bisect the loss where the secure rate reaches zero.

    ``rate_fn(loss_db)`` must be positive at ``lo``; returns the boundary
    to within ``resolution`` dB.  Raises BracketError when the bracket does
    not actually straddle the boundary.
    """
    if not hi > lo:
        raise ParameterError("need hi > lo")
    if not resolution > 0:
        raise ParameterError("resolution must be > 0")
    if rate_fn(lo) <= 0:
        raise BracketError(f"rate is zero at the low bracket ({lo} dB); no cutoff to find")
    if rate_fn(hi) > 0:
        raise BracketError(f"rate is still positive at the high bracket ({hi} dB)")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if rate_fn(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(eq=False)
class StabilityRun:
    """Per-second sampled rate and QBER at a fixed loss."""

    times: np.ndarray
    rate_bps: np.ndarray
    qber: np.ndarray
    mean_rate_bps: float
    mean_qber: float

    def rows(self) -> list[tuple]:
        """(time_s, rate_bps, qber) rows for CSV."""
        return list(zip(self.times, self.rate_bps, self.qber))


def stability_run(
    params: ProtocolParams,
    bg: BackgroundModel,
    jitter_sigma: float,
    loss_db: float,
    duration: float,
    seed: int,
    window_width: float | None = None,
) -> StabilityRun:
    """Simulated long collection at fixed loss, tallied per second.

    Uses count-level Monte Carlo (multinomial/binomial draws against the
    closed-form in-window gains) with the secure-rate-optimal window, the
    regime where event-level simulation would be needlessly slow.
    """
    from .keyrate import decoy_bounds, secure_key_rate
    from .photonics import observables_from_tallies, sample_tallies
    from .windows import optimal_window, window_acceptance

    if not duration > 0:
        raise ParameterError("duration must be > 0")
    if window_width is None:
        window_width = optimal_window(params, loss_db, bg, jitter_sigma)

    eta = 10.0 ** (-loss_db / 10.0)
    acc = window_acceptance(window_width, jitter_sigma)
    y0w = min(1.0, bg.rate_total * window_width)
    mus = np.asarray(params.mean_photon_numbers)
    signal = -np.expm1(-eta * mus)
    gain = np.minimum(1.0, y0w + acc * signal)
    with np.errstate(invalid="ignore", divide="ignore"):
        qber_cls = np.where(
            gain > 0,
            (params.e_zero * y0w + params.e_detector * acc * signal) / gain,
            params.e_zero,
        )

    n_seconds = int(math.ceil(duration))
    pulses_per_second = int(round(params.clock_rate))
    times = np.arange(n_seconds, dtype=np.float64)
    rates = np.zeros(n_seconds)
    qbers = np.zeros(n_seconds)
    for s in range(n_seconds):
        rng = np.random.default_rng([seed, 0x57AB, s])
        counts = sample_tallies(params, pulses_per_second, gain, qber_cls, rng)
        obs = observables_from_tallies(counts, params)
        bounds = decoy_bounds(params, obs)
        rates[s] = secure_key_rate(params, obs, bounds) * params.clock_rate
        qbers[s] = obs.E_mu
    return StabilityRun(
        times=times,
        rate_bps=rates,
        qber=qbers,
        mean_rate_bps=float(np.mean(rates)),
        mean_qber=float(np.mean(qbers)),
    )

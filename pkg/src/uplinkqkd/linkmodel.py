"""Parametric free-space link budget, pass geometry, and fading.

The budget is deliberately simple: a geometric beam-spread term driven by
an effective divergence (which absorbs turbulence), a secant airmass
scaling of the zenith atmospheric loss, and flat pointing and system
penalties.  Turbulent scintillation enters separately as mean-preserving
log-normal transmittance fading.
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
from .photonics import DetectorConfig, observables_from_tallies

EARTH_RADIUS = 6371e3
EARTH_MU = 3.986004418e14  # standard gravitational parameter, m^3/s^2
MIN_AIRMASS_ELEVATION_DEG = 10.0


@dataclass(frozen=True)
class LinkBudgetParams:
    """Inputs of the parametric uplink budget (lengths in meters, angles in
    radians, losses in dB).  ``divergence_half_angle`` is the effective
    far-field half-angle including turbulence-induced spreading."""

    wavelength: float = 532e-9
    tx_diameter: float = 0.25
    rx_diameter: float = 0.30
    divergence_half_angle: float = 12e-6
    zenith_atm_loss: float = 1.0
    pointing_loss: float = 1.0
    system_loss: float = 6.0
    altitude: float = 600e3
    earth_radius: float = EARTH_RADIUS
    min_elevation_deg: float = 10.0

    def __post_init__(self) -> None:
        for name in ("wavelength", "tx_diameter", "rx_diameter", "divergence_half_angle",
                     "altitude", "earth_radius"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("zenith_atm_loss", "pointing_loss", "system_loss"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 < self.min_elevation_deg <= 90.0:
            raise ParameterError("min_elevation_deg must be in (0, 90]")


@dataclass(eq=False)
class PassProfile:
    """Sampled loss-vs-time curve of one satellite pass."""

    times: np.ndarray
    elevations_deg: np.ndarray
    ranges_m: np.ndarray
    loss_db: np.ndarray
    max_elevation_deg: float

    def __len__(self) -> int:
        return len(self.times)

    def rows(self) -> list[tuple]:
        """(time_s, elevation_deg, range_km, loss_db) rows for CSV."""
        return [
            (t, e, r / 1e3, l)
            for t, e, r, l in zip(self.times, self.elevations_deg, self.ranges_m, self.loss_db)
        ]


@dataclass(frozen=True)
class FadingModel:
    """Mean-preserving log-normal transmittance fluctuation."""

    mean_transmittance: float
    sigma_ln: float

    def __post_init__(self) -> None:
        if not 0.0 < self.mean_transmittance <= 1.0:
            raise ParameterError(
                f"mean_transmittance must be in (0, 1], got {self.mean_transmittance}"
            )
        if self.sigma_ln < 0:
            raise ParameterError(f"sigma_ln must be >= 0, got {self.sigma_ln}")


def range_from_elevation(
    elevation_deg: float, altitude: float, earth_radius: float = EARTH_RADIUS
) -> float:
    """Slant range to a satellite at the given elevation (spherical Earth).

        R = sqrt((Re+h)^2 - Re^2 cos^2(el)) - Re sin(el)
    """
    if not 0.0 <= elevation_deg <= 90.0:
        raise ParameterError(f"elevation must be in [0, 90] deg, got {elevation_deg}")
    if not altitude > 0:
        raise ParameterError(f"altitude must be > 0, got {altitude}")
    el = math.radians(elevation_deg)
    orbit = earth_radius + altitude
    return math.sqrt(orbit * orbit - (earth_radius * math.cos(el)) ** 2) - earth_radius * math.sin(el)


def geometric_loss_db(range_m: float, params: LinkBudgetParams) -> float:
    """Beam-spread loss: the receiver aperture over the diverged beam
    diameter, clamped at 0 dB when the beam underfills the aperture."""
    beam_diameter = params.tx_diameter + 2.0 * params.divergence_half_angle * range_m
    capture = min(1.0, (params.rx_diameter / beam_diameter) ** 2)
    return -10.0 * math.log10(capture)

def total_loss(elevation_deg: float, params: LinkBudgetParams) -> float:
    """Total link loss in dB at one elevation.

    Geometric spread + zenith atmospheric loss scaled by the 1/sin airmass
    (floored at 10 degrees) + pointing + system losses.
    """
    r = range_from_elevation(elevation_deg, params.altitude, params.earth_radius)
    airmass = 1.0 / math.sin(math.radians(max(elevation_deg, MIN_AIRMASS_ELEVATION_DEG)))
    return (
        geometric_loss_db(r, params)
        + params.zenith_atm_loss * airmass
        + params.pointing_loss
        + params.system_loss
    )


def _central_angle(elevation_deg: float, params: LinkBudgetParams) -> float:
    """Earth-central angle between ground station and sub-satellite point."""
    el = math.radians(elevation_deg)
    rho = params.earth_radius / (params.earth_radius + params.altitude)
    return math.pi / 2.0 - el - math.asin(rho * math.cos(el))


def _elevation_from_central_angle(gamma: float, params: LinkBudgetParams) -> float:
    rho = params.earth_radius / (params.earth_radius + params.altitude)
    if gamma <= 0.0:
        return 90.0
    el = math.atan2(math.cos(gamma) - rho, math.sin(gamma))
    return math.degrees(el)


def pass_profile(
    max_elevation_deg: float,
    params: LinkBudgetParams,
    time_step: float = 1.0,
) -> PassProfile:
    """Loss versus time for one circular-orbit pass.

    The satellite follows a great circle whose closest approach to the
    station subtends the central angle matching ``max_elevation_deg``; the
    angular rate comes from the orbit altitude.  Earth rotation during the
    few-minute pass is neglected.  The profile is truncated at the
    configured minimum elevation and is symmetric about closest approach.
    """
    if not 0.0 < max_elevation_deg <= 90.0:
        raise ParameterError(
            f"max_elevation_deg must be in (0, 90], got {max_elevation_deg}"
        )
    if not time_step > 0:
        raise ParameterError(f"time_step must be > 0, got {time_step}")
    if max_elevation_deg < params.min_elevation_deg:
        raise ParameterError("max_elevation_deg is below the truncation elevation")

    orbit_radius = params.earth_radius + params.altitude
    omega = math.sqrt(EARTH_MU / orbit_radius**3)
    gamma0 = _central_angle(max_elevation_deg, params)
    gamma_edge = _central_angle(params.min_elevation_deg, params)

    # cos(gamma(t)) = cos(gamma0) * cos(omega * t); solve for the edge time.
    ratio = math.cos(gamma_edge) / math.cos(gamma0)
    ratio = min(1.0, max(-1.0, ratio))
    t_edge = math.acos(ratio) / omega

    n_half = int(math.floor(t_edge / time_step))
    times = np.arange(-n_half, n_half + 1) * time_step
    gammas = np.arccos(np.cos(gamma0) * np.cos(omega * times))
    elevations = np.array([_elevation_from_central_angle(g, params) for g in gammas])
    ranges = np.array(
        [range_from_elevation(e, params.altitude, params.earth_radius) for e in elevations]
    )
    losses = np.array([total_loss(e, params) for e in elevations])
    return PassProfile(
        times=times,
        elevations_deg=elevations,
        ranges_m=ranges,
        loss_db=losses,
        max_elevation_deg=max_elevation_deg,
    )


def lognormal_samples(fading: FadingModel, n: int, seed: int) -> np.ndarray:
    """Transmittance samples eta_i = mean * exp(X - sigma^2/2), X ~ N(0, sigma^2).

    The -sigma^2/2 shift makes the distribution mean equal the requested
    mean transmittance.
    """
    if n <= 0:
        raise ParameterError(f"n must be > 0, got {n}")
    if fading.sigma_ln == 0:
        return np.full(n, fading.mean_transmittance)
    rng = np.random.default_rng([seed, 0xFA])
    x = rng.normal(0.0, fading.sigma_ln, size=n)
    return fading.mean_transmittance * np.exp(x - fading.sigma_ln**2 / 2.0)


@dataclass(frozen=True)
class FadingComparison:
    """Pipeline rates for a static channel versus a fading channel of the
    same average loss."""

    static_rate_bps: float
    fading_rate_bps: float
    relative_difference: float


def _coupled_tallies(
    params: ProtocolParams,
    etas: np.ndarray,
    y_zero: float,
    pulses_per_block: int,
    uniforms: np.ndarray,
):
    """Pooled tallies over blocks with per-block transmittance.

    Detection and error counts come from inverse-CDF binomial sampling on
    shared uniforms, so two channels evaluated on the same uniforms are
    coupled (common random numbers) and their rate difference is not
    swamped by Monte Carlo noise.
    """
    from scipy.stats import binom

    from .photonics import TallyCounts

    sent_total = np.zeros(3, dtype=np.int64)
    det_total = np.zeros(3, dtype=np.int64)
    err_total = np.zeros(3, dtype=np.int64)
    mus = np.asarray(params.mean_photon_numbers)
    probs = np.asarray(params.class_probabilities)
    for b, eta in enumerate(etas):
        sent = np.rint(pulses_per_block * probs).astype(np.int64)
        signal = -np.expm1(-eta * mus)
        gain = np.minimum(1.0, y_zero + signal)
        with np.errstate(invalid="ignore", divide="ignore"):
            qber = np.where(
                gain > 0, (params.e_zero * y_zero + params.e_detector * signal) / gain, 0.0
            )
        det = binom.ppf(uniforms[b, 0], sent, np.clip(gain, 0, 1)).astype(np.int64)
        err = binom.ppf(uniforms[b, 1], det, np.clip(qber, 0, 1)).astype(np.int64)
        err = np.minimum(err, det)
        sent_total += sent
        det_total += det
        err_total += err
    return TallyCounts(sent=sent_total, detected=det_total, errors=err_total)


def fading_equivalence_experiment(
    params: ProtocolParams,
    det: DetectorConfig,
    mean_loss_db: float,
    sigma_ln: float,
    n_pulses: int,
    seed: int,
    block_duration: float = 0.01,
) -> FadingComparison:
    """Secure rate with constant transmittance versus log-normal fading.

    Transmittance is redrawn per ``block_duration`` block (atmospheric
    coherence is milliseconds) and the realized block samples are
    normalized to the exact requested mean, so both channels share the same
    average loss.  Both runs consume the same uniform draws, making the
    comparison a common-random-numbers experiment.
    """
    if n_pulses <= 0:
        raise ParameterError("n_pulses must be > 0")
    eta_bar = 10.0 ** (-mean_loss_db / 10.0)
    pulses_per_block = max(1, int(round(params.clock_rate * block_duration)))
    n_blocks = max(1, -(-n_pulses // pulses_per_block))
    y_zero = min(1.0, det.noise_rate / params.clock_rate)

    rng = np.random.default_rng([seed, 0xFE])
    # Clip away exact 0/1 so the inverse-CDF draw stays in-support.
    uniforms = np.clip(rng.random((n_blocks, 2, 3)), 1e-12, 1.0 - 1e-12)

    fading = FadingModel(mean_transmittance=eta_bar, sigma_ln=sigma_ln)
    etas = lognormal_samples(fading, n_blocks, seed)
    etas = etas * (eta_bar / etas.mean())

    def run(eta_blocks: np.ndarray) -> float:
        counts = _coupled_tallies(params, eta_blocks, y_zero, pulses_per_block, uniforms)
        obs = observables_from_tallies(counts, params)
        bounds = decoy_bounds(params, obs)
        return secure_key_rate(params, obs, bounds) * params.clock_rate

    static_rate = run(np.full(n_blocks, eta_bar))
    fading_rate = run(etas)
    if static_rate > 0:
        rel = abs(fading_rate - static_rate) / static_rate
    else:
        rel = 0.0 if fading_rate == 0 else math.inf
    return FadingComparison(static_rate, fading_rate, rel)


def sample_max_elevations(n: int, seed: int, params: LinkBudgetParams) -> np.ndarray:
    """Synthetic pass ensemble: the closest-approach ground-track offset is
    uniform out to the minimum-elevation circle, giving each pass its peak
    elevation.  Stands in for real orbit statistics."""
    if n <= 0:
        raise ParameterError("n must be > 0")
    rng = np.random.default_rng([seed, 0x9A])
    gamma_edge = _central_angle(params.min_elevation_deg, params)
    gamma0 = rng.uniform(0.0, gamma_edge, size=n)
    return np.array([_elevation_from_central_angle(g, params) for g in gamma0])


@dataclass(frozen=True)
class UsablePassStats:
    fraction_usable: float
    mean_usable_loss_db: float


def usable_pass_statistics(
    params: LinkBudgetParams,
    max_elevations_deg: np.ndarray,
    cutoff_db: float = 57.0,
    time_step: float = 5.0,
) -> UsablePassStats:
    """Fraction of passes with any time below the loss cutoff, and the mean
    loss over those passes' usable portions."""
    usable = 0
    loss_sums: list[float] = []
    for max_el in np.asarray(max_elevations_deg, dtype=float):
        if max_el < params.min_elevation_deg:
            continue
        profile = pass_profile(max_el, params, time_step=time_step)
        below = profile.loss_db <= cutoff_db
        if np.any(below):
            usable += 1
            loss_sums.append(float(np.mean(profile.loss_db[below])))
    n = len(max_elevations_deg)
    return UsablePassStats(
        fraction_usable=usable / n if n else 0.0,
        mean_usable_loss_db=float(np.mean(loss_sums)) if loss_sums else math.nan,
    )

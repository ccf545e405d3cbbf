"""Closed-form decoy-state mathematics for weak-coherent-pulse BB84.

The channel is described by per-class gains and error rates built from a
vacuum yield plus Poissonian photon statistics.  A two-decoy analysis
(signal + weak decoy + vacuum) bounds the single-photon yield and error
rate, which feed the asymptotic secure key rate

    R >= q * N_mu/(N_mu+N_nu) * ( -Q_mu * f * H2(E_mu) + Q1 * (1 - H2(e1)) )

in bits per laser pulse.  Multiply by the clock rate for bits per second.
All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError

_PROB_TOL = 1e-9


@dataclass(frozen=True)
class ProtocolParams:
    """Source and protocol constants for a two-decoy WCP protocol.

    mu/nu are the signal/decoy mean photon numbers, p_* the pulse-class
    probabilities (must sum to one), q the basis reconciliation factor,
    f_ec the error-correction inefficiency, e_detector the intrinsic
    polarization error, e_zero the error rate of background events and
    clock_rate the laser repetition rate in Hz.
    """

    mu: float = 0.5
    nu: float = 0.1
    p_signal: float = 0.8
    p_decoy: float = 0.15
    p_vacuum: float = 0.05
    q: float = 0.5
    f_ec: float = 1.22
    e_detector: float = 0.015
    e_zero: float = 0.5
    clock_rate: float = 76e6

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ParameterError(f"mu must be > 0, got {self.mu}")
        if not 0.0 <= self.nu < self.mu:
            raise ParameterError(f"nu must satisfy 0 <= nu < mu, got nu={self.nu}, mu={self.mu}")
        for name in ("p_signal", "p_decoy", "p_vacuum"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1], got {p}")
        p_sum = self.p_signal + self.p_decoy + self.p_vacuum
        if abs(p_sum - 1.0) > _PROB_TOL:
            raise ParameterError(
                f"p_signal + p_decoy + p_vacuum must sum to 1, got {p_sum!r}"
            )
        if not 0.0 < self.q <= 1.0:
            raise ParameterError(f"q must be in (0, 1], got {self.q}")
        if not self.f_ec >= 1.0:
            raise ParameterError(f"f_ec must be >= 1, got {self.f_ec}")
        if not 0.0 <= self.e_detector <= 0.5:
            raise ParameterError(f"e_detector must be in [0, 0.5], got {self.e_detector}")
        if not 0.0 <= self.e_zero <= 1.0:
            raise ParameterError(f"e_zero must be in [0, 1], got {self.e_zero}")
        if not self.clock_rate > 0:
            raise ParameterError(f"clock_rate must be > 0, got {self.clock_rate}")

    @property
    def pulse_period(self) -> float:
        """Laser period in seconds."""
        return 1.0 / self.clock_rate

    @property
    def class_probabilities(self) -> tuple[float, float, float]:
        return (self.p_signal, self.p_decoy, self.p_vacuum)

    @property
    def mean_photon_numbers(self) -> tuple[float, float, float]:
        return (self.mu, self.nu, 0.0)


@dataclass(frozen=True)
class ChannelObservables:
    """Measured per-class gains, error rates and detection counts.

    Q_mu/Q_nu are detections per sent pulse of each class, E_mu/E_nu the
    corresponding error rates, Y_zero the vacuum (background) yield and
    N_mu/N_nu the detection counts entering the sifting fraction.
    """

    Q_mu: float
    Q_nu: float
    E_mu: float
    E_nu: float
    Y_zero: float
    N_mu: float
    N_nu: float

    def __post_init__(self) -> None:
        for name in ("Q_mu", "Q_nu", "E_mu", "E_nu", "Y_zero"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1], got {v}")
        if self.N_mu < 0 or self.N_nu < 0:
            raise ParameterError("detection counts must be non-negative")


@dataclass(frozen=True)
class SinglePhotonBounds:
    """Two-decoy bounds on the single-photon contribution.

    Y1_lower and Q1_lower are lower bounds on the single-photon yield and
    gain; e1_upper is an upper bound on the single-photon error rate.
    ``degenerate`` is set when Y1 clamps to zero, in which case the secure
    rate is zero rather than an error.
    """

    Y1_lower: float
    Q1_lower: float
    e1_upper: float
    degenerate: bool = False

    def __post_init__(self) -> None:
        for name in ("Y1_lower", "Q1_lower", "e1_upper"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1], got {v}")


def binary_entropy(x: float) -> float:
    """Binary entropy H2(x) = -x log2 x - (1-x) log2 (1-x) in bits.

    Extended by continuity: H2(0) = H2(1) = 0.
    """
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"binary_entropy argument must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -(x * math.log2(x) + (1.0 - x) * math.log2(1.0 - x))


def channel_model(
    m: float, eta: float, y_zero: float, e_detector: float, e_zero: float
) -> tuple[float, float]:
    """Gain and QBER of a pulse class with mean photon number ``m``.

        Q = Y0 + 1 - exp(-eta * m)
        E * Q = e0 * Y0 + e_d * (1 - exp(-eta * m))

    ``eta`` is the total transmittance (channel times detector).  Uses
    expm1 so the signal term stays accurate for eta*m down to ~1e-15.
    """
    if m < 0:
        raise ParameterError(f"mean photon number must be >= 0, got {m}")
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"transmittance must be in [0, 1], got {eta}")
    if not 0.0 <= y_zero <= 1.0:
        raise ParameterError(f"vacuum yield must be in [0, 1], got {y_zero}")
    if not 0.0 <= e_detector <= 1.0:
        raise ParameterError(f"e_detector must be in [0, 1], got {e_detector}")
    if not 0.0 <= e_zero <= 1.0:
        raise ParameterError(f"e_zero must be in [0, 1], got {e_zero}")

    signal = -math.expm1(-eta * m)
    gain = min(1.0, y_zero + signal)
    if gain <= 0.0:
        return 0.0, e_zero
    qber = (e_zero * y_zero + e_detector * signal) / gain
    return gain, min(max(qber, 0.0), 1.0)


def decoy_bounds(params: ProtocolParams, obs: ChannelObservables) -> SinglePhotonBounds:
    """Vacuum + weak-decoy bounds on the single-photon yield and error.

        Y1 >= mu/(mu*nu - nu^2) * [ Q_nu e^nu - Q_mu e^mu nu^2/mu^2
                                    - (mu^2 - nu^2)/mu^2 * Y0 ]
        Q1  = Y1 * mu * e^(-mu)
        e1 <= ( E_nu Q_nu e^nu - e0 Y0 ) / ( Y1 * nu )

    Y0 is taken as directly measured from the vacuum class.  Both bounds
    clamp to [0, 1]; a Y1 that clamps to zero marks the result degenerate
    (zero distillable key) instead of raising.
    """
    mu, nu = params.mu, params.nu
    if not 0.0 < nu < mu:
        raise ParameterError(
            f"two-decoy bounds need 0 < nu < mu, got nu={nu}, mu={mu}"
        )
    y0 = obs.Y_zero
    denom = mu * nu - nu * nu
    raw_y1 = (mu / denom) * (
        obs.Q_nu * math.exp(nu)
        - obs.Q_mu * math.exp(mu) * (nu * nu) / (mu * mu)
        - ((mu * mu - nu * nu) / (mu * mu)) * y0
    )
    y1 = min(max(raw_y1, 0.0), 1.0)
    if y1 <= 0.0:
        return SinglePhotonBounds(0.0, 0.0, 0.5, degenerate=True)
    q1 = min(1.0, y1 * mu * math.exp(-mu))
    raw_e1 = (obs.E_nu * obs.Q_nu * math.exp(nu) - params.e_zero * y0) / (y1 * nu)
    e1 = min(max(raw_e1, 0.0), 1.0)
    return SinglePhotonBounds(y1, q1, e1)


def secure_key_rate(
    params: ProtocolParams, obs: ChannelObservables, bounds: SinglePhotonBounds
) -> float:
    """Asymptotic secure key rate in bits per laser pulse, clamped at zero.

    An e1 bound at or beyond 0.5 gives no single-photon credit (the
    privacy-amplification term is capped at H2(0.5) = 1).
    """
    n_total = obs.N_mu + obs.N_nu
    if n_total <= 0:
        return 0.0
    sift_fraction = obs.N_mu / n_total
    e1 = min(bounds.e1_upper, 0.5)
    rate = params.q * sift_fraction * (
        -obs.Q_mu * params.f_ec * binary_entropy(obs.E_mu)
        + bounds.Q1_lower * (1.0 - binary_entropy(e1))
    )
    return max(0.0, rate)


def model_observables(
    params: ProtocolParams,
    eta: float,
    y_zero: float,
    acceptance: float = 1.0,
) -> ChannelObservables:
    """Closed-form observables for a channel of total transmittance ``eta``.

    ``y_zero`` is the per-pulse background yield inside the acceptance
    window and ``acceptance`` the fraction of signal detections the window
    keeps (1.0 for no temporal filtering).  Detection counts are filled in
    proportionally to the class rates, which is all the sifting fraction
    needs.
    """
    if not 0.0 <= acceptance <= 1.0:
        raise ParameterError(f"acceptance must be in [0, 1], got {acceptance}")

    def class_obs(m: float) -> tuple[float, float]:
        signal = acceptance * -math.expm1(-eta * m)
        gain = min(1.0, y_zero + signal)
        if gain <= 0.0:
            return 0.0, params.e_zero
        qber = (params.e_zero * y_zero + params.e_detector * signal) / gain
        return gain, min(max(qber, 0.0), 1.0)

    q_mu, e_mu = class_obs(params.mu)
    q_nu, e_nu = class_obs(params.nu)
    return ChannelObservables(
        Q_mu=q_mu,
        Q_nu=q_nu,
        E_mu=e_mu,
        E_nu=e_nu,
        Y_zero=min(1.0, y_zero),
        N_mu=params.p_signal * q_mu,
        N_nu=params.p_decoy * q_nu,
    )


def single_photon_truth(
    eta: float, y_zero: float, e_detector: float, e_zero: float
) -> tuple[float, float]:
    """True single-photon yield and error rate of the per-photon-number model.

        Y1 = Y0 + 1 - (1 - eta)
        e1 = (e0 * Y0 + e_d * eta) / Y1

    This is the independent bookkeeping the decoy bounds are checked
    against: mixing these per-photon-number yields over Poisson statistics
    reproduces channel_model exactly.
    """
    y1 = y_zero + eta
    if y1 <= 0.0:
        return 0.0, e_zero
    e1 = (e_zero * y_zero + e_detector * eta) / y1
    return min(y1, 1.0), min(max(e1, 0.0), 1.0)

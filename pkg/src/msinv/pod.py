"""Instrument model: probability of detection and measurement error.

The airborne gas-mapping lidar is characterised by two empirical results from
controlled releases: a probability-of-detection (POD) curve in emission rate,
plane altitude and wind speed, and a log-logistic distribution of the true
emission rate given a measurement.  Both are parameterised here with the
published constants as defaults, and both are overridable so the machinery can
be pointed at a different sensor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

__all__ = [
    "PodParams",
    "MeasurementModel",
    "PHI_FLOOR",
    "pod",
    "sample_true_rate",
    "bias_correct",
    "phi_any_detection",
    "measurement_mean_factor",
]

# Detection probabilities are floored before any division by phi so that a
# pathological near-zero POD cannot overflow an inverse weight.  Floor hits are
# counted and surfaced in report diagnostics.
PHI_FLOOR = 1e-12


@dataclass(frozen=True)
class PodParams:
    """Constants of the POD curve phi(rate, altitude, wind).

    The curve is
        exp(-[kappa * Y^rate_exp / ((a/1000)^altitude_exp
              * (u + wind_offset)^wind_exp)]^(-outer_exp))
    with rate Y in kg/h, altitude a in m and wind u in m/s.
    """

    kappa: float = 0.244
    rate_exp: float = 1.07
    altitude_exp: float = 2.44
    wind_offset: float = 2.14
    wind_exp: float = 1.69
    outer_exp: float = 2.53

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"PodParams.{f.name} must be > 0")


@dataclass(frozen=True)
class MeasurementModel:
    """True emission rate given a measurement: Log-logistic(d*alpha*measured, beta).

    ``d`` is the multiplicative bias factor (the conditional mean is
    d * measured), ``alpha`` a scale factor and ``beta`` the log-logistic
    shape.  ``beta`` may be ``inf``, which degenerates the distribution to a
    point mass at d * alpha * measured (useful for no-noise checks).
    """

    d: float = 0.918
    alpha: float = 0.891
    beta: float = 3.82

    def __post_init__(self):
        if self.d <= 0 or self.alpha <= 0:
            raise ValueError("MeasurementModel.d and .alpha must be > 0")
        if not self.beta > 1:
            raise ValueError("MeasurementModel.beta must be > 1 (finite mean)")


DEFAULT_POD = PodParams()
DEFAULT_MEASUREMENT = MeasurementModel()


def pod(rate, altitude, wind, params: PodParams = DEFAULT_POD):
    """Probability of detection for a point source.

    Parameters
    ----------
    rate : array_like
        True emission rate in kg/h, >= 0.  A rate of exactly 0 returns POD 0
        (the analytic limit of the curve).
    altitude : array_like
        Plane altitude over the source in m, > 0.
    wind : array_like
        Wind speed in m/s, >= 0.

    Returns
    -------
    float or ndarray in [0, 1], matching the broadcast shape of the inputs.
    """
    rate = np.asarray(rate, dtype=float)
    altitude = np.asarray(altitude, dtype=float)
    wind = np.asarray(wind, dtype=float)
    if np.any(rate < 0):
        raise ValueError("rate must be >= 0")
    if np.any(altitude <= 0):
        raise ValueError("altitude must be > 0")
    if np.any(wind < 0):
        raise ValueError("wind must be >= 0")

    denom = (altitude / 1000.0) ** params.altitude_exp * (
        wind + params.wind_offset
    ) ** params.wind_exp
    with np.errstate(divide="ignore", over="ignore"):
        base = params.kappa * rate**params.rate_exp / denom
        # base == 0 -> base^(-outer_exp) diverges -> exp(-inf) == 0
        powed = np.where(base > 0, base, 1.0) ** -params.outer_exp
        out = np.exp(-np.where(base > 0, powed, np.inf))
    if out.ndim == 0:
        return float(out)
    return out


def sample_true_rate(measured, uniform_draw, model: MeasurementModel = DEFAULT_MEASUREMENT):
    """Inverse-CDF draw of the true rate given a measured rate.

    The log-logistic quantile function is scale * (u / (1-u))^(1/beta) with
    scale = d * alpha * measured.  Supplying the uniform draw keeps this
    function pure; RNG policy lives with the Monte Carlo layer.
    """
    measured = np.asarray(measured, dtype=float)
    uniform_draw = np.asarray(uniform_draw, dtype=float)
    if np.any(measured < 0):
        raise ValueError("measured must be >= 0")
    if np.any((uniform_draw <= 0) | (uniform_draw >= 1)):
        raise ValueError("uniform_draw must lie in (0, 1)")
    scale = model.d * model.alpha * measured
    out = scale * (uniform_draw / (1.0 - uniform_draw)) ** (1.0 / model.beta)
    if out.ndim == 0:
        return float(out)
    return out


def bias_correct(measured, model: MeasurementModel = DEFAULT_MEASUREMENT):
    """Multiplicative bias correction: the conditional mean d * measured."""
    measured = np.asarray(measured, dtype=float)
    if np.any(measured < 0):
        raise ValueError("measured must be >= 0")
    out = model.d * measured
    if out.ndim == 0:
        return float(out)
    return out


def measurement_mean_factor(model: MeasurementModel = DEFAULT_MEASUREMENT) -> float:
    """Expected ratio of true to measured rate, d * alpha * (pi/beta)/sin(pi/beta).

    With the default constants this evaluates to ~0.918, i.e. the model's mean
    is internally consistent with the simple bias-correction factor.
    """
    if math.isinf(model.beta):
        return model.d * model.alpha
    x = math.pi / model.beta
    return model.d * model.alpha * x / math.sin(x)


def phi_any_detection(detected_phis, n_missed: int) -> float:
    """Estimated probability of at least one detection over a component-day.

    Missed passes have unknown POD; each is imputed with the mean of the
    detected passes' PODs, giving

        1 - (1 - mean_phi)^n_missed * prod(1 - phi_q).

    With ``n_missed == 0`` this is the exact any-detection probability
    1 - prod(1 - phi_q).
    """
    phis = [float(p) for p in detected_phis]
    if n_missed < 0:
        raise ValueError("n_missed must be >= 0")
    for p in phis:
        if not 0.0 < p <= 1.0:
            raise ValueError("detected POD values must lie in (0, 1]")
    if not phis:
        if n_missed > 0:
            raise ValueError("no detected passes to impute the mean POD from")
        return 0.0
    prod_miss = 1.0
    mu = sum(phis) / len(phis)
    for _ in range(n_missed):
        prod_miss *= 1.0 - mu
    for p in phis:
        prod_miss *= 1.0 - p
    return 1.0 - prod_miss

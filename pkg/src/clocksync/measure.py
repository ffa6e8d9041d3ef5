"""Per-exchange delay, offset and skew samples and the asymmetry bias."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exchange import DelayProfile


class DegenerateExchangeError(ValueError):
    """t4 == t1 (or t4 < t1 where ordering is required)."""


@dataclass(frozen=True)
class MeasurementSample:
    d_check: float
    theta_sr: float
    theta_rs: float
    gamma_check: float


def delay_sample(t1, t2, t3, t4, gamma):
    if np.any(np.asarray(t4) <= np.asarray(t1)):
        raise DegenerateExchangeError("delay sample needs t4 > t1")
    return ((1.0 - gamma) * (t4 - t1) - (t3 - t2)) / 2.0


def offset_samples(t1, t2, t3, t4, d):
    return t1 - (t2 - d), t4 - (t3 + d)


def skew_sample(t1, t2, t3, t4, d):
    if np.any(np.asarray(t4) == np.asarray(t1)):
        raise DegenerateExchangeError("skew sample needs t4 != t1")
    return 1.0 - (t3 + d - (t2 - d)) / (t4 - t1)


def measure(t1, t2, t3, t4, gamma_prev) -> MeasurementSample:
    """Delay from the previous skew estimate, then offsets and skew with that delay."""
    d = delay_sample(t1, t2, t3, t4, gamma_prev)
    theta_sr, theta_rs = offset_samples(t1, t2, t3, t4, d)
    return MeasurementSample(d, theta_sr, theta_rs, skew_sample(t1, t2, t3, t4, d))


def windowed_delay_estimate(window: Sequence[Sequence[float]], gamma_prev: float) -> float:
    """Mean delay sample over the last K+1 exchanges ``(t1, t2, t3, t4)``."""
    w = np.asarray(window, dtype=float).reshape(-1, 4)
    if len(w) == 0:
        raise ValueError("empty delay window")
    return float(np.mean(delay_sample(w[:, 0], w[:, 1], w[:, 2], w[:, 3], gamma_prev)))


def track_delay(exchanges: Iterable[Sequence[float]], K: int, gamma_init: float = 1.0):
    """Running (delay, skew) estimates of the windowed simplification.

    The delay is averaged over the last ``K + 1`` exchanges using the
    previous skew estimate; the skew estimate is then the skew sample of the
    newest exchange under that delay. ``gamma_init`` is the estimate used
    before any exchange has been seen.

    The skew sample under a delay derived from skew g evaluates to g, so the
    skew never leaves ``gamma_init``; only the delay track is informative.
    """
    window: list[Sequence[float]] = []
    gamma = gamma_init
    out = []
    for ex in exchanges:
        window.append(ex)
        if len(window) > K + 1:
            window.pop(0)
        d = windowed_delay_estimate(window, gamma)
        gamma = float(skew_sample(*ex, d))
        out.append((d, gamma))
    return out


def asymmetry_bias(profile: DelayProfile) -> float:
    """Systematic delay-estimate error, half the mean path difference."""
    return (profile.path_sr_mean - profile.path_rs_mean) / 2.0

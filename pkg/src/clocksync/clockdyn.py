"""Ground-truth clock dynamics of a slave node relative to its reference.

The offset integrates the total skew, which is the sum of a Gaussian
random-walk component and an absolute thermal level produced by an AT-cut
crystal that is moved periodically between two environments.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import streams


@dataclass(frozen=True)
class ThermalProfile:
    """Environment switching and AT-cut frequency/temperature constants."""

    tc: float = 60.0
    p: float = 1200.0
    t_high: float = 35.0
    t_low: float = 10.0
    t0: float = 25.0
    a: float = 0.0
    b: float = 0.4e-9
    c: float = 109.5e-12

    def __post_init__(self):
        if self.tc <= 0 or self.p <= 0:
            raise ValueError(f"tc and p must be positive, got tc={self.tc}, p={self.p}")
        if self.t_high < self.t_low:
            raise ValueError(f"t_high={self.t_high} below t_low={self.t_low}")


OMEGA_NORM = ThermalProfile(tc=60.0, p=1200.0, t_high=35.0, t_low=10.0)
OMEGA_HIGH = ThermalProfile(tc=60.0, p=600.0, t_high=40.0, t_low=-10.0)
CONSTANT = ThermalProfile(t_high=25.0, t_low=25.0)

# per-hop environments of the five-hop line
HOP_PROFILES = (
    ThermalProfile(t_low=10.0, t_high=35.0, tc=60.0, p=1200.0),
    ThermalProfile(t_low=15.0, t_high=30.0, tc=60.0, p=1200.0),
    ThermalProfile(t_low=5.0, t_high=40.0, tc=60.0, p=1200.0),
    ThermalProfile(t_low=17.0, t_high=33.0, tc=120.0, p=1200.0),
    ThermalProfile(t_low=10.0, t_high=35.0, tc=90.0, p=900.0),
)

THERMAL_PROFILES = {"omega_norm": OMEGA_NORM, "omega_high": OMEGA_HIGH, "constant": CONSTANT}


@dataclass(frozen=True)
class NoiseProfile:
    var_theta: float = 1e-17
    var_gamma: float = 1e-19
    seed: int = 0

    def __post_init__(self):
        if self.var_theta < 0 or self.var_gamma < 0:
            raise ValueError("noise variances must be non-negative")


@dataclass(frozen=True)
class ClockState:
    theta: float = 0.0
    gamma_rw: float = 0.0
    gamma_thermal: float = 0.0
    d: float = 0.0

    @property
    def gamma(self) -> float:
        return self.gamma_rw + self.gamma_thermal


def cooling_temperature(profile: ThermalProfile, t_xo_at_switch, t_env, dt):
    """Newton's law of cooling from the temperature held at the last switch."""
    return t_env + (t_xo_at_switch - t_env) * np.exp(-np.asarray(dt, dtype=float) / profile.tc)


def thermal_skew(profile: ThermalProfile, temperature):
    """Fractional frequency deviation of the crystal at ``temperature``."""
    dt = np.asarray(temperature, dtype=float) - profile.t0
    return dt * (profile.a + dt * (profile.b + dt * profile.c))


def temperature_at(profile: ThermalProfile, times) -> np.ndarray:
    """Crystal temperature at absolute true times (seconds, >= 0).

    The crystal starts at ``t0`` inside the high environment; the environment
    toggles at every multiple of ``p`` and the cooling law restarts from the
    current crystal temperature.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return times.copy()
    seg = np.floor(times / profile.p).astype(np.int64)
    n_seg = int(seg.max()) + 1
    env = np.where(np.arange(n_seg) % 2 == 0, profile.t_high, profile.t_low)
    decay = np.exp(-profile.p / profile.tc)
    start = np.empty(n_seg)
    temp = profile.t0
    for j in range(n_seg):
        start[j] = temp
        temp = env[j] + (temp - env[j]) * decay
    return cooling_temperature(profile, start[seg], env[seg], times - seg * profile.p)


def thermal_trajectory(profile: ThermalProfile, horizon: float, step: float):
    """Sampled ``(time, temperature, thermal_skew)`` columns over ``[0, horizon)``."""
    if horizon <= 0 or step <= 0:
        raise ValueError("horizon and step must be positive")
    times = np.arange(0.0, horizon, step)
    temps = temperature_at(profile, times)
    return times, temps, thermal_skew(profile, temps)


def noise_streams(seed: int, node: int = 1):
    """(offset-noise, skew-noise) generators for one node."""
    return streams.stream(seed, node, streams.THETA_NOISE), streams.stream(seed, node, streams.GAMMA_NOISE)


def step_state(state: ClockState, noise: NoiseProfile, thermal: float, tau: float, rngs) -> ClockState:
    """Advance the clock state by one synchronization period."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    theta_rng, gamma_rng = rngs
    w_theta = theta_rng.normal(0.0, np.sqrt(noise.var_theta))
    w_gamma = gamma_rng.normal(0.0, np.sqrt(noise.var_gamma))
    # grouping matches simulate_states so both paths round identically
    theta = state.theta + ((state.gamma_rw + state.gamma_thermal) * tau + w_theta)
    return replace(state, theta=theta, gamma_rw=state.gamma_rw + w_gamma, gamma_thermal=float(thermal))


@dataclass
class StateTrajectory:
    """Per-step clock states as columns; ``slot_start[k] = k * tau``."""

    tau: float
    slot_start: np.ndarray
    theta: np.ndarray
    gamma_rw: np.ndarray
    gamma_thermal: np.ndarray
    d: float = 0.0

    @property
    def gamma(self) -> np.ndarray:
        return self.gamma_rw + self.gamma_thermal

    def __len__(self):
        return len(self.theta)

    def state(self, k: int) -> ClockState:
        return ClockState(float(self.theta[k]), float(self.gamma_rw[k]), float(self.gamma_thermal[k]), self.d)

    def tail(self, start: int) -> "StateTrajectory":
        return StateTrajectory(self.tau, self.slot_start[start:], self.theta[start:],
                               self.gamma_rw[start:], self.gamma_thermal[start:], self.d)


def simulate_states(n: int, tau: float, thermal: ThermalProfile, noise: NoiseProfile,
                    node: int = 1) -> StateTrajectory:
    """Vectorized equivalent of iterating :func:`step_state` ``n - 1`` times.

    Starts from theta = 0, gamma_rw = 0 with the crystal at ``t0``. Produces
    bit-identical values to the scalar recursion with the same streams.
    """
    if n <= 0:
        raise ValueError("need at least one step")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    theta_rng, gamma_rng = noise_streams(noise.seed, node)
    slot = np.arange(n) * float(tau)
    g_th = thermal_skew(thermal, temperature_at(thermal, slot))
    w_theta = theta_rng.normal(0.0, np.sqrt(noise.var_theta), size=n - 1)
    w_gamma = gamma_rng.normal(0.0, np.sqrt(noise.var_gamma), size=n - 1)
    g_rw = np.concatenate(([0.0], np.cumsum(w_gamma)))
    inc = (g_rw[:-1] + g_th[:-1]) * tau + w_theta
    theta = np.concatenate(([0.0], np.cumsum(inc)))
    return StateTrajectory(float(tau), slot, theta, g_rw, g_th)

"""Probabilistic air-to-ground propagation model.

Each link mixes line-of-sight and obstructed free-space path loss, weighted
by an elevation-angle-dependent LoS probability, and is optionally scaled
by unit-mean Rayleigh fading power. The model produces linear power gains
per (station, user, sub-channel) plus the cross-station interference terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Position3D

__all__ = [
    "ChannelRealization",
    "FadingMode",
    "GbsSpec",
    "PropagationParams",
    "average_path_loss",
    "draw_realization",
    "elevation_angle",
    "free_space_path_loss",
    "interference",
    "interference_for_abs",
    "los_probability",
]


@dataclass(frozen=True)
class PropagationParams:
    """Environment constants of the propagation model.

    a, b            dimensionless LoS-probability constants
    eta_los/nlos    excess loss factors, linear scale, nlos >= los >= 1
    carrier_freq    Hz
    speed_of_light  m/s
    noise_power     receiver thermal noise, watts
    """

    a: float = 5.0
    b: float = 0.5
    eta_los: float = 1.0
    eta_nlos: float = 20.0
    carrier_freq: float = 2.0e9
    speed_of_light: float = 299792458.0
    noise_power: float = 1.0e-9

    def __post_init__(self) -> None:
        if self.a <= 0 or self.b <= 0:
            raise ValueError("a and b must be positive")
        if not 1.0 <= self.eta_los <= self.eta_nlos:
            raise ValueError("need eta_nlos >= eta_los >= 1")
        if self.carrier_freq <= 0 or self.speed_of_light <= 0:
            raise ValueError("carrier_freq and speed_of_light must be positive")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")


class FadingMode(Enum):
    NONE = "none"
    RAYLEIGH = "rayleigh"


@dataclass(frozen=True)
class GbsSpec:
    """Optional fixed ground transmitter acting as an interferer.

    Default-disabled; when enabled its per-sub-channel transmit power adds
    to every user's interference through the same propagation model.
    """

    enabled: bool = False
    x: float = 0.0
    y: float = 0.0
    height: float = 10.0
    power_per_subchannel: float = 0.0

    def __post_init__(self) -> None:
        if self.power_per_subchannel < 0:
            raise ValueError("GBS power must be non-negative")
        if self.enabled and self.height <= 0:
            raise ValueError("GBS height must be positive when enabled")


@dataclass(frozen=True)
class ChannelRealization:
    """Per-link linear power gains for one time step.

    gains[j, k, n] is the power gain from station j to user k on
    sub-channel n. gbs_gains/gbs_power are None when the ground
    transmitter is disabled.
    """

    gains: np.ndarray
    abs_positions: tuple
    users_xy: np.ndarray
    gbs_gains: np.ndarray | None = None
    gbs_power: float | None = None


def elevation_angle(abs_pos: Position3D, user_xy) -> float:
    """Elevation angle in degrees from a ground user to the station; 90 overhead."""
    dx = abs_pos.x - user_xy[0]
    dy = abs_pos.y - user_xy[1]
    horizontal = math.hypot(dx, dy)
    return math.degrees(math.atan2(abs_pos.h, horizontal))


def los_probability(theta_deg, params: PropagationParams):
    """Probability of a line-of-sight link at elevation angle theta (degrees)."""
    return 1.0 / (1.0 + params.a * np.exp(-params.b * (theta_deg - params.a)))


def free_space_path_loss(distance: float, params: PropagationParams, excess: float = 1.0):
    """Linear free-space loss (4 pi f d / c)^2 scaled by an excess factor."""
    if np.any(np.asarray(distance) <= 0):
        raise ValueError("free-space path loss is singular at zero distance")
    ratio = 4.0 * math.pi * params.carrier_freq * distance / params.speed_of_light
    return ratio * ratio * excess


def average_path_loss(abs_pos: Position3D, user_xy, params: PropagationParams) -> float:
    """LoS/Non-LoS mixture path loss over the full 3-D distance."""
    dx = abs_pos.x - user_xy[0]
    dy = abs_pos.y - user_xy[1]
    d3 = math.sqrt(dx * dx + dy * dy + abs_pos.h * abs_pos.h)
    if d3 == 0.0:
        raise ValueError("coincident transmitter and receiver")
    pr = los_probability(elevation_angle(abs_pos, user_xy), params)
    return pr * free_space_path_loss(d3, params, params.eta_los) + \
        (1.0 - pr) * free_space_path_loss(d3, params, params.eta_nlos)


def path_loss_to_users(abs_pos: Position3D, users_xy: np.ndarray,
                       params: PropagationParams) -> np.ndarray:
    """Vectorized average_path_loss from one transmitter to every user."""
    dx = abs_pos.x - users_xy[:, 0]
    dy = abs_pos.y - users_xy[:, 1]
    horizontal = np.hypot(dx, dy)
    d3 = np.sqrt(horizontal * horizontal + abs_pos.h * abs_pos.h)
    if np.any(d3 == 0.0):
        raise ValueError("coincident transmitter and receiver")
    theta = np.degrees(np.arctan2(abs_pos.h, horizontal))
    pr = los_probability(theta, params)
    return pr * free_space_path_loss(d3, params, params.eta_los) + \
        (1.0 - pr) * free_space_path_loss(d3, params, params.eta_nlos)


def draw_realization(abs_positions, users_xy, params: PropagationParams,
                     fading: FadingMode, rng: np.random.Generator,
                     n_subchannels: int, gbs: GbsSpec | None = None,
                     path_loss: np.ndarray | None = None) -> ChannelRealization:
    """Draw the per-link power gains for one time step.

    Parameters
    ----------
    abs_positions : sequence of Position3D, one per station
    users_xy : (K, 2) array of ground-user coordinates in meters
    fading : FadingMode.NONE gives deterministic gains 1/PL; RAYLEIGH
        multiplies each (j, k, n) gain by an i.i.d. unit-mean fading power
    rng : caller-owned seeded stream, consumed only when fading is drawn
    path_loss : optional precomputed (J, K) path-loss matrix (cache hook)
    """
    users_xy = np.asarray(users_xy, dtype=float)
    j_count = len(abs_positions)
    k_count = users_xy.shape[0]
    if path_loss is None:
        path_loss = np.empty((j_count, k_count))
        for j, pos in enumerate(abs_positions):
            path_loss[j] = path_loss_to_users(pos, users_xy, params)

    base = 1.0 / path_loss[:, :, None]
    if fading == FadingMode.RAYLEIGH:
        # squared magnitude of a unit-variance complex Gaussian: Exp(1)
        rho2 = rng.exponential(1.0, size=(j_count, k_count, n_subchannels))
        gains = rho2 * base
    else:
        gains = np.broadcast_to(base, (j_count, k_count, n_subchannels)).copy()

    gbs_gains = None
    gbs_power = None
    if gbs is not None and gbs.enabled:
        gbs_pos = Position3D(gbs.x, gbs.y, gbs.height)
        gbs_pl = path_loss_to_users(gbs_pos, users_xy, params)
        gbs_base = 1.0 / gbs_pl[:, None]
        if fading == FadingMode.RAYLEIGH:
            gbs_gains = rng.exponential(1.0, size=(k_count, n_subchannels)) * gbs_base
        else:
            gbs_gains = np.broadcast_to(gbs_base, (k_count, n_subchannels)).copy()
        gbs_power = gbs.power_per_subchannel

    return ChannelRealization(gains=gains, abs_positions=tuple(abs_positions),
                              users_xy=users_xy, gbs_gains=gbs_gains,
                              gbs_power=gbs_power)


def interference(realization: ChannelRealization, abs_powers: np.ndarray,
                 target_abs: int, user: int, subchannel: int) -> float:
    """Total interference in watts seen by one user of one station.

    Sums every other station's transmit power times its gain to the user,
    plus the ground transmitter's contribution when present.
    """
    abs_powers = np.asarray(abs_powers, dtype=float)
    total = 0.0
    for j in range(realization.gains.shape[0]):
        if j == target_abs:
            continue
        total += abs_powers[j, subchannel] * realization.gains[j, user, subchannel]
    if realization.gbs_gains is not None:
        total += realization.gbs_power * realization.gbs_gains[user, subchannel]
    return total


def interference_for_abs(realization: ChannelRealization, abs_powers: np.ndarray,
                         target_abs: int) -> np.ndarray:
    """(K, N) interference table for one station; same sum as interference()."""
    abs_powers = np.asarray(abs_powers, dtype=float)
    field = np.einsum("jn,jkn->kn", abs_powers, realization.gains)
    own = abs_powers[target_abs][None, :] * realization.gains[target_abs]
    # field-minus-own can round a hair below zero; interference is >= 0
    table = np.maximum(field - own, 0.0)
    if realization.gbs_gains is not None:
        table = table + realization.gbs_power * realization.gbs_gains
    return table

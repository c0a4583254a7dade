"""Grid-world geometry: service area discretization, movements, distances.

The service area is an axis-aligned rectangle split into an M x M grid of
square cells at a fixed flight altitude. Grid states are 1-based (k1, k2)
indices along the x and y axes. Every state maps to a fixed reference point
in the plane; all propagation and reward distances are computed from these
points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

__all__ = [
    "Action",
    "AreaSpec",
    "GridState",
    "Position3D",
    "apply_action",
    "cell_center",
    "dist_to_final",
    "pairwise_dist",
    "snap_to_state",
    "state_from_index",
    "state_index",
]


class Action(IntEnum):
    """The four permitted moves, each one grid cell along an axis."""

    LEFT = 0
    RIGHT = 1
    FORWARD = 2
    BACKWARD = 3


@dataclass(frozen=True)
class AreaSpec:
    """Rectangular service area split into cells_per_axis**2 square cells.

    All lengths are meters. ``altitude`` is the constant flight height of
    every aerial station.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    cells_per_axis: int
    altitude: float

    def __post_init__(self) -> None:
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be strictly below x_max")
        if not self.y_min < self.y_max:
            raise ValueError("y_min must be strictly below y_max")
        if self.cells_per_axis < 2:
            raise ValueError("cells_per_axis must be at least 2")
        if not self.altitude > 0:
            raise ValueError("altitude must be positive")

    @property
    def cell_width_x(self) -> float:
        return (self.x_max - self.x_min) / self.cells_per_axis

    @property
    def cell_width_y(self) -> float:
        return (self.y_max - self.y_min) / self.cells_per_axis

    @property
    def n_states(self) -> int:
        return self.cells_per_axis * self.cells_per_axis

    # One move covers one cell; with constant speed this is the implied
    # step duration. Metadata only, it enters no simulated quantity.
    def step_duration_s(self, velocity: float) -> float:
        if velocity <= 0:
            raise ValueError("velocity must be positive")
        return self.cell_width_x / velocity


@dataclass(frozen=True)
class GridState:
    """1-based cell indices along the x (k1) and y (k2) axes."""

    k1: int
    k2: int


@dataclass(frozen=True)
class Position3D:
    """Point at (x, y) meters and height h meters."""

    x: float
    y: float
    h: float


def validate_state(area: AreaSpec, s: GridState) -> None:
    m = area.cells_per_axis
    if not (1 <= s.k1 <= m and 1 <= s.k2 <= m):
        raise ValueError(f"grid state {s} outside {m}x{m} grid")


def state_index(area: AreaSpec, s: GridState) -> int:
    """Flat 0-based index of a grid state (row-major in k2, then k1)."""
    validate_state(area, s)
    return (s.k2 - 1) * area.cells_per_axis + (s.k1 - 1)


def state_from_index(area: AreaSpec, index: int) -> GridState:
    m = area.cells_per_axis
    if not 0 <= index < m * m:
        raise ValueError(f"state index {index} outside grid of {m * m} states")
    return GridState(index % m + 1, index // m + 1)


def cell_center(area: AreaSpec, s: GridState, center_offset: bool = False) -> Position3D:
    """Reference point of a grid cell at flight altitude.

    The default convention anchors cell (k1, k2) at
    (x_min + (k1 - 1) * width, y_min + (k2 - 1) * width); a uniform
    translation of all states, so relative geometry is unchanged. Set
    ``center_offset`` to shift by half a cell to geometric centers.
    """
    validate_state(area, s)
    wx = area.cell_width_x
    wy = area.cell_width_y
    x = area.x_min + wx * (s.k1 - 1)
    y = area.y_min + wy * (s.k2 - 1)
    if center_offset:
        x += wx / 2.0
        y += wy / 2.0
    return Position3D(x, y, area.altitude)


def snap_to_state(area: AreaSpec, p: Position3D, center_offset: bool = False) -> GridState:
    """Grid cell whose reference point is nearest to p; ties go to the lower index."""
    if not (area.x_min <= p.x <= area.x_max and area.y_min <= p.y <= area.y_max):
        raise ValueError(f"position ({p.x}, {p.y}) outside the service area")

    def nearest(coord: float, lo: float, width: float) -> int:
        offset = width / 2.0 if center_offset else 0.0
        # ceil(t - 0.5) sends the exact midpoint to the lower cell
        k = 1 + math.ceil((coord - lo - offset) / width - 0.5)
        return min(max(k, 1), area.cells_per_axis)

    return GridState(nearest(p.x, area.x_min, area.cell_width_x),
                     nearest(p.y, area.y_min, area.cell_width_y))


def apply_action(area: AreaSpec, s: GridState, a: Action) -> GridState:
    """One-cell move; moves that would exit the grid leave the state unchanged."""
    validate_state(area, s)
    m = area.cells_per_axis
    k1, k2 = s.k1, s.k2
    if a == Action.LEFT:
        k1 = max(k1 - 1, 1)
    elif a == Action.RIGHT:
        k1 = min(k1 + 1, m)
    elif a == Action.FORWARD:
        k2 = min(k2 + 1, m)
    elif a == Action.BACKWARD:
        k2 = max(k2 - 1, 1)
    else:
        raise ValueError(f"unknown action {a!r}")
    if k1 == s.k1 and k2 == s.k2:
        return s
    return GridState(k1, k2)


def _euclidean(p1: Position3D, p2: Position3D) -> float:
    return math.sqrt((p1.x - p2.x) ** 2 + (p1.y - p2.y) ** 2 + (p1.h - p2.h) ** 2)


def dist_to_final(p: Position3D, p_final: Position3D, exponent: int = 1) -> float:
    """Distance in meters (exponent 1) or squared meters (exponent 2) to the destination."""
    d = _euclidean(p, p_final)
    if exponent == 1:
        return d
    if exponent == 2:
        return d * d
    raise ValueError("exponent must be 1 or 2")


def pairwise_dist(p1: Position3D, p2: Position3D, exponent: int = 1) -> float:
    """Separation between two stations, same exponent convention as dist_to_final."""
    d = _euclidean(p1, p2)
    if exponent == 1:
        return d
    if exponent == 2:
        return d * d
    raise ValueError("exponent must be 1 or 2")

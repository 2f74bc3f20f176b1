"""Analytic geometry of a single Wi-Fi link with one reflecting walker.

All functions work in the canonical frame: transmitter at the origin and
receiver at ``(d_los, 0)``.  :meth:`Scene.from_world` rotates and
translates arbitrary device placements into that frame and keeps the rigid
transform so results can be mapped back.

Position arguments accept either a single ``(x, y)`` pair or arrays that
broadcast against each other (``pos[0]`` holds x, ``pos[1]`` holds y), so
the grid searches in :mod:`wptrack.fusion` can reuse the same code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateEllipse, DegenerateGeometry

SPEED_OF_LIGHT = 299_792_458.0


def wrap_angle(angle):
    """Wrap angles into (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class Scene:
    """Link geometry in the canonical frame.

    ``area`` is ``(xmin, xmax, ymin, ymax)`` in canonical metres.
    ``array_axis`` is the direction of the receiver's linear antenna array
    (radians, canonical frame); the array looks into the half-plane obtained
    by rotating that axis by +90 degrees.  ``origin``/``rotation`` record the
    world-to-canonical transform: ``canon = R(-rotation) @ (world - origin)``.
    """

    tx_pos: tuple = (0.0, 0.0)
    rx_pos: tuple = (4.0, 0.0)
    carrier_freq: float = 5.32e9
    antenna_spacing: float | None = None
    area: tuple = (0.0, 4.0, -2.0, 2.0)
    array_axis: float = np.pi / 2
    origin: tuple = field(default=(0.0, 0.0))
    rotation: float = 0.0

    def __post_init__(self):
        tx = tuple(float(v) for v in self.tx_pos)
        rx = tuple(float(v) for v in self.rx_pos)
        object.__setattr__(self, "tx_pos", tx)
        object.__setattr__(self, "rx_pos", rx)
        object.__setattr__(self, "area", tuple(float(v) for v in self.area))
        if self.carrier_freq <= 0:
            raise ValueError("carrier_freq must be positive")
        if tx != (0.0, 0.0) or rx[1] != 0.0 or rx[0] <= 0.0:
            raise DegenerateGeometry(
                "Scene must be canonical (tx at origin, rx on +x axis); "
                "use Scene.from_world for other placements"
            )
        xmin, xmax, ymin, ymax = self.area
        if xmin > xmax or ymin > ymax:
            raise ValueError(f"bad area {self.area}")
        if self.antenna_spacing is None:
            object.__setattr__(self, "antenna_spacing", self.wavelength / 2)
        if self.antenna_spacing <= 0:
            raise ValueError("antenna_spacing must be positive")

    @classmethod
    def from_world(cls, tx_pos, rx_pos, carrier_freq=5.32e9, antenna_spacing=None,
                   area=None, array_axis=None):
        """Build a canonical scene from arbitrary world coordinates.

        The world-frame ``area`` rectangle is mapped to the bounding box of
        its transformed corners, which is exact whenever the link is parallel
        to a world axis.  ``array_axis`` is given in the world frame; the
        default points the array perpendicular to the link.
        """
        tx = np.asarray(tx_pos, dtype=float)
        rx = np.asarray(rx_pos, dtype=float)
        link = rx - tx
        d_los = float(np.hypot(*link))
        if d_los == 0.0:
            raise DegenerateGeometry("tx and rx coincide")
        rotation = float(np.arctan2(link[1], link[0]))
        c, s = np.cos(-rotation), np.sin(-rotation)
        if area is None:
            canon_area = (0.0, d_los, -d_los / 2, d_los / 2)
        else:
            xmin, xmax, ymin, ymax = area
            corners = np.array([[xmin, ymin], [xmin, ymax], [xmax, ymin], [xmax, ymax]]) - tx
            rot = corners @ np.array([[c, s], [-s, c]])
            canon_area = (rot[:, 0].min(), rot[:, 0].max(), rot[:, 1].min(), rot[:, 1].max())
        axis = np.pi / 2 if array_axis is None else wrap_angle(array_axis - rotation)
        return cls(
            tx_pos=(0.0, 0.0),
            rx_pos=(d_los, 0.0),
            carrier_freq=carrier_freq,
            antenna_spacing=antenna_spacing,
            area=tuple(float(v) for v in canon_area),
            array_axis=float(axis),
            origin=(float(tx[0]), float(tx[1])),
            rotation=rotation,
        )

    @property
    def d_los(self) -> float:
        return self.rx_pos[0]

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    def to_world(self, pos):
        pos = np.asarray(pos, dtype=float)
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        x = c * pos[..., 0] - s * pos[..., 1] + self.origin[0]
        y = s * pos[..., 0] + c * pos[..., 1] + self.origin[1]
        return np.stack([x, y], axis=-1)

    def to_canonical(self, pos):
        pos = np.asarray(pos, dtype=float) - np.asarray(self.origin)
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        x = c * pos[..., 0] + s * pos[..., 1]
        y = -s * pos[..., 0] + c * pos[..., 1]
        return np.stack([x, y], axis=-1)

    def contains(self, x, y, tol=1e-9):
        xmin, xmax, ymin, ymax = self.area
        return ((x >= xmin - tol) & (x <= xmax + tol)
                & (y >= ymin - tol) & (y <= ymax + tol))


@dataclass(frozen=True)
class TargetState:
    x: float
    y: float
    phi: float

    @property
    def pos(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class EllipseParams:
    a: float
    b: float
    c: float


def _xy(pos):
    return np.asarray(pos[0], dtype=float), np.asarray(pos[1], dtype=float)


def _scalar(value):
    return float(value) if np.ndim(value) == 0 else value


def angles_from_position(scene: Scene, pos):
    """Departure angle at Tx and arrival angle at Rx for a target at ``pos``.

    Both angles are atan2 bearings of the target as seen from each device,
    in (-pi, pi].
    """
    x, y = _xy(pos)
    at_tx = (x == 0.0) & (y == 0.0)
    at_rx = (x == scene.d_los) & (y == 0.0)
    if np.any(at_tx) or np.any(at_rx):
        raise DegenerateGeometry("target position coincides with a device")
    alpha_t = np.arctan2(y, x)
    alpha_r = np.arctan2(y, x - scene.d_los)
    return _scalar(wrap_angle(alpha_t)), _scalar(wrap_angle(alpha_r))


def doppler_ratio(alpha_t, alpha_r, phi):
    """Ratio of reflected-path length rate to walking speed.

    This is the directional derivative of :func:`path_length` along the
    heading ``phi``; it vanishes for motion tangent to the Fresnel ellipse.
    """
    alpha_t = np.asarray(alpha_t, dtype=float)
    alpha_r = np.asarray(alpha_r, dtype=float)
    ratio = (2.0 * np.cos((alpha_t - alpha_r) / 2)
             * np.cos((alpha_t + alpha_r) / 2 - phi))
    return _scalar(ratio)


def path_length(scene: Scene, pos):
    """Tx -> target -> Rx reflected path length (m)."""
    x, y = _xy(pos)
    return _scalar(np.hypot(x, y) + np.hypot(x - scene.d_los, y))


def ellipse_from_path_length(path_len, d_los) -> EllipseParams:
    """Confocal ellipse (foci Tx, Rx) of all points with the given path length."""
    if not path_len > d_los:
        raise DegenerateEllipse(
            f"path length {path_len!r} must exceed the LoS distance {d_los!r}"
        )
    a = path_len / 2.0
    c = d_los / 2.0
    return EllipseParams(a=a, b=float(np.sqrt(a * a - c * c)), c=c)


def ellipse_residual(ellipse: EllipseParams, pos):
    """Signed value of the ellipse equation at ``pos`` (0 on the ellipse)."""
    x, y = _xy(pos)
    return _scalar((x - ellipse.c) ** 2 / ellipse.a ** 2 + y ** 2 / ellipse.b ** 2 - 1.0)


def propagate(state: TargetState, d: float) -> TargetState:
    """Advance the walker by one stride ``d`` along its heading."""
    if d < 0:
        raise ValueError("stride must be non-negative")
    return TargetState(
        x=state.x + d * np.cos(state.phi),
        y=state.y + d * np.sin(state.phi),
        phi=state.phi,
    )


def departure_angle_recursion(pos_t, pos_t1) -> float:
    """Departure angle at time t rebuilt from the next position.

    The bearing of ``pos_t1`` plus the signed angle swept between the two
    positions as seen from Tx.  The signed angle comes from the 2D cross
    product so the identity holds for clockwise and counter-clockwise motion.
    """
    x0, y0 = (float(v) for v in pos_t)
    x1, y1 = (float(v) for v in pos_t1)
    if (x0 == 0.0 and y0 == 0.0) or (x1 == 0.0 and y1 == 0.0):
        raise DegenerateGeometry("position coincides with the transmitter")
    alpha_t1 = np.arctan2(y1, x1)
    beta = np.arctan2(x1 * y0 - y1 * x0, x1 * x0 + y1 * y0)
    return wrap_angle(alpha_t1 + beta)


def array_angle(scene: Scene, pos):
    """Angle between the receiver array axis and the direction to ``pos``.

    This is what a uniform linear array measures: a value in [0, pi].
    """
    x, y = _xy(pos)
    dx = x - scene.d_los
    dy = y - scene.rx_pos[1]
    r = np.hypot(dx, dy)
    if np.any(r == 0):
        raise DegenerateGeometry("target position coincides with the receiver")
    cos_theta = (dx * np.cos(scene.array_axis) + dy * np.sin(scene.array_axis)) / r
    return _scalar(np.arccos(np.clip(cos_theta, -1.0, 1.0)))


def bearing_from_array_angle(scene: Scene, theta):
    """Canonical-frame bearing (atan2 convention) for an array angle.

    The array cannot tell front from back; the front half-plane (the side the
    sensing area lies on) is assumed.
    """
    # front-side direction is the array axis rotated by +theta
    return wrap_angle(np.asarray(theta, dtype=float) + scene.array_axis)

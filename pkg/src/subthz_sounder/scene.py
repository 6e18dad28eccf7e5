"""Street-canyon geometry and deterministic image-method multipath.

The canyon is a strip of street along the x axis, bounded by two building
walls at ``y = +/- street_width / 2`` and the ground plane at ``z = 0``.
Reflected paths are found with mirror images of the transmitter; each path
is an unfolded straight segment from the receiver to an image point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import speed_of_light

__all__ = [
    "CanyonGeometry",
    "Placement",
    "PathKind",
    "Polarization",
    "PropagationPath",
    "friis_amplitude",
    "friis_gain_db",
    "fresnel_reflection",
    "trace_paths",
    "placement_along_street",
]


class Polarization(str, enum.Enum):
    TE = "TE"
    TM = "TM"


class PathKind(str, enum.Enum):
    LOS = "LOS"
    GROUND = "Ground"
    WALL = "Wall"
    WALL_GROUND = "WallGround"


@dataclass(frozen=True)
class CanyonGeometry:
    street_width: float = 15.5
    building_height: float = 20.0
    canyon_length: float = 200.0
    ground_rel_permittivity: complex = 5.0 - 0.4j
    wall_rel_permittivity: complex = 6.0 - 0.3j

    def __post_init__(self):
        for name in ("street_width", "building_height", "canyon_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("ground_rel_permittivity", "wall_rel_permittivity"):
            eps = complex(getattr(self, name))
            if eps.real < 1.0:
                raise ValueError(f"{name} must have real part >= 1, got {eps!r}")
            object.__setattr__(self, name, eps)


@dataclass(frozen=True)
class Placement:
    tx_position: tuple[float, float, float]
    rx_position: tuple[float, float, float]

    def __post_init__(self):
        tx = tuple(float(v) for v in self.tx_position)
        rx = tuple(float(v) for v in self.rx_position)
        if len(tx) != 3 or len(rx) != 3:
            raise ValueError("positions must be 3D points")
        object.__setattr__(self, "tx_position", tx)
        object.__setattr__(self, "rx_position", rx)
        if tx[2] <= 0 or rx[2] <= 0:
            raise ValueError("antenna heights must be above ground")
        if math.hypot(tx[0] - rx[0], tx[1] - rx[1]) <= 0:
            raise ValueError("horizontal TX-RX separation must be positive")

    @property
    def horizontal_distance(self) -> float:
        return math.hypot(self.tx_position[0] - self.rx_position[0],
                          self.tx_position[1] - self.rx_position[1])

    @property
    def distance(self) -> float:
        return math.dist(self.tx_position, self.rx_position)

    def swapped(self) -> "Placement":
        return Placement(self.rx_position, self.tx_position)


@dataclass(frozen=True)
class PropagationPath:
    """One specular ray.

    ``gain`` is the complex voltage gain between isotropic antennas, i.e.
    free-space spreading and phase times the product of reflection
    coefficients. ``image_position`` is the (possibly mirrored) transmitter
    point whose straight line to the receiver has the unfolded path length.
    """

    delay: float
    aoa_azimuth: float
    gain: complex
    kind: PathKind
    wall_order: int = 0
    image_position: tuple[float, float, float] | None = None

    @property
    def length(self) -> float:
        return self.delay * speed_of_light

    @property
    def power_db(self) -> float:
        return 20.0 * math.log10(abs(self.gain))

    @property
    def label(self) -> str:
        if self.kind in (PathKind.WALL, PathKind.WALL_GROUND):
            return f"{self.kind.value}({self.wall_order})"
        return self.kind.value


def friis_amplitude(distance: float, frequency: float) -> complex:
    """Free-space voltage gain ``lambda / (4 pi d) * exp(-j 2 pi d / lambda)``."""
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance!r}")
    if not frequency > 0:
        raise ValueError(f"frequency must be positive, got {frequency!r}")
    wavelength = speed_of_light / frequency
    # reduce the phase in cycles first so large d/lambda keeps full precision
    cycles = math.fmod(distance / wavelength, 1.0)
    return wavelength / (4.0 * math.pi * distance) * complex(
        math.cos(-2.0 * math.pi * cycles), math.sin(-2.0 * math.pi * cycles))


def friis_gain_db(distance: float, frequency: float) -> float:
    """Free-space power gain in dB, ``-20 log10(4 pi d f / c)``."""
    if not distance > 0 or not frequency > 0:
        raise ValueError("distance and frequency must be positive")
    return -20.0 * math.log10(4.0 * math.pi * distance * frequency / speed_of_light)


def fresnel_reflection(grazing_angle: float, rel_permittivity: complex,
                       polarization: Polarization | str = Polarization.TM) -> complex:
    """Fresnel reflection coefficient of a smooth dielectric half-space.

    ``grazing_angle`` is measured from the surface, so ``pi / 2`` is normal
    incidence. TM means the electric field lies in the plane of incidence.
    """
    if not 0.0 < grazing_angle <= math.pi / 2:
        raise ValueError(f"grazing angle must be in (0, pi/2], got {grazing_angle!r}")
    pol = Polarization(polarization)
    eps = complex(rel_permittivity)
    s = math.sin(grazing_angle)
    root = np.sqrt(eps - math.cos(grazing_angle) ** 2)
    if pol is Polarization.TE:
        return complex((s - root) / (s + root))
    return complex((eps * s - root) / (eps * s + root))


def _check_inside(geometry: CanyonGeometry, point, name: str) -> None:
    x, y, z = point
    half = geometry.street_width / 2
    if not 0.0 <= x <= geometry.canyon_length:
        raise ValueError(f"{name} x={x} lies outside the canyon length [0, {geometry.canyon_length}]")
    if not -half < y < half:
        raise ValueError(f"{name} y={y} lies outside the street (|y| < {half})")
    if not 0.0 < z < geometry.building_height:
        raise ValueError(f"{name} height {z} must be in (0, {geometry.building_height})")


def _azimuth(dx: float, dy: float, forward: float) -> float:
    # forward = +1 or -1: sign of the street axis pointing from RX toward TX
    az = math.atan2(forward * dy, forward * dx)
    return az % (2.0 * math.pi)


def trace_paths(geometry: CanyonGeometry, placement: Placement, frequency: float,
                max_wall_order: int = 2, polarization: Polarization | str = Polarization.TM,
                wall_polarization: Polarization | str | None = None,
                include_ground: bool = True) -> list[PropagationPath]:
    """Trace LOS, ground, wall and wall+ground paths with the image method.

    Wall images of order ``n`` sit at ``y_n = n W + (-1)^n y_tx`` for
    ``n = +/-1 .. +/-max_wall_order``; every wall path also gets a single
    ground-bounce twin. ``wall_polarization`` defaults to ``polarization``.
    The arrival azimuth is zero toward the transmitter along the street and
    grows counter-clockwise seen from above.
    """
    if max_wall_order < 0:
        raise ValueError("max_wall_order must be >= 0")
    _check_inside(geometry, placement.tx_position, "tx_position")
    _check_inside(geometry, placement.rx_position, "rx_position")
    pol = Polarization(polarization)
    wall_pol = pol if wall_polarization is None else Polarization(wall_polarization)

    xt, yt, zt = placement.tx_position
    xr, yr, zr = placement.rx_position
    width = geometry.street_width
    forward = 1.0 if xt >= xr else -1.0
    dx = xt - xr

    # (wall index n, ground bounce?) pairs; n == 0 means no wall interaction
    combos = [(0, False)]
    if include_ground:
        combos.append((0, True))
    for order in range(1, max_wall_order + 1):
        for n in (order, -order):
            combos.append((n, False))
            if include_ground:
                combos.append((n, True))

    paths = []
    for n, ground in combos:
        if n % 2 == 0:
            dy = n * width + (yt - yr)
            y_img = n * width + yt
        else:
            dy = n * width - (yt + yr)
            y_img = n * width - yt
        if ground:
            dz = -(zt + zr)
            z_img = -zt
        else:
            dz = zt - zr
            z_img = zt
        horizontal = math.hypot(dx, dy)
        length = math.sqrt(horizontal * horizontal + dz * dz)

        gain = friis_amplitude(length, frequency)
        if n != 0:
            gamma = fresnel_reflection(math.asin(abs(dy) / length),
                                       geometry.wall_rel_permittivity, wall_pol)
            gain *= gamma ** abs(n)
        if ground:
            gain *= fresnel_reflection(math.asin(abs(dz) / length),
                                       geometry.ground_rel_permittivity, pol)

        if n == 0:
            kind = PathKind.GROUND if ground else PathKind.LOS
        else:
            kind = PathKind.WALL_GROUND if ground else PathKind.WALL
        paths.append(PropagationPath(
            delay=length / speed_of_light,
            aoa_azimuth=_azimuth(dx, dy, forward),
            gain=gain,
            kind=kind,
            wall_order=abs(n),
            image_position=(xt, y_img, z_img),
        ))

    paths.sort(key=lambda p: p.delay)
    return paths


def placement_along_street(distance: float, height: float = 1.5, tx_x: float = 0.0,
                           rx_height: float | None = None) -> Placement:
    """TX and RX on the street centre line, ``distance`` metres apart."""
    rx_height = height if rx_height is None else rx_height
    return Placement((tx_x, 0.0, height), (tx_x + distance, 0.0, rx_height))

"""
Scene geometry for the multistatic sensing network.

This module handles:
- Circular and linear receiver topologies
- Bistatic delays and two-leg path loss
- Target sampling over the topology's support region
- SNR bookkeeping (per-receiver SNR, aggregate RSNR, energy calibration)
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np

from modules.exceptions import GeometryError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299792458.0  # m/s

Position = Union[Tuple[float, float], np.ndarray]


@dataclass(frozen=True)
class TopologySpec:
    """Receiver layout and target support (defaults follow the reference scenario)."""
    kind: str = "circular"          # circular | linear
    n_receivers: int = 6
    radius: float = 500.0           # circular: receiver circle radius, m
    spacing: float = 100.0          # linear: receiver spacing, m
    standoff: float = 500.0         # linear: transmitter distance to the receiver line, m
    target_offset: float = 300.0    # linear: target line distance to the receiver line, m

    def __post_init__(self) -> None:
        if self.kind not in ("circular", "linear"):
            raise GeometryError(f"Unknown topology kind: {self.kind}")
        if self.n_receivers < 1:
            raise GeometryError("At least one receiver is required")
        if self.kind == "circular" and self.radius <= 0:
            raise GeometryError("Circular topology radius must be positive")
        if self.kind == "linear" and self.spacing <= 0:
            raise GeometryError("Linear topology spacing must be positive")


@dataclass(frozen=True)
class Scene:
    """Transmitter/receiver positions and propagation constants."""
    tx: Tuple[float, float]
    rx: np.ndarray                  # (N, 2), meters
    c: float = SPEED_OF_LIGHT
    fc: float = 3.55                # GHz

    def __post_init__(self) -> None:
        rx = np.atleast_2d(np.asarray(self.rx, dtype=float))
        if rx.shape[0] < 1 or rx.shape[1] != 2:
            raise GeometryError(f"Receiver positions must have shape (N, 2), got {rx.shape}")
        if not (np.all(np.isfinite(rx)) and np.all(np.isfinite(self.tx))):
            raise GeometryError("All positions must be finite")
        if self.c <= 0:
            raise GeometryError("Propagation speed must be positive")
        object.__setattr__(self, "rx", rx)
        object.__setattr__(self, "tx", (float(self.tx[0]), float(self.tx[1])))

    @property
    def n_receivers(self) -> int:
        return self.rx.shape[0]


@dataclass(frozen=True)
class TargetTruth:
    """True target location theta = (x, y) in meters."""
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class SearchRegion:
    """Disk or axis-aligned box in the plane."""
    kind: str                                   # disk | box
    center: Tuple[float, float]
    radius: float = 0.0                         # disk
    half_extent: Tuple[float, float] = field(default=(0.0, 0.0))  # box

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the bounding box."""
        cx, cy = self.center
        if self.kind == "disk":
            hx = hy = self.radius
        else:
            hx, hy = self.half_extent
        return cx - hx, cx + hx, cy - hy, cy + hy

    def inflate(self, fraction: float) -> "SearchRegion":
        """Grow the region; a box grows by fraction of its largest half extent on every side."""
        if self.kind == "disk":
            return SearchRegion("disk", self.center, radius=self.radius * (1.0 + fraction))
        hx, hy = self.half_extent
        margin = fraction * max(hx, hy)
        return SearchRegion("box", self.center, half_extent=(hx + margin, hy + margin))

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        points = np.atleast_2d(points)
        cx, cy = self.center
        if self.kind == "disk":
            return np.hypot(points[:, 0] - cx, points[:, 1] - cy) <= self.radius + tol
        hx, hy = self.half_extent
        return (np.abs(points[:, 0] - cx) <= hx + tol) & (np.abs(points[:, 1] - cy) <= hy + tol)

    def clamp(self, point: np.ndarray) -> np.ndarray:
        """Project a point onto the region."""
        point = np.asarray(point, dtype=float)
        cx, cy = self.center
        if self.kind == "disk":
            offset = point - np.array([cx, cy])
            dist = np.hypot(*offset)
            if dist <= self.radius:
                return point.copy()
            return np.array([cx, cy]) + offset * (self.radius / dist)
        hx, hy = self.half_extent
        return np.array([np.clip(point[0], cx - hx, cx + hx), np.clip(point[1], cy - hy, cy + hy)])

    def grid(self, n: int) -> np.ndarray:
        """n x n lattice over the bounding box, restricted to the region; shape (M, 2)."""
        if n < 1:
            raise GeometryError("Grid size must be positive")
        xmin, xmax, ymin, ymax = self.bounds
        xs = np.linspace(xmin, xmax, n)
        ys = np.linspace(ymin, ymax, n)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        points = np.column_stack((gx.ravel(), gy.ravel()))
        return points[self.contains(points)]


def build_scene(topology: TopologySpec, fc: float = 3.55, c: float = SPEED_OF_LIGHT) -> Scene:
    """Place the transmitter and receivers for the given topology."""
    n = topology.n_receivers
    if topology.kind == "circular":
        angles = 2.0 * np.pi * np.arange(n) / n
        rx = topology.radius * np.column_stack((np.cos(angles), np.sin(angles)))
        tx = (0.0, 0.0)
    else:
        xs = (np.arange(n) - (n - 1) / 2.0) * topology.spacing
        rx = np.column_stack((xs, np.zeros(n)))
        tx = (0.0, topology.standoff)
    logger.debug(f"Built {topology.kind} scene with {n} receivers")
    return Scene(tx=tx, rx=rx, c=c, fc=fc)


def support_region(topology: TopologySpec) -> SearchRegion:
    """Region over which the target is distributed."""
    if topology.kind == "circular":
        return SearchRegion("disk", (0.0, 0.0), radius=topology.radius)
    half_width = 0.5 * max(topology.n_receivers - 1, 1) * topology.spacing
    return SearchRegion("box", (0.0, topology.target_offset), half_extent=(half_width, 0.0))


def _check_index(scene: Scene, n: int) -> None:
    if not 0 <= n < scene.n_receivers:
        raise GeometryError(f"Receiver index {n} out of range for {scene.n_receivers} receivers")


def bistatic_delay(scene: Scene, n: int, target: Position) -> float:
    """tau_n = (|tx - target| + |rx_n - target|) / c."""
    _check_index(scene, n)
    target = np.asarray(target, dtype=float)
    d_tx = np.hypot(*(np.asarray(scene.tx) - target))
    d_rx = np.hypot(*(scene.rx[n] - target))
    return float((d_tx + d_rx) / scene.c)


def bistatic_delays(scene: Scene, points: np.ndarray) -> np.ndarray:
    """Delays for many candidate positions; returns (M, N) for points of shape (M, 2)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d_tx = np.hypot(points[:, 0] - scene.tx[0], points[:, 1] - scene.tx[1])
    d_rx = np.hypot(points[:, None, 0] - scene.rx[None, :, 0], points[:, None, 1] - scene.rx[None, :, 1])
    return (d_tx[:, None] + d_rx) / scene.c


def pathloss_db(d_km: float, fc: float) -> float:
    """Microcell LoS path loss L = 32.4 + 20 log10(d) + 20 log10(fc), d in km, fc in GHz."""
    if d_km <= 0:
        raise GeometryError(f"Path-loss distance must be positive, got {d_km} km")
    return 32.4 + 20.0 * np.log10(d_km) + 20.0 * np.log10(fc)


def amplitude_coefficient(scene: Scene, n: int, target: Position) -> float:
    """rho_n = 10^(-(L1 + L2)/20) over the tx->target and target->rx_n legs."""
    _check_index(scene, n)
    target = np.asarray(target, dtype=float)
    leg1 = np.hypot(*(np.asarray(scene.tx) - target)) / 1000.0
    leg2 = np.hypot(*(scene.rx[n] - target)) / 1000.0
    if leg1 <= 0 or leg2 <= 0:
        raise GeometryError("Target coincides with the transmitter or a receiver")
    return float(10.0 ** (-(pathloss_db(leg1, scene.fc) + pathloss_db(leg2, scene.fc)) / 20.0))


def sample_target(topology: TopologySpec, rng: np.random.Generator) -> TargetTruth:
    """Draw a target uniformly (by area or length) over the topology's support."""
    region = support_region(topology)
    cx, cy = region.center
    if region.kind == "disk":
        r = region.radius * np.sqrt(rng.uniform())
        phi = rng.uniform(0.0, 2.0 * np.pi)
        return TargetTruth(cx + r * np.cos(phi), cy + r * np.sin(phi))
    hx, _ = region.half_extent
    return TargetTruth(cx + rng.uniform(-hx, hx), cy)


def rsnr(snr_db: Sequence[float]) -> float:
    """Aggregate SNR: 10 log10(sum_n 10^(SNR_n/10))."""
    values = np.asarray(snr_db, dtype=float)
    if values.size == 0:
        raise GeometryError("RSNR requires at least one receiver SNR")
    return float(10.0 * np.log10(np.sum(10.0 ** (values / 10.0))))


def snr_db(energy: float, alphas: Sequence[complex], sigma2: float) -> np.ndarray:
    """Per-receiver SNR_n = E |alpha_n|^2 / sigma_n^2 in dB."""
    gains = np.abs(np.asarray(alphas)) ** 2
    return 10.0 * np.log10(energy * gains / sigma2)


def calibrate_energy(target_rsnr_db: float, alphas: Sequence[complex], sigma2: float) -> float:
    """Transmit energy E for which rsnr(snr_db(E, alphas, sigma2)) equals target_rsnr_db."""
    total_gain = float(np.sum(np.abs(np.asarray(alphas)) ** 2))
    if total_gain <= 0:
        raise GeometryError("Cannot calibrate energy with all-zero reflection coefficients")
    return 10.0 ** (target_rsnr_db / 10.0) * sigma2 / total_gain

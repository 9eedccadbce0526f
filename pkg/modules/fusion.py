"""
Fusion-center reconstruction and ML target localization.

This module handles:
- Receiver-side payload construction (local estimates + packed level indices)
- Fusion-center reconstruction of the quantized sample windows
- Advanced (samples + delays) and baseline (delays only) log-likelihoods
- Grid + multi-seed Nelder-Mead maximization over the search region
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from modules.exceptions import FusionError
from modules.geometry import Scene, SearchRegion, bistatic_delays
from modules.local_estimation import LocalEstimate, crb_tau
from modules.quantization import (Capacity, build_codec, pack_indices, stack_complex,
                                  unpack_indices)
from modules.signal_generator import ObservationWindow, observation_window
from modules.waveform import PulseSpec, sample_pulse

logger = logging.getLogger(__name__)

SEARCH_GRID_POINTS = 50
SEARCH_SEEDS = 5
POSITION_TOL = 1e-3     # m
MAX_SIMPLEX_ITERATIONS = 2000


class Design(str, Enum):
    ADVANCED = "advanced"
    BASELINE = "baseline"


@dataclass(frozen=True)
class SharedContext:
    """Per-receiver parameters known to both the receiver and the fusion center."""
    spec: PulseSpec
    sigma2: float
    capacity: Capacity
    quantizer: str
    coarse: ObservationWindow

    @property
    def unquantized(self) -> bool:
        return math.isinf(self.capacity)


@dataclass(frozen=True)
class ReceiverPayload:
    """What one receiver sends over the backhaul."""
    tau_hat: float
    alpha_hat: complex
    index_bits: bytes = b""
    bit_length: int = 0
    raw_samples: Optional[np.ndarray] = None    # unquantized mode only


@dataclass(frozen=True)
class Reconstruction:
    """Recovered window samples and the noise model used by the likelihood."""
    window: ObservationWindow
    samples: np.ndarray         # stacked [Re, Im] over the window
    covariance: np.ndarray      # Q_n
    crb_tau_hat: float
    factor: Tuple[np.ndarray, bool]     # Cholesky factor of Q_w + Q_n


@dataclass(frozen=True)
class FusionResult:
    theta: Tuple[float, float]
    design: Design
    loglik: float
    clamped: bool = False
    ambiguous: bool = False


def shared_crb(payload: ReceiverPayload, context: SharedContext) -> float:
    """CRB at (tau_hat, alpha_hat) over the coarse window, computable at both ends."""
    return crb_tau(payload.alpha_hat, context.sigma2, context.spec, payload.tau_hat, context.coarse)


def extract_window(samples: np.ndarray, coarse: ObservationWindow, window: ObservationWindow) -> np.ndarray:
    """Select the forwarded window from samples captured over the coarse window."""
    if not coarse.contains(window):
        raise FusionError("Forwarded window falls outside the capture window")
    return np.asarray(samples)[coarse.positions_of(window)]


def build_payload(estimate: LocalEstimate, samples: np.ndarray, context: SharedContext) -> ReceiverPayload:
    """
    Receiver side: quantize the window around tau_hat and pack the indices.

    Args:
        estimate: Local estimates of this receiver
        samples: Complex samples over the coarse window
        context: Shared parameters

    Returns:
        ReceiverPayload with exactly C_n index bits (or raw samples when C_n is infinite)
    """
    window = observation_window(estimate.tau_hat, context.spec)
    vector = stack_complex(extract_window(samples, context.coarse, window))
    if context.unquantized:
        return ReceiverPayload(estimate.tau_hat, estimate.alpha_hat, raw_samples=vector)

    crb_hat = crb_tau(estimate.alpha_hat, context.sigma2, context.spec, estimate.tau_hat, context.coarse)
    codec = build_codec(estimate.tau_hat, estimate.alpha_hat, crb_hat, int(context.capacity),
                        context.sigma2, context.spec, context.quantizer)
    indices = codec.encode(vector)
    return ReceiverPayload(estimate.tau_hat, estimate.alpha_hat,
                           index_bits=pack_indices(indices, codec.allocation),
                           bit_length=codec.allocation.budget)


def reconstruct_samples(payload: ReceiverPayload, context: SharedContext) -> Reconstruction:
    """Rebuild the codec from shared context and decode the payload."""
    crb_hat = shared_crb(payload, context)
    window = observation_window(payload.tau_hat, context.spec)
    if context.unquantized:
        if payload.raw_samples is None or len(payload.raw_samples) != 2 * window.size:
            raise FusionError("Unquantized payload must carry the raw window samples")
        samples = np.asarray(payload.raw_samples, dtype=float)
        covariance = np.zeros((2 * window.size, 2 * window.size))
    else:
        if payload.bit_length != context.capacity:
            raise FusionError(f"Payload has {payload.bit_length} bits, capacity is {context.capacity}")
        codec = build_codec(payload.tau_hat, payload.alpha_hat, crb_hat, int(context.capacity),
                            context.sigma2, context.spec, context.quantizer)
        indices = unpack_indices(payload.index_bits, payload.bit_length, codec.allocation)
        samples, covariance = codec.decode(indices)
    total = 0.5 * context.sigma2 * np.eye(len(samples)) + covariance
    factor = cho_factor(0.5 * (total + total.T))
    return Reconstruction(window=window, samples=samples, covariance=covariance,
                          crb_tau_hat=crb_hat, factor=factor)


def _as_points(theta: Union[Sequence[float], np.ndarray]) -> Tuple[np.ndarray, bool]:
    points = np.asarray(theta, dtype=float)
    single = points.ndim == 1
    return np.atleast_2d(points), single


def _delay_terms(delays: np.ndarray, payloads: Sequence[ReceiverPayload], crbs: Sequence[float]) -> np.ndarray:
    total = np.zeros(delays.shape[0])
    for n, (payload, crb) in enumerate(zip(payloads, crbs)):
        total -= (payload.tau_hat - delays[:, n]) ** 2 / (2.0 * crb)
    return total


def loglik_baseline(theta: Union[Sequence[float], np.ndarray], payloads: Sequence[ReceiverPayload],
                    scene: Scene, crbs: Sequence[float]) -> Union[float, np.ndarray]:
    """-sum_n (tau_hat_n - tau_n(theta))^2 / (2 CRB_n), constants dropped."""
    points, single = _as_points(theta)
    values = _delay_terms(bistatic_delays(scene, points), payloads, crbs)
    return float(values[0]) if single else values


def loglik_advanced(theta: Union[Sequence[float], np.ndarray], payloads: Sequence[ReceiverPayload],
                    reconstructions: Sequence[Reconstruction], scene: Scene,
                    spec: PulseSpec) -> Union[float, np.ndarray]:
    """
    Sample term -1/2 (r~ - s)(Q_w + Q_n)^-1 (r~ - s)^T plus the baseline delay term.

    s_n is built from alpha_hat_n and tau_n(theta); per-receiver terms are summed in
    receiver order.
    """
    points, single = _as_points(theta)
    delays = bistatic_delays(scene, points)
    values = _delay_terms(delays, payloads, [r.crb_tau_hat for r in reconstructions])
    for n, (payload, rec) in enumerate(zip(payloads, reconstructions)):
        pulse = sample_pulse(spec, rec.window.times(spec)[None, :] - delays[:, n, None])
        scaled = np.sqrt(spec.E) * pulse
        model = np.hstack((payload.alpha_hat.real * scaled, payload.alpha_hat.imag * scaled))
        residual = (rec.samples[None, :] - model).T
        values -= 0.5 * np.sum(residual * cho_solve(rec.factor, residual), axis=0)
    return float(values[0]) if single else values


def estimate_location(design: Union[Design, str], payloads: Sequence[ReceiverPayload], scene: Scene,
                      spec: PulseSpec, region: SearchRegion,
                      contexts: Sequence[SharedContext]) -> FusionResult:
    """
    Maximize the selected log-likelihood over the search region.

    A 50x50 grid ranks candidate seeds; the best 5 are refined with Nelder-Mead to
    1e-3 m and the best refined point is returned (clamped to the region if needed).
    """
    design = Design(design)
    n = len(payloads)
    if n == 0 or len(contexts) != n:
        raise FusionError("Need one payload and one shared context per receiver")

    if design is Design.ADVANCED:
        reconstructions = [reconstruct_samples(p, c) for p, c in zip(payloads, contexts)]

        def objective(theta):
            return loglik_advanced(theta, payloads, reconstructions, scene, spec)
    else:
        crbs = [shared_crb(p, c) for p, c in zip(payloads, contexts)]

        def objective(theta):
            return loglik_baseline(theta, payloads, scene, crbs)

    grid = region.grid(SEARCH_GRID_POINTS)
    if grid.shape[0] == 0:
        raise FusionError("Search region is empty")
    scores = objective(grid)
    seeds = grid[np.argsort(-scores, kind="stable")[:SEARCH_SEEDS]]
    xmin, xmax, ymin, ymax = region.bounds
    step = max(xmax - xmin, ymax - ymin) / (SEARCH_GRID_POINTS - 1)

    best_point: Optional[np.ndarray] = None
    best_value = -np.inf
    for seed in seeds:
        simplex = np.array([seed, seed + [step, 0.0], seed + [0.0, step]])
        result = minimize(lambda p: -objective(p), seed, method="Nelder-Mead",
                          options={"xatol": POSITION_TOL, "fatol": np.inf,
                                   "initial_simplex": simplex, "maxiter": MAX_SIMPLEX_ITERATIONS})
        value = -float(result.fun)
        if np.isfinite(value) and value > best_value:
            best_point, best_value = np.asarray(result.x, dtype=float), value
    if best_point is None:
        raise FusionError("Location search diverged from every seed")

    clamped = not bool(region.contains(best_point)[0])
    if clamped:
        best_point = region.clamp(best_point)
        best_value = float(objective(best_point))
        logger.warning(f"{design.value} estimate clamped to the search region at {best_point}")

    ambiguous = n < 2 or (design is Design.BASELINE and n < 3)
    return FusionResult(theta=(float(best_point[0]), float(best_point[1])), design=design,
                        loglik=best_value, clamped=clamped, ambiguous=ambiguous)


def fuse_receivers(design: Union[Design, str], estimates: Sequence[LocalEstimate],
                   coarse_samples: Sequence[np.ndarray], contexts: Sequence[SharedContext], scene: Scene,
                   spec: PulseSpec, region: SearchRegion) -> FusionResult:
    """Encode every receiver's payload and run the fusion-center estimator."""
    if Design(design) is Design.BASELINE:
        payloads: List[ReceiverPayload] = [ReceiverPayload(e.tau_hat, e.alpha_hat) for e in estimates]
    else:
        payloads = [build_payload(e, s, c) for e, s, c in zip(estimates, coarse_samples, contexts)]
    return estimate_location(design, payloads, scene, spec, region, contexts)

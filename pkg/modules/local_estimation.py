"""
Per-receiver ML estimation of delay and reflecting coefficient, and delay CRBs.

For a fixed delay the likelihood is maximized over alpha in closed form, so the
search is one-dimensional: maximize |sum r s(kTs - tau)|^2 / sum s(kTs - tau)^2.
The delay is found with a grid scan at Ts/20 followed by bounded Brent
(golden-section) refinement.
"""

import logging
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from modules.exceptions import EstimationError
from modules.signal_generator import ObservationWindow
from modules.waveform import PulseSpec, pulse_derivative, sample_pulse

logger = logging.getLogger(__name__)

GRID_OVERSAMPLING = 20          # coarse scan step is Ts / GRID_OVERSAMPLING
DELAY_REFINE_TOL = 1e-14        # s
TEMPLATE_HALF_WIDTH = 6.0       # template truncation, in pulse widths


@dataclass(frozen=True)
class LocalEstimate:
    """Local estimates and delay CRBs of one receiver."""
    tau_hat: float
    alpha_hat: complex
    crb_tau: float          # at the true parameters when known, else equal to crb_tau_hat
    crb_tau_hat: float      # at (tau_hat, alpha_hat)

    def __post_init__(self) -> None:
        if not (self.crb_tau > 0 and self.crb_tau_hat > 0):
            raise EstimationError("CRB values must be positive")

    def with_true_crb(self, crb_tau: float) -> "LocalEstimate":
        return replace(self, crb_tau=crb_tau)


class _ConcentratedLikelihood:
    """Matched-filter statistic over a sample window with a truncated pulse template."""

    def __init__(self, samples: np.ndarray, window: ObservationWindow, spec: PulseSpec) -> None:
        self.samples = np.asarray(samples, dtype=complex)
        self.window = window
        self.spec = spec
        self._half = int(np.ceil(TEMPLATE_HALF_WIDTH * spec.T / spec.Ts)) + 1
        self._offsets = np.arange(-self._half, self._half + 1)

    def correlate(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Correlation sum(r s) and template energy sum(s^2) at delays u (in samples).

        Returns:
            (numerator, energy) arrays with the shape of u
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        idx = np.floor(u).astype(int)[:, None] + self._offsets[None, :]
        pos = idx - self.window.start
        valid = (pos >= 0) & (pos < self.window.size)
        template = sample_pulse(self.spec, (idx - u[:, None]) * self.spec.Ts) * valid
        taken = self.samples[np.clip(pos, 0, self.window.size - 1)]
        return np.sum(taken * template, axis=1), np.sum(template ** 2, axis=1)

    def statistic(self, u: np.ndarray) -> np.ndarray:
        numerator, energy = self.correlate(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(energy > 0, np.abs(numerator) ** 2 / energy, -np.inf)


def estimate_delay_coeff(samples: np.ndarray, window: ObservationWindow, spec: PulseSpec,
                         sigma2: float) -> LocalEstimate:
    """
    ML estimate of (tau_n, alpha_n) from samples over the coarse window.

    Args:
        samples: Complex samples r_n(kTs) for k in window
        window: Coarse capture window K0
        spec: Pulse parameters (E included)
        sigma2: Noise variance

    Returns:
        LocalEstimate with crb_tau_hat evaluated at the estimates
    """
    samples = np.asarray(samples)
    if samples.shape != (window.size,):
        raise EstimationError(f"Expected {window.size} samples, got shape {samples.shape}")

    likelihood = _ConcentratedLikelihood(samples, window, spec)
    step = 1.0 / GRID_OVERSAMPLING
    grid = np.arange(window.indices[0], window.indices[-1] + step / 2, step)
    stat = likelihood.statistic(grid)
    if not np.any(np.isfinite(stat)):
        raise EstimationError("Degenerate template energy over the capture window")
    u0 = grid[int(np.argmax(stat))]

    # Search the offset from u0; the bounded tolerance carries a relative term sqrt(eps)*|x|
    result = minimize_scalar(
        lambda d: -float(likelihood.statistic(u0 + d)[0]),
        bounds=(-step, step),
        method="bounded",
        options={"xatol": DELAY_REFINE_TOL / spec.Ts},
    )
    u_hat = float(u0 + result.x) if -result.fun >= stat.max() else float(u0)

    numerator, energy = likelihood.correlate(u_hat)
    if energy[0] <= 0 or spec.E <= 0:
        raise EstimationError("Degenerate template energy at the delay estimate")
    tau_hat = u_hat * spec.Ts
    alpha_hat = complex(numerator[0] / (np.sqrt(spec.E) * energy[0]))
    crb_hat = crb_tau(alpha_hat, sigma2, spec, tau_hat, window)
    logger.debug(f"Local estimate tau={tau_hat:.6e}s |alpha|={abs(alpha_hat):.3e} crb={crb_hat:.3e}")
    return LocalEstimate(tau_hat=tau_hat, alpha_hat=alpha_hat, crb_tau=crb_hat, crb_tau_hat=crb_hat)


def crb_tau(alpha: complex, sigma2: float, spec: PulseSpec, tau: float,
            window: ObservationWindow) -> float:
    """
    Delay CRB: 1 / [(2E/sigma2) |alpha|^2 sum_k (ds/dt at kTs - tau)^2] over the window.

    Evaluated at tau_hat with alpha_hat this is CRB_tau_hat.
    """
    gain = abs(alpha) ** 2
    if gain == 0:
        raise EstimationError("CRB undefined for a zero reflecting coefficient")
    derivative = pulse_derivative(spec, window.times(spec) - tau)
    information = (2.0 * spec.E / sigma2) * gain * float(np.sum(derivative ** 2))
    if information <= 0:
        raise EstimationError("Zero Fisher information: window does not cover the pulse")
    return 1.0 / information

"""
Backhaul codec for the forwarded sample window.

This module handles:
- The Gaussian surrogate of the window samples and its KLT
- Lloyd (and uniform) scalar codebooks for Gaussian components
- The additive quantization-noise model and the quantized-sample delay CRB
- ECRB evaluation and greedy bit allocation
- Deterministic codec construction shared by receivers and the fusion center,
  and the bit-packed index payload

Sample vectors are stacked as real parts over K_n followed by imaginary parts.
"""

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh
from scipy.special import ndtr, ndtri

from modules.exceptions import QuantizationError
from modules.signal_generator import ObservationWindow, observation_window
from modules.waveform import PulseSpec, pulse_derivative, sample_pulse

logger = logging.getLogger(__name__)

UNTRANSMITTED_NOISE_FACTOR = 1e6    # eta = factor * gamma for a component with 0 bits
GAUSS_HERMITE_NODES = 15
LLOYD_MAX_ITERATIONS = 200
LLOYD_REL_TOL = 1e-9
UNIFORM_SPAN = 4.0                  # uniform codebook covers mean +/- span * std

Capacity = Union[int, float]        # float only for math.inf (unquantized)


def stack_complex(values: np.ndarray) -> np.ndarray:
    """Complex window samples -> real vector [Re..., Im...]."""
    values = np.asarray(values)
    return np.concatenate((values.real, values.imag)).astype(float)


# ---------------------------------------------------------------------------
# Surrogate and transform
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianSurrogate:
    """First-order Gaussian model of the stacked window samples."""
    mean: np.ndarray
    covariance: np.ndarray
    derivative_vector: np.ndarray   # q
    alpha_parts: Tuple[float, float]
    crb: float
    sigma2: float

    @property
    def dimension(self) -> int:
        return len(self.mean)


def surrogate_moments(tau_hat: float, alpha_hat: complex, crb_tau: float, window: ObservationWindow,
                      spec: PulseSpec, sigma2: float) -> GaussianSurrogate:
    """
    Mean and covariance of the linearized window samples.

    mean = sqrt(E) [aR s(kTs - tau_hat), aI s(kTs - tau_hat)]
    cov  = E crb q^T q + (sigma2/2) I,  q = [aR s'(kTs - tau_hat), aI s'(kTs - tau_hat)]
    """
    if crb_tau < 0 or not np.isfinite(crb_tau):
        raise QuantizationError(f"CRB must be a non-negative finite value, got {crb_tau}")
    if window.size == 0:
        raise QuantizationError("Empty observation window")
    t = window.times(spec) - tau_hat
    pulse = sample_pulse(spec, t)
    derivative = pulse_derivative(spec, t)
    a_re, a_im = float(np.real(alpha_hat)), float(np.imag(alpha_hat))
    mean = np.sqrt(spec.E) * np.concatenate((a_re * pulse, a_im * pulse))
    q = np.concatenate((a_re * derivative, a_im * derivative))
    covariance = spec.E * crb_tau * np.outer(q, q) + 0.5 * sigma2 * np.eye(len(q))
    return GaussianSurrogate(mean=mean, covariance=covariance, derivative_vector=q,
                             alpha_parts=(a_re, a_im), crb=float(crb_tau), sigma2=float(sigma2))


@dataclass(frozen=True)
class KLTBasis:
    """Orthonormal basis U (columns) with component variances gamma, descending."""
    U: np.ndarray
    gamma: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.gamma)

    def transform(self, vector: np.ndarray) -> np.ndarray:
        return self.U.T @ vector

    def inverse(self, components: np.ndarray) -> np.ndarray:
        return self.U @ components

    def noise_covariance(self, eta: np.ndarray) -> np.ndarray:
        """Q_n = U diag(eta) U^T."""
        return (self.U * eta) @ self.U.T


def klt(surrogate: GaussianSurrogate) -> KLTBasis:
    """Eigendecomposition of the surrogate covariance, eigenvalues descending."""
    cov = surrogate.covariance
    scale = max(float(np.max(np.abs(cov))), 1e-300)
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * scale):
        raise QuantizationError("Surrogate covariance is not symmetric")
    gamma, U = eigh(0.5 * (cov + cov.T))
    order = np.argsort(gamma)[::-1]
    gamma, U = gamma[order], U[:, order]
    # Fix column signs so the largest-magnitude entry is positive
    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return KLTBasis(U=U * signs, gamma=gamma)


def identity_basis(surrogate: GaussianSurrogate) -> KLTBasis:
    """Trivial basis for raw-component quantization: U = I, gamma = diag(Q)."""
    return KLTBasis(U=np.eye(surrogate.dimension), gamma=np.diag(surrogate.covariance).copy())


# ---------------------------------------------------------------------------
# Scalar codebooks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarCodebook:
    """Reconstruction levels (ascending) with midpoint decision boundaries."""
    levels: np.ndarray
    boundaries: np.ndarray
    mean: float
    variance: float

    @property
    def size(self) -> int:
        return len(self.levels)


def _codebook(levels: np.ndarray, mean: float, variance: float) -> ScalarCodebook:
    levels = np.asarray(levels, dtype=float)
    return ScalarCodebook(levels=levels, boundaries=0.5 * (levels[1:] + levels[:-1]),
                          mean=float(mean), variance=float(variance))


def _normal_pdf(x: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(x), np.exp(-0.5 * np.square(x)) / np.sqrt(2.0 * np.pi), 0.0)


def _cell_moments(edges: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standard-normal mass, first and second moments of each cell between edges."""
    lo, hi = edges[:-1], edges[1:]
    mass = ndtr(hi) - ndtr(lo)
    first = _normal_pdf(lo) - _normal_pdf(hi)
    with np.errstate(invalid="ignore"):
        lo_term = np.where(np.isfinite(lo), lo * _normal_pdf(lo), 0.0)
        hi_term = np.where(np.isfinite(hi), hi * _normal_pdf(hi), 0.0)
    second = mass + lo_term - hi_term
    return mass, first, second


def _standard_distortion(levels: np.ndarray) -> float:
    edges = np.concatenate(([-np.inf], 0.5 * (levels[1:] + levels[:-1]), [np.inf]))
    mass, first, second = _cell_moments(edges)
    return float(np.sum(second - 2.0 * levels * first + levels ** 2 * mass))


@lru_cache(maxsize=64)
def _standard_lloyd_levels(bits: int) -> Tuple[float, ...]:
    """Lloyd fixed point for N(0, 1) with 2^bits levels."""
    n_levels = 2 ** bits
    # Equal-probability-mass initialization
    levels = ndtri((np.arange(n_levels) + 0.5) / n_levels)
    distortion = _standard_distortion(levels)
    for iteration in range(LLOYD_MAX_ITERATIONS):
        edges = np.concatenate(([-np.inf], 0.5 * (levels[1:] + levels[:-1]), [np.inf]))
        mass, first, _ = _cell_moments(edges)
        levels = np.where(mass > 0, first / np.maximum(mass, 1e-300), levels)
        updated = _standard_distortion(levels)
        if abs(distortion - updated) <= LLOYD_REL_TOL * max(distortion, 1e-300):
            distortion = updated
            break
        distortion = updated
    logger.debug(f"Lloyd codebook with {bits} bits: {iteration + 1} iterations, D={distortion:.6g}")
    return tuple(levels)


def lloyd_codebook(mean: float, variance: float, bits: int) -> ScalarCodebook:
    """Lloyd-optimal 2^bits-level codebook for N(mean, variance), via closed-form centroids."""
    if bits < 1:
        raise QuantizationError(f"Lloyd codebook needs at least 1 bit, got {bits}")
    if variance <= 0:
        raise QuantizationError(f"Variance must be positive, got {variance}")
    standard = np.array(_standard_lloyd_levels(int(bits)))
    return _codebook(mean + np.sqrt(variance) * standard, mean, variance)


def uniform_codebook(mean: float, variance: float, bits: int, span: float = UNIFORM_SPAN) -> ScalarCodebook:
    """2^bits equally spaced midrise levels covering mean +/- span * std."""
    if bits < 1:
        raise QuantizationError(f"Uniform codebook needs at least 1 bit, got {bits}")
    if variance <= 0:
        raise QuantizationError(f"Variance must be positive, got {variance}")
    n_levels = 2 ** bits
    half_range = span * np.sqrt(variance)
    step = 2.0 * half_range / n_levels
    levels = mean - half_range + step * (np.arange(n_levels) + 0.5)
    return _codebook(levels, mean, variance)


def prior_codebook(mean: float, variance: float) -> ScalarCodebook:
    """Single-level codebook at the prior mean (component not transmitted)."""
    return _codebook(np.array([mean]), mean, variance)


def expected_distortion(codebook: ScalarCodebook) -> float:
    """Mean squared error of the codebook for its Gaussian source."""
    std = np.sqrt(codebook.variance)
    standard = (codebook.levels - codebook.mean) / std
    return codebook.variance * _standard_distortion(standard)


def quantize(value: float, codebook: ScalarCodebook) -> int:
    """Nearest-level index; a value on a boundary maps to the lower index."""
    return int(np.searchsorted(codebook.boundaries, value, side="left"))


def dequantize(index: int, codebook: ScalarCodebook) -> float:
    if not 0 <= index < codebook.size:
        raise QuantizationError(f"Index {index} out of range for {codebook.size} levels")
    return float(codebook.levels[index])


# ---------------------------------------------------------------------------
# Noise model, CRB under quantization, ECRB
# ---------------------------------------------------------------------------

def quant_noise_var(gamma: float, bits: Capacity) -> float:
    """
    Additive quantization-noise variance for a component of variance gamma.

    bits >= 1: gamma / (2^(2 bits) - 1), so that 0.5 log2((eta + gamma)/eta) = bits;
    bits == 0: 1e6 * gamma (untransmitted); bits == inf: 0.
    """
    if bits < 0:
        raise QuantizationError(f"Bit count must be non-negative, got {bits}")
    if np.isinf(bits):
        return 0.0
    if bits == 0:
        return UNTRANSMITTED_NOISE_FACTOR * gamma
    return gamma / (4.0 ** bits - 1.0)


def _noise_vector(gamma: np.ndarray, bits: Sequence[Capacity]) -> np.ndarray:
    return np.array([quant_noise_var(g, x) for g, x in zip(gamma, bits)])


@dataclass(frozen=True)
class BitAllocation:
    """Bits per transformed component; total equals the budget."""
    bits: Tuple[int, ...]
    budget: int

    def __post_init__(self) -> None:
        if any(x < 0 for x in self.bits):
            raise QuantizationError("Bit counts must be non-negative")
        if sum(self.bits) != self.budget:
            raise QuantizationError(f"Allocation sums to {sum(self.bits)}, budget is {self.budget}")

    @classmethod
    def zeros(cls, dimension: int) -> "BitAllocation":
        return cls(bits=(0,) * dimension, budget=0)


def derivative_vectors(taus: np.ndarray, alpha_hat: complex, window: ObservationWindow,
                       spec: PulseSpec) -> np.ndarray:
    """ds_n/dtau at each tau, stacked [Re, Im]; shape (2K, len(taus))."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    derivative = -np.sqrt(spec.E) * pulse_derivative(spec, window.times(spec)[:, None] - taus[None, :])
    return np.concatenate((np.real(alpha_hat) * derivative, np.imag(alpha_hat) * derivative), axis=0)


def crb_prime(allocation: Union[BitAllocation, Sequence[Capacity]], basis: KLTBasis,
              surrogate: GaussianSurrogate, tau: Union[float, np.ndarray], spec: PulseSpec,
              window: ObservationWindow, alpha_hat: complex) -> Union[float, np.ndarray]:
    """
    Delay CRB from quantized samples: 1 / [d (Q_w + Q_n)^-1 d^T].

    Q_w = (sigma2/2) I and Q_n = U diag(eta) U^T; d is evaluated at tau with alpha_hat.
    """
    bits = allocation.bits if isinstance(allocation, BitAllocation) else tuple(allocation)
    if len(bits) != basis.dimension:
        raise QuantizationError(f"Allocation has {len(bits)} entries, basis has {basis.dimension}")
    eta = _noise_vector(basis.gamma, bits)
    total = 0.5 * surrogate.sigma2 * np.eye(basis.dimension) + basis.noise_covariance(eta)
    try:
        factor = cho_factor(0.5 * (total + total.T))
    except np.linalg.LinAlgError as e:
        raise QuantizationError(f"Singular noise covariance: {e}") from e
    d = derivative_vectors(tau, alpha_hat, window, spec)
    information = np.sum(d * cho_solve(factor, d), axis=0)
    result = 1.0 / information
    return float(result[0]) if np.ndim(tau) == 0 else result


def _hermite_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.hermite.hermgauss(nodes)
    return x, w / np.sqrt(np.pi)


def ecrb(allocation: Union[BitAllocation, Sequence[Capacity]], tau_hat: float, crb_tau_hat: float,
         basis: KLTBasis, surrogate: GaussianSurrogate, spec: PulseSpec, window: ObservationWindow,
         alpha_hat: complex, nodes: int = GAUSS_HERMITE_NODES) -> float:
    """Expectation of crb_prime over tau ~ N(tau_hat, crb_tau_hat) by Gauss-Hermite quadrature."""
    if crb_tau_hat < 0:
        raise QuantizationError("Prior variance must be non-negative")
    x, w = _hermite_rule(nodes)
    taus = tau_hat + np.sqrt(2.0 * crb_tau_hat) * x
    values = crb_prime(allocation, basis, surrogate, taus, spec, window, alpha_hat)
    result = float(np.sum(w * values))
    if not np.isfinite(result):
        raise QuantizationError("ECRB quadrature produced a non-finite value")
    return result


class EcrbObjective:
    """
    ECRB as a function of the bit allocation, with the quadratic form cached.

    Because Q_w is a scaled identity, Q_w + Q_n = U diag(sigma2/2 + eta) U^T and the
    information at node i is sum_j (U^T d_i)_j^2 / (sigma2/2 + eta_j).
    """

    def __init__(self, basis: KLTBasis, surrogate: GaussianSurrogate, tau_hat: float, crb_tau_hat: float,
                 spec: PulseSpec, window: ObservationWindow, alpha_hat: complex,
                 nodes: int = GAUSS_HERMITE_NODES) -> None:
        x, self._weights = _hermite_rule(nodes)
        taus = tau_hat + np.sqrt(2.0 * max(crb_tau_hat, 0.0)) * x
        projected = basis.transform(derivative_vectors(taus, alpha_hat, window, spec))
        self._energy = projected ** 2       # (2K, nodes)
        self._gamma = basis.gamma
        self._floor = 0.5 * surrogate.sigma2

    @property
    def dimension(self) -> int:
        return len(self._gamma)

    def _precision(self, bits: Sequence[Capacity]) -> np.ndarray:
        return 1.0 / (self._floor + _noise_vector(self._gamma, bits))

    def value(self, bits: Sequence[Capacity]) -> float:
        information = self._precision(bits) @ self._energy
        result = float(np.sum(self._weights / information))
        if not np.isfinite(result):
            raise QuantizationError("ECRB quadrature produced a non-finite value")
        return result

    def candidates(self, bits: Sequence[int]) -> np.ndarray:
        """ECRB after adding one bit to each component j (all j evaluated at once)."""
        precision = self._precision(bits)
        bumped = self._precision([x + 1 for x in bits])
        information = precision @ self._energy
        updated = information[None, :] + (bumped - precision)[:, None] * self._energy
        return np.sum(self._weights[None, :] / updated, axis=1)


def greedy_allocate(capacity: int, objective: EcrbObjective) -> BitAllocation:
    """
    Iterative greedy allocation: starting from zero bits, give each of the
    capacity bits to the component whose increment yields the smallest ECRB
    (ties to the lowest index).
    """
    if capacity < 0:
        raise QuantizationError(f"Capacity must be non-negative, got {capacity}")
    bits = [0] * objective.dimension
    for _ in range(int(capacity)):
        scores = objective.candidates(bits)
        bits[int(np.argmin(scores))] += 1
    return BitAllocation(bits=tuple(bits), budget=int(capacity))


def exhaustive_allocate(capacity: int, objective: EcrbObjective) -> BitAllocation:
    """Brute-force optimal allocation; only for small dimensions and budgets."""
    best_bits: Optional[Tuple[int, ...]] = None
    best_value = np.inf
    for cuts in itertools.combinations_with_replacement(range(capacity + 1), objective.dimension - 1):
        edges = (0,) + cuts + (capacity,)
        bits = tuple(edges[i + 1] - edges[i] for i in range(objective.dimension))
        value = objective.value(bits)
        if value < best_value:
            best_bits, best_value = bits, value
    return BitAllocation(bits=best_bits, budget=capacity)


# ---------------------------------------------------------------------------
# Codec shared by receiver and fusion center
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReceiverCodec:
    """Everything both ends derive from (tau_hat, alpha_hat, C_n, sigma2, PulseSpec)."""
    window: ObservationWindow
    surrogate: GaussianSurrogate
    basis: KLTBasis
    allocation: BitAllocation
    codebooks: Tuple[ScalarCodebook, ...]
    quantizer: str

    def encode(self, vector: np.ndarray) -> List[int]:
        """Stacked window samples -> one level index per component."""
        components = self.basis.transform(vector)
        return [quantize(value, book) for value, book in zip(components, self.codebooks)]

    def decode(self, indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        """Level indices -> (reconstructed stacked samples, quantization-noise covariance Q_n)."""
        if len(indices) != len(self.codebooks):
            raise QuantizationError(f"Expected {len(self.codebooks)} indices, got {len(indices)}")
        components = np.array([dequantize(i, book) for i, book in zip(indices, self.codebooks)])
        eta = _noise_vector(self.basis.gamma, self.allocation.bits)
        return self.basis.inverse(components), self.basis.noise_covariance(eta)


def build_codec(tau_hat: float, alpha_hat: complex, crb_tau_hat: float, capacity: int, sigma2: float,
                spec: PulseSpec, quantizer: str = "klt") -> ReceiverCodec:
    """
    Derive window, surrogate, basis, allocation and codebooks deterministically.

    quantizer "klt": KLT basis with Lloyd codebooks; "uniform": raw components
    with uniform codebooks. Both use the greedy ECRB allocation.
    """
    if quantizer not in ("klt", "uniform"):
        raise QuantizationError(f"Unknown quantizer: {quantizer}")
    window = observation_window(tau_hat, spec)
    surrogate = surrogate_moments(tau_hat, alpha_hat, crb_tau_hat, window, spec, sigma2)
    basis = klt(surrogate) if quantizer == "klt" else identity_basis(surrogate)
    objective = EcrbObjective(basis, surrogate, tau_hat, crb_tau_hat, spec, window, alpha_hat)
    allocation = greedy_allocate(capacity, objective)

    prior_means = basis.transform(surrogate.mean)
    make = lloyd_codebook if quantizer == "klt" else uniform_codebook
    codebooks = tuple(
        make(mean, var, x) if x > 0 else prior_codebook(mean, var)
        for mean, var, x in zip(prior_means, basis.gamma, allocation.bits)
    )
    return ReceiverCodec(window=window, surrogate=surrogate, basis=basis, allocation=allocation,
                         codebooks=codebooks, quantizer=quantizer)


def pack_indices(indices: Sequence[int], allocation: BitAllocation) -> bytes:
    """Concatenate X_j-bit indices in ascending j, most significant bit first."""
    bits: List[int] = []
    for index, width in zip(indices, allocation.bits):
        if width == 0:
            continue
        if not 0 <= index < 2 ** width:
            raise QuantizationError(f"Index {index} does not fit in {width} bits")
        bits.extend((index >> shift) & 1 for shift in range(width - 1, -1, -1))
    return np.packbits(np.array(bits, dtype=np.uint8)).tobytes()


def unpack_indices(data: bytes, bit_length: int, allocation: BitAllocation) -> List[int]:
    """Inverse of pack_indices; components with zero bits decode to index 0."""
    if bit_length != allocation.budget:
        raise QuantizationError(f"Bit stream has {bit_length} bits, allocation expects {allocation.budget}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if len(bits) < bit_length:
        raise QuantizationError(f"Bit stream truncated: {len(bits)} < {bit_length} bits")
    indices: List[int] = []
    position = 0
    for width in allocation.bits:
        value = 0
        for bit in bits[position:position + width]:
            value = (value << 1) | int(bit)
        indices.append(value)
        position += width
    return indices

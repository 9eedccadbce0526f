"""
Test cases for the quantization module
"""

import math
import unittest

import numpy as np

from modules.exceptions import QuantizationError
from modules.local_estimation import crb_tau
from modules.quantization import (BitAllocation, EcrbObjective, GaussianSurrogate, build_codec, crb_prime,
                                  dequantize, ecrb, exhaustive_allocate, expected_distortion,
                                  greedy_allocate, klt, lloyd_codebook, pack_indices, quant_noise_var,
                                  quantize, stack_complex, surrogate_moments, uniform_codebook,
                                  unpack_indices)
from modules.signal_generator import ObservationWindow, observation_window
from modules.waveform import PulseSpec


def _reference_surrogate(tau=500.3e-8, alpha=0.6 - 0.8j, energy=10.0, sigma2=1.0):
    """Surrogate at the reference parameters with the CRB taken over a wide capture window."""
    spec = PulseSpec(E=energy)
    coarse = ObservationWindow(np.arange(450, 551))
    crb = crb_tau(alpha, sigma2, spec, tau, coarse)
    window = observation_window(tau, spec)
    return spec, window, crb, surrogate_moments(tau, alpha, crb, window, spec, sigma2)


class TestLloydCodebook(unittest.TestCase):
    def test_one_bit_levels(self):
        """Test the half-normal centroids +/- sqrt(2/pi)."""
        book = lloyd_codebook(0.0, 1.0, 1)
        np.testing.assert_allclose(book.levels, [-0.7979, 0.7979], atol=1e-3)
        self.assertAlmostEqual(book.levels[1], math.sqrt(2 / math.pi), places=6)

    def test_two_bit_levels(self):
        """Test the four 2-bit Lloyd-Max levels of a standard normal."""
        book = lloyd_codebook(0.0, 1.0, 2)
        np.testing.assert_allclose(book.levels, [-1.510, -0.4528, 0.4528, 1.510], atol=1e-3)

    def test_affine_equivariance(self):
        """Test that codebooks shift with the mean and scale with the standard deviation."""
        standard = lloyd_codebook(0.0, 1.0, 3)
        shifted = lloyd_codebook(2.5, 4.0, 3)
        np.testing.assert_allclose(shifted.levels, 2.5 + 2.0 * standard.levels, rtol=1e-12)

    def test_invalid_arguments(self):
        """Test that zero bits or zero variance are rejected."""
        with self.assertRaises(QuantizationError):
            lloyd_codebook(0.0, 1.0, 0)
        with self.assertRaises(QuantizationError):
            lloyd_codebook(0.0, 0.0, 2)

    def test_monte_carlo_distortion(self):
        """Test the empirical 2-bit distortion against the closed form."""
        book = lloyd_codebook(0.0, 1.0, 2)
        values = np.random.default_rng(8).standard_normal(100000)
        reconstructed = np.array([dequantize(quantize(v, book), book) for v in values])
        empirical = float(np.mean((values - reconstructed) ** 2))
        self.assertAlmostEqual(empirical / expected_distortion(book), 1.0, delta=0.02)


class TestUniformCodebook(unittest.TestCase):
    def test_one_bit_levels(self):
        """Test that one uniform bit places levels at mean +/- 2 std."""
        np.testing.assert_allclose(uniform_codebook(0.0, 1.0, 1).levels, [-2.0, 2.0])

    def test_constant_spacing(self):
        """Test that uniform levels are equally spaced."""
        levels = uniform_codebook(1.0, 9.0, 3).levels
        self.assertEqual(len(levels), 8)
        np.testing.assert_allclose(np.diff(levels), np.diff(levels)[0], rtol=1e-12)

    def test_worse_than_lloyd(self):
        """Test that the uniform codebook never beats Lloyd at equal bits."""
        values = np.random.default_rng(9).standard_normal(100000)
        for bits in (1, 2, 3):
            lloyd = lloyd_codebook(0.0, 1.0, bits)
            uniform = uniform_codebook(0.0, 1.0, bits)
            self.assertGreaterEqual(expected_distortion(uniform), expected_distortion(lloyd))
            errors = {}
            for name, book in (("lloyd", lloyd), ("uniform", uniform)):
                idx = np.searchsorted(book.boundaries, values, side="left")
                errors[name] = np.mean((values - book.levels[idx]) ** 2)
            self.assertGreaterEqual(errors["uniform"], errors["lloyd"])


class TestQuantize(unittest.TestCase):
    def setUp(self):
        self.book = lloyd_codebook(0.0, 1.0, 2)

    def test_level_maps_to_itself(self):
        """Test that each level quantizes to its own index."""
        for index, level in enumerate(self.book.levels):
            self.assertEqual(quantize(level, self.book), index)

    def test_projection(self):
        """Test that quantizing a reconstructed value is idempotent."""
        once = dequantize(quantize(0.31, self.book), self.book)
        twice = dequantize(quantize(once, self.book), self.book)
        self.assertEqual(once, twice)

    def test_boundary_goes_to_lower_index(self):
        """Test that a value on a cell boundary goes to the lower cell."""
        self.assertEqual(quantize(self.book.boundaries[1], self.book), 1)

    def test_dequantize_out_of_range(self):
        """Test that an index beyond the codebook is rejected."""
        with self.assertRaises(QuantizationError):
            dequantize(4, self.book)


class TestQuantNoiseVar(unittest.TestCase):
    def test_reference_values(self):
        """Test eta for one and two bits and the zero and infinite budgets."""
        self.assertAlmostEqual(quant_noise_var(1.0, 1), 1 / 3)
        self.assertAlmostEqual(quant_noise_var(2.0, 2), 2 / 15)
        self.assertEqual(quant_noise_var(1.0, 0), 1e6)
        self.assertEqual(quant_noise_var(1.0, math.inf), 0.0)

    def test_mutual_information_identity(self):
        """Test 0.5 log2((eta + gamma)/eta) = X for X = 1..8."""
        for gamma in (0.5, 1.0, 3.0):
            for bits in range(1, 9):
                eta = quant_noise_var(gamma, bits)
                self.assertAlmostEqual(0.5 * math.log2((eta + gamma) / eta), bits, places=9)

    def test_negative_bits(self):
        """Test that a negative bit count is rejected."""
        with self.assertRaises(QuantizationError):
            quant_noise_var(1.0, -1)


class TestSurrogateAndKlt(unittest.TestCase):
    def test_real_alpha_has_zero_imaginary_mean(self):
        """Test that a real coefficient leaves the imaginary half of the mean at zero."""
        spec = PulseSpec()
        window = observation_window(5e-6, spec)
        surrogate = surrogate_moments(5e-6, 0.4, 1e-26, window, spec, 1.0)
        np.testing.assert_array_equal(surrogate.mean[window.size:], 0.0)

    def test_zero_crb_gives_white_covariance(self):
        """Test that a zero delay CRB leaves only the white noise covariance."""
        spec = PulseSpec()
        window = observation_window(5e-6, spec)
        surrogate = surrogate_moments(5e-6, 0.4 + 0.2j, 0.0, window, spec, 2.0)
        np.testing.assert_array_equal(surrogate.covariance, np.eye(2 * window.size))

    def test_two_dimensional_toy(self):
        """Test rank-one plus identity in two dimensions."""
        surrogate = GaussianSurrogate(mean=np.zeros(2), covariance=np.array([[1.5, 0.0], [0.0, 0.5]]),
                                      derivative_vector=np.array([1.0, 0.0]), alpha_parts=(1.0, 0.0),
                                      crb=1.0, sigma2=1.0)
        basis = klt(surrogate)
        np.testing.assert_allclose(basis.gamma, [1.5, 0.5])
        np.testing.assert_allclose(np.abs(basis.U[:, 0]), [1.0, 0.0], atol=1e-12)

    def test_reference_eigenstructure(self):
        """Test gamma_1 close to sigma2 and every other eigenvalue equal to sigma2/2."""
        _, _, _, surrogate = _reference_surrogate()
        basis = klt(surrogate)
        self.assertTrue(0.9 <= basis.gamma[0] <= 1.1)
        np.testing.assert_allclose(basis.gamma[1:], 0.5, atol=1e-9)
        # Top eigenvector is parallel to q
        q = surrogate.derivative_vector / np.linalg.norm(surrogate.derivative_vector)
        self.assertAlmostEqual(abs(float(basis.U[:, 0] @ q)), 1.0, places=9)

    def test_decorrelation(self):
        """Test that the KLT diagonalizes the covariance with descending variances."""
        _, _, _, surrogate = _reference_surrogate(alpha=0.3 + 0.2j)
        basis = klt(surrogate)
        transformed = basis.U.T @ surrogate.covariance @ basis.U
        off_diagonal = transformed - np.diag(np.diag(transformed))
        self.assertLess(np.max(np.abs(off_diagonal)), 1e-8)
        self.assertTrue(np.all(np.diff(basis.gamma) <= 0))

    def test_transform_round_trip(self):
        """Test that U (U^T v) returns v for arbitrary vectors."""
        _, _, _, surrogate = _reference_surrogate(alpha=-0.4 + 0.9j)
        basis = klt(surrogate)
        np.testing.assert_allclose(basis.U.T @ basis.U, np.eye(basis.dimension), atol=1e-12)
        rng = np.random.default_rng(31)
        for _ in range(20):
            vector = rng.standard_normal(basis.dimension) * rng.uniform(0.1, 100.0)
            np.testing.assert_allclose(basis.inverse(basis.transform(vector)), vector, rtol=0,
                                       atol=1e-10 * np.max(np.abs(vector)))

    def test_asymmetric_covariance(self):
        """Test that an asymmetric covariance is rejected."""
        surrogate = GaussianSurrogate(mean=np.zeros(2), covariance=np.array([[1.0, 0.5], [0.0, 1.0]]),
                                      derivative_vector=np.zeros(2), alpha_parts=(1.0, 0.0),
                                      crb=0.0, sigma2=1.0)
        with self.assertRaises(QuantizationError):
            klt(surrogate)


class TestCrbPrimeAndEcrb(unittest.TestCase):
    def setUp(self):
        self.tau = 500.3e-8
        self.alpha = 0.6 - 0.8j
        self.spec, self.window, self.crb, self.surrogate = _reference_surrogate(self.tau, self.alpha)
        self.basis = klt(self.surrogate)
        self.dim = self.basis.dimension

    def test_unquantized_limit(self):
        """Test that infinite bits recover the window-restricted delay CRB."""
        value = crb_prime([math.inf] * self.dim, self.basis, self.surrogate, self.tau, self.spec,
                          self.window, self.alpha)
        expected = crb_tau(self.alpha, 1.0, self.spec, self.tau, self.window)
        self.assertAlmostEqual(value / expected, 1.0, places=9)

    def test_zero_bits_is_worse(self):
        """Test that sending no bits gives a larger CRB than unquantized samples."""
        unquantized = crb_prime([math.inf] * self.dim, self.basis, self.surrogate, self.tau, self.spec,
                                self.window, self.alpha)
        empty = crb_prime(BitAllocation.zeros(self.dim), self.basis, self.surrogate, self.tau, self.spec,
                          self.window, self.alpha)
        self.assertGreater(empty, unquantized)

    def test_matches_direct_solve(self):
        """Test a 2K = 4 instance against an independent linear solve."""
        window = ObservationWindow(np.array([500, 501]))
        tau = 500.4e-8
        surrogate = surrogate_moments(tau, self.alpha, 2e-26, window, self.spec, 1.0)
        basis = klt(surrogate)
        bits = (2, 1, 0, 1)
        eta = np.array([quant_noise_var(g, x) for g, x in zip(basis.gamma, bits)])
        total = 0.5 * np.eye(4) + basis.U @ np.diag(eta) @ basis.U.T
        derivative = -np.sqrt(self.spec.E) * np.array(
            [2 * np.pi * (k * self.spec.Ts - tau) / self.spec.T ** 2 for k in (500, 501)])
        pulse = (2 / self.spec.T ** 2) ** 0.25 * np.exp(
            -np.pi * (np.array([500, 501]) * self.spec.Ts - tau) ** 2 / self.spec.T ** 2)
        d = np.concatenate((self.alpha.real * -derivative * pulse, self.alpha.imag * -derivative * pulse))
        expected = 1.0 / float(d @ np.linalg.solve(total, d))
        value = crb_prime(bits, basis, surrogate, tau, self.spec, window, self.alpha)
        self.assertAlmostEqual(value / expected, 1.0, places=9)

    def test_allocation_length_mismatch(self):
        """Test that an allocation of the wrong length is rejected."""
        with self.assertRaises(QuantizationError):
            crb_prime([1, 2], self.basis, self.surrogate, self.tau, self.spec, self.window, self.alpha)

    def test_delta_prior(self):
        """Test that a zero prior variance reduces the ECRB to crb_prime at tau_hat."""
        bits = [2, 1] + [0] * (self.dim - 2)
        value = ecrb(bits, self.tau, 0.0, self.basis, self.surrogate, self.spec, self.window, self.alpha)
        direct = crb_prime(bits, self.basis, self.surrogate, self.tau, self.spec, self.window, self.alpha)
        self.assertAlmostEqual(value / direct, 1.0, places=12)

    def test_monte_carlo_average(self):
        """Test the quadrature against a Monte-Carlo average of crb_prime."""
        bits = [3, 2, 1] + [0] * (self.dim - 3)
        prior = (0.05 * self.spec.Ts) ** 2
        value = ecrb(bits, self.tau, prior, self.basis, self.surrogate, self.spec, self.window, self.alpha)
        taus = self.tau + np.sqrt(prior) * np.random.default_rng(12).standard_normal(100000)
        average = float(np.mean(crb_prime(bits, self.basis, self.surrogate, taus, self.spec, self.window,
                                          self.alpha)))
        self.assertAlmostEqual(value / average, 1.0, delta=0.01)

    def test_objective_matches_ecrb(self):
        """Test the cached objective and its candidate scores against direct evaluation."""
        objective = EcrbObjective(self.basis, self.surrogate, self.tau, self.crb, self.spec, self.window,
                                  self.alpha)
        bits = [2, 0, 1] + [0] * (self.dim - 3)
        direct = ecrb(bits, self.tau, self.crb, self.basis, self.surrogate, self.spec, self.window, self.alpha)
        self.assertAlmostEqual(objective.value(bits) / direct, 1.0, places=9)
        scores = objective.candidates(bits)
        for j in (0, 1, 5):
            bumped = list(bits)
            bumped[j] += 1
            self.assertAlmostEqual(scores[j] / objective.value(bumped), 1.0, places=9)

    def test_ecrb_non_increasing_in_bits(self):
        """Test that adding a bit to any component never raises the ECRB."""
        rng = np.random.default_rng(5)
        for _ in range(10):
            bits = [int(b) for b in rng.integers(0, 4, self.dim)]
            base = ecrb(bits, self.tau, self.crb, self.basis, self.surrogate, self.spec, self.window, self.alpha)
            for j in range(self.dim):
                bumped = list(bits)
                bumped[j] += 1
                value = ecrb(bumped, self.tau, self.crb, self.basis, self.surrogate, self.spec, self.window,
                             self.alpha)
                self.assertLessEqual(value, base * (1.0 + 1e-12))


class TestAllocation(unittest.TestCase):
    def _objective(self, rng):
        """Random 2K = 4 instance in the operating regime of the codec."""
        spec = PulseSpec(E=float(rng.uniform(1.0, 100.0)))
        alpha = complex(np.exp(1j * rng.uniform(0, 2 * np.pi)))
        tau = (500 + rng.uniform(0.0, 1.0)) * spec.Ts
        crb = crb_tau(alpha, 1.0, spec, tau, ObservationWindow(np.arange(470, 531)))
        window = ObservationWindow(np.array([500, 501]))
        surrogate = surrogate_moments(tau, alpha, crb, window, spec, 1.0)
        basis = klt(surrogate)
        return EcrbObjective(basis, surrogate, tau, crb, spec, window, alpha)

    def test_zero_capacity(self):
        """Test that a zero budget allocates no bits."""
        objective = self._objective(np.random.default_rng(0))
        self.assertEqual(greedy_allocate(0, objective).bits, (0, 0, 0, 0))

    def test_greedy_matches_exhaustive(self):
        """Test greedy against exhaustive enumeration on random instances."""
        rng = np.random.default_rng(17)
        matches, total = 0, 0
        for _ in range(100):
            objective = self._objective(rng)
            capacity = int(rng.choice([2, 4, 6]))
            greedy = objective.value(greedy_allocate(capacity, objective).bits)
            best = objective.value(exhaustive_allocate(capacity, objective).bits)
            self.assertLessEqual(greedy, 1.05 * best)
            matches += math.isclose(greedy, best, rel_tol=1e-9)
            total += 1
        self.assertGreaterEqual(matches, 95)

    def test_first_bit_to_dominant_component(self):
        """Test that a single bit goes to the highest-variance component."""
        spec, window, crb, surrogate = _reference_surrogate()
        basis = klt(surrogate)
        objective = EcrbObjective(basis, surrogate, 500.3e-8, crb, spec, window, 0.6 - 0.8j)
        allocation = greedy_allocate(1, objective)
        self.assertEqual(allocation.bits[0], 1)
        self.assertEqual(allocation.budget, 1)

    def test_allocation_must_sum_to_budget(self):
        """Test that bits not summing to the budget are rejected."""
        with self.assertRaises(QuantizationError):
            BitAllocation(bits=(1, 2), budget=4)


class TestCodec(unittest.TestCase):
    def setUp(self):
        self.spec = PulseSpec(E=50.0)
        self.tau = 5.00123e-6
        self.alpha = 0.2 + 0.9j
        self.crb = crb_tau(self.alpha, 1.0, self.spec, self.tau, ObservationWindow(np.arange(470, 531)))

    def test_zero_capacity_reconstructs_prior_mean(self):
        """Test that a zero budget decodes to the surrogate mean from an empty payload."""
        codec = build_codec(self.tau, self.alpha, self.crb, 0, 1.0, self.spec)
        indices = codec.encode(np.zeros(codec.surrogate.dimension))
        samples, covariance = codec.decode(indices)
        np.testing.assert_allclose(samples, codec.surrogate.mean, rtol=1e-10, atol=1e-6)
        self.assertEqual(pack_indices(indices, codec.allocation), b"")

    def test_round_trip_through_bits(self):
        """Test that the fusion side decodes the same values the receiver quantized to."""
        rng = np.random.default_rng(21)
        for quantizer in ("klt", "uniform"):
            for capacity in (3, 10, 17):
                codec = build_codec(self.tau, self.alpha, self.crb, capacity, 1.0, self.spec, quantizer)
                vector = codec.surrogate.mean + rng.standard_normal(codec.surrogate.dimension)
                indices = codec.encode(vector)
                payload = pack_indices(indices, codec.allocation)
                self.assertEqual(len(payload), math.ceil(capacity / 8))

                rebuilt = build_codec(self.tau, self.alpha, self.crb, capacity, 1.0, self.spec, quantizer)
                decoded = unpack_indices(payload, capacity, rebuilt.allocation)
                self.assertEqual(decoded, indices)
                np.testing.assert_array_equal(rebuilt.decode(decoded)[0], codec.decode(indices)[0])

    def test_uniform_quantizer_uses_raw_components(self):
        """Test that the uniform quantizer works on the untransformed components."""
        codec = build_codec(self.tau, self.alpha, self.crb, 8, 1.0, self.spec, "uniform")
        np.testing.assert_array_equal(codec.basis.U, np.eye(codec.surrogate.dimension))

    def test_msb_first_packing(self):
        """Test that indices are packed most significant bit first."""
        allocation = BitAllocation(bits=(3, 0, 2), budget=5)
        self.assertEqual(pack_indices([5, 0, 1], allocation), bytes([0b10101000]))
        self.assertEqual(unpack_indices(bytes([0b10101000]), 5, allocation), [5, 0, 1])

    def test_bit_length_mismatch(self):
        """Test that a wrong bit length or an oversized index is rejected."""
        allocation = BitAllocation(bits=(3, 0, 2), budget=5)
        with self.assertRaises(QuantizationError):
            unpack_indices(bytes([0]), 4, allocation)
        with self.assertRaises(QuantizationError):
            pack_indices([8, 0, 0], allocation)

    def test_unknown_quantizer(self):
        """Test that an unknown quantizer name is rejected."""
        with self.assertRaises(QuantizationError):
            build_codec(self.tau, self.alpha, self.crb, 4, 1.0, self.spec, "vector")

    def test_encode_samples(self):
        """Test encoding stacked complex samples produces one index per component."""
        codec = build_codec(self.tau, self.alpha, self.crb, 10, 1.0, self.spec)
        samples = np.ones(codec.window.size) * (0.1 + 0.2j)
        indices = codec.encode(stack_complex(samples))
        self.assertEqual(len(indices), 2 * codec.window.size)
        for index, width in zip(indices, codec.allocation.bits):
            self.assertLess(index, 2 ** width)


if __name__ == '__main__':
    unittest.main()

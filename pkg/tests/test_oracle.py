import numpy as np
import pytest

from spincoh import CentralSpin, PulseSequence, compute_couplings
from spincoh.bath import BathSpin, SpinSystem
from spincoh.cce import levels_from_labels
from spincoh.constants import MHZ_TO_RADMS
from spincoh.errors import DimensionOverflowError
from spincoh.oracle import OracleLimits, exact_coherence, exact_lindblad, ou_monte_carlo

from conftest import make_secular_system


def single_spin_system(isotopes, azz, dissipators=()):
    central = CentralSpin(s=0.5, levels=(0.5, -0.5))
    a = np.zeros((3, 3))
    a[2, 2] = azz
    spin = BathSpin(species=isotopes["13C"], position=np.array([0, 0, 5.0]), a=a,
                    dissipators=dissipators)
    return SpinSystem(central=central, bath=[spin],
                      couplings=compute_couplings(central, [spin]), b_field=np.zeros(3))


class TestExactCoherence:
    def test_single_secular_spin_cosine(self, isotopes):
        azz = 0.7 * MHZ_TO_RADMS
        system = single_spin_system(isotopes, azz)
        levels = levels_from_labels(system.central, system.b_field)
        t = np.linspace(0, 0.05, 31)
        values = exact_coherence(system, levels, PulseSequence.ramsey(), t)
        assert np.max(np.abs(values - np.cos(azz * t / 2))) <= 1e-10

    def test_empty_bath_unit_magnitude(self, isotopes):
        central = CentralSpin(s=0.5, levels=(0.5, -0.5))
        system = SpinSystem(central=central, bath=[], couplings=compute_couplings(central, []),
                            b_field=np.array([0, 0, 120.0]))
        levels = levels_from_labels(central, system.b_field)
        t = np.linspace(0, 1.0, 9)
        values = exact_coherence(system, levels, PulseSequence.ramsey(), t)
        assert np.allclose(np.abs(values), 1.0, atol=1e-12)

    def test_dimension_overflow(self, isotopes):
        system = make_secular_system(0, 6, isotopes)
        levels = levels_from_labels(system.central, system.b_field)
        with pytest.raises(DimensionOverflowError):
            exact_coherence(system, levels, PulseSequence.ramsey(), np.array([0.0, 0.1]),
                            OracleLimits(max_unitary_dim=16))

    def test_nonuniform_grid_falls_back_to_direct_exponentials(self, isotopes):
        azz = 0.7 * MHZ_TO_RADMS
        system = single_spin_system(isotopes, azz)
        levels = levels_from_labels(system.central, system.b_field)
        t = np.array([0.0, 0.0123, 0.0456789, 0.09876])  # no common ladder
        values = exact_coherence(system, levels, PulseSequence.ramsey(), t)
        assert np.max(np.abs(values - np.cos(azz * t / 2))) <= 1e-10


class TestExactLindblad:
    def test_zero_rates_match_unitary_oracle(self, isotopes):
        system = make_secular_system(3, 2, isotopes, names=("13C", "29Si"))
        levels = levels_from_labels(system.central, system.b_field)
        t = np.linspace(0, 1.0, 7)
        for seq in (PulseSequence.ramsey(), PulseSequence.hahn()):
            a = exact_lindblad(system, levels, seq, t)
            b = exact_coherence(system, levels, seq, t)
            # tolerance scales with the accumulated phase ||H|| t ~ 1e3
            assert np.max(np.abs(a - b)) <= 1e-9

    def test_trace_preserved(self, isotopes):
        system = single_spin_system(isotopes, 0.5 * MHZ_TO_RADMS, dissipators=((1.2, "x"),))
        levels = levels_from_labels(system.central, system.b_field)
        t = np.linspace(0, 2.0, 9)
        _, states = exact_lindblad(system, levels, PulseSequence.hahn(), t, return_states=True)
        dim = 4
        traces = states.reshape(len(t), dim, dim).trace(axis1=1, axis2=2)
        assert np.max(np.abs(traces - 1.0)) <= 1e-10

    def test_golden_flip_noise_values(self, isotopes):
        # frozen reference: Azz = 0.5 MHz secular coupling, bath-spin flip
        # noise (jump Ix) at rate 0.8 /ms, Ramsey.  Values pinned from the
        # dense superoperator propagation at first verification.
        system = single_spin_system(isotopes, 0.5 * MHZ_TO_RADMS, dissipators=((0.8, "x"),))
        levels = levels_from_labels(system.central, system.b_field)
        t = np.array([0.0, 0.5, 1.0, 2.0])
        values = exact_lindblad(system, levels, PulseSequence.ramsey(), t)
        golden = np.array([
            1.0,
            0.9048374172840599,
            0.818730751684106,
            0.6703200436445536,
        ])
        assert np.max(np.abs(values.real - golden)) <= 1e-10
        assert np.max(np.abs(values.imag)) <= 1e-10

    def test_dimension_overflow(self, isotopes):
        system = make_secular_system(1, 4, isotopes)
        levels = levels_from_labels(system.central, system.b_field)
        with pytest.raises(DimensionOverflowError):
            exact_lindblad(system, levels, PulseSequence.ramsey(), np.array([0.0, 0.1]),
                           OracleLimits(max_lindblad_dim=8))


class TestOuMonteCarlo:
    def test_static_limit_ramsey(self):
        var = 4.0
        t = np.linspace(0, 0.6, 7)
        values = ou_monte_carlo(var, 1e7, PulseSequence.ramsey(), t, m=200_000, seed=2)
        target = np.exp(-var * t**2 / 2)
        assert np.max(np.abs(np.abs(values) - target)) <= 5e-3

    def test_static_limit_hahn_refocuses(self):
        t = np.linspace(0, 0.6, 7)
        values = ou_monte_carlo(4.0, 1e7, PulseSequence.hahn(), t, m=100_000, seed=3)
        assert np.max(np.abs(np.abs(values) - 1.0)) <= 5e-3

    def test_deterministic_given_seed(self):
        t = np.linspace(0, 1.0, 5)
        a = ou_monte_carlo(2.0, 0.3, PulseSequence.hahn(), t, m=1000, seed=42)
        b = ou_monte_carlo(2.0, 0.3, PulseSequence.hahn(), t, m=1000, seed=42)
        assert np.array_equal(a, b)

    def test_matches_gaussian_quadrature_prediction(self):
        from spincoh.noise import gaussian_coherence, spectrum_from_correlation

        var, tau_c = 9.0, 0.4
        t = np.linspace(0, 1.2, 13)
        spectrum = spectrum_from_correlation("exponential", variance=var, tau_c=tau_c)
        for seq in (PulseSequence.ramsey(), PulseSequence.hahn()):
            predicted = gaussian_coherence(spectrum, seq, t)
            sampled = np.abs(ou_monte_carlo(var, tau_c, seq, t, m=100_000, seed=11))
            mask = predicted > 0.1
            assert np.max(np.abs(sampled[mask] - predicted[mask]) / predicted[mask]) <= 0.02

"""Classical dephasing from spectral densities and filter functions.

Shows the three analytic regimes (static, white, Lorentzian noise), the
decoupling filter functions, and a cross-check of the filter-function
prediction against brute-force Ornstein-Uhlenbeck trajectories.
"""

import numpy as np

from spincoh import PulseSequence, SpectralDensity, gaussian_coherence, ou_monte_carlo
from spincoh.noise import compose_t2, filter_freq, relaxation_from_spectrum

tgrid = np.linspace(0.0, 1.5, 16)
variance = 9.0  # <nu^2> in (rad/ms)^2
tau_c = 0.4     # correlation time in ms

# static noise dephases free evolution but is fully refocused by an echo
static = SpectralDensity.static(variance)
print("static noise:")
print("  Ramsey |L|:", np.round(gaussian_coherence(static, PulseSequence.ramsey(), tgrid), 4))
print("  Hahn   |L|:", np.round(gaussian_coherence(static, PulseSequence.hahn(), tgrid), 4))

# white noise is immune to decoupling: same exponential for any sequence
white = SpectralDensity.white(s0=2.0)
for seq in (PulseSequence.ramsey(), PulseSequence.hahn(), PulseSequence.cpmg(4)):
    values = gaussian_coherence(white, seq, tgrid)
    print(f"white noise, {seq.name:7s}: L(1.5 ms) = {values[-1]:.4f} (exp(-S0 t/2) = "
          f"{np.exp(-2.0 * 1.5 / 2):.4f})")

# Lorentzian (Ornstein-Uhlenbeck) noise: echoes help at t << tau_c
lorentzian = SpectralDensity.lorentzian(variance, tau_c)
ramsey = gaussian_coherence(lorentzian, PulseSequence.ramsey(), tgrid)
hahn = gaussian_coherence(lorentzian, PulseSequence.hahn(), tgrid)
monte_carlo = np.abs(ou_monte_carlo(variance, tau_c, PulseSequence.hahn(), tgrid,
                                    m=50_000, seed=7))
print("\nLorentzian noise, Hahn echo:")
print("  quadrature :", np.round(hahn, 4))
print("  trajectories:", np.round(monte_carlo, 4))
print("  Ramsey      :", np.round(ramsey, 4))

# filter functions at fixed evolution time
t_ref = 1.0
omegas = np.array([0.5, 2.0, 2 * np.pi, 12.0])
print("\nfilter functions F(omega, t = 1 ms):")
for seq in (PulseSequence.ramsey(), PulseSequence.hahn(), PulseSequence.cpmg(2)):
    print(f"  {seq.name:7s}:", np.round(filter_freq(seq, omegas, t_ref), 4))

# golden-rule relaxation from the same spectrum, and the T2 budget
gamma10, t1 = relaxation_from_spectrum(lorentzian, omega_qubit=30.0)
t_phi = 0.5
print(f"\nGamma10 = {gamma10:.4f} /ms -> T1 = {t1:.3f} ms; "
      f"with T_phi = {t_phi} ms the composed T2 = {compose_t2(t1, t_phi):.3f} ms")

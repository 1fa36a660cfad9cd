"""Autocorrelation of the Overhauser field seen by the qubit.

The secular bath field C_AA(t) = <A(t) A(0)> decays as nuclear
flip-flops redistribute polarization; its Fourier transform is the
noise spectrum driving semiclassical dephasing.  The expansion sums
additive cluster contributions here (contrast with the multiplicative
coherence factorization).
"""

import numpy as np

from spincoh import (
    CentralSpin,
    PulseSequence,
    autocorrelation_cce,
    build_connectivity,
    diamond_supercell,
    enumerate_clusters,
    gaussian_coherence,
    generate_bath,
)
from spincoh.bath import SpinSystem
from spincoh.constants import MHZ_TO_RADMS
from spincoh.noise import spectrum_from_correlation

bath = generate_bath(diamond_supercell(0.03), radius=14.0, seed=[9, 0])
central = CentralSpin(s=1.0, d=2870.0 * MHZ_TO_RADMS, levels=(0.0, -1.0))
system = SpinSystem.create(central, bath, b_field=[0.0, 0.0, 500.0])
graph = build_connectivity(bath, 7.0)
clusters = enumerate_clusters(graph, order=2)
print(f"bath of {len(bath)} nuclei, {len(clusters)} clusters")

# flip-flops decorrelate the field over milliseconds; the pair expansion
# is reliable up to roughly the correlation time
tgrid = np.linspace(0.0, 1.0, 51)
correlation = autocorrelation_cce(system, clusters, tgrid)
sigma = np.sqrt(correlation[0])
print(f"C(0) = {correlation[0]:.3e} (rad/ms)^2  ->  field rms {sigma:.0f} rad/ms")
for t, c in list(zip(tgrid, correlation))[::10]:
    print(f"  C({t:4.2f} ms)/C(0) = {c / correlation[0]:+.4f}")

# feed the sampled correlation into the Gaussian-noise machinery; the
# quasi-static field rms sets the inhomogeneous dephasing time
t2_star = np.sqrt(2.0) / sigma
spectrum = spectrum_from_correlation(
    "tabulated", tau=tgrid, values=correlation,
    omega_grid=np.linspace(0.0, 40.0, 201),
)
ramsey_grid = np.linspace(0.0, 3.0 * t2_star, 7)
ramsey = gaussian_coherence(spectrum, PulseSequence.ramsey(), ramsey_grid)
print(f"semiclassical free-evolution decay (T2* scale {t2_star * 1e3:.2f} us):")
print("  ", np.round(ramsey, 4))

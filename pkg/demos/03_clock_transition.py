"""Level structure and dephasing at a zero-field clock transition.

A spin-1 qubit with transverse zero-field splitting has an avoided
crossing at B = 0: the gap is flat in field, so slow magnetic noise
does not shift the transition to first order.  The projected picture
breaks down here (the mixed eigenlevels carry <S> = 0), which is what
the generalized expansion is for: it keeps the central spin inside
every cluster and captures the residual dephasing from quantum
hyperfine entanglement with the unpolarized zero-field nuclei.
"""

import numpy as np

from spincoh import (
    CentralSpin,
    EngineConfig,
    PulseSequence,
    build_connectivity,
    enumerate_clusters,
    gcce_expand,
    generate_bath,
    mean_field_levels,
    sic_supercell,
)
from spincoh.bath import SpinSystem
from spincoh.constants import MHZ_TO_RADMS

D = 1336.0 * MHZ_TO_RADMS  # divacancy-like axial splitting
E = 18.0 * MHZ_TO_RADMS    # transverse splitting opens the avoided crossing

central = CentralSpin(s=1.0, d=D, e=E, levels=(0.0, 1.0), eigen_levels=True)

print("qubit gap vs field (flat at B = 0 -> first-order insensitive):")
for b in (0.0, 0.5, 1.0, 2.0, 4.0):
    levels = mean_field_levels(central, [0.0, 0.0, b])
    print(f"  B = {b:4.1f} G: omega = {levels.omega / MHZ_TO_RADMS:12.6f} MHz")

# small nuclear bath on a SiC-like lattice; at B = 0 the nuclei have no
# Zeeman quantization, so their entanglement with the qubit dephases it
# on the microsecond scale even though the gap itself is field-immune
bath = generate_bath(sic_supercell(0.047, 0.011), radius=12.0, seed=[3, 0])
system = SpinSystem.create(central, bath, b_field=[0.0, 0.0, 0.0])
graph = build_connectivity(bath, 8.0)
clusters = enumerate_clusters(graph, order=2)
print(f"\nbath: {len(bath)} nuclei, {len(clusters)} clusters")

tgrid = np.linspace(0.0, 0.02, 41)
levels = mean_field_levels(central, system.b_field)
config = EngineConfig(method="gcce", order=2, r_dipole=8.0)
curve = gcce_expand(system, clusters, config, PulseSequence.ramsey(), tgrid, levels=levels)
print("free-evolution |L| at the clock transition (hyperfine-limited):")
for t, value in list(zip(tgrid, curve.magnitude))[::5]:
    print(f"  t = {t * 1e3:5.1f} us  |L| = {value:.4f}")

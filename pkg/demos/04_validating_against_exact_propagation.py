"""Order-by-order validation against exact propagation.

On a bath small enough for the full Hilbert space, the expansion at
increasing order converges to the exact result - and reproduces it to
machine precision once the order reaches the bath size.
"""

import numpy as np

from spincoh import (
    CentralSpin,
    EngineConfig,
    PulseSequence,
    build_connectivity,
    cce_expand,
    compute_couplings,
    enumerate_clusters,
    exact_coherence,
    levels_from_labels,
)
from spincoh.bath import BathSpin, SpinSystem
from spincoh.constants import MHZ_TO_RADMS
from spincoh.spinops import load_isotopes

rng = np.random.default_rng(5)
isotopes = load_isotopes()

central = CentralSpin(s=0.5, levels=(0.5, -0.5))
bath = []
for _ in range(5):
    coupling = np.zeros((3, 3))
    coupling[2, :] = rng.normal(0.0, 0.05, 3) * MHZ_TO_RADMS  # secular rows
    bath.append(BathSpin(species=isotopes["13C"], position=rng.uniform(-7, 7, 3), a=coupling))
system = SpinSystem(central=central, bath=bath,
                    couplings=compute_couplings(central, bath),
                    b_field=np.array([0.0, 0.0, 300.0]))

graph = build_connectivity(bath, r_dipole=1e6)  # fully connected
levels = levels_from_labels(central, system.b_field)
tgrid = np.linspace(0.0, 2.0, 21)
sequence = PulseSequence.hahn()

reference = exact_coherence(system, levels, sequence, tgrid)
print("max |L_order - L_exact| for a 5-spin bath (Hahn):")
for order in (1, 2, 3, 4, 5):
    clusters = enumerate_clusters(graph, order)
    config = EngineConfig(method="cce", order=order, r_dipole=1e6)
    curve = cce_expand(system, clusters, config, sequence, tgrid, levels=levels)
    delta = np.max(np.abs(curve.values - reference))
    print(f"  order {order}: {len(clusters):3d} clusters, max |dL| = {delta:.3e}")

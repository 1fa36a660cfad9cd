import numpy as np
import pytest

from spincoh import CentralSpin, compute_couplings, load_isotopes
from spincoh.bath import BathSpin, SpinSystem
from spincoh.constants import MHZ_TO_RADMS


@pytest.fixture(scope="session")
def isotopes():
    return load_isotopes()


def make_secular_system(seed, n_spins, isotopes, b_field=(0.0, 0.0, 300.0),
                        names=("13C", "14N", "29Si", "13C", "14N", "1H")):
    """Random bath with z-row-only central couplings (pure-dephasing family).

    In this family the level-conditioned evolution is exact, so cluster
    expansions at full order must reproduce exact propagation.
    """
    rng = np.random.default_rng(seed)
    central = CentralSpin(s=0.5, levels=(0.5, -0.5))
    bath = []
    for k in range(n_spins):
        species = isotopes[names[k % len(names)]]
        a = np.zeros((3, 3))
        a[2, :] = rng.normal(0.0, 0.05, 3) * MHZ_TO_RADMS
        q = None
        if species.s >= 1.0:
            q = rng.normal(0.0, 0.01, (3, 3)) * MHZ_TO_RADMS
            q = 0.5 * (q + q.T)
        bath.append(BathSpin(species=species, position=rng.uniform(-8.0, 8.0, 3), a=a, q=q))
    system = SpinSystem(central=central, bath=bath,
                        couplings=compute_couplings(central, bath),
                        b_field=np.asarray(b_field, dtype=float))
    # keep the random couplings (compute_couplings only fills missing ones,
    # but make the intent explicit for readers)
    return system


def make_general_system(seed, n_spins, isotopes, s_central=1.0, d_mhz=5.0, e_mhz=0.4,
                        b_field=(0.0, 0.0, 0.0), coupling_mhz=0.02):
    """Random bath with full (level-mixing) coupling tensors."""
    rng = np.random.default_rng(seed)
    central = CentralSpin(s=s_central, d=d_mhz * MHZ_TO_RADMS, e=e_mhz * MHZ_TO_RADMS,
                          levels=(0.0, -1.0) if s_central >= 1 else (0.5, -0.5),
                          eigen_levels=True)
    bath = []
    for _ in range(n_spins):
        a = rng.normal(0.0, coupling_mhz, (3, 3)) * MHZ_TO_RADMS
        bath.append(BathSpin(species=isotopes["13C"], position=rng.uniform(-8.0, 8.0, 3), a=a))
    system = SpinSystem(central=central, bath=bath,
                        couplings=compute_couplings(central, bath),
                        b_field=np.asarray(b_field, dtype=float))
    return system

"""Bath construction and cluster combinatorics.

Stochastic isotope placement on lattices, point-dipole coupling
computation, distance-cutoff connectivity graphs, and enumeration of
connected clusters up to a given expansion order.

Bath generation is reproducible: every lattice site draws its isotope
from an independent PCG64 stream keyed by (seed, image indices, site
index), so enlarging the generation radius extends a bath without
reshuffling its interior.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .constants import MIN_DIPOLE_DISTANCE, MHZ_TO_RADMS, RADMS_TO_MHZ
from .errors import ConfigError
from .spinops import CentralSpin, SpinSpecies, dipolar_tensor, load_isotopes

MAX_BATH_SPINS = 100_000
MAX_CLUSTER_ORDER = 6

_SEED_BIAS = 2**31  # image indices may be negative; SeedSequence keys may not


@dataclass
class BathSpin:
    """A single environmental spin, positioned relative to the central spin."""

    species: SpinSpecies
    position: np.ndarray
    a: np.ndarray | None = None  # 3x3 coupling to the central spin, rad/ms
    q: np.ndarray | None = None  # 3x3 quadrupole product tensor, rad/ms
    dissipators: tuple = ()  # (rate rad/ms, jump label) pairs
    populations: np.ndarray | None = None  # diagonal level populations, m descending

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.position.shape != (3,):
            raise ConfigError("bath spin position must be a 3-vector")
        if self.q is not None and self.species.s < 1.0:
            raise ConfigError(f"quadrupole tensor given for spin-1/2 {self.species.name}")

    @property
    def dim(self) -> int:
        return self.species.dim


@dataclass(frozen=True)
class Supercell:
    """Lattice description: cell vectors, sites, and isotope abundances.

    ``vectors`` rows are the lattice vectors in Angstrom; ``sites`` holds
    (fractional position, element label) pairs; ``abundances`` maps each
    element to {isotope name: fraction}, the remainder being spinless.
    """

    vectors: np.ndarray
    sites: tuple
    abundances: dict

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.shape != (3, 3) or abs(np.linalg.det(v)) < 1e-12:
            raise ConfigError("cell vectors must form a non-singular 3x3 matrix")
        object.__setattr__(self, "vectors", v)
        for element, mix in self.abundances.items():
            total = sum(mix.values())
            if total > 1.0 + 1e-9 or any(f < 0 for f in mix.values()):
                raise ConfigError(f"abundances for element {element} must be in [0, 1] and sum to <= 1")

    def with_abundances(self, overrides: dict) -> "Supercell":
        """Copy with per-element abundance maps replaced by ``overrides``."""
        merged = {**self.abundances, **overrides}
        return Supercell(vectors=self.vectors.copy(), sites=self.sites, abundances=merged)


def diamond_supercell(c13: float = 0.011) -> Supercell:
    """Diamond lattice (a = 3.567 A) with a given 13C fraction."""
    basis = [(0, 0, 0), (0, 0.5, 0.5), (0.5, 0, 0.5), (0.5, 0.5, 0),
             (0.25, 0.25, 0.25), (0.25, 0.75, 0.75), (0.75, 0.25, 0.75), (0.75, 0.75, 0.25)]
    return Supercell(
        vectors=3.567 * np.eye(3),
        sites=tuple((np.array(b, dtype=float), "C") for b in basis),
        abundances={"C": {"13C": c13}},
    )


def sic_supercell(si29: float = 0.047, c13: float = 0.011) -> Supercell:
    """Cubic (3C) SiC lattice (a = 4.3596 A) with given spinful fractions."""
    fcc = [(0, 0, 0), (0, 0.5, 0.5), (0.5, 0, 0.5), (0.5, 0.5, 0)]
    sites = [(np.array(b, dtype=float), "Si") for b in fcc]
    sites += [(np.array(b, dtype=float) + 0.25, "C") for b in fcc]
    return Supercell(
        vectors=4.3596 * np.eye(3),
        sites=tuple(sites),
        abundances={"Si": {"29Si": si29}, "C": {"13C": c13}},
    )


def generate_bath(cell: Supercell, radius: float, seed, isotopes=None,
                  origin=(0.0, 0.0, 0.0), exclude_radius: float = MIN_DIPOLE_DISTANCE,
                  max_spins: int = MAX_BATH_SPINS) -> list[BathSpin]:
    """Populate every lattice site within ``radius`` of the origin.

    Each site independently draws an isotope (or stays spinless) with the
    configured abundance.  ``origin`` is the fractional coordinate placed
    at the central spin; sites closer than ``exclude_radius`` to it are
    skipped (the defect site itself).  Output is sorted by distance.
    """
    if radius <= 0:
        raise ConfigError("bath radius must be positive")
    if isotopes is None:
        isotopes = load_isotopes()
    present_elements = {element for _, element in cell.sites}
    for element in present_elements:
        mix = cell.abundances.get(element)
        if mix is None or not mix:
            raise ConfigError(f"no abundance table for element {element}")
        for name in mix:
            if name not in isotopes:
                raise ConfigError(
                    f"unknown isotope {name!r}; available: {', '.join(sorted(isotopes))}"
                )

    seed_key = list(np.atleast_1d(np.asarray(seed, dtype=np.int64)))
    origin_cart = np.asarray(origin, dtype=float) @ cell.vectors
    inv = np.linalg.inv(cell.vectors)
    # integer image ranges guaranteed to cover the sphere plus one cell margin
    spans = radius * np.linalg.norm(inv, axis=0) + np.abs(np.asarray(origin, dtype=float)) + 1.0
    ranges = [range(-int(np.ceil(s)), int(np.ceil(s)) + 1) for s in spans]

    spins: list[BathSpin] = []
    for image in itertools.product(*ranges):
        shift = np.asarray(image, dtype=float)
        for site_idx, (frac, element) in enumerate(cell.sites):
            pos = (frac + shift) @ cell.vectors - origin_cart
            dist = float(np.linalg.norm(pos))
            if dist > radius or dist < exclude_radius:
                continue
            key = seed_key + [i + _SEED_BIAS for i in image] + [site_idx]
            u = np.random.default_rng(key).random()
            cumulative = 0.0
            for name, fraction in sorted(cell.abundances[element].items()):
                cumulative += fraction
                if u < cumulative:
                    spins.append(BathSpin(species=isotopes[name], position=pos))
                    break
            if len(spins) > max_spins:
                raise ConfigError(f"bath exceeds the {max_spins} spin cap; shrink the radius")
    spins.sort(key=lambda sp: (np.linalg.norm(sp.position), tuple(sp.position)))
    return spins


class Couplings:
    """Central-bath and intra-bath coupling tensors for one bath.

    Hyperfine tensors are stored on the bath spins; intra-bath tensors
    are evaluated by point-dipole on demand and cached per pair.
    """

    def __init__(self, bath, min_distance: float = MIN_DIPOLE_DISTANCE):
        self.bath = bath
        self.min_distance = min_distance
        self._cache: dict = {}

    def hyperfine(self, i: int) -> np.ndarray:
        return self.bath[i].a

    def intra(self, i: int, j: int) -> np.ndarray:
        """Intra-bath coupling tensor J_ij (rad/ms); J_ji is its transpose."""
        if i == j:
            raise ConfigError("no self-coupling")
        key = (i, j) if i < j else (j, i)
        tensor = self._cache.get(key)
        if tensor is None:
            a, b = key
            tensor = dipolar_tensor(
                self.bath[a].position - self.bath[b].position,
                self.bath[a].species.gamma, self.bath[b].species.gamma,
                min_distance=self.min_distance,
            )
            self._cache[key] = tensor
        return tensor if (i, j) == key else tensor.T

    def local_lookup(self, indices) -> dict:
        """Tensors for a cluster, keyed by local member index pairs."""
        return {
            (a, b): self.intra(indices[a], indices[b])
            for a in range(len(indices))
            for b in range(a + 1, len(indices))
        }


def compute_couplings(central: CentralSpin, bath, mode: str = "auto",
                      min_distance: float = MIN_DIPOLE_DISTANCE) -> Couplings:
    """Fill missing central-spin couplings by point-dipole and expose J_ij.

    ``mode="auto"`` keeps any file-supplied hyperfine tensors untouched;
    ``mode="force"`` recomputes every tensor from the geometry.
    """
    if mode not in ("auto", "force"):
        raise ConfigError(f"unknown coupling mode {mode!r}")
    gamma_c = central.effective_gamma()
    origin = np.asarray(central.position, dtype=float)
    for spin in bath:
        if spin.a is None or mode == "force":
            spin.a = dipolar_tensor(spin.position - origin, gamma_c,
                                    spin.species.gamma, min_distance=min_distance)
    return Couplings(bath, min_distance=min_distance)


@dataclass(frozen=True)
class ConnectivityGraph:
    """Adjacency over bath indices with edge rule |r_i - r_j| <= r_dipole."""

    n: int
    neighbors: tuple  # tuple of sorted tuples
    r_dipole: float

    def adjacent(self, i: int, j: int) -> bool:
        return j in self.neighbors[i]


def build_connectivity(bath, r_dipole: float) -> ConnectivityGraph:
    """Link every pair of bath spins within ``r_dipole`` Angstrom."""
    if r_dipole <= 0:
        raise ConfigError("r_dipole must be positive")
    n = len(bath)
    adj: list[set] = [set() for _ in range(n)]
    if n > 1:
        tree = cKDTree(np.array([sp.position for sp in bath]))
        for i, j in tree.query_pairs(r_dipole):
            adj[i].add(j)
            adj[j].add(i)
    return ConnectivityGraph(n=n, neighbors=tuple(tuple(sorted(s)) for s in adj), r_dipole=r_dipole)


@dataclass(frozen=True)
class ClusterSet:
    """Connected clusters of bath indices, closed under connected subsets."""

    clusters: tuple  # tuple of index tuples, sorted by (size, lexicographic)
    order: int

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    def membership(self) -> frozenset:
        return frozenset(self.clusters)


def enumerate_clusters(graph: ConnectivityGraph, order: int,
                       max_order: int = MAX_CLUSTER_ORDER) -> ClusterSet:
    """All singletons plus every connected vertex subset of size 2..order.

    Subsets are connected within their induced subgraph; each appears
    exactly once, in deterministic (size, lexicographic) order.
    """
    if order < 1:
        raise ConfigError("cluster order must be >= 1")
    if order > max_order:
        raise ConfigError(f"cluster order {order} exceeds the hard cap {max_order}")
    found: list[tuple] = []

    def extend(subset: tuple, extension: list, root: int) -> None:
        found.append(subset)
        if len(subset) == order:
            return
        ext = list(extension)
        while ext:
            w = ext.pop()
            closure = set(subset)
            for v in subset:
                closure.update(graph.neighbors[v])
            grown = ext + [u for u in graph.neighbors[w] if u > root and u not in closure]
            extend(tuple(sorted(subset + (w,))), grown, root)

    for v in range(graph.n):
        extend((v,), [u for u in graph.neighbors[v] if u > v], v)
    found.sort(key=lambda c: (len(c), c))
    return ClusterSet(clusters=tuple(found), order=order)


# ---------------------------------------------------------------------------
# file formats


def parse_cell_file(path) -> Supercell:
    """Read a supercell file with [cell], [sites], [abundances] sections.

    [cell] holds three lattice vectors (one per line, Angstrom);
    [sites] lines read ``fx fy fz element``; [abundances] lines read
    ``element isotope fraction``.  ``#`` starts a comment.
    """
    section = None
    vectors: list = []
    sites: list = []
    abundances: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                section = line.strip("[]").lower()
                if section not in ("cell", "sites", "abundances"):
                    raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
                continue
            parts = line.split()
            try:
                if section == "cell":
                    vectors.append([float(x) for x in parts])
                elif section == "sites":
                    sites.append((np.array([float(x) for x in parts[:3]]), parts[3]))
                elif section == "abundances":
                    element, isotope, fraction = parts[0], parts[1], float(parts[2])
                    abundances.setdefault(element, {})[isotope] = fraction
                else:
                    raise ConfigError(f"{path}:{lineno}: content before any section header")
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    if len(vectors) != 3:
        raise ConfigError(f"{path}: [cell] must contain exactly three vectors")
    return Supercell(vectors=np.array(vectors), sites=tuple(sites), abundances=abundances)


def parse_bath_file(path, isotopes=None) -> list[BathSpin]:
    """Read bath spins: ``isotope x y z [A row-major 9] [Q row-major 9]``.

    Positions in Angstrom, couplings in MHz (converted to rad/ms here).
    """
    if isotopes is None:
        isotopes = load_isotopes()
    spins = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (4, 13, 22):
                raise ConfigError(f"{path}:{lineno}: expected 4, 13 or 22 fields, got {len(parts)}")
            name = parts[0]
            if name not in isotopes:
                raise ConfigError(
                    f"{path}:{lineno}: unknown isotope {name!r}; available: {', '.join(sorted(isotopes))}"
                )
            values = [float(x) for x in parts[1:]]
            position = np.array(values[:3])
            a = q = None
            if len(values) >= 12:
                a = np.array(values[3:12]).reshape(3, 3) * MHZ_TO_RADMS
            if len(values) == 21:
                q = np.array(values[12:21]).reshape(3, 3) * MHZ_TO_RADMS
            spins.append(BathSpin(species=isotopes[name], position=position, a=a, q=q))
    return spins


def write_bath_file(path, bath, preamble=()) -> None:
    """Write bath spins in the :func:`parse_bath_file` format (MHz units)."""
    with open(path, "w") as fh:
        for line in preamble:
            fh.write(line + "\n")
        fh.write("# isotope x y z [Axx..Azz MHz] [Qxx..Qzz MHz]\n")
        for spin in bath:
            fields = [spin.species.name] + [f"{x:.17g}" for x in spin.position]
            if spin.a is not None:
                fields += [f"{x:.17g}" for x in (spin.a * RADMS_TO_MHZ).ravel()]
            if spin.q is not None:
                if spin.a is None:
                    fields += [f"{x:.17g}" for x in np.zeros(9)]
                fields += [f"{x:.17g}" for x in (spin.q * RADMS_TO_MHZ).ravel()]
            fh.write(" ".join(fields) + "\n")


@dataclass
class SpinSystem:
    """A central spin, its bath, their couplings, and the applied field."""

    central: CentralSpin | None
    bath: list
    couplings: Couplings | None
    b_field: np.ndarray

    def __post_init__(self):
        self.b_field = np.asarray(self.b_field, dtype=float)

    @classmethod
    def create(cls, central: CentralSpin, bath, b_field, mode: str = "auto") -> "SpinSystem":
        couplings = compute_couplings(central, bath, mode=mode)
        return cls(central=central, bath=bath, couplings=couplings, b_field=b_field)

    def members(self, indices):
        return [self.bath[i] for i in indices]

    def local_j(self, indices) -> dict:
        if len(indices) < 2:
            return {}
        return self.couplings.local_lookup(tuple(indices))

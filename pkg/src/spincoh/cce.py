"""Cluster-correlation expansion engines.

The coherence of the central spin is factorized over connected bath
clusters: L(t) = prod_C Ltilde_C(t), with each contribution defined
recursively as the cluster coherence divided by the contributions of
all its proper sub-clusters.  Engines provided here:

* projected expansion: bath evolves under level-conditioned
  Hamiltonians H(0)/H(1) (pure-dephasing picture);
* generalized expansion: central-spin space retained inside every
  cluster, pulses applied as explicit unitaries;
* bath-state sampling with optional mean-field qubit levels and exact
  averaging over an inner shell (hybrid mode);
* Overhauser-field autocorrelation (additive recursion);
* dissipative cluster evolution under a Lindblad generator.

All cluster evaluations are independent; with ``workers > 1`` they run
in a process pool and are reduced in a fixed cluster order, so results
do not depend on scheduling.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize

from .bath import SpinSystem
from .errors import ConfigError, InsufficientDecayError
from .pulses import PulseSequence
from .spinops import (
    CentralSpin,
    ClusterHamiltonian,
    assemble_cluster_hamiltonian,
    kron_embed,
    spin_matrices,
)

PROJECTION_CORRECTION = "omitted"  # higher-order projected corrections: not implemented


# ---------------------------------------------------------------------------
# qubit levels


@dataclass(frozen=True)
class QubitLevels:
    """Two orthonormal central-spin states and their energy gap."""

    state0: np.ndarray
    state1: np.ndarray
    energy0: float
    energy1: float

    def __post_init__(self):
        v0 = np.asarray(self.state0, dtype=complex)
        v1 = np.asarray(self.state1, dtype=complex)
        object.__setattr__(self, "state0", v0)
        object.__setattr__(self, "state1", v1)
        gram = np.array([
            [v0.conj() @ v0 - 1.0, v0.conj() @ v1],
            [v1.conj() @ v0, v1.conj() @ v1 - 1.0],
        ])
        if np.max(np.abs(gram)) > 1e-12:
            raise ConfigError("qubit levels must be orthonormal to 1e-12")

    @property
    def omega(self) -> float:
        """Level gap E1 - E0 in rad/ms."""
        return self.energy1 - self.energy0

    @property
    def dim(self) -> int:
        return self.state0.shape[0]

    def superposition(self) -> np.ndarray:
        return (self.state0 + self.state1) / np.sqrt(2.0)

    def pulse_operator(self) -> np.ndarray:
        """Ideal pi pulse exchanging the two levels, identity elsewhere."""
        p0 = np.outer(self.state0, self.state0.conj())
        p1 = np.outer(self.state1, self.state1.conj())
        swap = np.outer(self.state0, self.state1.conj()) + np.outer(self.state1, self.state0.conj())
        return np.eye(self.dim, dtype=complex) - p0 - p1 + swap


def levels_from_labels(central: CentralSpin, b_field) -> QubitLevels:
    """Qubit levels for a central spin: Sz eigenstates or H_S eigenstates.

    With ``central.eigen_levels`` the Sz labels select the eigenvectors
    of the central Hamiltonian with the largest overlap (the adiabatic
    continuation of the labels from the high-field limit).
    """
    h = central.hamiltonian(b_field)
    if central.eigen_levels:
        return _eigen_levels(h, central)
    i0 = central.sz_index(central.levels[0])
    i1 = central.sz_index(central.levels[1])
    dim = central.dim
    v0 = np.zeros(dim, dtype=complex)
    v1 = np.zeros(dim, dtype=complex)
    v0[i0] = 1.0
    v1[i1] = 1.0
    return QubitLevels(state0=v0, state1=v1,
                       energy0=h[i0, i0].real, energy1=h[i1, i1].real)


def mean_field_levels(central: CentralSpin, b_field, bath=None, state=None) -> QubitLevels:
    """Qubit levels as eigenstates of the mean-field central Hamiltonian.

    The Hamiltonian is Zeeman + ZFS plus the Overhauser shift
    sum_n S.A_n.<I_n> from a sampled bath product state (``state`` is
    the vector of Sz projections; omit both arguments for bare levels).
    Eigenvectors are matched to the configured Sz labels by maximum
    overlap; exact degeneracies are broken by an infinitesimal field
    along z (the large-field continuation).
    """
    h = central.hamiltonian(b_field)
    if bath is not None and state is not None:
        shift = overhauser_vector(bath, state)
        h = h + np.einsum("a,aij->ij", shift, central.operators.stack)
    return _eigen_levels(h, central)


def overhauser_vector(bath, state) -> np.ndarray:
    """Mean-field shift sum_n A_n[:, z] m_n on the central spin, rad/ms."""
    shift = np.zeros(3)
    for spin, m in zip(bath, state):
        shift += spin.a[:, 2] * m
    return shift


def _eigen_levels(h: np.ndarray, central: CentralSpin) -> QubitLevels:
    """Select level eigenvectors by adiabatic continuation from large field.

    An auxiliary Zeeman term c Sz is ramped down geometrically from a
    magnitude that dominates the Hamiltonian; at each step the tracked
    vectors follow the eigenvectors of largest overlap.  Avoided
    crossings are followed adiabatically, symmetry-allowed crossings
    pass through on their own branch.
    """
    sz = central.operators.sz
    dim = central.dim
    scale = 50.0 * (np.linalg.norm(h, 2) + 1.0)
    tracked = []
    for m in central.levels:
        v = np.zeros(dim, dtype=complex)
        v[central.sz_index(m)] = 1.0
        tracked.append(v)
    energies = [0.0, 0.0]

    def follow(c: float) -> float:
        """Match tracked vectors at auxiliary field c; returns worst overlap."""
        evals, evecs = np.linalg.eigh(h + c * sz)
        taken: set = set()
        worst = 1.0
        for idx in range(2):
            overlaps = np.abs(evecs.conj().T @ tracked[idx]) ** 2
            for col in taken:
                overlaps[col] = -1.0
            col = int(np.argmax(overlaps))
            taken.add(col)
            worst = min(worst, overlaps[col])
            vec = evecs[:, col]
            # keep a continuous phase along the ramp
            phase = vec.conj() @ tracked[idx]
            if abs(phase) > 0:
                vec = vec * (phase / abs(phase))
            tracked[idx] = vec
            energies[idx] = float(evals[col])
        return worst

    def advance(c_from: float, c_to: float, depth: int = 0) -> None:
        saved = [v.copy() for v in tracked]
        if follow(c_to) < 0.99 and depth < 48 and c_from - c_to > 1e-12 * scale:
            # rapid branch rotation: resolve the avoided crossing
            tracked[0], tracked[1] = saved
            mid = 0.5 * (c_from + c_to)
            advance(c_from, mid, depth + 1)
            advance(mid, c_to, depth + 1)

    ramp = list(scale * 0.5 ** np.arange(0, 64)) + [0.0]
    follow(ramp[0])
    for c_from, c_to in zip(ramp, ramp[1:]):
        advance(c_from, c_to)
    if abs(abs(tracked[0].conj() @ tracked[1])) > 1e-9:
        raise ConfigError("qubit level selection is degenerate and could not be disambiguated")
    # fix global phases so the dominant component is real positive
    out = []
    for vec in tracked:
        k = int(np.argmax(np.abs(vec)))
        out.append(vec * np.exp(-1j * np.angle(vec[k])))
    return QubitLevels(state0=out[0], state1=out[1], energy0=energies[0], energy1=energies[1])


# ---------------------------------------------------------------------------
# engine configuration and results


@dataclass(frozen=True)
class EngineConfig:
    """Knobs of a cluster-expansion run."""

    method: str = "cce"  # cce | gcce | cce-sampled | gcce-sampled
    order: int = 2
    r_dipole: float = 8.0
    bath_radius: float | None = None
    samples: int = 100
    epsilon: float = 1e-10
    mean_field: bool = False
    hybrid_shell: int = 0
    workers: int = 1
    seed: int | None = None

    def __post_init__(self):
        if self.method not in ("cce", "gcce", "cce-sampled", "gcce-sampled"):
            raise ConfigError(f"unknown engine method {self.method!r}")
        if self.order < 1:
            raise ConfigError("order must be >= 1")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.epsilon <= 0:
            raise ConfigError("division guard epsilon must be positive")
        if self.hybrid_shell < 0:
            raise ConfigError("hybrid shell size must be >= 0")


@dataclass
class CoherenceCurve:
    """Complex coherence L on a time grid plus run diagnostics."""

    time: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)


@dataclass(frozen=True)
class ProjectedPair:
    """Level-conditioned bath Hamiltonians H(0), H(1)."""

    h0: np.ndarray
    h1: np.ndarray

    def __post_init__(self):
        for name, h in (("h0", self.h0), ("h1", self.h1)):
            if h.shape != self.h0.shape:
                raise ConfigError("projected Hamiltonians must share a dimension")
            norm = np.linalg.norm(h)
            if norm > 0 and np.linalg.norm(h - h.conj().T) > 1e-12 * max(norm, 1.0):
                raise ConfigError(f"projected Hamiltonian {name} is not Hermitian")


def project_hamiltonian(assembly: ClusterHamiltonian, levels: QubitLevels) -> ProjectedPair:
    """Project a joint cluster Hamiltonian onto the two qubit levels.

    H(a) = E_a + <a|H_SB|a> + H_B, obtained as the partial matrix
    element of the joint Hamiltonian over the central-spin factor.
    Higher-order corrections to the projection are omitted (see
    ``PROJECTION_CORRECTION``).
    """
    if not assembly.has_central:
        raise ConfigError("projection requires an assembly that includes the central spin")
    ds = assembly.dims[0]
    db = assembly.dim // ds
    if levels.dim != ds:
        raise ConfigError("qubit levels dimension does not match the assembly")
    h4 = assembly.matrix.reshape(ds, db, ds, db)
    h0 = np.einsum("i,ijkl,k->jl", levels.state0.conj(), h4, levels.state0)
    h1 = np.einsum("i,ijkl,k->jl", levels.state1.conj(), h4, levels.state1)
    h0 = 0.5 * (h0 + h0.conj().T)
    h1 = 0.5 * (h1 + h1.conj().T)
    return ProjectedPair(h0=h0, h1=h1)


# ---------------------------------------------------------------------------
# cluster propagation kernels


def _batch_propagators(evals, evecs, taus):
    """exp(-i H tau) for every tau, from a cached eigendecomposition.

    Zero durations give the exact identity so L(0) is exactly one.
    """
    phases = np.exp(-1j * np.outer(taus, evals))
    out = (evecs[None, :, :] * phases[:, None, :]) @ evecs.conj().T
    zero = np.asarray(taus) == 0.0
    if np.any(zero):
        out[zero] = np.eye(evals.shape[0])
    return out


def _branch_propagators(eigs, fractions, tgrid, start: int):
    """Time-ordered branch propagator, Hamiltonian alternating from ``start``."""
    bounds = np.concatenate(([0.0], np.asarray(fractions, dtype=float), [1.0]))
    total = None
    for j in range(len(bounds) - 1):
        taus = (bounds[j + 1] - bounds[j]) * tgrid
        evals, evecs = eigs[(j + start) % 2]
        seg = _batch_propagators(evals, evecs, taus)
        total = seg if total is None else np.matmul(seg, total)
    return total


def _pair_coherence(h0, h1, rho, fractions, tgrid):
    """L_C(t) = Tr[U0(t) rho U1(t)^dagger] with branch-alternating Hamiltonians."""
    eigs = (np.linalg.eigh(h0), np.linalg.eigh(h1))
    u0 = _branch_propagators(eigs, fractions, tgrid, start=0)
    u1 = _branch_propagators(eigs, fractions, tgrid, start=1)
    return ((u0 @ rho) * u1.conj()).sum(axis=(1, 2))


def cluster_coherence(pair: ProjectedPair, rho, pulses: PulseSequence, tgrid) -> np.ndarray:
    """Coherence of one cluster under a projected Hamiltonian pair.

    ``rho`` must be a valid density matrix on the cluster bath space
    (unit trace, eigenvalues above -1e-10).
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != pair.h0.shape:
        raise ConfigError("density matrix dimension does not match the Hamiltonians")
    if abs(np.trace(rho) - 1.0) > 1e-9:
        raise ConfigError("cluster density matrix must have unit trace")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -1e-10:
        raise ConfigError("cluster density matrix has a negative eigenvalue beyond -1e-10")
    return _pair_coherence(pair.h0, pair.h1, rho, pulses.fractions, np.asarray(tgrid, dtype=float))


def _joint_coherence(h, rho, kmat, pulse_op, fractions, tgrid):
    """Tr[U rho U^dagger K] with explicit pulse unitaries between segments.

    ``kmat = |1><0| x I_bath`` extracts <0|Tr_bath[rho(t)]|1>.
    """
    evals, evecs = np.linalg.eigh(h)
    bounds = np.concatenate(([0.0], np.asarray(fractions, dtype=float), [1.0]))
    total = None
    for j in range(len(bounds) - 1):
        taus = (bounds[j + 1] - bounds[j]) * tgrid
        seg = _batch_propagators(evals, evecs, taus)
        if total is None:
            total = seg
        else:
            total = np.matmul(seg, np.matmul(pulse_op[None], total))
    # Tr[U rho U^dagger K] batched over the grid
    rho_t = (total @ rho) @ total.conj().transpose(0, 2, 1)
    return (rho_t * kmat.T[None, :, :]).sum(axis=(1, 2))


# ---------------------------------------------------------------------------
# Lindblad cluster evolution


def _lindblad_generator(h_left, h_right, jumps):
    """Generator of dX/dt = -i(H_l X - X H_r) + sum_i g_i D[L_i] X, row-major vec."""
    dim = h_left.shape[0]
    eye = np.eye(dim)
    gen = -1j * (np.kron(h_left, eye) - np.kron(eye, h_right.T))
    for rate, op in jumps:
        if rate < 0:
            raise ConfigError("Lindblad rates must be non-negative")
        opd_op = op.conj().T @ op
        gen += rate * (np.kron(op, op.conj())
                       - 0.5 * np.kron(opd_op, eye)
                       - 0.5 * np.kron(eye, opd_op.T))
    return gen


def _apply_segment(gen_eig, xvec, taus):
    evals, evecs, inv = gen_eig
    z = xvec @ inv.T
    z = z * np.exp(np.outer(taus, evals))
    return z @ evecs.T


def _generator_eig(gen):
    evals, evecs = scipy.linalg.eig(gen)
    cond = np.linalg.cond(evecs)
    if not np.isfinite(cond) or cond > 1e8:
        return None
    return evals, evecs, np.linalg.inv(evecs)


def lindblad_cluster(pair: ProjectedPair, rho, jumps, pulses: PulseSequence, tgrid) -> np.ndarray:
    """Cluster coherence with bath dissipation.

    Evolves the inter-branch operator X (initially rho) under
    dX/dt = -i(H(0) X - X H(1)) + dissipators, swapping the branch
    Hamiltonians at every pulse; L(t) = Tr[X(t)].  ``jumps`` is a list
    of (rate, operator) pairs on the cluster space.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    dim = pair.h0.shape[0]
    gens = (_lindblad_generator(pair.h0, pair.h1, jumps),
            _lindblad_generator(pair.h1, pair.h0, jumps))
    eigs = [_generator_eig(g) for g in gens]
    bounds = np.concatenate(([0.0], np.asarray(pulses.fractions, dtype=float), [1.0]))
    xvec = np.broadcast_to(np.asarray(rho, dtype=complex).reshape(-1), (len(tgrid), dim * dim)).copy()
    for j in range(len(bounds) - 1):
        taus = (bounds[j + 1] - bounds[j]) * tgrid
        which = j % 2
        live = taus > 0.0  # zero durations leave X untouched exactly
        if eigs[which] is not None:
            xvec[live] = _apply_segment(eigs[which], xvec[live], taus[live])
        else:  # ill-conditioned eigenbasis: fall back to per-point exponentials
            gen = gens[which]
            for k in np.nonzero(live)[0]:
                xvec[k] = scipy.linalg.expm(gen * taus[k]) @ xvec[k]
    return xvec.reshape(len(tgrid), dim, dim).trace(axis1=1, axis2=2)


def _jump_operators(members, dims):
    """Embedded jump operators for the members' configured dissipators."""
    jumps = []
    for k, member in enumerate(members):
        if not member.dissipators:
            continue
        ops = spin_matrices(member.species.s)
        local = {"z": ops.sz, "+": ops.sx + 1j * ops.sy, "-": ops.sx - 1j * ops.sy,
                 "x": ops.sx, "y": ops.sy}
        for rate, label in member.dissipators:
            if label not in local:
                raise ConfigError(f"unknown jump label {label!r}; expected one of {sorted(local)}")
            jumps.append((float(rate), kron_embed(local[label], k, dims)))
    return jumps


# ---------------------------------------------------------------------------
# cluster assembly helpers


def _thermal_rho(members, state=None):
    """Product density matrix: sampled projections, populations, or maximally mixed."""
    rho = np.array([[1.0 + 0j]])
    for k, member in enumerate(members):
        dim = member.dim
        if state is not None:
            pos = member.species.s - state[k]
            idx = int(round(pos))
            if abs(pos - idx) > 1e-9 or not 0 <= idx < dim:
                raise ConfigError(
                    f"projection {state[k]} is not an Sz level of spin {member.species.s}"
                )
            local = np.zeros((dim, dim), dtype=complex)
            local[idx, idx] = 1.0
        elif member.populations is not None:
            pops = np.asarray(member.populations, dtype=float)
            if pops.shape != (dim,) or abs(pops.sum() - 1.0) > 1e-9 or np.min(pops) < 0:
                raise ConfigError(f"invalid level populations for {member.species.name}")
            local = np.diag(pops).astype(complex)
        else:
            local = np.eye(dim, dtype=complex) / dim
        rho = np.kron(rho, local)
    return rho


def _mean_field_extras(system: SpinSystem, indices, state):
    """Overhauser shifts from sampled spins outside the cluster.

    Returns (central shift 3-vector, per-member effective fields) in
    rad/ms; the central shift excludes cluster members (their coupling
    stays quantum inside the cluster).
    """
    inside = set(indices)
    central_shift = np.zeros(3)
    member_fields = [np.zeros(3) for _ in indices]
    for j, spin in enumerate(system.bath):
        if j in inside:
            continue
        m = state[j]
        if m == 0.0:
            continue
        central_shift += spin.a[:, 2] * m
        for slot, i in enumerate(indices):
            member_fields[slot] += system.couplings.intra(i, j)[:, 2] * m
    return central_shift, member_fields


def _cluster_assembly(system: SpinSystem, indices, state=None, mean_field=False) -> ClusterHamiltonian:
    members = system.members(indices)
    extra = None
    central = system.central
    if mean_field and state is not None:
        central_shift, extra = _mean_field_extras(system, indices, state)
        if np.any(central_shift):
            ops = central.operators
            shift_h = np.einsum("a,aij->ij", central_shift, ops.stack)
            central = _ShiftedCentral(central, shift_h)
    return assemble_cluster_hamiltonian(central, members, system.local_j(indices),
                                        system.b_field, extra_field=extra)


class _ShiftedCentral:
    """Central spin with an additive mean-field term on its Hamiltonian."""

    def __init__(self, base: CentralSpin, shift: np.ndarray):
        self._base = base
        self._shift = shift

    def __getattr__(self, name):
        return getattr(self._base, name)

    def hamiltonian(self, b_field):
        return self._base.hamiltonian(b_field) + self._shift


# ---------------------------------------------------------------------------
# raw cluster coherences and the recursion


def _raw_cluster_coherence(system, cluster, levels, nominal, pulses, tgrid,
                           generalized, state, mean_field):
    """Reference-normalized coherence of one cluster."""
    indices = list(cluster)
    members = system.members(indices)
    assembly = _cluster_assembly(system, indices, state=state, mean_field=mean_field)
    rho_bath = _thermal_rho(members, state=[state[i] for i in indices] if state is not None else None)
    jumps = _jump_operators(members, assembly.bath_dims)

    if generalized:
        if jumps:
            raise ConfigError("dissipators are supported by the projected expansion only")
        psi = levels.superposition()
        rho = np.kron(np.outer(psi, psi.conj()), rho_bath)
        eye_bath = np.eye(int(np.prod(assembly.bath_dims)))
        pulse_op = np.kron(levels.pulse_operator(), eye_bath)
        kmat = np.kron(_coherence_element(levels, pulses), eye_bath)
        return _joint_coherence(assembly.matrix, rho, kmat, pulse_op, pulses.fractions, tgrid)

    pair = project_hamiltonian(assembly, levels)
    # remove the nominal deterministic phase (coherence is defined relative
    # to exp(-i omega t)); state-dependent shifts remain physical
    h0 = pair.h0 - nominal[0] * np.eye(pair.h0.shape[0])
    h1 = pair.h1 - nominal[1] * np.eye(pair.h1.shape[0])
    if jumps:
        return lindblad_cluster(ProjectedPair(h0=h0, h1=h1), rho_bath, jumps, pulses, tgrid)
    return _pair_coherence(h0, h1, rho_bath, pulses.fractions, tgrid)


def _coherence_element(levels, pulses):
    """Operator picking the level coherence after the pulse rotations.

    An odd number of pi pulses moves the coherence from <0|rho|1> to
    <1|rho|0>; tracking the rotated element keeps the generalized and
    projected expansions on one convention (branch 0 starts in H(0)).
    """
    if pulses.n_pulses % 2:
        return np.outer(levels.state0, levels.state1.conj())
    return np.outer(levels.state1, levels.state0.conj())


def _gcce_reference(system, levels, pulses, tgrid):
    """Bath-free central-spin evolution used to normalize gCCE curves."""
    h = system.central.hamiltonian(system.b_field)
    psi = levels.superposition()
    rho = np.outer(psi, psi.conj())
    kmat = _coherence_element(levels, pulses)
    return _joint_coherence(h, rho, kmat, levels.pulse_operator(), pulses.fractions, tgrid)


def _raw_block(job, chunk):
    (system, levels, nominal, pulses, tgrid, generalized, state, mean_field) = job
    return [
        (cluster, _raw_cluster_coherence(system, cluster, levels, nominal, pulses,
                                         tgrid, generalized, state, mean_field))
        for cluster in chunk
    ]


def _all_raw_coherences(job, clusters, workers: int):
    if workers <= 1 or len(clusters.clusters) < 4 * workers:
        blocks = [_raw_block(job, clusters.clusters)]
    else:
        chunks = np.array_split(np.arange(len(clusters.clusters)), workers)
        pieces = [tuple(clusters.clusters[i] for i in chunk) for chunk in chunks if len(chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_raw_block, itertools.repeat(job), pieces))
    raw = {}
    for block in blocks:
        for cluster, values in block:
            raw[cluster] = values
    return raw


def _multiplicative_recursion(clusters, raw, tgrid, epsilon):
    """L = prod Ltilde_C with Ltilde_C = L_C / prod(sub-contributions)."""
    contributions: dict = {}
    total = np.ones(len(tgrid), dtype=complex)
    guarded_points = 0
    guarded_clusters = 0
    membership = clusters.membership()
    for cluster in clusters.clusters:
        denom = np.ones(len(tgrid), dtype=complex)
        if len(cluster) > 1:
            for size in range(1, len(cluster)):
                for sub in itertools.combinations(cluster, size):
                    if sub in membership:
                        denom = denom * contributions[sub]
        mask = np.abs(denom) < epsilon
        tilde = np.empty(len(tgrid), dtype=complex)
        good = ~mask
        tilde[good] = raw[cluster][good] / denom[good]
        if np.any(mask):
            tilde[mask] = 1.0
            guarded_points += int(mask.sum())
            guarded_clusters += 1
        contributions[cluster] = tilde
        total = total * tilde
    diagnostics = {
        "n_clusters": len(clusters.clusters),
        "guarded_clusters": guarded_clusters,
        "guarded_points": guarded_points,
        "guarded_fraction": guarded_clusters / max(len(clusters.clusters), 1),
    }
    diagnostics["converged"] = diagnostics["guarded_fraction"] <= 1e-3
    return total, diagnostics


def _expand_once(system, clusters, config, pulses, tgrid, levels, state=None):
    generalized = config.method.startswith("gcce")
    mean_field = config.mean_field and state is not None
    if mean_field:
        lvl = mean_field_levels(system.central, system.b_field, system.bath, state)
    else:
        lvl = levels
    nominal = (levels.energy0, levels.energy1)
    job = (system, lvl, nominal, pulses, tgrid, generalized, state, mean_field)
    raw = _all_raw_coherences(job, clusters, config.workers)
    if generalized:
        reference = _gcce_reference(system, levels, pulses, tgrid)
        guard = np.abs(reference) < config.epsilon
        for cluster in raw:
            values = np.where(guard, 1.0, raw[cluster] / np.where(guard, 1.0, reference))
            raw[cluster] = values
    total, diagnostics = _multiplicative_recursion(clusters, raw, tgrid, config.epsilon)
    return total, diagnostics


def _base_levels(system: SpinSystem, config: EngineConfig) -> QubitLevels:
    if config.mean_field or system.central.eigen_levels:
        return mean_field_levels(system.central, system.b_field)
    return levels_from_labels(system.central, system.b_field)


def _metadata(config: EngineConfig, pulses: PulseSequence, diagnostics: dict) -> dict:
    meta = {
        "method": config.method,
        "order": config.order,
        "r_dipole": config.r_dipole,
        "epsilon": config.epsilon,
        "pulses": pulses.name,
        "pulse_fractions": list(pulses.fractions),
        "projection_correction": PROJECTION_CORRECTION,
    }
    meta.update(diagnostics)
    return meta


def cce_expand(system: SpinSystem, clusters, config: EngineConfig,
               pulses: PulseSequence, tgrid, levels: QubitLevels | None = None) -> CoherenceCurve:
    """Projected cluster-correlation expansion of the coherence."""
    tgrid = np.asarray(tgrid, dtype=float)
    levels = levels if levels is not None else _base_levels(system, config)
    cfg = replace(config, method="cce")
    total, diagnostics = _expand_once(system, clusters, cfg, pulses, tgrid, levels)
    return CoherenceCurve(time=tgrid, values=total, metadata=_metadata(cfg, pulses, diagnostics))


def gcce_expand(system: SpinSystem, clusters, config: EngineConfig,
                pulses: PulseSequence, tgrid, levels: QubitLevels | None = None) -> CoherenceCurve:
    """Generalized expansion: central spin retained inside every cluster."""
    tgrid = np.asarray(tgrid, dtype=float)
    levels = levels if levels is not None else _base_levels(system, config)
    cfg = replace(config, method="gcce")
    total, diagnostics = _expand_once(system, clusters, cfg, pulses, tgrid, levels)
    return CoherenceCurve(time=tgrid, values=total, metadata=_metadata(cfg, pulses, diagnostics))


def _enumerate_inner_states(members):
    """All Sz product states of the inner shell, as per-spin m arrays."""
    ranges = [[member.species.s - k for k in range(member.dim)] for member in members]
    return list(itertools.product(*ranges))


def sampled_expand(system: SpinSystem, clusters, config: EngineConfig,
                   pulses: PulseSequence, tgrid, levels: QubitLevels | None = None,
                   states=None) -> CoherenceCurve:
    """Average the expansion over sampled pure bath product states.

    Draws ``config.samples`` product states of Sz projections (uniform
    in the high-temperature limit).  With ``config.hybrid_shell = k``
    the k bath spins closest to the origin are averaged exactly over
    all their states instead of sampled.  ``states`` overrides the
    sampling with explicit state vectors (used for exhaustive checks).
    """
    tgrid = np.asarray(tgrid, dtype=float)
    levels = levels if levels is not None else _base_levels(system, config)
    base_method = "gcce" if config.method.startswith("gcce") else "cce"
    cfg = replace(config, method=base_method)
    n = len(system.bath)
    inner = list(range(min(config.hybrid_shell, n)))
    outer = [i for i in range(n) if i not in inner]
    inner_states = _enumerate_inner_states(system.members(inner)) if inner else [()]

    if states is None:
        rng = np.random.default_rng(config.seed)
        draws = []
        for _ in range(config.samples):
            state = np.zeros(n)
            for i in outer:
                spin = system.bath[i]
                state[i] = spin.species.s - rng.integers(spin.dim)
            draws.append(state)
    else:
        draws = [np.asarray(s, dtype=float) for s in states]

    total = np.zeros(len(tgrid), dtype=complex)
    merged: dict = {}
    count = 0
    for state in draws:
        for inner_state in inner_states:
            full = state.copy()
            for slot, i in enumerate(inner):
                full[i] = inner_state[slot]
            curve, diagnostics = _expand_once(system, clusters, cfg, pulses, tgrid, levels, state=full)
            total += curve
            count += 1
            for key in ("guarded_points", "guarded_clusters"):
                merged[key] = merged.get(key, 0) + diagnostics[key]
    total /= count
    merged["n_clusters"] = len(clusters.clusters)
    merged["n_states"] = count
    merged["samples"] = config.samples
    merged["hybrid_shell"] = config.hybrid_shell
    merged["seed"] = config.seed
    merged["mean_field"] = config.mean_field
    merged["guarded_fraction"] = merged.get("guarded_clusters", 0) / max(count * len(clusters.clusters), 1)
    merged["converged"] = merged["guarded_fraction"] <= 1e-3
    return CoherenceCurve(time=tgrid, values=total, metadata=_metadata(config, pulses, merged))


def simulate_coherence(system: SpinSystem, clusters, config: EngineConfig,
                       pulses: PulseSequence, tgrid, levels: QubitLevels | None = None) -> CoherenceCurve:
    """Dispatch to the engine selected by ``config.method``."""
    if config.method == "cce":
        return cce_expand(system, clusters, config, pulses, tgrid, levels)
    if config.method == "gcce":
        return gcce_expand(system, clusters, config, pulses, tgrid, levels)
    return sampled_expand(system, clusters, config, pulses, tgrid, levels)


# ---------------------------------------------------------------------------
# Overhauser autocorrelation


def _cluster_autocorrelation(system, cluster, tgrid):
    indices = list(cluster)
    members = system.members(indices)
    assembly = assemble_cluster_hamiltonian(None, members, system.local_j(indices), system.b_field)
    dims = assembly.dims
    nop = np.zeros((assembly.dim, assembly.dim), dtype=complex)
    for k, member in enumerate(members):
        ops = spin_matrices(member.species.s)
        nop += member.a[2, 2] * kron_embed(ops.sz, k, dims)
    rho = _thermal_rho(members)
    evals, evecs = np.linalg.eigh(assembly.matrix)
    ntil = evecs.conj().T @ nop @ evecs
    rtil = evecs.conj().T @ rho @ evecs
    weights = ntil * (ntil @ rtil).T  # W_mn = N_mn (N rho)_nm
    delta = evals[:, None] - evals[None, :]
    phases = np.exp(1j * np.outer(tgrid, delta.ravel()))
    return phases @ weights.ravel()


def _autocorrelation_block(args):
    system, chunk, tgrid = args
    return [(cluster, _cluster_autocorrelation(system, cluster, tgrid)) for cluster in chunk]


def autocorrelation_cce(system: SpinSystem, clusters, tgrid, workers: int = 1):
    """Autocorrelation of the secular Overhauser field, C_AA(t).

    Cluster contributions are combined by the additive recursion
    Ctilde_C = C_C - sum of sub-cluster contributions; each cluster
    evolves under its bath Hamiltonian in the Heisenberg picture.
    Returns the real part (the imaginary part vanishes for the
    unpolarized thermal state).
    """
    tgrid = np.asarray(tgrid, dtype=float)
    if workers <= 1 or len(clusters.clusters) < 4 * workers:
        blocks = [_autocorrelation_block((system, clusters.clusters, tgrid))]
    else:
        chunks = np.array_split(np.arange(len(clusters.clusters)), workers)
        jobs = [(system, tuple(clusters.clusters[i] for i in chunk), tgrid)
                for chunk in chunks if len(chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_autocorrelation_block, jobs))
    raw = {cluster: values for block in blocks for cluster, values in block}
    contributions: dict = {}
    total = np.zeros(len(tgrid), dtype=complex)
    membership = clusters.membership()
    for cluster in clusters.clusters:
        value = raw[cluster].copy()
        if len(cluster) > 1:
            for size in range(1, len(cluster)):
                for sub in itertools.combinations(cluster, size):
                    if sub in membership:
                        value -= contributions[sub]
        contributions[cluster] = value
        total += value
    return total.real


# ---------------------------------------------------------------------------
# stretched-exponential fitting


@dataclass(frozen=True)
class StretchedFit:
    """Result of fitting |L(t)| to exp(-(t/T2)^n)."""

    t2: float
    n: float
    residual: float


def fit_stretched(curve, tgrid=None) -> StretchedFit:
    """Least-squares fit of a coherence magnitude to exp(-(t/T2)^n).

    Accepts a :class:`CoherenceCurve` or a value array plus ``tgrid``.
    T2 is initialized from the 1/e crossing (linear interpolation) and
    n from 1; parameters are converged to 1e-10.  Raises
    :class:`InsufficientDecayError` when |L| never falls below 1/e.
    """
    if isinstance(curve, CoherenceCurve):
        t = curve.time
        y = curve.magnitude
    else:
        y = np.abs(np.asarray(curve))
        t = np.asarray(tgrid, dtype=float)
    target = 1.0 / np.e
    below = np.nonzero(y < target)[0]
    if len(below) == 0:
        raise InsufficientDecayError(
            f"|L| stays above 1/e (minimum {y.min():.4g}); extend the time grid",
            min_abs=float(y.min()),
        )
    k = below[0]
    if k == 0:
        t2_init = t[0] if t[0] > 0 else t[1]
    else:
        frac = (y[k - 1] - target) / max(y[k - 1] - y[k], 1e-300)
        t2_init = t[k - 1] + frac * (t[k] - t[k - 1])

    def model(tt, t2, n):
        return np.exp(-((tt / t2) ** n))

    params, _ = scipy.optimize.curve_fit(
        model, t, y, p0=(max(t2_init, 1e-12), 1.0),
        bounds=((1e-12, 0.05), (np.inf, 20.0)),
        xtol=1e-10, ftol=1e-10, gtol=1e-10, max_nfev=20000,
    )
    resid = y - model(t, *params)
    return StretchedFit(t2=float(params[0]), n=float(params[1]),
                        residual=float(np.sqrt(np.mean(resid**2))))

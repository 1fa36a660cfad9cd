"""Independent ground-truth references for the expansion engines.

Everything here deliberately avoids the engine code paths: Hamiltonians
are assembled by a separate kron routine from the raw coupling data,
unitaries come from scipy's matrix exponential instead of
eigendecomposition, and the master equation is integrated by
exponentiating the full superoperator.  The Ornstein-Uhlenbeck Monte
Carlo uses the exact joint update of the process and its time integral,
so its static and white limits carry no step-size bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionOverflowError
from .pulses import PulseSequence


@dataclass(frozen=True)
class OracleLimits:
    """Size guards for exact computations."""

    max_unitary_dim: int = 4096
    max_lindblad_dim: int = 64

    def __post_init__(self):
        if self.max_unitary_dim <= 0 or self.max_lindblad_dim <= 0:
            raise ConfigError("oracle limits must be positive")


# ---------------------------------------------------------------------------
# independent spin matrices and Hamiltonian assembly


def _spin_mats(s: float):
    dim = int(round(2 * s)) + 1
    mvals = [s - k for k in range(dim)]
    sp = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        m = mvals[k]
        sp[k - 1, k] = np.sqrt(s * (s + 1) - m * (m + 1))
    sm = sp.conj().T
    return 0.5 * (sp + sm), -0.5j * (sp - sm), np.diag(mvals).astype(complex)


def _embed(local_ops: dict, dims):
    """Embed per-slot local matrices (others identity) into the product space."""
    op = np.array([[1.0 + 0j]])
    for k, d in enumerate(dims):
        op = np.kron(op, local_ops.get(k, np.eye(d)))
    return op


def _contracted(tensor, mats_row, mats_col):
    """Pair of local operators realizing sum_ab T[ab] S_a x I_b."""
    out = []
    for a in range(3):
        row = tensor[a]
        if not np.any(row):
            continue
        op2 = row[0] * mats_col[0] + row[1] * mats_col[1] + row[2] * mats_col[2]
        out.append((mats_row[a], op2))
    return out


def _joint_dimension(system) -> int:
    dims = [system.central.dim] + [sp.dim for sp in system.bath]
    return int(np.prod(dims))


def _full_hamiltonian(system):
    """Total Hamiltonian on the central + bath product space, rad/ms."""
    from .constants import MUB_OVER_HBAR

    central = system.central
    b = np.asarray(system.b_field, dtype=float)
    spins = [central.s] + [sp.species.s for sp in system.bath]
    dims = [int(round(2 * s)) + 1 for s in spins]
    mats = [_spin_mats(s) for s in spins]
    total = int(np.prod(dims))
    h = np.zeros((total, total), dtype=complex)

    # central Zeeman
    if central.gamma is not None:
        weights = central.gamma * b
    else:
        g = np.asarray(central.g, dtype=float)
        g = g * np.eye(3) if g.ndim == 0 else g
        weights = MUB_OVER_HBAR * (b @ g)
    zeeman_c = weights[0] * mats[0][0] + weights[1] * mats[0][1] + weights[2] * mats[0][2]
    h += _embed({0: zeeman_c}, dims)

    # central ZFS
    if central.s >= 1.0:
        if central.zfs_tensor is not None:
            zt = np.asarray(central.zfs_tensor, dtype=float)
            local = sum(zt[a, c] * mats[0][a] @ mats[0][c]
                        for a in range(3) for c in range(3) if zt[a, c])
            h += _embed({0: local}, dims)
        else:
            sz2 = mats[0][2] @ mats[0][2]
            local = central.d * (sz2 - central.s * (central.s + 1) / 3.0 * np.eye(dims[0]))
            if central.e:
                local = local + central.e * (mats[0][0] @ mats[0][0] - mats[0][1] @ mats[0][1])
            h += _embed({0: local}, dims)

    # hyperfine, bath Zeeman, quadrupole, intra-bath couplings
    for k, spin in enumerate(system.bath):
        slot = k + 1
        for op_c, op_n in _contracted(np.asarray(spin.a, dtype=float), mats[0], mats[slot]):
            h += _embed({0: op_c, slot: op_n}, dims)
        zeeman_n = spin.species.gamma * (b[0] * mats[slot][0] + b[1] * mats[slot][1]
                                         + b[2] * mats[slot][2])
        h += _embed({slot: zeeman_n}, dims)
        if spin.q is not None and spin.species.s >= 1.0:
            q = np.asarray(spin.q, dtype=float)
            local = sum(q[a, c] * mats[slot][a] @ mats[slot][c]
                        for a in range(3) for c in range(3) if q[a, c])
            h += _embed({slot: local}, dims)
    for i in range(len(system.bath)):
        for j in range(i + 1, len(system.bath)):
            jt = system.couplings.intra(i, j)
            for op_i, op_j in _contracted(np.asarray(jt, dtype=float), mats[i + 1], mats[j + 1]):
                h += _embed({i + 1: op_i, j + 1: op_j}, dims)
    return h, dims


def _initial_rho(system, levels):
    psi = (levels.state0 + levels.state1) / np.sqrt(2.0)
    rho = np.outer(psi, psi.conj())
    for spin in system.bath:
        dim = spin.dim
        if spin.populations is not None:
            local = np.diag(np.asarray(spin.populations, dtype=float)).astype(complex)
        else:
            local = np.eye(dim, dtype=complex) / dim
        rho = np.kron(rho, local)
    return rho


def _pulse_unitary(levels, bath_dim: int):
    swap = (np.outer(levels.state0, levels.state1.conj())
            + np.outer(levels.state1, levels.state0.conj()))
    proj = (np.outer(levels.state0, levels.state0.conj())
            + np.outer(levels.state1, levels.state1.conj()))
    p_central = np.eye(levels.dim, dtype=complex) - proj + swap
    return np.kron(p_central, np.eye(bath_dim))


def _element_operator(levels, pulses: PulseSequence, bath_dim: int):
    """Trace operator for the coherence element after the pulse rotations.

    The element follows the pulses: <0|rho|1> for even pulse counts,
    <1|rho|0> for odd (the pi rotations exchange the level pair).
    """
    if pulses.n_pulses % 2:
        kmat = np.outer(levels.state0, levels.state1.conj())
    else:
        kmat = np.outer(levels.state1, levels.state0.conj())
    return np.kron(kmat, np.eye(bath_dim)) if bath_dim > 1 else kmat


class _UnitaryBank:
    """exp(-i H tau) for a set of durations, via scipy expm.

    When the durations form an integer ladder the exponentials are built
    incrementally from a single base step; otherwise each duration is
    exponentiated directly.
    """

    def __init__(self, h: np.ndarray, taus):
        self._table: dict = {}
        taus = np.unique(np.asarray(taus, dtype=float))
        taus = taus[taus > 0]
        dim = h.shape[0]
        self._table[0.0] = np.eye(dim, dtype=complex)
        if len(taus) == 0:
            return
        base = taus[0]
        ratios = taus / base
        ladder = np.all(np.abs(ratios - np.round(ratios)) < 1e-9) and ratios[-1] <= 2e5
        if ladder:
            u_base = scipy.linalg.expm(-1j * h * base)
            current = np.eye(dim, dtype=complex)
            k = 0
            for tau, ratio in zip(taus, np.round(ratios).astype(int)):
                while k < ratio:
                    current = current @ u_base
                    k += 1
                self._table[tau] = current
        else:
            for tau in taus:
                self._table[tau] = scipy.linalg.expm(-1j * h * tau)

    def __getitem__(self, tau: float) -> np.ndarray:
        return self._table[tau]


def _propagate_series(h, rho, kmat, pulse_op, pulses: PulseSequence, tgrid):
    bounds = pulses.bounds
    durations = np.diff(bounds)
    taus = np.outer(tgrid, durations)
    bank = _UnitaryBank(h, taus.ravel())
    out = np.empty(len(tgrid), dtype=complex)
    for idx, t in enumerate(tgrid):
        u = bank[taus[idx, 0]]
        for j in range(1, len(durations)):
            u = bank[taus[idx, j]] @ (pulse_op @ u)
        rho_t = u @ rho @ u.conj().T
        out[idx] = np.trace(rho_t @ kmat)
    return out


def exact_coherence(system, levels, pulses: PulseSequence, tgrid,
                    limits: OracleLimits = OracleLimits()) -> np.ndarray:
    """Coherence from full-Hilbert-space propagation with explicit pulses.

    Returns <0|rho_reduced(t)|1> normalized by the bath-free central
    evolution, the same convention as the generalized expansion.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    total = _joint_dimension(system)
    if total > limits.max_unitary_dim:
        raise DimensionOverflowError(
            f"joint dimension {total} exceeds the unitary oracle limit {limits.max_unitary_dim}"
        )
    h, dims = _full_hamiltonian(system)
    bath_dim = total // dims[0]
    rho = _initial_rho(system, levels)
    kmat = _element_operator(levels, pulses, bath_dim)
    pulse_op = _pulse_unitary(levels, bath_dim)
    raw = _propagate_series(h, rho, kmat, pulse_op, pulses, tgrid)

    h_ref = _central_only_hamiltonian(system)
    rho_ref = _initial_rho_central(levels)
    kmat_ref = _element_operator(levels, pulses, 1)
    pulse_ref = _pulse_unitary(levels, 1)
    ref = _propagate_series(h_ref, rho_ref, kmat_ref, pulse_ref, pulses, tgrid)
    guard = np.abs(ref) < 1e-14
    return np.where(guard, 1.0, raw / np.where(guard, 1.0, ref))


def _central_only_hamiltonian(system):
    class _Bare:
        central = system.central
        bath: list = []
        b_field = system.b_field
        couplings = None

    h, _ = _full_hamiltonian(_Bare)
    return h


def exact_lindblad(system, levels, pulses: PulseSequence, tgrid,
                   limits: OracleLimits = OracleLimits(), return_states: bool = False):
    """Coherence from the full-space master equation.

    Dissipators configured on the bath spins act on the joint density
    matrix; each pulse segment is propagated by exponentiating the
    vectorized generator, and pulses sandwich rho with the explicit
    unitary.  With ``return_states`` also returns vec(rho) at every
    grid point (used to verify trace preservation).
    """
    tgrid = np.asarray(tgrid, dtype=float)
    total = _joint_dimension(system)
    if total > limits.max_lindblad_dim:
        raise DimensionOverflowError(
            f"joint dimension {total} exceeds the Lindblad oracle limit {limits.max_lindblad_dim}"
        )
    h, dims = _full_hamiltonian(system)
    bath_dim = total // dims[0]
    eye = np.eye(total)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for k, spin in enumerate(system.bath):
        if not spin.dissipators:
            continue
        sx, sy, sz = _spin_mats(spin.species.s)
        local = {"z": sz, "+": sx + 1j * sy, "-": sx - 1j * sy, "x": sx, "y": sy}
        for rate, label in spin.dissipators:
            if rate < 0:
                raise ConfigError("Lindblad rates must be non-negative")
            op = np.array([[1.0 + 0j]])
            for slot, d in enumerate(dims):
                op = np.kron(op, local[label] if slot == k + 1 else np.eye(d))
            opd_op = op.conj().T @ op
            gen += rate * (np.kron(op, op.conj())
                           - 0.5 * np.kron(opd_op, eye)
                           - 0.5 * np.kron(eye, opd_op.T))

    rho = _initial_rho(system, levels)
    kmat = _element_operator(levels, pulses, bath_dim)
    pulse_op = _pulse_unitary(levels, bath_dim)
    pulse_super = np.kron(pulse_op, pulse_op.conj())
    durations = np.diff(pulses.bounds)

    steps: dict = {}
    out = np.empty(len(tgrid), dtype=complex)
    states = np.empty((len(tgrid), total * total), dtype=complex) if return_states else None
    kvec = kmat.T.reshape(-1)
    for idx, t in enumerate(tgrid):
        vec = rho.reshape(-1)
        for j, d in enumerate(durations):
            tau = d * t
            if tau > 0:
                key = tau
                if key not in steps:
                    steps[key] = scipy.linalg.expm(gen * tau)
                vec = steps[key] @ vec
            if j < len(durations) - 1:
                vec = pulse_super @ vec
        out[idx] = vec @ kvec
        if return_states:
            states[idx] = vec

    h_ref = _central_only_hamiltonian(system)
    rho_ref = _initial_rho_central(levels)
    kref = _element_operator(levels, pulses, 1)
    ref = _propagate_series(h_ref, rho_ref, kref, _pulse_unitary(levels, 1), pulses, tgrid)
    guard = np.abs(ref) < 1e-14
    normalized = np.where(guard, 1.0, out / np.where(guard, 1.0, ref))
    if return_states:
        return normalized, states
    return normalized


def _initial_rho_central(levels):
    psi = (levels.state0 + levels.state1) / np.sqrt(2.0)
    return np.outer(psi, psi.conj())


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck dephasing Monte Carlo


def ou_monte_carlo(variance: float, tau_c: float, pulses: PulseSequence, tgrid,
                   m: int, seed) -> np.ndarray:
    """<exp(-i phi)> over Ornstein-Uhlenbeck noise trajectories.

    phi = integral of y(tau) nu(tau) over [0, t] with the toggling sign
    y of the pulse sequence.  The process value and its segment
    integral are drawn from their exact joint Gaussian update, so any
    segment length is unbiased (static and white limits exact).
    """
    if m < 1:
        raise ConfigError("need at least one trajectory")
    if variance < 0 or tau_c <= 0:
        raise ConfigError("variance must be >= 0 and tau_c > 0")
    tgrid = np.asarray(tgrid, dtype=float)
    rng = np.random.default_rng(seed)
    durations = np.diff(pulses.bounds)
    signs = (-1.0) ** np.arange(len(durations))
    out = np.empty(len(tgrid), dtype=complex)
    sigma = np.sqrt(variance)
    for idx, t in enumerate(tgrid):
        if t == 0:
            out[idx] = 1.0
            continue
        nu = sigma * rng.standard_normal(m)
        phi = np.zeros(m)
        for sign, d in zip(signs, durations):
            delta = d * t
            x = delta / tau_c
            u = -np.expm1(-x)       # 1 - e^{-x} without cancellation
            w = -np.expm1(-2.0 * x)
            # Var[I]/ (<nu^2> tc^2) = 2x - 2u - u^2; series below x ~ 1e-3
            if x < 1e-3:
                shape = x**3 * (2.0 / 3.0 - 0.5 * x + 7.0 / 30.0 * x * x)
            else:
                shape = 2.0 * x - 2.0 * u - u * u
            mean_i = nu * tau_c * u
            var_i = variance * tau_c**2 * shape
            var_nu = variance * w
            cov = variance * tau_c * u * u
            z1 = rng.standard_normal(m)
            z2 = rng.standard_normal(m)
            nu_next = nu * (1.0 - u) + np.sqrt(max(var_nu, 0.0)) * z1
            a = cov / np.sqrt(var_nu) if var_nu > 0 else 0.0
            b = np.sqrt(max(var_i - a * a, 0.0))
            phi += sign * (mean_i + a * z1 + b * z2)
            nu = nu_next
        out[idx] = np.mean(np.exp(-1j * phi))
    return out

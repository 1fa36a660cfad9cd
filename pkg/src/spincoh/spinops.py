"""Spin algebra and Hamiltonian term construction.

Spin matrices of arbitrary half-integer spin (up to 9/2) and the
individual interaction terms of a central-spin-plus-bath Hamiltonian:
Zeeman, zero-field splitting, quadrupole, hyperfine/dipolar couplings.

Conventions used throughout the package:

* product basis is ordered central spin first (when present), then bath
  spins by ascending index; within each spin the magnetic quantum number
  m runs from +s down to -s;
* all assembled Hamiltonians are angular frequencies in rad/ms;
* Zeeman terms read H = +gamma B.S with the sign carried by gamma.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .constants import (
    DIPOLE_PREFACTOR,
    FREE_ELECTRON_G,
    MIN_DIPOLE_DISTANCE,
    MUB_OVER_HBAR,
)
from .errors import CoincidentSpinsError, ConfigError, MissingCouplingError

MAX_SPIN = 4.5


@dataclass(frozen=True)
class SpinSpecies:
    """Identity of a spin-carrying isotope (or an electron)."""

    name: str
    s: float
    gamma: float  # rad / (ms G), signed
    abundance: float = 0.0
    q_moment: float = 0.0  # millibarn

    def __post_init__(self):
        _check_spin(self.s)
        if not 0.0 <= self.abundance <= 1.0:
            raise ConfigError(f"abundance of {self.name} outside [0, 1]: {self.abundance}")
        if not math.isfinite(self.gamma):
            raise ConfigError(f"non-finite gamma for {self.name}")

    @property
    def dim(self) -> int:
        return int(round(2 * self.s)) + 1


@dataclass(frozen=True)
class SpinOperators:
    """Cartesian spin matrices for a single spin, m descending."""

    s: float
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    @property
    def dim(self) -> int:
        return self.sz.shape[0]

    @property
    def stack(self) -> np.ndarray:
        """Operators stacked as an array of shape (3, dim, dim)."""
        return np.stack([self.sx, self.sy, self.sz])


def _check_spin(s: float) -> None:
    two_s = 2 * s
    if s < 0 or abs(two_s - round(two_s)) > 1e-9:
        raise ConfigError(f"spin must be a non-negative half-integer, got {s}")
    if s > MAX_SPIN:
        raise ConfigError(f"spin {s} exceeds the supported maximum {MAX_SPIN}")


def spin_matrices(s: float) -> SpinOperators:
    """Build spin matrices from the ladder-operator matrix elements.

    Returns operators satisfying [Sx, Sy] = i Sz (and cyclic) and
    Sx^2 + Sy^2 + Sz^2 = s(s+1) I.
    """
    _check_spin(s)
    dim = int(round(2 * s)) + 1
    m = s - np.arange(dim)  # descending
    # <m+1|S+|m> on the superdiagonal of S+ in the descending-m basis
    raising = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    sp = np.zeros((dim, dim), dtype=complex)
    sp[np.arange(dim - 1), np.arange(1, dim)] = raising
    sm = sp.conj().T
    sx = 0.5 * (sp + sm)
    sy = -0.5j * (sp - sm)
    sz = np.diag(m).astype(complex)
    return SpinOperators(s=s, sx=sx, sy=sy, sz=sz)


def zeeman_term(gamma, b_field, ops: SpinOperators) -> np.ndarray:
    """Zeeman Hamiltonian +gamma B.S in rad/ms.

    ``gamma`` is either a scalar gyromagnetic ratio in rad/(ms G) or a
    dimensionless 3x3 g tensor; the tensor form evaluates
    (mu_B/hbar) B.g.S as appropriate for an electron spin.
    """
    b = np.asarray(b_field, dtype=float)
    if b.shape != (3,):
        raise ConfigError(f"magnetic field must be a 3-vector, got shape {b.shape}")
    gamma_arr = np.asarray(gamma, dtype=float)
    if gamma_arr.ndim == 0:
        weights = float(gamma_arr) * b
    elif gamma_arr.shape == (3, 3):
        weights = MUB_OVER_HBAR * (b @ gamma_arr)
    else:
        raise ConfigError(f"gamma must be a scalar or 3x3 tensor, got shape {gamma_arr.shape}")
    return np.einsum("a,aij->ij", weights, ops.stack)


def zfs_term(ops: SpinOperators, d: float = 0.0, e: float = 0.0, tensor=None) -> np.ndarray:
    """Zero-field splitting, D (Sz^2 - s(s+1)/3) + E (Sx^2 - Sy^2) or S.D.S.

    Absent for spin-1/2: returns a zero matrix (with a warning when a
    nonzero splitting was requested).
    """
    dim = ops.dim
    if ops.s < 1.0:
        requested = d != 0.0 or e != 0.0 or (tensor is not None and np.any(np.asarray(tensor)))
        if requested:
            warnings.warn("zero-field splitting requested for spin < 1; term is absent", stacklevel=2)
        return np.zeros((dim, dim), dtype=complex)
    if tensor is not None:
        t = _as_tensor3(tensor, "ZFS tensor")
        return np.einsum("ab,aij,bjk->ik", t, ops.stack, ops.stack)
    casimir = ops.s * (ops.s + 1) / 3.0
    out = d * (ops.sz @ ops.sz - casimir * np.eye(dim))
    if e:
        out = out + e * (ops.sx @ ops.sx - ops.sy @ ops.sy)
    return out


def quadrupole_term(q_tensor, ops: SpinOperators) -> np.ndarray:
    """Quadrupole Hamiltonian I.Q.I for an assembled product tensor Q.

    ``q_tensor`` is the ready-made eQ V / (2I(2I-1)) product in rad/ms.
    Spin-1/2 carries no quadrupole moment and yields a zero matrix.
    """
    dim = ops.dim
    if ops.s < 1.0 or q_tensor is None:
        return np.zeros((dim, dim), dtype=complex)
    q = _as_tensor3(q_tensor, "quadrupole tensor")
    return np.einsum("ab,aij,bjk->ik", q, ops.stack, ops.stack)


def dipolar_tensor(r_vec, gamma1: float, gamma2: float, min_distance: float = MIN_DIPOLE_DISTANCE) -> np.ndarray:
    """Point-dipole coupling tensor between two spins separated by ``r_vec``.

    T_ab = (mu0/4pi) gamma1 gamma2 hbar (r^2 d_ab - 3 r_a r_b) / r^5, in
    rad/ms for r in Angstrom.  Symmetric and trace-free by construction.
    """
    r = np.asarray(r_vec, dtype=float)
    if r.shape != (3,):
        raise ConfigError(f"separation must be a 3-vector, got shape {r.shape}")
    dist = float(np.linalg.norm(r))
    if dist < min_distance:
        raise CoincidentSpinsError(
            f"spins separated by {dist:.4g} A are below the {min_distance:g} A point-dipole limit"
        )
    pref = DIPOLE_PREFACTOR * gamma1 * gamma2 / dist**5
    return pref * (dist**2 * np.eye(3) - 3.0 * np.outer(r, r))


def hyperfine_components(a_tensor) -> tuple[float, float]:
    """Split a hyperfine tensor into (A_parallel, A_perp) = (A_zz, hypot(A_xz, A_yz))."""
    a = _as_tensor3(a_tensor, "hyperfine tensor")
    return float(a[2, 2]), float(math.hypot(a[0, 2], a[1, 2]))


def _as_tensor3(value, label: str) -> np.ndarray:
    t = np.asarray(value, dtype=float)
    if t.shape != (3, 3):
        raise ConfigError(f"{label} must be 3x3, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ConfigError(f"{label} contains non-finite entries")
    return t


# ---------------------------------------------------------------------------
# central spin description


@dataclass(frozen=True)
class CentralSpin:
    """The qubit-carrying spin: its Hamiltonian terms and level selection.

    ``g`` is either a dimensionless scalar/3x3 tensor (electron) or, when
    ``gamma`` is given, the scalar gyromagnetic ratio in rad/(ms G)
    (nuclear central spin).  ``d``/``e`` are the axial/transverse
    zero-field splittings in rad/ms; ``zfs_tensor`` (rad/ms) overrides
    them when present.  ``levels`` holds the two qubit levels as Sz
    labels; with ``eigen_levels`` the labels select the eigenstates of
    the central Hamiltonian with the largest overlap instead.
    """

    s: float = 0.5
    g: object = FREE_ELECTRON_G
    gamma: float | None = None
    d: float = 0.0
    e: float = 0.0
    zfs_tensor: object = None
    position: tuple = (0.0, 0.0, 0.0)
    levels: tuple = (0.5, -0.5)
    eigen_levels: bool = False

    def __post_init__(self):
        _check_spin(self.s)
        m0, m1 = self.levels
        if m0 == m1:
            raise ConfigError("the two qubit levels must be distinct")
        for m in (m0, m1):
            if abs(m) > self.s + 1e-9 or abs(2 * m - round(2 * m)) > 1e-9:
                raise ConfigError(f"level label {m} is not an Sz eigenvalue of spin {self.s}")
        if self.s < 1.0 and (self.d or self.e or self.zfs_tensor is not None):
            warnings.warn("zero-field splitting on a spin-1/2 central spin is ignored", stacklevel=2)

    @property
    def dim(self) -> int:
        return int(round(2 * self.s)) + 1

    @property
    def operators(self) -> SpinOperators:
        return spin_matrices(self.s)

    def effective_gamma(self) -> float:
        """Scalar gyromagnetic ratio used for point-dipole couplings."""
        if self.gamma is not None:
            return float(self.gamma)
        g = np.asarray(self.g, dtype=float)
        g_iso = float(g) if g.ndim == 0 else float(np.trace(g) / 3.0)
        return g_iso * MUB_OVER_HBAR

    def hamiltonian(self, b_field) -> np.ndarray:
        """Central-spin Hamiltonian H_S = Zeeman + ZFS in rad/ms."""
        ops = self.operators
        if self.gamma is not None:
            gam = float(self.gamma)
        else:
            g = np.asarray(self.g, dtype=float)
            gam = g * np.eye(3) if g.ndim == 0 else g  # scalar g means isotropic tensor
        h = zeeman_term(gam, b_field, ops)
        if self.s >= 1.0:
            h = h + zfs_term(ops, d=self.d, e=self.e, tensor=self.zfs_tensor)
        return h

    def sz_index(self, m: float) -> int:
        return int(round(self.s - m))


def load_isotopes(path=None) -> dict[str, SpinSpecies]:
    """Read an isotope table: ``name spin gamma abundance q_moment`` per line.

    Lines starting with ``#`` are comments.  Without ``path`` the table
    shipped with the package is used.
    """
    if path is None:
        text = resources.files("spincoh").joinpath("data/isotopes.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    table: dict[str, SpinSpecies] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ConfigError(f"isotope table line {lineno}: expected 5 fields, got {len(parts)}")
        name = parts[0]
        try:
            s, gamma, abundance, q_moment = map(float, parts[1:])
        except ValueError as exc:
            raise ConfigError(f"isotope table line {lineno}: {exc}") from exc
        table[name] = SpinSpecies(name=name, s=s, gamma=gamma, abundance=abundance, q_moment=q_moment)
    return table


# ---------------------------------------------------------------------------
# product-space assembly


def kron_embed(op: np.ndarray, slot: int, dims) -> np.ndarray:
    """Embed a single-site operator into the product space at ``slot``."""
    before = int(np.prod(dims[:slot], initial=1))
    after = int(np.prod(dims[slot + 1:], initial=1))
    out = op
    if before > 1:
        out = np.kron(np.eye(before), out)
    if after > 1:
        out = np.kron(out, np.eye(after))
    return out


def kron_embed_pair(op1: np.ndarray, slot1: int, op2: np.ndarray, slot2: int, dims) -> np.ndarray:
    """Embed a two-site product operator, slot1 < slot2."""
    if slot1 >= slot2:
        raise ValueError("slot1 must precede slot2")
    before = int(np.prod(dims[:slot1], initial=1))
    between = int(np.prod(dims[slot1 + 1: slot2], initial=1))
    after = int(np.prod(dims[slot2 + 1:], initial=1))
    out = op1
    if between > 1:
        out = np.kron(out, np.eye(between))
    out = np.kron(out, op2)
    if before > 1:
        out = np.kron(np.eye(before), out)
    if after > 1:
        out = np.kron(out, np.eye(after))
    return out


def coupling_term(tensor, ops1: SpinOperators, slot1: int, ops2: SpinOperators, slot2: int, dims) -> np.ndarray:
    """Bilinear coupling S1.T.S2 embedded into the product space."""
    t = _as_tensor3(tensor, "coupling tensor")
    total = int(np.prod(dims))
    out = np.zeros((total, total), dtype=complex)
    for a in range(3):
        row = t[a]
        if not np.any(row):
            continue
        op2 = np.einsum("b,bij->ij", row, ops2.stack)
        out += kron_embed_pair(ops1.stack[a], slot1, op2, slot2, dims)
    return out


@dataclass
class ClusterHamiltonian:
    """Hamiltonian over central (optional) + member product space."""

    matrix: np.ndarray
    dims: tuple
    has_central: bool
    central: CentralSpin | None = None
    members: tuple = ()
    b_field: tuple = (0.0, 0.0, 0.0)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def bath_dims(self) -> tuple:
        return self.dims[1:] if self.has_central else self.dims


def assemble_cluster_hamiltonian(central: CentralSpin | None, members, j_tensors, b_field,
                                 extra_field=None) -> ClusterHamiltonian:
    """Assemble H = H_S + H_SB + H_B on the cluster product space.

    ``members`` is a sequence of bath spins (``species``, ``a``, ``q``
    attributes); ``j_tensors`` maps local member index pairs (i, j) with
    i < j to intra-bath 3x3 coupling tensors in rad/ms.  ``extra_field``
    optionally adds a per-member effective field (rad/ms 3-vectors),
    used for mean-field shifts from spins outside the cluster.

    Raises :class:`MissingCouplingError` when a member lacks its
    central coupling or a member pair lacks an intra-bath tensor.
    """
    b = np.asarray(b_field, dtype=float)
    offset = 1 if central is not None else 0
    member_ops = [spin_matrices(m.species.s) for m in members]
    dims = tuple(([central.dim] if central is not None else []) + [op.dim for op in member_ops])
    total = int(np.prod(dims))
    h = np.zeros((total, total), dtype=complex)

    if central is not None:
        ops_c = central.operators
        h += kron_embed(central.hamiltonian(b), 0, dims)
        for k, member in enumerate(members):
            if member.a is None:
                raise MissingCouplingError(
                    f"bath spin {k} ({member.species.name}) has no coupling to the central spin"
                )
            h += coupling_term(member.a, ops_c, 0, member_ops[k], offset + k, dims)

    for k, member in enumerate(members):
        ops_k = member_ops[k]
        slot = offset + k
        h += kron_embed(zeeman_term(member.species.gamma, b, ops_k), slot, dims)
        if member.q is not None and member.species.s >= 1.0:
            h += kron_embed(quadrupole_term(member.q, ops_k), slot, dims)
        if extra_field is not None:
            w = np.asarray(extra_field[k], dtype=float)
            if np.any(w):
                h += kron_embed(np.einsum("a,aij->ij", w, ops_k.stack), slot, dims)

    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            tensor = j_tensors.get((i, j)) if hasattr(j_tensors, "get") else j_tensors(i, j)
            if tensor is None:
                raise MissingCouplingError(f"missing intra-bath coupling tensor for member pair ({i}, {j})")
            h += coupling_term(tensor, member_ops[i], offset + i, member_ops[j], offset + j, dims)

    return ClusterHamiltonian(matrix=h, dims=dims, has_central=central is not None,
                              central=central, members=tuple(members), b_field=tuple(b))

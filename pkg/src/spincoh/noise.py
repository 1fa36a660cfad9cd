"""Classical and semiclassical dephasing models.

Filter functions of dynamical-decoupling sequences, Gaussian-noise
coherence from a spectral density, correlation/spectrum transforms,
golden-rule relaxation, coherence-time composition, and the Bloch
equations.

Convention note.  The coherence integral is
L(t) = exp[-(1/4pi) Integral S(w) |Y(w,t)|^2 dw] with
Y(w,t) = Integral_0^t y(tau) e^{i w tau} d tau the window transform of
the toggling sign; this is the normalization fixed by requiring the
static-noise Ramsey decay exp(-<nu^2> t^2 / 2).  The tabulated filter
functions returned by :func:`filter_freq` follow the halved echo
normalization common in the decoupling literature (Hahn form
8 sin^4(w t/4)/w^2): they equal |Y|^2 for free evolution and |Y|^2 / 2
for any pulsed sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .errors import ConfigError, NonConvergentIntegralError
from .pulses import PulseSequence

def _cosine_transform(values, grid, points):
    """Simpson integral of values(grid) * cos(p * grid) for each p."""
    return np.array([
        scipy.integrate.simpson(values * np.cos(p * grid), x=grid) for p in np.atleast_1d(points)
    ])


def filter_time(pulses: PulseSequence, total_time: float):
    """Toggling step function y(tau): breakpoints and segment signs.

    Returns (times, signs): y equals signs[j] on
    [times[j], times[j+1]); +1 initially, flipping at each pulse.
    """
    bounds = pulses.bounds * total_time
    signs = (-1.0) ** np.arange(len(bounds) - 1)
    return bounds, signs


def _window_transform_sq(pulses: PulseSequence, omega, total_time: float):
    """|Y(w, t)|^2 for the toggling sign y of the sequence.

    Y(w,t) = sum_j (-1)^j (e^{i w b_{j+1}} - e^{i w b_j}) / (i w) over
    the segment boundaries b_j; the removable w -> 0 singularity is
    evaluated by series expansion.
    """
    omega = np.asarray(omega, dtype=float)
    scalar = omega.ndim == 0
    w = np.atleast_1d(omega).astype(float)
    bounds = pulses.bounds * total_time
    signs = (-1.0) ** np.arange(len(bounds) - 1)
    out = np.empty_like(w, dtype=float)

    small = np.abs(w) * total_time < 1e-5
    big = ~small
    if np.any(big):
        wb = w[big]
        phases = np.exp(1j * np.outer(wb, bounds))
        y = (phases[:, 1:] - phases[:, :-1]) @ signs / (1j * wb)
        out[big] = np.abs(y) ** 2
    if np.any(small):
        ws = w[small]
        # (e^{iwb} - e^{iwa})/(iw) = (b-a) + iw(b^2-a^2)/2 - w^2(b^3-a^3)/6 - i w^3 (b^4-a^4)/24
        powers = [bounds**k for k in range(1, 5)]
        c1 = signs @ np.diff(powers[0])
        c2 = signs @ np.diff(powers[1]) / 2.0
        c3 = signs @ np.diff(powers[2]) / 6.0
        c4 = signs @ np.diff(powers[3]) / 24.0
        y = (c1 + 1j * ws * c2 - ws**2 * c3 - 1j * ws**3 * c4)
        out[small] = np.abs(y) ** 2
    return out[0] if scalar else out.reshape(omega.shape)


def filter_freq(pulses: PulseSequence, omega, total_time: float):
    """Filter function F(w, t) of a pulse sequence.

    Free evolution returns 4 sin^2(w t/2)/w^2 (limit t^2 at w = 0);
    pulsed sequences return the halved window transform, which for the
    Hahn echo is the closed form 8 sin^4(w t/4)/w^2.
    """
    factor = 1.0 if pulses.n_pulses == 0 else 0.5
    return factor * _window_transform_sq(pulses, omega, total_time)


def filter_freq_numeric(pulses: PulseSequence, omega, total_time: float, rtol: float = 1e-9):
    """|Y(w,t)|^2 by direct quadrature of the toggling sign.

    Verification path for the closed forms: integrates
    y(tau) e^{i w tau} numerically over each constant-sign segment.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    bounds = pulses.bounds * total_time
    signs = (-1.0) ** np.arange(len(bounds) - 1)
    out = np.empty_like(omega)
    for k, w in enumerate(omega):
        re = im = 0.0
        for j, sign in enumerate(signs):
            re += sign * scipy.integrate.quad(lambda x: math.cos(w * x), bounds[j], bounds[j + 1],
                                              epsabs=1e-13, epsrel=rtol, limit=200)[0]
            im += sign * scipy.integrate.quad(lambda x: math.sin(w * x), bounds[j], bounds[j + 1],
                                              epsabs=1e-13, epsrel=rtol, limit=200)[0]
        out[k] = re * re + im * im
    return out if out.size > 1 else float(out[0])


# ---------------------------------------------------------------------------
# spectral densities


@dataclass(frozen=True)
class SpectralDensity:
    """Two-sided classical noise spectrum S(w).

    ``form`` is one of ``white`` (S0), ``lorentzian`` (variance,
    correlation time), ``static`` (variance; treated as an exact delta
    peak), or ``tabulated`` (omega grid + values, zero outside).
    Angular frequencies in rad/ms, S in (rad/ms)^2 * ms.
    """

    form: str
    s0: float = 0.0
    variance: float = 0.0
    tau_c: float = 0.0
    omega: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.form not in ("white", "lorentzian", "static", "tabulated"):
            raise ConfigError(f"unknown spectral density form {self.form!r}")
        if self.form == "lorentzian" and self.tau_c <= 0:
            raise ConfigError("lorentzian spectrum needs tau_c > 0")
        if self.variance < 0 or self.s0 < 0:
            raise ConfigError("spectral density parameters must be non-negative")
        if self.form == "tabulated":
            w = np.asarray(self.omega, dtype=float)
            s = np.asarray(self.values, dtype=float)
            if w.ndim != 1 or w.shape != s.shape or len(w) < 2:
                raise ConfigError("tabulated spectrum needs matching 1-d omega and S arrays")
            if np.any(np.diff(w) <= 0):
                raise ConfigError("tabulated omega grid must be ascending")
            if np.any(s < 0):
                raise ConfigError("spectral density must be non-negative")
            object.__setattr__(self, "omega", w)
            object.__setattr__(self, "values", s)

    @classmethod
    def white(cls, s0: float) -> "SpectralDensity":
        return cls(form="white", s0=s0)

    @classmethod
    def lorentzian(cls, variance: float, tau_c: float) -> "SpectralDensity":
        return cls(form="lorentzian", variance=variance, tau_c=tau_c)

    @classmethod
    def static(cls, variance: float) -> "SpectralDensity":
        return cls(form="static", variance=variance)

    @classmethod
    def tabulated(cls, omega, values) -> "SpectralDensity":
        return cls(form="tabulated", omega=np.asarray(omega, dtype=float),
                   values=np.asarray(values, dtype=float))

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.form == "white":
            return np.broadcast_to(self.s0, omega.shape).copy() if omega.ndim else float(self.s0)
        if self.form == "lorentzian":
            return 2.0 * self.variance * self.tau_c / (1.0 + (omega * self.tau_c) ** 2)
        if self.form == "static":
            return np.where(omega == 0.0, np.inf, 0.0)
        return np.interp(omega, self.omega, self.values, left=0.0, right=0.0)


def spectrum_from_correlation(kind: str = "exponential", variance: float = 0.0,
                              tau_c: float = 0.0, s0: float = 0.0,
                              tau=None, values=None, omega_grid=None) -> SpectralDensity:
    """S(w) = Integral <nu(tau) nu(0)> e^{i w tau} d tau.

    Parametric shortcuts: ``exponential`` correlation
    <nu^2> e^{-|tau|/tau_c} gives the Lorentzian
    2 <nu^2> tau_c / (1 + w^2 tau_c^2); ``delta`` (weight s0) gives a
    white spectrum; ``static`` (constant <nu^2>) an exact delta peak.
    ``tabulated`` transforms a sampled even correlation function onto
    ``omega_grid`` by quadrature on the given tau grid.
    """
    if kind == "exponential":
        return SpectralDensity.lorentzian(variance=variance, tau_c=tau_c)
    if kind == "delta":
        return SpectralDensity.white(s0=s0)
    if kind == "static":
        return SpectralDensity.static(variance=variance)
    if kind == "tabulated":
        tau = np.asarray(tau, dtype=float)
        values = np.asarray(values, dtype=float)
        if omega_grid is None:
            raise ConfigError("tabulated correlation transform needs an omega grid")
        omega_grid = np.asarray(omega_grid, dtype=float)
        if tau[0] != 0.0:
            raise ConfigError("correlation table must start at tau = 0")
        # even correlation: S(w) = 2 Integral_0^inf C(tau) cos(w tau) d tau
        s = 2.0 * _cosine_transform(values, tau, omega_grid)
        return SpectralDensity.tabulated(omega=omega_grid, values=np.clip(s, 0.0, None))
    raise ConfigError(f"unknown correlation kind {kind!r}")


def correlation_from_spectrum(spectrum: SpectralDensity, tau):
    """<nu(tau) nu(0)> = (1/2pi) Integral S(w) e^{-i w tau} d w.

    A tabulated grid covering only w >= 0 is treated as the even
    (two-sided) spectrum it represents.
    """
    tau = np.asarray(tau, dtype=float)
    if spectrum.form == "lorentzian":
        return spectrum.variance * np.exp(-np.abs(tau) / spectrum.tau_c)
    if spectrum.form == "static":
        return np.full_like(tau, spectrum.variance)
    if spectrum.form == "white":
        return np.where(tau == 0.0, np.inf, 0.0)
    w = spectrum.omega
    s = spectrum.values
    factor = 2.0 if w[0] >= 0.0 else 1.0
    return factor / (2.0 * np.pi) * _cosine_transform(s, w, tau)


# ---------------------------------------------------------------------------
# Gaussian-noise coherence


def _static_exponent(spectrum, pulses, t):
    zero_freq = _window_transform_sq(pulses, 0.0, t)
    return 0.5 * spectrum.variance * zero_freq


def _tabulated_exponent(spectrum, pulses, t):
    """Integral of a tabulated S times the filter, per-interval Gauss rule.

    The table is piecewise linear, so the quadrature is split at the
    nodes; the per-interval order follows the filter's phase span and
    the result is verified by order doubling.
    """
    w = spectrum.omega
    s = spectrum.values
    lo, hi = w[:-1], w[1:]
    spans = (hi - lo) * t
    orders = np.minimum(64, np.maximum(8, np.ceil(3 * spans))).astype(int)

    def integrate(order_boost: int) -> float:
        total = 0.0
        for order in np.unique(orders):
            sel = orders == order
            nodes, weights = np.polynomial.legendre.leggauss(int(order) * order_boost)
            half = 0.5 * (hi[sel] - lo[sel])
            x = half[:, None] * nodes[None, :] + 0.5 * (hi[sel] + lo[sel])[:, None]
            sx = np.interp(x.ravel(), w, s).reshape(x.shape)
            fx = _window_transform_sq(pulses, x.ravel(), t).reshape(x.shape)
            total += np.sum(half * ((sx * fx) @ weights))
        return total

    coarse = integrate(1)
    fine = integrate(2)
    if abs(fine - coarse) > 1e-8 * max(abs(fine), 1e-300):
        raise NonConvergentIntegralError(
            f"tabulated coherence integral did not converge at t={t}"
            f" (estimates {coarse:.6e} / {fine:.6e})"
        )
    return fine / (2.0 * np.pi)


def _quadrature_exponent(spectrum, pulses, t):
    if spectrum.form == "tabulated":
        return _tabulated_exponent(spectrum, pulses, t)

    def integrand(w):
        return spectrum(w) * _window_transform_sq(pulses, w, t)

    try:
        value, abserr = scipy.integrate.quad(
            integrand, 0.0, np.inf, epsabs=1e-300, epsrel=1e-8, limit=500,
        )
    except Exception as exc:  # pragma: no cover - quad signalling
        raise NonConvergentIntegralError(f"coherence integral failed at t={t}: {exc}") from exc
    if value != 0 and abserr > 1e-6 * abs(value):
        raise NonConvergentIntegralError(
            f"coherence integral did not reach 1e-8 relative accuracy at t={t}"
            f" (estimate {value:.3e}, error {abserr:.3e})"
        )
    return value / (2.0 * np.pi)  # two-sided integral of an even integrand


def gaussian_coherence(spectrum: SpectralDensity, pulses: PulseSequence, tgrid):
    """L(t) = exp[-(1/4pi) Integral S(w) |Y(w,t)|^2 dw] on a time grid.

    The static form is evaluated analytically (exact delta peak); white
    noise uses the exact result chi = S0 t / 2 (Parseval); everything
    else goes through adaptive quadrature at 1e-8 relative tolerance.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    out = np.empty(len(tgrid))
    for k, t in enumerate(tgrid):
        if t == 0.0:
            out[k] = 1.0
            continue
        if spectrum.form == "static":
            chi = _static_exponent(spectrum, pulses, t)
        elif spectrum.form == "white":
            chi = 0.5 * spectrum.s0 * t
        else:
            chi = _quadrature_exponent(spectrum, pulses, t)
        out[k] = np.exp(-chi)
    return out


# ---------------------------------------------------------------------------
# relaxation and composition


def relaxation_from_spectrum(spectrum, omega_qubit: float):
    """Golden-rule relaxation: Gamma10 = S(omega_qubit)/4, T1 = 1/Gamma10."""
    s = float(spectrum(omega_qubit) if callable(spectrum) else spectrum)
    if s < 0:
        raise ConfigError("spectral density must be non-negative")
    gamma10 = s / 4.0
    t1 = math.inf if gamma10 == 0.0 else 1.0 / gamma10
    return gamma10, t1


def compose_t2(t1: float, t_phi: float) -> float:
    """1/T2 = 1/(2 T1) + 1/T_phi, with infinities as absent channels."""
    if t1 <= 0 or t_phi <= 0:
        raise ConfigError("T1 and T_phi must be positive")
    rate = 0.0
    if math.isfinite(t1):
        rate += 1.0 / (2.0 * t1)
    if math.isfinite(t_phi):
        rate += 1.0 / t_phi
    return math.inf if rate == 0.0 else 1.0 / rate


# ---------------------------------------------------------------------------
# Bloch equations


@dataclass
class BlochParams:
    """Precession and relaxation parameters of the Bloch equations."""

    gamma: float
    b_field: object  # 3-vector or callable t -> 3-vector (piecewise constant)
    t1: float = math.inf
    t2: float = math.inf
    m0: float = 0.0

    def __post_init__(self):
        if self.t1 <= 0 or self.t2 <= 0:
            raise ConfigError("T1 and T2 must be positive (may be inf)")

    def field_at(self, t: float) -> np.ndarray:
        if callable(self.b_field):
            return np.asarray(self.b_field(t), dtype=float)
        return np.asarray(self.b_field, dtype=float)


def _bloch_rhs(params: BlochParams, t: float, m: np.ndarray) -> np.ndarray:
    b = params.field_at(t)
    prec = params.gamma * np.cross(m, b)
    relax = np.array([
        m[0] / params.t2 if math.isfinite(params.t2) else 0.0,
        m[1] / params.t2 if math.isfinite(params.t2) else 0.0,
        (m[2] - params.m0) / params.t1 if math.isfinite(params.t1) else 0.0,
    ])
    return prec - relax


def _rk4_span(params, m, t0, t1_, steps):
    h = (t1_ - t0) / steps
    t = t0
    for _ in range(steps):
        k1 = _bloch_rhs(params, t, m)
        k2 = _bloch_rhs(params, t + 0.5 * h, m + 0.5 * h * k1)
        k3 = _bloch_rhs(params, t + 0.5 * h, m + 0.5 * h * k2)
        k4 = _bloch_rhs(params, t + h, m + h * k3)
        m = m + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return m


def bloch_solve(params: BlochParams, m_initial, tgrid, tol: float = 1e-8,
                max_refinements: int = 12):
    """Magnetization trajectory by classic RK4 with step-doubling control.

    The step is halved until a further halving changes every output
    point by less than ``tol``.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    m_initial = np.asarray(m_initial, dtype=float)
    if not np.all(np.isfinite(m_initial)):
        raise ConfigError("initial magnetization must be finite")

    def solve(steps_per_interval: int) -> np.ndarray:
        out = np.empty((len(tgrid), 3))
        m = m_initial.copy()
        out[0] = m
        for i in range(1, len(tgrid)):
            m = _rk4_span(params, m, tgrid[i - 1], tgrid[i], steps_per_interval)
            out[i] = m
        return out

    steps = 4
    prev = solve(steps)
    for _ in range(max_refinements):
        steps *= 2
        cur = solve(steps)
        if np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    return prev


# ---------------------------------------------------------------------------
# tabulated spectrum file format


def read_spectrum_file(path) -> SpectralDensity:
    """Two-column (omega, S) text with a mandatory unit header line.

    The first non-empty line must be the header
    ``# units: rad/ms (rad/ms)^2*ms``.
    """
    omega, values = [], []
    header_seen = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if not header_seen:
                    if "units:" not in line:
                        raise ConfigError(f"{path}:{lineno}: first line must declare units")
                    if "rad/ms" not in line:
                        raise ConfigError(f"{path}:{lineno}: unsupported units in {line!r}")
                    header_seen = True
                continue
            if not header_seen:
                raise ConfigError(f"{path}: missing unit header line")
            parts = line.split()
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected two columns")
            omega.append(float(parts[0]))
            values.append(float(parts[1]))
    return SpectralDensity.tabulated(omega=np.array(omega), values=np.array(values))


def write_spectrum_file(path, spectrum: SpectralDensity) -> None:
    if spectrum.form != "tabulated":
        raise ConfigError("only tabulated spectra can be written to file")
    with open(path, "w") as fh:
        fh.write("# units: rad/ms (rad/ms)^2*ms\n")
        for w, s in zip(spectrum.omega, spectrum.values):
            fh.write(f"{w:.17g} {s:.17g}\n")

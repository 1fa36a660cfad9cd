"""Command-line interface: configuration, orchestration, and result files.

Subcommands: ``generate``, ``simulate``, ``converge``, ``noise``,
``fit``, ``oracle-compare``.  Runs are configured by a TOML file; every
config key can be overridden one-to-one on the command line with
``--set section.key=value``.  Exit codes: 0 success, 2 configuration
error, 3 numerical non-convergence, 4 dimension overflow.

Output files embed the fully resolved configuration, package version,
seeds, and the guarded-cluster diagnostics.  Identical (config, seed)
produce byte-identical outputs regardless of the worker count.
"""

from __future__ import annotations

import argparse
import difflib
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .bath import (
    SpinSystem,
    build_connectivity,
    diamond_supercell,
    enumerate_clusters,
    generate_bath,
    parse_bath_file,
    parse_cell_file,
    sic_supercell,
    write_bath_file,
)
from .cce import (
    EngineConfig,
    fit_stretched,
    simulate_coherence,
)
from .constants import MHZ_TO_RADMS
from .errors import (
    ConfigError,
    DimensionOverflowError,
    InsufficientDecayError,
    NonConvergentIntegralError,
    SpincohError,
)
from .noise import (
    SpectralDensity,
    compose_t2,
    filter_freq,
    gaussian_coherence,
    read_spectrum_file,
    relaxation_from_spectrum,
)
from .oracle import OracleLimits, exact_coherence
from .pulses import PulseSequence
from .spinops import CentralSpin, load_isotopes

EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_OVERFLOW = 4

# schema: section -> key -> (type, default); None default means optional
_SCHEMA = {
    "central": {
        "spin": (float, 1.0),
        "g": (list, None),  # scalar g also accepted
        "gamma": (float, None),
        "d_mhz": (float, 0.0),
        "e_mhz": (float, 0.0),
        "levels": (list, [0.0, -1.0]),
        "eigen_levels": (bool, False),
        "position": (list, [0.0, 0.0, 0.0]),
    },
    "bath": {
        "source": (str, "generate"),  # generate | file
        "file": (str, None),
        "lattice": (str, None),  # diamond | sic | cell file path
        "radius": (float, 20.0),
        "seed": (int, 1),
        "realization": (int, 0),
        "isotopes": (str, None),  # custom isotope table path
        "concentration": (dict, None),  # element -> {isotope: fraction}
    },
    "engine": {
        "method": (str, "cce"),
        "order": (int, 2),
        "r_dipole": (float, 8.0),
        "samples": (int, 100),
        "epsilon": (float, 1e-10),
        "mean_field": (bool, False),
        "hybrid_shell": (int, 0),
        "workers": (int, 1),
        "seed": (int, 1),
    },
    "pulses": {
        "sequence": (str, "hahn"),  # ramsey | hahn | cpmg | custom
        "n": (int, 2),
        "fractions": (list, None),
    },
    "grid": {
        "t_max_ms": (float, 2.0),
        "points": (int, 201),
    },
    "field": {
        "b_gauss": (list, [0.0, 0.0, 500.0]),
    },
    "dissipation": {
        "rate_mhz": (float, 0.0),
        "jump": (str, "z"),
    },
    "output": {
        "directory": (str, "."),
        "prefix": (str, "run"),
    },
    "noise": {
        "model": (str, "static"),  # static | white | lorentzian | tabulated
        "variance_mhz2": (float, 1.0),
        "tau_c_ms": (float, 1.0),
        "s0_mhz2_ms": (float, 1.0),
        "table": (str, None),
        "sequences": (list, ["ramsey", "hahn"]),
        "omega_qubit_mhz": (float, None),
        "t_phi_ms": (float, None),
    },
    "converge": {
        "orders": (list, None),
        "r_dipoles": (list, None),
        "radii": (list, None),
        "realizations": (int, 0),
        "tolerance": (float, 0.01),
    },
    "oracle": {
        "max_unitary_dim": (int, 4096),
        "max_lindblad_dim": (int, 64),
    },
}


@dataclass
class RunConfig:
    """Validated configuration with all defaults filled."""

    sections: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.sections[section][key]

    def resolved(self) -> dict:
        return json.loads(json.dumps(self.sections, default=_jsonable))


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer, np.floating)):
        return value.item()
    raise TypeError(f"cannot serialize {type(value)}")


def _suggest(name: str, candidates) -> str:
    close = difflib.get_close_matches(name, list(candidates), n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


def load_config(path=None, overrides=None, text=None) -> RunConfig:
    """Parse and strictly validate a TOML config.

    Unknown sections or keys are rejected with the nearest valid name;
    defaults are filled in and echoed into every output file.
    """
    if text is None:
        if path is None:
            raise ConfigError("no configuration given")
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    else:
        data = tomllib.loads(text)

    for section, content in data.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]{_suggest(section, _SCHEMA)}")
        if not isinstance(content, dict):
            raise ConfigError(f"section [{section}] must be a table")
        for key in content:
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]{_suggest(key, _SCHEMA[section])}"
                )

    sections: dict = {}
    for section, keys in _SCHEMA.items():
        sections[section] = {}
        for key, (kind, default) in keys.items():
            value = data.get(section, {}).get(key, default)
            if value is not None and kind in (int, float, bool) and not isinstance(value, (int, float, bool)):
                raise ConfigError(f"[{section}] {key} must be {kind.__name__}")
            if value is not None and kind is int:
                value = int(value)
            if value is not None and kind is float:
                value = float(value)
            sections[section][key] = value

    config = RunConfig(sections=sections)
    for item in overrides or []:
        _apply_override(config, item)
    return config


def _apply_override(config: RunConfig, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    target, value = item.split("=", 1)
    if "." not in target:
        raise ConfigError(f"override target {target!r} must be section.key")
    section, key = target.split(".", 1)
    if section not in _SCHEMA:
        raise ConfigError(f"unknown config section [{section}]{_suggest(section, _SCHEMA)}")
    if key not in _SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]{_suggest(key, _SCHEMA[section])}")
    kind, _ = _SCHEMA[section][key]
    try:
        if kind is bool:
            parsed = value.lower() in ("1", "true", "yes", "on")
        elif kind in (list, dict):
            parsed = json.loads(value)
        else:
            parsed = kind(value)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse override {item!r}: {exc}") from exc
    config.sections[section][key] = parsed


# ---------------------------------------------------------------------------
# config -> objects


def _central_from_config(config: RunConfig) -> CentralSpin:
    c = config.sections["central"]
    g = c["g"]
    if g is None:
        g_value: object = None
    elif isinstance(g, list):
        arr = np.asarray(g, dtype=float)
        g_value = arr.reshape(3, 3) if arr.size == 9 else float(arr.reshape(()))
    else:
        g_value = float(g)
    kwargs = dict(
        s=float(c["spin"]),
        d=c["d_mhz"] * MHZ_TO_RADMS,
        e=c["e_mhz"] * MHZ_TO_RADMS,
        position=tuple(c["position"]),
        levels=tuple(float(x) for x in c["levels"]),
        eigen_levels=bool(c["eigen_levels"]),
        gamma=c["gamma"],
    )
    if g_value is not None:
        kwargs["g"] = g_value
    return CentralSpin(**kwargs)


def _bath_from_config(config: RunConfig):
    b = config.sections["bath"]
    isotopes = load_isotopes(b["isotopes"]) if b["isotopes"] else load_isotopes()
    if b["source"] == "file":
        if not b["file"]:
            raise ConfigError("[bath] source = 'file' needs a bath file path")
        return parse_bath_file(b["file"], isotopes)
    if b["source"] != "generate":
        raise ConfigError(f"unknown bath source {b['source']!r}")
    lattice = b["lattice"] or "diamond"
    if lattice == "diamond":
        cell = diamond_supercell()
    elif lattice == "sic":
        cell = sic_supercell()
    else:
        cell = parse_cell_file(lattice)
    if b["concentration"]:
        overrides = {el: dict(mix) for el, mix in b["concentration"].items()}
        cell = cell.with_abundances(overrides)
    seed = [int(b["seed"]), int(b["realization"])]
    return generate_bath(cell, radius=float(b["radius"]), seed=seed, isotopes=isotopes)


def _engine_from_config(config: RunConfig) -> EngineConfig:
    e = config.sections["engine"]
    return EngineConfig(
        method=e["method"], order=e["order"], r_dipole=e["r_dipole"],
        bath_radius=config.get("bath", "radius"), samples=e["samples"],
        epsilon=e["epsilon"], mean_field=e["mean_field"],
        hybrid_shell=e["hybrid_shell"], workers=e["workers"], seed=e["seed"],
    )


def _pulses_from_config(config: RunConfig) -> PulseSequence:
    p = config.sections["pulses"]
    name = p["sequence"]
    if name == "ramsey":
        return PulseSequence.ramsey()
    if name == "hahn":
        return PulseSequence.hahn()
    if name == "cpmg":
        return PulseSequence.cpmg(int(p["n"]))
    if name == "custom":
        if not p["fractions"]:
            raise ConfigError("custom sequence needs [pulses] fractions")
        return PulseSequence.custom([float(x) for x in p["fractions"]])
    raise ConfigError(f"unknown pulse sequence {name!r}")


def _grid_from_config(config: RunConfig) -> np.ndarray:
    g = config.sections["grid"]
    if g["points"] < 2 or g["t_max_ms"] <= 0:
        raise ConfigError("[grid] needs t_max_ms > 0 and points >= 2")
    return np.linspace(0.0, float(g["t_max_ms"]), int(g["points"]))


def _system_from_config(config: RunConfig) -> SpinSystem:
    central = _central_from_config(config)
    bath = _bath_from_config(config)
    rate = config.get("dissipation", "rate_mhz")
    if rate:
        jump = config.get("dissipation", "jump")
        for spin in bath:
            spin.dissipators = ((rate * MHZ_TO_RADMS, jump),)
    return SpinSystem.create(central, bath, np.asarray(config.get("field", "b_gauss"), dtype=float))


# ---------------------------------------------------------------------------
# output files


def _atomic_write(path: str, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".spincoh-")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _echoed_config(config: RunConfig) -> dict:
    """Resolved config as echoed into outputs.

    The worker count is elided: concurrency is an execution detail and
    outputs are byte-identical across worker counts.
    """
    resolved = config.resolved()
    resolved.get("engine", {}).pop("workers", None)
    return resolved


def _provenance_lines(config: RunConfig | None, extra: dict | None = None) -> list:
    """Deterministic ``#`` comment preamble embedding the run provenance."""
    lines = [f"# spincoh {__version__}"]
    if config is not None:
        blob = json.dumps(_echoed_config(config), sort_keys=True, default=_jsonable)
        lines.append(f"# config {blob}")
    for key, value in sorted((extra or {}).items()):
        lines.append(f"# {key} {json.dumps(value, sort_keys=True, default=_jsonable)}")
    return lines


def write_curve_csv(path, tgrid, values, config: RunConfig | None = None,
                    extra: dict | None = None) -> None:
    """Curve CSV: ``t_ms,re_L,im_L,abs_L`` at 17 significant digits.

    A ``#`` comment preamble embeds the resolved config and seeds.
    """
    lines = _provenance_lines(config, extra)
    lines.append("t_ms,re_L,im_L,abs_L")
    values = np.asarray(values, dtype=complex)
    for t, v in zip(tgrid, values):
        lines.append(f"{t:.17g},{v.real:.17g},{v.imag:.17g},{abs(v):.17g}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_curve_csv(path):
    with open(path) as fh:
        rows = []
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line
                if header != "t_ms,re_L,im_L,abs_L":
                    raise ConfigError(f"{path}: unexpected CSV header {header!r}")
                continue
            rows.append(line.split(","))
    if header is None:
        raise ConfigError(f"{path}: no CSV header found")
    t = np.array([float(r[0]) for r in rows])
    values = np.array([float(r[1]) + 1j * float(r[2]) for r in rows])
    return t, values


def _summary(config: RunConfig, extra: dict) -> str:
    payload = {
        "engine_version": __version__,
        "config": _echoed_config(config),
    }
    payload.update(extra)
    return json.dumps(payload, sort_keys=True, indent=2, default=_jsonable) + "\n"


def _fit_block(tgrid, values):
    try:
        fit = fit_stretched(values, tgrid)
        return {"t2_ms": fit.t2, "n": fit.n, "fit_residual": fit.residual}
    except InsufficientDecayError as exc:
        return {"t2_ms": None, "n": None, "fit_note": str(exc)}


# ---------------------------------------------------------------------------
# subcommands


def run_generate(config: RunConfig) -> dict:
    """Generate a bath and write it in the bath file format."""
    bath = _bath_from_config(config)
    out = config.get("output", "directory")
    prefix = config.get("output", "prefix")
    central = _central_from_config(config)
    from .bath import compute_couplings

    compute_couplings(central, bath)
    path = os.path.join(out, f"{prefix}_bath.txt")
    os.makedirs(out, exist_ok=True)
    write_bath_file(path, bath, preamble=_provenance_lines(
        config, {"seeds": [config.get("bath", "seed"), config.get("bath", "realization")]}))
    summary_path = os.path.join(out, f"{prefix}_generate.json")
    _atomic_write(summary_path, _summary(config, {"n_spins": len(bath), "bath_file": path}))
    return {"bath_file": path, "summary": summary_path, "n_spins": len(bath)}


def run_simulate(config: RunConfig) -> dict:
    """Run the configured expansion and write curve CSV + summary JSON."""
    system = _system_from_config(config)
    engine = _engine_from_config(config)
    pulses = _pulses_from_config(config)
    tgrid = _grid_from_config(config)
    graph = build_connectivity(system.bath, engine.r_dipole)
    clusters = enumerate_clusters(graph, engine.order)
    curve = simulate_coherence(system, clusters, engine, pulses, tgrid)

    out = config.get("output", "directory")
    prefix = config.get("output", "prefix")
    curve_path = os.path.join(out, f"{prefix}_curve.csv")
    seeds = {"bath": [config.get("bath", "seed"), config.get("bath", "realization")],
             "engine": engine.seed}
    write_curve_csv(curve_path, tgrid, curve.values, config,
                    extra={"seeds": seeds,
                           "guarded_clusters": curve.metadata.get("guarded_clusters", 0)})
    summary = {
        "n_spins": len(system.bath),
        "seeds": seeds,
        "diagnostics": curve.metadata,
        "curve_file": curve_path,
    }
    summary.update(_fit_block(tgrid, curve.values))
    summary_path = os.path.join(out, f"{prefix}_summary.json")
    _atomic_write(summary_path, _summary(config, summary))
    if not curve.metadata.get("converged", True):
        raise NonConvergentIntegralError(
            f"{curve.metadata['guarded_fraction']:.2%} of clusters hit the division guard"
        )
    return {"curve": curve_path, "summary": summary_path}


def _curve_for(config: RunConfig, system, engine, pulses, tgrid):
    graph = build_connectivity(system.bath, engine.r_dipole)
    clusters = enumerate_clusters(graph, engine.order)
    return simulate_coherence(system, clusters, engine, pulses, tgrid)


def run_converge(config: RunConfig) -> dict:
    """Sweep order / r_dipole / bath radius / realizations to convergence.

    An axis is converged when max_t |delta L| between successive
    settings drops below [converge] tolerance; the realization axis
    reports the ensemble median T2 and interquartile range instead.
    """
    conv = config.sections["converge"]
    tol = float(conv["tolerance"])
    axes = {k: conv[k] for k in ("orders", "r_dipoles", "radii") if conv[k]}
    if not axes and not conv["realizations"]:
        raise ConfigError("[converge] needs at least one sweep axis")
    for name, values in axes.items():
        arr = [float(v) for v in values]
        if any(b <= a for a, b in zip(arr, arr[1:])):
            raise ConfigError(f"[converge] {name} must be strictly increasing")

    pulses = _pulses_from_config(config)
    tgrid = _grid_from_config(config)
    report: dict = {"axes": {}, "tolerance": tol}

    for name, values in axes.items():
        rows = []
        previous = None
        for value in values:
            cfg = RunConfig(sections=json.loads(json.dumps(config.sections, default=_jsonable)))
            if name == "orders":
                cfg.sections["engine"]["order"] = int(value)
            elif name == "r_dipoles":
                cfg.sections["engine"]["r_dipole"] = float(value)
            else:
                cfg.sections["bath"]["radius"] = float(value)
            system = _system_from_config(cfg)
            engine = _engine_from_config(cfg)
            curve = _curve_for(cfg, system, engine, pulses, tgrid)
            delta = None if previous is None else float(np.max(np.abs(curve.values - previous)))
            row = {"value": value, "max_delta": delta}
            row.update(_fit_block(tgrid, curve.values))
            rows.append(row)
            previous = curve.values
        deltas = [r["max_delta"] for r in rows if r["max_delta"] is not None]
        report["axes"][name] = {
            "table": rows,
            "converged": bool(deltas and deltas[-1] < tol),
        }

    n_real = int(conv["realizations"])
    if n_real:
        t2s = []
        rows = []
        for k in range(n_real):
            cfg = RunConfig(sections=json.loads(json.dumps(config.sections, default=_jsonable)))
            cfg.sections["bath"]["realization"] = k
            system = _system_from_config(cfg)
            engine = _engine_from_config(cfg)
            curve = _curve_for(cfg, system, engine, pulses, tgrid)
            row = {"realization": k}
            row.update(_fit_block(tgrid, curve.values))
            rows.append(row)
            if row.get("t2_ms") is not None:
                t2s.append(row["t2_ms"])
        stats = {}
        if t2s:
            q1, median, q3 = np.percentile(t2s, [25, 50, 75])
            stats = {"median_t2_ms": float(median), "iqr_t2_ms": [float(q1), float(q3)],
                     "n_fitted": len(t2s)}
        report["realizations"] = {"table": rows, **stats}

    out = config.get("output", "directory")
    prefix = config.get("output", "prefix")
    path = os.path.join(out, f"{prefix}_convergence.json")
    _atomic_write(path, _summary(config, {"report": report}))
    return {"report": path}


def _spectrum_from_config(config: RunConfig) -> SpectralDensity:
    n = config.sections["noise"]
    model = n["model"]
    mhz2 = MHZ_TO_RADMS**2
    if model == "static":
        return SpectralDensity.static(variance=n["variance_mhz2"] * mhz2)
    if model == "white":
        return SpectralDensity.white(s0=n["s0_mhz2_ms"] * mhz2)
    if model == "lorentzian":
        return SpectralDensity.lorentzian(variance=n["variance_mhz2"] * mhz2,
                                          tau_c=n["tau_c_ms"])
    if model == "tabulated":
        if not n["table"]:
            raise ConfigError("[noise] model = 'tabulated' needs a table path")
        return read_spectrum_file(n["table"])
    raise ConfigError(f"unknown noise model {model!r}")


def run_noise(config: RunConfig) -> dict:
    """Filter-function coherence, relaxation summary, filter tables."""
    spectrum = _spectrum_from_config(config)
    tgrid = _grid_from_config(config)
    n = config.sections["noise"]
    out = config.get("output", "directory")
    prefix = config.get("output", "prefix")
    os.makedirs(out, exist_ok=True)

    sequences = {}
    for name in n["sequences"]:
        if name == "ramsey":
            seq = PulseSequence.ramsey()
        elif name == "hahn":
            seq = PulseSequence.hahn()
        elif name.startswith("cpmg"):
            seq = PulseSequence.cpmg(int(name.split("-")[1]) if "-" in name else int(n["n"]))
        else:
            raise ConfigError(f"unknown sequence {name!r} in [noise] sequences")
        sequences[name] = seq

    results: dict = {}
    for name, seq in sequences.items():
        values = gaussian_coherence(spectrum, seq, tgrid)
        curve_path = os.path.join(out, f"{prefix}_{name}_curve.csv")
        write_curve_csv(curve_path, tgrid, values.astype(complex), config,
                        extra={"sequence": name})
        block = {"curve_file": curve_path}
        block.update(_fit_block(tgrid, values))
        # filter table over a decade-spanning grid for plotting
        t_ref = tgrid[-1] / 2 if tgrid[-1] > 0 else 1.0
        omegas = np.linspace(2 * np.pi / (50 * t_ref), 40 * np.pi / t_ref, 400)
        table = filter_freq(seq, omegas, t_ref)
        flines = _provenance_lines(config, {"sequence": name, "t_ref_ms": t_ref})
        flines += ["omega_radms,F"] + [f"{w:.17g},{f:.17g}" for w, f in zip(omegas, table)]
        filter_path = os.path.join(out, f"{prefix}_{name}_filter.csv")
        _atomic_write(filter_path, "\n".join(flines) + "\n")
        block["filter_file"] = filter_path
        results[name] = block

    relax: dict = {}
    if n["omega_qubit_mhz"] is not None:
        gamma10, t1 = relaxation_from_spectrum(spectrum, n["omega_qubit_mhz"] * MHZ_TO_RADMS)
        relax = {"gamma10_per_ms": gamma10, "t1_ms": t1 if math.isfinite(t1) else None}
        t_phi = n["t_phi_ms"]
        if t_phi is not None:
            t2 = compose_t2(t1, t_phi)
            relax["t2_ms"] = t2 if math.isfinite(t2) else None

    summary_path = os.path.join(out, f"{prefix}_noise.json")
    _atomic_write(summary_path, _summary(config, {"sequences": results, "relaxation": relax}))
    return {"summary": summary_path}


def run_fit(config: RunConfig, curve_file: str) -> dict:
    """Fit a stored curve CSV to the stretched exponential."""
    t, values = read_curve_csv(curve_file)
    fit = fit_stretched(values, t)
    out = config.get("output", "directory")
    prefix = config.get("output", "prefix")
    path = os.path.join(out, f"{prefix}_fit.json")
    _atomic_write(path, _summary(config, {
        "curve_file": curve_file,
        "t2_ms": fit.t2, "n": fit.n, "fit_residual": fit.residual,
    }))
    return {"summary": path, "t2_ms": fit.t2, "n": fit.n}


def run_oracle_compare(config: RunConfig) -> dict:
    """Run the engine and the exact reference, report max |delta L|."""
    system = _system_from_config(config)
    engine = _engine_from_config(config)
    pulses = _pulses_from_config(config)
    tgrid = _grid_from_config(config)
    limits = OracleLimits(
        max_unitary_dim=config.get("oracle", "max_unitary_dim"),
        max_lindblad_dim=config.get("oracle", "max_lindblad_dim"),
    )
    from .cce import levels_from_labels, mean_field_levels

    if system.central.eigen_levels:
        levels = mean_field_levels(system.central, system.b_field)
    else:
        levels = levels_from_labels(system.central, system.b_field)
    curve = _curve_for(config, system, engine, pulses, tgrid)
    reference = exact_coherence(system, levels, pulses, tgrid, limits)
    delta = float(np.max(np.abs(curve.values - reference)))
    out = config.get("output", "directory")
    prefix = config.get("output", "prefix")
    path = os.path.join(out, f"{prefix}_oracle.json")
    _atomic_write(path, _summary(config, {
        "max_delta": delta,
        "n_spins": len(system.bath),
        "diagnostics": curve.metadata,
    }))
    return {"summary": path, "max_delta": delta}


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spincoh",
        description="Central-spin decoherence simulator (cluster expansions + noise models)",
    )
    parser.add_argument("--version", action="version", version=f"spincoh {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("generate", "generate a bath and write it to the bath file format"),
        ("simulate", "run the configured cluster expansion"),
        ("converge", "sweep order / cutoff / radius / realizations"),
        ("noise", "classical filter-function models"),
        ("fit", "fit a stored curve to a stretched exponential"),
        ("oracle-compare", "compare the engine against exact propagation"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("config", help="TOML configuration file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config key (repeatable)")
        if name == "fit":
            p.add_argument("--curve", required=True, help="curve CSV to fit")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config, overrides=args.set)
        if args.command == "generate":
            result = run_generate(config)
        elif args.command == "simulate":
            result = run_simulate(config)
        elif args.command == "converge":
            result = run_converge(config)
        elif args.command == "noise":
            result = run_noise(config)
        elif args.command == "fit":
            result = run_fit(config, args.curve)
        elif args.command == "oracle-compare":
            result = run_oracle_compare(config)
        else:  # pragma: no cover
            raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InsufficientDecayError, NonConvergentIntegralError) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except DimensionOverflowError as exc:
        print(f"dimension overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except SpincohError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for key, value in result.items():
        print(f"{key}: {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

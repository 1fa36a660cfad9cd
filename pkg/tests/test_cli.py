import json

import numpy as np
import pytest

from spincoh.cli import (
    load_config,
    main,
    read_curve_csv,
    run_converge,
    run_fit,
    run_generate,
    run_noise,
    run_oracle_compare,
    run_simulate,
    write_curve_csv,
)
from spincoh.constants import MHZ_TO_RADMS
from spincoh.errors import ConfigError

BASE_CONFIG = """
[central]
spin = 1.0
d_mhz = 2870.0
levels = [0.0, -1.0]

[bath]
source = "generate"
lattice = "diamond"
radius = 12.0
seed = 3

[engine]
method = "cce"
order = 2
r_dipole = 8.0

[pulses]
sequence = "hahn"

[grid]
t_max_ms = 2.0
points = 41

[field]
b_gauss = [0.0, 0.0, 500.0]
"""


def write_config(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestLoadConfig:
    def test_defaults_filled_and_echoed(self, tmp_path):
        config = load_config(write_config(tmp_path, BASE_CONFIG))
        resolved = config.resolved()
        assert resolved["engine"]["epsilon"] == 1e-10
        assert resolved["engine"]["workers"] == 1
        assert resolved["output"]["prefix"] == "run"

    def test_misspelled_key_suggests_fix(self, tmp_path):
        bad = BASE_CONFIG.replace("r_dipole = 8.0", "r_dipol = 8.0")
        with pytest.raises(ConfigError, match="r_dipole"):
            load_config(write_config(tmp_path, bad))

    def test_misspelled_section_suggests_fix(self, tmp_path):
        bad = BASE_CONFIG.replace("[engine]", "[enginee]")
        with pytest.raises(ConfigError, match="engine"):
            load_config(write_config(tmp_path, bad))

    def test_override_applies(self, tmp_path):
        config = load_config(write_config(tmp_path, BASE_CONFIG),
                             overrides=["engine.order=3", "grid.points=11"])
        assert config.get("engine", "order") == 3
        assert config.get("grid", "points") == 11

    def test_override_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, BASE_CONFIG), overrides=["engine.ordr=3"])

    def test_unknown_isotope_lists_available(self, tmp_path):
        text = BASE_CONFIG + "\n[bath.concentration.C]\n\"17X\" = 0.01\n"
        config = load_config(write_config(tmp_path, text))
        with pytest.raises(ConfigError, match="available"):
            run_simulate(config)


class TestCurveCsv:
    def test_round_trip(self, tmp_path):
        t = np.linspace(0, 1, 7)
        values = np.exp(-t) * np.exp(1j * t)
        path = tmp_path / "curve.csv"
        write_curve_csv(path, t, values)
        t2, v2 = read_curve_csv(path)
        assert np.array_equal(t, t2)
        assert np.array_equal(values, v2)

    def test_header_schema(self, tmp_path):
        path = tmp_path / "curve.csv"
        write_curve_csv(path, [0.0], [1.0 + 0j])
        data_lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
        assert data_lines[0] == "t_ms,re_L,im_L,abs_L"

    def test_provenance_embedded(self, tmp_path):
        config = load_config(write_config(tmp_path, BASE_CONFIG))
        path = tmp_path / "curve.csv"
        write_curve_csv(path, [0.0, 0.5], [1.0 + 0j, 0.5 + 0j], config,
                        extra={"seeds": [3, 0], "guarded_clusters": 0})
        text = path.read_text()
        assert "# spincoh" in text
        assert "# config" in text and '"order": 2' in text
        assert "# seeds" in text and "# guarded_clusters" in text


class TestSimulate:
    def test_byte_identical_reruns(self, tmp_path):
        text = BASE_CONFIG + f"\n[output]\ndirectory = \"{tmp_path}/out\"\n"
        config = load_config(write_config(tmp_path, text))
        result = run_simulate(config)
        first_curve = open(result["curve"], "rb").read()
        first_summary = open(result["summary"], "rb").read()
        result2 = run_simulate(load_config(write_config(tmp_path, text, "again.toml")))
        assert open(result2["curve"], "rb").read() == first_curve
        assert open(result2["summary"], "rb").read() == first_summary

    def test_byte_identical_across_worker_counts(self, tmp_path):
        base = BASE_CONFIG + f"\n[output]\ndirectory = \"{tmp_path}/w\"\n"
        r1 = run_simulate(load_config(write_config(tmp_path, base, "w1.toml")))
        first_curve = open(r1["curve"], "rb").read()
        first_summary = open(r1["summary"], "rb").read()
        r2 = run_simulate(load_config(write_config(tmp_path, base, "w2.toml"),
                                      overrides=["engine.workers=2"]))
        assert open(r2["curve"], "rb").read() == first_curve
        assert open(r2["summary"], "rb").read() == first_summary

    def test_summary_provenance(self, tmp_path):
        text = BASE_CONFIG + f"\n[output]\ndirectory = \"{tmp_path}/out\"\n"
        result = run_simulate(load_config(write_config(tmp_path, text)))
        summary = json.load(open(result["summary"]))
        assert summary["engine_version"]
        assert summary["config"]["engine"]["order"] == 2
        assert summary["seeds"]["bath"] == [3, 0]
        assert "guarded_clusters" in summary["diagnostics"]
        assert summary["diagnostics"]["projection_correction"] == "omitted"

    def test_different_seed_changes_output(self, tmp_path):
        text = BASE_CONFIG + f"\n[output]\ndirectory = \"{tmp_path}/out\"\n"
        r1 = run_simulate(load_config(write_config(tmp_path, text)))
        first = open(r1["curve"], "rb").read()
        r2 = run_simulate(load_config(write_config(tmp_path, text, "b.toml"),
                                      overrides=["bath.seed=4",
                                                 f"output.directory={tmp_path}/out2"]))
        assert first != open(r2["curve"], "rb").read()


class TestGenerateAndFileBath:
    def test_generate_then_simulate_from_file(self, tmp_path):
        text = BASE_CONFIG + f"\n[output]\ndirectory = \"{tmp_path}/gen\"\n"
        gen = run_generate(load_config(write_config(tmp_path, text)))
        assert gen["n_spins"] > 0
        file_text = BASE_CONFIG.replace('source = "generate"', 'source = "file"')
        file_text = file_text.replace('lattice = "diamond"',
                                      f'file = "{gen["bath_file"]}"')
        file_text += f"\n[output]\ndirectory = \"{tmp_path}/filegen\"\n"
        result = run_simulate(load_config(write_config(tmp_path, file_text, "f.toml")))
        generated_text = BASE_CONFIG + f"\n[output]\ndirectory = \"{tmp_path}/direct\"\n"
        direct = run_simulate(load_config(write_config(tmp_path, generated_text, "d.toml")))
        t1, v1 = read_curve_csv(result["curve"])
        t2, v2 = read_curve_csv(direct["curve"])
        # file round trip goes through MHz I/O, identical to 1e-12
        assert np.max(np.abs(v1 - v2)) <= 1e-10


class TestConverge:
    def _five_spin_bath_file(self, tmp_path, isotopes):
        rng = np.random.default_rng(17)
        lines = []
        for _ in range(5):
            pos = rng.uniform(-6, 6, 3)
            a = np.zeros(9)
            a[6:9] = rng.normal(0, 0.05, 3)  # z-row only, MHz
            lines.append("13C " + " ".join(f"{x:.17g}" for x in pos)
                         + " " + " ".join(f"{x:.17g}" for x in a))
        path = tmp_path / "five.txt"
        path.write_text("\n".join(lines) + "\n")
        return str(path)

    def test_order_axis_converges_on_solvable_bath(self, tmp_path, isotopes):
        bath_file = self._five_spin_bath_file(tmp_path, isotopes)
        text = f"""
[central]
spin = 0.5
levels = [0.5, -0.5]

[bath]
source = "file"
file = "{bath_file}"

[engine]
method = "cce"
order = 5
r_dipole = 1000.0

[pulses]
sequence = "hahn"

[grid]
t_max_ms = 1.0
points = 21

[field]
b_gauss = [0.0, 0.0, 300.0]

[converge]
orders = [3, 4, 5]

[output]
directory = "{tmp_path}/conv"
"""
        result = run_converge(load_config(write_config(tmp_path, text, "c.toml")))
        report = json.load(open(result["report"]))["report"]
        axis = report["axes"]["orders"]
        assert axis["converged"] is True
        assert axis["table"][-1]["max_delta"] <= 1e-8
        # and the converged order equals exact propagation
        oracle_text = text.replace("[converge]\norders = [3, 4, 5]", "")
        compare = run_oracle_compare(load_config(write_config(tmp_path, oracle_text, "o.toml")))
        assert compare["max_delta"] <= 1e-8

    def test_non_monotone_axis_rejected(self, tmp_path):
        text = BASE_CONFIG + "\n[converge]\norders = [3, 2]\n"
        with pytest.raises(ConfigError):
            run_converge(load_config(write_config(tmp_path, text)))

    def test_r_dipole_sweep_saturates_beyond_max_pair_distance(self, tmp_path, isotopes):
        bath_file = self._five_spin_bath_file(tmp_path, isotopes)  # spins within 12 A
        text = f"""
[central]
spin = 0.5
levels = [0.5, -0.5]

[bath]
source = "file"
file = "{bath_file}"

[engine]
order = 2

[pulses]
sequence = "hahn"

[grid]
t_max_ms = 1.0
points = 11

[field]
b_gauss = [0.0, 0.0, 300.0]

[converge]
r_dipoles = [20.0, 40.0, 80.0]

[output]
directory = "{tmp_path}/rdip"
"""
        result = run_converge(load_config(write_config(tmp_path, text, "r.toml")))
        report = json.load(open(result["report"]))["report"]
        table = report["axes"]["r_dipoles"]["table"]
        # the graph is complete already at 20 A: further growth changes nothing
        assert table[1]["max_delta"] == 0.0
        assert table[2]["max_delta"] == 0.0
        assert report["axes"]["r_dipoles"]["converged"] is True

    def test_realization_ensemble_statistics(self, tmp_path):
        text = BASE_CONFIG + f"""
[converge]
realizations = 4

[output]
directory = "{tmp_path}/ens"
"""
        text = text.replace("radius = 12.0", "radius = 14.0")
        text = text.replace("t_max_ms = 2.0", "t_max_ms = 6.0")
        result = run_converge(load_config(write_config(tmp_path, text)))
        report = json.load(open(result["report"]))["report"]
        stats = report["realizations"]
        assert len(stats["table"]) == 4
        if "median_t2_ms" in stats:
            lo, hi = stats["iqr_t2_ms"]
            assert lo <= stats["median_t2_ms"] <= hi


class TestNoiseCommand:
    def test_static_model_outputs(self, tmp_path):
        text = f"""
[grid]
t_max_ms = 1.0
points = 21

[noise]
model = "static"
variance_mhz2 = 1e-6
sequences = ["ramsey", "hahn"]

[output]
directory = "{tmp_path}/noise"
"""
        result = run_noise(load_config(write_config(tmp_path, text)))
        summary = json.load(open(result["summary"]))
        t, ramsey = read_curve_csv(summary["sequences"]["ramsey"]["curve_file"])
        _, hahn = read_curve_csv(summary["sequences"]["hahn"]["curve_file"])
        var = 1e-6 * MHZ_TO_RADMS**2
        assert np.max(np.abs(ramsey.real - np.exp(-var * t**2 / 2))) <= 1e-10
        assert np.array_equal(hahn.real, np.ones_like(t))

    def test_white_model_fits_exponential(self, tmp_path):
        text = f"""
[grid]
t_max_ms = 4.0
points = 81

[noise]
model = "white"
s0_mhz2_ms = 2.5e-8
sequences = ["ramsey"]
omega_qubit_mhz = 1.0
t_phi_ms = 2.0

[output]
directory = "{tmp_path}/white"
"""
        result = run_noise(load_config(write_config(tmp_path, text)))
        summary = json.load(open(result["summary"]))
        block = summary["sequences"]["ramsey"]
        assert abs(block["n"] - 1.0) <= 0.01
        s0 = 2.5e-8 * MHZ_TO_RADMS**2
        assert abs(block["t2_ms"] - 2.0 / s0) <= 0.01 * (2.0 / s0)
        relax = summary["relaxation"]
        expected_gamma = s0 / 4.0
        assert np.isclose(relax["gamma10_per_ms"], expected_gamma)
        assert np.isclose(relax["t1_ms"], 1.0 / expected_gamma)
        expected_t2 = 1.0 / (0.5 / relax["t1_ms"] + 0.5)
        assert np.isclose(relax["t2_ms"], expected_t2)

    def test_tabulated_round_trip_bit_exact(self, tmp_path):
        from spincoh.noise import SpectralDensity, read_spectrum_file, write_spectrum_file

        w = np.linspace(0.0, 50.0, 41)
        s = 3.0 / (1.0 + w**2)
        first = tmp_path / "spec1.txt"
        write_spectrum_file(first, SpectralDensity.tabulated(w, s))
        loaded = read_spectrum_file(first)
        second = tmp_path / "spec2.txt"
        write_spectrum_file(second, loaded)
        assert first.read_bytes() == second.read_bytes()


class TestFitCommand:
    def test_fit_stored_curve(self, tmp_path):
        t = np.linspace(0, 6.0, 61)
        values = np.exp(-((t / 1.5) ** 2.0)).astype(complex)
        curve = tmp_path / "curve.csv"
        write_curve_csv(curve, t, values)
        text = f"[output]\ndirectory = \"{tmp_path}/fit\"\n"
        result = run_fit(load_config(write_config(tmp_path, text)), str(curve))
        assert abs(result["t2_ms"] - 1.5) <= 1e-6
        assert abs(result["n"] - 2.0) <= 1e-6


class TestMainExitCodes:
    def test_success(self, tmp_path, capsys):
        text = BASE_CONFIG + f"\n[output]\ndirectory = \"{tmp_path}/cli\"\n"
        path = write_config(tmp_path, text)
        assert main(["simulate", path]) == 0
        out = capsys.readouterr().out
        assert "curve" in out

    def test_config_error_is_2(self, tmp_path, capsys):
        bad = BASE_CONFIG.replace("order = 2", "ordr = 2")
        assert main(["simulate", write_config(tmp_path, bad)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_file_is_2(self, capsys):
        assert main(["simulate", "/nonexistent/x.toml"]) == 2

    def test_insufficient_decay_is_3(self, tmp_path, capsys):
        t = np.linspace(0, 1.0, 11)
        curve = tmp_path / "flat.csv"
        write_curve_csv(curve, t, np.ones_like(t).astype(complex))
        text = f"[output]\ndirectory = \"{tmp_path}/f3\"\n"
        assert main(["fit", write_config(tmp_path, text), "--curve", str(curve)]) == 3

    def test_dimension_overflow_is_4(self, tmp_path, capsys):
        text = BASE_CONFIG + f"""
[oracle]
max_unitary_dim = 4

[output]
directory = "{tmp_path}/ovf"
"""
        assert main(["oracle-compare", write_config(tmp_path, text)]) == 4

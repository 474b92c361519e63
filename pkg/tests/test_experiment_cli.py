import json
import math

import pytest

from rvclt import StageError
from rvclt.cli import main
from rvclt.config import (
    PRESETS_ORDER,
    ConfigurationError,
    InvalidConfig,
    config_from_dict,
    emit_preset,
    parse_toml,
    preset_config,
    validate_config,
)
from rvclt.experiment import run_experiment, variance_target, vn2_target
from rvclt.models import FiniteMA, StochVol
from rvclt.tails import Pareto2
from rvclt.variance import kg_constants

FAST_DIAG = {"petrov_replicates": 1000, "mixing_replicates": 1000, "bootstrap": 20, "marginal_draws": 100000, "ld_replicates": 10000}


def fast(name, **kw):
    return preset_config(name, n_grid=[1000], replicates=100, diagnostics=dict(FAST_DIAG), **kw)


class TestValidate:
    def test_empty_file(self):
        with pytest.raises(InvalidConfig) as exc:
            validate_config("")
        assert exc.value.violations == ["model missing"]

    def test_small_replicates(self):
        with pytest.raises(InvalidConfig) as exc:
            validate_config('preset = "IidOscillating"\nreplicates = 10\n')
        assert any("replicates ≥ 100" in v for v in exc.value.violations)

    def test_kesten_goldie_normalization(self):
        text = 'preset = "SreKestenGoldie"\n[model]\nvariant = "SREKestenGoldie"\nA = { kind = "LogNormal", mu = 0.0, s = 0.5 }\nB = { kind = "Constant", c = 1.0 }\n'
        with pytest.raises(InvalidConfig) as exc:
            validate_config(text)
        (v,) = exc.value.violations
        assert "E[A²]=1 fails" in v
        assert f"{math.exp(0.5):.6f}"[:6] in v

    def test_all_violations_reported(self):
        text = 'replicates = 5\nn_grid = [1000, 10]\nnormalization = "Other"\nbogus = 1\n[assertions]\nks_max = -1\n'
        with pytest.raises(InvalidConfig) as exc:
            validate_config(text)
        joined = "\n".join(exc.value.violations)
        for part in ("bogus: unknown field", "model missing", "n_grid: must be strictly ascending", "replicates", "normalization", "assertions.ks_max"):
            assert part in joined

    def test_syntax_error_location(self):
        with pytest.raises(ConfigurationError, match=r"line 2, column"):
            parse_toml('preset = "StochVol"\nreplicates = = 3\n')

    def test_normalization_availability(self):
        with pytest.raises(InvalidConfig, match="ClosedForm is only available"):
            preset_config("IidOscillating", normalization="ClosedForm")
        with pytest.raises(InvalidConfig, match="NoiseAnZ is undefined"):
            preset_config("SreKestenGoldie", normalization="NoiseAnZ")

    def test_presets_round_trip(self):
        for name in PRESETS_ORDER[:-1]:
            text = emit_preset(name)
            cfg = validate_config(text)
            assert cfg.preset == name
            assert validate_config(cfg.to_toml()).to_dict() == cfg.to_dict()


class TestTargets:
    def test_variance_targets(self):
        ma = FiniteMA((1.0, 1.0), Pareto2())
        assert variance_target(ma, "PaperAn") == pytest.approx(2.0)
        assert variance_target(ma, "NoiseAnZ") == pytest.approx(4.0)
        assert vn2_target(ma, "NoiseAnZ") == pytest.approx(2.0)
        sv = StochVol((1.0, 0.5), Pareto2())
        assert vn2_target(sv, "NoiseAnZ") == pytest.approx(math.exp(2 * 1.25))
        assert vn2_target(sv, "PaperAn") == 1.0


class TestRun:
    def test_ma_summary_holds_both_variances(self, tmp_path):
        m = run_experiment(fast("MDependentMA"), tmp_path, threads=1)
        summary = json.loads((tmp_path / "summary.json").read_text())
        res = summary["per_n"]["1000"]["resolved"]
        assert res["sigma2"] == 4.0
        assert res["sigma2_by_convention"] == {"PaperAn": 2.0, "NoiseAnZ": 4.0}
        assert m.resolved["1000"]["sigma2"] == 4.0
        names = {a["name"] for a in m.assertions}
        assert {"normalized_ks", "studentized_ks", "cond_c_z"} <= names
        assert (tmp_path / "FAILED").exists() == (not m.passed)

    def test_kesten_goldie_summary(self, tmp_path):
        cfg = preset_config("SreKestenGoldie", n_grid=[1000], replicates=100, diagnostics=dict(FAST_DIAG))
        run_experiment(cfg, tmp_path, threads=1)
        res = json.loads((tmp_path / "summary.json").read_text())["per_n"]["1000"]["resolved"]
        c = kg_constants(cfg.build_model().A, cfg.build_model().B)
        assert res["sigma2"] == pytest.approx(32.042, abs=1e-3)
        assert res["a_n"] == pytest.approx(math.sqrt(c.c_infinity * 1000 * math.log(1000)), rel=1e-15)
        assert res["d_n"] == pytest.approx(1000 * 8.510413955001844, rel=1e-14)

    def test_determinism_and_layout(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_experiment(fast("IidOscillating"), a, threads=1)
        run_experiment(fast("IidOscillating"), b, threads=3)
        files = sorted(p.name for p in a.iterdir())
        assert files == sorted(p.name for p in b.iterdir())
        for name in ("summary.json", "manifest.json", "normalizer.csv", "petrov.csv", "mixing.csv", "gof.csv", "timing.log"):
            assert name in files
        for name in files:
            if name != "timing.log":
                assert (a / name).read_bytes() == (b / name).read_bytes(), name
        for name in files:
            if name.endswith(".csv"):
                assert (a / name).read_text().startswith("# rvclt-schema v1\n")
        manifest = json.loads((a / "manifest.json").read_text())
        assert "outputs" not in manifest["config"]
        assert manifest["streams"]["petrov"]["1000"] == f"20261016/{_crc('petrov')}/1000"

    def test_stage_error_keeps_partial_outputs(self, tmp_path):
        cfg = preset_config("SreGrey", n_grid=[1000], replicates=100, diagnostics={**FAST_DIAG, "ld_replicates": 100})
        m = run_experiment(cfg, tmp_path, threads=1)
        assert m.failed_stage == "ld_scan"
        assert m.exit_code == 1 and not m.passed
        assert "stage 'ld_scan' failed" in m.error
        assert (tmp_path / "FAILED").read_text().startswith("stage ld_scan:")
        assert (tmp_path / "petrov.csv").exists()
        assert json.loads((tmp_path / "summary.json").read_text())["error"]["stage"] == "ld_scan"

    def test_stage_error_type(self):
        e = StageError("petrov", ValueError("boom"))
        assert str(e) == "stage 'petrov' failed: boom" and e.stage == "petrov"


def _crc(label):
    import zlib

    return zlib.crc32(label.encode())


class TestCli:
    def test_preset_list_and_emit(self, tmp_path, capsys):
        assert main(["preset", "list"]) == 0
        out = capsys.readouterr().out.split()
        assert out == list(PRESETS_ORDER[:-1])
        assert main(["preset", "emit", "StochVol", "-o", str(tmp_path / "sv.toml")]) == 0
        assert validate_config((tmp_path / "sv.toml").read_text()).preset == "StochVol"
        assert main(["validate", str(tmp_path / "sv.toml"), "--replicates", "10"]) == 2
        assert "replicates ≥ 100" in capsys.readouterr().err

    def test_run_exit_codes(self, tmp_path, capsys):
        cfg = fast("IidOscillating")
        path = tmp_path / "c.toml"
        path.write_text(cfg.to_toml())
        code = main(["run", str(path), "--out", str(tmp_path / "out"), "--threads", "1", "--seed", "7"])
        out = capsys.readouterr().out
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["config"]["master_seed"] == 7
        assert code in (0, 1)
        assert (code == 1) == (tmp_path / "out" / "FAILED").exists()
        assert "normalized_ks" in out

    def test_run_stage_error_exit_code(self, tmp_path):
        cfg = preset_config("SreGrey", n_grid=[1000], replicates=100, diagnostics={**FAST_DIAG, "ld_replicates": 100})
        path = tmp_path / "g.toml"
        path.write_text(cfg.to_toml())
        assert main(["run", str(path), "--out", str(tmp_path / "o"), "--threads", "1"]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.toml")]) == 2

"""Config parsing, artifact writing, verdict lines and exit codes.

Heavy commands run once per session with a deliberately small configuration;
the parsing/validation tests are pure and fast.
"""

import os

import numpy as np
import pytest

from perfhom import cli
from perfhom.grid import read_field

LIGHT_CFG = """\
[geometry]
pattern_radii = 0.25 0.25
defect_cell = 0 0
defect_radii = 0.32 0.32
window = 10

[corrector]
cell_n = 64
r_tr = 1

[macro]
eps_list = 0.25 0.125 0.0625
cells_per_h = 64

[poincare]
eps_list = 0.25 0.125
cells_per_eps = 16

[output]
seed = 1
"""


class TestConfigParsing:
    def test_defaults_validate(self):
        cli.ExperimentConfig().validate()

    def test_round_trip(self):
        cfg = cli.ExperimentConfig.from_text(LIGHT_CFG)
        again = cli.ExperimentConfig.from_text(cfg.to_text())
        assert again == cfg

    def test_values_land(self):
        cfg = cli.ExperimentConfig.from_text(LIGHT_CFG)
        assert cfg.cell_n == 64
        assert cfg.r_tr == 1
        assert cfg.eps_list == (0.25, 0.125, 0.0625)
        assert cfg.seed == 1
        assert cfg.defect_cell == (0, 0)

    def test_none_sentinels(self):
        cfg = cli.ExperimentConfig.from_text(
            "[geometry]\ndefect_cell = none\ndefect_radii = none\n")
        assert cfg.defect_cell is None
        assert cfg.defect_shape() is None

    def test_unknown_section_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.ExperimentConfig.from_text("[solver]\ntol = 1e-10\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.ExperimentConfig.from_text("[geometry]\npattern_color = red\n")

    def test_bad_values_rejected(self):
        bad = [
            "[corrector]\ncell_n = 32\n",
            "[macro]\neps_list = 0.3\n",
            "[macro]\ncorrector_choice = magic\n",
            "[macro]\ncells_per_h = 8\n",
            "[geometry]\ndecay_ratio = 1.5\n",
            "[geometry]\npattern_center = 0.5\n",
            "[output]\nseed = -3\n",
        ]
        for text in bad:
            with pytest.raises(cli.ConfigError):
                cli.ExperimentConfig.from_text(text)

    def test_derived_objects(self):
        cfg = cli.ExperimentConfig.from_text(LIGHT_CFG)
        field = cfg.perforation()
        assert field.is_perturbed((0, 0))
        assert cfg.source().kind == "bump"
        tpl = cfg.template()
        assert tpl.cell_n == 64 and tpl.r_tr == 1


class TestVerdicts:
    def test_format_and_aggregate(self):
        v = cli.Verdicts()
        v.add(True, "alpha", "0.1", "<1")
        v.add(False, "beta", "3", "<=2")
        assert v.lines[0] == "PASS alpha 0.1 <1"
        assert v.lines[1] == "FAIL beta 3 <=2"
        assert not v.ok


class TestAtomicWrite:
    def test_writes_and_replaces(self, tmp_path):
        p = tmp_path / "x.txt"
        cli.atomic_write(p, "one\n")
        cli.atomic_write(p, "two\n")
        assert p.read_text() == "two\n"
        assert not [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")]


@pytest.fixture(scope="session")
def cli_run(tmp_path_factory):
    """One full pipeline run on the light config; artifacts shared below."""
    out = tmp_path_factory.mktemp("cli_out")
    cfg_path = out / "exp.cfg"
    cfg_path.write_text(LIGHT_CFG)
    code = cli.run(["all", "--config", str(cfg_path), "--out", str(out)])
    return code, out


class TestPipeline:
    def test_exit_zero_and_all_pass(self, cli_run):
        code, out = cli_run
        assert code == 0
        summary = (out / "summary.txt").read_text().strip().split("\n")
        assert summary and all(ln.startswith("PASS") for ln in summary)
        names = {ln.split()[1] for ln in summary}
        assert {"hole_sandwich_inclusion", "energy_ordering", "weak_residual",
                "rate_l2", "rate_h1", "rate_linf", "box_bound",
                "c_eps_ratio"} <= names

    def test_artifacts_exist_and_parse(self, cli_run):
        _, out = cli_run
        for name in ("geometry_report.txt", "corrector_report.txt",
                     "study.csv", "poincare.csv", "w_per.txt",
                     "w_window.txt", "w_tilde.txt"):
            assert (out / name).exists(), name
        g, vals = read_field(out / "w_per.txt")
        assert g.nx == 64 and len(vals) == 64 * 64
        lines = (out / "study.csv").read_text().strip().split("\n")
        assert lines[0].startswith("epsilon,")
        assert any(ln.startswith("# slope") for ln in lines)

    def test_study_csv_matches_summary_rates(self, cli_run):
        _, out = cli_run
        summary = (out / "summary.txt").read_text()
        slopes = {}
        for ln in (out / "study.csv").read_text().strip().split("\n"):
            if ln.startswith("# slope"):
                parts = ln.split()
                slopes[parts[2]] = float(parts[3])
        for name in ("l2", "h1", "linf"):
            tag = f"rate_{name} {slopes[name]:.4g}"
            assert tag in summary

    def test_determinism_under_fixed_seed(self, cli_run, tmp_path):
        # Re-running geometry-check with the same seed reproduces the report
        # byte for byte.
        _, out = cli_run
        cfg_path = out / "exp.cfg"
        code = cli.run(["geometry-check", "--config", str(cfg_path),
                        "--out", str(tmp_path)])
        assert code == 0
        assert ((tmp_path / "geometry_report.txt").read_bytes()
                == (out / "geometry_report.txt").read_bytes())


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[solver]\ntol = 1\n")
        assert cli.run(["study", "--config", str(p)]) == 2

    def test_unreadable_config_is_2(self, tmp_path):
        assert cli.run(["study", "--config", str(tmp_path / "missing.cfg")]) == 2

    def test_runtime_guard_is_2(self, tmp_path):
        # eps ladder too coarse to fit after the resolution guard.
        p = tmp_path / "guard.cfg"
        p.write_text("[corrector]\ncell_n = 64\nr_tr = 1\n"
                     "[macro]\neps_list = 0.25 0.125 0.0625\n"
                     "cells_per_h = 16\n")
        assert cli.run(["study", "--config", str(p),
                        "--out", str(tmp_path)]) == 2

    def test_self_test(self, capsys):
        assert cli.run(["study", "--self-test"]) == 0
        assert "PASS self_test" in capsys.readouterr().out

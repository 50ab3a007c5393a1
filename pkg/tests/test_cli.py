import csv
import json
import subprocess
import sys

import pytest

from persist import analysis, cli
from persist.cli import ConfigError, ExperimentConfig, main, parse_grid
from persist.distributions import DistributionSpec


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_grid():
    assert parse_grid("2^0..2^3") == [1, 2, 4, 8]
    assert parse_grid("3..5") == [3, 4, 5]
    assert parse_grid("2^4, 7, 1,7") == [1, 7, 16]
    for bad in ("", "2^a", "1.5", "-3"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_exact_identity_example(tmp_path, capsys):
    assert main(["exact", "--dist", "rademacher", "--nmax", "30", "--check-identity", "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "identity.csv")
    assert len(rows) == 31 and {r["residual"] for r in rows} == {"0/1"}
    table = _read_csv(tmp_path / "table.csv")
    assert table[3]["p2"] == "3/8"
    assert "identity residuals all 0/1" in capsys.readouterr().out


def test_mc_example(tmp_path):
    assert main(["mc", "--dist", "gaussian", "--target", "s2", "--grid", "2^4..2^12", "--trials", "2000",
                 "--seed", "7", "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "survival.csv")
    assert [int(r["n"]) for r in rows] == [2**k for k in range(4, 13)]
    assert (tmp_path / "survival.svg").read_text().startswith("<svg")
    assert json.loads((tmp_path / "survival.json").read_text())["trials"] == 2000


def test_bounds_exact_example(tmp_path):
    assert main(["bounds", "--dist", "rademacher", "--nmax", "100", "--source", "exact", "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "bounds.csv")
    assert len(rows) == 404 and {r["pass"] for r in rows} == {"true"}
    assert list(rows[0]) == ["inequality_id", "n", "lhs", "rhs", "constant_used", "slack", "pass", "source"]


def test_bounds_fail_gives_exit_2(tmp_path, monkeypatch):
    bad = analysis.BoundReport("upper_conv", 1, 2.0, 1.0, 2.0, -1.0, analysis.FAIL, "exact")
    monkeypatch.setattr(analysis, "exact_bound_sweep", lambda *a, **k: [bad])
    assert main(["bounds", "--dist", "rademacher", "--nmax", "3", "--out", str(tmp_path)]) == 2
    assert _read_csv(tmp_path / "bounds.csv")[0]["pass"] == "false"


def test_bounds_mc_gaussian(tmp_path):
    code = main(["bounds", "--dist", "gaussian", "--source", "mc", "--grid", "2^0..2^6", "--trials", "20000",
                 "--out", str(tmp_path)])
    assert code == 0
    rows = _read_csv(tmp_path / "bounds.csv")
    assert "false" not in {r["pass"] for r in rows}


@pytest.mark.parametrize(
    "argv",
    [
        ["exact", "--dist", "gaussian", "--nmax", "5"],
        ["exact", "--dist", "no-such-law"],
        ["argmax", "--dist", "rademacher", "--nmax", "20"],
        ["exact", "--dist", "pareto:2.5"],
        ["mc", "--dist", "gaussian", "--grid", "2^30", "--trials", "1000000", "--budget", "1e6"],
        ["exponent", "--dist", "gaussian", "--grid", "2^8..2^10", "--trials", "200"],
        ["exact", "--dist", "rademacher", "--nmax", "5000"],
    ],
)
def test_usage_errors_exit_1(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 1
    assert "persist: error:" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus-mode"], ["mc", "--trials", "notanumber"]])
def test_parser_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_parser_exit_code_is_1(tmp_path):
    r = subprocess.run([sys.executable, "-m", "persist.cli", "bogus"], capture_output=True, text=True)
    assert r.returncode == 1 and "error" in r.stderr
    r = subprocess.run([sys.executable, "-m", "persist.cli", "exact", "--dist", "gaussian", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 1 and "lattice" in r.stderr


def test_byte_identical_reruns(tmp_path):
    argv = ["mc", "--dist", "laplace", "--grid", "1..5,2^3..2^9", "--trials", "3000", "--seed", "3", "--moments"]
    main(argv + ["--out", str(tmp_path / "a")])
    main(argv + ["--out", str(tmp_path / "b")])
    for name in ("survival.csv", "survival.json", "survival.svg", "moments.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    cfg_a = json.loads((tmp_path / "a" / "config.json").read_text())
    assert cfg_a["grid"][:5] == [1, 2, 3, 4, 5] and cfg_a["master_seed"] == 3


def test_config_file_round_trip(tmp_path):
    cfg = ExperimentConfig(DistributionSpec.lattice([-2, 1], ["1/3", "2/3"]), "identity", nmax=12,
                           out=str(tmp_path / "run"))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_json()))
    assert ExperimentConfig.from_json(json.loads(path.read_text())) == cfg
    assert main(["identity", "--config", str(path)]) == 0
    assert (tmp_path / "run" / "generating_function.json").exists()
    # explicit flags override the file
    assert main(["identity", "--config", str(path), "--nmax", "4", "--out", str(tmp_path / "r2")]) == 0
    assert len(_read_csv(tmp_path / "r2" / "identity.csv")) == 5


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(DistributionSpec.gaussian(), "bounds", source="exact")
    ExperimentConfig(DistributionSpec.gaussian(), "bounds", source="mc")
    with pytest.raises(ConfigError):
        ExperimentConfig(DistributionSpec.rademacher(), "mc", y=-1.0)


def test_argmax_and_gauss_modes(tmp_path, capsys):
    assert main(["argmax", "--dist", "rademacher", "--nmax", "10", "--out", str(tmp_path / "a")]) == 0
    rows = _read_csv(tmp_path / "a" / "argmax.csv")
    assert len(rows) == 11 and {r["equal"] for r in rows} == {"true"}
    assert main(["argmax", "--dist", "skew", "--nmax", "4", "--out", str(tmp_path / "s")]) == 0
    assert main(["gauss", "--nmax", "200", "--trials", "0", "--out", str(tmp_path / "g")]) == 0
    scan = json.loads((tmp_path / "g" / "slepian.json").read_text())
    assert scan["min_f"] >= 1 and scan["k_max"] == 200
    assert "gauss: min f" in capsys.readouterr().out


def test_help_documents_guards():
    text = cli.build_parser().format_help()
    assert "PERSIST_BUDGET_STEPS" in text and "size guards" in text
    assert "n <= 560" in text and "4e+07 cells" in text

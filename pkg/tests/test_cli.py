import pytest

from bergman_lab import cli
from bergman_lab.reports import CACHE_ENV, digest, read_csv, read_manifest


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path / "cache"))

    def invoke(*args, config=""):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(config)
        return cli.main([*args, "--config", str(cfg), "--out", str(tmp_path / "out")])

    invoke.out = tmp_path / "out"
    invoke.cache = tmp_path / "cache"
    return invoke


def test_geom_check(run):
    assert run("geom-check") == cli.EXIT_PASS
    m = read_manifest(run.out / "manifest-geom-check.txt")
    assert m["status"] == "pass"
    assert m["output.geometry.csv.sha256"] == digest(run.out / "geometry.csv")


def test_lattice_roundtrip(run):
    config = "r = 0.3\nprobes = 2000\ngamma_values = 2\n"
    assert run("lattice", "gen", config=config) == cli.EXIT_PASS
    cached = list(run.cache.glob("lattice-*.blf"))
    assert len(cached) == 1
    assert run("lattice", "verify", "--file", str(cached[0]), config=config) == cli.EXIT_PASS
    gen = read_manifest(run.out / "manifest-lattice-gen.txt")
    ver = read_manifest(run.out / "manifest-lattice-verify.txt")
    key = f"{cached[0].name}.sha256"
    assert gen["output." + key] == ver["input." + key]
    header, rows = read_csv(run.out / "lattice_verify.csv")
    assert header == ["quantity", "value", "bound", "pass"]
    assert all(row[3] == "1" for row in rows)


def test_truncated_lattice_is_config_error(run, tmp_path):
    assert run("lattice", "gen", config="r = 0.3") == cli.EXIT_PASS
    path = next(run.cache.glob("lattice-*.blf"))
    bad = tmp_path / "bad.blf"
    bad.write_bytes(path.read_bytes()[:-7])
    assert run("lattice", "verify", "--file", str(bad), config="r = 0.3") == cli.EXIT_CONFIG
    assert run("lattice", "verify", "--file", str(tmp_path / "none.blf")) == cli.EXIT_CONFIG


def test_bad_config_exit(run):
    assert run("geom-check", config="nonsense = 1") == cli.EXIT_CONFIG
    assert run("geom-check", config="r = 2") == cli.EXIT_CONFIG


def test_decompose(run):
    assert run("decompose", config="r = 0.2\ntol = 1e-2") == cli.EXIT_PASS
    header, rows = read_csv(run.out / "decompose_iterations.csv")
    assert header == ["iteration", "residual_norm", "relative_residual", "ratio"]
    summary = dict(read_csv(run.out / "decompose_summary.csv")[1])
    assert summary["converged"] == "1"
    assert int(summary["iterations"]) == len(rows) - 1


def test_decompose_coarse_lattice_not_contractive(run):
    assert run("decompose", config="r = 0.5") == cli.EXIT_TOLERANCE


def test_power_backend_needs_experimental(run):
    assert run("decompose", config="r = 0.3\nbackend = power") == cli.EXIT_CONFIG


def test_interpolate_single_point(run):
    assert run("interpolate", config="interp_r = 0.9\ninterp_R_max = 0.2") == cli.EXIT_PASS
    summary = dict(read_csv(run.out / "interpolate_summary.csv")[1])
    assert summary["points"] == "1"
    assert float(summary["interpolation_residual"]) <= 1e-12


def test_interpolate_bad_target(run):
    assert run("interpolate", config="targets = unit:99") == cli.EXIT_CONFIG


def test_schur(run):
    assert run("schur") == cli.EXIT_PASS
    assert (run.out / "schur-r0p9.csv").exists() and (run.out / "schur-r0p95.csv").exists()
    m = read_manifest(run.out / "manifest-schur.txt")
    assert m["check.C1_decreasing_0.9_0.95"] == "pass"


def test_unresolvable_estimate(run):
    assert run("estimate", "i-j", config="radii = 0.9, 0.99999999999\nb = 1\nc = 0.5") == cli.EXIT_RESOLUTION


def test_report_collects_manifests(run, capsys):
    run("geom-check")
    run("decompose", config="r = 0.5")
    assert run("report") == cli.EXIT_PASS
    header, rows = read_csv(run.out / "report.csv")
    assert [r[0] for r in rows] == ["geom-check"]
    assert "geom-check" in capsys.readouterr().out


def test_interpolate_reports_frontier(run):
    assert run("interpolate") == cli.EXIT_PASS
    header, rows = read_csv(run.out / "interpolate_frontier.csv")
    assert header == ["r", "points", "tu_minus_identity", "contractive"]
    assert [float(r[0]) for r in rows] == [0.6, 0.7, 0.8, 0.9, 0.95]
    assert rows[-1][3] == "1"

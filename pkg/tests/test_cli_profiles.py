import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from latticeepi.cli import ExperimentConfig, main, run_experiment
from latticeepi.profiles import (init_profile, profile_from_file,
                                 scaled_profile_field, spread_block)
from latticeepi.rescale import density_snapshot


# -- initial profiles -----------------------------------------------------------

def test_point_and_block_specs():
    assert init_profile("point(0, 1)").counts == {0: 1}
    assert init_profile("point(-3,7)").counts == {-3: 7}
    assert init_profile("block(-1, 1, 2)").counts == {-1: 2, 0: 2, 1: 2}
    with pytest.raises(ValueError):
        init_profile("ball(0,1)")


def test_block_density_under_snapshot():
    f = init_profile("block(0, 0, 27)")
    snap = density_snapshot(f, 9)
    assert snap(0.0) == 27 / 3


def test_scaled_profile_sup_norm_convergence():
    tri = lambda x: max(0.0, 1.0 - abs(x))
    for k in (64, 256):
        f = scaled_profile_field(tri, -1.0, 1.0, k)
        snap = density_snapshot(f, k)
        grid = np.linspace(-0.99, 0.99, 801)
        err = max(abs(snap(x) - tri(x)) for x in grid)
        assert err <= 2.0 / math.sqrt(k), (k, err)


def test_profile_file_round_trip(tmp_path):
    p = tmp_path / "bump.csv"
    p.write_text("-1.0,0.0\n0.0,1.0\n1.0,0.0\n")
    f, lo, hi = profile_from_file(p)
    assert (lo, hi) == (-1.0, 1.0)
    assert f(0.0) == 1.0 and f(0.5) == 0.5 and f(2.0) == 0.0
    fld = init_profile(f"profile:{p}", k=16)
    assert fld[0] == math.ceil(1.0 * 4)


def test_unbounded_profile_rejected():
    with pytest.raises(ValueError):
        scaled_profile_field(lambda x: 1.0, -math.inf, 1.0, 4)
    with pytest.raises(ValueError):
        init_profile("profile:nowhere.csv")  # needs k before it even opens


def test_spread_block_even_distribution():
    f = spread_block(10, 3)
    assert sum(f.counts.values()) == 10
    assert max(f.counts.values()) - min(f.counts.values()) <= 1


# -- CLI ------------------------------------------------------------------------

def _cfg(tmp_path, body: str) -> Path:
    p = tmp_path / "cfg.toml"
    p.write_text(body)
    return p


def test_cli_determinism_byte_identical(tmp_path):
    cfg = _cfg(tmp_path, """
kind = "envelope"
seed = 9
replicates = 25
[params]
init = "point(0, 2)"
max_gens = 200
""")
    rc1 = main(["envelope", "--config", str(cfg), "--out", str(tmp_path / "a")])
    rc2 = main(["envelope", "--config", str(cfg), "--out", str(tmp_path / "b")])
    assert rc1 == rc2 == 0
    for name in ("stats.csv", "trajectories.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_threads_do_not_change_output(tmp_path):
    cfg = _cfg(tmp_path, """
kind = "epidemic"
seed = 4
replicates = 30
[params]
N = 20
variant = "sir"
init = "point(0, 2)"
max_gens = 300
""")
    main(["epidemic", "--config", str(cfg), "--out", str(tmp_path / "s"), "--threads", "1"])
    main(["epidemic", "--config", str(cfg), "--out", str(tmp_path / "t"), "--threads", "4"])
    assert (tmp_path / "s" / "stats.csv").read_bytes() == \
        (tmp_path / "t" / "stats.csv").read_bytes()


def test_cli_zero_replicates_valid_manifest(tmp_path):
    rc = main(["envelope", "--reps", "0", "--seed", "1", "--out", str(tmp_path / "z")])
    assert rc == 0
    man = json.loads((tmp_path / "z" / "manifest.json").read_text())
    assert man["replicates"] == 0
    stats = (tmp_path / "z" / "stats.csv").read_text().strip().splitlines()
    assert len(stats) == 1  # header only


def test_cli_config_errors_exit_2(tmp_path):
    bad = _cfg(tmp_path, 'kind = "envelope"\nsneaky = 1\n')
    assert main(["envelope", "--config", str(bad)]) == 2
    mismatch = _cfg(tmp_path, 'kind = "epidemic"\n')
    assert main(["envelope", "--config", str(mismatch)]) == 2
    notoml = tmp_path / "x.toml"
    notoml.write_text("kind = [unclosed")
    assert main(["envelope", "--config", str(notoml)]) == 2
    badalpha = _cfg(tmp_path, 'kind = "sweep"\n[params]\nalpha = 1.5\n')
    assert main(["sweep", "--config", str(badalpha)]) == 2


def test_cli_numerical_failure_exit_3(tmp_path, monkeypatch):
    from latticeepi import cli
    from latticeepi.extent import ExitSolverError

    def boom(cfg, out):
        raise ExitSolverError("no bracket")

    monkeypatch.setitem(cli._RUNNERS, "extent", boom)
    assert main(["extent", "--out", str(tmp_path / "x")]) == 3


def test_cli_extent_flags_json(tmp_path, capsys):
    rc = main(["extent", "--a", "2.0", "--masses", "0.7:0.4,1.3:0.2",
               "--out", str(tmp_path / "e")])
    assert rc == 0
    payload = json.loads((tmp_path / "e" / "extent.json").read_text())
    assert payload["a"] == 2.0
    assert len(payload["u_values"]) == 2
    assert 0.0 < payload["probability"] < 1.0
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert printed["probability"] == payload["probability"]


def test_cli_sweep_emits_attrition_table(tmp_path):
    cfg = _cfg(tmp_path, """
kind = "sweep"
seed = 3
replicates = 40
[params]
variant = "sis"
alphas = [0.5]
Ns = [50, 100]
cap_multiplier = 3
""")
    rc = main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sw")])
    assert rc == 0
    rows = (tmp_path / "sw" / "attrition_table.csv").read_text().strip().splitlines()
    assert rows[0].startswith("variant,alpha,N,")
    assert len(rows) == 3


def test_manifest_round_trip(tmp_path):
    cfg = _cfg(tmp_path, """
kind = "meanfield"
seed = 12
replicates = 50
[params]
model = "reedfrost"
N = 500
J0 = 3
""")
    main(["meanfield", "--config", str(cfg), "--out", str(tmp_path / "m1")])
    man = json.loads((tmp_path / "m1" / "manifest.json").read_text())
    cfg2 = ExperimentConfig(kind=man["kind"], seed=man["seed"],
                            replicates=man["replicates"], threads=man["threads"],
                            params=man["params"], out_dir=str(tmp_path / "m2"))
    run_experiment(cfg2)
    assert (tmp_path / "m1" / "samples.csv").read_bytes() == \
        (tmp_path / "m2" / "samples.csv").read_bytes()


def test_cli_moments_kind(tmp_path):
    rc = main(["moments", "--reps", "2000", "--seed", "2", "--out", str(tmp_path / "mo")])
    assert rc == 0
    rows = (tmp_path / "mo" / "moments.csv").read_text().strip().splitlines()
    assert rows[0] == "n,x,m,exact,mc,se"
    assert len(rows) > 10


def test_cli_entry_point_runs():
    out = subprocess.run([sys.executable, "-m", "latticeepi.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "envelope" in out.stdout


def test_cli_envelope_density_snapshots(tmp_path):
    cfg = _cfg(tmp_path, """
kind = "envelope"
seed = 5
replicates = 3
[params]
init = "point(0, 9)"
max_gens = 40
snapshot_k = 9
""")
    rc = main(["envelope", "--config", str(cfg), "--out", str(tmp_path / "d")])
    assert rc == 0
    lines = (tmp_path / "d" / "density.csv").read_text().splitlines()
    assert lines[0] == "t,x,density"
    t0, x0, v0 = lines[1].split(",")
    assert float(t0) == 0.0 and float(x0) == 0.0 and float(v0) == 9 / 3
    assert "np." not in lines[1]

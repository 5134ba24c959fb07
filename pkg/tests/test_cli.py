import re
import warnings

import numpy as np
import pytest

from dickestark import cli
from dickestark.cache import CacheCorruptionError, DecompositionCache
from dickestark.core import ModelParams
from dickestark.spectrum import STATS, dcs_decomposition


def strip_timestamp(text):
    return "\n".join(line for line in text.splitlines() if not line.startswith("# timestamp"))


def run(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


# ------------------------------------------------------------------ cache

def test_cache_round_trip(tmp_path):
    cache = DecompositionCache(tmp_path)
    p = ModelParams(2, 0.4, 0.3)
    d = dcs_decomposition(p, 8)
    key = cache.key(p, "dcs", 8, None)
    cache.put(key, d)
    got = cache.get(key)
    assert np.array_equal(got.eigenvalues, d.eigenvalues)
    assert np.array_equal(got.eigenvectors, d.eigenvectors)
    assert got.basis == d.basis and got.truncation == 8


def test_cache_key_distinguishes_inputs():
    p = ModelParams(2, 0.4)
    keys = {DecompositionCache.key(p, "dcs", 8, None), DecompositionCache.key(p, "dcs", 9, None),
            DecompositionCache.key(p, "dcs", 8, 1), DecompositionCache.key(p.replace(lam=0.41), "dcs", 8, None)}
    assert len(keys) == 4


def test_corrupted_entry_recomputed(tmp_path):
    cache = DecompositionCache(tmp_path)
    p = ModelParams(2, 0.4)
    first = dcs_decomposition(p, 8, cache=cache)
    path = next(tmp_path.glob("*.npz"))
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    before = STATS["eigendecompositions"]
    with pytest.warns(UserWarning, match="corrupted"):
        again = dcs_decomposition(p, 8, cache=cache)
    assert STATS["eigendecompositions"] == before + 1
    assert np.array_equal(again.eigenvalues, first.eigenvalues)
    assert cache.get(cache.key(p, "dcs", 8, None)) is not None


def test_strict_cache_raises(tmp_path):
    cache = DecompositionCache(tmp_path, strict=True)
    p = ModelParams(2, 0.4)
    dcs_decomposition(p, 8, cache=cache)
    path = next(tmp_path.glob("*.npz"))
    path.write_bytes(b"not a zip")
    with pytest.raises(CacheCorruptionError):
        dcs_decomposition(p, 8, cache=cache)


def test_unwritable_cache_degrades(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.warns(UserWarning, match="caching disabled"):
        cache = DecompositionCache(blocker / "sub")
    assert not cache.enabled
    d = dcs_decomposition(ModelParams(1, 0.2), 4, cache=cache)
    assert d.n_levels == 10


# ------------------------------------------------------------------ CLI

def test_meanfield_table(capsys):
    code, out, _ = run(["meanfield", "--stark-u=-1.5,0,1.5", "--temperature", "0"], capsys)
    assert code == 0
    rows = table(out)
    assert [round(float(r["lambda_c"]), 4) for r in rows] == [0.6614, 0.5, 0.25]
    assert all(r["status"] == "ok" for r in rows)


def test_meanfield_order_parameter_column(capsys):
    code, out, _ = run(["meanfield", "--lam", "0.2,0.9", "--temperature", "0.1"], capsys)
    rows = table(out)
    assert code == 0 and float(rows[0]["order_parameter"]) == 0 and float(rows[1]["order_parameter"]) > 0


def test_metadata_and_formatting(capsys):
    code, out, _ = run(["photon-sweep", "--n-atoms", "2", "--lam", "0,0.3", "--rel-tol", "1e-6"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# dickestark")
    assert any(l.startswith("# timestamp: ") for l in lines)
    assert any(l.startswith("# config: ") for l in lines)
    rows = table(out)
    assert len(rows) == 2
    # tiny numbers in exponent notation, at most 15 significant digits
    assert re.fullmatch(r"-?\d\.?\d*e-\d+|0", rows[0]["photon_per_atom"])
    assert len(re.sub(r"[^0-9]", "", rows[1]["photon_per_atom"].split("e")[0]).lstrip("0")) <= 15
    assert cli.fmt(1.23e-5) == "1.23e-05" and cli.fmt(0.000123) == "0.000123"


def test_repeated_runs_identical_and_cache_hits(tmp_path, capsys):
    args = ["photon-sweep", "--n-atoms", "4", "--stark-u", "1", "--lam", "0:0.6:4"]
    code, plain, err = run(args, capsys)
    assert code == 0
    code, first, err1 = run(args + ["--cache", str(tmp_path)], capsys)
    code, second, err2 = run(args + ["--cache", str(tmp_path)], capsys)
    assert "# eigendecompositions: 0" in err2
    assert "# eigendecompositions: 0" not in err1
    assert strip_timestamp(plain) == strip_timestamp(first) == strip_timestamp(second)


def test_cache_directory_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DICKESTARK_CACHE", str(tmp_path))
    run(["spectrum", "--n-atoms", "2", "--lam", "0.2", "--k-trunc", "6"], capsys)
    assert list(tmp_path.glob("*.npz"))


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "sweep.yaml"
    cfg.write_text("n_atoms: [2]\nlam: [0.1, 0.2, 0.3]\nstark_u: 0.5\nk_trunc: 8\n")
    code, out, _ = run(["spectrum", "--config", str(cfg), "--lam", "0.25"], capsys)
    rows = table(out)
    assert code == 0 and len(rows) == 1
    assert rows[0]["lam"] == "0.25" and rows[0]["stark_u"] == "0.5" and rows[0]["truncation"] == "8"


def test_spectrum_with_fock_rows(capsys):
    code, out, _ = run(["spectrum", "--n-atoms", "2", "--lam", "0.4", "--n-levels", "3",
                        "--dfs-truncations", "30"], capsys)
    rows = table(out)
    assert code == 0 and len(rows) == 6
    dcs = [float(r["energy"]) for r in rows if r["basis"] == "dcs"]
    dfs = [float(r["energy"]) for r in rows if r["basis"] == "dfs"]
    assert np.allclose(dcs, dfs, atol=1e-4)


@pytest.mark.parametrize("args", [
    ["photon-sweep", "--lam=-0.5"],
    ["photon-sweep", "--lam", "0:1"],
    ["photon-sweep", "--lam", ""],
    ["g2-sweep", "--temperature=-1"],
    ["phase-diagram", "--n-atoms", "64", "--lam", "0.1", "--stark-u", "0"],
])
def test_invalid_configuration_exit_code(args, capsys):
    code, out, err = run(args, capsys)
    assert code == cli.EXIT_CONFIG
    assert err.strip().splitlines()[-1].startswith(f"error,{cli.EXIT_CONFIG},")


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("lambda: 0.3\n")
    code, _, err = run(["spectrum", "--config", str(cfg)], capsys)
    assert code == cli.EXIT_CONFIG and "unknown config keys" in err


def test_failed_point_gets_error_row(capsys):
    code, out, err = run(["spectrum", "--n-atoms", "4", "--lam", "0.1,1.0", "--rel-tol", "1e-300"], capsys)
    rows = table(out)
    assert code == cli.EXIT_CONVERGENCE
    assert len(rows) >= 2
    assert rows[-1]["status"] == "error:SpectrumError" and rows[-1]["energy"] == ""
    assert err.strip().splitlines()[-1].startswith(f"error,{cli.EXIT_CONVERGENCE},SpectrumError")


def test_strict_cache_corruption_exit_code(tmp_path, capsys):
    args = ["spectrum", "--n-atoms", "2", "--lam", "0.3", "--k-trunc", "5", "--cache", str(tmp_path)]
    assert run(args, capsys)[0] == 0
    for path in tmp_path.glob("*.npz"):
        path.write_bytes(b"garbage")
    code, out, err = run(args + ["--strict-cache"], capsys)
    assert code == cli.EXIT_CACHE
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert run(args, capsys)[0] == 0


def test_row_count_equals_grid(capsys):
    code, out, _ = run(["g2-sweep", "--n-atoms", "2", "--lam", "0.1,0.4", "--stark-u", "0,0.5",
                        "--temperature", "0.3", "--k-trunc", "15", "--threads", "2"], capsys)
    rows = table(out)
    assert code == 0 and len(rows) == 4
    assert [(r["stark_u"], r["lam"]) for r in rows] == [("0", "0.1"), ("0", "0.4"), ("0.5", "0.1"), ("0.5", "0.4")]


def test_dynamics_relax_and_stats(tmp_path, capsys):
    out_path = tmp_path / "dyn.csv"
    code, _, _ = run(["dynamics", "--n-atoms", "2", "--lam", "0.3", "--times", "0:4:5", "--k-trunc", "20",
                      "--out", str(out_path)], capsys)
    assert code == 0 and len(table(out_path.read_text())) == 5
    code, out, _ = run(["relax", "--n-atoms", "2", "--lam", "0.3", "--temperature", "0.5", "--levels", "10",
                        "--k-trunc", "20", "--times", "0,20000"], capsys)
    rows = table(out)
    assert code == 0 and float(rows[-1]["trace_distance_to_gibbs"]) < 1e-6
    code, out, _ = run(["stats-sweep", "--n-atoms", "2", "--lam", "0.5", "--k-trunc", "20",
                        "--observables", "negativity"], capsys)
    rows = table(out)
    assert code == 0 and float(rows[0]["negativity"]) > 0 and rows[0]["xi2"] == ""


def test_parse_grid():
    assert cli.parse_grid("0:1:3") == [0.0, 0.5, 1.0]
    assert cli.parse_grid("1,2", integer=True) == [1, 2]
    assert cli.parse_grid(0.5) == [0.5]
    with pytest.raises(cli.ConfigError):
        cli.parse_grid("a,b")

import json
import math
import os

import pytest
from hypothesis import given, settings, strategies as st

from unimod.brownian import BrownianPathStore
from unimod.cli import main, stability_models
from unimod.config import SECTION_DEFAULTS, RunConfig, dump_config, parse_config
from unimod.diffusion import certify_stability, simulate_coupled
from unimod.errors import ConfigError
from unimod.modcore import Variant, WSpec
from unimod.report import SCHEMA_VERSION, Certificate, Result, emit_report


def _cfg_file(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_parse_example():
    cfg = parse_config("epsilon=0.5\nc=2.0\ncommand=modulus")
    assert cfg.command == "modulus"
    assert cfg.spec == WSpec(epsilon=0.5, c=2.0)
    assert cfg.section()["levels"] == SECTION_DEFAULTS["modulus"]["levels"][1]


@pytest.mark.parametrize("text,line,key", [
    ("epsilon=1.5", 1, "epsilon"),
    ("command=grr\n\nc=0.5", 3, "c"),
    ("# header\nbogus = 1", 2, "bogus"),
    ("[grr]\nn = many", 2, "grr.n"),
    ("[grr]\nT = 1\nT = 2", 3, "grr.T"),
    ("[nosuch]", 1, "nosuch"),
    ("seed = -1", 1, "seed"),
])
def test_parse_errors_name_line_and_key(text, line, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert info.value.key == key
    assert str(info.value).startswith(f"line {line}:")


def test_overrides_win():
    cfg = parse_config("seed = 3\nseeds = 2\n", {"seed": 10, "seeds": None})
    assert cfg.seed == 10 and cfg.seeds == 2
    assert cfg.seed_list == [10, 11]


@settings(max_examples=100, deadline=None)
@given(eps=st.floats(0.01, 0.99), c=st.floats(1.01, 10.0), seed=st.integers(0, 2 ** 64 - 2),
       levels=st.integers(1, 12), dt=st.floats(1e-6, 0.5), grid=st.lists(st.integers(3, 10 ** 6), min_size=1, max_size=6),
       command=st.sampled_from(["modulus", "grr", "stability", "rates41", "rates42", "report"]),
       variant=st.sampled_from(list(Variant)))
def test_config_round_trip(eps, c, seed, levels, dt, grid, command, variant):
    cfg = RunConfig(command=command, spec=WSpec(epsilon=eps, c=c, variant=variant), seed=seed)
    cfg.params["modulus"]["levels"] = levels
    cfg.params["stability"]["dt"] = dt
    cfg.params["rates41"]["N_grid"] = grid
    assert parse_config(dump_config(cfg)) == cfg


def test_empty_report(tmp_path):
    assert emit_report([], str(tmp_path)) == 0
    data = json.loads((tmp_path / "summary.json").read_text())
    assert data["schema_version"] == SCHEMA_VERSION
    assert data["passed"] is True and data["results"] == [] and data["tables"] == {}
    res = Result("modulus", tables={"empty": (("a", "b"), [])})
    assert emit_report([res], str(tmp_path / "x")) == 0
    assert (tmp_path / "x" / "empty.csv").read_text() == "a,b\n"


def test_failed_stability_certificate_localised(tmp_path):
    model, model_bar = stability_models({k: v[1] for k, v in SECTION_DEFAULTS["stability"].items()})
    run = simulate_coupled(model, model_bar, BrownianPathStore(0), 2.0 ** -8, 1.0)
    run.X[-1] += 100.0
    cert = certify_stability(run, WSpec())
    assert not cert.passed
    res = Result("stability", certificates=[Certificate("stability_seed_0", cert.passed, cert.to_dict()),
                                            Certificate("ok", True)])
    assert emit_report([res], str(tmp_path)) == 1
    data = json.loads((tmp_path / "summary.json").read_text())
    entry = data["results"][0]
    assert entry["failures"] == ["stability_seed_0"]
    assert "decomposition" in entry["certificates"][0]["details"]["broken_terms"]
    assert not any(f.endswith(".partial") for f in os.listdir(tmp_path))


RATES = "[rates41]\nN_grid = 16,32,64,128,256\nT = 1\ndt = 0.00390625\n"


def test_rates_loglog_file(tmp_path):
    cfg = _cfg_file(tmp_path, RATES)
    out = tmp_path / "out"
    assert main(["rates41", "--config", cfg, "--seeds", "2", "--out", str(out)]) in (0, 1)
    lines = (out / "rates41" / "rates41_loglog.dat").read_text().splitlines()
    assert len(lines) == 5
    x = [float(l.split()[0]) for l in lines]
    assert x == pytest.approx([math.log(n) for n in (16, 32, 64, 128, 256)])
    header = (out / "rates41" / "rates41.csv").read_text().splitlines()[0]
    assert header == "N,seed,sup_err,weighted_sup_err,xi_hat"


@pytest.mark.parametrize("command,extra", [
    ("modulus", "[modulus]\nlevels = 4\n"),
    ("grr", "[grr]\nn = 64\nn_pairs = 50\n"),
    ("stability", "[stability]\nT = 1\ndt = 0.0078125\n"),
    ("rates42", "[rates42]\nN_grid = 16,32,64,128,256\nT = 1\ndt = 0.015625\n"),
])
def test_determinism(tmp_path, command, extra):
    cfg = _cfg_file(tmp_path, extra)
    out = tmp_path / "o"
    snaps = []
    for _ in range(2):
        assert main([command, "--config", cfg, "--seeds", "3", "--out", str(out)]) == 0
        d = out / command
        assert "metadata.json" in os.listdir(d)
        snaps.append({f: (d / f).read_bytes() for f in sorted(os.listdir(d)) if f != "metadata.json"})
    assert "summary.json" in snaps[0]
    assert snaps[0] == snaps[1]


def test_report_aggregates(tmp_path):
    cfg = _cfg_file(tmp_path, "[grr]\nn = 64\nn_pairs = 20\n")
    out = str(tmp_path / "o")
    assert main(["grr", "--config", cfg, "--out", out]) == 0
    assert main(["report", "--out", out]) == 0
    data = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert data["results"][0]["summary"]["summaries"] == 1


def test_exit_codes(tmp_path, monkeypatch):
    out = str(tmp_path / "o")
    assert main(["modulus", "--config", _cfg_file(tmp_path, "epsilon = 1.5\n"), "--out", out]) == 2
    assert main(["modulus", "--seed", "-1", "--out", out]) == 2
    assert main(["nosuch"]) == 2
    assert main(["modulus", "--config", str(tmp_path / "missing.cfg"), "--out", out]) == 2
    big = _cfg_file(tmp_path, "[modulus]\nlevels = 12\nmax_points = 100\n")
    assert main(["modulus", "--config", big, "--out", out]) == 3
    monkeypatch.setenv("UNIMOD_WORKERS", "zero")
    assert main(["modulus", "--out", out]) == 2


def test_workers_env(tmp_path, monkeypatch):
    cfg = _cfg_file(tmp_path, "[grr]\nn = 64\nn_pairs = 20\n")
    monkeypatch.setenv("UNIMOD_WORKERS", "2")
    out = tmp_path / "par"
    assert main(["grr", "--config", cfg, "--seeds", "3", "--out", str(out)]) == 0
    assert "workers = 2" in (out / "grr" / "config.txt").read_text()
    monkeypatch.delenv("UNIMOD_WORKERS")
    seq = tmp_path / "seq"
    assert main(["grr", "--config", cfg, "--seeds", "3", "--out", str(seq)]) == 0
    assert (out / "grr" / "grr.csv").read_bytes() == (seq / "grr" / "grr.csv").read_bytes()

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcsa.cli import CSV_HEADER, main
from bcsa.config import ConfigError, ExperimentConfig, load_config
from bcsa.model import DegreeDistribution, PhyParams

SMALL = """
[experiment]
name = small
protocols = bcsa, csma, floor
seed = 11

[frame]
slots = 60

[load]
g = 0.3, 0.5

[bcsa]
dist = 0.5x^2+0.5x^3
receiver_k = sampled, 3
trials = 2000
min_errors = 5

[csma]
runs = 40
"""


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def data_lines(text):
    return [line for line in text.splitlines() if not line.startswith("#")]


def test_bundled_configs_parse():
    for name in ("fig5_n172", "fig5_n315", "table1", "fig3_n172", "fig4_csma", "design_n172"):
        cfg = load_config(name)
        assert ExperimentConfig.parse(cfg.to_text()) == cfg
    assert load_config("fig5_n172").n == 172
    assert load_config("fig5_n315").n == 315


def test_unknown_bundled_config():
    with pytest.raises(ConfigError):
        load_config("nope")


@settings(max_examples=100)
@given(
    st.lists(st.sampled_from(["bcsa", "csma", "floor", "threshold", "optimize", "table1"]),
             min_size=1, max_size=4, unique=True),
    st.integers(0, 2 ** 64 - 1),
    st.lists(st.floats(0.05, 1.5, allow_nan=False), min_size=1, max_size=6).map(sorted),
    st.sampled_from(["x^3", "0.86x^3+0.14x^8", "0.25x^2+0.75x^3"]),
    st.integers(1, 2000),
    st.lists(st.one_of(st.none(), st.integers(0, 8)), min_size=1, max_size=3),
    st.one_of(st.none(), st.floats(0.1, 1.0, allow_nan=False)),
)
def test_config_text_round_trip(protocols, seed, loads, dist, payload, ks, min_threshold):
    cfg = ExperimentConfig(protocols=tuple(protocols), seed=seed, loads=tuple(loads),
                           dist=DegreeDistribution.parse(dist), phy=PhyParams(payload_size=payload),
                           slots=100, receiver_k=tuple(ks), min_threshold=min_threshold)
    assert ExperimentConfig.parse(cfg.to_text()) == cfg
    assert ExperimentConfig.parse(cfg.to_text()).digest() == cfg.digest()


@pytest.mark.parametrize("text", [
    "[experiment]\nprotocols = bcsa\n[bcsa]\ndist = x^2\n",           # empty g grid
    "[experiment]\nprotocols = warp\n",                               # unknown protocol
    "[experiment]\nprotocols = bcsa\n[load]\ng = 0.5\n",             # no distribution
    "[load]\ng = 0.5, 0.3\n[bcsa]\ndist = x^2\n",                    # decreasing grid
    "[bogus]\nx = 1\n",                                               # unknown section
    "[bcsa]\ndist = x^2\ncolour = red\n",                             # unknown key
    "[load]\ng = 0.5\n[bcsa]\ndist = 0.5x^2\n",                       # not normalized
    "[load]\ng = 0.5\n[bcsa]\ndist = x^2\nreceiver_k = 999\n",       # k > n
    "[experiment\n",                                                  # malformed
])
def test_malformed_configs(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.parse(text)


def test_empty_grid_exits_nonzero(tmp_path, capsys):
    path = write(tmp_path, "[experiment]\nprotocols = bcsa\n[load]\ng =\n[bcsa]\ndist = x^2\n")
    assert main(["run", "--config", path]) != 0
    assert "empty g grid" in capsys.readouterr().err


def test_table1_config(capsys):
    assert main(["run", "--config", "table1"]) == 0
    out = capsys.readouterr().out
    assert "t_pack = 312 us, t_slot = 317 us, n = 315" in out
    assert "t_pack = 576 us, t_slot = 581 us, n = 172" in out


def test_run_writes_sorted_csv(tmp_path):
    out = tmp_path / "out.csv"
    assert main(["run", "--config", write(tmp_path, SMALL), "--out", str(out)]) == 0
    text = out.read_text()
    header = text.splitlines()[:3]
    assert header[0].startswith("# bcsa ")
    assert "sha256=" in header[1] and header[2] == "# seed 11"
    lines = data_lines(text)
    assert lines[0] == CSV_HEADER
    rows = [line.split(",") for line in lines[1:]]
    assert {r[0] for r in rows} == {"bcsa", "csma", "floor"}
    keys = [(r[0], float(r[3]), -1 if r[5] == "" else int(r[5])) for r in rows]
    assert keys == sorted(keys)
    for r in rows:
        for cell in r[8:11]:
            mantissa, exp = cell.split("e")
            assert len(mantissa.replace(".", "").lstrip("-")) == 6


def test_csv_is_identical_across_runs_and_threads(tmp_path):
    cfg = write(tmp_path, SMALL)
    outs = []
    for i, threads in enumerate(("1", "1", "3")):
        path = tmp_path / f"o{i}.csv"
        assert main(["run", "--config", cfg, "--out", str(path), "--threads", threads]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_seed_flag_overrides(tmp_path):
    cfg = write(tmp_path, SMALL)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", "--config", cfg, "--out", str(a), "--seed", "5"])
    main(["run", "--config", cfg, "--out", str(b), "--seed", "6"])
    assert "# seed 5" in a.read_text()
    assert data_lines(a.read_text()) != data_lines(b.read_text())


def test_budget_exhaustion_is_reported(tmp_path, capsys):
    text = SMALL.replace("min_errors = 5", "min_errors = 100000").replace("trials = 2000", "trials = 10\nmax_trials = 20")
    path = write(tmp_path, text)
    assert main(["run", "--config", path, "--out", str(tmp_path / "x.csv")]) == 3
    assert "budget" in capsys.readouterr().err


def test_bad_seed_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--config", write(tmp_path, SMALL), "--seed", "-1"])


def test_catalog_dump(tmp_path, capsys):
    assert main(["catalog", "--max-users", "2", "--degrees", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].split("\t")[:3] == ["0,0,2", "2", "2.2/3.3"]
    out = tmp_path / "cat.txt"
    assert main(["catalog", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 87


def test_design_config(capsys):
    assert main(["run", "--config", "design_n172"]) == 0
    lines = data_lines(capsys.readouterr().out)
    assert [line.split(",")[0] for line in lines[1:]] == ["optimize", "threshold"]


def test_verify_report_is_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["verify", "--only", "1", "--out", str(a)]) == 0
    assert main(["verify", "--only", "1", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    record = json.loads(a.read_text())
    assert record["criterion"] == 1 and record["passed"] is True


def test_zero_tolerance_fails_threshold(capsys):
    assert main(["verify", "--only", "2", "--tol-scale", "0"]) == 1
    record = json.loads(capsys.readouterr().out.strip())
    assert record["passed"] is False and record["tolerance"] == "[0.8700, 0.8700]"

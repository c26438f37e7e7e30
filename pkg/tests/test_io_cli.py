import json
import struct

import numpy as np
import pytest

from higgslab import cli
from higgslab.bundle import random_higgs_pair
from higgslab.config import ConfigError, parse_config
from higgslab.flow import DiagnosticsRecord, HiggsState, diagnostics
from higgslab.io import (
    MAGIC,
    CheckpointError,
    DiagnosticsWriter,
    read_checkpoint,
    read_diagnostics,
    write_checkpoint,
)


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=1))
    return p


def _cfg(tmp_path, **blocks):
    doc = {"geometry": {"n": 1, "sides": [1.0, 1.0], "grid": [16, 16]},
           "output": {"dir": str(tmp_path / "out")}}
    for k, v in blocks.items():
        doc.setdefault(k, {}).update(v)
    return _write(tmp_path, doc)


# -- checkpoints -----------------------------------------------------------------

@pytest.mark.parametrize("fixture", ["t2_16", "t4_8"])
def test_checkpoint_round_trip_is_bit_exact(tmp_path, request, fixture):
    g = request.getfixturevalue(fixture)
    A, th = random_higgs_pair(g, 3, gauge_strength=0.1, roughness=1)
    st = HiggsState(A, th, 0.375)
    path = write_checkpoint(tmp_path / "c.ymhf", st)
    back = read_checkpoint(path)
    assert back.A.coeffs.tobytes() == A.coeffs.tobytes()
    assert back.theta.comps.tobytes() == th.comps.tobytes()
    assert back.t == 0.375 and back.geometry == g
    assert not (tmp_path / "c.ymhf.tmp").exists()


def test_checkpoint_header_layout(tmp_path, t2_16):
    A, th = random_higgs_pair(t2_16, 0)
    data = write_checkpoint(tmp_path / "c", HiggsState(A, th)).read_bytes()
    assert data[:4] == MAGIC
    assert struct.unpack_from("<III", data, 4) == (1, 1, 2)
    assert struct.unpack_from("<2I", data, 16) == (16, 16)
    assert len(data) == 16 + 8 + 16 + 8 + 16 * (A.coeffs.size + th.comps.size)


def test_checkpoint_rejects_corruption(tmp_path, t2_16):
    A, th = random_higgs_pair(t2_16, 0)
    good = write_checkpoint(tmp_path / "c", HiggsState(A, th)).read_bytes()
    for name, blob in [("magic", b"XXXX" + good[4:]), ("trunc", good[:-8]), ("header", good[:10]),
                       ("version", good[:4] + struct.pack("<I", 7) + good[8:])]:
        p = tmp_path / name
        p.write_bytes(blob)
        with pytest.raises(CheckpointError):
            read_checkpoint(p)


# -- diagnostics ---------------------------------------------------------------------

def _rec(t):
    return DiagnosticsRecord(t, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, None, 0.1, True)


def test_diagnostics_writer_keeps_every_kth_and_final(tmp_path):
    path = tmp_path / "d.jsonl"
    with DiagnosticsWriter(path, every=3) as w:
        for k in range(7):
            w(_rec(float(k)))
    assert [r["t"] for r in read_diagnostics(path)] == [0.0, 3.0, 6.0]
    with DiagnosticsWriter(path, every=3) as w:
        for k in range(5):
            w(_rec(float(k)))
    assert [r["t"] for r in read_diagnostics(path)] == [0.0, 3.0, 4.0]
    with DiagnosticsWriter(path, append=True) as w:
        w(_rec(9.0))
    assert read_diagnostics(path)[-1]["t"] == 9.0


def test_diagnostics_record_json(nilpotent):
    d = json.loads(diagnostics(HiggsState(*nilpotent)).to_json())
    assert abs(d["ymh"] - 8) < 1e-12 and d["lambda_est"] is None and d["accepted"] is True


# -- config ----------------------------------------------------------------------------

def test_parse_config_defaults_and_types():
    cfg = parse_config('{"flow": {"t_max": 2}}')
    assert cfg.flow.t_max == 2.0 and isinstance(cfg.flow.t_max, float)
    assert cfg.geometry.grid == [32, 32]


@pytest.mark.parametrize("text, line", [
    ('{\n "geometry": {\n  "grid": [15, 16]\n }\n}', 3),
    ('{\n "flow": {\n  "dt0": -1\n }\n}', 3),
    ('{\n "flow": {\n  "nope": 1\n }\n}', 3),
    ('{\n "flow": {\n  "adaptive": 1\n }\n}', 3),
    ('{\n "flow": {"dt0": 1,}\n}', 2),
    ('{\n "verify": {\n  "checks": ["magic"]\n }\n}', 3),
    ('{\n "extra": {}\n}', 2),
])
def test_parse_config_errors_are_line_anchored(text, line):
    with pytest.raises(ConfigError, match=rf"^cfg\.json:{line}: "):
        parse_config(text, "cfg.json")


# -- CLI ---------------------------------------------------------------------------------

def test_cli_flow_zero_data(tmp_path, capsys):
    cfg = _cfg(tmp_path, bundle={"model": "zero"})
    assert cli.main(["flow", "--config", str(cfg)]) == 0
    recs = read_diagnostics(tmp_path / "out" / "diagnostics.jsonl")
    assert len(recs) == 1 and recs[0]["ymh"] == 0.0
    assert "flow finished" in capsys.readouterr().out


def test_cli_flow_nilpotent_monotone(tmp_path):
    cfg = _cfg(tmp_path, geometry={"grid": [8, 8]},
               bundle={"model": "nilpotent", "gauge_strength": 0.0},
               flow={"t_max": 2.0, "dt_max": 0.1, "checkpoint_every": 5})
    assert cli.main(["flow", "--config", str(cfg), "--quiet"]) == 0
    recs = read_diagnostics(tmp_path / "out" / "diagnostics.jsonl")
    ymh = [r["ymh"] for r in recs]
    assert abs(ymh[0] - 8) < 1e-12 and all(b <= a for a, b in zip(ymh, ymh[1:]))
    assert abs(ymh[-1] - 8 / (1 + 8 * 2.0) ** 2) < 1e-6
    assert read_checkpoint(tmp_path / "out" / "checkpoint.ymhf").t == recs[-1]["t"]


def test_cli_determinism(tmp_path):
    outs = []
    for k in range(2):
        cfg = _cfg(tmp_path, bundle={"seed": 5}, flow={"t_max": 0.05},
                   output={"dir": str(tmp_path / f"o{k}")})
        assert cli.main(["flow", "--config", str(cfg), "--quiet"]) == 0
        outs.append(((tmp_path / f"o{k}" / "diagnostics.jsonl").read_bytes(),
                     (tmp_path / f"o{k}" / "checkpoint.ymhf").read_bytes()))
    assert outs[0] == outs[1]


def test_cli_seed_override(tmp_path):
    cfg = _cfg(tmp_path, flow={"t_max": 0.01})
    blobs = []
    for seed in ("1", "2"):
        out = tmp_path / f"s{seed}"
        assert cli.main(["flow", "--config", str(cfg), "--seed", seed, "--out", str(out), "--quiet"]) == 0
        blobs.append((out / "diagnostics.jsonl").read_text().splitlines()[0])
    assert blobs[0] != blobs[1]
    assert cli.main(["flow", "--config", str(cfg), "--seed", "-1"]) == 2


def test_cli_resume_appends(tmp_path):
    cfg = _cfg(tmp_path, flow={"t_max": 0.05})
    assert cli.main(["flow", "--config", str(cfg), "--quiet"]) == 0
    diag = tmp_path / "out" / "diagnostics.jsonl"
    n0 = len(read_diagnostics(diag))
    ck = tmp_path / "first.ymhf"
    ck.write_bytes((tmp_path / "out" / "checkpoint.ymhf").read_bytes())
    cfg2 = _cfg(tmp_path, flow={"t_max": 0.1})
    assert cli.main(["resume", "--config", str(cfg2), "--checkpoint", str(ck), "--quiet"]) == 0
    recs = read_diagnostics(diag)
    assert len(recs) > n0
    ts = [r["t"] for r in recs]
    assert ts == sorted(ts) and abs(ts[-1] - 0.1) < 1e-12
    assert recs[n0]["t"] == recs[n0 - 1]["t"]  # the resumed run restates its starting record


def test_cli_resume_requires_checkpoint(tmp_path):
    assert cli.main(["resume", "--config", str(_cfg(tmp_path))]) == 2


def test_cli_config_errors(tmp_path, capsys):
    bad = _write(tmp_path, {"geometry": {"grid": [7, 8]}}, "bad.json")
    assert cli.main(["flow", "--config", str(bad)]) == 2
    assert "bad.json:" in capsys.readouterr().err
    assert cli.main(["flow", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["flow"]) == 2
    assert cli.main(["dance", "--config", str(bad)]) == 2
    junk = tmp_path / "junk.ymhf"
    junk.write_bytes(b"nope")
    assert cli.main(["eigen", "--config", str(_cfg(tmp_path)), "--checkpoint", str(junk)]) == 2


def test_cli_rejects_nonpositive_tolerances(tmp_path, capsys):
    cfg = _cfg(tmp_path, flow={"drift_budget": -1.0})
    assert cli.main(["flow", "--config", str(cfg), "--quiet"]) == 2
    assert "flow.drift_budget must be positive" in capsys.readouterr().err


def test_cli_step_failure_is_exit_3(tmp_path, monkeypatch):
    from higgslab import flow

    def boom(*a, **k):
        raise flow.StepFailure("forced")
    monkeypatch.setattr(flow, "flow_step", boom)
    cfg = _cfg(tmp_path, flow={"t_max": 0.1})
    assert cli.main(["flow", "--config", str(cfg), "--quiet"]) == 3
    # the last good state is still checkpointed
    assert read_checkpoint(tmp_path / "out" / "checkpoint.ymhf").t == 0.0


def test_cli_eigen_default(tmp_path):
    cfg = _cfg(tmp_path, geometry={"grid": [8, 8]})
    assert cli.main(["eigen", "--config", str(cfg), "--quiet"]) == 0
    res = json.loads((tmp_path / "out" / "eigen.json").read_text())
    assert res["lambda_hat"] < 1e-12 and res["v"] is None


def test_cli_eigen_sweep(tmp_path, capsys):
    cfg = _cfg(tmp_path, geometry={"grid": [8, 8]},
               eigen={"sweep_amplitudes": [0.01, 0.02], "sweep_seeds": [0, 1], "calibration_seeds": [9]})
    code = cli.main(["eigen", "--config", str(cfg)])
    res = json.loads((tmp_path / "out" / "eigen.json").read_text())
    rows = res["continuity"]["rows"]
    assert len(rows) == 4 and code == (0 if all(r["passed"] for r in rows) else 1)
    assert capsys.readouterr().out.count("|a| =") == 4


def test_cli_eigen_after_converged_flow(tmp_path):
    cfg = _cfg(tmp_path, flow={"t_max": 50.0, "target_residual": 1e-4, "dt_max": 0.5})
    assert cli.main(["flow", "--config", str(cfg), "--quiet"]) == 0
    ck = tmp_path / "out" / "checkpoint.ymhf"
    assert cli.main(["eigen", "--config", str(cfg), "--checkpoint", str(ck), "--quiet"]) == 0
    assert json.loads((tmp_path / "out" / "eigen.json").read_text())["lambda_hat"] < 1e-3


def test_cli_verify_suite(tmp_path, capsys):
    cfg = _cfg(tmp_path, geometry={"grid": [32, 32]},
               verify={"checks": ["weitzenbock", "energy", "chern", "cutoff", "cross_check"], "samples": 2})
    assert cli.main(["verify", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out
    cut = [float(line.split("sum=")[1]) for line in out.splitlines() if "cutoff N=" in line]
    assert len(cut) == 3


def test_cli_verify_corrupted_theta(tmp_path, capsys):
    cfg = _cfg(tmp_path, geometry={"grid": [32, 32]},
               verify={"checks": ["weitzenbock"], "samples": 1, "corrupt_theta": True})
    assert cli.main(["verify", "--config", str(cfg)]) == 1
    out = capsys.readouterr().out
    assert "warning: not a Higgs pair" in out and "FAIL weitzenbock" in out


def test_cli_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = _cfg(tmp_path, bundle={"model": "zero"})
    assert cli.main(["flow", "--config", str(cfg), "--out", str(blocker / "sub")]) == 2

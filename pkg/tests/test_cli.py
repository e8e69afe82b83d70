"""End-to-end through the command-line interface."""

import json

import numpy as np
import pytest

from vpwm.audio import read_wav
from vpwm.cli import main

REGISTRY = {
    "sample_rate": 24000,
    "preamble_id": None,
    "appliances": [
        {"id": 42, "symbol_length": 1.0, "delta": 0.02,
         "bits_per_interval": 3, "frame_symbols": 4},
    ],
}


@pytest.fixture
def registry_file(tmp_path):
    path = tmp_path / "registry.json"
    path.write_text(json.dumps(REGISTRY))
    return str(path)


def test_gen_writes_wav(tmp_path, capsys):
    out = tmp_path / "sym.wav"
    assert main(["gen", "--id", "42", "--out", str(out)]) == 0
    buf = read_wav(out)
    assert buf.sample_rate == 24000
    assert set(np.unique(buf.samples)) == {-1.0, 1.0}
    assert "id=42" in capsys.readouterr().out


def test_gen_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a.wav", tmp_path / "b.wav"
    main(["gen", "--id", "7", "--out", str(a)])
    main(["gen", "--id", "7", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_tx_rx_roundtrip(tmp_path, registry_file, capsys):
    wav = tmp_path / "frame.wav"
    assert main(["tx", "--id", "42", "--bits", "100011111", "--out", str(wav)]) == 0
    capsys.readouterr()
    assert main(["rx", "--registry", registry_file, "--input", str(wav)]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    hb_lines = [l for l in lines if l.startswith("HB,42,")]
    msg_lines = [l for l in lines if l.startswith("MSG,42,")]
    assert len(hb_lines) == 4
    assert len(msg_lines) == 1
    assert msg_lines[0].split(",")[3] == "11f"


def test_tx_rx_with_noise_and_pcm16(tmp_path, registry_file, capsys):
    wav = tmp_path / "noisy.wav"
    main(["tx", "--id", "42", "--bits", "0x0ff", "--snr-db", "-10",
          "--seed", "3", "--encoding", "pcm16", "--out", str(wav)])
    capsys.readouterr()
    main(["rx", "--registry", registry_file, "--input", str(wav)])
    lines = capsys.readouterr().out.strip().split("\n")
    msg_lines = [l for l in lines if l.startswith("MSG,42,")]
    assert msg_lines and msg_lines[0].split(",")[3] == "0ff"


def test_rx_from_stdin(tmp_path, registry_file, capsys, monkeypatch):
    wav = tmp_path / "frame.wav"
    main(["tx", "--id", "42", "--bits", "101010101", "--out", str(wav)])
    raw = read_wav(wav).samples.astype(np.float32).tobytes()

    class FakeStdin:
        buffer = __import__("io").BytesIO(raw)

    capsys.readouterr()
    monkeypatch.setattr("sys.stdin", FakeStdin)
    main(["rx", "--registry", registry_file, "--input", "-"])
    lines = capsys.readouterr().out.strip().split("\n")
    msg = [l for l in lines if l.startswith("MSG,42,")]
    assert msg and msg[0].split(",")[3] == "155"


def test_rate_table(capsys):
    main(["rate", "--symbol-length", "1.0", "--delta", "0.02",
          "--frame-symbols", "4", "--bits-per-interval", "3"])
    out = capsys.readouterr().out.strip().split("\n")
    assert out[0].startswith("symbol_length_s")
    cells = out[1].split(",")
    assert float(cells[-1]) == pytest.approx(14.63, abs=0.005)
    assert float(cells[-2]) == pytest.approx(1.33)


def test_rate_sweep_reports_optimum(capsys):
    main(["rate", "--symbol-length", "0.5", "--delta", "0.02"])
    out = capsys.readouterr().out
    assert "# optimal: N=2" in out
    assert "28.0561" in out


def test_bench_cli_writes_reports(tmp_path, capsys):
    out = tmp_path / "report.csv"
    code = main(["bench", "comfort-psd", "--trials", "1", "--seed", "2",
                 "--out", str(out), "--json"])
    assert code == 0
    assert out.exists()
    text = out.read_text()
    assert text.startswith("experiment,")
    jpath = tmp_path / "report.json"
    assert jpath.exists()
    payload = json.loads(jpath.read_text())
    assert payload["experiment"] == "comfort_psd"
    assert "loopback smoke gate passed" in capsys.readouterr().out


def test_bench_cli_stdout_and_no_smoke(capsys):
    code = main(["bench", "comfort-psd", "--trials", "1", "--no-smoke"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("experiment,")
    assert "smoke" not in out


def test_preamble_gated_rx(tmp_path, capsys):
    reg = dict(REGISTRY)
    reg["preamble_id"] = 999
    reg["appliances"] = REGISTRY["appliances"] + [
        {"id": 999, "symbol_length": 1.0}]
    path = tmp_path / "gated.json"
    path.write_text(json.dumps(reg))
    wav = tmp_path / "gated.wav"
    main(["tx", "--id", "42", "--bits", "110000011", "--preamble-id", "999",
          "--out", str(wav)])
    capsys.readouterr()
    main(["rx", "--registry", str(path), "--input", str(wav), "--gate"])
    lines = capsys.readouterr().out.strip().split("\n")
    msg = [l for l in lines if l.startswith("MSG,42,")]
    assert msg and msg[0].split(",")[3] == "183"
    assert any(l.startswith("HB,999,") for l in lines)

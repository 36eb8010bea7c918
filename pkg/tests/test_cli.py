import json

import pytest

from hypjulia.cli import main
from hypjulia.render import parse_pgm


@pytest.fixture(scope="module")
def cert_file(z2, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "z2.json"
    z2[1].save(path)
    return path


def test_certify_and_render(tmp_path, cert_file):
    out = tmp_path / "c.json"
    assert main(["certify", "--c", "-1,0", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["format"] == "hypjulia-certificate/1"
    img = tmp_path / "j.pgm"
    ver = tmp_path / "v.json"
    rc = main(["render", "--poly", "z^2", "--cert", str(cert_file), "--N", "5", "--out", str(img),
               "--verdicts", str(ver), "--window", "-1.5,-1.5,1.5,1.5", "--jobs", "2"])
    assert rc == 0
    bits = parse_pgm(img.read_bytes())
    assert bits.shape == (385, 385) and bits.any()
    assert json.loads(ver.read_text())["N"] == 5


def test_render_errors(tmp_path, cert_file):
    assert main(["render", "--poly", "z^2", "--N", "5", "--out", str(tmp_path / "x.pgm")]) == 1
    assert main(["render", "--poly", "z^2-1", "--cert", str(cert_file), "--N", "5",
                 "--out", str(tmp_path / "x.pgm")]) == 1
    assert main(["nonsense"]) == 1
    assert main(["render", "--N", "five"]) == 1


def test_classify(tmp_path, cert_file, capsys):
    out = tmp_path / "p.json"
    assert main(["classify", "--poly", "z^2", "--cert", str(cert_file), "--N", "6", "--point", "1,0",
                 "--out", str(out)]) == 0
    v = json.loads(out.read_text())
    assert v["bit"] == 1 and set(v) >= {"bit", "halt_step", "k_used", "w_final"}
    assert main(["classify", "--poly", "z^2", "--cert", str(cert_file), "--N", "6", "--point", "1/3,0"]) == 1


def test_verify(tmp_path, cert_file):
    out = tmp_path / "r.json"
    assert main(["verify", "--poly", "z^2", "--cert", str(cert_file), "--samples", "50", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert all(rep["checks"].values())


def test_semidecide_exit_codes(tmp_path):
    out = tmp_path / "d.json"
    assert main(["semidecide", "--c", "-1,0", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["status"] == "Halted"
    assert main(["semidecide", "--c", "0.25", "--budget", "level=9,nu=4,seconds=5"]) == 2


def test_locus(tmp_path):
    out = tmp_path / "balls.jsonl"
    assert main(["locus", "--region", "0,0,1/8", "--max-stage", "0", "--seconds", "60", "--out", str(out)]) == 0
    lines = [json.loads(s) for s in out.read_text().splitlines()]
    assert lines and all(b["format"] == "hypjulia-paramball/1" for b in lines)

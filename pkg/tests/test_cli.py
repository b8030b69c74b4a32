"""Command-line surface: exit codes and artifact outputs."""

import os

import pytest

from cyberlogic import cli, scenarios


def run(argv):
    return cli.main(argv)


def test_keygen_writes_key_file(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CYBERLOGIC_KEYDIR", str(tmp_path))
    assert run(["keygen", "Kay", "--seed", "7"]) == 0
    assert (tmp_path / "Kay.key").exists()
    out = capsys.readouterr().out
    assert "fingerprint" in out


def test_scenario_writes_checking_certificate(tmp_path, capsys):
    cert = tmp_path / "hospital.cert"
    assert run(["scenario", "hospital", "--seed", "0", "--out", str(cert)]) == 0
    assert cert.exists()
    out = capsys.readouterr().out
    assert "ok" in out and "spine" in out


def test_unknown_scenario_is_usage_error(capsys):
    assert run(["scenario", "nonesuch"]) == 2


def test_check_ok_and_tamper_nok(tmp_path, capsys):
    cert = tmp_path / "h.cert"
    assert run(["scenario", "hospital", "--out", str(cert)]) == 0

    pol_dir = tmp_path / "policies"
    pol_dir.mkdir()
    world = scenarios.run_hospital(0).world
    for owner, text in (("A", scenarios.HOSPITAL_A), ("B", scenarios.HOSPITAL_B),
                        ("C", scenarios.HOSPITAL_C)):
        (pol_dir / owner).write_text(text)
    directory = tmp_path / "dir.txt"
    world.directory.save(str(directory))

    capsys.readouterr()
    assert run(["check", str(cert), "--policies", str(pol_dir),
                "--directory", str(directory),
                "--formula", "A says readMedRec(Alice, Peter)"]) == 0
    assert capsys.readouterr().out.startswith("ok")

    bad = tmp_path / "bad.cert"
    assert run(["tamper", str(cert), "--bit", "999", "--out", str(bad)]) == 0
    capsys.readouterr()
    assert run(["check", str(bad), "--policies", str(pol_dir),
                "--directory", str(directory)]) == 1
    assert capsys.readouterr().out.startswith("nok")


def test_check_wrong_formula_rejected(tmp_path, capsys):
    cert = tmp_path / "h.cert"
    assert run(["scenario", "hospital", "--out", str(cert)]) == 0
    pol_dir = tmp_path / "policies"
    pol_dir.mkdir()
    (pol_dir / "A").write_text(scenarios.HOSPITAL_A)
    capsys.readouterr()
    assert run(["check", str(cert), "--policies", str(pol_dir),
                "--formula", "A says isHospital(C)"]) == 1


def test_query_local_policy(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CYBERLOGIC_KEYDIR", str(tmp_path))
    pol = tmp_path / "Q"
    pol.write_text("pred p(Principal).\nprincipal Q.\nq1: p(Q).\n")
    cert = tmp_path / "q.cert"
    monkeypatch.chdir(tmp_path)
    assert run(["query", "p(x)", "--policy", str(pol),
                "--out", str(cert)]) == 0
    assert cert.exists()
    out = capsys.readouterr().out
    assert "x = Q" in out


def test_query_without_proof_fails(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CYBERLOGIC_KEYDIR", str(tmp_path))
    pol = tmp_path / "Q"
    pol.write_text("pred p(Principal).\nprincipal Q, R.\n")
    monkeypatch.chdir(tmp_path)
    assert run(["query", "p(Q)", "--policy", str(pol)]) == 1


def test_revocation_use_before_and_after_cutoff(capsys):
    assert run(["scenario", "revocation", "--revoke-at", "10",
                "--use-at", "3"]) == 0
    assert "granted" in capsys.readouterr().out
    assert run(["scenario", "revocation", "--revoke-at", "10",
                "--use-at", "12"]) == 1
    assert "refused" in capsys.readouterr().out


def test_registry_lists_digests(tmp_path, capsys):
    pol_dir = tmp_path / "policies"
    pol_dir.mkdir()
    (pol_dir / "A").write_text(scenarios.HOSPITAL_A)
    (pol_dir / "B").write_text(scenarios.HOSPITAL_B)
    assert run(["registry", "--policies", str(pol_dir)]) == 0
    out = capsys.readouterr().out
    assert "chain ok" in out
    assert out.count("\n") >= 3

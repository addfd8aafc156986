import subprocess
import sys

import pytest

from conftest import CORPUS

PKG = str(CORPUS.parent / "src")


def run(*args, color="never"):
    return subprocess.run(
        [sys.executable, "-m", "privcalc.cli", *args],
        capture_output=True, text=True,
        env={"PYTHONPATH": PKG, "PRIVCALC_COLOR": color, "PATH": "/usr/bin:/bin"},
        cwd=str(CORPUS.parent))


class TestExitCodes:
    def test_verify_satisfied(self):
        r = run("verify", "corpus/hospital.pc", "--policy", "corpus/hospital.ppo",
                "--env", "corpus/hospital.env")
        assert r.returncode == 0 and "satisfied" in r.stdout

    def test_verify_violation(self):
        r = run("verify", "corpus/hospital_nurse_read.pc",
                "--policy", "corpus/hospital.ppo", "--env", "corpus/hospital.env")
        assert r.returncode == 1
        assert "read" in r.stdout and "Nurse" in r.stdout

    def test_policy_wf_ok(self):
        for name in ("hospital", "etp_central", "etp_decentral", "speedlimit"):
            r = run("policy-wf", f"corpus/{name}.ppo")
            assert r.returncode == 0

    def test_policy_wf_cycle(self, tmp_path):
        bad = tmp_path / "cyc.ppo"
        bad.write_text("private t >> G {} [ G {} ];")
        r = run("policy-wf", str(bad))
        assert r.returncode == 1 and "condition 2" in r.stdout

    def test_usage_error(self):
        r = run("frobnicate")
        assert r.returncode == 2

    def test_parse_error(self, tmp_path):
        bad = tmp_path / "bad.pc"
        bad.write_text("G[ a!< ]")
        r = run("typecheck", str(bad))
        assert r.returncode == 2

    def test_scan_clean(self):
        r = run("scan", "corpus/etp_central.pc", "--policy", "corpus/etp_central.ppo",
                "--env", "corpus/etp_central.env", "--depth", "4")
        assert r.returncode == 0 and "ok" in r.stdout

    def test_errors_finding(self):
        r = run("errors", "corpus/hospital_nurse_read.pc",
                "--policy", "corpus/hospital.ppo", "--env", "corpus/hospital.env")
        assert r.returncode == 1

    def test_encode_process(self, tmp_path):
        f = tmp_path / "st.pc"
        f.write_text("store r {id # c} | r?(x # y). 0")
        r = run("encode", str(f))
        assert r.returncode == 0 and "<| rd" in r.stdout


class TestDeterminism:
    @pytest.mark.parametrize("name", ["hospital", "etp_central",
                                      "etp_decentral", "speedlimit"])
    def test_typecheck_byte_identical(self, name):
        a = run("typecheck", f"corpus/{name}.pc", "--env", f"corpus/{name}.env",
                "--format", "records")
        b = run("typecheck", f"corpus/{name}.pc", "--env", f"corpus/{name}.env",
                "--format", "records")
        assert a.returncode == b.returncode == 0
        assert a.stdout == b.stdout

    def test_verify_records_stable(self):
        args = ("verify", "corpus/hospital_nurse_read.pc", "--policy",
                "corpus/hospital.ppo", "--env", "corpus/hospital.env",
                "--format", "records")
        assert run(*args).stdout == run(*args).stdout

    def test_simulate_records_stable(self):
        args = ("simulate", "corpus/speedlimit.pc", "--env",
                "corpus/speedlimit.env", "--depth", "3")
        assert run(*args).stdout == run(*args).stdout

    def test_dot_output(self):
        r = run("simulate", "corpus/etp_central.pc", "--env",
                "corpus/etp_central.env", "--depth", "2", "--format", "dot")
        assert r.returncode == 0 and r.stdout.startswith("digraph")


def test_id_direction_flag_flips_identify():
    a = run("typecheck", "corpus/lab.pc", "--env", "corpus/hospital.env")
    b = run("typecheck", "corpus/lab.pc", "--env", "corpus/hospital.env",
            "--id-direction", "known")
    assert "type=crime" in a.stdout and "identify patient_data" in a.stdout
    assert "identify crime" in b.stdout


def test_strict_coverage_flag():
    r = run("verify", "corpus/etp_central.pc", "--policy", "corpus/etp_central.ppo",
            "--env", "corpus/etp_central.env", "--strict-coverage")
    assert r.returncode == 1 and "fee" in r.stdout


def test_color_env_toggle():
    r = run("verify", "corpus/hospital.pc", "--policy", "corpus/hospital.ppo",
            "--env", "corpus/hospital.env", color="always")
    assert "\x1b[32m" in r.stdout
    r2 = run("verify", "corpus/hospital.pc", "--policy", "corpus/hospital.ppo",
             "--env", "corpus/hospital.env", color="never")
    assert "\x1b[" not in r2.stdout

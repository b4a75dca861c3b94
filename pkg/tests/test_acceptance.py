"""Acceptance suite at full size; each criterion prints one PASS/FAIL line."""

import json

import pytest

from shrinklab.acceptance import CRITERIA, run_criterion
from shrinklab.cli import EXIT_CONFIG, main


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = run_criterion(number, seed=0, quick=False)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.value_ok, result.line()
    assert result.runtime_ok, f"runtime {result.runtime:.1f} s over budget {result.budget} s"


def test_quick_acceptance_through_the_cli(tmp_path, capsys):
    code = main(["acceptance", "--quick", "--out", str(tmp_path)])
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("[")]
    assert len(lines) == len(CRITERIA)
    report = json.loads((tmp_path / "report.json").read_text())
    results = report["results"]["criteria"]
    assert [c["number"] for c in results] == sorted(CRITERIA)
    assert code == (0 if report["results"]["all_passed"] else 1)
    assert code != EXIT_CONFIG

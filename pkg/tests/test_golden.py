"""Frozen seed-0 query transcripts for every shipped scenario."""

import pathlib

import pytest

from cyberlogic import scenarios

GOLDEN = pathlib.Path(__file__).parent / "golden"


@pytest.mark.parametrize("name", sorted(scenarios.SCENARIOS))
def test_transcript_matches_golden_file(name):
    r = scenarios.SCENARIOS[name](0)
    assert r.ok
    got = ("\n".join(r.transcript) + "\n" if r.transcript else "").encode()
    want = (GOLDEN / f"{name}.transcript").read_bytes()
    assert got == want

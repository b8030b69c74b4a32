"""Trusted clock and nonce services, and the checker registry."""

import pytest

from cyberlogic import codec, scenarios
from cyberlogic import evidence as E
from cyberlogic import syntax as S
from cyberlogic.crypto import Directory, verify_attestation
from cyberlogic.services import CheckerEndpoint, Registry, TrustedServices, remote_check


def test_clock_is_monotonic():
    svc = TrustedServices(seed=0, start=1)
    assert svc.now() == 1
    svc.advance(4)
    assert svc.now() == 5
    with pytest.raises(ValueError):
        svc.advance(-1)


def test_time_attestation_verifies():
    svc = TrustedServices(seed=0, start=3)
    d = Directory()
    svc.register_keys(d)
    sa = svc.attest_time()
    got = verify_attestation(d.public_key("T"), sa)
    assert got == S.Attest(S.Const("T", "Principal"), S.Atom("time", (S.Const("3", "Time"),)))


def test_time_receipt_only_before_deadline():
    svc = TrustedServices(seed=0, start=3)
    assert svc.time_receipt(S.Const("5", "Time")) is not None
    assert svc.time_receipt(S.Const("3", "Time")) is None
    assert svc.time_receipt(S.Const("2", "Time")) is None


def test_nonces_unique_over_ten_thousand():
    svc = TrustedServices(seed=0)
    names = [svc.fresh_nonce() for _ in range(10_000)]
    assert len(set(names)) == len(names)
    assert all(n in svc.issued for n in names)


def test_nonce_attestation_only_for_issued_values():
    svc = TrustedServices(seed=0)
    d = Directory()
    svc.register_keys(d)
    n = svc.fresh_nonce()
    atom = S.Atom("nonce", (S.Const(n, "Nonce"),))
    (sa,) = svc.attest_candidates("N", atom)
    assert verify_attestation(d.public_key("N"), sa) is not None
    unknown = S.Atom("nonce", (S.Const("n_unseen", "Nonce"),))
    assert svc.attest_candidates("N", unknown) == []


def test_registry_chain_appends_and_verifies():
    reg = Registry()
    for i in range(5):
        ep = CheckerEndpoint(f"ep{i}", [])
        reg.register(bytes([i]) * 32, ep)
    assert reg.verify_chain()
    assert len(reg.entries) == 5
    # entries are hash-chained: replacing one breaks the chain
    from cyberlogic.services import RegistryEntry

    broken = list(reg.entries)
    broken[2] = RegistryEntry(2, b"\0" * 32, broken[2].digest, broken[2].endpoint)
    reg.entries = broken
    assert not reg.verify_chain()


def test_registry_returns_newest_endpoint_but_keeps_stale_digests():
    reg = Registry()
    ep_old = CheckerEndpoint("old", [])
    ep_new = CheckerEndpoint("new", [])
    reg.register(b"\x01" * 32, ep_old)
    reg.register(b"\x02" * 32, ep_new)  # policy updated, digest changed
    assert reg.endpoint_for(b"\x02" * 32) is ep_new
    assert reg.endpoint_for(b"\x01" * 32) is ep_old  # stale digest still resolves
    assert reg.endpoint_for(b"\x03" * 32) is None


def _registry_for(world):
    reg = Registry()
    for owner, pol in world.policies.items():
        ep = CheckerEndpoint(owner, [pol], world.directory, reg)
        reg.register(pol.digest, ep)
    return reg


def test_remote_check_matches_local_check():
    for run in (scenarios.run_hospital, scenarios.run_delegation, scenarios.run_ns):
        r = run(0)
        local = E.check_certificate(r.certificate, r.world.policy_map(), r.world.directory)
        remote = remote_check(_registry_for(r.world), r.certificate)
        assert bool(remote) == bool(local) == True  # noqa: E712


def test_remote_check_frames_never_contain_policy_bytes():
    r = scenarios.run_hospital(0)
    frames = []
    verdict = remote_check(_registry_for(r.world), r.certificate, frame_log=frames)
    assert verdict
    assert frames
    policy_blobs = [codec.encode_policy(p) for p in r.world.policies.values()]
    clause_bodies = [p.source.encode() for p in r.world.policies.values() if p.source]
    for frame in frames:
        for blob in policy_blobs:
            assert blob not in frame
        for body in clause_bodies:
            assert body not in frame


def test_remote_check_rejects_tampered_certificate():
    r = scenarios.run_hospital(0)
    cert = r.certificate
    bad = E.Certificate(
        S.Atom("time", (S.Const("1", "Time"),)),  # swapped root formula
        cert.root_evidence,
        dict(cert.store),
        cert.policy_digests,
        cert.directory,
        cert.created_at,
    )
    assert not remote_check(_registry_for(r.world), bad)


def test_stale_digest_certificate_verifies_after_policy_update():
    r = scenarios.run_hospital(0)
    reg = _registry_for(r.world)
    # A later re-registration with a changed policy must not break
    # certificates pinned to the old digest.
    from cyberlogic import parser

    updated = parser.parse_policy(
        scenarios.HOSPITAL_A + "a5: A says isHospital(A).\n", "A"
    )
    old = r.world.policies["A"]
    # the owner's endpoint keeps old versions so stale pins stay checkable
    reg.register(updated.digest, CheckerEndpoint("A", [updated, old], r.world.directory, reg))
    assert reg.verify_chain()
    assert remote_check(reg, r.certificate)

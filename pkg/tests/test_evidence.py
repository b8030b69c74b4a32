"""The independent checker: positives, provenance, tamper completeness,
and scaling."""

import time

import pytest

from cyberlogic import codec, parser, scenarios
from cyberlogic import evidence as E
from cyberlogic import syntax as S
from cyberlogic.errors import CodecError


def _hospital():
    return scenarios.run_hospital(0)


def _ns():
    return scenarios.run_ns(0)


def test_scenario_certificates_check():
    for run in (scenarios.run_hospital, scenarios.run_delegation, scenarios.run_ns,
                scenarios.run_timed, scenarios.run_revocation):
        r = run(0)
        assert r.ok, r.name
        assert E.check_certificate(r.certificate, r.world.policy_map(), r.world.directory)


def test_unit_proves_top_only():
    assert E.check({}, E.HypothesisEnv(), E.Unit(), S.TOP)
    res = E.check({}, E.HypothesisEnv(), E.Unit(), S.Atom("p", ()))
    assert not res and res.reason


def test_pair_checks_each_side_with_path():
    phi = S.And(S.TOP, S.Atom("p", ()))
    res = E.check({}, E.HypothesisEnv(), E.PairEv(E.Unit(), E.Unit()), phi)
    assert not res
    assert res.path  # pinpoints the failing conjunct


def test_inl_inr_select_disjunct():
    phi = S.Or(S.Atom("p", ()), S.TOP)
    assert E.check({}, E.HypothesisEnv(), E.Inr(E.Unit()), phi)
    assert not E.check({}, E.HypothesisEnv(), E.Inl(E.Unit()), phi)


def test_witness_substitutes_term():
    x = S.Var("x", "Time")
    phi = S.Exists(x, S.Atom("<", (S.Const("1", "Time"), x)))
    good = E.Witness(S.Const("5", "Time"),
                     E.TheoryHole("<", (S.Const("1", "Time"), S.Const("5", "Time"))))
    assert E.check({}, E.HypothesisEnv(), good, phi)
    bad = E.Witness(S.Const("0", "Time"),
                    E.TheoryHole("<", (S.Const("1", "Time"), S.Const("0", "Time"))))
    assert not E.check({}, E.HypothesisEnv(), bad, phi)


def test_hypothesis_lookup():
    clause = S.Clause("h1", (), (), S.Atom("p", ()))
    env = E.HypothesisEnv().extend([clause])
    assert E.check({}, env, E.Hyp("h1"), S.Atom("p", ()))
    assert not E.check({}, env, E.Hyp("h2"), S.Atom("p", ()))
    assert not E.check({}, env, E.Hyp("h1"), S.Atom("q", ()))


def test_abstraction_eigenvariable_must_be_fresh():
    x = S.Var("x", "Thing")
    phi = S.Forall(x, S.Atom("=", (x, x)))
    ok = E.Abstraction("e9", E.TheoryHole("=", (S.Const("e9", "Thing"), S.Const("e9", "Thing"))))
    assert E.check({}, E.HypothesisEnv(), ok, phi)
    # reusing a constant that already occurs in the formula is unsound
    phi2 = S.Forall(x, S.Atom("=", (x, S.Const("e9", "Thing"))))
    bad = E.Abstraction("e9", E.TheoryHole("=", (S.Const("e9", "Thing"), S.Const("e9", "Thing"))))
    assert not E.check({}, E.HypothesisEnv(), bad, phi2)


def test_knows_provenance_must_stay_inside_the_group():
    r = _hospital()
    cert = r.certificate
    b_const = S.Const("B", "Principal")
    wrapped = E.KnowsWrap(frozenset({b_const}), cert.root_evidence)
    phi = S.Knows(frozenset({b_const}), cert.root_formula)
    res = E.check(r.world.policy_map(), E.HypothesisEnv(), wrapped, phi,
                  directory=r.world.directory, store=cert.store)
    assert not res  # the proof uses A's and C's clauses too
    assert "outside the restriction" in (res.reason or "")


def test_extract_provenance_owners():
    r = _hospital()
    owners = E.extract_provenance(
        r.certificate.root_evidence, r.world.policy_map(), r.certificate.store
    )
    assert owners == {"A", "B", "C"}
    assert E.extract_provenance(E.Unit()) == set()


def test_dangling_ref_rejected():
    res = E.check({}, E.HypothesisEnv(), E.Ref(b"\x00" * 32), S.TOP)
    assert not res and "ref" in res.reason.lower()


# ---------------------------------------------------------------------------
# Tamper suite


def _tree_addresses(ev, store, path=()):
    """All (path, node) pairs, following refs through the store."""
    if isinstance(ev, E.Ref):
        target = store.get(ev.digest)
        if target is not None:
            yield from _tree_addresses(target, store, path)
        return
    yield path, ev
    if isinstance(ev, E.PairEv):
        yield from _tree_addresses(ev.left, store, path + ("l",))
        yield from _tree_addresses(ev.right, store, path + ("r",))
    elif isinstance(ev, (E.Inl, E.Inr, E.Witness, E.Abstraction, E.KnowsWrap)):
        yield from _tree_addresses(ev.body, store, path + ("b",))
    elif isinstance(ev, E.ClauseApp):
        for i, p in enumerate(ev.premises):
            yield from _tree_addresses(p, store, path + (i,))


def _replace(ev, store, path, new):
    if isinstance(ev, E.Ref):
        target = store[ev.digest]
        return _replace(target, store, path, new)
    if not path:
        return new
    step, rest = path[0], path[1:]
    if isinstance(ev, E.PairEv):
        if step == "l":
            return E.PairEv(_replace(ev.left, store, rest, new), ev.right)
        return E.PairEv(ev.left, _replace(ev.right, store, rest, new))
    if isinstance(ev, (E.Inl, E.Inr)):
        return type(ev)(_replace(ev.body, store, rest, new))
    if isinstance(ev, E.Witness):
        return E.Witness(ev.term, _replace(ev.body, store, rest, new))
    if isinstance(ev, E.Abstraction):
        return E.Abstraction(ev.var, _replace(ev.body, store, rest, new))
    if isinstance(ev, E.KnowsWrap):
        return E.KnowsWrap(ev.principals, _replace(ev.body, store, rest, new))
    if isinstance(ev, E.ClauseApp):
        premises = list(ev.premises)
        premises[step] = _replace(premises[step], store, rest, new)
        return E.ClauseApp(ev.label, ev.policy_digest, ev.args, tuple(premises))
    raise AssertionError(f"bad path {path!r} at {type(ev).__name__}")


def _flip_str_bit(text, bit):
    raw = bytearray(text.encode())
    raw[bit // 8] ^= 1 << (bit % 8)
    try:
        return raw.decode()
    except UnicodeDecodeError:
        return None


def _flip_const_bit(t, bit):
    if isinstance(t, S.Const):
        name = _flip_str_bit(t.name, bit)
        return None if name is None else S.Const(name, t.sort)
    return None


def _mutations(ev, store):
    """Yield single-bit structural mutations: signature bits, clause-label
    bits, term-arg bits."""
    for path, node in _tree_addresses(ev, store):
        if isinstance(node, E.AttLeaf):
            sa = node.attestation
            for bit in range(len(sa.signature) * 8):
                sig = bytearray(sa.signature)
                sig[bit // 8] ^= 1 << (bit % 8)
                bad = type(sa)(sa.principal, sa.payload, bytes(sig), sa.issued_at, sa.session_nonce)
                yield f"sig[{bit}]@{path}", _replace(ev, store, path, E.AttLeaf(bad))
        elif isinstance(node, E.ClauseApp):
            for bit in range(len(node.label.encode()) * 8):
                label = _flip_str_bit(node.label, bit)
                if label is None or label == node.label:
                    continue
                bad = E.ClauseApp(label, node.policy_digest, node.args, node.premises)
                yield f"label[{bit}]@{path}", _replace(ev, store, path, bad)
            for i, arg in enumerate(node.args):
                if not isinstance(arg, S.Const):
                    continue
                for bit in range(len(arg.name.encode()) * 8):
                    mutated = _flip_const_bit(arg, bit)
                    if mutated is None or mutated == arg:
                        continue
                    args = list(node.args)
                    args[i] = mutated
                    bad = E.ClauseApp(node.label, node.policy_digest, tuple(args), node.premises)
                    yield f"arg{i}[{bit}]@{path}", _replace(ev, store, path, bad)


@pytest.mark.parametrize("runner", [_hospital, _ns], ids=["hospital", "ns"])
def test_tamper_completeness(runner):
    r = runner()
    cert = r.certificate
    baseline = E.check_certificate(cert, r.world.policy_map(), r.world.directory)
    assert baseline
    total = 0
    for tag, mutated in _mutations(cert.root_evidence, cert.store):
        bad = E.Certificate(cert.root_formula, mutated, dict(cert.store),
                            cert.policy_digests, cert.directory, cert.created_at)
        res = E.check_certificate(bad, r.world.policy_map(), r.world.directory)
        assert not res, f"mutation accepted: {tag}"
        assert res.reason, f"no failure report for {tag}"
        total += 1
    assert total > 100  # the suite actually exercised many mutations


# ---------------------------------------------------------------------------
# Scaling


def _balanced(depth):
    """(formula, evidence) for a complete binary And-tree of `ok` leaves."""
    leaf_phi = S.Atom("=", (S.Const("1", "Time"), S.Const("1", "Time")))
    leaf_ev = E.TheoryHole("=", leaf_phi.args)
    phi, ev = leaf_phi, leaf_ev
    for _ in range(depth):
        phi = S.And(phi, phi)
        ev = E.PairEv(ev, ev)
    return phi, ev


def test_check_scales_roughly_linearly():
    depths = (8, 9, 10)  # 256, 512, 1024 leaves
    rates = []
    for depth in depths:
        phi, ev = _balanced(depth)
        best = None
        for _ in range(7):  # best-of-n damps scheduler and GC noise
            t0 = time.perf_counter()
            assert E.check({}, E.HypothesisEnv(), ev, phi)
            dt = time.perf_counter() - t0
            best = dt if best is None else min(best, dt)
        rates.append(best / 2**depth)
    # cost per evidence node stays flat as the tree doubles
    assert max(rates) <= min(rates) * 1.5


def test_checker_ignores_how_evidence_was_found():
    # the same evidence term checks no matter what order clauses appear in
    r = _hospital()
    cert = r.certificate
    pol_map = r.world.policy_map()
    shuffled = {}
    for d, p in pol_map.items():
        q = S.Policy(p.owner, p.signature, list(reversed(p.clauses)), p.source)
        shuffled[d] = q
    assert E.check_certificate(cert, shuffled, r.world.directory)

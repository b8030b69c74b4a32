"""Node behavior over the simulated and TCP transports: sessions,
broadcasts, duplicate delivery, routing."""

import base64

import pytest

from cyberlogic import codec, parser, scenarios
from cyberlogic import syntax as S
from cyberlogic.node import TcpTransport, decode_frame, encode_frame, serve_node


BCAST_DECLS = """
pred good(Principal).
principal A, B, C.
"""


def _bcast_world(seed=0):
    return scenarios.build_world(
        [("A", BCAST_DECLS), ("B", BCAST_DECLS + "b1: B says good(B).\n"),
         ("C", BCAST_DECLS + "c1: C says good(C).\n")],
        seed,
    )


def test_broadcast_binds_unbound_principal_in_directory_order():
    w = _bcast_world()
    a = w.node("A")
    goal, free = parser.parse_goal("z says good(z)", a.policy.signature)
    answers = list(a.ask(goal, free))
    zs = [ans.bindings[S.Var("z", "Principal")].name for ans in answers]
    assert zs == ["B", "C"]  # registration order drives the broadcast


def test_targeted_dispatch_goes_to_one_peer():
    w = _bcast_world()
    a = w.node("A")
    goal, _ = parser.parse_goal("B says good(B)", a.policy.signature)
    assert a.ask_first(goal) is not None
    queried = {
        to for _, to, data in w.network.frames
        if data and decode_frame(data).get("type") == "QUERY"
    }
    assert queried == {"B"}


def test_no_route_for_unknown_principal():
    w = _bcast_world()
    a = w.node("A")
    sig = a.policy.signature.copy()
    sig.declare_principal("Zed")
    goal, _ = parser.parse_goal("Zed says good(Zed)", sig)
    assert a.ask_first(goal) is None  # declined without crashing


def test_duplicate_query_delivery_is_idempotent():
    w = _bcast_world()
    w.network.fault_rules.append(
        lambda frm, to, frame: "duplicate" if b'"QUERY"' in frame else None
    )
    a = w.node("A")
    goal, free = parser.parse_goal("z says good(z)", a.policy.signature)
    ans = a.ask_first(goal, free)
    assert ans is not None
    assert ans.bindings[S.Var("z", "Principal")].name == "B"
    # the queried peer saw the redelivery and served it from its cache
    assert w.node("B").metrics["duplicates_ignored"] > 0
    assert w.node("B").metrics["queries_handled"] == 1


def test_dropped_frames_fall_through_to_the_next_peer():
    w = _bcast_world()
    w.network.fault_rules.append(lambda frm, to, frame: "drop" if to == "B" else None)
    a = w.node("A")
    goal, free = parser.parse_goal("z says good(z)", a.policy.signature)
    ans = a.ask_first(goal, free)
    assert ans is not None
    assert ans.bindings[S.Var("z", "Principal")].name == "C"


def test_answers_carry_verifiable_countersignature():
    w = _bcast_world()
    a = w.node("A")
    goal, _ = parser.parse_goal("B says good(B)", a.policy.signature)
    assert a.ask_first(goal) is not None
    answer_frames = [
        decode_frame(data)
        for frm, to, data in w.network.frames
        if data and frm == "B" and b'"ANSWER"' in data
    ]
    assert answer_frames and all(f.get("att_b64") for f in answer_frames)


# ---------------------------------------------------------------------------
# Session isolation


def _ns_query_frames(world):
    out = []
    for frm, to, data in world.network.frames:
        if not data:
            continue
        obj = decode_frame(data)
        if obj.get("type") == "QUERY":
            goal = codec.decode_formula(base64.b64decode(obj["goal_b64"]))
            out.append((frm, to, obj, goal))
    return out


def test_session_hypotheses_need_the_token_chain():
    r = scenarios.run_ns(0)
    w = r.world
    a = w.node("A")
    frames = _ns_query_frames(w)
    # the responder's callback: B -> A asking for A's msg2 attestation
    callbacks = [(frm, to, obj, g) for frm, to, obj, g in frames if frm == "B" and to == "A"]
    assert len(callbacks) == 1
    _, _, obj, _ = callbacks[0]
    assert obj["session"], "the callback must carry a session chain"

    # replay with a fresh qid and the original chain: still answerable
    good = dict(obj)
    good["qid"] = "replay-good"
    assert decode_frame(a.handle_frame(encode_frame(good))[0])["type"] == "ANSWER"

    # same query without the token chain: the hypothesis is invisible
    bad = dict(obj)
    bad["qid"] = "replay-bad"
    bad["session"] = []
    assert decode_frame(a.handle_frame(encode_frame(bad))[0])["type"] == "FAIL"

    # or with a token minted for some other session
    other = dict(obj)
    other["qid"] = "replay-other"
    other["session"] = ["A:" + "0" * 32]
    assert decode_frame(a.handle_frame(encode_frame(other))[0])["type"] == "FAIL"


def test_malformed_frame_fails_cleanly():
    w = _bcast_world()
    b = w.node("B")
    (resp,) = b.handle_frame(b"not json\n")
    assert decode_frame(resp)["type"] == "FAIL"
    (resp,) = b.handle_frame(encode_frame({"type": "QUERY", "qid": "x", "goal_b64": "!!"}))
    assert decode_frame(resp)["type"] == "FAIL"


# ---------------------------------------------------------------------------
# TCP transport


def test_tcp_round_trip():
    w = _bcast_world()
    b = w.node("B")
    server, thread, port = serve_node(b, "127.0.0.1", 0)
    try:
        a = w.node("A")
        a.network = TcpTransport({"B": ("127.0.0.1", port)})
        goal, _ = parser.parse_goal("B says good(B)", a.policy.signature)
        ans = a.ask_first(goal)
        assert ans is not None
    finally:
        server.shutdown()
        server.server_close()

"""Principal nodes and the transports between them.

Each node holds one principal's key pair, policy, and session table, and
answers queries from peers.  Queries and answers travel as
newline-delimited JSON frames with base64-encoded canonical payloads, the
same format over the in-process simulator and TCP.  A query carries a
session-token chain: every hypothesis assumed while proving is filed under
the proving node's token, and follow-up queries carrying that token may
use those hypotheses — and only those.

The simulator is synchronous and seeded: a request is served to
completion before the caller resumes, so runs are reproducible
byte-for-byte.
"""

from __future__ import annotations

import base64
import json
import random
import socket
import socketserver
import threading
from dataclasses import dataclass, field

from . import codec
from . import engine
from . import evidence as E
from . import syntax as S
from .crypto import Directory, KeyPair, PrincipalId, verify_attestation
from .errors import RouteError, TransportError

MAX_FRAME = 16 * 1024 * 1024
SERVICE_NAMES = ("T", "N")


def encode_frame(obj: dict) -> bytes:
    data = (json.dumps(obj, sort_keys=True) + "\n").encode()
    if len(data) > MAX_FRAME:
        raise TransportError(f"frame of {len(data)} bytes exceeds the {MAX_FRAME} limit")
    return data


def decode_frame(data: bytes) -> dict:
    if len(data) > MAX_FRAME:
        raise TransportError(f"frame of {len(data)} bytes exceeds the {MAX_FRAME} limit")
    try:
        obj = json.loads(data.decode())
    except Exception as ex:
        raise TransportError(f"malformed frame: {ex}") from ex
    if not isinstance(obj, dict) or "type" not in obj:
        raise TransportError("frame is not a typed object")
    return obj


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode()


def _unb64(text: str) -> bytes:
    return base64.b64decode(text)


# ---------------------------------------------------------------------------
# Transports


class SimNetwork:
    """In-process transport.  Every frame in both directions is appended to
    `frames` as (from, to, bytes).  Fault rules are callables
    (frm, to, frame) -> "drop" | "duplicate" | None, applied to requests."""

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)
        self.nodes: dict[str, "Node"] = {}
        self.frames: list[tuple[str, str, bytes]] = []
        self.fault_rules: list = []

    def register(self, node: "Node"):
        self.nodes[node.name] = node
        node.network = self

    def request(self, frm: str, to: str, frame: bytes) -> list[bytes]:
        if to not in self.nodes:
            raise RouteError(f"no route to {to!r}")
        action = None
        for rule in self.fault_rules:
            action = rule(frm, to, frame)
            if action:
                break
        if action == "drop":
            self.frames.append((frm, to, b""))
            return []
        deliveries = 2 if action == "duplicate" else 1
        responses: list[bytes] = []
        for _ in range(deliveries):
            self.frames.append((frm, to, frame))
            for resp in self.nodes[to].handle_frame(frame):
                self.frames.append((to, frm, resp))
                responses.append(resp)
        return responses

    def query_transcript(self) -> list[str]:
        """Human-readable log of the QUERY goals, in send order."""
        out = []
        for frm, to, data in self.frames:
            if not data:
                continue
            try:
                obj = decode_frame(data)
            except TransportError:
                continue
            if obj.get("type") == "QUERY":
                goal = codec.decode_formula(_unb64(obj["goal_b64"]))
                out.append(f"{frm} -> {to}: {S.fmt_formula(goal)}")
        return out


class TcpTransport:
    """Connect-per-request TCP client speaking the same frames."""

    def __init__(self, addresses: dict):
        self.addresses = dict(addresses)  # name -> (host, port)

    def request(self, frm: str, to: str, frame: bytes) -> list[bytes]:
        if to not in self.addresses:
            raise RouteError(f"no address for {to!r}")
        with socket.create_connection(self.addresses[to], timeout=30) as sock:
            sock.sendall(frame)
            sock.shutdown(socket.SHUT_WR)
            buf = b""
            while True:
                chunk = sock.recv(65536)
                if not chunk:
                    break
                buf += chunk
                if len(buf) > MAX_FRAME:
                    raise TransportError("response exceeds the frame limit")
        return [line + b"\n" for line in buf.split(b"\n") if line]


def serve_node(node: "Node", host: str = "127.0.0.1", port: int = 0):
    """Serve a node over TCP; returns (server, thread, bound_port)."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            data = self.rfile.read(MAX_FRAME + 1)
            for resp in node.handle_frame(data):
                self.wfile.write(resp)

    server = socketserver.ThreadingTCPServer((host, port), Handler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread, server.server_address[1]


# ---------------------------------------------------------------------------
# Nodes


@dataclass
class Session:
    token: str
    clauses: list = field(default_factory=list)  # assumed S.Clause


class Node:
    """One principal: keys, policy, session table, and query handling."""

    def __init__(
        self,
        name: str,
        policy,
        keys: KeyPair,
        identity: PrincipalId,
        directory: Directory,
        services=None,
        common=None,
        network=None,
        seed: int = 0,
        depth: int = engine.DEFAULT_DEPTH,
    ):
        self.name = name
        self.policy = policy
        self.keys = keys
        self.identity = identity
        self.directory = directory
        self.services = services
        self.common = common
        self.network = network
        self.depth = depth
        self.rng = random.Random((seed, name).__repr__())
        self.sessions: dict[str, Session] = {}
        self._qid_seq = 0
        self._answered: dict[str, list[bytes]] = {}
        self.metrics = {
            "queries_handled": 0,
            "answers_sent": 0,
            "failures_sent": 0,
            "dispatches": 0,
            "duplicates_ignored": 0,
        }
        self.trace: list[str] = []

    # -- helpers -------------------------------------------------------------

    def _policies(self) -> dict:
        out = {self.name: self.policy}
        if self.common is not None:
            out["common"] = self.common
        return out

    def policy_digests(self) -> set:
        return {p.digest for p in self._policies().values()}

    def _new_token(self) -> str:
        return f"{self.name}:{self.rng.getrandbits(128):032x}"

    def _new_qid(self) -> str:
        self._qid_seq += 1
        return f"{self.name}-{self._qid_seq}"

    def peers(self) -> list[str]:
        return [
            n
            for n in self.directory.names()
            if n != self.name and n not in SERVICE_NAMES
        ]

    def _env_for_chain(self, chain) -> E.HypothesisEnv:
        env = E.HypothesisEnv()
        for token in chain:
            sess = self.sessions.get(token)
            if sess is not None:
                env = env.extend(sess.clauses)
        return env

    def _prover(self, session: Session, chain) -> engine.Prover:
        return engine.Prover(
            self._policies(),
            owner=self.name,
            signer=(self.keys, self.identity),
            dispatch=self._dispatcher(chain),
            services=self.services,
            trace=self.trace,
            on_hypothesis=session.clauses.extend,
        )

    # -- outbound ------------------------------------------------------------

    def _dispatcher(self, chain):
        def dispatch(target, goal, vars_, budget, restriction):
            self.metrics["dispatches"] += 1
            if budget <= 0 or self.network is None:
                return
            if restriction is not None:
                allowed = {p.name for p in restriction if isinstance(p, S.Const)}
                send_goal = S.Knows(restriction, goal)
            else:
                allowed = None
                send_goal = goal
            # A broadcast goal names its attester by an unbound variable;
            # instantiate it per peer so receivers only ever see their own
            # attestation goals and broadcasts never cascade.
            pvar = None
            if target is None:
                inner = goal.body if isinstance(goal, S.Knows) else goal
                if isinstance(inner, S.Attest) and isinstance(inner.principal, S.Var):
                    pvar = inner.principal
            targets = [target] if target is not None else self.peers()
            for to in targets:
                if to == self.name or to in SERVICE_NAMES:
                    continue
                if allowed is not None and to not in allowed:
                    continue
                to_goal = send_goal
                to_vars = vars_
                if pvar is not None:
                    to_goal = S.substitute(send_goal, {pvar: S.Const(to, "Principal")})
                    to_vars = [v for v in vars_ if v != pvar]
                frame = encode_frame(
                    {
                        "type": "QUERY",
                        "qid": self._new_qid(),
                        "from": self.name,
                        "to": to,
                        "session": list(chain),
                        "goal_b64": _b64(codec.encode_formula(to_goal)),
                        "vars": [[v.name, v.sort] for v in to_vars],
                        "budget": budget,
                    }
                )
                try:
                    responses = self.network.request(self.name, to, frame)
                except RouteError:
                    continue
                answer = self._accept_answer(responses, to_vars, restriction, to)
                if answer is not None:
                    bindings, ev = answer
                    if pvar is not None:
                        bindings = dict(bindings)
                        bindings[pvar.name] = S.Const(to, "Principal")
                    yield bindings, ev

        return dispatch

    def _accept_answer(self, responses, vars_, restriction, frm):
        seen_qids = set()
        for resp in responses:
            try:
                obj = decode_frame(resp)
            except TransportError:
                continue
            if obj.get("type") != "ANSWER":
                continue
            qid = obj.get("qid")
            if qid in seen_qids:
                self.metrics["duplicates_ignored"] += 1
                continue
            seen_qids.add(qid)
            try:
                bindings = {
                    name: codec.decode_term(_unb64(t))
                    for name, t in (obj.get("bindings") or {}).items()
                }
                ev = codec.decode_evidence(_unb64(obj["evidence_b64"]))
            except Exception:
                continue
            if restriction is not None and isinstance(ev, E.KnowsWrap):
                ev = ev.body  # sent wrapped, integrate unwrapped
            att_b64 = obj.get("att_b64")
            if att_b64:
                try:
                    r = codec._R(_unb64(att_b64))
                    sa = codec._read_signed_attestation(r)
                    r.done()
                except Exception:
                    continue
                pub = self.directory.public_key(frm)
                if pub is None or verify_attestation(pub, sa) is None:
                    continue  # forged answer metadata
            return bindings, ev
        return None

    # -- inbound -------------------------------------------------------------

    def handle_frame(self, data: bytes) -> list[bytes]:
        try:
            obj = decode_frame(data)
        except TransportError as ex:
            return [encode_frame({"type": "FAIL", "reason": str(ex)})]
        if obj.get("type") == "QUERY":
            return self.handle_query(obj)
        return [encode_frame({"type": "FAIL", "qid": obj.get("qid"), "reason": "unsupported frame type"})]

    def handle_query(self, obj: dict) -> list[bytes]:
        qid = obj.get("qid", "")
        if qid in self._answered:
            self.metrics["duplicates_ignored"] += 1
            return self._answered[qid]
        self.metrics["queries_handled"] += 1
        try:
            goal = codec.decode_formula(_unb64(obj["goal_b64"]))
            vars_ = [S.Var(n, s) for n, s in obj.get("vars", [])]
            budget = int(obj.get("budget", self.depth))
            chain = list(obj.get("session", []))
        except Exception as ex:
            resp = [encode_frame({"type": "FAIL", "qid": qid, "reason": f"malformed query: {ex}"})]
            self._answered[qid] = resp
            return resp
        session = Session(self._new_token())
        self.sessions[session.token] = session
        env = self._env_for_chain(chain)
        prover = self._prover(session, chain + [session.token])
        # Rename incoming metavariables into a local namespace so they can
        # never collide with this prover's own fresh variables.
        ren = {v: S.Var(f"q.{qid}.{v.name}", v.sort) for v in vars_}
        goal = S.substitute(goal, ren)
        try:
            answer = prover.first(goal, list(ren.values()), depth=min(budget, self.depth), env=env)
        except Exception as ex:
            answer = None
            self.trace.append(f"ERROR {qid} {ex}")
        if answer is not None:
            answer.bindings = {v: answer.bindings[rv] for v, rv in ren.items()}
        if answer is None:
            self.metrics["failures_sent"] += 1
            resp = [encode_frame({"type": "FAIL", "qid": qid, "reason": "no proof"})]
            self._answered[qid] = resp
            return resp
        self.metrics["answers_sent"] += 1
        frame = {
            "type": "ANSWER",
            "qid": qid,
            "from": self.name,
            "bindings": {
                v.name: _b64(codec.encode_term(t)) for v, t in answer.bindings.items()
            },
            "evidence_b64": _b64(codec.encode_evidence(answer.evidence)),
        }
        att = self._answer_attestation(answer.goal)
        if att is not None:
            w = codec._W()
            codec._emit_signed_attestation(w, att)
            frame["att_b64"] = _b64(w.out())
        resp = [encode_frame(frame)]
        self._answered[qid] = resp
        return resp

    def _answer_attestation(self, goal):
        """Countersign an answer that claims this node's own attestation."""
        g = goal
        if isinstance(g, S.Knows):
            g = g.body
        if (
            isinstance(g, S.Attest)
            and g.principal == S.Const(self.name, "Principal")
            and isinstance(g.body, S.Atom)
            and not S.free_vars(g.body)
        ):
            from .crypto import sign_attestation

            issued = self.services.now() if self.services is not None else None
            return sign_attestation(self.keys, self.identity, g.body, issued_at=issued)
        return None

    # -- local entry point ----------------------------------------------------

    def ask(self, goal, free_vars=(), depth: int | None = None):
        """Prove a goal at this node, dispatching to peers as needed."""
        session = Session(self._new_token())
        self.sessions[session.token] = session
        prover = self._prover(session, [session.token])
        yield from prover.ask(goal, free_vars, depth=depth or self.depth)

    def ask_first(self, goal, free_vars=(), depth: int | None = None):
        for a in self.ask(goal, free_vars, depth):
            return a
        return None

    def certify(self, answer: engine.Answer, extra_digests=()) -> E.Certificate:
        """Package an answer as a self-contained certificate, stamped with
        the trusted clock when available."""
        digests = set(self.policy_digests()) | set(extra_digests)
        digests |= _evidence_digests(answer.evidence)
        ids = set()
        for name in self.directory.names():
            pid = self.directory.principal_id(name)
            if pid is not None:
                ids.add(pid)
        stamp = self.services.attest_time() if self.services is not None else None
        return E.make_certificate(answer.goal, answer.evidence, digests, ids, created_at=stamp)


def _evidence_digests(ev) -> set:
    out = set()

    def walk(x):
        if isinstance(x, E.ClauseApp):
            if x.policy_digest is not None:
                out.add(x.policy_digest)
            for p in x.premises:
                walk(p)
        elif isinstance(x, E.PairEv):
            walk(x.left)
            walk(x.right)
        elif isinstance(x, (E.Inl, E.Inr, E.Witness, E.Abstraction, E.KnowsWrap)):
            walk(x.body)

    walk(ev)
    return out

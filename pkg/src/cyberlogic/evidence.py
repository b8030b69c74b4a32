"""Evidence terms, certificates, and the independent checker.

Evidence is a proof skeleton in the Brouwer-Heyting-Kolmogorov reading:
each connective of the proved formula has a matching evidence constructor,
clause applications name the applied clause by label and policy digest,
and leaves are either hypotheses, signed attestations, or receipts for
interpreted predicates.  `check` replays a certificate against pinned
policies and public keys without any proof search.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field

from . import syntax as S
from .crypto import Directory, PrincipalId, SignedAttestation, verify_attestation
from .errors import CodecError


# ---------------------------------------------------------------------------
# Evidence constructors


@dataclass(frozen=True)
class Unit:
    pass


@dataclass(frozen=True)
class PairEv:
    left: "Evidence"
    right: "Evidence"


@dataclass(frozen=True)
class Inl:
    body: "Evidence"


@dataclass(frozen=True)
class Inr:
    body: "Evidence"


@dataclass(frozen=True)
class Witness:
    term: object  # S.Term
    body: "Evidence"


@dataclass(frozen=True)
class Abstraction:
    """Binder evidence: for a universal goal `var` names the fresh constant
    the body was proved at; for an implication goal it labels the assumed
    hypothesis clauses."""

    var: str
    body: "Evidence"


@dataclass(frozen=True)
class ClauseApp:
    """Backchaining step.  `policy_digest` pins the policy the clause came
    from; None means a session hypothesis looked up in the environment.
    `args` instantiate the clause universals in binder order; `premises`
    hold one evidence term per premise slot of the instantiated clause,
    in textual order."""

    label: str
    policy_digest: bytes | None
    args: tuple = ()
    premises: tuple = ()


@dataclass(frozen=True)
class Hyp:
    label: str


@dataclass(frozen=True)
class AttLeaf:
    attestation: SignedAttestation


@dataclass(frozen=True)
class TheoryHole:
    """Interpreted predicate discharged outside the logic.  Comparisons are
    re-evaluated by the checker; `time_not_elapsed` carries a signed clock
    receipt instead, since it cannot be re-evaluated later."""

    pred: str
    args: tuple = ()
    receipt: SignedAttestation | None = None


@dataclass(frozen=True)
class KnowsWrap:
    principals: frozenset  # of S.Term
    body: "Evidence"


@dataclass(frozen=True)
class Ref:
    """Pointer into the certificate store (hash-consed shared subtree)."""

    digest: bytes


Evidence = (
    Unit
    | PairEv
    | Inl
    | Inr
    | Witness
    | Abstraction
    | ClauseApp
    | Hyp
    | AttLeaf
    | TheoryHole
    | KnowsWrap
    | Ref
)


# ---------------------------------------------------------------------------
# Certificates


@dataclass
class Certificate:
    root_formula: object  # S.Formula
    root_evidence: Evidence
    store: dict = field(default_factory=dict)  # digest -> Evidence
    policy_digests: frozenset = frozenset()
    directory: frozenset = frozenset()  # of PrincipalId
    created_at: SignedAttestation | None = None

    @property
    def digest(self) -> bytes:
        from . import codec

        return codec.sha256(codec.encode_certificate(self))


DEDUP_THRESHOLD = 64  # bytes; smaller subtrees are cheaper inline than as refs


def _children(e: Evidence):
    if isinstance(e, PairEv):
        return (e.left, e.right)
    if isinstance(e, (Inl, Inr, Witness, Abstraction, KnowsWrap)):
        return (e.body,)
    if isinstance(e, ClauseApp):
        return e.premises
    return ()


def _with_children(e: Evidence, kids):
    if isinstance(e, PairEv):
        return PairEv(kids[0], kids[1])
    if isinstance(e, (Inl, Inr)):
        return type(e)(kids[0])
    if isinstance(e, Witness):
        return Witness(e.term, kids[0])
    if isinstance(e, Abstraction):
        return Abstraction(e.var, kids[0])
    if isinstance(e, KnowsWrap):
        return KnowsWrap(e.principals, kids[0])
    if isinstance(e, ClauseApp):
        return ClauseApp(e.label, e.policy_digest, e.args, tuple(kids))
    return e


def dedup_evidence(e: Evidence, threshold: int = DEDUP_THRESHOLD):
    """Hash-cons repeated subtrees: any subtree whose encoding is at least
    `threshold` bytes and occurs more than once is stored once and replaced
    by references.  Returns (root, store)."""
    from . import codec

    counts: dict[bytes, int] = {}
    sizes: dict[bytes, int] = {}

    def scan(x):
        enc = codec.encode_evidence(x)
        d = codec.sha256(enc)
        counts[d] = counts.get(d, 0) + 1
        sizes[d] = len(enc)
        if counts[d] == 1:
            for k in _children(x):
                scan(k)

    scan(e)
    store: dict[bytes, Evidence] = {}

    def rebuild(x):
        from . import codec as _c

        orig_d = _c.evidence_digest(x)
        kids = [rebuild(k) for k in _children(x)]
        new = _with_children(x, kids)
        if counts[orig_d] > 1 and sizes[orig_d] >= threshold:
            d = _c.evidence_digest(new)
            store[d] = new
            return Ref(d)
        return new

    return rebuild(e), store


def make_certificate(
    formula,
    evidence: Evidence,
    policy_digests,
    directory_ids,
    created_at: SignedAttestation | None = None,
    threshold: int = DEDUP_THRESHOLD,
) -> Certificate:
    root, store = dedup_evidence(evidence, threshold)
    return Certificate(
        root_formula=formula,
        root_evidence=root,
        store=store,
        policy_digests=frozenset(policy_digests),
        directory=frozenset(directory_ids),
        created_at=created_at,
    )


CERT_HEADER = "cyberlogic-cert v1"


def certificate_to_text(cert: Certificate) -> str:
    from . import codec

    body = base64.b64encode(codec.encode_certificate(cert)).decode()
    lines = [CERT_HEADER]
    lines += [body[i : i + 76] for i in range(0, len(body), 76)]
    return "\n".join(lines) + "\n"


def certificate_from_text(text: str) -> Certificate:
    from . import codec

    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CERT_HEADER:
        raise CodecError("missing certificate header")
    try:
        raw = base64.b64decode("".join(lines[1:]), validate=True)
    except Exception as e:
        raise CodecError("bad certificate base64") from e
    return codec.decode_certificate(raw)


# ---------------------------------------------------------------------------
# Hypothesis environments


class HypothesisEnv:
    """Immutable map from hypothesis label to assumed clause."""

    def __init__(self, clauses=None):
        self._clauses: dict[str, S.Clause] = dict(clauses or {})

    def extend(self, clauses) -> "HypothesisEnv":
        merged = dict(self._clauses)
        for c in clauses:
            merged[c.label] = c
        return HypothesisEnv(merged)

    def clause(self, label: str) -> S.Clause | None:
        return self._clauses.get(label)

    def labels(self):
        return list(self._clauses)

    def clauses(self):
        return list(self._clauses.values())

    def __len__(self):
        return len(self._clauses)


def _const_names(f) -> set:
    out = set()

    def walk_t(t):
        if isinstance(t, S.Const):
            out.add(t.name)
        elif isinstance(t, S.FunApp):
            for a in t.args:
                walk_t(a)

    def walk(g):
        if isinstance(g, S.Atom):
            for a in g.args:
                walk_t(a)
        elif isinstance(g, S.Attest):
            walk_t(g.principal)
            walk(g.body)
        elif isinstance(g, S.Knows):
            for p in g.principals:
                walk_t(p)
            walk(g.body)
        elif isinstance(g, (S.And, S.Or, S.Implies)):
            walk(g.left)
            walk(g.right)
        elif isinstance(g, (S.Forall, S.Exists)):
            walk(g.body)

    walk(f)
    return out


# ---------------------------------------------------------------------------
# The checker


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    path: tuple = ()
    reason: str | None = None

    def __bool__(self):
        return self.ok

    @property
    def verdict(self) -> str:
        return "ok" if self.ok else "nok"


def _nok(path, reason) -> CheckResult:
    return CheckResult(False, tuple(path), reason)

_OK = CheckResult(True)


class _Checker:
    def __init__(self, policies, directory, store, foreign_check):
        self.policies = policies or {}  # digest -> Policy
        self.directory = directory
        self.store = store or {}
        self.foreign_check = foreign_check
        self._resolving: set[bytes] = set()

    # -- leaves ------------------------------------------------------------

    def _check_att_leaf(self, e: AttLeaf, phi, path):
        if not (isinstance(phi, S.Attest) and isinstance(phi.body, S.Atom)):
            return _nok(path, "attestation evidence for a non-attestation goal")
        k = phi.principal
        if not isinstance(k, S.Const):
            return _nok(path, "attesting principal is not ground")
        if self.directory is None or k.name not in self.directory:
            return _nok(path, f"no public key for {k.name!r}")
        got = verify_attestation(self.directory.public_key(k.name), e.attestation)
        if got is None:
            return _nok(path, f"signature by {k.name!r} does not verify")
        if got != phi:
            return _nok(path, "attested formula differs from the goal")
        if e.attestation.principal.name != k.name:
            return _nok(path, "attestation names a different principal")
        return _OK

    def _check_theory(self, e: TheoryHole, phi, path):
        if not (isinstance(phi, S.Atom) and phi.pred in S.BUILTIN_PREDS):
            return _nok(path, "theory evidence for a non-interpreted goal")
        if e.pred != phi.pred or e.args != phi.args:
            return _nok(path, "theory evidence does not match the goal atom")
        if phi.pred in S.EQ_BUILTINS:
            a, b = phi.args
            if not (S.is_ground(a) and S.is_ground(b)):
                return _nok(path, f"{phi.pred} on nonground arguments")
            same = a == b or (
                S.int_value(a) is not None and S.int_value(a) == S.int_value(b)
            )
            want = phi.pred == "="
            return _OK if same == want else _nok(path, f"{phi.pred} does not hold")
        if phi.pred in S.ORDER_BUILTINS:
            va, vb = S.int_value(phi.args[0]), S.int_value(phi.args[1])
            if va is None or vb is None:
                return _nok(path, f"{phi.pred} on non-numeric arguments")
            holds = va < vb if phi.pred == "<" else va <= vb
            return _OK if holds else _nok(path, f"{phi.pred} does not hold")
        # time_not_elapsed(t): a signed clock reading strictly before t.
        if e.receipt is None:
            return _nok(path, "missing clock receipt")
        if self.directory is None or "T" not in self.directory:
            return _nok(path, "no public key for the time source")
        got = verify_attestation(self.directory.public_key("T"), e.receipt)
        if got is None or not (
            isinstance(got.body, S.Atom) and got.body.pred == "time" and got.principal.name == "T"
        ):
            return _nok(path, "clock receipt does not verify")
        now = S.int_value(got.body.args[0])
        t = S.int_value(phi.args[0])
        if now is None or t is None or now >= t:
            return _nok(path, "clock receipt is not earlier than the deadline")
        return _OK

    # -- clause application ------------------------------------------------

    def _check_clause_app(self, e: ClauseApp, phi, env, path):
        if e.policy_digest is None:
            clause = env.clause(e.label)
            owner = None
            if clause is None:
                return _nok(path, f"unknown hypothesis {e.label!r}")
        else:
            policy = self.policies.get(e.policy_digest)
            if policy is None:
                if self.foreign_check is not None:
                    sub = self.foreign_check(e.policy_digest, e, phi, self.store)
                    if sub is not None:
                        return sub if sub.ok else _nok(path, sub.reason or "remote check failed")
                return _nok(path, f"unknown policy digest {e.policy_digest.hex()[:12]}")
            clause = policy.clause(e.label)
            owner = policy.owner
            if clause is None:
                return _nok(path, f"no clause {e.label!r} in policy of {owner!r}")
        if len(e.args) != len(clause.universals):
            return _nok(path, f"clause {e.label!r} expects {len(clause.universals)} arguments")
        inst = {}
        for v, t in zip(clause.universals, e.args):
            try:
                if S.term_sort(t) != v.sort:
                    return _nok(path, f"argument for {v.name!r} has the wrong sort")
            except Exception:
                return _nok(path, f"unintelligible argument for {v.name!r}")
            inst[v] = t
        head = S.substitute(clause.head, inst)
        if head != phi:
            # A policy owner's clause with a bare atomic head also witnesses
            # the owner's own attestation of that head.
            if not (
                owner is not None
                and isinstance(phi, S.Attest)
                and phi.principal == S.Const(owner, "Principal")
                and phi.body == head
            ):
                return _nok(path, f"clause {e.label!r} head does not match the goal")
        slots = [S.substitute(s, inst) for s in clause.slots]
        if len(slots) != len(e.premises):
            return _nok(path, f"clause {e.label!r}: {len(slots)} premises expected")
        for i, (g, p) in enumerate(zip(slots, e.premises)):
            sub = self.check(p, g, env, path + (i,))
            if not sub.ok:
                return sub
        return _OK

    # -- main recursion ----------------------------------------------------

    def check(self, e: Evidence, phi, env: HypothesisEnv, path=()) -> CheckResult:
        if isinstance(e, Ref):
            target = self.store.get(e.digest)
            if target is None:
                return _nok(path, "dangling store reference")
            if e.digest in self._resolving:
                return _nok(path, "cyclic store reference")
            self._resolving.add(e.digest)
            try:
                return self.check(target, phi, env, path)
            finally:
                self._resolving.discard(e.digest)
        if isinstance(e, Unit):
            return _OK if phi == S.TOP else _nok(path, "unit evidence for a non-trivial goal")
        if isinstance(e, PairEv):
            if not isinstance(phi, S.And):
                return _nok(path, "pair evidence for a non-conjunction")
            left = self.check(e.left, phi.left, env, path + (0,))
            if not left.ok:
                return left
            return self.check(e.right, phi.right, env, path + (1,))
        if isinstance(e, (Inl, Inr)):
            if not isinstance(phi, S.Or):
                return _nok(path, "injection evidence for a non-disjunction")
            side = phi.left if isinstance(e, Inl) else phi.right
            return self.check(e.body, side, env, path + (0 if isinstance(e, Inl) else 1,))
        if isinstance(e, Witness):
            if not isinstance(phi, S.Exists):
                return _nok(path, "witness evidence for a non-existential")
            try:
                inst = S.substitute1(phi.body, phi.var, e.term)
            except Exception:
                return _nok(path, "witness has the wrong sort")
            return self.check(e.body, inst, env, path + (0,))
        if isinstance(e, Abstraction):
            if isinstance(phi, S.Forall):
                used = _const_names(phi)
                for c in env.clauses():
                    used |= _const_names(c.head) | _const_names(c.body)
                if e.var in used:
                    return _nok(path, f"eigenvariable {e.var!r} is not fresh")
                inst = S.substitute(phi.body, {phi.var: S.Const(e.var, phi.var.sort)})
                return self.check(e.body, inst, env, path + (0,))
            if isinstance(phi, S.Implies):
                try:
                    assumed = S.clauses_of(phi.left, e.var)
                except Exception as ex:
                    return _nok(path, f"hypothesis is not a program: {ex}")
                return self.check(e.body, phi.right, env.extend(assumed), path + (0,))
            return _nok(path, "abstraction evidence for a non-binder goal")
        if isinstance(e, KnowsWrap):
            if not isinstance(phi, S.Knows):
                return _nok(path, "restriction evidence for a non-restricted goal")
            if e.principals != phi.principals:
                return _nok(path, "restriction sets differ")
            sub = self.check(e.body, phi.body, env, path + (0,))
            if not sub.ok:
                return sub
            allowed = {p.name for p in phi.principals if isinstance(p, S.Const)}
            allowed.add("common")
            used = extract_provenance(e.body, self.policies, self.store)
            stray = used - allowed
            if stray:
                return _nok(path, f"evidence draws on policies outside the restriction: {sorted(stray)}")
            return _OK
        if isinstance(e, Hyp):
            clause = env.clause(e.label)
            if clause is None:
                return _nok(path, f"unknown hypothesis {e.label!r}")
            if not clause.is_fact() or clause.universals:
                return _nok(path, f"hypothesis {e.label!r} is not an atomic fact")
            if clause.head != phi:
                return _nok(path, f"hypothesis {e.label!r} does not match the goal")
            return _OK
        if isinstance(e, AttLeaf):
            return self._check_att_leaf(e, phi, path)
        if isinstance(e, TheoryHole):
            return self._check_theory(e, phi, path)
        if isinstance(e, ClauseApp):
            return self._check_clause_app(e, phi, env, path)
        return _nok(path, f"unrecognized evidence node {type(e).__name__}")


def check(
    policies,
    env: HypothesisEnv,
    e: Evidence,
    phi,
    directory: Directory | None = None,
    store=None,
    foreign_check=None,
) -> CheckResult:
    """Check that `e` proves `phi` under hypothesis environment `env`.

    `policies` maps policy digest to Policy; `directory` supplies public
    keys for signature leaves; `store` resolves shared-subtree references;
    `foreign_check` (digest, evidence, formula, store) -> CheckResult|None
    is consulted for clause applications against unknown policy digests.
    """
    return _Checker(policies, directory, store, foreign_check).check(e, phi, env or HypothesisEnv())


def check_certificate(
    cert: Certificate,
    policies,
    directory: Directory | None = None,
    foreign_check=None,
    require_created_at: bool = False,
) -> CheckResult:
    """Check a full certificate: pinned identities, the creation stamp, and
    the evidence for the root formula."""
    if directory is not None:
        for pid in cert.directory:
            known = directory.principal_id(pid.name)
            if known is not None and known != pid:
                return _nok((), f"pinned key for {pid.name!r} does not match the directory")
    if cert.created_at is not None:
        if directory is None or "T" not in directory:
            return _nok((), "cannot verify the creation stamp: no time-source key")
        got = verify_attestation(directory.public_key("T"), cert.created_at)
        if got is None or not (isinstance(got.body, S.Atom) and got.body.pred == "time"):
            return _nok((), "creation stamp does not verify")
    elif require_created_at:
        return _nok((), "certificate has no creation stamp")
    return check(
        policies,
        HypothesisEnv(),
        cert.root_evidence,
        cert.root_formula,
        directory=directory,
        store=cert.store,
        foreign_check=foreign_check,
    )


# ---------------------------------------------------------------------------
# Provenance and display


def extract_provenance(e: Evidence, policies=None, store=None) -> set:
    """Owners of every policy whose clauses the evidence applies."""
    policies = policies or {}
    store = store or {}
    out: set[str] = set()
    seen: set[bytes] = set()

    def walk(x):
        if isinstance(x, Ref):
            if x.digest in seen:
                return
            seen.add(x.digest)
            target = store.get(x.digest)
            if target is not None:
                walk(target)
            return
        if isinstance(x, ClauseApp) and x.policy_digest is not None:
            p = policies.get(x.policy_digest)
            out.add(p.owner if p is not None else f"digest:{x.policy_digest.hex()[:12]}")
        for k in _children(x):
            walk(k)

    walk(e)
    return out


def render_spine(e: Evidence, store=None) -> str:
    """Compact one-line rendering of an evidence term.  Clause applications
    print as label(arg)..(premise)..; maximal runs of theory receipts among
    a clause's premises collapse to a single `_`."""
    store = store or {}

    def theory_only(x) -> bool:
        if isinstance(x, Ref):
            x = store.get(x.digest, x)
        if isinstance(x, TheoryHole):
            return True
        if isinstance(x, PairEv):
            return theory_only(x.left) and theory_only(x.right)
        return False

    def go(x) -> str:
        if isinstance(x, Ref):
            target = store.get(x.digest)
            return go(target) if target is not None else f"ref:{x.digest.hex()[:8]}"
        if isinstance(x, Unit):
            return "tt"
        if isinstance(x, PairEv):
            return f"({go(x.left)},{go(x.right)})"
        if isinstance(x, Inl):
            return f"inl({go(x.body)})"
        if isinstance(x, Inr):
            return f"inr({go(x.body)})"
        if isinstance(x, Witness):
            return f"[{S.fmt_term(x.term)}]{go(x.body)}"
        if isinstance(x, Abstraction):
            return f"\\{x.var}.{go(x.body)}"
        if isinstance(x, Hyp):
            return x.label
        if isinstance(x, AttLeaf):
            return f"sig:{x.attestation.principal.name}"
        if isinstance(x, TheoryHole):
            return "_"
        if isinstance(x, KnowsWrap):
            names = ",".join(sorted(S.fmt_term(p) for p in x.principals))
            return f"know{{{names}}}{go(x.body)}"
        if isinstance(x, ClauseApp):
            parts = [x.label]
            parts += [f"({S.fmt_term(t)})" for t in x.args]
            run = False
            for p in x.premises:
                if theory_only(p):
                    if not run:
                        parts.append("(_)")
                        run = True
                    continue
                run = False
                parts.append(f"({go(p)})")
            return "".join(parts)
        return "?"

    return go(e)

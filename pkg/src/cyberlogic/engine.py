"""Unification and goal-directed proof search.

The prover performs uniform (goal-directed) search: composite goals are
decomposed by their top connective, atomic goals backchain over hypothesis
and policy clauses, depth-first in clause order under a depth budget.
Conjunct scheduling prefers attestation goals whose principal is still
unbound (they generate bindings), delays interpreted predicates until
their arguments are ground, and delays disjunctions that mention unbound
variables; evidence slots are filled positionally regardless of the
evaluation order actually taken.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import syntax as S
from . import evidence as E
from .errors import FlounderError

DEFAULT_DEPTH = 64


# ---------------------------------------------------------------------------
# Substitutions and unification


def walk(t, s: dict):
    while isinstance(t, S.Var) and t in s:
        t = s[t]
    return t


def resolve(t, s: dict):
    t = walk(t, s)
    if isinstance(t, S.FunApp):
        return S.FunApp(t.symbol, tuple(resolve(a, s) for a in t.args))
    return t


def resolve_formula(f, s: dict):
    fv = S.free_vars(f)
    m = {v: resolve(v, s) for v in fv}
    m = {v: t for v, t in m.items() if t != v}
    return S.substitute(f, m) if m else f


def _bind(v: S.Var, t, s: dict, state):
    t = resolve(t, s)
    if isinstance(t, S.Var) and t == v:
        return s
    if v in S.term_vars(t):
        return None  # occurs check
    try:
        if S.term_sort(t) != v.sort:
            return None
    except Exception:
        return None
    if state is not None and not state.scope_ok(v, t):
        return None
    s2 = dict(s)
    s2[v] = t
    return s2


def unify(a, b, s: dict, state=None):
    """Most general unifier extending `s`, or None."""
    a, b = walk(a, s), walk(b, s)
    if a == b:
        return s
    if isinstance(a, S.Var) and isinstance(b, S.Var) and state is not None:
        # Bind the younger variable to the older one, so that an
        # aliased class is represented by its oldest member and the
        # eigenvariable escape check sees the tightest birth date.
        ba = state.meta_birth.get(a.name)
        bb = state.meta_birth.get(b.name)
        if ba is not None and bb is not None and bb < ba:
            return _bind(a, b, s, state)
        return _bind(b, a, s, state)
    if isinstance(a, S.Var):
        return _bind(a, b, s, state)
    if isinstance(b, S.Var):
        return _bind(b, a, s, state)
    if (
        isinstance(a, S.FunApp)
        and isinstance(b, S.FunApp)
        and a.symbol == b.symbol
        and len(a.args) == len(b.args)
    ):
        for x, y in zip(a.args, b.args):
            s = unify(x, y, s, state)
            if s is None:
                return None
        return s
    va, vb = S.int_value(resolve(a, s)), S.int_value(resolve(b, s))
    if va is not None and va == vb:
        return s  # succ-chains and numerals denoting the same value
    return None


def mgu(a, b):
    return unify(a, b, {})


def unify_atomic(goal, head, s: dict, state=None):
    """Unify an atomic goal with a clause head (atom against atom,
    attestation against attestation)."""
    if isinstance(goal, S.Atom) and isinstance(head, S.Atom):
        if goal.pred != head.pred or len(goal.args) != len(head.args):
            return None
        for x, y in zip(goal.args, head.args):
            s = unify(x, y, s, state)
            if s is None:
                return None
        return s
    if isinstance(goal, S.Attest) and isinstance(head, S.Attest):
        s = unify(goal.principal, head.principal, s, state)
        if s is None:
            return None
        return unify_atomic(goal.body, head.body, s, state)
    return None


# ---------------------------------------------------------------------------
# Search state


class _State:
    """Per-query bookkeeping: fresh-name counters and the birth order of
    metavariables and eigenvariables (for the quantifier scope check)."""

    def __init__(self):
        self.counter = itertools.count(1)
        self.meta_birth: dict[str, int] = {}
        self.eigen_birth: dict[str, int] = {}
        self.exhausted = False

    def tick(self) -> int:
        return next(self.counter)

    def register_var(self, v: S.Var):
        self.meta_birth.setdefault(v.name, self.tick())

    def scope_ok(self, v: S.Var, t) -> bool:
        """An eigenvariable introduced after `v` must not leak into `v`'s
        binding."""
        b = self.meta_birth.get(v.name)
        if b is None:
            return True
        for name in _const_names_term(t):
            eb = self.eigen_birth.get(name)
            if eb is not None and eb > b:
                return False
        return True


def _const_names_term(t) -> set:
    if isinstance(t, S.Const):
        return {t.name}
    if isinstance(t, S.FunApp):
        out = set()
        for a in t.args:
            out |= _const_names_term(a)
        return out
    return set()


def ordered_free_vars(f) -> list:
    """Free variables in first-occurrence (left-to-right) order."""
    seen = []

    def walk_t(t):
        if isinstance(t, S.Var):
            if t not in seen:
                seen.append(t)
        elif isinstance(t, S.FunApp):
            for a in t.args:
                walk_t(a)

    def go(g, bound):
        if isinstance(g, S.Atom):
            for a in g.args:
                if not (isinstance(a, S.Var) and a in bound):
                    walk_t(a)
        elif isinstance(g, S.Attest):
            if not (isinstance(g.principal, S.Var) and g.principal in bound):
                walk_t(g.principal)
            go(g.body, bound)
        elif isinstance(g, S.Knows):
            for p in sorted(g.principals, key=repr):
                if not (isinstance(p, S.Var) and p in bound):
                    walk_t(p)
            go(g.body, bound)
        elif isinstance(g, (S.And, S.Or, S.Implies)):
            go(g.left, bound)
            go(g.right, bound)
        elif isinstance(g, (S.Forall, S.Exists)):
            go(g.body, bound | {g.var})

    go(f, set())
    # walk_t records bound vars too when shadowed oddly; filter properly:
    return [v for v in seen]


# ---------------------------------------------------------------------------
# Answers


@dataclass
class Answer:
    bindings: dict  # Var -> ground Term for the query's free variables
    evidence: E.Evidence
    goal: object  # the instantiated goal formula


@dataclass
class _Item:
    idx: int
    addr: tuple
    goal: object
    open_or: bool = False  # disjunction that mentioned unbound vars at entry


class Prover:
    """Proof search over a set of named policies.

    `policies` maps owner name to Policy (typically this node's own policy
    plus the common policy).  `dispatch(target, goal, vars, budget,
    restriction)` is consulted for attestation goals that no local clause
    covers: `target` is a principal name, or None to broadcast; it yields
    (bindings, evidence) pairs with ground terms for `vars`.
    """

    def __init__(
        self,
        policies,
        owner: str | None = None,
        signer=None,  # (KeyPair, PrincipalId)
        dispatch=None,
        services=None,
        trace: list | None = None,
        on_hypothesis=None,
    ):
        self.policies = dict(policies)
        self.owner = owner
        self.signer = signer
        self.dispatch = dispatch
        self.services = services
        self.trace = trace if trace is not None else []
        self.on_hypothesis = on_hypothesis
        self.state = _State()

    # -- public entry points -----------------------------------------------

    def ask(self, goal, free_vars=(), depth: int = DEFAULT_DEPTH, env=None, restriction=None):
        """Yield Answers for `goal`; `free_vars` are treated as
        existentially quantified metavariables."""
        self.state = _State()
        for v in free_vars:
            self.state.register_var(v)
        env = env or E.HypothesisEnv()
        for s, ev in self._solve(goal, {}, depth, env, restriction, ()):
            bindings = {v: resolve(v, s) for v in free_vars}
            yield Answer(bindings, resolve_evidence(ev, s), resolve_formula(goal, s))

    def first(self, goal, free_vars=(), depth: int = DEFAULT_DEPTH, env=None, restriction=None):
        for a in self.ask(goal, free_vars, depth, env, restriction):
            return a
        return None

    # -- fresh names --------------------------------------------------------

    def _fresh_var(self, sort: str) -> S.Var:
        n = self.state.tick()
        v = S.Var(f"_{n}", sort)
        self.state.meta_birth[v.name] = n
        return v

    def _fresh_eigen(self, sort: str) -> S.Const:
        if sort == "Nonce" and self.services is not None:
            name = self.services.fresh_nonce()
        else:
            name = f"c{self.state.tick()}"
        self.state.eigen_birth[name] = self.state.tick()
        return S.Const(name, sort)

    def _fresh_label(self) -> str:
        return f"h{self.state.tick()}"

    def _log(self, depth, rule, goal):
        self.trace.append(f"STEP {depth} {rule} {S.fmt_formula(goal)}")

    # -- goal decomposition --------------------------------------------------

    def _solve(self, goal, s, depth, env, restriction, anc):
        if isinstance(goal, S.Top):
            yield s, E.Unit()
            return
        if isinstance(goal, S.And):
            leaves = _leaves(goal, ())
            items = []
            for i, (addr, g) in enumerate(leaves):
                open_or = isinstance(g, S.Or) and any(
                    isinstance(walk(v, s), S.Var) for v in S.free_vars(g)
                )
                items.append(_Item(i, addr, g, open_or))
            for s2, evmap in self._solve_group(items, s, depth, env, restriction, anc):
                yield s2, _assemble(goal, (), evmap)
            return
        if isinstance(goal, S.Or):
            self._log(depth, "or", resolve_formula(goal, s))
            for s2, ev in self._solve(goal.left, s, depth, env, restriction, anc):
                yield s2, E.Inl(ev)
            for s2, ev in self._solve(goal.right, s, depth, env, restriction, anc):
                yield s2, E.Inr(ev)
            return
        if isinstance(goal, S.Exists):
            v = self._fresh_var(goal.var.sort)
            body = S.substitute(goal.body, {goal.var: v})
            for s2, ev in self._solve(body, s, depth, env, restriction, anc):
                yield s2, E.Witness(v, ev)
            return
        if isinstance(goal, S.Forall):
            c = self._fresh_eigen(goal.var.sort)
            self._log(depth, "all", resolve_formula(goal, s))
            body = S.substitute(goal.body, {goal.var: c})
            for s2, ev in self._solve(body, s, depth, env, restriction, anc):
                yield s2, E.Abstraction(c.name, ev)
            return
        if isinstance(goal, S.Implies):
            label = self._fresh_label()
            left = resolve_formula(goal.left, s)
            assumed = S.clauses_of(left, label)
            env2 = env.extend(assumed)
            if self.on_hypothesis is not None:
                self.on_hypothesis(assumed)
            self._log(depth, "assume", left)
            for s2, ev in self._solve(goal.right, s, depth, env2, restriction, anc):
                yield s2, E.Abstraction(label, ev)
            return
        if isinstance(goal, S.Knows):
            principals = frozenset(resolve(p, s) for p in goal.principals)
            if restriction is not None and not principals <= restriction:
                return
            for s2, ev in self._solve(goal.body, s, depth, env, principals, anc):
                yield s2, E.KnowsWrap(principals, ev)
            return
        if isinstance(goal, S.Atom) and goal.pred in S.BUILTIN_PREDS:
            yield from self._builtin(goal, s)
            return
        if isinstance(goal, (S.Atom, S.Attest)):
            yield from self._backchain(goal, s, depth, env, restriction, anc)
            return
        raise TypeError(f"not a solvable goal: {goal!r}")

    # -- conjunct scheduling -------------------------------------------------

    def _pick(self, items, s) -> int:
        def klass(it):
            g = it.goal
            if isinstance(g, S.Attest) and isinstance(walk(g.principal, s), S.Var):
                return 0
            if isinstance(g, S.Or) and it.open_or:
                return 3
            if isinstance(g, S.Atom) and g.pred in S.BUILTIN_PREDS:
                return 2
            return 1

        order = sorted(range(len(items)), key=lambda i: (klass(items[i]), items[i].idx))
        for i in order:
            it = items[i]
            if isinstance(it.goal, S.Atom) and it.goal.pred in S.BUILTIN_PREDS:
                args = [resolve(a, s) for a in it.goal.args]
                if not all(S.is_ground(a) for a in args):
                    continue  # delay until ground
            return i
        raise FlounderError(
            "interpreted goals never became ground: "
            + ", ".join(S.fmt_formula(resolve_formula(it.goal, s)) for it in items)
        )

    def _solve_group(self, items, s, depth, env, restriction, anc):
        if not items:
            yield s, {}
            return
        i = self._pick(items, s)
        it = items[i]
        rest = items[:i] + items[i + 1 :]
        for s2, ev in self._solve(it.goal, s, depth, env, restriction, anc):
            for s3, evmap in self._solve_group(rest, s2, depth, env, restriction, anc):
                out = dict(evmap)
                out[it.addr] = ev
                yield s3, out

    # -- interpreted predicates ----------------------------------------------

    def _builtin(self, goal, s):
        args = tuple(resolve(a, s) for a in goal.args)
        if not all(S.is_ground(a) for a in args):
            raise FlounderError(f"{goal.pred} on nonground arguments")
        if goal.pred in S.EQ_BUILTINS:
            a, b = args
            same = a == b or (S.int_value(a) is not None and S.int_value(a) == S.int_value(b))
            if same == (goal.pred == "="):
                yield s, E.TheoryHole(goal.pred, args)
            return
        if goal.pred in S.ORDER_BUILTINS:
            va, vb = S.int_value(args[0]), S.int_value(args[1])
            if va is None or vb is None:
                return
            if va < vb if goal.pred == "<" else va <= vb:
                yield s, E.TheoryHole(goal.pred, args)
            return
        if goal.pred == "time_not_elapsed":
            if self.services is None:
                return
            receipt = self.services.time_receipt(args[0])
            if receipt is not None:
                yield s, E.TheoryHole(goal.pred, args, receipt)
            return
        raise FlounderError(f"unknown interpreted predicate {goal.pred!r}")

    # -- backchaining ----------------------------------------------------------

    def _allowed_policies(self, restriction):
        if restriction is None:
            return list(self.policies.values())
        names = {p.name for p in restriction if isinstance(p, S.Const)}
        names.add("common")
        return [p for p in self.policies.values() if p.owner in names]

    def _backchain(self, goal, s, depth, env, restriction, anc):
        if depth <= 0:
            self.state.exhausted = True
            return
        g_res = resolve_formula(goal, s)
        if g_res in anc:
            return  # identical goal already open on this path
        anc = anc + (g_res,)
        self._log(depth, "goal", g_res)

        for clause in env.clauses():
            yield from self._apply(clause, None, None, goal, s, depth, env, restriction, anc)
        for policy in self._allowed_policies(restriction):
            digest = policy.digest
            for clause in policy.clauses:
                yield from self._apply(
                    clause, policy.owner, digest, goal, s, depth, env, restriction, anc
                )
        if isinstance(goal, S.Attest):
            yield from self._remote(goal, s, depth, env, restriction, anc)

    def _apply(self, clause, owner, digest, goal, s, depth, env, restriction, anc):
        ren = {v: self._fresh_var(v.sort) for v in clause.universals}
        head = S.substitute(clause.head, ren)
        s2 = unify_atomic(goal, head, s, self.state)
        if s2 is None and owner is not None and owner != "common":
            # An owner's bare-headed clause also answers the owner's own
            # attestation of its head.
            if isinstance(goal, S.Attest) and not isinstance(head, S.Attest):
                s2 = unify(goal.principal, S.Const(owner, "Principal"), s, self.state)
                if s2 is not None:
                    s2 = unify_atomic(goal.body, head, s2, self.state)
        if s2 is None:
            return
        # Unifying with the head may have instantiated the goal into one
        # that is already open higher on this path; looping on it proves
        # nothing new.  (anc[-1] is this goal's own pre-unification form.)
        if resolve_formula(goal, s2) in anc[:-1]:
            return
        self._log(depth, f"apply {clause.label}", resolve_formula(goal, s2))
        slots = [S.substitute(g, ren) for g in clause.slots]
        items = []
        leaves = []
        for si, slot in enumerate(slots):
            leaves.extend(_leaves(slot, (si,)))
        for i, (addr, g) in enumerate(leaves):
            open_or = isinstance(g, S.Or) and any(
                isinstance(walk(v, s2), S.Var) for v in S.free_vars(g)
            )
            items.append(_Item(i, addr, g, open_or))
        args = tuple(ren[v] for v in clause.universals)
        for s3, evmap in self._solve_group(items, s2, depth - 1, env, restriction, anc):
            if digest is None and not clause.universals and not clause.slots:
                yield s3, E.Hyp(clause.label)
                continue
            premises = tuple(
                _assemble(slot, (si,), evmap) for si, slot in enumerate(slots)
            )
            yield s3, E.ClauseApp(clause.label, digest, args, premises)

    def _remote(self, goal, s, depth, env, restriction, anc):
        k = walk(goal.principal, s)
        if isinstance(k, S.Const):
            if restriction is not None and k not in restriction:
                return
            if k.name in ("T", "N") and self.services is not None:
                body = resolve_formula(goal.body, s)
                for sa in self.services.attest_candidates(k.name, body):
                    s2 = unify_atomic(body, sa.atom(), s, self.state)
                    if s2 is not None:
                        yield s2, E.AttLeaf(sa)
                return
            if k.name == self.owner:
                yield from self._self_sign(goal, s, depth, env, restriction, anc)
                return
            if k.name in self.policies:
                return  # fully handled locally
            if self.dispatch is None:
                return
            target = k.name
        else:
            if self.dispatch is None:
                return
            target = None  # broadcast
        g_send = resolve_formula(goal, s)
        vars_ = ordered_free_vars(g_send)
        self._log(depth, "dispatch" if target else "broadcast", g_send)
        for bindings, ev in self.dispatch(target, g_send, vars_, depth - 1, restriction):
            s2 = s
            for v in vars_:
                t = bindings.get(v.name)
                if t is None:
                    continue
                s2 = unify(v, t, s2, self.state)
                if s2 is None:
                    break
            if s2 is not None:
                yield s2, ev

    def _self_sign(self, goal, s, depth, env, restriction, anc):
        """Attestation of self: prove the bare atom, then sign it."""
        if self.signer is None:
            return
        from .crypto import sign_attestation

        kp, pid = self.signer
        for s2, _ev in self._solve(goal.body, s, depth - 1, env, restriction, anc):
            atom = resolve_formula(goal.body, s2)
            if not (isinstance(atom, S.Atom) and not S.free_vars(atom)):
                continue
            issued = self.services.now() if self.services is not None else None
            sa = sign_attestation(kp, pid, atom, issued_at=issued)
            yield s2, E.AttLeaf(sa)


# ---------------------------------------------------------------------------
# Conjunction shapes and evidence finishing


def _leaves(g, addr):
    if isinstance(g, S.And):
        return _leaves(g.left, addr + (0,)) + _leaves(g.right, addr + (1,))
    return [(addr, g)]


def _assemble(g, addr, evmap):
    if isinstance(g, S.And):
        return E.PairEv(_assemble(g.left, addr + (0,), evmap), _assemble(g.right, addr + (1,), evmap))
    return evmap[addr]


def resolve_evidence(ev, s: dict):
    """Apply the final substitution to the terms embedded in evidence."""
    if isinstance(ev, E.PairEv):
        return E.PairEv(resolve_evidence(ev.left, s), resolve_evidence(ev.right, s))
    if isinstance(ev, (E.Inl, E.Inr)):
        return type(ev)(resolve_evidence(ev.body, s))
    if isinstance(ev, E.Witness):
        return E.Witness(resolve(ev.term, s), resolve_evidence(ev.body, s))
    if isinstance(ev, E.Abstraction):
        return E.Abstraction(ev.var, resolve_evidence(ev.body, s))
    if isinstance(ev, E.KnowsWrap):
        return E.KnowsWrap(ev.principals, resolve_evidence(ev.body, s))
    if isinstance(ev, E.ClauseApp):
        return E.ClauseApp(
            ev.label,
            ev.policy_digest,
            tuple(resolve(t, s) for t in ev.args),
            tuple(resolve_evidence(p, s) for p in ev.premises),
        )
    if isinstance(ev, E.TheoryHole):
        return E.TheoryHole(ev.pred, tuple(resolve(t, s) for t in ev.args), ev.receipt)
    return ev

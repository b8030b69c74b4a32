"""Abstract syntax: multi-sorted terms, formulas with attestation and
knowledge modalities, program clauses, and normalization into the
goal/clause fragment used by the engine."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import FragmentError, MacroError, SortError

BUILTIN_SORTS = ("Principal", "Time", "Nonce", "Int")

# Interpreted predicates, evaluated on ground arguments by the engine.
EQ_BUILTINS = ("=", "!=")
ORDER_BUILTINS = ("<", "<=")
BUILTIN_PREDS = EQ_BUILTINS + ORDER_BUILTINS + ("time_not_elapsed",)

# Interpreted function symbols (ground evaluation only).
BUILTIN_FUNCS = ("succ",)


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Var:
    name: str
    sort: str

    def __repr__(self):
        return f"{self.name}:{self.sort}"


@dataclass(frozen=True)
class Const:
    name: str
    sort: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class FunApp:
    symbol: str
    args: tuple

    def __repr__(self):
        return f"{self.symbol}({', '.join(map(repr, self.args))})"


Term = Var | Const | FunApp


def term_sort(t: Term) -> str:
    if isinstance(t, (Var, Const)):
        return t.sort
    if t.symbol == "succ":
        return term_sort(t.args[0])
    raise SortError(f"unknown function symbol {t.symbol}")


def term_vars(t: Term) -> set:
    if isinstance(t, Var):
        return {t}
    if isinstance(t, Const):
        return set()
    out = set()
    for a in t.args:
        out |= term_vars(a)
    return out


def term_subst(t: Term, s: dict) -> Term:
    """Apply a Var -> Term mapping to a term."""
    if isinstance(t, Var):
        return s.get(t, t)
    if isinstance(t, Const):
        return t
    return FunApp(t.symbol, tuple(term_subst(a, s) for a in t.args))


def is_ground(t: Term) -> bool:
    return not term_vars(t)


def int_value(t: Term):
    """Numeric value of a ground Int/Time term, or None."""
    if isinstance(t, Const) and t.sort in ("Int", "Time"):
        try:
            return int(t.name)
        except ValueError:
            return None
    if isinstance(t, FunApp) and t.symbol == "succ":
        v = int_value(t.args[0])
        return None if v is None else v + 1
    return None


# ---------------------------------------------------------------------------
# Formulas


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Bottom:
    pass


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple = ()


@dataclass(frozen=True)
class Attest:
    principal: Term
    body: "Formula"


@dataclass(frozen=True)
class Knows:
    principals: frozenset  # of Term, each of sort Principal
    body: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Forall:
    var: Var
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    var: Var
    body: "Formula"


@dataclass(frozen=True)
class MacroCall:
    """Unexpanded macro occurrence; eliminated by expand_macros."""

    name: str
    args: tuple  # mix of Term and Formula

    def __post_init__(self):
        if self.name not in MACRO_NAMES:
            raise MacroError(f"unknown macro {self.name!r}")


Formula = (
    Top | Bottom | Atom | Attest | Knows | And | Or | Implies | Forall | Exists | MacroCall
)

TOP = Top()
BOTTOM = Bottom()


def free_vars(f: Formula) -> set:
    if isinstance(f, (Top, Bottom)):
        return set()
    if isinstance(f, Atom):
        out = set()
        for a in f.args:
            out |= term_vars(a)
        return out
    if isinstance(f, Attest):
        return term_vars(f.principal) | free_vars(f.body)
    if isinstance(f, Knows):
        out = free_vars(f.body)
        for p in f.principals:
            out |= term_vars(p)
        return out
    if isinstance(f, (And, Or, Implies)):
        return free_vars(f.left) | free_vars(f.right)
    if isinstance(f, (Forall, Exists)):
        return free_vars(f.body) - {f.var}
    if isinstance(f, MacroCall):
        out = set()
        for a in f.args:
            out |= term_vars(a) if isinstance(a, (Var, Const, FunApp)) else free_vars(a)
        return out
    raise TypeError(f"not a formula: {f!r}")


_RENAME_COUNTER = [0]


def _fresh_rename(v: Var) -> Var:
    _RENAME_COUNTER[0] += 1
    base = v.name.split("'")[0]
    return Var(f"{base}'{_RENAME_COUNTER[0]}", v.sort)


def substitute(f: Formula, s: dict) -> Formula:
    """Capture-avoiding substitution of free variables by terms."""
    if not s:
        return f
    if isinstance(f, (Top, Bottom)):
        return f
    if isinstance(f, Atom):
        return Atom(f.pred, tuple(term_subst(a, s) for a in f.args))
    if isinstance(f, Attest):
        return Attest(term_subst(f.principal, s), substitute(f.body, s))
    if isinstance(f, Knows):
        return Knows(frozenset(term_subst(p, s) for p in f.principals), substitute(f.body, s))
    if isinstance(f, (And, Or, Implies)):
        return type(f)(substitute(f.left, s), substitute(f.right, s))
    if isinstance(f, (Forall, Exists)):
        inner = {v: t for v, t in s.items() if v != f.var}
        if not inner:
            return f
        clash = set()
        for t in inner.values():
            clash |= term_vars(t)
        var, body = f.var, f.body
        if var in clash:
            var = _fresh_rename(f.var)
            body = substitute(body, {f.var: var})
        return type(f)(var, substitute(body, inner))
    if isinstance(f, MacroCall):
        args = tuple(
            term_subst(a, s) if isinstance(a, (Var, Const, FunApp)) else substitute(a, s)
            for a in f.args
        )
        return MacroCall(f.name, args)
    raise TypeError(f"not a formula: {f!r}")


def substitute1(f: Formula, x: Var, t: Term) -> Formula:
    if term_sort(t) != x.sort:
        raise SortError(f"cannot substitute {t!r} of sort {term_sort(t)} for {x!r}")
    return substitute(f, {x: t})


# ---------------------------------------------------------------------------
# Signatures and policies


@dataclass
class Signature:
    sorts: set = field(default_factory=lambda: set(BUILTIN_SORTS))
    preds: dict = field(default_factory=dict)  # name -> tuple of arg sorts
    principals: set = field(default_factory=set)  # declared principal constants
    consts: dict = field(default_factory=dict)  # name -> sort (inferred or declared)

    def copy(self) -> "Signature":
        return Signature(set(self.sorts), dict(self.preds), set(self.principals), dict(self.consts))

    def declare_sort(self, name: str):
        self.sorts.add(name)

    def declare_pred(self, name: str, arg_sorts):
        arg_sorts = tuple(arg_sorts)
        if name in BUILTIN_PREDS:
            raise SortError(f"predicate {name!r} is reserved")
        old = self.preds.get(name)
        if old is not None and old != arg_sorts:
            raise SortError(f"predicate {name!r} redeclared with different argument sorts")
        for s in arg_sorts:
            if s not in self.sorts:
                raise SortError(f"undeclared sort {s!r} in predicate {name!r}")
        self.preds[name] = arg_sorts

    def declare_principal(self, name: str):
        self.principals.add(name)
        self.note_const(name, "Principal")

    def note_const(self, name: str, sort: str):
        old = self.consts.get(name)
        if old is not None and old != sort:
            raise SortError(f"constant {name!r} used at sorts {old!r} and {sort!r}")
        self.consts[name] = sort

    def pred_sorts(self, name: str, nargs: int):
        if name in EQ_BUILTINS:
            return None  # both args same sort, any sort
        if name in ORDER_BUILTINS:
            return None  # Int or Time, checked separately
        if name == "time_not_elapsed":
            return ("Time",)
        if name not in self.preds:
            raise SortError(f"undeclared predicate {name!r}")
        got = self.preds[name]
        if len(got) != nargs:
            raise SortError(f"predicate {name!r} expects {len(got)} arguments, got {nargs}")
        return got


@dataclass(frozen=True)
class Clause:
    """Normalized program clause: forall universals. s1 => s2 => ... => head.

    Each curried premise is one slot; a slot written as a conjunction stays
    a single slot and is discharged by a single (pair) evidence term."""

    label: str
    universals: tuple  # of Var
    slots: tuple  # of goal Formula; empty for a fact
    head: Formula  # Atom or Attest(principal, Atom)

    def is_fact(self) -> bool:
        return not self.slots

    @property
    def body(self) -> Formula:
        return TOP if not self.slots else unflatten_and(list(self.slots))


@dataclass
class Policy:
    owner: str
    signature: Signature
    clauses: list  # of Clause
    source: str = ""

    def clause(self, label: str) -> Clause | None:
        for c in self.clauses:
            if c.label == label:
                return c
        return None

    @property
    def digest(self) -> bytes:
        from . import codec

        return codec.policy_digest(self)


# ---------------------------------------------------------------------------
# Sort checking


def check_term(t: Term, expected: str, sig: Signature, bound: dict):
    if isinstance(t, Var):
        got = bound.get(t.name)
        if got is None:
            raise SortError(f"unbound variable {t.name!r}")
        if got != t.sort or t.sort != expected:
            raise SortError(f"variable {t.name!r}: expected sort {expected!r}, has {t.sort!r}")
        return
    if isinstance(t, Const):
        if t.sort != expected:
            raise SortError(f"constant {t.name!r}: expected sort {expected!r}, has {t.sort!r}")
        sig.note_const(t.name, t.sort)
        return
    if t.symbol not in BUILTIN_FUNCS:
        raise SortError(f"unknown function symbol {t.symbol!r}")
    if expected not in ("Int", "Time"):
        raise SortError(f"succ is only defined on Int and Time, not {expected!r}")
    check_term(t.args[0], expected, sig, bound)


def check_formula(f: Formula, sig: Signature, bound: dict):
    """Verify that every symbol respects the signature; records constants."""
    if isinstance(f, (Top, Bottom)):
        return
    if isinstance(f, Atom):
        if f.pred in EQ_BUILTINS:
            if len(f.args) != 2:
                raise SortError(f"{f.pred} takes two arguments")
            s0 = term_sort(f.args[0])
            for a in f.args:
                check_term(a, s0, sig, bound)
            return
        if f.pred in ORDER_BUILTINS:
            if len(f.args) != 2:
                raise SortError(f"{f.pred} takes two arguments")
            s0 = term_sort(f.args[0])
            if s0 not in ("Int", "Time"):
                raise SortError(f"{f.pred} is only defined on Int and Time")
            for a in f.args:
                check_term(a, s0, sig, bound)
            return
        sorts = sig.pred_sorts(f.pred, len(f.args))
        for a, s in zip(f.args, sorts):
            check_term(a, s, sig, bound)
        return
    if isinstance(f, Attest):
        check_term(f.principal, "Principal", sig, bound)
        check_formula(f.body, sig, bound)
        return
    if isinstance(f, Knows):
        for p in f.principals:
            check_term(p, "Principal", sig, bound)
        check_formula(f.body, sig, bound)
        return
    if isinstance(f, (And, Or, Implies)):
        check_formula(f.left, sig, bound)
        check_formula(f.right, sig, bound)
        return
    if isinstance(f, (Forall, Exists)):
        if f.var.sort not in sig.sorts:
            raise SortError(f"undeclared sort {f.var.sort!r}")
        inner = dict(bound)
        inner[f.var.name] = f.var.sort
        check_formula(f.body, sig, inner)
        return
    if isinstance(f, MacroCall):
        return  # checked during expansion
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Normalization

# Rewrites applied to a fixpoint:
#   <K>(p /\ q)      ->  <K>p /\ <K>q
#   <K>(Qx. p)       ->  Qx. <K>p         (K does not capture x)
#   <K><K>p          ->  <K>p
#   <L><K>a          ->  <K>a             (premise strengthening via the unit law)
# <K>(G => a) is rewritten to (G => <K>a) only in clause-head position,
# which happens in to_clauses below.


def normalize(f: Formula) -> Formula:
    if isinstance(f, (Top, Bottom, Atom)):
        return f
    if isinstance(f, MacroCall):
        raise FragmentError(f"unexpanded macro {f.name!r}; run expand_macros first")
    if isinstance(f, (And, Or, Implies)):
        return type(f)(normalize(f.left), normalize(f.right))
    if isinstance(f, (Forall, Exists)):
        return type(f)(f.var, normalize(f.body))
    if isinstance(f, Knows):
        return Knows(f.principals, normalize(f.body))
    if isinstance(f, Attest):
        body = normalize(f.body)
        if isinstance(body, And):
            return normalize(And(Attest(f.principal, body.left), Attest(f.principal, body.right)))
        if isinstance(body, (Forall, Exists)):
            if body.var in term_vars(f.principal):
                raise FragmentError("attesting principal captured by quantifier")
            return type(body)(body.var, normalize(Attest(f.principal, body.body)))
        if isinstance(body, Attest):
            if body.principal == f.principal:
                return body
            if isinstance(body.body, Atom):
                # Strengthen <L><K>a to <K>a: sound for goals and clause
                # premises since <K>a implies <L><K>a by the unit law.
                return body
            return normalize(Attest(f.principal, normalize(body)))
        return Attest(f.principal, body)
    raise TypeError(f"not a formula: {f!r}")


def is_atomic_goal(f: Formula) -> bool:
    """Atom or atomic attestation, the Atom category of the goal grammar."""
    if isinstance(f, Atom):
        return True
    return isinstance(f, Attest) and isinstance(f.body, Atom)


def validate_goal(f: Formula):
    """Raise FragmentError unless f conforms to the goal grammar."""
    if isinstance(f, Top):
        return
    if isinstance(f, Bottom):
        raise FragmentError("false is not a goal")
    if is_atomic_goal(f):
        return
    if isinstance(f, Attest):
        raise FragmentError(f"non-atomic attestation in goal position: {fmt_formula(f)}")
    if isinstance(f, Knows):
        validate_goal(f.body)
        return
    if isinstance(f, (And, Or)):
        validate_goal(f.left)
        validate_goal(f.right)
        return
    if isinstance(f, Implies):
        clauses_of(f.left, "hyp")  # left side must be a program
        validate_goal(f.right)
        return
    if isinstance(f, (Forall, Exists)):
        validate_goal(f.body)
        return
    raise FragmentError(f"not a goal: {f!r}")


def _head_form(f: Formula):
    """Split a quantifier-free formula into (premise_slots, atomic_head)."""
    slots = []
    while True:
        if isinstance(f, Implies):
            slots.append(f.left)
            f = f.right
        elif isinstance(f, Attest) and isinstance(f.body, Implies):
            # derived rule: <K>(G => a) acts as G => <K>a
            inner = f.body
            slots.append(inner.left)
            f = normalize(Attest(f.principal, inner.right))
        else:
            break
    if isinstance(f, Atom):
        if f.pred in BUILTIN_PREDS:
            raise FragmentError(f"builtin {f.pred!r} cannot head a clause")
        return slots, f
    if isinstance(f, Attest) and isinstance(f.body, Atom):
        if f.body.pred in BUILTIN_PREDS:
            raise FragmentError(f"builtin {f.body.pred!r} cannot head a clause")
        return slots, f
    raise FragmentError(f"clause head is not atomic: {fmt_formula(f)}")


def clauses_of(f: Formula, label: str) -> list:
    """Normalize a formula into program clauses (the D grammar)."""
    f = normalize(f)
    universals = []
    while isinstance(f, Forall):
        universals.append(f.var)
        f = f.body
    if isinstance(f, And):
        out = []
        parts = flatten_and(f)
        for i, part in enumerate(parts):
            sub = f"{label}_{i + 1}"
            for c in clauses_of(part, sub):
                out.append(Clause(c.label, tuple(universals) + c.universals, c.slots, c.head))
        return out
    if isinstance(f, Forall):  # nested after And split
        return [
            Clause(c.label, tuple(universals) + c.universals, c.slots, c.head)
            for c in clauses_of(f, label)
        ]
    slots, head = _head_form(f)
    slots = tuple(normalize(s) for s in slots)
    for s in slots:
        validate_goal(s)
    return [Clause(label, tuple(universals), slots, head)]


def flatten_and(f: Formula) -> list:
    if isinstance(f, And):
        return flatten_and(f.left) + flatten_and(f.right)
    return [f]


def unflatten_and(parts: list) -> Formula:
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = And(p, out)
    return out


# ---------------------------------------------------------------------------
# Macros

MACRO_NAMES = (
    "delegate",
    "delegate_indirect",
    "past",
    "future",
    "curr",
    "attest_after",
    "attest_before",
    "eventually",
    "revocable_delegate",
)

TIME_SOURCE = Const("T", "Principal")


def _pred_binders(sig: Signature, pred: str, prefix: str = "x"):
    if pred not in sig.preds:
        raise MacroError(f"macro over undeclared predicate {pred!r}")
    return tuple(Var(f"{prefix}{i + 1}", s) for i, s in enumerate(sig.preds[pred]))


def _close_forall(binders, f: Formula) -> Formula:
    for v in reversed(binders):
        f = Forall(v, f)
    return f


def expand_macros(f: Formula, sig: Signature) -> Formula:
    """Rewrite macro calls into core formulas against the declared predicates."""
    if isinstance(f, MacroCall):
        return _expand_one(f, sig)
    if isinstance(f, (Top, Bottom, Atom)):
        return f
    if isinstance(f, Attest):
        return Attest(f.principal, expand_macros(f.body, sig))
    if isinstance(f, Knows):
        return Knows(f.principals, expand_macros(f.body, sig))
    if isinstance(f, (And, Or, Implies)):
        return type(f)(expand_macros(f.left, sig), expand_macros(f.right, sig))
    if isinstance(f, (Forall, Exists)):
        return type(f)(f.var, expand_macros(f.body, sig))
    raise TypeError(f"not a formula: {f!r}")


def _pred_name(arg) -> str:
    if isinstance(arg, Const):
        return arg.name
    if isinstance(arg, Atom) and not arg.args:
        return arg.pred
    raise MacroError(f"expected a predicate name, got {arg!r}")


def _expand_one(m: MacroCall, sig: Signature) -> Formula:
    name, args = m.name, m.args
    if name == "delegate":
        k, l = args[0], args[1]
        pred = _pred_name(args[2])
        xs = _pred_binders(sig, pred)
        inner = Implies(Attest(l, Atom(pred, xs)), Atom(pred, xs))
        return _close_forall(xs, Attest(k, inner))
    if name == "delegate_indirect":
        k, l = args[0], args[1]
        pred = _pred_name(args[2])
        xs = _pred_binders(sig, pred)
        mv = Var("M", "Principal")
        p = Atom(pred, xs)
        # The indirect-delegation schema, pre-applied with the derived
        # implication rule so the inner <L>(...) premise stays in the fragment.
        body = And(Attest(mv, p), Implies(Attest(mv, p), Attest(l, p)))
        return _close_forall(xs + (mv,), Attest(k, Implies(body, p)))
    if name == "past":
        t = args[0]
        s = Var("s", "Time")
        return Exists(s, And(Atom("<", (t, s)), Attest(TIME_SOURCE, Atom("time", (s,)))))
    if name == "future":
        # Constructive negation is out of reach of goal-directed search; the
        # trusted time source answers this builtin against its closed log.
        return Atom("time_not_elapsed", (args[0],))
    if name == "curr":
        t = args[0]
        return And(
            Attest(TIME_SOURCE, Atom("time", (t,))),
            Atom("time_not_elapsed", (FunApp("succ", (t,)),)),
        )
    if name == "attest_after":
        k, t, atom = args
        return And(Attest(k, atom), Attest(TIME_SOURCE, Atom("time", (t,))))
    if name == "attest_before":
        t, atom = args
        if not isinstance(atom, Atom):
            raise MacroError("attest_before expects an atom argument")
        before = f"before_{atom.pred}"
        if before not in sig.preds:
            sig.declare_pred(before, sig.preds.get(atom.pred, ()) + ("Time",))
        return Attest(TIME_SOURCE, Atom(before, atom.args + (t,)))
    if name == "eventually":
        k, t, atom = args
        return _expand_one(MacroCall("attest_after", (k, t, atom)), sig)
    if name == "revocable_delegate":
        k, l = args[0], args[1]
        pred = _pred_name(args[2])
        sorts = sig.preds.get(pred)
        if sorts is None:
            raise MacroError(f"macro over undeclared predicate {pred!r}")
        if not sorts or sorts[-1] != "Time":
            raise MacroError(f"revocable_delegate needs {pred!r} to end in a Time argument")
        if "notRevoked" not in sig.preds:
            sig.declare_pred("notRevoked", ("Principal", "Time"))
        xs = _pred_binders(sig, pred)
        s = xs[-1]
        t = Var("t", "Time")
        p = Atom(pred, xs)
        premise = And(
            Attest(l, p),
            And(Attest(k, Atom("notRevoked", (l, t))), Atom("<", (s, t))),
        )
        return _close_forall(xs + (t,), Attest(k, Implies(premise, p)))
    raise MacroError(f"unknown macro {name!r}")


# ---------------------------------------------------------------------------
# Pretty printing (inverse of the parser)


def fmt_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        if t.name.replace("_", "").isalnum():
            return t.name
        return f'"{t.name}"'
    return f"{t.symbol}({', '.join(fmt_term(a) for a in t.args)})"


_INFIX = {"=", "!=", "<", "<="}


def fmt_formula(f: Formula, prec: int = 0) -> str:
    # precedence: 0 =>, 1 \/, 2 /\, 3 atoms/quantifiers
    def wrap(s, p):
        return f"({s})" if p < prec else s

    if isinstance(f, Top):
        return "true"
    if isinstance(f, Bottom):
        return "false"
    if isinstance(f, Atom):
        if f.pred in _INFIX:
            return f"{fmt_term(f.args[0])} {f.pred} {fmt_term(f.args[1])}"
        if not f.args:
            return f.pred
        return f"{f.pred}({', '.join(fmt_term(a) for a in f.args)})"
    if isinstance(f, Attest):
        body = f.body
        if isinstance(body, Atom) and body.pred not in _INFIX:
            return f"{fmt_term(f.principal)} says {fmt_formula(body, 3)}"
        return f"{fmt_term(f.principal)} says ({fmt_formula(body, 0)})"
    if isinstance(f, Knows):
        names = ", ".join(sorted(fmt_term(p) for p in f.principals))
        return wrap(f"knows {{{names}}} {fmt_formula(f.body, 3)}", 3)
    if isinstance(f, And):
        return wrap(f"{fmt_formula(f.left, 3)} /\\ {fmt_formula(f.right, 2)}", 2)
    if isinstance(f, Or):
        return wrap(f"{fmt_formula(f.left, 2)} \\/ {fmt_formula(f.right, 1)}", 1)
    if isinstance(f, Implies):
        return wrap(f"{fmt_formula(f.left, 1)} => {fmt_formula(f.right, 0)}", 0)
    if isinstance(f, (Forall, Exists)):
        kw = "forall" if isinstance(f, Forall) else "exists"
        binders = []
        while isinstance(f, (Forall, Exists)) and (
            (kw == "forall") == isinstance(f, Forall)
        ):
            binders.append(f"{f.var.name}:{f.var.sort}")
            f = f.body
        return wrap(f"{kw} {', '.join(binders)}. {fmt_formula(f, 0)}", 0)
    if isinstance(f, MacroCall):
        parts = []
        for a in f.args:
            parts.append(fmt_term(a) if isinstance(a, (Var, Const, FunApp)) else fmt_formula(a, 3))
        return f"{f.name}({', '.join(parts)})"
    raise TypeError(f"not a formula: {f!r}")


def fmt_clause(c: Clause) -> str:
    parts = [f"{c.label}:"]
    if c.universals:
        binders = ", ".join(f"{v.name}:{v.sort}" for v in c.universals)
        parts.append(f"forall {binders}.")
    for s in c.slots:
        parts.append(f"{fmt_formula(s, 1)} =>")
    parts.append(fmt_formula(c.head, 3))
    return " ".join(parts) + "."


def fmt_policy(p: Policy) -> str:
    lines = []
    for s in sorted(p.signature.sorts - set(BUILTIN_SORTS)):
        lines.append(f"sort {s}.")
    for name in sorted(p.signature.preds):
        args = ", ".join(p.signature.preds[name])
        lines.append(f"pred {name}({args}).")
    if p.signature.principals:
        lines.append(f"principal {', '.join(sorted(p.signature.principals))}.")
    for c in p.clauses:
        lines.append(fmt_clause(c))
    return "\n".join(lines) + "\n"

"""Concrete syntax for policy files and queries.

Policy grammar (UTF-8, `#` comments):

    decl    := "sort" IDENT "." | "pred" IDENT "(" sortlist ")" "."
             | "principal" IDENT ("," IDENT)* "." | "const" IDENT ":" IDENT "."
    clause  := LABEL ":" formula "."
    formula := "forall"/"exists" binders "." formula
             | formula "=>" formula | formula "\\/" formula | formula "/\\" formula
             | IDENT "says" atom | IDENT "says" "(" formula ")"
             | "knows" "{" identlist "}" unit | term CMP term | atom
             | "true" | "false" | "(" formula ")"

Undeclared identifiers in policies become constants (sort inferred from the
predicate position); in queries they become free variables, reported in
first-occurrence order and treated as existentially closed.
"""

from __future__ import annotations

import re

from .errors import ParseError, SortError
from . import syntax as S

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<op>=>|/\\|\\/|!=|<=|[=<(){},.:])
  | (?P<int>-?\d+)
  | (?P<str>"[^"\n]*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)

_KEYWORDS = {
    "sort",
    "pred",
    "principal",
    "const",
    "forall",
    "exists",
    "says",
    "knows",
    "true",
    "false",
}

_CMP_OPS = ("=", "!=", "<", "<=")


class _Lexer:
    def __init__(self, text: str):
        self.toks = []
        line, col = 1, 1
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise ParseError(f"unexpected character {text[pos]!r}", line, col)
            lexeme = m.group(0)
            if m.lastgroup != "ws":
                self.toks.append((m.lastgroup, lexeme, line, col))
            nl = lexeme.count("\n")
            if nl:
                line += nl
                col = len(lexeme) - lexeme.rfind("\n")
            else:
                col += len(lexeme)
            pos = m.end()
        self.toks.append(("eof", "", line, col))
        self.i = 0

    def peek(self, ahead: int = 0):
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self):
        tok = self.toks[self.i]
        if tok[0] != "eof":
            self.i += 1
        return tok

    def expect(self, lexeme: str):
        kind, lex, line, col = self.next()
        if lex != lexeme or kind == "eof":
            raise ParseError(f"expected {lexeme!r}, found {lex or 'end of input'!r}", line, col)

    def error(self, msg: str):
        _, _, line, col = self.peek()
        raise ParseError(msg, line, col)


# raw term shapes produced before sort resolution
# ("name", s) | ("int", n) | ("str", s) | ("app", fn, [raw...])


class _Parser:
    def __init__(self, text: str, sig: S.Signature, query_mode: bool):
        self.lx = _Lexer(text)
        self.sig = sig
        self.query_mode = query_mode
        self.scope = {}  # binder name -> sort
        self.free = {}  # query-mode free variable name -> sort (insertion ordered)

    # -- raw term layer ----------------------------------------------------

    def parse_raw_term(self):
        kind, lex, line, col = self.lx.next()
        if kind == "int":
            return ("int", int(lex))
        if kind == "str":
            return ("str", lex[1:-1])
        if kind == "ident":
            if self.lx.peek()[1] == "(" and lex in S.BUILTIN_FUNCS:
                self.lx.next()
                args = [self.parse_raw_term()]
                while self.lx.peek()[1] == ",":
                    self.lx.next()
                    args.append(self.parse_raw_term())
                self.lx.expect(")")
                return ("app", lex, args)
            return ("name", lex)
        raise ParseError(f"expected a term, found {lex!r}", line, col)

    def raw_sort(self, raw):
        """Best-effort sort of a raw term without an expected sort, or None."""
        kind = raw[0]
        if kind == "int":
            return None  # Int or Time, caller decides
        if kind == "str":
            return None
        if kind == "app":
            return self.raw_sort(raw[2][0])
        name = raw[1]
        if name in self.scope:
            return self.scope[name]
        if name in self.free:
            return self.free[name]
        return self.sig.consts.get(name)

    def resolve(self, raw, expected: str):
        kind = raw[0]
        if kind == "int":
            if expected not in ("Int", "Time"):
                raise SortError(f"integer literal where sort {expected!r} is expected")
            return S.Const(str(raw[1]), expected)
        if kind == "str":
            self.sig.note_const(raw[1], expected)
            return S.Const(raw[1], expected)
        if kind == "app":
            if expected not in ("Int", "Time"):
                raise SortError(f"succ(..) where sort {expected!r} is expected")
            return S.FunApp(raw[1], (self.resolve(raw[2][0], expected),))
        name = raw[1]
        if name in self.scope:
            if self.scope[name] != expected:
                raise SortError(
                    f"variable {name!r} has sort {self.scope[name]!r}, expected {expected!r}"
                )
            return S.Var(name, expected)
        if name in self.sig.consts:
            if self.sig.consts[name] != expected:
                raise SortError(
                    f"constant {name!r} has sort {self.sig.consts[name]!r}, expected {expected!r}"
                )
            return S.Const(name, expected)
        if self.query_mode:
            got = self.free.setdefault(name, expected)
            if got != expected:
                raise SortError(f"variable {name!r} used at sorts {got!r} and {expected!r}")
            return S.Var(name, expected)
        if expected not in self.sig.sorts:
            raise SortError(f"undeclared sort {expected!r}")
        self.sig.note_const(name, expected)
        return S.Const(name, expected)

    def resolve_principal(self, raw):
        return self.resolve(raw, "Principal")

    # -- formulas ----------------------------------------------------------

    def parse_formula(self):
        kind, lex, _, _ = self.lx.peek()
        if lex in ("forall", "exists"):
            self.lx.next()
            binders = self.parse_binders()
            saved = {v.name: self.scope.get(v.name) for v in binders}
            for v in binders:
                self.scope[v.name] = v.sort
            body = self.parse_formula()
            for name, old in saved.items():
                if old is None:
                    del self.scope[name]
                else:
                    self.scope[name] = old
            ctor = S.Forall if lex == "forall" else S.Exists
            for v in reversed(binders):
                body = ctor(v, body)
            return body
        left = self.parse_or()
        if self.lx.peek()[1] == "=>":
            self.lx.next()
            return S.Implies(left, self.parse_formula())
        return left

    def parse_binders(self):
        binders, pending = [], []
        while True:
            kind, lex, line, col = self.lx.next()
            if kind != "ident":
                raise ParseError(f"expected a binder name, found {lex!r}", line, col)
            pending.append(lex)
            nxt = self.lx.next()[1]
            if nxt == ",":
                continue
            if nxt != ":":
                self.lx.error("expected ':' in binder list")
            skind, sort, sline, scol = self.lx.next()
            if skind != "ident":
                raise ParseError("expected a sort name", sline, scol)
            if sort not in self.sig.sorts:
                raise SortError(f"undeclared sort {sort!r}")
            binders.extend(S.Var(n, sort) for n in pending)
            pending = []
            nxt = self.lx.peek()[1]
            if nxt == ",":
                self.lx.next()
                continue
            self.lx.expect(".")
            return binders

    def parse_or(self):
        f = self.parse_and()
        while self.lx.peek()[1] == "\\/":
            self.lx.next()
            f = S.Or(f, self.parse_and())
        return f

    def parse_and(self):
        f = self.parse_unit()
        while self.lx.peek()[1] == "/\\":
            self.lx.next()
            f = S.And(f, self.parse_unit())
        return f

    def parse_unit(self):
        kind, lex, line, col = self.lx.peek()
        if lex == "(":
            self.lx.next()
            f = self.parse_formula()
            self.lx.expect(")")
            return f
        if lex == "true":
            self.lx.next()
            return S.TOP
        if lex == "false":
            self.lx.next()
            return S.BOTTOM
        if lex in ("forall", "exists"):
            return self.parse_formula()
        if lex == "knows":
            self.lx.next()
            self.lx.expect("{")
            principals = []
            if self.lx.peek()[1] != "}":
                principals.append(self.resolve_principal(self.parse_raw_term()))
                while self.lx.peek()[1] == ",":
                    self.lx.next()
                    principals.append(self.resolve_principal(self.parse_raw_term()))
            self.lx.expect("}")
            return S.Knows(frozenset(principals), self.parse_unit())
        if kind == "ident" and self.lx.peek(1)[1] == "says":
            princ = self.resolve_principal(self.parse_raw_term())
            self.lx.next()  # says
            if self.lx.peek()[1] == "(":
                self.lx.next()
                body = self.parse_formula()
                self.lx.expect(")")
            else:
                body = self.parse_atom_or_cmp()
            return S.Attest(princ, body)
        if kind == "ident" and lex in S.MACRO_NAMES:
            return self.parse_macro()
        return self.parse_atom_or_cmp()

    def parse_atom_or_cmp(self):
        kind, lex, line, col = self.lx.peek()
        if kind == "ident" and self.lx.peek(1)[1] == "(" and lex not in S.BUILTIN_FUNCS:
            return self.parse_atom()
        raw = self.parse_raw_term()
        op = self.lx.peek()[1]
        if op in _CMP_OPS:
            self.lx.next()
            raw2 = self.parse_raw_term()
            sort = self.raw_sort(raw) or self.raw_sort(raw2)
            if sort is None:
                if raw[0] == "int" or raw2[0] == "int":
                    sort = "Int"
                else:
                    raise SortError(f"cannot infer the sort of {op!r} comparison operands")
            if op in S.ORDER_BUILTINS and sort not in ("Int", "Time"):
                raise SortError(f"{op!r} is only defined on Int and Time")
            return S.Atom(op, (self.resolve(raw, sort), self.resolve(raw2, sort)))
        if raw[0] == "name":
            name = raw[1]
            if name in self.sig.preds and not self.sig.preds[name]:
                return S.Atom(name, ())
            raise ParseError(f"expected a formula, found bare term {name!r}", line, col)
        raise ParseError("expected a formula", line, col)

    def parse_atom(self):
        kind, pred, line, col = self.lx.next()
        if pred not in self.sig.preds and pred != "time_not_elapsed":
            raise SortError(f"undeclared predicate {pred!r}")
        self.lx.expect("(")
        raws = []
        if self.lx.peek()[1] != ")":
            raws.append(self.parse_raw_term())
            while self.lx.peek()[1] == ",":
                self.lx.next()
                raws.append(self.parse_raw_term())
        self.lx.expect(")")
        expected = ("Time",) if pred == "time_not_elapsed" else self.sig.preds[pred]
        if len(raws) != len(expected):
            raise SortError(
                f"predicate {pred!r} expects {len(expected)} arguments, got {len(raws)}"
            )
        return S.Atom(pred, tuple(self.resolve(r, s) for r, s in zip(raws, expected)))

    _MACRO_ARGS = {
        "delegate": ("P", "P", "pred"),
        "delegate_indirect": ("P", "P", "pred"),
        "revocable_delegate": ("P", "P", "pred"),
        "past": ("T",),
        "future": ("T",),
        "curr": ("T",),
        "attest_after": ("P", "T", "atom"),
        "attest_before": ("T", "atom"),
        "eventually": ("P", "T", "atom"),
    }

    def parse_macro(self):
        name = self.lx.next()[1]
        shapes = self._MACRO_ARGS[name]
        self.lx.expect("(")
        args = []
        for i, shape in enumerate(shapes):
            if i:
                self.lx.expect(",")
            if shape == "P":
                args.append(self.resolve_principal(self.parse_raw_term()))
            elif shape == "T":
                args.append(self.resolve(self.parse_raw_term(), "Time"))
            elif shape == "pred":
                kind, lex, line, col = self.lx.next()
                if kind != "ident":
                    raise ParseError("expected a predicate name", line, col)
                args.append(S.Atom(lex, ()))
            else:  # atom
                args.append(self.parse_atom())
        self.lx.expect(")")
        return S.MacroCall(name, tuple(args))

    # -- declarations and clauses -----------------------------------------

    def parse_policy(self, owner: str) -> S.Policy:
        clauses = []
        labels = set()
        while True:
            kind, lex, line, col = self.lx.peek()
            if kind == "eof":
                break
            if lex == "sort":
                self.lx.next()
                name = self._ident("sort name")
                self.sig.declare_sort(name)
                self.lx.expect(".")
            elif lex == "pred":
                self.lx.next()
                name = self._ident("predicate name")
                self.lx.expect("(")
                sorts = []
                if self.lx.peek()[1] != ")":
                    sorts.append(self._ident("sort name"))
                    while self.lx.peek()[1] == ",":
                        self.lx.next()
                        sorts.append(self._ident("sort name"))
                self.lx.expect(")")
                self.sig.declare_pred(name, sorts)
                self.lx.expect(".")
            elif lex == "const":
                self.lx.next()
                name = self._ident("constant name")
                self.lx.expect(":")
                sort = self._ident("sort name")
                if sort not in self.sig.sorts:
                    raise SortError(f"undeclared sort {sort!r}")
                self.sig.note_const(name, sort)
                self.lx.expect(".")
            elif lex == "principal":
                self.lx.next()
                self.sig.declare_principal(self._ident("principal name"))
                while self.lx.peek()[1] == ",":
                    self.lx.next()
                    self.sig.declare_principal(self._ident("principal name"))
                self.lx.expect(".")
            elif kind == "ident" and self.lx.peek(1)[1] == ":":
                label = self.lx.next()[1]
                if label in labels:
                    raise ParseError(f"duplicate clause label {label!r}", line, col)
                labels.add(label)
                self.lx.next()  # :
                f = self.parse_formula()
                self.lx.expect(".")
                f = S.expand_macros(f, self.sig)
                S.check_formula(f, self.sig, {})
                for c in S.clauses_of(f, label):
                    clauses.append(c)
            else:
                raise ParseError(f"expected a declaration or clause, found {lex!r}", line, col)
        return S.Policy(owner=owner, signature=self.sig, clauses=clauses)

    def _ident(self, what: str) -> str:
        kind, lex, line, col = self.lx.next()
        if kind != "ident" or lex in _KEYWORDS:
            raise ParseError(f"expected a {what}, found {lex!r}", line, col)
        return lex


def base_signature() -> S.Signature:
    sig = S.Signature()
    sig.declare_principal("T")  # trusted time source
    sig.declare_principal("N")  # nonce service
    sig.declare_pred("time", ("Time",))
    sig.declare_pred("nonce", ("Nonce",))
    return sig


def parse_policy(text: str, owner: str = "", sig: S.Signature | None = None) -> S.Policy:
    """Parse, macro-expand, sort-check and normalize a policy file."""
    p = _Parser(text, sig.copy() if sig else base_signature(), query_mode=False)
    return p.parse_policy(owner)


def parse_goal(text: str, sig: S.Signature):
    """Parse a query.  Returns (goal, free_vars) with free variables in
    first-occurrence order; they are treated as existentially closed."""
    p = _Parser(text, sig.copy(), query_mode=True)
    f = p.parse_formula()
    kind, lex, line, col = p.lx.peek()
    if kind != "eof" and lex != ".":
        raise ParseError(f"trailing input {lex!r}", line, col)
    f = S.expand_macros(f, p.sig)
    f = S.normalize(f)
    S.validate_goal(f)
    return f, [S.Var(n, s) for n, s in p.free.items()]

"""S-expression reader for POAPS source.

Parses program text into :class:`Expr` trees grouped into a :class:`ProgramSet`,
prints them back canonically, and validates the special forms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterator

SPECIAL_FORMS = ("define", "choose", "if", "let")


class ParseError(Exception):
    def __init__(self, message: str, span: tuple[int, int] | None = None):
        self.span = span
        if span is not None:
            message = f"{message} at bytes {span[0]}..{span[1]}"
        super().__init__(message)


@dataclass(eq=False)
class Expr:
    """One node of the syntax tree.

    ``kind`` is one of ``symbol``, ``number``, ``boolean``, ``string``, ``list``.
    Quoted lists (``'()``) are lists with ``quoted=True`` and evaluate to literal
    tuples.
    """

    kind: str
    value: object = None
    items: list["Expr"] = field(default_factory=list)
    quoted: bool = False
    eid: int = -1
    span: tuple[int, int] = (0, 0)

    @property
    def is_list(self) -> bool:
        return self.kind == "list"

    @property
    def head(self) -> str | None:
        if self.kind == "list" and not self.quoted and self.items and self.items[0].kind == "symbol":
            return self.items[0].value
        return None

    def walk(self) -> Iterator["Expr"]:
        yield self
        for item in self.items:
            yield from item.walk()

    def same_shape(self, other: "Expr") -> bool:
        """Structural equality ignoring spans and ids."""
        if self.kind != other.kind or self.quoted != other.quoted:
            return False
        if self.kind != "list":
            return type(self.value) is type(other.value) and self.value == other.value
        return len(self.items) == len(other.items) and all(
            a.same_shape(b) for a, b in zip(self.items, other.items)
        )

    def literal(self):
        """Python value of a literal expression (constants and quoted lists)."""
        if self.kind == "list":
            return tuple(item.literal() for item in self.items)
        if self.kind == "symbol":
            return self.value
        return self.value

    def __repr__(self) -> str:
        return f"Expr({print_canonical(self)!r}, eid={self.eid})"


@dataclass(eq=False)
class ProgramDef:
    name: str
    params: list[str]
    body: Expr
    source: Expr

    def expr(self, eid: int) -> Expr:
        return self.by_id[eid]

    @property
    def by_id(self) -> dict[int, Expr]:
        cached = self.__dict__.get("_by_id")
        if cached is None:
            cached = {e.eid: e for e in self.source.walk()}
            self.__dict__["_by_id"] = cached
        return cached


@dataclass(eq=False)
class ProgramSet:
    defs: dict[str, ProgramDef] = field(default_factory=dict)
    entry: str | None = None

    def __getitem__(self, name: str) -> ProgramDef:
        return self.defs[name]

    def __contains__(self, name: str) -> bool:
        return name in self.defs

    def merged(self, other: "ProgramSet") -> "ProgramSet":
        out = ProgramSet(dict(self.defs), self.entry)
        for name, d in other.defs.items():
            if name in out.defs:
                raise ParseError(f"duplicate definition {name!r}", d.source.span)
            out.defs[name] = d
        return out


# -- lexing -----------------------------------------------------------------

_DELIMS = set("()'\"; \t\r\n")


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        # byte offsets for spans; text index -> byte index
        self._byte = _byte_offsets(text)

    def span(self, start: int, end: int) -> tuple[int, int]:
        return (self._byte[start], self._byte[end])

    def skip(self) -> None:
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch == ";":
                nl = text.find("\n", self.pos)
                self.pos = len(text) if nl < 0 else nl + 1
            elif ch.isspace():
                self.pos += 1
            else:
                break

    def read_all(self) -> list[Expr]:
        out = []
        while True:
            self.skip()
            if self.pos >= len(self.text):
                return out
            out.append(self.read())

    def read(self) -> Expr:
        self.skip()
        text = self.text
        if self.pos >= len(text):
            raise ParseError("unexpected end of input", self.span(self.pos, self.pos))
        start = self.pos
        ch = text[start]
        if ch == "(":
            return self._read_list(start, quoted=False)
        if ch == ")":
            raise ParseError("unbalanced ')'", self.span(start, start + 1))
        if ch == "'":
            if start + 1 < len(text) and text[start + 1] == "(":
                self.pos += 1
                expr = self._read_list(start + 1, quoted=True)
                expr.span = self.span(start, self.pos)
                return expr
            end = text.find("'", start + 1)
            if end < 0:
                raise ParseError("unterminated quoted string", self.span(start, len(text)))
            self.pos = end + 1
            return Expr("string", text[start + 1 : end], span=self.span(start, self.pos))
        if ch == '"':
            return self._read_string(start)
        end = start
        while end < len(text) and text[end] not in _DELIMS:
            end += 1
        self.pos = end
        return _atom(text[start:end], self.span(start, end))

    def _read_list(self, start: int, quoted: bool) -> Expr:
        self.pos = start + 1
        items = []
        while True:
            self.skip()
            if self.pos >= len(self.text):
                raise ParseError("unbalanced '('", self.span(start, len(self.text)))
            if self.text[self.pos] == ")":
                self.pos += 1
                return Expr("list", items=items, quoted=quoted, span=self.span(start, self.pos))
            items.append(self.read())

    def _read_string(self, start: int) -> Expr:
        text = self.text
        i = start + 1
        buf = []
        while i < len(text):
            ch = text[i]
            if ch == "\\" and i + 1 < len(text):
                buf.append({"n": "\n", "t": "\t"}.get(text[i + 1], text[i + 1]))
                i += 2
                continue
            if ch == '"':
                self.pos = i + 1
                return Expr("string", "".join(buf), span=self.span(start, self.pos))
            buf.append(ch)
            i += 1
        raise ParseError("unterminated string", self.span(start, len(text)))


def _byte_offsets(text: str) -> list[int]:
    offsets = [0] * (len(text) + 1)
    n = 0
    for i, ch in enumerate(text):
        offsets[i] = n
        n += len(ch.encode("utf-8"))
    offsets[len(text)] = n
    return offsets


def _atom(token: str, span: tuple[int, int]) -> Expr:
    if token == "#t":
        return Expr("boolean", True, span=span)
    if token == "#f":
        return Expr("boolean", False, span=span)
    try:
        return Expr("number", int(token), span=span)
    except ValueError:
        pass
    if any(c.isdigit() for c in token):
        try:
            num = Decimal(token)
        except ArithmeticError:
            num = None
        if num is not None and num.is_finite():
            return Expr("number", num, span=span)
    return Expr("symbol", token, span=span)


# -- program structure -------------------------------------------------------


def _assign_ids(root: Expr) -> None:
    for i, e in enumerate(root.walk()):
        e.eid = i


def _to_def(form: Expr) -> ProgramDef:
    if form.head != "define":
        raise ParseError("top-level form must be (define ...)", form.span)
    if len(form.items) != 3:
        raise ParseError("malformed define: expected (define (name params...) body)", form.span)
    sig = form.items[1]
    if sig.kind != "list" or sig.quoted or not sig.items or any(i.kind != "symbol" for i in sig.items):
        raise ParseError("malformed define signature", sig.span)
    name = sig.items[0].value
    params = [i.value for i in sig.items[1:]]
    if len(set(params)) != len(params):
        raise ParseError(f"duplicate parameter names in {name!r}", sig.span)
    _assign_ids(form)
    return ProgramDef(name, params, form.items[2], form)


def parse(source: str) -> ProgramSet:
    """Parse source text holding zero or more ``define`` forms."""
    out = ProgramSet()
    for form in _Reader(source).read_all():
        d = _to_def(form)
        if d.name in out.defs:
            raise ParseError(f"duplicate definition {d.name!r}", form.span)
        out.defs[d.name] = d
    return out


def read_datum(text: str):
    """Read one S-expression as a Normal value (used for CLI arguments)."""
    r = _Reader(text)
    expr = r.read()
    r.skip()
    if r.pos != len(text):
        raise ParseError("trailing input after datum", r.span(r.pos, len(text)))
    return expr.literal()


# -- printing ----------------------------------------------------------------


def format_value(value) -> str:
    if value is True:
        return "#t"
    if value is False:
        return "#f"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, tuple):
        return "(" + " ".join(format_value(v) for v in value) + ")"
    return str(value)


def print_canonical(expr: Expr) -> str:
    """Canonical single-spaced text; ``parse`` of the result has the same shape."""
    if expr.kind == "list":
        body = "(" + " ".join(print_canonical(i) for i in expr.items) + ")"
        return "'" + body if expr.quoted else body
    if expr.kind == "symbol":
        return expr.value
    return format_value(expr.value)


def print_program(ps: ProgramSet) -> str:
    return "\n".join(print_canonical(d.source) for d in ps.defs.values()) + ("\n" if ps.defs else "")


# -- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    definition: str
    span: tuple[int, int]

    def __str__(self) -> str:
        return f"{self.definition}: {self.code}: {self.message} [{self.span[0]}..{self.span[1]}]"


def is_dynamic_choose(expr: Expr) -> bool:
    return expr.head == "choose" and len(expr.items) == 2


def validate(ps: ProgramSet, registry=None) -> list[Diagnostic]:
    """Check special-form shapes, call targets and free symbols.

    ``registry`` is anything supporting ``in`` and ``arity(name)``; without one,
    only user definitions resolve.
    """
    diags: list[Diagnostic] = []
    for d in ps.defs.values():
        _Validator(ps, registry, d, diags).run()
    return diags


class _Validator:
    def __init__(self, ps, registry, d: ProgramDef, diags):
        self.ps, self.registry, self.d, self.diags = ps, registry, d, diags

    def err(self, code: str, msg: str, expr: Expr) -> None:
        self.diags.append(Diagnostic(code, msg, self.d.name, expr.span))

    def run(self) -> None:
        self.check(self.d.body, frozenset(self.d.params))

    def _callable(self, name: str) -> int | None:
        if name in self.ps.defs:
            return len(self.ps.defs[name].params)
        if self.registry is not None and name in self.registry:
            return self.registry.arity(name)
        return None

    def check(self, e: Expr, scope: frozenset) -> None:
        if e.kind == "symbol":
            if e.value not in scope:
                self.err("unbound-symbol", f"free symbol {e.value!r}", e)
            return
        if e.kind != "list" or e.quoted:
            return
        if not e.items:
            self.err("empty-application", "() is not an expression; use '()", e)
            return
        head = e.items[0]
        args = e.items[1:]
        if head.kind != "symbol":
            self.err("bad-head", "call head must be a symbol", e)
            return
        name = head.value
        if name == "define":
            self.err("nested-define", "define is only allowed at top level", e)
        elif name == "choose":
            if not args:
                self.err("empty-choose", "choose needs at least one branch", e)
            for a in args:
                self.check(a, scope)
        elif name == "if":
            if len(args) != 3:
                self.err("if-arity", f"if takes 3 arguments, got {len(args)}", e)
            for a in args:
                self.check(a, scope)
        elif name == "let":
            self.check_let(e, scope)
        else:
            arity = self._callable(name)
            if arity is None:
                self.err("unresolved-call", f"no definition or primitive named {name!r}", head)
            elif arity != len(args):
                self.err("arity", f"{name} takes {arity} arguments, got {len(args)}", e)
            for a in args:
                self.check(a, scope)

    def check_let(self, e: Expr, scope: frozenset) -> None:
        if len(e.items) != 3 or e.items[1].kind != "list" or e.items[1].quoted:
            self.err("let-shape", "expected (let ((name expr) ...) body)", e)
            return
        seen = set()
        inner = scope
        for b in e.items[1].items:
            if b.kind != "list" or len(b.items) != 2 or b.items[0].kind != "symbol":
                self.err("let-shape", "binding must be (name expr)", b)
                continue
            name = b.items[0].value
            if name in seen:
                self.err("let-duplicate", f"let binds {name!r} twice", b)
            elif name in scope:
                self.err("let-shadow", f"let binding {name!r} shadows an enclosing name", b)
            seen.add(name)
            self.check(b.items[1], inner)
            inner = inner | {name}
        self.check(e.items[2], inner)

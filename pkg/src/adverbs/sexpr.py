"""Canonical s-expression text for terms, derivations, and trace sets.

The grammar is one parenthesized group per node, e.g.

    (liftA2 andb (effect DataEff GetData x) (pure true))

Rendering needs no context.  Parsing resolves names (functions, effect
signatures, types, symbol values) against a Namespace, and propagates
expected types downward so plain value atoms like ``true`` or ``3`` need no
annotations.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Iterator

from .core import (
    BOOL,
    UNIT,
    UNIT_TYPE,
    BindT,
    EffectT,
    FMapT,
    FiniteType,
    Fn,
    KPlusT,
    LiftA2T,
    ParseError,
    PlusT,
    PureT,
    Record,
    SelectByT,
    Term,
    TypeMismatch,
    Value,
    Vocabulary,
)


# ---------------------------------------------------------------------------
# Generic reader


def _tokenize(text: str) -> Iterator[tuple[str, int]]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            yield c, i
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            yield text[i:j], i
            i = j


def read_sexpr(text: str):
    """Parse one s-expression into nested lists of (atom, offset) pairs."""
    tokens = list(_tokenize(text))
    pos = 0

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of input", len(text))
        tok, off = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while True:
                if pos >= len(tokens):
                    raise ParseError("unclosed parenthesis", off)
                if tokens[pos][0] == ")":
                    pos += 1
                    return items
                items.append(parse())
        if tok == ")":
            raise ParseError("unexpected ')'", off)
        return (tok, off)

    result = parse()
    if pos != len(tokens):
        raise ParseError("trailing input after s-expression", tokens[pos][1])
    return result


def _atom(node, what: str) -> str:
    if not isinstance(node, tuple):
        raise ParseError(f"expected {what}, got a list", _offset(node))
    return node[0]


def _offset(node) -> int:
    while isinstance(node, list):
        if not node:
            return 0
        node = node[0]
    return node[1]


# ---------------------------------------------------------------------------
# Namespace


@dataclass
class Namespace:
    """Name bindings used when reading terms back from text."""

    vocab: Vocabulary
    types: dict[str, FiniteType] = dc_field(default_factory=dict)
    fns: dict[str, Fn] = dc_field(default_factory=dict)
    default_nat: FiniteType | None = None

    def __post_init__(self):
        self.register_type(BOOL)
        self.register_type(UNIT_TYPE)

    def register_type(self, t: FiniteType) -> "Namespace":
        self.types[t.name] = t
        return self

    def register_fn(self, f: Fn) -> "Namespace":
        self.fns[_safe_name(f.name)] = f
        return self

    def type_named(self, name: str, off: int) -> FiniteType:
        if name not in self.types:
            raise ParseError(f"unknown type {name!r}", off)
        return self.types[name]

    def fn_named(self, name: str, off: int) -> Fn:
        if name not in self.fns:
            raise ParseError(f"unknown function {name!r}", off)
        return self.fns[name]

    def resolve_value(self, node, expected: FiniteType | None) -> Value:
        v = self._raw_value(node)
        if expected is not None:
            if v not in expected:
                raise ParseError(f"value {v!r} not in carrier of {expected.name}", _offset(node))
            return v
        return v

    def _raw_value(self, node) -> Value:
        if isinstance(node, list):
            head = _atom(node[0], "value head") if node else ""
            if head == "list":
                return tuple(self._raw_value(x) for x in node[1:])
            if head == "record":
                fields = {}
                for item in node[1:]:
                    k = _atom(item[0], "field name")
                    fields[k] = self._raw_value(item[1])
                return Record(**fields)
            raise ParseError(f"unknown value form {head!r}", _offset(node))
        tok, off = node
        if tok == "true":
            return True
        if tok == "false":
            return False
        if tok == "tt":
            return UNIT
        if tok.lstrip("-").isdigit():
            return int(tok)
        return tok  # symbol


def _safe_name(name: str) -> str:
    return name.replace("(", "[").replace(")", "]").replace(" ", "_")


# ---------------------------------------------------------------------------
# Rendering


def render_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if v is UNIT:
        return "tt"
    if isinstance(v, str):
        return v
    if isinstance(v, tuple):
        return "(list " + " ".join(render_value(x) for x in v) + ")" if v else "(list)"
    if isinstance(v, Record):
        inner = " ".join(f"({k} {render_value(x)})" for k, x in v.fields)
        return f"(record {inner})"
    raise TypeMismatch(f"cannot render value {v!r}")


def render_term(t: Term) -> str:
    if isinstance(t, PureT):
        return f"(pure {render_value(t.value)})"
    if isinstance(t, FMapT):
        return f"(fmap {_safe_name(t.fn.name)} {render_term(t.arg)})"
    if isinstance(t, LiftA2T):
        return f"(liftA2 {_safe_name(t.fn.name)} {render_term(t.left)} {render_term(t.right)})"
    if isinstance(t, SelectByT):
        return f"(selectBy {_safe_name(t.fn.name)} {render_term(t.left)} {render_term(t.right)})"
    if isinstance(t, BindT):
        if not t.has_table:
            raise TypeMismatch("cannot render a bind with an opaque continuation")
        entries = " ".join(
            f"({render_value(v)} {render_term(b)})" for v, b in t.branches()
        )
        return f"(bind {render_term(t.scrutinee)} (cont {entries}))"
    if isinstance(t, KPlusT):
        return f"(kplus {render_term(t.arg)})"
    if isinstance(t, PlusT):
        return f"(plus {render_term(t.left)} {render_term(t.right)})"
    if isinstance(t, EffectT):
        args = "".join(" " + render_value(a) for a in t.args)
        return f"(effect {t.sig.name} {t.op}{args})"
    raise AssertionError(f"unknown term class {type(t)}")


# ---------------------------------------------------------------------------
# Parsing terms


def parse_term(text: str, ns: Namespace, expected: FiniteType | None = None) -> Term:
    return _term(read_sexpr(text), ns, expected)


def _term(node, ns: Namespace, expected: FiniteType | None) -> Term:
    if not isinstance(node, list) or not node:
        raise ParseError("expected a term form", _offset(node))
    head = _atom(node[0], "term head")
    off = node[0][1]
    voc = ns.vocab
    if head == "pure":
        if len(node) != 2:
            raise ParseError("pure takes one value", off)
        if expected is None:
            expected = _infer_value_type(node[1], ns)
        return voc.pure(ns.resolve_value(node[1], expected), expected)
    if head == "fmap":
        f = ns.fn_named(_atom(node[1], "function name"), off)
        return voc.fmap(f, _term(node[2], ns, f.domain[0]))
    if head in ("liftA2", "selectBy"):
        f = ns.fn_named(_atom(node[1], "function name"), off)
        a = _term(node[2], ns, f.domain[0])
        if head == "liftA2":
            return voc.lift_a2(f, a, _term(node[3], ns, f.domain[1]))
        from .core import fn_components, sum_components

        left_t, _ = sum_components(f.codomain)
        ydom, _ = fn_components(left_t)
        return voc.select_by(f, a, _term(node[3], ns, ydom))
    if head == "bind":
        m = _term(node[1], ns, None)
        cont_node = node[2]
        if _atom(cont_node[0], "cont") != "cont":
            raise ParseError("bind expects a (cont ...) table", _offset(cont_node))
        table = {}
        for entry in cont_node[1:]:
            v = ns.resolve_value(entry[0], m.result_type)
            table[v] = _term(entry[1], ns, None)
        return voc.bind(m, table)
    if head == "kplus":
        return voc.kplus(_term(node[1], ns, expected))
    if head == "plus":
        a = _term(node[1], ns, expected)
        return voc.plus(a, _term(node[2], ns, a.result_type))
    if head == "effect":
        sig = voc.signature(_atom(node[1], "signature name"))
        op = sig.op(_atom(node[2], "operation name"))
        args = tuple(
            ns.resolve_value(n, t) for n, t in zip(node[3:], op.arg_types)
        )
        if len(node) - 3 != len(op.arg_types):
            raise ParseError(f"{sig.name}.{op.name} takes {len(op.arg_types)} args", off)
        return voc.effect(sig, op.name, args)
    raise ParseError(f"unknown term head {head!r}", off)


def _infer_value_type(node, ns: Namespace) -> FiniteType:
    v = ns._raw_value(node)
    if isinstance(v, bool):
        return BOOL
    if v is UNIT:
        return UNIT_TYPE
    if isinstance(v, int) and ns.default_nat is not None:
        return ns.default_nat
    for t in ns.types.values():
        if v in t:
            return t
    raise ParseError(f"cannot infer a type for value {v!r}", _offset(node))


# ---------------------------------------------------------------------------
# Derivations


def render_derivation(d) -> str:
    parts = [
        "(derivation",
        d.rule,
        _render_judgment(d.root),
        "(bindings" + "".join(" " + _render_binding(k, v) for k, v in sorted(d.bindings.items())) + ")",
        "(children" + "".join(" " + render_derivation(c) for c in d.children) + ")",
        ")",
    ]
    return " ".join(parts)


def _render_judgment(j) -> str:
    rel = "equiv" if j.relation == "equiv" else "refine"
    return f"(judgment {rel} {render_term(j.lhs)} {render_term(j.rhs)})"


def _render_binding(key: str, v) -> str:
    if isinstance(v, Term):
        return f"({key} (term {render_term(v)}))"
    if isinstance(v, Fn):
        return f"({key} (fn {_safe_name(v.name)}))"
    if isinstance(v, bool):
        return f"({key} (value bool {render_value(v)}))"
    if isinstance(v, int):
        return f"({key} (nat {v}))"
    if isinstance(v, str):
        return f"({key} (sym {v}))"
    raise TypeMismatch(f"cannot render binding {key}={v!r}")


def parse_derivation(text: str, ns: Namespace):
    return _derivation(read_sexpr(text), ns)


def _derivation(node, ns: Namespace):
    from .theories import Derivation

    if _atom(node[0], "derivation") != "derivation":
        raise ParseError("expected (derivation ...)", _offset(node))
    rule = _atom(node[1], "rule name")
    root = _judgment(node[2], ns)
    bindings = {}
    for entry in node[3][1:]:
        key = _atom(entry[0], "binding key")
        bindings[key] = _binding(entry[1], ns)
    children = tuple(_derivation(c, ns) for c in node[4][1:])
    return Derivation(root, rule, bindings, children)


def _judgment(node, ns: Namespace):
    from .theories import Judgment

    rel = _atom(node[1], "relation")
    lhs = _term(node[2], ns, None)
    rhs = _term(node[3], ns, lhs.result_type)
    return Judgment("equiv" if rel == "equiv" else "refine", lhs, rhs)


def _binding(node, ns: Namespace):
    head = _atom(node[0], "binding head")
    if head == "term":
        return _term(node[1], ns, None)
    if head == "fn":
        return ns.fn_named(_atom(node[1], "fn name"), _offset(node))
    if head == "nat":
        return int(_atom(node[1], "nat"))
    if head == "sym":
        return _atom(node[1], "symbol")
    if head == "value":
        t = ns.type_named(_atom(node[1], "type name"), _offset(node))
        return ns.resolve_value(node[2], t)
    raise ParseError(f"unknown binding form {head!r}", _offset(node))


# ---------------------------------------------------------------------------
# Trace sets


def render_event(e) -> str:
    args = ",".join(render_value(a) for a in e.args)
    return f"{e.sig}.{e.op}({args})->{render_value(e.outcome)}"


def render_behavior(trace, result) -> str:
    evs = " ".join(render_event(e) for e in trace)
    return f"[{evs}] => {render_value(result)}"


def render_trace_set(ts) -> str:
    """One behavior per line, sorted; the golden-test format."""
    return "\n".join(sorted(render_behavior(tr, r) for tr, r in ts.behaviors))

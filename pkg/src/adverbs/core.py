"""Core term representation: finite types, effect signatures, vocabularies, terms.

A term is a finite tree whose nodes reify functor-class operations (pure,
fmap, liftA2, selectBy, bind, kplus, plus) and whose leaves are calls into
uninterpreted effect signatures.  Which node kinds a term may use is governed
by a Vocabulary; vocabularies compose by set union, so effects and operation
sets can be mixed freely.  Terms are never normalized: the tree you build is
the tree you reason about.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping


class AdverbError(Exception):
    """Base class for all errors raised by this package."""


class KindNotInVocabulary(AdverbError):
    pass


class TypeMismatch(AdverbError):
    pass


class DuplicateEffectName(AdverbError):
    pass


class MissingAlgebraCase(AdverbError):
    def __init__(self, kind: "NodeKind"):
        super().__init__(f"no algebra case for node kind {kind}")
        self.kind = kind


class UnboundVar(AdverbError):
    pass


class ScopeError(AdverbError):
    pass


class ParseError(AdverbError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


# ---------------------------------------------------------------------------
# Values
#
# Values are plain Python data: bool, int (bounded naturals), str (symbols),
# tuple (lists), Record, and the unit singleton.  Everything is hashable so
# values can key continuation tables and live in trace sets.


class _Unit:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "tt"


UNIT = _Unit()

Value = object


@dataclass(frozen=True)
class Record:
    """Immutable record value; fields are kept sorted by name."""

    fields: tuple[tuple[str, Value], ...]

    def __init__(self, **kwargs: Value):
        object.__setattr__(self, "fields", tuple(sorted(kwargs.items())))

    def get(self, name: str) -> Value:
        for k, v in self.fields:
            if k == name:
                return v
        raise KeyError(name)

    def with_field(self, name: str, value: Value) -> "Record":
        return Record(**{**dict(self.fields), name: value})

    def __repr__(self):
        inner = " ".join(f"{k}={v!r}" for k, v in self.fields)
        return f"{{{inner}}}"


def value_key(v: Value):
    """Total order over heterogeneous values, for canonical sorting."""
    if isinstance(v, bool):
        return (0, v)
    if isinstance(v, int):
        return (1, v)
    if isinstance(v, str):
        return (2, v)
    if v is UNIT:
        return (3,)
    if isinstance(v, tuple):
        return (4, tuple(value_key(x) for x in v))
    if isinstance(v, Record):
        return (5, tuple((k, value_key(x)) for k, x in v.fields))
    raise TypeError(f"not a value: {v!r}")


# ---------------------------------------------------------------------------
# Finite types


@dataclass(frozen=True)
class FiniteType:
    """A named type with a finite, canonically ordered carrier."""

    name: str
    carrier: tuple[Value, ...]

    def __post_init__(self):
        if not self.carrier:
            raise TypeMismatch(f"type {self.name}: empty carrier")
        seen = set()
        for v in self.carrier:
            k = value_key(v)
            if k in seen:
                raise TypeMismatch(f"type {self.name}: duplicate carrier value {v!r}")
            seen.add(k)

    def __contains__(self, v: Value) -> bool:
        return any(u == v and type(u) is type(v) for u in self.carrier)

    def index(self, v: Value) -> int:
        for i, u in enumerate(self.carrier):
            if u == v and type(u) is type(v):
                return i
        raise TypeMismatch(f"{v!r} is not in carrier of {self.name}")

    def __repr__(self):
        return f"FiniteType({self.name})"


BOOL = FiniteType("bool", (False, True))
UNIT_TYPE = FiniteType("unit", (UNIT,))


def nat_type(hi: int = 7, name: str | None = None) -> FiniteType:
    """Bounded naturals 0..hi (defaults to the desk-scale 0..7)."""
    return FiniteType(name or f"nat{hi + 1}", tuple(range(hi + 1)))


def enum_type(name: str, symbols: tuple[str, ...]) -> FiniteType:
    return FiniteType(name, symbols)


def list_type(elem: FiniteType, max_len: int, name: str | None = None) -> FiniteType:
    """Lists over elem's carrier with length 0..max_len, shortlex-ordered."""
    carrier = []
    for n in range(max_len + 1):
        carrier.extend(itertools.product(elem.carrier, repeat=n))
    return FiniteType(name or f"list{max_len}[{elem.name}]", tuple(carrier))


# Tagged sums and first-class function tables.  A sum value is a record
# {tag, val}; a function value is the graph of the function, a tuple of
# (argument, result) pairs in the domain's canonical order.

_SUM_COMPONENTS: dict[FiniteType, tuple[FiniteType, FiniteType]] = {}
_FN_COMPONENTS: dict[FiniteType, tuple[FiniteType, FiniteType]] = {}


def inl(v: Value) -> Record:
    return Record(tag="inl", val=v)


def inr(v: Value) -> Record:
    return Record(tag="inr", val=v)


def either_type(a: FiniteType, b: FiniteType) -> FiniteType:
    t = FiniteType(
        f"either[{a.name},{b.name}]",
        tuple(inl(v) for v in a.carrier) + tuple(inr(v) for v in b.carrier),
    )
    _SUM_COMPONENTS[t] = (a, b)
    return t


def sum_components(t: FiniteType) -> tuple[FiniteType, FiniteType]:
    if t not in _SUM_COMPONENTS:
        raise TypeMismatch(f"{t.name} is not a declared sum type")
    return _SUM_COMPONENTS[t]


def fn_table_type(dom: FiniteType, cod: FiniteType) -> FiniteType:
    """The type of first-class functions dom -> cod, one graph per function."""
    graphs = []
    for results in itertools.product(cod.carrier, repeat=len(dom.carrier)):
        graphs.append(tuple(zip(dom.carrier, results)))
    t = FiniteType(f"fn[{dom.name},{cod.name}]", tuple(graphs))
    _FN_COMPONENTS[t] = (dom, cod)
    return t


def fn_components(t: FiniteType) -> tuple[FiniteType, FiniteType]:
    if t not in _FN_COMPONENTS:
        raise TypeMismatch(f"{t.name} is not a declared function type")
    return _FN_COMPONENTS[t]


def apply_fn_value(graph: Value, arg: Value) -> Value:
    for a, r in graph:
        if a == arg and type(a) is type(arg):
            return r
    raise TypeMismatch(f"argument {arg!r} outside graph domain")


# ---------------------------------------------------------------------------
# Functions


@dataclass(frozen=True)
class Fn:
    """A typed function over finite carriers.

    Table-backed functions store their full graph (results in the canonical
    order of the domain product) and compare extensionally: two tables with
    equal domains, codomains and graphs are the same function, whatever their
    names.  Opaque functions wrap a host callable and compare by identity;
    they can be interpreted but not enumerated by the derivation checker.
    """

    name: str = field(compare=False)
    domain: tuple[FiniteType, ...]
    codomain: FiniteType
    graph: tuple[Value, ...] | None = None
    opaque: Callable | None = None

    def __post_init__(self):
        if (self.graph is None) == (self.opaque is None):
            raise TypeMismatch("Fn needs exactly one of graph or opaque body")
        if self.graph is not None:
            size = 1
            for t in self.domain:
                size *= len(t.carrier)
            if len(self.graph) != size:
                raise TypeMismatch(
                    f"fn {self.name}: graph covers {len(self.graph)} of {size} tuples"
                )
            for v in self.graph:
                if v not in self.codomain:
                    raise TypeMismatch(f"fn {self.name}: {v!r} not in codomain")

    @property
    def is_table(self) -> bool:
        return self.graph is not None

    @staticmethod
    def from_callable(
        name: str,
        domain: tuple[FiniteType, ...],
        codomain: FiniteType,
        fn: Callable,
    ) -> "Fn":
        """Tabulate a host callable over the full domain product."""
        graph = tuple(
            fn(*args) for args in itertools.product(*(t.carrier for t in domain))
        )
        return Fn(name, domain, codomain, graph=graph)

    @staticmethod
    def opaque_fn(
        name: str, domain: tuple[FiniteType, ...], codomain: FiniteType, fn: Callable
    ) -> "Fn":
        return Fn(name, domain, codomain, opaque=fn)

    def __call__(self, *args: Value) -> Value:
        if len(args) != len(self.domain):
            raise TypeMismatch(f"fn {self.name}: arity {len(self.domain)}, got {len(args)}")
        if self.opaque is not None:
            return self.opaque(*args)
        idx = 0
        for t, a in zip(self.domain, args):
            idx = idx * len(t.carrier) + t.index(a)
        return self.graph[idx]

    def __repr__(self):
        return f"Fn({self.name})"


def flip(f: Fn) -> Fn:
    """Swap the two arguments of a binary table-backed function."""
    if len(f.domain) != 2:
        raise TypeMismatch(f"flip needs a binary fn, got arity {len(f.domain)}")
    if not f.is_table:
        raise TypeMismatch("flip needs a table-backed fn")
    a, b = f.domain
    return Fn.from_callable(f"flip({f.name})", (b, a), f.codomain, lambda y, x: f(x, y))


def identity_fn(t: FiniteType) -> Fn:
    return Fn.from_callable(f"id[{t.name}]", (t,), t, lambda x: x)


def const_fn(name: str, domain: tuple[FiniteType, ...], value: Value, cod: FiniteType) -> Fn:
    return Fn.from_callable(name, domain, cod, lambda *_: value)


def second_fn(a: FiniteType, b: FiniteType) -> Fn:
    """(x, y) -> y; the sequencing function used to repeat a computation."""
    return Fn.from_callable(f"second[{a.name},{b.name}]", (a, b), b, lambda _, y: y)


def apply_fn(fn_type: FiniteType) -> Fn:
    """Application of a first-class function value to an argument."""
    dom, cod = fn_components(fn_type)
    return Fn.from_callable(f"apply[{fn_type.name}]", (fn_type, dom), cod, apply_fn_value)


def flip_apply_fn(fn_type: FiniteType) -> Fn:
    dom, cod = fn_components(fn_type)
    return Fn.from_callable(
        f"applyTo[{fn_type.name}]", (dom, fn_type), cod, lambda x, g: apply_fn_value(g, x)
    )


# ---------------------------------------------------------------------------
# Effect signatures and node kinds


@dataclass(frozen=True)
class EffectOp:
    name: str
    arg_types: tuple[FiniteType, ...]
    result_type: FiniteType


@dataclass(frozen=True)
class EffectSig:
    name: str
    operations: tuple[EffectOp, ...]

    def __post_init__(self):
        names = [op.name for op in self.operations]
        if len(names) != len(set(names)):
            raise DuplicateEffectName(f"duplicate op names in signature {self.name}")

    def op(self, name: str) -> EffectOp:
        for op in self.operations:
            if op.name == name:
                return op
        raise TypeMismatch(f"signature {self.name} has no operation {name}")

    def __repr__(self):
        return f"EffectSig({self.name})"


@dataclass(frozen=True)
class NodeKind:
    name: str
    sig: EffectSig | None = None

    def __repr__(self):
        return self.sig.name if self.sig is not None else self.name


PURE = NodeKind("pure")
FMAP = NodeKind("fmap")
LIFT_A2 = NodeKind("liftA2")
SELECT_BY = NodeKind("selectBy")
BIND = NodeKind("bind")
KPLUS = NodeKind("kplus")
PLUS = NodeKind("plus")


def effect_kind(sig: EffectSig) -> NodeKind:
    return NodeKind("effect", sig)


STRUCTURAL_KINDS = (PURE, FMAP, LIFT_A2, SELECT_BY, BIND, KPLUS, PLUS)


# ---------------------------------------------------------------------------
# Vocabulary

Cont = "Mapping[Value, Term] | Callable[[Value], Term]"


@dataclass(frozen=True)
class Vocabulary:
    """The set of node kinds a term may use; also the term factory.

    Composition is set union, so vocabularies commute and associate, and
    composing a vocabulary with itself is a no-op.
    """

    kinds: frozenset[NodeKind]

    def __post_init__(self):
        by_name: dict[str, EffectSig] = {}
        for k in self.kinds:
            if k.sig is None:
                continue
            other = by_name.get(k.sig.name)
            if other is not None and other != k.sig:
                raise DuplicateEffectName(
                    f"two distinct signatures registered under {k.sig.name!r}"
                )
            by_name[k.sig.name] = k.sig

    def __or__(self, other: "Vocabulary") -> "Vocabulary":
        return Vocabulary(self.kinds | other.kinds)

    def __contains__(self, kind: NodeKind) -> bool:
        return kind in self.kinds

    def signature(self, name: str) -> EffectSig:
        for k in self.kinds:
            if k.sig is not None and k.sig.name == name:
                return k.sig
        raise TypeMismatch(f"no effect signature named {name!r} in vocabulary")

    def signatures(self) -> list[EffectSig]:
        return sorted((k.sig for k in self.kinds if k.sig is not None), key=lambda s: s.name)

    def _require(self, kind: NodeKind):
        if kind not in self.kinds:
            raise KindNotInVocabulary(f"node kind {kind} not enabled in vocabulary")

    # -- smart constructors (no normalization; children are kept as given) --

    def pure(self, v: Value, t: FiniteType) -> "Term":
        self._require(PURE)
        if v not in t:
            raise TypeMismatch(f"{v!r} not in carrier of {t.name}")
        return PureT(PURE, t, self, v)

    def fmap(self, g: Fn, a: "Term") -> "Term":
        self._require(FMAP)
        if len(g.domain) != 1 or g.domain[0] != a.result_type:
            raise TypeMismatch(f"fmap: {g.name} does not accept {a.result_type.name}")
        return FMapT(FMAP, g.codomain, self, g, a)

    def lift_a2(self, f: Fn, a: "Term", b: "Term") -> "Term":
        self._require(LIFT_A2)
        if len(f.domain) != 2 or f.domain[0] != a.result_type or f.domain[1] != b.result_type:
            raise TypeMismatch(
                f"liftA2: {f.name} does not accept ({a.result_type.name}, {b.result_type.name})"
            )
        return LiftA2T(LIFT_A2, f.codomain, self, f, a, b)

    def select_by(self, f: Fn, a: "Term", b: "Term") -> "Term":
        """selectBy f a b where f : X -> Either(Y -> R, R).

        f's codomain must be a declared sum whose left component is the
        function-table type from b's carrier to the result type.
        """
        self._require(SELECT_BY)
        if len(f.domain) != 1 or f.domain[0] != a.result_type:
            raise TypeMismatch(f"selectBy: {f.name} does not accept {a.result_type.name}")
        lt, rt = sum_components(f.codomain)
        ydom, ycod = fn_components(lt)
        if ydom != b.result_type or ycod != rt:
            raise TypeMismatch("selectBy: dispatcher codomain does not match operands")
        return SelectByT(SELECT_BY, rt, self, f, a, b)

    def bind(self, m: "Term", k, result_type: FiniteType | None = None) -> "Term":
        """bind m k, with k a per-carrier-value table of continuation terms.

        A callable k is tabulated over m's carrier; pass result_type to keep
        it opaque instead (interpreters only, never checkable derivations).
        """
        self._require(BIND)
        carrier = m.result_type.carrier
        if callable(k) and result_type is None:
            k = {v: k(v) for v in carrier}
        if isinstance(k, Mapping):
            table = dict(k)
            keys = {value_key(v) for v in table}
            if keys != {value_key(v) for v in carrier}:
                raise TypeMismatch("bind: continuation table must cover the carrier exactly")
            types = {t.result_type for t in table.values()}
            if len(types) != 1:
                raise TypeMismatch("bind: continuation branches disagree on result type")
            rt = types.pop()
            if result_type is not None and result_type != rt:
                raise TypeMismatch("bind: declared result type does not match branches")
            return BindT(BIND, rt, self, m, table)
        if result_type is None:
            raise TypeMismatch("bind: opaque continuation needs an explicit result type")
        return BindT(BIND, result_type, self, m, k)

    def kplus(self, a: "Term") -> "Term":
        self._require(KPLUS)
        return KPlusT(KPLUS, a.result_type, self, a)

    def plus(self, a: "Term", b: "Term") -> "Term":
        self._require(PLUS)
        if a.result_type != b.result_type:
            raise TypeMismatch("plus: operands must share a result type")
        return PlusT(PLUS, a.result_type, self, a, b)

    def effect(self, sig: EffectSig, op_name: str, args: tuple[Value, ...] = ()) -> "Term":
        kind = effect_kind(sig)
        self._require(kind)
        op = sig.op(op_name)
        if len(args) != len(op.arg_types):
            raise TypeMismatch(f"{sig.name}.{op_name}: expected {len(op.arg_types)} args")
        for v, t in zip(args, op.arg_types):
            if v not in t:
                raise TypeMismatch(f"{sig.name}.{op_name}: {v!r} not in {t.name}")
        return EffectT(kind, op.result_type, self, sig, op_name, tuple(args))

    def select(self, a: "Term", b: "Term") -> "Term":
        """select a b for a : F (A + B) and b : F (A -> B).

        Encoded as selectBy with the canonical dispatcher: a left value x
        becomes the "apply to x" function, a right value passes through.
        """
        self._require(SELECT_BY)
        at, bt = sum_components(a.result_type)
        ydom, ycod = fn_components(b.result_type)
        if (ydom, ycod) != (at, bt):
            raise TypeMismatch("select: second operand must map the sum's left to its right")
        return self.select_by(select_dispatcher(at, bt), a, b)


def vocabulary(*kinds: NodeKind) -> Vocabulary:
    return Vocabulary(frozenset(kinds))


def vocab_union(v1: Vocabulary, v2: Vocabulary) -> Vocabulary:
    return v1 | v2


def select_dispatcher(a: FiniteType, b: FiniteType) -> Fn:
    """The dispatcher turning select into selectBy over Either(a, b)."""
    sum_t = either_type(a, b)
    y_t = fn_table_type(a, b)
    res_t = either_type(fn_table_type(y_t, b), b)

    def dispatch(v: Record) -> Record:
        if v.get("tag") == "inl":
            x = v.get("val")
            return inl(tuple((g, apply_fn_value(g, x)) for g in y_t.carrier))
        return inr(v.get("val"))

    return Fn.from_callable(f"select[{a.name},{b.name}]", (sum_t,), res_t, dispatch)


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True, eq=False, repr=False)
class Term:
    kind: NodeKind
    result_type: FiniteType
    vocab: Vocabulary

    def children(self) -> tuple["Term", ...]:
        return ()

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Term):
            return NotImplemented
        return term_equal(self, other)

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    __hash__ = object.__hash__

    def __repr__(self):
        from .sexpr import render_term

        try:
            return render_term(self)
        except Exception:
            return f"<{self.kind} term>"


@dataclass(frozen=True, eq=False, repr=False)
class PureT(Term):
    value: Value


@dataclass(frozen=True, eq=False, repr=False)
class FMapT(Term):
    fn: Fn
    arg: Term

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=False, repr=False)
class LiftA2T(Term):
    fn: Fn
    left: Term
    right: Term

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False, repr=False)
class SelectByT(Term):
    fn: Fn
    left: Term
    right: Term

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False, repr=False)
class BindT(Term):
    scrutinee: Term
    cont: object  # Mapping[Value, Term] or Callable[[Value], Term]

    @property
    def has_table(self) -> bool:
        return isinstance(self.cont, Mapping)

    def branch(self, v: Value) -> Term:
        if self.has_table:
            return self.cont[v]
        return self.cont(v)

    def branches(self) -> Iterator[tuple[Value, Term]]:
        for v in self.scrutinee.result_type.carrier:
            yield v, self.branch(v)

    def children(self):
        return (self.scrutinee,) + tuple(t for _, t in self.branches())


@dataclass(frozen=True, eq=False, repr=False)
class KPlusT(Term):
    arg: Term

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=False, repr=False)
class PlusT(Term):
    left: Term
    right: Term

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False, repr=False)
class EffectT(Term):
    sig: EffectSig
    op: str
    args: tuple[Value, ...]


def term_equal(a: Term, b: Term) -> bool:
    """Structural equality; shared subtrees short-circuit on identity."""
    if a is b:
        return True
    if a.kind != b.kind or a.result_type != b.result_type:
        return False
    if isinstance(a, PureT):
        return a.value == b.value and type(a.value) is type(b.value)
    if isinstance(a, (FMapT, LiftA2T, SelectByT)):
        if a.fn != b.fn:
            return False
        return all(term_equal(x, y) for x, y in zip(a.children(), b.children()))
    if isinstance(a, BindT):
        if not term_equal(a.scrutinee, b.scrutinee):
            return False
        if not (a.has_table and b.has_table):
            return a.cont is b.cont
        return all(term_equal(a.cont[v], b.cont[v]) for v in a.scrutinee.result_type.carrier)
    if isinstance(a, (KPlusT, PlusT)):
        return all(term_equal(x, y) for x, y in zip(a.children(), b.children()))
    if isinstance(a, EffectT):
        return a.sig == b.sig and a.op == b.op and a.args == b.args
    raise AssertionError(f"unknown term class {type(a)}")


def term_size(t: Term) -> int:
    """Number of nodes, counting shared subtrees once."""
    seen: set[int] = set()

    def go(t: Term) -> int:
        if id(t) in seen:
            return 0
        seen.add(id(t))
        return 1 + sum(go(c) for c in t.children())

    return go(t)


def check_well_formed(t: Term) -> None:
    """Re-validate an existing term tree against its vocabulary.

    Constructors enforce these invariants at build time; this walk exists so
    property tests can check them independently on arbitrary trees.
    """
    seen: set[int] = set()

    def go(t: Term):
        if id(t) in seen:
            return
        seen.add(id(t))
        if t.kind not in t.vocab:
            raise KindNotInVocabulary(f"{t.kind} not in term's vocabulary")
        if isinstance(t, PureT):
            if t.value not in t.result_type:
                raise TypeMismatch("pure value outside carrier")
        elif isinstance(t, FMapT):
            if t.fn.domain != (t.arg.result_type,) or t.fn.codomain != t.result_type:
                raise TypeMismatch("fmap function type mismatch")
        elif isinstance(t, LiftA2T):
            if t.fn.domain != (t.left.result_type, t.right.result_type):
                raise TypeMismatch("liftA2 function domain mismatch")
            if t.fn.codomain != t.result_type:
                raise TypeMismatch("liftA2 function codomain mismatch")
        elif isinstance(t, BindT):
            if t.has_table:
                keys = {value_key(v) for v in t.cont}
                want = {value_key(v) for v in t.scrutinee.result_type.carrier}
                if keys != want:
                    raise TypeMismatch("bind continuation not total over carrier")
                for _, branch in t.branches():
                    if branch.result_type != t.result_type:
                        raise TypeMismatch("bind branch result type mismatch")
        elif isinstance(t, PlusT):
            if t.left.result_type != t.right.result_type != t.result_type:
                raise TypeMismatch("plus operands disagree on result type")
        elif isinstance(t, EffectT):
            op = t.sig.op(t.op)
            if op.result_type != t.result_type:
                raise TypeMismatch("effect result type mismatch")
        for c in t.children():
            go(c)

    go(t)


# ---------------------------------------------------------------------------
# Folds


@dataclass
class Algebra:
    """Per-node-kind cases for folding a term into some domain D.

    Bind continuations are folded pointwise: the bind case receives the
    folded scrutinee and a mapping from each carrier value to the folded
    branch.  The effect case receives (sig, op name, argument values).
    """

    pure: Callable | None = None
    fmap: Callable | None = None
    lift_a2: Callable | None = None
    select_by: Callable | None = None
    bind: Callable | None = None
    kplus: Callable | None = None
    plus: Callable | None = None
    effect: Callable | None = None

    def case_for(self, kind: NodeKind) -> Callable:
        name = {
            "pure": "pure",
            "fmap": "fmap",
            "liftA2": "lift_a2",
            "selectBy": "select_by",
            "bind": "bind",
            "kplus": "kplus",
            "plus": "plus",
            "effect": "effect",
        }[kind.name]
        case = getattr(self, name)
        if case is None:
            raise MissingAlgebraCase(kind)
        return case


def fold(t: Term, alg: Algebra):
    """Bottom-up replacement of every node by its algebra case.

    Shared subtrees are folded once; the recursion is compositional, so
    fold(liftA2(f, a, b)) == alg.lift_a2(f, fold(a), fold(b)) and likewise
    for every kind.
    """
    memo: dict[int, object] = {}

    def go(t: Term):
        if id(t) in memo:
            return memo[id(t)]
        case = alg.case_for(t.kind)
        if isinstance(t, PureT):
            r = case(t.value, t.result_type)
        elif isinstance(t, FMapT):
            r = case(t.fn, go(t.arg))
        elif isinstance(t, LiftA2T):
            r = case(t.fn, go(t.left), go(t.right))
        elif isinstance(t, SelectByT):
            r = case(t.fn, go(t.left), go(t.right))
        elif isinstance(t, BindT):
            r = case(go(t.scrutinee), {v: go(b) for v, b in t.branches()})
        elif isinstance(t, KPlusT):
            r = case(go(t.arg))
        elif isinstance(t, PlusT):
            r = case(go(t.left), go(t.right))
        elif isinstance(t, EffectT):
            r = case(t.sig, t.op, t.args)
        else:
            raise AssertionError(f"unknown term class {type(t)}")
        memo[id(t)] = r
        return r

    return go(t)

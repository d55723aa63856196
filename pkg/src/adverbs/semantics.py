"""Semantic domains and interpreters.

Two families live here:

* deterministic interpretation via fold into a SemanticDomain (reader and
  update domains are provided), and
* the reference trace-set oracle: enumerate every behavior a term can
  exhibit under an outcome model, where a behavior is a sequence of effect
  events paired with the final result.

The trace oracle comes in two flavours.  ``trace_sem`` runs liftA2 operands
in left-to-right order.  ``powerset_interpret`` additionally explores the
whole-subterm swap of every liftA2 (both orders, never interleavings), which
is the domain against which commutativity is sound.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .core import (
    Algebra,
    BindT,
    EffectT,
    FMapT,
    FiniteType,
    KPlusT,
    LiftA2T,
    PlusT,
    PureT,
    Record,
    SelectByT,
    Term,
    TypeMismatch,
    UnboundVar,
    Value,
    apply_fn_value,
    fold,
    value_key,
)


@dataclass(frozen=True)
class Event:
    sig: str
    op: str
    args: tuple[Value, ...]
    outcome: Value

    def __repr__(self):
        from .sexpr import render_event

        return render_event(self)


@dataclass(frozen=True)
class TraceSet:
    """A finite set of (event sequence, result) behaviors."""

    behaviors: frozenset

    def __len__(self):
        return len(self.behaviors)

    def __le__(self, other: "TraceSet") -> bool:
        return self.behaviors <= other.behaviors

    def __eq__(self, other):
        return isinstance(other, TraceSet) and self.behaviors == other.behaviors

    __hash__ = None

    def results(self) -> set:
        return {r for _, r in self.behaviors}

    def render(self) -> str:
        from .sexpr import render_trace_set

        return render_trace_set(self)


@dataclass
class SemanticDomain:
    """An interpretation target: one algebra case per node kind, an effect
    handler (inside the algebra), and a decidable equality on domain values."""

    name: str
    algebra: Algebra
    equal: Callable


def interpret(t: Term, d: SemanticDomain):
    return fold(t, d.algebra)


# ---------------------------------------------------------------------------
# Outcome models


@dataclass
class OutcomeModel:
    """Makes uninterpreted effects enumerable.

    Each operation either enumerates a fixed tuple of possible outcomes
    (every call branches over all of them independently) or is a
    deterministic store transition (memory-style effects).  An empty outcome
    tuple models failure: the execution path is pruned.
    """

    enumerated: dict = field(default_factory=dict)
    stateful: dict = field(default_factory=dict)
    initial_store: dict = field(default_factory=dict)

    def with_op(self, sig: str, op: str, outcomes: tuple[Value, ...]) -> "OutcomeModel":
        self.enumerated[(sig, op)] = tuple(outcomes)
        return self

    def with_stateful(self, sig: str, op: str, handler: Callable) -> "OutcomeModel":
        self.stateful[(sig, op)] = handler
        return self

    def outcomes_of(self, t: EffectT, store: dict) -> Iterator[tuple[Value, dict]]:
        key = (t.sig.name, t.op)
        if key in self.stateful:
            yield self.stateful[key](t.args, store)
            return
        if key in self.enumerated:
            for o in self.enumerated[key]:
                yield o, store
            return
        raise TypeMismatch(f"outcome model does not cover {t.sig.name}.{t.op}")


def fresh_outcome_model(vocab) -> OutcomeModel:
    """Every operation re-enumerates its full result carrier at each call.

    This is the "values may change after each read" device model; it is the
    model that separates one read from two.
    """
    m = OutcomeModel()
    for sig in vocab.signatures():
        for op in sig.operations:
            m.with_op(sig.name, op.name, op.result_type.carrier)
    return m


# ---------------------------------------------------------------------------
# Trace enumeration


def _eval(t: Term, store: dict, m: OutcomeModel, bound: int, both_orders: bool):
    """Yield (events, result, store') for every execution of t."""
    if isinstance(t, PureT):
        yield (), t.value, store
    elif isinstance(t, FMapT):
        for ev, v, st in _eval(t.arg, store, m, bound, both_orders):
            yield ev, t.fn(v), st
    elif isinstance(t, LiftA2T):
        for e1, v1, s1 in _eval(t.left, store, m, bound, both_orders):
            for e2, v2, s2 in _eval(t.right, s1, m, bound, both_orders):
                yield e1 + e2, t.fn(v1, v2), s2
        if both_orders:
            for e2, v2, s2 in _eval(t.right, store, m, bound, both_orders):
                for e1, v1, s1 in _eval(t.left, s2, m, bound, both_orders):
                    yield e2 + e1, t.fn(v1, v2), s1
    elif isinstance(t, SelectByT):
        for e1, x, s1 in _eval(t.left, store, m, bound, both_orders):
            d = t.fn(x)
            if d.get("tag") == "inl":
                h = d.get("val")
                for e2, y, s2 in _eval(t.right, s1, m, bound, both_orders):
                    yield e1 + e2, apply_fn_value(h, y), s2
            else:
                yield e1, d.get("val"), s1
    elif isinstance(t, BindT):
        for e1, v, s1 in _eval(t.scrutinee, store, m, bound, both_orders):
            if t.has_table:
                branch = t.cont.get(v)
                if branch is None:
                    continue  # value drifted outside the declared carrier
            else:
                branch = t.cont(v)
            for e2, r, s2 in _eval(branch, s1, m, bound, both_orders):
                yield e1 + e2, r, s2
    elif isinstance(t, KPlusT):
        if bound < 1:
            raise TypeMismatch("kplus bound must be at least 1")

        def rounds(remaining: int, store: dict):
            for ev, v, st in _eval(t.arg, store, m, bound, both_orders):
                yield ev, v, st
                if remaining > 1:
                    for ev2, v2, st2 in rounds(remaining - 1, st):
                        yield ev + ev2, v2, st2

        yield from rounds(bound, store)
    elif isinstance(t, PlusT):
        yield from _eval(t.left, store, m, bound, both_orders)
        yield from _eval(t.right, store, m, bound, both_orders)
    elif isinstance(t, EffectT):
        for outcome, st in m.outcomes_of(t, store):
            yield (Event(t.sig.name, t.op, t.args, outcome),), outcome, st
    else:
        raise AssertionError(f"unknown term class {type(t)}")


def trace_sem(t: Term, m: OutcomeModel, kplus_bound: int = 1) -> TraceSet:
    """All behaviors of t; liftA2 sequences left-then-right, plus is union,
    kplus is the union of 1..kplus_bound repetitions."""
    behaviors = {
        (ev, r)
        for ev, r, _ in _eval(t, dict(m.initial_store), m, kplus_bound, False)
    }
    return TraceSet(frozenset(behaviors))


def powerset_interpret(t: Term, m: OutcomeModel, kplus_bound: int = 1) -> TraceSet:
    """Like trace_sem but every liftA2 contributes both whole-subterm orders."""
    behaviors = {
        (ev, r)
        for ev, r, _ in _eval(t, dict(m.initial_store), m, kplus_bound, True)
    }
    return TraceSet(frozenset(behaviors))


def oracle_equiv(t1: Term, t2: Term, m: OutcomeModel, bound: int = 1) -> bool:
    """Set equality of the two powerset interpretations."""
    _check_comparable(t1, t2)
    return powerset_interpret(t1, m, bound) == powerset_interpret(t2, m, bound)


def oracle_refines(
    t1: Term, t2: Term, m: OutcomeModel, bound_l: int = 1, bound_r: int | None = None
) -> bool:
    return refinement_check(t1, t2, m, bound_l, bound_r).holds


@dataclass
class RefinementResult:
    holds: bool
    witness: tuple | None  # an unmatched (trace, result) behavior of the lhs
    bound_l: int
    bound_r: int


def refinement_check(
    t1: Term, t2: Term, m: OutcomeModel, bound_l: int = 1, bound_r: int | None = None
) -> RefinementResult:
    """Decide trace_sem(t1)@bound_l <= trace_sem(t2)@bound_r.

    The left side is enumerated into a prefix trie; the right side is then
    explored with every branch pruned as soon as its events leave the trie.
    This avoids materializing the (much larger) right-hand trace set.
    """
    if bound_r is None:
        bound_r = bound_l
    if bound_r < bound_l:
        raise TypeMismatch("bound_r must be at least bound_l")
    _check_comparable(t1, t2)

    lhs = trace_sem(t1, m, bound_l)
    root: dict = {}
    pending: set = set()
    for trace, result in lhs.behaviors:
        node = root
        for e in trace:
            node = node.setdefault(e, {})
        pending.add((id(node), value_key(result)))
        node.setdefault(None, {})[value_key(result)] = (trace, result)

    covered: set = set()

    def explore(t: Term, node: dict, store: dict):
        """Yield (trie node, result, store) for executions of t that stay
        inside the trie."""
        if isinstance(t, PureT):
            yield node, t.value, store
        elif isinstance(t, FMapT):
            for nd, v, st in explore(t.arg, node, store):
                yield nd, t.fn(v), st
        elif isinstance(t, LiftA2T):
            for nd, v1, s1 in explore(t.left, node, store):
                for nd2, v2, s2 in explore(t.right, nd, s1):
                    yield nd2, t.fn(v1, v2), s2
        elif isinstance(t, SelectByT):
            for nd, x, s1 in explore(t.left, node, store):
                d = t.fn(x)
                if d.get("tag") == "inl":
                    for nd2, y, s2 in explore(t.right, nd, s1):
                        yield nd2, apply_fn_value(d.get("val"), y), s2
                else:
                    yield nd, d.get("val"), s1
        elif isinstance(t, BindT):
            for nd, v, s1 in explore(t.scrutinee, node, store):
                branch = t.cont.get(v) if t.has_table else t.cont(v)
                if branch is None:
                    continue
                yield from explore(branch, nd, s1)
        elif isinstance(t, KPlusT):

            def rounds(remaining, node, store):
                for nd, v, st in explore(t.arg, node, store):
                    yield nd, v, st
                    if remaining > 1:
                        yield from rounds(remaining - 1, nd, st)

            yield from rounds(bound_r, node, store)
        elif isinstance(t, PlusT):
            yield from explore(t.left, node, store)
            yield from explore(t.right, node, store)
        elif isinstance(t, EffectT):
            for outcome, st in m.outcomes_of(t, store):
                nxt = node.get(Event(t.sig.name, t.op, t.args, outcome))
                if nxt is not None:
                    yield nxt, outcome, st
        else:
            raise AssertionError(f"unknown term class {type(t)}")

    for nd, result, _ in explore(t2, root, dict(m.initial_store)):
        key = (id(nd), value_key(result))
        if key in pending:
            covered.add(key)
            if len(covered) == len(pending):
                break

    missing = pending - covered
    witness = None
    if missing:
        # recover one unmatched behavior for the report
        def find(node):
            ends = node.get(None, {})
            for rk, beh in ends.items():
                if (id(node), rk) in missing:
                    return beh
            for e, child in node.items():
                if e is None:
                    continue
                got = find(child)
                if got is not None:
                    return got
            return None

        witness = find(root)
    return RefinementResult(not missing, witness, bound_l, bound_r)


def _check_comparable(t1: Term, t2: Term):
    if t1.result_type != t2.result_type:
        raise TypeMismatch("compared terms must share a result type")


# ---------------------------------------------------------------------------
# Reader domain

Env = dict


def enumerate_envs(var_names: tuple[str, ...], t: FiniteType) -> list[Env]:
    return [
        dict(zip(var_names, vals))
        for vals in itertools.product(t.carrier, repeat=len(var_names))
    ]


def reader_domain(
    var_names: tuple[str, ...],
    value_type: FiniteType,
    handler: Callable | None = None,
) -> SemanticDomain:
    """Computations as functions from an environment (var name -> value).

    The default effect handler treats any single-argument operation as an
    environment lookup, which is the reading-from-external-devices model.
    """

    def ask(sig, op, args):
        def run(env: Env):
            (v,) = args
            if v not in env:
                raise UnboundVar(f"variable {v!r} unbound in environment")
            return env[v]

        return run

    def select_case(f, a, b):
        def run(env):
            d = f(a(env))
            if d.get("tag") == "inl":
                return apply_fn_value(d.get("val"), b(env))
            return d.get("val")

        return run

    alg = Algebra(
        pure=lambda v, _t: (lambda env: v),
        fmap=lambda g, a: (lambda env: g(a(env))),
        lift_a2=lambda f, a, b: (lambda env: f(a(env), b(env))),
        select_by=select_case,
        bind=lambda m, k: (lambda env: k[m(env)](env)),
        effect=handler or ask,
    )
    envs = enumerate_envs(var_names, value_type)
    return SemanticDomain(
        "reader",
        alg,
        equal=lambda f, g: all(f(e) == g(e) for e in envs),
    )


# ---------------------------------------------------------------------------
# Update domain: reader state plus an access-cost counter

UPDATE_GET_COST = 1


def update_domain(
    var_names: tuple[str, ...],
    value_type: FiniteType,
    handler: Callable | None = None,
) -> SemanticDomain:
    """Computations as env -> (value, cost).

    Sequencing adds the costs of both stages; the applicative combination
    takes their maximum, modelling batched accesses that run side by side.
    A plain lookup costs one access.
    """

    def get(sig, op, args):
        def run(env: Env):
            (v,) = args
            if v not in env:
                raise UnboundVar(f"variable {v!r} unbound in environment")
            return env[v], UPDATE_GET_COST

        return run

    def bind_case(m, k):
        def run(env):
            i, n = m(env)
            r, n2 = k[i](env)
            return r, n + n2

        return run

    def lift_case(f, a, b):
        def run(env):
            av, n1 = a(env)
            bv, n2 = b(env)
            return f(av, bv), max(n1, n2)

        return run

    alg = Algebra(
        pure=lambda v, _t: (lambda env: (v, 0)),
        fmap=lambda g, a: (lambda env: (lambda p: (g(p[0]), p[1]))(a(env))),
        lift_a2=lift_case,
        bind=bind_case,
        effect=handler or get,
    )
    envs = enumerate_envs(var_names, value_type)
    return SemanticDomain(
        "update",
        alg,
        equal=lambda f, g: all(f(e) == g(e) for e in envs),
    )

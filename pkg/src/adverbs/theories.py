"""Equational and refinement theories as checkable rule schemas.

A theory is a set of rule schemas.  A derivation is a tree of rule
instances; it is never trusted, only checked: every node must rebuild its
conclusion from its bindings, every premise must be the root of the
corresponding child, and every side condition is decided by exhaustive
enumeration over the finite carriers involved.

Theories compose by rule-set union.  Refinement judgments additionally admit
promotion from equivalence, congruence through every constructor, and
transitivity; those structural rules are available whenever a theory carries
the refinement relation at all.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Mapping

from .core import (
    BindT,
    EffectT,
    FMapT,
    FiniteType,
    Fn,
    KPlusT,
    LiftA2T,
    PlusT,
    PureT,
    SelectByT,
    Term,
    TypeMismatch,
    apply_fn,
    apply_fn_value,
    either_type,
    flip,
    flip_apply_fn,
    fn_components,
    inr,
    select_dispatcher,
    term_equal,
)

EQUIV = "equiv"
REFINE = "refine"


class TheoryId(str, Enum):
    STREAMINGLY = "streamingly"
    STATICALLY = "statically"
    STATICALLY_IN_PARALLEL = "statically-in-parallel"
    CONDITIONALLY = "conditionally"
    DYNAMICALLY = "dynamically"
    REPEATEDLY = "repeatedly"
    NONDETERMINISTICALLY = "nondeterministically"


@dataclass(frozen=True)
class Judgment:
    relation: str  # EQUIV or REFINE
    lhs: Term
    rhs: Term

    def __post_init__(self):
        if self.lhs.result_type != self.rhs.result_type:
            raise TypeMismatch("judgment sides must share a result type")
        if self.lhs.vocab != self.rhs.vocab:
            raise TypeMismatch("judgment sides must share a vocabulary")

    def __repr__(self):
        op = "=~=" if self.relation == EQUIV else "<=="
        return f"{self.lhs!r} {op} {self.rhs!r}"


def equiv(lhs: Term, rhs: Term) -> Judgment:
    return Judgment(EQUIV, lhs, rhs)


def refines(lhs: Term, rhs: Term) -> Judgment:
    return Judgment(REFINE, lhs, rhs)


@dataclass(frozen=True)
class Derivation:
    """A rule-instance tree claiming its root judgment; checked, never trusted."""

    root: Judgment
    rule: str
    bindings: Mapping
    children: tuple["Derivation", ...] = ()

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


@dataclass
class RuleApp:
    conclusion: Judgment
    premises: tuple[Judgment, ...]
    side_error: str | None = None


class BadInstance(Exception):
    """Bindings do not form an instance of the schema."""


@dataclass(eq=False)
class RuleSchema:
    """A rule with a builder (bindings -> instance) and a conclusion matcher
    (judgment -> candidate bindings) used by the bounded search."""

    name: str
    relation: str
    build: Callable[[Mapping], RuleApp]
    match: Callable[[Judgment], Iterator[Mapping]] = field(default=lambda j: iter(()))

    def __eq__(self, other):
        return isinstance(other, RuleSchema) and self.name == other.name

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return f"Rule({self.name})"


def _need(cond: bool, reason: str):
    if not cond:
        raise BadInstance(reason)


def _need_table(f: Fn):
    if not f.is_table:
        raise BadInstance(f"OpaqueFunctionInSideCondition: {f.name}")


def _forall(types: tuple[FiniteType, ...], pred: Callable) -> str | None:
    for assignment in itertools.product(*(t.carrier for t in types)):
        if not pred(*assignment):
            shown = ", ".join(repr(v) for v in assignment)
            return f"SideConditionFails: assignment ({shown})"
    return None


def _term(b: Mapping, key: str) -> Term:
    v = b.get(key)
    _need(isinstance(v, Term), f"binding {key!r} must be a term")
    return v


def _fn(b: Mapping, key: str) -> Fn:
    v = b.get(key)
    _need(isinstance(v, Fn), f"binding {key!r} must be a function")
    return v


def _table_cont(t: BindT):
    _need(t.has_table, "bind continuation must be table-backed for checking")
    return t.cont


# ---------------------------------------------------------------------------
# Equivalence properties


def _build_refl(b):
    a = _term(b, "a")
    return RuleApp(equiv(a, a), ())


def _match_refl(j):
    if j.relation == EQUIV and term_equal(j.lhs, j.rhs):
        yield {"a": j.lhs}


def _build_sym(b):
    a, c = _term(b, "a"), _term(b, "b")
    return RuleApp(equiv(a, c), (equiv(c, a),))


def _match_sym(j):
    if j.relation == EQUIV:
        yield {"a": j.lhs, "b": j.rhs}


def _build_trans(b):
    a, mid, c = _term(b, "a"), _term(b, "b"), _term(b, "c")
    return RuleApp(equiv(a, c), (equiv(a, mid), equiv(mid, c)))


# ---------------------------------------------------------------------------
# Applicative rules


def _build_cong_lift(b):
    f = _fn(b, "f")
    a1, b1, a2, b2 = (_term(b, k) for k in ("a1", "b1", "a2", "b2"))
    lhs = a1.vocab.lift_a2(f, a1, b1)
    rhs = a2.vocab.lift_a2(f, a2, b2)
    return RuleApp(equiv(lhs, rhs), (equiv(a1, a2), equiv(b1, b2)))


def _match_cong_lift(j):
    l, r = j.lhs, j.rhs
    if isinstance(l, LiftA2T) and isinstance(r, LiftA2T) and l.fn == r.fn:
        yield {"f": l.fn, "a1": l.left, "b1": l.right, "a2": r.left, "b2": r.right}


def _build_ap_left_id(b):
    f = _fn(b, "f")
    pa, rb = _term(b, "pure"), _term(b, "b")
    _need(isinstance(pa, PureT), "left operand must be a pure node")
    _need_table(f)
    lhs = pa.vocab.lift_a2(f, pa, rb)
    side = _forall((rb.result_type,), lambda y: f(pa.value, y) == y)
    return RuleApp(equiv(lhs, rb), (), side)


def _match_ap_left_id(j):
    l = j.lhs
    if isinstance(l, LiftA2T) and isinstance(l.left, PureT):
        yield {"f": l.fn, "pure": l.left, "b": l.right}


def _build_ap_right_id(b):
    f = _fn(b, "f")
    ra, pb = _term(b, "a"), _term(b, "pure")
    _need(isinstance(pb, PureT), "right operand must be a pure node")
    _need_table(f)
    lhs = ra.vocab.lift_a2(f, ra, pb)
    side = _forall((ra.result_type,), lambda x: f(x, pb.value) == x)
    return RuleApp(equiv(lhs, ra), (), side)


def _match_ap_right_id(j):
    l = j.lhs
    if isinstance(l, LiftA2T) and isinstance(l.right, PureT):
        yield {"f": l.fn, "a": l.left, "pure": l.right}


def _build_ap_assoc(b):
    f, g = _fn(b, "f"), _fn(b, "g")
    a, bb, c = _term(b, "a"), _term(b, "b"), _term(b, "c")
    _need_table(f)
    _need_table(g)
    voc = a.vocab
    lhs = voc.lift_a2(apply_fn(f.codomain), voc.lift_a2(f, a, bb), c)
    rhs = voc.lift_a2(flip_apply_fn(g.codomain), a, voc.lift_a2(g, bb, c))
    side = _forall(
        (a.result_type, bb.result_type, c.result_type),
        lambda x, y, z: apply_fn_value(f(x, y), z) == apply_fn_value(g(y, z), x),
    )
    return RuleApp(equiv(lhs, rhs), (), side)


def _match_ap_assoc(j):
    l, r = j.lhs, j.rhs
    if not (isinstance(l, LiftA2T) and isinstance(l.left, LiftA2T)):
        return
    if not (isinstance(r, LiftA2T) and isinstance(r.right, LiftA2T)):
        return
    yield {
        "f": l.left.fn,
        "g": r.right.fn,
        "a": l.left.left,
        "b": l.left.right,
        "c": l.right,
    }


def _build_ap_natural(b):
    p, q, f, g = (_fn(b, k) for k in ("p", "q", "f", "g"))
    a, bb, c = _term(b, "a"), _term(b, "b"), _term(b, "c")
    for fn in (p, q, f, g):
        _need_table(fn)
    voc = a.vocab
    lhs = voc.lift_a2(p, voc.lift_a2(q, a, bb), c)
    rhs = voc.lift_a2(f, a, voc.lift_a2(g, bb, c))
    side = _forall(
        (a.result_type, bb.result_type, c.result_type),
        lambda x, y, z: p(q(x, y), z) == f(x, g(y, z)),
    )
    return RuleApp(equiv(lhs, rhs), (), side)


def _match_ap_natural(j):
    l, r = j.lhs, j.rhs
    if not (isinstance(l, LiftA2T) and isinstance(l.left, LiftA2T)):
        return
    if not (isinstance(r, LiftA2T) and isinstance(r.right, LiftA2T)):
        return
    yield {
        "p": l.fn,
        "q": l.left.fn,
        "f": r.fn,
        "g": r.right.fn,
        "a": l.left.left,
        "b": l.left.right,
        "c": l.right,
    }


def _build_ap_comm(b):
    f = _fn(b, "f")
    a, bb = _term(b, "a"), _term(b, "b")
    _need_table(f)
    lhs = a.vocab.lift_a2(f, a, bb)
    rhs = a.vocab.lift_a2(flip(f), bb, a)
    return RuleApp(equiv(lhs, rhs), ())


def _match_ap_comm(j):
    if isinstance(j.lhs, LiftA2T):
        yield {"f": j.lhs.fn, "a": j.lhs.left, "b": j.lhs.right}


# ---------------------------------------------------------------------------
# Functor rules


def _build_cong_fmap(b):
    g = _fn(b, "g")
    a1, a2 = _term(b, "a1"), _term(b, "a2")
    return RuleApp(
        equiv(a1.vocab.fmap(g, a1), a2.vocab.fmap(g, a2)), (equiv(a1, a2),)
    )


def _match_cong_fmap(j):
    l, r = j.lhs, j.rhs
    if isinstance(l, FMapT) and isinstance(r, FMapT) and l.fn == r.fn:
        yield {"g": l.fn, "a1": l.arg, "a2": r.arg}


def _build_functor_id(b):
    g = _fn(b, "g")
    a = _term(b, "a")
    _need_table(g)
    side = _forall((a.result_type,), lambda x: g(x) == x)
    return RuleApp(equiv(a.vocab.fmap(g, a), a), (), side)


def _match_functor_id(j):
    if isinstance(j.lhs, FMapT):
        yield {"g": j.lhs.fn, "a": j.lhs.arg}


def _build_functor_comp(b):
    g, h, gh = _fn(b, "g"), _fn(b, "h"), _fn(b, "gh")
    a = _term(b, "a")
    for fn in (g, h, gh):
        _need_table(fn)
    voc = a.vocab
    lhs = voc.fmap(g, voc.fmap(h, a))
    side = _forall((a.result_type,), lambda x: g(h(x)) == gh(x))
    return RuleApp(equiv(lhs, voc.fmap(gh, a)), (), side)


def _match_functor_comp(j):
    l, r = j.lhs, j.rhs
    if isinstance(l, FMapT) and isinstance(l.arg, FMapT) and isinstance(r, FMapT):
        yield {"g": l.fn, "h": l.arg.fn, "gh": r.fn, "a": l.arg.arg}


# ---------------------------------------------------------------------------
# Monad rules


def _build_monad_left_id(b):
    t = _term(b, "t")
    _need(isinstance(t, BindT), "monad left identity applies to a bind node")
    _need(isinstance(t.scrutinee, PureT), "scrutinee must be a pure node")
    cont = _table_cont(t)
    return RuleApp(equiv(t, cont[t.scrutinee.value]), ())


def _match_monad_left_id(j):
    if isinstance(j.lhs, BindT) and isinstance(j.lhs.scrutinee, PureT):
        yield {"t": j.lhs}


def _build_monad_right_id(b):
    t = _term(b, "t")
    _need(isinstance(t, BindT), "monad right identity applies to a bind node")
    cont = _table_cont(t)
    for v in t.scrutinee.result_type.carrier:
        branch = cont[v]
        _need(
            isinstance(branch, PureT) and branch.value == v,
            "continuation must return each scrutinee value unchanged",
        )
    return RuleApp(equiv(t, t.scrutinee), ())


def _match_monad_right_id(j):
    if isinstance(j.lhs, BindT):
        yield {"t": j.lhs}


def _build_monad_assoc(b):
    t = _term(b, "t")
    _need(isinstance(t, BindT), "monad associativity applies to a bind node")
    inner = t.scrutinee
    _need(isinstance(inner, BindT), "scrutinee must itself be a bind node")
    h = _table_cont(t)
    g = _table_cont(inner)
    voc = t.vocab
    rhs = voc.bind(inner.scrutinee, {v: voc.bind(g[v], h) for v in g})
    return RuleApp(equiv(t, rhs), ())


def _match_monad_assoc(j):
    if isinstance(j.lhs, BindT) and isinstance(j.lhs.scrutinee, BindT):
        yield {"t": j.lhs}


def _build_cong_bind(b):
    lhs, rhs = _term(b, "lhs"), _term(b, "rhs")
    _need(isinstance(lhs, BindT) and isinstance(rhs, BindT), "both sides must be bind nodes")
    k1, k2 = _table_cont(lhs), _table_cont(rhs)
    _need(
        lhs.scrutinee.result_type == rhs.scrutinee.result_type,
        "scrutinees must share a result type",
    )
    premises = [equiv(lhs.scrutinee, rhs.scrutinee)]
    premises += [equiv(k1[v], k2[v]) for v in lhs.scrutinee.result_type.carrier]
    return RuleApp(equiv(lhs, rhs), tuple(premises))


def _match_cong_bind(j):
    l, r = j.lhs, j.rhs
    if (
        isinstance(l, BindT)
        and isinstance(r, BindT)
        and l.has_table
        and r.has_table
        and l.scrutinee.result_type == r.scrutinee.result_type
    ):
        yield {"lhs": l, "rhs": r}


# ---------------------------------------------------------------------------
# Selective rules


def _build_cong_select(b):
    f = _fn(b, "f")
    a1, b1, a2, b2 = (_term(b, k) for k in ("a1", "b1", "a2", "b2"))
    lhs = a1.vocab.select_by(f, a1, b1)
    rhs = a2.vocab.select_by(f, a2, b2)
    return RuleApp(equiv(lhs, rhs), (equiv(a1, a2), equiv(b1, b2)))


def _match_cong_select(j):
    l, r = j.lhs, j.rhs
    if isinstance(l, SelectByT) and isinstance(r, SelectByT) and l.fn == r.fn:
        yield {"f": l.fn, "a1": l.left, "b1": l.right, "a2": r.left, "b2": r.right}


def _build_select_pure(b):
    a, fb = _term(b, "a"), _term(b, "b")
    ldom, lcod = fn_components(fb.result_type)
    _need(lcod == a.result_type, "function operand must target the sum's right side")
    voc = a.vocab
    sum_t = either_type(ldom, lcod)
    inr_fn = Fn.from_callable(f"inr[{sum_t.name}]", (lcod,), sum_t, inr)
    lhs = voc.select_by(select_dispatcher(ldom, lcod), voc.fmap(inr_fn, a), fb)
    return RuleApp(equiv(lhs, a), ())


def _match_select_pure(j):
    l = j.lhs
    if isinstance(l, SelectByT) and isinstance(l.left, FMapT):
        yield {"a": l.left.arg, "b": l.right}


# ---------------------------------------------------------------------------
# Add-on rules: repetition and choice


def repeat_term(a: Term, n: int, seq: str = "auto") -> Term:
    """a repeated n+1 times, keeping the final result.

    Sequencing uses liftA2 with a drop-first function when available in a's
    vocabulary, otherwise bind with a constant continuation.
    """
    from .core import LIFT_A2, second_fn

    if seq == "auto":
        seq = "liftA2" if LIFT_A2 in a.vocab else "bind"
    t = a
    for _ in range(n):
        if seq == "liftA2":
            t = a.vocab.lift_a2(second_fn(a.result_type, t.result_type), a, t)
        else:
            rest = t
            t = a.vocab.bind(a, {v: rest for v in a.result_type.carrier})
    return t


def _build_repeat(b):
    a = _term(b, "a")
    n = b.get("n")
    _need(isinstance(n, int) and n >= 0, "binding 'n' must be a natural number")
    seq = b.get("seq", "auto")
    lhs = repeat_term(a, n, seq)
    return RuleApp(Judgment(REFINE, lhs, a.vocab.kplus(a)), ())


def _match_repeat(j):
    if not isinstance(j.rhs, KPlusT):
        return
    a = j.rhs.arg
    for seq in ("liftA2", "bind"):
        n = _count_repeats(j.lhs, a, seq)
        if n is not None:
            yield {"a": a, "n": n, "seq": seq}
            return


def _count_repeats(t: Term, a: Term, seq: str) -> int | None:
    n = 0
    while True:
        if term_equal(t, a):
            return n
        if seq == "liftA2":
            if not (isinstance(t, LiftA2T) and term_equal(t.left, a)):
                return None
            from .core import second_fn

            if t.fn != second_fn(a.result_type, t.right.result_type):
                return None
            t = t.right
        else:
            if not (isinstance(t, BindT) and t.has_table and term_equal(t.scrutinee, a)):
                return None
            branches = list(t.cont.values())
            first = branches[0]
            if not all(term_equal(x, first) for x in branches[1:]):
                return None
            t = first
        n += 1


def _build_kplus_mono(b):
    a, bb = _term(b, "a"), _term(b, "b")
    voc = a.vocab
    return RuleApp(
        Judgment(REFINE, voc.kplus(a), voc.kplus(bb)),
        (Judgment(REFINE, a, voc.kplus(bb)),),
    )


def _match_kplus_mono(j):
    if isinstance(j.lhs, KPlusT) and isinstance(j.rhs, KPlusT):
        yield {"a": j.lhs.arg, "b": j.rhs.arg}


def _build_plus_comm(b):
    a, bb = _term(b, "a"), _term(b, "b")
    voc = a.vocab
    return RuleApp(equiv(voc.plus(a, bb), voc.plus(bb, a)), ())


def _match_plus_comm(j):
    if isinstance(j.lhs, PlusT):
        yield {"a": j.lhs.left, "b": j.lhs.right}


def _build_plus_assoc(b):
    a, bb, c = _term(b, "a"), _term(b, "b"), _term(b, "c")
    voc = a.vocab
    lhs = voc.plus(a, voc.plus(bb, c))
    rhs = voc.plus(voc.plus(a, bb), c)
    return RuleApp(equiv(lhs, rhs), ())


def _match_plus_assoc(j):
    if isinstance(j.lhs, PlusT) and isinstance(j.lhs.right, PlusT):
        yield {"a": j.lhs.left, "b": j.lhs.right.left, "c": j.lhs.right.right}


def _build_plus_lub(b):
    a, bb, c = _term(b, "a"), _term(b, "b"), _term(b, "c")
    lhs = a.vocab.plus(a, bb)
    return RuleApp(
        Judgment(REFINE, lhs, c),
        (Judgment(REFINE, a, c), Judgment(REFINE, bb, c)),
    )


def _match_plus_lub(j):
    if isinstance(j.lhs, PlusT):
        yield {"a": j.lhs.left, "b": j.lhs.right, "c": j.rhs}


def _build_plus_left(b):
    a, bb = _term(b, "a"), _term(b, "b")
    return RuleApp(Judgment(REFINE, a, a.vocab.plus(a, bb)), ())


def _match_plus_left(j):
    if isinstance(j.rhs, PlusT):
        yield {"a": j.rhs.left, "b": j.rhs.right}


def _build_plus_right(b):
    a, bb = _term(b, "a"), _term(b, "b")
    return RuleApp(Judgment(REFINE, bb, a.vocab.plus(a, bb)), ())


def _match_plus_right(j):
    if isinstance(j.rhs, PlusT):
        yield {"a": j.rhs.left, "b": j.rhs.right}


# ---------------------------------------------------------------------------
# Structural refinement machinery (admitted whenever refinement is present)


def _build_promote(b):
    a, bb = _term(b, "a"), _term(b, "b")
    return RuleApp(Judgment(REFINE, a, bb), (equiv(a, bb),))


def _match_promote(j):
    if j.relation == REFINE:
        yield {"a": j.lhs, "b": j.rhs}


def _build_refine_trans(b):
    a, mid, c = _term(b, "a"), _term(b, "b"), _term(b, "c")
    return RuleApp(
        Judgment(REFINE, a, c),
        (Judgment(REFINE, a, mid), Judgment(REFINE, mid, c)),
    )


def _refine_cong(builder):
    def build(b):
        app = builder(b)
        return RuleApp(
            Judgment(REFINE, app.conclusion.lhs, app.conclusion.rhs),
            tuple(Judgment(REFINE, p.lhs, p.rhs) for p in app.premises),
            app.side_error,
        )

    return build


def _build_refine_cong_kplus(b):
    a1, a2 = _term(b, "a1"), _term(b, "a2")
    return RuleApp(
        Judgment(REFINE, a1.vocab.kplus(a1), a2.vocab.kplus(a2)),
        (Judgment(REFINE, a1, a2),),
    )


def _match_refine_cong_kplus(j):
    if isinstance(j.lhs, KPlusT) and isinstance(j.rhs, KPlusT):
        yield {"a1": j.lhs.arg, "a2": j.rhs.arg}


def _build_refine_cong_plus(b):
    a1, b1, a2, b2 = (_term(b, k) for k in ("a1", "b1", "a2", "b2"))
    lhs = a1.vocab.plus(a1, b1)
    rhs = a2.vocab.plus(a2, b2)
    return RuleApp(
        Judgment(REFINE, lhs, rhs),
        (Judgment(REFINE, a1, a2), Judgment(REFINE, b1, b2)),
    )


def _match_refine_cong_plus(j):
    if isinstance(j.lhs, PlusT) and isinstance(j.rhs, PlusT):
        yield {"a1": j.lhs.left, "b1": j.lhs.right, "a2": j.rhs.left, "b2": j.rhs.right}


def _refine_match(matcher):
    def match(j):
        if j.relation != REFINE:
            return
        yield from matcher(Judgment(EQUIV, j.lhs, j.rhs))

    return match


# ---------------------------------------------------------------------------
# Rule registry and theory assembly


def _rule(name, relation, build, match=None):
    return RuleSchema(name, relation, build, match or (lambda j: iter(())))


REFL = _rule("refl", EQUIV, _build_refl, _match_refl)
SYM = _rule("sym", EQUIV, _build_sym, _match_sym)
TRANS = _rule("trans", EQUIV, _build_trans)

_EQUIV_PROPS = frozenset({REFL, SYM, TRANS})

RULES: dict[str, RuleSchema] = {
    r.name: r
    for r in [
        REFL,
        SYM,
        TRANS,
        _rule("cong-liftA2", EQUIV, _build_cong_lift, _match_cong_lift),
        _rule("ap-left-id", EQUIV, _build_ap_left_id, _match_ap_left_id),
        _rule("ap-right-id", EQUIV, _build_ap_right_id, _match_ap_right_id),
        _rule("ap-assoc", EQUIV, _build_ap_assoc, _match_ap_assoc),
        _rule("ap-natural", EQUIV, _build_ap_natural, _match_ap_natural),
        _rule("ap-comm", EQUIV, _build_ap_comm, _match_ap_comm),
        _rule("cong-fmap", EQUIV, _build_cong_fmap, _match_cong_fmap),
        _rule("functor-id", EQUIV, _build_functor_id, _match_functor_id),
        _rule("functor-comp", EQUIV, _build_functor_comp, _match_functor_comp),
        _rule("monad-left-id", EQUIV, _build_monad_left_id, _match_monad_left_id),
        _rule("monad-right-id", EQUIV, _build_monad_right_id, _match_monad_right_id),
        _rule("monad-assoc", EQUIV, _build_monad_assoc, _match_monad_assoc),
        _rule("cong-bind", EQUIV, _build_cong_bind, _match_cong_bind),
        _rule("cong-selectBy", EQUIV, _build_cong_select, _match_cong_select),
        _rule("select-pure", EQUIV, _build_select_pure, _match_select_pure),
        _rule("repeat", REFINE, _build_repeat, _match_repeat),
        _rule("kplus-mono", REFINE, _build_kplus_mono, _match_kplus_mono),
        _rule("plus-comm", EQUIV, _build_plus_comm, _match_plus_comm),
        _rule("plus-assoc", EQUIV, _build_plus_assoc, _match_plus_assoc),
        _rule("plus-lub", REFINE, _build_plus_lub, _match_plus_lub),
        _rule("plus-left", REFINE, _build_plus_left, _match_plus_left),
        _rule("plus-right", REFINE, _build_plus_right, _match_plus_right),
    ]
}

STRUCTURAL_REFINE: dict[str, RuleSchema] = {
    r.name: r
    for r in [
        _rule("refine-promote", REFINE, _build_promote, _match_promote),
        _rule("refine-trans", REFINE, _build_refine_trans),
        _rule(
            "refine-cong-liftA2",
            REFINE,
            _refine_cong(_build_cong_lift),
            _refine_match(_match_cong_lift),
        ),
        _rule(
            "refine-cong-fmap",
            REFINE,
            _refine_cong(_build_cong_fmap),
            _refine_match(_match_cong_fmap),
        ),
        _rule(
            "refine-cong-selectBy",
            REFINE,
            _refine_cong(_build_cong_select),
            _refine_match(_match_cong_select),
        ),
        _rule(
            "refine-cong-bind",
            REFINE,
            _refine_cong(_build_cong_bind),
            _refine_match(_match_cong_bind),
        ),
        _rule("refine-cong-kplus", REFINE, _build_refine_cong_kplus, _match_refine_cong_kplus),
        _rule("refine-cong-plus", REFINE, _build_refine_cong_plus, _match_refine_cong_plus),
    ]
}

_THEORY_RULES: dict[TheoryId, frozenset[RuleSchema]] = {
    TheoryId.STREAMINGLY: _EQUIV_PROPS
    | {RULES["cong-fmap"], RULES["functor-id"], RULES["functor-comp"]},
    TheoryId.STATICALLY: _EQUIV_PROPS
    | {
        RULES["cong-liftA2"],
        RULES["ap-left-id"],
        RULES["ap-right-id"],
        RULES["ap-assoc"],
        RULES["ap-natural"],
    },
    TheoryId.STATICALLY_IN_PARALLEL: _EQUIV_PROPS
    | {
        RULES["cong-liftA2"],
        RULES["ap-left-id"],
        RULES["ap-right-id"],
        RULES["ap-comm"],
    },
    TheoryId.CONDITIONALLY: _EQUIV_PROPS
    | {RULES["cong-selectBy"], RULES["select-pure"]},
    TheoryId.DYNAMICALLY: _EQUIV_PROPS
    | {
        RULES["cong-bind"],
        RULES["monad-left-id"],
        RULES["monad-right-id"],
        RULES["monad-assoc"],
    },
    TheoryId.REPEATEDLY: frozenset({RULES["repeat"], RULES["kplus-mono"]}),
    TheoryId.NONDETERMINISTICALLY: frozenset(
        {
            RULES["plus-comm"],
            RULES["plus-assoc"],
            RULES["plus-lub"],
            RULES["plus-left"],
            RULES["plus-right"],
        }
    ),
}

_ADDONS = frozenset({TheoryId.REPEATEDLY, TheoryId.NONDETERMINISTICALLY})


@dataclass(frozen=True)
class Theory:
    ids: frozenset
    rules: frozenset
    relation_kinds: frozenset

    @property
    def has_refine(self) -> bool:
        return REFINE in self.relation_kinds

    def __or__(self, other: "Theory") -> "Theory":
        return theory_of(set(self.ids) | set(other.ids))

    def allows(self, rule: RuleSchema) -> bool:
        if rule in self.rules:
            return True
        return self.has_refine and rule.name in STRUCTURAL_REFINE


def theory_of(ids) -> Theory:
    ids = frozenset(TheoryId(i) for i in ids)
    if not ids:
        raise TypeMismatch("a theory needs at least one member")
    rules = frozenset().union(*(_THEORY_RULES[i] for i in ids))
    kinds = frozenset({EQUIV, REFINE}) if ids & _ADDONS else frozenset({EQUIV})
    return Theory(ids, rules, kinds)


# ---------------------------------------------------------------------------
# Checking


@dataclass
class Verdict:
    accepted: bool
    reason: str | None = None

    def __bool__(self):
        return self.accepted


def check_derivation(th: Theory, d: Derivation) -> Verdict:
    """Accept iff every node instantiates an allowed rule, premises match the
    children's roots, and all side conditions hold over their carriers."""
    rule = RULES.get(d.rule) or STRUCTURAL_REFINE.get(d.rule)
    if rule is None:
        return Verdict(False, f"RuleNotInTheory: unknown rule {d.rule!r}")
    if not th.allows(rule):
        return Verdict(False, f"RuleNotInTheory: {d.rule}")
    try:
        app = rule.build(d.bindings)
    except BadInstance as e:
        return Verdict(False, f"BadInstance in {d.rule}: {e}")
    except TypeMismatch as e:
        return Verdict(False, f"TypeMismatch in {d.rule}: {e}")
    if app.conclusion != d.root:
        return Verdict(False, f"conclusion of {d.rule} does not match the claimed judgment")
    if app.side_error is not None:
        return Verdict(False, f"{app.side_error} in {d.rule}")
    if len(app.premises) != len(d.children):
        return Verdict(
            False,
            f"{d.rule} needs {len(app.premises)} premises, has {len(d.children)} children",
        )
    for premise, child in zip(app.premises, d.children):
        if premise != child.root:
            return Verdict(False, f"premise {premise!r} of {d.rule} not established by child")
        sub = check_derivation(th, child)
        if not sub.accepted:
            return sub
    return Verdict(True)


# ---------------------------------------------------------------------------
# Bounded backward search


def prove_bounded(th: Theory, j: Judgment, depth: int) -> Derivation | None:
    """Bounded backward search over the theory's rule schemas.

    A returned derivation always re-checks successfully.  None means the
    search was exhausted, not that the judgment is refutable; transitivity
    through invented middle terms is not attempted.
    """
    if depth < 1:
        raise TypeMismatch("search depth must be at least 1")
    rules = _search_rules(th)
    failed: dict[tuple, int] = {}

    def search(j: Judgment, depth: int, path: set) -> Derivation | None:
        if depth <= 0:
            return None
        key = (j.relation, id(j.lhs), id(j.rhs))
        if failed.get(key, 0) >= depth or key in path:
            return None
        path.add(key)
        try:
            for rule in rules:
                if rule.relation != j.relation:
                    continue
                for bindings in rule.match(j):
                    try:
                        app = rule.build(bindings)
                    except (BadInstance, TypeMismatch):
                        continue
                    if app.conclusion != j or app.side_error is not None:
                        continue
                    children = []
                    for premise in app.premises:
                        sub = search(premise, depth - 1, path)
                        if sub is None:
                            break
                        children.append(sub)
                    else:
                        return Derivation(j, rule.name, bindings, tuple(children))
            old = failed.get(key, 0)
            failed[key] = max(old, depth)
            return None
        finally:
            path.discard(key)

    return search(j, depth, set())


def _search_rules(th: Theory) -> list[RuleSchema]:
    pool = list(th.rules)
    if th.has_refine:
        pool += list(STRUCTURAL_REFINE.values())
    axioms, congruences, last = [], [], []
    for r in pool:
        if r in (SYM, TRANS) or r.name in ("refine-trans",):
            last.append(r)
        elif r.name.startswith(("cong-", "refine-cong")) or r.name in ("kplus-mono", "plus-lub", "refine-promote"):
            congruences.append(r)
        else:
            axioms.append(r)
    order = {REFL.name: 0}
    axioms.sort(key=lambda r: (order.get(r.name, 1), r.name))
    congruences.sort(key=lambda r: r.name)
    return axioms + congruences + [r for r in last if r is not TRANS and r.name != "refine-trans"]


# ---------------------------------------------------------------------------
# Derivation builders (for constructing checkable proofs programmatically)


def refl(a: Term) -> Derivation:
    return Derivation(equiv(a, a), "refl", {"a": a})


def sym(d: Derivation) -> Derivation:
    a, b = d.root.rhs, d.root.lhs
    return Derivation(equiv(a, b), "sym", {"a": a, "b": b}, (d,))


def trans(d1: Derivation, d2: Derivation) -> Derivation:
    root = equiv(d1.root.lhs, d2.root.rhs)
    return Derivation(
        root, "trans", {"a": d1.root.lhs, "b": d1.root.rhs, "c": d2.root.rhs}, (d1, d2)
    )


def promote(d: Derivation) -> Derivation:
    root = Judgment(REFINE, d.root.lhs, d.root.rhs)
    return Derivation(root, "refine-promote", {"a": d.root.lhs, "b": d.root.rhs}, (d,))


def refine_refl(a: Term) -> Derivation:
    return promote(refl(a))


def refine_trans(d1: Derivation, d2: Derivation) -> Derivation:
    root = Judgment(REFINE, d1.root.lhs, d2.root.rhs)
    return Derivation(
        root,
        "refine-trans",
        {"a": d1.root.lhs, "b": d1.root.rhs, "c": d2.root.rhs},
        (d1, d2),
    )


def refine_chain(*ds: Derivation) -> Derivation:
    d = ds[0]
    for nxt in ds[1:]:
        d = refine_trans(d, nxt)
    return d


def plus_left(a: Term, b: Term) -> Derivation:
    return Derivation(
        Judgment(REFINE, a, a.vocab.plus(a, b)), "plus-left", {"a": a, "b": b}
    )


def plus_right(a: Term, b: Term) -> Derivation:
    return Derivation(
        Judgment(REFINE, b, a.vocab.plus(a, b)), "plus-right", {"a": a, "b": b}
    )


def plus_lub(d1: Derivation, d2: Derivation) -> Derivation:
    a, b, c = d1.root.lhs, d2.root.lhs, d1.root.rhs
    root = Judgment(REFINE, a.vocab.plus(a, b), c)
    return Derivation(root, "plus-lub", {"a": a, "b": b, "c": c}, (d1, d2))


def repeat_refines(a: Term, n: int, seq: str = "auto") -> Derivation:
    lhs = repeat_term(a, n, seq)
    root = Judgment(REFINE, lhs, a.vocab.kplus(a))
    return Derivation(root, "repeat", {"a": a, "n": n, "seq": seq})


def kplus_mono(d: Derivation) -> Derivation:
    a = d.root.lhs
    rhs = d.root.rhs
    if not isinstance(rhs, KPlusT):
        raise TypeMismatch("kplus-mono premise must target a kplus term")
    root = Judgment(REFINE, a.vocab.kplus(a), rhs)
    return Derivation(root, "kplus-mono", {"a": a, "b": rhs.arg}, (d,))


def refine_cong_bind(d_scrutinee: Derivation, branch_ds: dict) -> Derivation:
    m1, m2 = d_scrutinee.root.lhs, d_scrutinee.root.rhs
    voc = m1.vocab
    lhs = voc.bind(m1, {v: branch_ds[v].root.lhs for v in branch_ds})
    rhs = voc.bind(m2, {v: branch_ds[v].root.rhs for v in branch_ds})
    root = Judgment(REFINE, lhs, rhs)
    children = (d_scrutinee,) + tuple(branch_ds[v] for v in m1.result_type.carrier)
    return Derivation(root, "refine-cong-bind", {"lhs": lhs, "rhs": rhs}, children)

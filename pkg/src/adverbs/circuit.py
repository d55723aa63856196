"""A small boolean circuit language and its four embeddings.

Circuits read named inputs whose values come from external devices, so a
read is an effect: we never assume the device is immutable.  The embeddings
range from fully shallow (a reader function) through fully deep (the plain
AST) to the two mixed forms, one monadic and one applicative.  The
applicative one keeps enough structure to measure gate depth and input
counts while still supporting equational reasoning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    BIND,
    BOOL,
    FMAP,
    LIFT_A2,
    PURE,
    Algebra,
    EffectOp,
    EffectSig,
    FiniteType,
    Fn,
    ParseError,
    Term,
    Vocabulary,
    effect_kind,
    fold,
    vocabulary,
)

# The boolean operator tables shared by every embedding.
ANDB = Fn.from_callable("andb", (BOOL, BOOL), BOOL, lambda a, b: a and b)
ORB = Fn.from_callable("orb", (BOOL, BOOL), BOOL, lambda a, b: a or b)
NEGB = Fn.from_callable("negb", (BOOL,), BOOL, lambda a: not a)

DEFAULT_VARS = ("w", "x", "y", "z")


# ---------------------------------------------------------------------------
# Abstract syntax


@dataclass(frozen=True)
class Lit:
    value: bool


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "CircuitTerm"


@dataclass(frozen=True)
class And:
    left: "CircuitTerm"
    right: "CircuitTerm"


@dataclass(frozen=True)
class Or:
    left: "CircuitTerm"
    right: "CircuitTerm"


CircuitTerm = Lit | Var | Neg | And | Or


def circuit_vars(c: CircuitTerm) -> set[str]:
    if isinstance(c, Lit):
        return set()
    if isinstance(c, Var):
        return {c.name}
    if isinstance(c, Neg):
        return circuit_vars(c.arg)
    return circuit_vars(c.left) | circuit_vars(c.right)


# ---------------------------------------------------------------------------
# Concrete syntax
#
# atoms: true, false, identifiers, parentheses; ! binds tightest, then &,
# then |; both infix operators are left-associative.


def _tokens(text: str):
    out = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "!&|()":
            out.append((c, i))
            i += 1
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append((text[i:j], i))
            i = j
        else:
            raise ParseError(f"unexpected character {c!r}", i)
    return out


def parse_circuit(text: str) -> CircuitTerm:
    toks = _tokens(text)
    pos = 0

    def peek():
        return toks[pos][0] if pos < len(toks) else None

    def offset():
        return toks[pos][1] if pos < len(toks) else len(text)

    def advance():
        nonlocal pos
        pos += 1

    def parse_or():
        t = parse_and()
        while peek() == "|":
            advance()
            t = Or(t, parse_and())
        return t

    def parse_and():
        t = parse_unary()
        while peek() == "&":
            advance()
            t = And(t, parse_unary())
        return t

    def parse_unary():
        if peek() == "!":
            advance()
            return Neg(parse_unary())
        return parse_atom()

    def parse_atom():
        tok = peek()
        if tok == "(":
            advance()
            t = parse_or()
            if peek() != ")":
                raise ParseError("expected ')'", offset())
            advance()
            return t
        if tok == "true":
            advance()
            return Lit(True)
        if tok == "false":
            advance()
            return Lit(False)
        if tok is not None and (tok[0].isalpha() or tok[0] == "_") and tok not in ("true", "false"):
            advance()
            return Var(tok)
        raise ParseError(f"expected a circuit atom, got {tok!r}", offset())

    t = parse_or()
    if pos != len(toks):
        raise ParseError(f"trailing input {peek()!r}", offset())
    return t


def pretty_circuit(c: CircuitTerm) -> str:
    """Minimal-parentheses rendering; parse(pretty(c)) == c."""

    def go(c: CircuitTerm, level: int) -> str:
        # levels: 0 = or, 1 = and, 2 = unary
        if isinstance(c, Lit):
            return "true" if c.value else "false"
        if isinstance(c, Var):
            return c.name
        if isinstance(c, Neg):
            return _wrap("!" + go(c.arg, 2), 2, level)
        if isinstance(c, And):
            return _wrap(go(c.left, 1) + " & " + go(c.right, 2), 1, level)
        return _wrap(go(c.left, 0) + " | " + go(c.right, 1), 0, level)

    def _wrap(s: str, mine: int, ctx: int) -> str:
        return f"({s})" if mine < ctx else s

    return go(c, 0)


# ---------------------------------------------------------------------------
# Embedding context


@dataclass(frozen=True)
class CircuitContext:
    """The declared variable universe and the vocabularies built over it."""

    var_type: FiniteType
    data_eff: EffectSig
    reified: Vocabulary
    freer: Vocabulary

    @property
    def var_names(self) -> tuple[str, ...]:
        return self.var_type.carrier


def circuit_context(var_names: tuple[str, ...] = DEFAULT_VARS) -> CircuitContext:
    var_type = FiniteType("var", tuple(var_names))
    data_eff = EffectSig("DataEff", (EffectOp("GetData", (var_type,), BOOL),))
    reified = vocabulary(PURE, FMAP, LIFT_A2, effect_kind(data_eff))
    freer = vocabulary(PURE, BIND, effect_kind(data_eff))
    return CircuitContext(var_type, data_eff, reified, freer)


DEFAULT_CONTEXT = circuit_context()


def _check_scope(c: CircuitTerm, ctx: CircuitContext):
    extra = circuit_vars(c) - set(ctx.var_names)
    if extra:
        raise ParseError(f"variables {sorted(extra)} not in the declared set", 0)


# ---------------------------------------------------------------------------
# The four embeddings


def embed_shallow(c: CircuitTerm):
    """Reader-style shallow embedding: a function from environments."""

    def run(env: dict) -> bool:
        if isinstance(c, Lit):
            return c.value
        if isinstance(c, Var):
            return env[c.name]
        if isinstance(c, Neg):
            return not embed_shallow(c.arg)(env)
        if isinstance(c, And):
            return embed_shallow(c.left)(env) and embed_shallow(c.right)(env)
        return embed_shallow(c.left)(env) or embed_shallow(c.right)(env)

    return run


def embed_deep(c: CircuitTerm) -> CircuitTerm:
    return c


def embed_freer(c: CircuitTerm, ctx: CircuitContext = DEFAULT_CONTEXT) -> Term:
    """Monadic mixed embedding over {pure, bind, GetData}."""
    _check_scope(c, ctx)
    voc = ctx.freer

    def go(c: CircuitTerm) -> Term:
        if isinstance(c, Lit):
            return voc.pure(c.value, BOOL)
        if isinstance(c, Var):
            get = voc.effect(ctx.data_eff, "GetData", (c.name,))
            return voc.bind(get, {v: voc.pure(v, BOOL) for v in BOOL.carrier})
        if isinstance(c, Neg):
            return voc.bind(go(c.arg), {v: voc.pure(not v, BOOL) for v in BOOL.carrier})
        op = ANDB if isinstance(c, And) else ORB
        left, right = go(c.left), go(c.right)
        return voc.bind(
            left,
            {
                lv: voc.bind(right, {rv: voc.pure(op(lv, rv), BOOL) for rv in BOOL.carrier})
                for lv in BOOL.carrier
            },
        )

    return go(c)


def embed_reified(c: CircuitTerm, ctx: CircuitContext = DEFAULT_CONTEXT) -> Term:
    """Applicative mixed embedding over {pure, fmap, liftA2, GetData}."""
    _check_scope(c, ctx)
    voc = ctx.reified

    def go(c: CircuitTerm) -> Term:
        if isinstance(c, Lit):
            return voc.pure(c.value, BOOL)
        if isinstance(c, Var):
            return voc.effect(ctx.data_eff, "GetData", (c.name,))
        if isinstance(c, Neg):
            return voc.fmap(NEGB, go(c.arg))
        op = ANDB if isinstance(c, And) else ORB
        return voc.lift_a2(op, go(c.left), go(c.right))

    return go(c)


# ---------------------------------------------------------------------------
# Syntactic analyses

_DEPTH_ALG = Algebra(
    pure=lambda v, t: 0,
    effect=lambda sig, op, args: 0,
    fmap=lambda g, a: 1 + a,
    lift_a2=lambda f, a, b: 1 + max(a, b),
)

_NUM_VAR_ALG = Algebra(
    pure=lambda v, t: 0,
    effect=lambda sig, op, args: 1,
    fmap=lambda g, a: a,
    lift_a2=lambda f, a, b: a + b,
)


def app_depth(t: Term) -> int:
    return fold(t, _DEPTH_ALG)


def app_num_var(t: Term) -> int:
    return fold(t, _NUM_VAR_ALG)


def deep_depth(c: CircuitTerm) -> int:
    if isinstance(c, (Lit, Var)):
        return 0
    if isinstance(c, Neg):
        return 1 + deep_depth(c.arg)
    return 1 + max(deep_depth(c.left), deep_depth(c.right))


def deep_num_var(c: CircuitTerm) -> int:
    if isinstance(c, Lit):
        return 0
    if isinstance(c, Var):
        return 1
    if isinstance(c, Neg):
        return deep_num_var(c.arg)
    return deep_num_var(c.left) + deep_num_var(c.right)


# ---------------------------------------------------------------------------
# The four questions


@dataclass
class PropertyVerdict:
    name: str
    status: str  # PROVED | REFUTED | UNKNOWN
    detail: str = ""
    witness: str | None = None


def check_properties(
    ctx: CircuitContext = DEFAULT_CONTEXT,
    search_depth: int = 4,
    random_terms: int = 10_000,
    max_depth: int = 8,
    seed: int = 2023,
) -> list[PropertyVerdict]:
    """Run the four standing questions about the circuit language.

    1. one read vs. two reads of the same input: underivable in every
       theory, and refuted outright by the fresh-outcome oracle;
    2. absorbing a constant true input: an applicative identity law;
    3. operand swap: needs the commutativity extension;
    4. input count is at most 2^depth, over random applicative terms.
    """
    import random

    from .gen import random_reified_term
    from .semantics import fresh_outcome_model, oracle_equiv, powerset_interpret
    from .theories import TheoryId, equiv, prove_bounded, theory_of

    x = embed_reified(Var("x"), ctx)
    xx = embed_reified(And(Var("x"), Var("x")), ctx)
    xt = embed_reified(And(Var("x"), Lit(True)), ctx)
    tu = embed_reified(And(Var("x"), Var("y")), ctx)
    ut = embed_reified(And(Var("y"), Var("x")), ctx)

    verdicts = []
    model = fresh_outcome_model(ctx.reified)

    # (1) not derivable anywhere, and semantically refuted
    derivable = []
    for tid in TheoryId:
        th = theory_of({tid})
        if prove_bounded(th, equiv(x, xx), search_depth) is not None:
            derivable.append(tid.value)
    refuted = not oracle_equiv(x, xx, model)
    if derivable:
        verdicts.append(
            PropertyVerdict("q1-single-vs-double-read", "REFUTED", f"derivable in {derivable}")
        )
    elif refuted:
        wit = sorted(
            powerset_interpret(xx, model).behaviors - powerset_interpret(x, model).behaviors
        )
        from .sexpr import render_behavior

        verdicts.append(
            PropertyVerdict(
                "q1-single-vs-double-read",
                "UNKNOWN",
                "underivable in every theory; fresh-outcome oracle refutes",
                witness=render_behavior(*wit[0]),
            )
        )
    else:
        verdicts.append(PropertyVerdict("q1-single-vs-double-read", "REFUTED", "oracle agreed"))

    # (2) x = x & true, an identity law of the static theory
    d2 = prove_bounded(theory_of({TheoryId.STATICALLY}), equiv(x, xt), search_depth)
    verdicts.append(
        PropertyVerdict(
            "q2-and-true",
            "PROVED" if d2 is not None else "UNKNOWN",
            f"rule {d2.children[0].rule}" if d2 is not None and d2.children else "",
        )
    )

    # (3) operand swap: only with commutativity
    d3_static = prove_bounded(theory_of({TheoryId.STATICALLY}), equiv(tu, ut), search_depth)
    d3_par = prove_bounded(
        theory_of({TheoryId.STATICALLY_IN_PARALLEL}), equiv(tu, ut), search_depth
    )
    status3 = "PROVED" if (d3_static is None and d3_par is not None) else (
        "REFUTED" if d3_static is not None else "UNKNOWN"
    )
    verdicts.append(
        PropertyVerdict(
            "q3-operand-swap",
            status3,
            "underivable statically, derivable statically-in-parallel"
            if status3 == "PROVED"
            else "",
        )
    )

    # (4) num inputs <= 2^depth over random applicative terms
    rng = random.Random(seed)
    bad = None
    for _ in range(random_terms):
        t = random_reified_term(rng, ctx, rng.randint(0, max_depth))
        if app_num_var(t) > 2 ** app_depth(t):
            bad = t
            break
    verdicts.append(
        PropertyVerdict(
            "q4-height-vs-inputs",
            "PROVED" if bad is None else "REFUTED",
            f"{random_terms} random terms up to depth {max_depth}",
            witness=None if bad is None else repr(bad),
        )
    )
    return verdicts


def height_var_pairs(max_depth: int) -> set[tuple[int, int]]:
    """Every (depth, input-count) pair reachable by any circuit up to a depth.

    The two analyses are compositional, so closure over pairs is exhaustive
    over all circuits at that depth even though the circuits themselves are
    unenumerable.
    """
    pairs = {(0, 0), (0, 1)}  # literals and variables
    frontier = set(pairs)
    while frontier:
        fresh = set()
        for d, n in frontier:
            if d < max_depth:
                fresh.add((d + 1, n))  # negation
        for d1, n1 in pairs:
            for d2, n2 in pairs:
                d = 1 + max(d1, d2)
                if d <= max_depth:
                    fresh.add((d, n1 + n2))  # binary gate
        fresh -= pairs
        pairs |= fresh
        frontier = fresh
    return pairs


def eval_circuit(c: CircuitTerm, env: dict) -> bool:
    return embed_shallow(c)(env)


def count_reads_bound(c: CircuitTerm) -> bool:
    return deep_num_var(c) <= 2 ** deep_depth(c)


def log2_bound_ok(depth: int, num_var: int) -> bool:
    return num_var <= 2**depth or math.isclose(num_var, 2**depth)

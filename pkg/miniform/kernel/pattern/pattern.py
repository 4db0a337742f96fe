from dataclasses import dataclass, field, replace
from fractions import Fraction

from miniform.kernel.compiler import syntax
from miniform.kernel.compiler.syntax import (
    ArgField,
    BinOp,
    BracketRef,
    Builtin,
    Call,
    Dollar,
    ExprRef,
    Neg,
    Num,
    Ref,
    Wild,
)
from miniform.kernel.term_core import term_core as tc
from miniform.utils import CompileError, ExecutionError, MiniformError, throw


class ArgList(tuple):
    """What an argument-field wildcard `?a` binds: a run of whole arguments."""


# Evaluation of replacement trees
# ------------------


@dataclass
class Context:
    """
    Everything an expression tree can refer to while it is evaluated.

    - bindings: wildcard name -> expression (or ArgList for `?a`)
    - dollars: $-variable name -> expression
    - tables: table name -> {integer key tuple: expression}
    - expressions: callable name -> expression
    - bracket: callable (name, key expression) -> bracket contents
    - term: the term being processed, for count_
    - max_term_size: largest function application allowed (None: no limit)
    """

    bindings: dict = field(default_factory=dict)
    dollars: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    expressions: object = None
    bracket: object = None
    term: object = None
    max_term_size: int = None

    def bind(self, bindings):
        return replace(self, bindings=bindings)


def evaluate(node, ctx):
    """Canonical expression (sorted term tuple) of an expression tree."""
    if isinstance(node, Num):
        return tc.const(node.value)

    if isinstance(node, Ref):
        bound = ctx.bindings.get(node.var.name)
        if bound is not None:
            if isinstance(bound, ArgList):
                throw(f"Argument field ?{node.var.name} used outside a function", exc=ExecutionError)
            return bound
        if node.var.kind == "index":
            return tc.atom(tc.Index(node.var))
        return tc.atom(tc.SymbolPower(node.var, 1))

    if isinstance(node, BinOp):
        left = evaluate(node.left, ctx)
        right = evaluate(node.right, ctx)
        if node.op == "+":
            return tc.add(left, right)
        if node.op == "-":
            return tc.add(left, tc.negate(right))
        if node.op == "*":
            return tc.multiply(left, right)
        if node.op == "/":
            return tc.multiply(left, invert(right))
        return raise_power(left, right)

    if isinstance(node, Neg):
        return tc.negate(evaluate(node.operand, ctx))

    if isinstance(node, Call):
        return _call(node, ctx)

    if isinstance(node, Builtin):
        return builtin_eval(node, ctx)

    if isinstance(node, Dollar):
        if node.name not in ctx.dollars:
            throw(f"Undefined $-variable ${node.name}", exc=ExecutionError)
        return ctx.dollars[node.name]

    if isinstance(node, ExprRef):
        if ctx.expressions is None:
            throw(f"Expression {node.name} cannot be used here", exc=ExecutionError)
        return ctx.expressions(node.name)

    if isinstance(node, BracketRef):
        if ctx.bracket is None:
            throw(f"Bracket of {node.name} cannot be used here", exc=ExecutionError)
        return ctx.bracket(node.name, evaluate(node.key, ctx))

    if isinstance(node, ArgField):
        throw(f"Argument field ?{node.name} used outside a function", exc=ExecutionError)

    throw(f"Cannot evaluate {node}", exc=ExecutionError)


def substitute(node, bindings, ctx=None):
    """Evaluate a replacement tree with the bindings of a match spliced in."""
    ctx = ctx or Context()
    return evaluate(node, ctx.bind({**ctx.bindings, **bindings}))


def invert(p):
    """1/p for a monomial p; a sum or a function cannot be inverted."""
    if not p:
        throw("Division by zero", exc=ExecutionError)
    if len(p) > 1:
        throw("Division by a sum of terms is not allowed", exc=ExecutionError)
    t = p[0]
    factors = []
    for f in t.factors:
        if not isinstance(f, tc.SymbolPower):
            throw(f"Cannot divide by {tc.format_factor(f)}", exc=ExecutionError)
        factors.append(tc.SymbolPower(f.var, -f.exponent))
    return (tc.normalize(1 / t.coef, factors),)


def raise_power(base, exponent):
    if not tc.is_number(exponent) or tc.number_value(exponent).denominator != 1:
        throw("Exponent must be an integer", exc=ExecutionError)
    n = int(tc.number_value(exponent))
    if n < 0:
        return tc.power(invert(base), -n)
    if not base and n == 0:
        return tc.const(1)
    return tc.power(base, n)


def _call(node, ctx):
    args = []
    for arg in node.args:
        if isinstance(arg, ArgField):
            bound = ctx.bindings.get(arg.name)
            if not isinstance(bound, ArgList):
                throw(f"Argument field ?{arg.name} is not bound", exc=ExecutionError)
            args.extend(bound)
        else:
            args.append(evaluate(arg, ctx))

    var = node.var
    if var.kind == "table":
        key = integer_key(args)
        filled = ctx.tables.get(var.name, {})
        if key is not None and key in filled:
            return filled[key]

    app, sign = tc.make_function(var, args, ctx.max_term_size)
    if sign == 0:
        return ()
    return (tc.Term(Fraction(sign), (app,)),)


def integer_key(args):
    key = []
    for arg in args:
        if not tc.is_number(arg):
            return None
        value = tc.number_value(arg)
        if value.denominator != 1:
            return None
        key.append(int(value))
    return tuple(key)


def _number(p, what):
    if not tc.is_number(p):
        throw(f"{what} needs a number, got {tc.format_terms(p)}", exc=ExecutionError)
    return tc.number_value(p)


def builtin_eval(node, ctx):
    """
    The builtin functions:
    - sum_(k, lo, hi[, step], body): body summed over integer k
    - count_(x, w, ...): weighted count of x in the current term
    - sig_(n): sign of a number
    - abs_(n): absolute value of a number
    """
    name, args = node.name, node.args

    if name == "sum_":
        if len(args) not in (4, 5) or not isinstance(args[0], Ref):
            throw("sum_ needs (variable, low, high[, step], body)", exc=ExecutionError)
        bounds = []
        for arg in args[1:-1]:
            value = _number(evaluate(arg, ctx), "sum_")
            if value.denominator != 1:
                throw("sum_ bounds must be integers", exc=ExecutionError)
            bounds.append(int(value))
        step = bounds[2] if len(bounds) == 3 else 1
        if step == 0:
            throw("sum_ step cannot be zero", exc=ExecutionError)
        terms = []
        loop = args[0].var.name
        for k in range(bounds[0], bounds[1] + (1 if step > 0 else -1), step):
            terms.extend(evaluate(args[-1], ctx.bind({**ctx.bindings, loop: tc.const(k)})))
        return tc.sort_terms(terms)

    if name == "count_":
        if ctx.term is None:
            throw("count_ needs a current term", exc=ExecutionError)
        return tc.const(count(ctx.term, args, ctx))

    if name in ("sig_", "abs_"):
        if len(args) != 1:
            throw(f"{name} takes one argument", exc=ExecutionError)
        value = _number(evaluate(args[0], ctx), name)
        if name == "abs_":
            return tc.const(abs(value))
        return tc.const((value > 0) - (value < 0))

    throw(f"Unknown builtin {name}", exc=ExecutionError)


def count(term, args, ctx=None):
    """Sum of weight * power over (variable, weight) pairs; functions count occurrences."""
    if len(args) % 2:
        throw("count needs (variable, weight) pairs", exc=ExecutionError)
    total = Fraction(0)
    for var_node, weight_node in zip(args[::2], args[1::2]):
        weight = _number(evaluate(weight_node, ctx or Context()), "count")
        if isinstance(var_node, Ref):
            var = var_node.var
        elif isinstance(var_node, Call) and not var_node.args:
            var = var_node.var
        else:
            throw("count needs a variable", exc=ExecutionError)
        for f in term.factors:
            if f.var is not var and f.var != var:
                continue
            total += weight * (f.exponent if isinstance(f, tc.SymbolPower) else 1)
    return total


# Patterns
# ------------------


@dataclass(frozen=True)
class PSymbol:
    var: object
    exponent: int


@dataclass(frozen=True)
class PSymbolWild:
    name: str


@dataclass(frozen=True)
class PIndex:
    var: object


@dataclass(frozen=True)
class PFunc:
    var: object
    args: tuple


@dataclass(frozen=True)
class AWild:
    name: str


@dataclass(frozen=True)
class AField:
    name: str


@dataclass(frozen=True)
class ALiteral:
    value: tuple


@dataclass(frozen=True)
class ATerm:
    pattern: object


@dataclass(frozen=True)
class Restriction:
    """Allowed (or, with exclude, forbidden) values of one wildcard."""

    elements: tuple = ()
    builtin: str = None
    exclude: bool = False


@dataclass(frozen=True)
class Pattern:
    factors: tuple
    coef: Fraction = Fraction(1)
    restrictions: tuple = ()

    def __str__(self):
        return " * ".join(str(f) for f in self.factors)


def compile_pattern(tree, table=None):
    """
    Turn the tree of an id left-hand side into a Pattern.

    The tree must be a product; each factor is a symbol (power), an index,
    a wildcard symbol or a function whose arguments are wildcards, argument
    fields, literals or nested term patterns.
    """
    restrictions = {}
    factors, coef = _compile_product(tree, restrictions, table)
    if not factors:
        throw("Illegal pattern: nothing to match", exc=CompileError)
    if coef != 1:
        throw("Illegal pattern: a coefficient cannot be matched", exc=CompileError)
    return Pattern(tuple(factors), coef, tuple(restrictions.items()))


def _compile_product(tree, restrictions, table):
    factors = []
    coef = Fraction(1)
    stack = [tree]
    flat = []
    while stack:
        node = stack.pop()
        if isinstance(node, BinOp) and node.op == "*":
            stack.append(node.right)
            stack.append(node.left)
        elif isinstance(node, Neg):
            coef = -coef
            stack.append(node.operand)
        else:
            flat.append(node)

    for node in flat:
        if isinstance(node, Num):
            coef *= node.value
        elif isinstance(node, Ref) and node.var.kind == "symbol":
            factors.append(PSymbol(node.var, 1))
        elif isinstance(node, Ref) and node.var.kind == "index":
            factors.append(PIndex(node.var))
        elif isinstance(node, BinOp) and node.op == "^" and isinstance(node.left, Ref):
            exponent = _literal_integer(node.right)
            if exponent is None or exponent == 0 or node.left.var.kind != "symbol":
                throw("Illegal power in pattern", exc=CompileError)
            factors.append(PSymbol(node.left.var, exponent))
        elif isinstance(node, Wild):
            _restrict(node, restrictions, table)
            factors.append(PSymbolWild(node.name))
        elif isinstance(node, Call) and node.var.kind != "table":
            factors.append(PFunc(node.var, tuple(_compile_arg(a, restrictions, table) for a in node.args)))
        else:
            throw("Illegal pattern: only products of symbols, indices and functions can be matched", exc=CompileError)
    return factors, coef


def _compile_arg(node, restrictions, table):
    if isinstance(node, Wild):
        _restrict(node, restrictions, table)
        return AWild(node.name)
    if isinstance(node, ArgField):
        return AField(node.name)
    if not any(isinstance(n, (Wild, ArgField)) for n in syntax.walk(node)):
        return ALiteral(_literal(node))
    factors, coef = _compile_product(node, restrictions, table)
    if not factors:
        throw("Illegal pattern argument", exc=CompileError)
    return ATerm(Pattern(tuple(factors), coef))


def _restrict(node, restrictions, table):
    if node.restrict is None or node.name in restrictions:
        return
    if isinstance(node.restrict, tuple):
        elements = node.restrict
    elif node.restrict in ("number_", "integer_", "symbol_", "index_"):
        restrictions[node.name] = Restriction(builtin=node.restrict)
        return
    else:
        elements = table.get_set(node.restrict) if table is not None else None
        if elements is None:
            throw(f"Undeclared set {node.restrict}", exc=CompileError)

    compiled = []
    for element in elements:
        if isinstance(element, Wild):
            compiled.append(("wild", element.name))
        else:
            compiled.append(("value", _literal(element)))
    restrictions[node.name] = Restriction(elements=tuple(compiled), exclude=node.exclude)


def _literal(node):
    try:
        return evaluate(node, Context())
    except MiniformError as e:
        raise CompileError(f"Illegal literal in pattern: {e.message}") from e


def _literal_integer(node):
    try:
        value = tc.number_value(evaluate(node, Context()))
    except MiniformError:
        return None
    return int(value) if value.denominator == 1 else None


# Matching
# ------------------


def match(pat, term, bindings=None):
    """First bindings under which the pattern matches the term, or None."""
    for found, _ in _matches(pat, list(term.factors), dict(bindings or {})):
        return found
    return None


def _matches(pat, factors, bindings):
    for found, rest in _match_factors(pat.factors, 0, factors, bindings):
        if _restrictions_hold(pat.restrictions, found):
            yield found, rest


def _match_factors(pfactors, i, remaining, bindings):
    if i == len(pfactors):
        yield bindings, remaining
        return
    pf = pfactors[i]
    for k, f in enumerate(remaining):
        for found, leftover in _match_factor(pf, f, bindings):
            rest = remaining[:k] + leftover + remaining[k + 1 :]
            yield from _match_factors(pfactors, i + 1, rest, found)


def _match_factor(pf, f, bindings):
    if isinstance(pf, PSymbol):
        if isinstance(f, tc.SymbolPower) and f.var is pf.var:
            if (f.exponent > 0) == (pf.exponent > 0) and abs(f.exponent) >= abs(pf.exponent):
                left = f.exponent - pf.exponent
                yield bindings, [tc.SymbolPower(f.var, left)] if left else []
        return

    if isinstance(pf, PSymbolWild):
        if isinstance(f, tc.SymbolPower) and f.exponent > 0:
            found = _bind(bindings, pf.name, tc.atom(tc.SymbolPower(f.var, 1)))
            if found is not None:
                left = f.exponent - 1
                yield found, [tc.SymbolPower(f.var, left)] if left else []
        return

    if isinstance(pf, PIndex):
        if isinstance(f, tc.Index) and f.var is pf.var:
            yield bindings, []
        return

    if isinstance(f, tc.FuncApp) and f.var is pf.var:
        for found in _match_args(pf.args, 0, f.args, 0, bindings):
            yield found, []


def _match_args(pargs, j, args, k, bindings):
    if j == len(pargs):
        if k == len(args):
            yield bindings
        return

    pa = pargs[j]
    if isinstance(pa, AField):
        bound = bindings.get(pa.name)
        if bound is not None:
            if tuple(args[k : k + len(bound)]) == tuple(bound):
                yield from _match_args(pargs, j + 1, args, k + len(bound), bindings)
            return
        fixed = sum(1 for p in pargs[j + 1 :] if not isinstance(p, AField))
        for n in range(len(args) - k - fixed + 1):
            found = {**bindings, pa.name: ArgList(args[k : k + n])}
            yield from _match_args(pargs, j + 1, args, k + n, found)
        return

    if k >= len(args):
        return
    for found in _match_arg(pa, args[k], bindings):
        yield from _match_args(pargs, j + 1, args, k + 1, found)


def _match_arg(pa, arg, bindings):
    if isinstance(pa, AWild):
        found = _bind(bindings, pa.name, arg)
        if found is not None:
            yield found
    elif isinstance(pa, ALiteral):
        if pa.value == arg:
            yield bindings
    elif len(arg) == 1 and arg[0].coef == pa.pattern.coef:
        for found, rest in _match_factors(pa.pattern.factors, 0, list(arg[0].factors), bindings):
            if not rest:
                yield found


def _bind(bindings, name, value):
    bound = bindings.get(name)
    if bound is not None:
        return bindings if bound == value else None
    return {**bindings, name: value}


def _restrictions_hold(restrictions, bindings):
    for name, rule in restrictions:
        value = bindings.get(name)
        if value is None or isinstance(value, ArgList):
            continue
        if rule.builtin is not None:
            if not _in_builtin_set(rule.builtin, value):
                return False
            continue

        hit = False
        for kind, element in rule.elements:
            if kind == "wild":
                other = bindings.get(element)
                if other is not None and other == value:
                    hit = True
                    break
            elif element == value:
                hit = True
                break
        if hit == rule.exclude:
            return False
    return True


def _in_builtin_set(name, value):
    if name in ("number_", "integer_"):
        if not tc.is_number(value):
            return False
        return name == "number_" or tc.number_value(value).denominator == 1
    if len(value) != 1 or value[0].coef != 1 or len(value[0].factors) != 1:
        return False
    f = value[0].factors[0]
    if name == "symbol_":
        return isinstance(f, tc.SymbolPower) and f.exponent == 1
    return isinstance(f, tc.Index)


# id
# ------------------


def apply_id(pat, rhs, term, ctx=None):
    """
    One pass of `id pattern = rhs` over a term.

    Matches are taken one after another on what the previous matches left
    over, so `id x = y+1` on x^3 consumes all three powers. The result is
    the leftover times the product of the replacements; None means the
    pattern did not match at all.
    """
    ctx = ctx or Context()
    ctx = replace(ctx, term=term)
    remaining = list(term.factors)
    replacements = []
    while True:
        found = next(_matches(pat, remaining, dict(ctx.bindings)), None)
        if found is None:
            break
        bindings, remaining = found
        replacements.append(evaluate(rhs, ctx.bind(bindings)))

    if not replacements:
        return None
    result = (tc.normalize(term.coef, remaining),)
    for replacement in replacements:
        result = tc.multiply(result, replacement)
        if not result:
            break
    return result

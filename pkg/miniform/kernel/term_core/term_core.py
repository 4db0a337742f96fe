from dataclasses import dataclass, field
from fractions import Fraction
from operator import attrgetter

from miniform.utils import ExecutionError, throw

SYMMETRIES = ("none", "symmetric", "antisymmetric", "cyclesymmetric", "rcyclesymmetric")

# rank of each subterm class in the canonical order
RANK_SYMBOL = 0
RANK_INDEX = 1
RANK_FUNCTION = 2
RANK_NONCOMMUTING = 3


@dataclass(frozen=True)
class Variable:
    """
    A declared name.

    `ordinal` is the declaration number handed out by the symbol table;
    it is unique over all classes and drives the canonical order.
    """

    name: str
    kind: str
    ordinal: int
    commuting: bool = True
    symmetry: str = "none"
    tensor: bool = False
    dimension: int = 0

    def __repr__(self):
        return self.name


_by_key = attrgetter("key")


@dataclass(frozen=True)
class SymbolPower:
    var: Variable
    exponent: int
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "key", (RANK_SYMBOL, self.var.ordinal, -self.exponent))

    @property
    def size(self):
        return 1


@dataclass(frozen=True)
class Index:
    var: Variable
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "key", (RANK_INDEX, self.var.ordinal))

    @property
    def size(self):
        return 1


@dataclass(frozen=True)
class FuncApp:
    """A function or tensor with its argument list; every argument is a term tuple."""

    var: Variable
    args: tuple
    key: tuple = field(init=False, repr=False, compare=False)
    arg_keys: tuple = field(init=False, repr=False, compare=False)
    size: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arg_keys = tuple(arg_key(a) for a in self.args)
        rank = RANK_FUNCTION if self.var.commuting else RANK_NONCOMMUTING
        object.__setattr__(self, "arg_keys", arg_keys)
        object.__setattr__(self, "key", (rank, self.var.ordinal, arg_keys))
        object.__setattr__(
            self, "size", 1 + sum(term.size for arg in self.args for term in arg)
        )


@dataclass(frozen=True)
class Term:
    """
    A rational coefficient times an ordered tuple of subterms.

    Build terms with `normalize` or `mul`; the constructor trusts that the
    factors are already canonical.
    """

    coef: Fraction
    factors: tuple = ()
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "key", tuple(f.key for f in self.factors))

    @property
    def size(self):
        return 1 + sum(f.size for f in self.factors)

    def with_coef(self, coef):
        return Term(Fraction(coef), self.factors)

    def __str__(self):
        return format_term(self, first=True)


def arg_key(arg):
    return tuple((t.key, t.coef) for t in arg)


def const(value):
    """The one-term expression for a number; zero is the empty expression."""
    value = Fraction(value)
    if value == 0:
        return ()
    return (Term(value, ()),)


def atom(factor):
    """One-term expression holding a single subterm with coefficient 1."""
    return (Term(Fraction(1), (factor,)),)


# Canonical form
# ------------------


def permutation_parity(order):
    """Sign of a permutation given as a list of positions, via its cycle decomposition."""
    seen = [False] * len(order)
    parity = 1
    for start in range(len(order)):
        if seen[start]:
            continue
        length = 0
        step = start
        while not seen[step]:
            seen[step] = True
            step = order[step]
            length += 1
        if length % 2 == 0:
            parity = -parity
    return parity


def symmetrize(app):
    """
    Bring the arguments of a function into the order its symmetry demands.

    Returns (canonical FuncApp, sign) with sign in {1, -1, 0}:
    - symmetric: arguments sorted
    - antisymmetric: sorted, sign is the permutation parity, 0 on a repeated argument
    - cyclesymmetric: least rotation
    - rcyclesymmetric: least rotation of the list or of its reversal
    """
    kind = app.var.symmetry
    n = len(app.args)
    if kind == "none" or n < 2:
        return app, 1

    keys = app.arg_keys
    sign = 1

    if kind in ("symmetric", "antisymmetric"):
        order = sorted(range(n), key=keys.__getitem__)
        if kind == "antisymmetric":
            for a, b in zip(order, order[1:]):
                if keys[a] == keys[b]:
                    return app, 0
            sign = permutation_parity(order)
    else:
        candidates = [list(range(n))]
        if kind == "rcyclesymmetric":
            candidates.append(list(reversed(range(n))))
        order = None
        best = None
        for base in candidates:
            for r in range(n):
                rotated = base[r:] + base[:r]
                candidate = tuple(keys[i] for i in rotated)
                if best is None or candidate < best:
                    best = candidate
                    order = rotated

    if order == list(range(n)):
        return app, sign
    return FuncApp(app.var, tuple(app.args[i] for i in order)), sign


def make_function(var, args, max_size=None):
    """
    Build a function application and return (FuncApp, sign) after
    symmetrization. `max_size` bounds the size of the application.
    """
    app = FuncApp(var, tuple(args))
    if max_size is not None and app.size > max_size:
        throw(
            f"Term too complex: argument of {var.name} exceeds MaxTermSize {max_size}",
            exc=ExecutionError,
        )
    return symmetrize(app)


def normalize(coef, factors):
    """
    Turn a raw coefficient and subterm list into a canonical Term.

    Returns None when the term vanishes (zero coefficient, or an
    antisymmetric function with two equal arguments).
    """
    coef = Fraction(coef)
    if coef == 0:
        return None

    powers = {}
    commuting = []
    noncommuting = []

    for f in factors:
        if isinstance(f, SymbolPower):
            entry = powers.get(f.var.ordinal)
            if entry is None:
                powers[f.var.ordinal] = [f.var, f.exponent]
            else:
                entry[1] += f.exponent
        elif isinstance(f, FuncApp):
            app, sign = symmetrize(f)
            if sign == 0:
                return None
            if sign < 0:
                coef = -coef
            if app.var.commuting:
                commuting.append(app)
            else:
                noncommuting.append(app)
        else:
            commuting.append(f)

    out = [SymbolPower(var, exp) for var, exp in powers.values() if exp != 0]
    out.extend(commuting)
    out.sort(key=_by_key)
    out.extend(noncommuting)
    return Term(coef, tuple(out))


def compare(a, b):
    """Order of the identity parts of two terms; coefficients are ignored."""
    if a.key < b.key:
        return -1
    if a.key > b.key:
        return 1
    return 0


def mul(a, b):
    """
    Product of two canonical terms.

    Both factor tuples are already sorted, so the commuting parts are merged
    in one pass and the noncommuting tails are concatenated left to right.
    """
    coef = a.coef * b.coef
    if coef == 0:
        return None

    left = [f for f in a.factors if f.key[0] != RANK_NONCOMMUTING]
    right = [f for f in b.factors if f.key[0] != RANK_NONCOMMUTING]
    tail = [f for f in a.factors if f.key[0] == RANK_NONCOMMUTING]
    tail += [f for f in b.factors if f.key[0] == RANK_NONCOMMUTING]

    out = []
    i = j = 0
    while i < len(left) and j < len(right):
        fa, fb = left[i], right[j]
        if (
            isinstance(fa, SymbolPower)
            and isinstance(fb, SymbolPower)
            and fa.var.ordinal == fb.var.ordinal
        ):
            exp = fa.exponent + fb.exponent
            if exp:
                out.append(SymbolPower(fa.var, exp))
            i += 1
            j += 1
        elif fa.key <= fb.key:
            out.append(fa)
            i += 1
        else:
            out.append(fb)
            j += 1
    out.extend(left[i:])
    out.extend(right[j:])
    out.extend(tail)
    return Term(coef, tuple(out))


# Expressions as canonical term tuples
# ------------------


def sort_terms(terms):
    """Canonical order, identical identity parts merged, zeros removed."""
    acc = {}
    for t in terms:
        if t is None:
            continue
        entry = acc.get(t.key)
        if entry is None:
            acc[t.key] = [t.coef, t]
        else:
            entry[0] += t.coef

    out = [t if c == t.coef else t.with_coef(c) for c, t in acc.values() if c != 0]
    out.sort(key=_by_key)
    return tuple(out)


def add(p, q):
    return sort_terms((*p, *q))


def negate(p):
    return tuple(t.with_coef(-t.coef) for t in p)


def scale(p, value):
    value = Fraction(value)
    if value == 0:
        return ()
    return tuple(t.with_coef(t.coef * value) for t in p)


def multiply(p, q):
    if not p or not q:
        return ()
    if len(p) == 1 and not p[0].factors:
        return scale(q, p[0].coef)
    if len(q) == 1 and not q[0].factors:
        return scale(p, q[0].coef)
    return sort_terms(mul(a, b) for a in p for b in q)


def power(p, n):
    """Nonnegative integer power by repeated multiplication (keeps intermediate sizes small)."""
    result = const(1)
    for _ in range(n):
        result = multiply(result, p)
        if not result:
            break
    return result


def is_number(p):
    return len(p) == 0 or (len(p) == 1 and not p[0].factors)


def number_value(p):
    if not p:
        return Fraction(0)
    return p[0].coef


# Output
# ------------------


def format_factor(f):
    if isinstance(f, SymbolPower):
        if f.exponent == 1:
            return f.var.name
        return f"{f.var.name}^{f.exponent}"
    if isinstance(f, Index):
        return f.var.name
    if not f.args:
        return f.var.name
    return f"{f.var.name}({','.join(format_terms(a, compact=True) for a in f.args)})"


def format_term(t, first=False, compact=False):
    """
    One term with its sign.

    The first term of an expression only shows a sign when negative; later
    terms show ' + ' or ' - ' (without the spaces when compact).
    """
    negative = t.coef < 0
    size = -t.coef if negative else t.coef
    body = "*".join(format_factor(f) for f in t.factors)

    if not body:
        text = str(size)
    elif size == 1:
        text = body
    else:
        text = f"{size}*{body}"

    if first:
        return f"-{text}" if negative else text
    if compact:
        return f"{'-' if negative else '+'}{text}"
    return f" {'-' if negative else '+'} {text}"


def format_terms(terms, compact=False):
    if not terms:
        return "0"
    parts = [format_term(terms[0], first=True)]
    parts.extend(format_term(t, compact=compact) for t in terms[1:])
    return "".join(parts)

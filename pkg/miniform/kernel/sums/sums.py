"""
Harmonic sums and harmonic polylogarithms.

Index vectors are tuples of ints. Sums use the integer notation (nonzero
entries, sign marks an alternating sum); polylogarithms use the 0/1/-1
notation. Products come back as {index vector: integer multiplicity}.
"""

from collections import Counter
from fractions import Fraction
from functools import lru_cache

from miniform.utils import ExecutionError, throw


def _sign(m):
    return 1 if m > 0 else -1


def weight(v):
    return sum(abs(m) for m in v)


def _check_sum_indices(v):
    if any(m == 0 for m in v):
        throw(f"Harmonic sum index 0 in integer notation: {list(v)}", exc=ExecutionError)


def _combine(*parts):
    total = Counter()
    for factor, counts in parts:
        for key, value in counts.items():
            total[key] += factor * value
    return {key: value for key, value in total.items() if value}


# Harmonic sums
# ------------------


def stuffle_product(a, b):
    """
    Quasi-shuffle product of two harmonic sums with the same argument.

        S(a1,A) * S(b1,B) = S(a1, A*(b1,B)) + S(b1, (a1,A)*B) - S(a1^b1, A*B)

    where a1^b1 has absolute value |a1|+|b1| and sign sgn(a1)*sgn(b1).
    """
    a, b = tuple(a), tuple(b)
    _check_sum_indices(a)
    _check_sum_indices(b)
    return dict(_stuffle(a, b))


@lru_cache(maxsize=None)
def _stuffle(a, b):
    if not a:
        return ((b, 1),)
    if not b:
        return ((a, 1),)
    a1, b1 = a[0], b[0]
    merged = _sign(a1) * _sign(b1) * (abs(a1) + abs(b1))
    result = _combine(
        (1, {(a1, *k): v for k, v in _stuffle(a[1:], b)}),
        (1, {(b1, *k): v for k, v in _stuffle(a, b[1:])}),
        (-1, {(merged, *k): v for k, v in _stuffle(a[1:], b[1:])}),
    )
    return tuple(sorted(result.items()))


def eval_sum(v, n):
    """
    Exact value of the nested sum S(v)(n).

    S(m)(n) = sum_{i=1..n} 1/i^m, S(-m)(n) = sum_{i=1..n} (-1)^i/i^m and
    deeper indices nest with the outer summation variable as argument.
    """
    v = tuple(v)
    _check_sum_indices(v)
    if n < 1:
        throw(f"Harmonic sums need a positive argument, got {n}", exc=ExecutionError)

    # values[i] = S(tail)(i) for the part of v handled so far
    values = [Fraction(1)] * (n + 1)
    for m in reversed(v):
        running = Fraction(0)
        nested = [Fraction(0)] * (n + 1)
        for i in range(1, n + 1):
            term = values[i] / Fraction(i) ** abs(m)
            running += -term if m < 0 and i % 2 else term
            nested[i] = running
        values = nested
    return values[n]


def to_binary(v):
    """Integer notation to 0/1/-1 notation: |m| > 1 becomes |m|-1 zeros then sgn(m)."""
    v = tuple(v)
    _check_sum_indices(v)
    out = []
    for m in v:
        out.extend([0] * (abs(m) - 1))
        out.append(_sign(m))
    return tuple(out)


def to_integer(v):
    """0/1/-1 notation to integer notation: each 0 adds one to the next nonzero index."""
    out = []
    zeros = 0
    for m in v:
        if m not in (0, 1, -1):
            throw(f"Index {m} is not 0, 1 or -1", exc=ExecutionError)
        if m == 0:
            zeros += 1
            continue
        out.append(m * (zeros + 1))
        zeros = 0
    if zeros:
        throw(f"Trailing zero in {list(v)} has no index to absorb it", exc=ExecutionError)
    return tuple(out)


def convert_notation(v):
    """Switch an index vector to the other notation; ±1-only vectors read the same in both."""
    v = tuple(v)
    if 0 in v:
        return to_integer(v)
    if any(abs(m) > 1 for m in v):
        return to_binary(v)
    return v


# Harmonic polylogarithms
# ------------------


def expand_indices(v):
    """H indices with |m| > 1 written out as |m|-1 zeros and sgn(m); 0 and ±1 stay."""
    out = []
    for m in v:
        if abs(m) > 1:
            out.extend([0] * (abs(m) - 1))
            m = _sign(m)
        out.append(m)
    return tuple(out)


def shuffle_product(a, b):
    """Sum over all interleavings of a and b that keep the order within each."""
    return dict(_shuffle(expand_indices(a), expand_indices(b)))


@lru_cache(maxsize=None)
def _shuffle(a, b):
    if not a:
        return ((b, 1),)
    if not b:
        return ((a, 1),)
    result = _combine(
        (1, {(a[0], *k): v for k, v in _shuffle(a[1:], b)}),
        (1, {(b[0], *k): v for k, v in _shuffle(a, b[1:])}),
    )
    return tuple(sorted(result.items()))


def eval_hpl_series(v, order):
    """
    Taylor coefficients c[0..order] of H(v;x) around x = 0.

    H(m,rest;x) is the integral from 0 to x of f(m;t) H(rest;t) with
    f(0) = 1/t, f(1) = 1/(1-t) and f(-1) = 1/(1+t).
    """
    v = tuple(v)
    if v and v[-1] == 0:
        throw(f"H{list(v)} ends in 0 and has no power series at x = 0", exc=ExecutionError)

    series = [Fraction(0)] * (order + 1)
    series[0] = Fraction(1)
    for m in reversed(v):
        if m == 0:
            integrand = series[1:] + [Fraction(0)]
        elif m in (1, -1):
            integrand = []
            running = Fraction(0)
            for c in series:
                running = running * m + c
                integrand.append(running)
        else:
            throw(f"Index {m} is not 0, 1 or -1", exc=ExecutionError)
        series = [Fraction(0)] + [integrand[k] / (k + 1) for k in range(order)]
    return series


def series_product(a, b):
    order = len(a) - 1
    return [sum(a[i] * b[k - i] for i in range(k + 1)) for k in range(order + 1)]

# Copyright (c) 2025, Miniform and Contributors
# See license.txt

import itertools
import math
import random
import textwrap
import unittest
from fractions import Fraction

from miniform.config import RunConfig
from miniform.kernel.engine.engine import Session
from miniform.kernel.sums.sums import (
    convert_notation,
    eval_hpl_series,
    eval_sum,
    expand_indices,
    series_product,
    shuffle_product,
    stuffle_product,
    to_binary,
    to_integer,
    weight,
)
from miniform.kernel.term_core import term_core as tc
from miniform.utils import ExecutionError

BASIS_PRODUCT = {
    (-3, 2, 3): -1,
    (-3, 3, 2): -1,
    (-3, 5): 1,
    (-1, 2, 2, 3): 2,
    (-1, 2, 3, 2): 1,
    (-1, 2, 5): -1,
    (-1, 4, 3): -1,
    (2, -4, 2): -1,
    (2, -1, 2, 3): 1,
    (2, -1, 3, 2): 1,
    (2, -1, 5): -1,
    (2, 3, -1, 2): 1,
}

HBASIS_PRODUCT = {
    (-1, 1, -1, 1, 0, 1): 1,
    (-1, 1, 0, 1, -1, 1): 1,
    (-1, 1, 0, 1, 1, -1): 2,
    (-1, 1, 1, -1, 0, 1): 2,
    (-1, 1, 1, 0, -1, 1): 2,
    (-1, 1, 1, 0, 1, -1): 2,
    (1, -1, 0, 1, -1, 1): 1,
    (1, -1, 0, 1, 1, -1): 2,
    (1, -1, 1, -1, 0, 1): 1,
    (1, -1, 1, 0, -1, 1): 1,
    (1, -1, 1, 0, 1, -1): 1,
    (1, 0, -1, 1, -1, 1): 1,
    (1, 0, -1, 1, 1, -1): 2,
    (1, 0, 1, -1, 1, -1): 1,
}


def sum_vectors(max_weight):
    """Every integer-notation index vector of weight 1..max_weight."""
    out = []
    for w in range(1, max_weight + 1):
        for parts in _compositions(w):
            for signs in itertools.product((1, -1), repeat=len(parts)):
                out.append(tuple(s * p for s, p in zip(signs, parts)))
    return out


def _compositions(w):
    if w == 0:
        yield ()
        return
    for first in range(1, w + 1):
        for rest in _compositions(w - first):
            yield (first, *rest)


def double_loop(a, b, n):
    """S(a,b)(n) by two explicit loops."""
    total = Fraction(0)
    for i in range(1, n + 1):
        inner = sum(Fraction((-1) ** j if b < 0 else 1, j ** abs(b)) for j in range(1, i + 1))
        total += Fraction((-1) ** i if a < 0 else 1, i ** abs(a)) * inner
    return total


class TestHarmonicSums(unittest.TestCase):
    def test_basis_product(self):
        self.assertEqual(stuffle_product((2, 3), (-1, 2)), BASIS_PRODUCT)

    def test_square_of_single_sum(self):
        product = stuffle_product((1,), (1,))
        self.assertEqual(product, {(1, 1): 2, (2,): -1})
        for n in range(1, 21):
            self.assertEqual(eval_sum((1,), n) ** 2, 2 * eval_sum((1, 1), n) - eval_sum((2,), n))

    def test_unit(self):
        self.assertEqual(stuffle_product((3, -1), ()), {(3, -1): 1})

    def test_values(self):
        self.assertEqual(eval_sum((1,), 3), Fraction(11, 6))
        self.assertEqual(eval_sum((-1,), 2), Fraction(-1, 2))
        for n in range(1, 11):
            self.assertEqual(eval_sum((2, 3), n), double_loop(2, 3, n))
            self.assertEqual(eval_sum((-2, 1), n), double_loop(-2, 1, n))

    def test_bad_arguments(self):
        with self.assertRaises(ExecutionError):
            eval_sum((1,), 0)
        with self.assertRaises(ExecutionError):
            stuffle_product((1, 0), (1,))

    def test_stuffle_numeric_identity(self):
        vectors = sum_vectors(2)
        for a, b in itertools.product(vectors, repeat=2):
            product = stuffle_product(a, b)
            for k in product:
                self.assertEqual(weight(k), weight(a) + weight(b))
            for n in (1, 2, 5, 12):
                expected = eval_sum(a, n) * eval_sum(b, n)
                self.assertEqual(sum(c * eval_sum(k, n) for k, c in product.items()), expected, (a, b, n))

    def test_stuffle_numeric_identity_weight_four(self):
        rng = random.Random(2)
        vectors = sum_vectors(4)
        for _ in range(200):
            a, b = rng.choice(vectors), rng.choice(vectors)
            if weight(a) + weight(b) > 6:
                continue
            n = rng.randint(1, 12)
            product = stuffle_product(a, b)
            value = sum(c * eval_sum(k, n) for k, c in product.items())
            self.assertEqual(value, eval_sum(a, n) * eval_sum(b, n))


class TestNotation(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(convert_notation((0, 1, 0, 0, -1, 1)), (2, -3, 1))
        self.assertEqual(convert_notation((2, -3, 1)), (0, 1, 0, 0, -1, 1))
        self.assertEqual(convert_notation((1,)), (1,))

    def test_trailing_zero(self):
        with self.assertRaises(ExecutionError):
            to_integer((1, 0))

    def test_round_trip(self):
        rng = random.Random(4)
        for _ in range(1000):
            v = tuple(rng.choice((1, -1)) * rng.randint(1, 4) for _ in range(rng.randint(1, 5)))
            binary = to_binary(v)
            self.assertEqual(len(binary), weight(v))
            self.assertEqual(to_integer(binary), v)
            self.assertEqual(convert_notation(convert_notation(v)), v)


class TestPolylogarithms(unittest.TestCase):
    def test_hbasis_product(self):
        product = shuffle_product((1, 0, 1), (-1, 1, -1))
        self.assertEqual(product, HBASIS_PRODUCT)
        self.assertEqual(sum(product.values()), math.comb(6, 3))

    def test_small_products(self):
        self.assertEqual(shuffle_product((0,), (0,)), {(0, 0): 2})
        self.assertEqual(shuffle_product((1,), (-1,)), {(1, -1): 1, (-1, 1): 1})

    def test_series(self):
        self.assertEqual(eval_hpl_series((1,), 4), [0, 1, Fraction(1, 2), Fraction(1, 3), Fraction(1, 4)])
        self.assertEqual(eval_hpl_series((-1,), 3), [0, 1, Fraction(-1, 2), Fraction(1, 3)])
        self.assertEqual(eval_hpl_series((0, 1), 4), [0] + [Fraction(1, k * k) for k in range(1, 5)])
        with self.assertRaises(ExecutionError):
            eval_hpl_series((1, 0), 3)

    def test_shuffle_series_identity(self):
        order = 25
        vectors = [v for w in range(1, 4) for v in itertools.product((0, 1, -1), repeat=w) if v[-1] != 0]
        rng = random.Random(6)
        for _ in range(200):
            a, b = rng.choice(vectors), rng.choice(vectors)
            expected = series_product(eval_hpl_series(a, order), eval_hpl_series(b, order))
            total = [Fraction(0)] * (order + 1)
            for k, c in shuffle_product(a, b).items():
                for n, value in enumerate(eval_hpl_series(k, order)):
                    total[n] += c * value
            self.assertEqual(total, expected, (a, b))

    def test_compressed_indices(self):
        self.assertEqual(expand_indices((2, 0, -3, 1)), (0, 1, 0, 0, 0, -1, 1))
        self.assertEqual(shuffle_product((2,), (1,)), {(0, 1, 1): 2, (1, 0, 1): 1})


BASIS_PROGRAM = """
#-
#include summer6.h
Off statistics;
.global
Local F = {product};
#call basis(S)
Print +f;
.end
"""

HBASIS_PROGRAM = """
#-
#include harmpol.h
Off statistics;
.global
Local F = {product};
#call hbasis(H,x)
repeat id H(R(?a,n?!{{1,0,-1}},?b),x?) = H(R(?a,0,n-sig_(n),?b),x);
.sort
Print +f;
.end
"""


def run_library(program, **product):
    out, err = [], []
    session = Session(RunConfig(), write=out.append, error=err.append)
    status = session.run(textwrap.dedent(program.format(**product)).lstrip("\n"), "sums.frm")
    return session, status, err


def index_vectors(terms, function):
    """{indices: coefficient} for an expression made of single function(R(...),arg) terms."""
    out = {}
    for term in terms:
        assert len(term.factors) == 1, term
        app = term.factors[0]
        assert app.var.name == function, term
        (inner,) = app.args[0]
        indices = tuple(int(tc.number_value(arg)) for arg in inner.factors[0].args)
        out[indices] = term.coef
    return out


def s_product(a, b):
    return f"S(R({','.join(map(str, a))}),N)*S(R({','.join(map(str, b))}),N)"


def h_product(a, b):
    return f"H(R({','.join(map(str, a))}),x)*H(R({','.join(map(str, b))}),x)"


class TestProcedureLibrary(unittest.TestCase):
    def test_basis_program(self):
        session, status, err = run_library(BASIS_PROGRAM, product="S(R(2,3),N)*S(R(-1,2),N)")
        self.assertEqual(status, 0, err)
        self.assertEqual(index_vectors(session.expression("F"), "S"), BASIS_PRODUCT)

    def test_basis_agrees_with_native_product(self):
        rng = random.Random(11)
        vectors = sum_vectors(3)
        for _ in range(25):
            a, b = rng.choice(vectors), rng.choice(vectors)
            session, status, err = run_library(BASIS_PROGRAM, product=s_product(a, b))
            self.assertEqual(status, 0, err)
            self.assertEqual(index_vectors(session.expression("F"), "S"), stuffle_product(a, b), (a, b))

    def test_basis_of_three_sums(self):
        product = "S(R(1),N)*S(R(1),N)*S(R(1),N)"
        session, status, err = run_library(BASIS_PROGRAM, product=product)
        self.assertEqual(status, 0, err)
        expected = {}
        for k, c in stuffle_product((1,), (1,)).items():
            for k2, c2 in stuffle_product(k, (1,)).items():
                expected[k2] = expected.get(k2, 0) + c * c2
        self.assertEqual(index_vectors(session.expression("F"), "S"), {k: v for k, v in expected.items() if v})

    def test_hbasis_program(self):
        session, status, err = run_library(HBASIS_PROGRAM, product="H(R(1,0,1),x)*H(R(-1,1,-1),x)")
        self.assertEqual(status, 0, err)
        terms = session.expression("F")
        self.assertEqual(len(terms), 14)
        self.assertEqual(index_vectors(terms, "H"), HBASIS_PRODUCT)

    def test_hbasis_compressed_indices(self):
        session, status, err = run_library(HBASIS_PROGRAM, product=h_product((2,), (-1, 1)))
        self.assertEqual(status, 0, err)
        self.assertEqual(index_vectors(session.expression("F"), "H"), shuffle_product((2,), (-1, 1)))

    def test_hbasis_agrees_with_native_product(self):
        rng = random.Random(12)
        vectors = [v for w in range(1, 3) for v in itertools.product((0, 1, -1), repeat=w)]
        for _ in range(25):
            a, b = rng.choice(vectors), rng.choice(vectors)
            session, status, err = run_library(HBASIS_PROGRAM, product=h_product(a, b))
            self.assertEqual(status, 0, err)
            self.assertEqual(index_vectors(session.expression("F"), "H"), shuffle_product(a, b), (a, b))

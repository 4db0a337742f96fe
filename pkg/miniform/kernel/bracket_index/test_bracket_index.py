# Copyright (c) 2025, Miniform and Contributors
# See license.txt

import math
import random
import unittest

from miniform.kernel.bracket_index.bracket_index import BracketIndex, LookupCost, bracket_terms, linear_lookup
from miniform.kernel.compiler.compiler import SymbolTable
from miniform.kernel.compiler.syntax import parse_expression
from miniform.kernel.pattern.pattern import Context, evaluate
from miniform.kernel.term_core import term_core as tc


class TestBracketIndex(unittest.TestCase):
    def setUp(self):
        self.table = SymbolTable()
        for n in range(1, 6):
            self.table.declare(f"x{n}", "symbol")
        self.x1 = self.table.lookup("x1")

    def expr(self, text):
        return evaluate(parse_expression(text, self.table), Context())

    def key(self, text):
        return self.expr(text)[0]

    def test_binomial_brackets(self):
        terms = self.expr("(x1+x2)^2")
        index = BracketIndex.build(terms, [self.x1], cap=16)
        self.assertEqual(len(index), 3)
        self.assertEqual(tc.format_terms(index.lookup(self.key("x1"))), "2*x2")
        self.assertEqual(tc.format_terms(index.lookup(self.key("1"))), "x2^2")
        self.assertEqual(tc.format_terms(index.lookup(self.key("x1^2"))), "1")
        self.assertEqual(index.lookup(self.key("x1^3")), ())

    def test_power_brackets(self):
        terms = self.expr("(x1+x2+x3+x4+x5)^6")
        index = BracketIndex.build(terms, [self.x1], cap=2**20)
        self.assertEqual(len(index), 7)
        self.assertEqual(tc.format_terms(index.lookup(self.key("x1^6"))), "1")
        self.assertEqual(index.lookup(self.key("x1^7")), ())

    def test_union_reproduces_expression(self):
        terms = self.expr("(x1+x2+x3)^4*(x1-x4)")
        brackets = bracket_terms(terms, [self.x1, self.table.lookup("x4")])
        rebuilt = tc.sort_terms(t for b in brackets for t in b.terms())
        self.assertEqual(rebuilt, terms)

    def test_capped_index_skips_brackets(self):
        terms = self.expr("(x1+x2)^4")
        index = BracketIndex.build(terms, [self.x1], cap=2)
        self.assertEqual(index.stride, 2)
        self.assertEqual(len(index), 3)
        for position in range(5):
            self.assertTrue(index.reachable(position))
        brackets = bracket_terms(terms, [self.x1])
        for n in range(5):
            self.assertEqual(index.lookup(self.key(f"x1^{n}")), linear_lookup(brackets, self.key(f"x1^{n}")))

    def test_entries_point_into_stored_terms(self):
        terms = self.expr("(x1+x2+x3)^3")
        index = BracketIndex.build(terms, [self.x1], cap=16)
        self.assertEqual(len(index.terms), len(terms))
        covered = 0
        for key, position, extent in index.entries:
            self.assertEqual(position, covered)
            self.assertTrue(all(outside.key == key for outside, _ in index.terms[position : position + extent]))
            covered += extent
        self.assertEqual(covered, len(terms))

    def test_skipping_cost_is_bounded(self):
        terms = self.expr("(x1+x2+x3)^6")
        brackets = bracket_terms(terms, [self.x1])
        index = BracketIndex(brackets, cap=2)
        self.assertEqual(index.stride, 4)
        extent = max(len(b.contents) for b in brackets)
        bound = math.ceil(math.log2(len(brackets) / index.stride)) + 2
        for n in range(8):
            index.comparisons = index.reads = 0
            key = self.key(f"x1^{n}")
            self.assertEqual(index.lookup(key), linear_lookup(brackets, key))
            self.assertLessEqual(index.comparisons, bound)
            self.assertLess(index.reads, index.stride * extent)

    def test_index_is_cheaper_than_scanning(self):
        terms = self.expr("(x1+x2+x3)^6")
        brackets = bracket_terms(terms, [self.x1])
        for cap in (2, 2**20):
            index = BracketIndex(brackets, cap)
            scan = LookupCost()
            for n in range(7):
                key = self.key(f"x1^{n}")
                self.assertEqual(index.lookup(key), linear_lookup(brackets, key, scan))
            self.assertGreater(scan.reads, 0)
            self.assertLess(index.comparisons + index.reads, scan.comparisons + scan.reads)

    def test_lookup_matches_linear_scan(self):
        rng = random.Random(3)
        terms = self.expr("(x1+x2+x3)^5*(1+x4)^2")
        symbols = [self.x1, self.table.lookup("x4")]
        brackets = bracket_terms(terms, symbols)
        for _ in range(200):
            cap = rng.choice((1, 2, 3, 5, 100))
            index = BracketIndex.build(terms, symbols, cap)
            key = self.key(f"x1^{rng.randint(0, 6)}*x4^{rng.randint(0, 3)}")
            self.assertEqual(index.lookup(key), linear_lookup(brackets, key))

    def test_comparison_count_is_logarithmic(self):
        terms = self.expr("(x1+x2)^30")
        index = BracketIndex.build(terms, [self.x1], cap=2**20)
        bound = math.ceil(math.log2(len(index))) + 2
        for n in range(31):
            index.comparisons = 0
            index.lookup(self.key(f"x1^{n}"))
            self.assertLessEqual(index.comparisons, bound)

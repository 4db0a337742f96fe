from dataclasses import dataclass
from fractions import Fraction

from miniform.kernel.term_core import term_core as tc
from miniform.utils import get_logger

logger = get_logger("bracket_index")


@dataclass(frozen=True)
class Bracket:
    """The terms of an expression that share one outside factor."""

    key: tc.Term
    contents: tuple

    def terms(self):
        return tuple(tc.mul(self.key, t) for t in self.contents)


def split_term(term, symbols):
    """(outside, inside) of a term with respect to the bracket symbols."""
    wanted = {v.ordinal for v in symbols}
    outside = [f for f in term.factors if isinstance(f, tc.SymbolPower) and f.var.ordinal in wanted]
    inside = [f for f in term.factors if not (isinstance(f, tc.SymbolPower) and f.var.ordinal in wanted)]
    return tc.Term(Fraction(1), tuple(outside)), tc.Term(term.coef, tuple(inside))


def bracket_terms(terms, symbols):
    """Group terms by outside factor; brackets come out in canonical key order."""
    groups = {}
    for term in terms:
        outside, inside = split_term(term, symbols)
        entry = groups.get(outside.key)
        if entry is None:
            groups[outside.key] = (outside, [inside])
        else:
            entry[1].append(inside)
    return [Bracket(outside, tc.sort_terms(inside)) for _, (outside, inside) in sorted(groups.items())]


@dataclass
class LookupCost:
    """Work done by bracket lookups: key comparisons and stored terms read."""

    comparisons: int = 0
    reads: int = 0


def linear_lookup(brackets, key, cost=None):
    """Contents of the bracket with outside factor `key` by scanning from the front."""
    for bracket in brackets:
        if cost is not None:
            cost.comparisons += 1
            cost.reads += len(bracket.contents)
        if bracket.key.key == key.key:
            return bracket.contents
    return ()


class BracketIndex:
    """
    Index into a bracketed expression.

    The expression is stored once as a tuple of (outside, inside) terms in
    bracket order. Each entry is (key, position, extent): the canonical key
    of a bracket, the position of its first term in that tuple and its
    number of terms. Lookups bisect the entries.

    Once there are more than `cap` brackets only every `stride`-th one is
    indexed (the stride doubles until the count fits) and a lookup that
    lands between entries reads the stored terms forward from the end of
    the nearest entry in front, up to the next entry.
    `comparisons` and `reads` count the work done by lookups.
    """

    def __init__(self, brackets, cap):
        self.terms = tuple((bracket.key, inside) for bracket in brackets for inside in bracket.contents)
        self.count = len(brackets)
        self.cap = max(1, cap)
        self.stride = 1
        while self.count // self.stride > self.cap:
            self.stride *= 2

        self.entries = []
        position = 0
        for n, bracket in enumerate(brackets):
            if n % self.stride == 0:
                self.entries.append((bracket.key.key, position, len(bracket.contents)))
            position += len(bracket.contents)
        self.comparisons = 0
        self.reads = 0
        if self.stride > 1:
            logger.info("bracket index full: indexing every %d-th of %d brackets", self.stride, self.count)

    @classmethod
    def build(cls, terms, symbols, cap):
        return cls(bracket_terms(terms, symbols), cap)

    def __len__(self):
        return len(self.entries)

    def _contents(self, start, stop):
        return tuple(inside for _, inside in self.terms[start:stop])

    def lookup(self, key):
        """Contents of the bracket with outside factor `key`; zero when absent."""
        wanted = key.key
        lo, hi = 0, len(self.entries)
        while lo < hi:
            mid = (lo + hi) // 2
            self.comparisons += 1
            if self.entries[mid][0] <= wanted:
                lo = mid + 1
            else:
                hi = mid
        if lo == 0:
            return ()

        found, position, extent = self.entries[lo - 1]
        self.comparisons += 1
        if found == wanted:
            return self._contents(position, position + extent)

        limit = self.entries[lo][1] if lo < len(self.entries) else len(self.terms)
        start = None
        for n in range(position + extent, limit):
            self.reads += 1
            outside = self.terms[n][0].key
            if start is None:
                if outside == wanted:
                    start = n
                elif outside > wanted:
                    return ()
            elif outside != wanted:
                return self._contents(start, n)
        return () if start is None else self._contents(start, limit)

    def reachable(self, ordinal):
        """True when a lookup of the `ordinal`-th bracket finds it by index or forward scan."""
        entry = ordinal - ordinal % self.stride
        return entry < self.count and ordinal - entry < self.stride

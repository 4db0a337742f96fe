import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial

import click

from miniform.config import RunConfig
from miniform.kernel.bracket_index.bracket_index import BracketIndex, LookupCost, bracket_terms, linear_lookup
from miniform.kernel.compiler.compiler import ModuleCompiler, SymbolTable
from miniform.kernel.compiler.syntax import CondCall, Compare, ExprRef, Logic, Not
from miniform.kernel.engine.sorter import Sorter
from miniform.kernel.pattern import pattern
from miniform.kernel.pattern.pattern import Context, evaluate
from miniform.kernel.preprocessor.preprocessor import DollarPreset, PPEnv, PPHost, PPStatement, Preprocessor
from miniform.kernel.term_core import term_core as tc
from miniform.kernel.topology.topology import replace_loop
from miniform.utils import ExecutionError, MiniformError, PreprocessorError, get_logger, throw

logger = get_logger("engine")

LINE_WIDTH = 78

_COMPARE = {
    "==": lambda a, b: a == b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
}


@dataclass
class Expression:
    """
    A named expression between two modules.

    `brackets` and `index` describe the bracketing made by the last sort
    of this expression (None when it was not bracketed).
    `lookups` counts the work of bracket lookups made without an index.
    """

    name: str
    terms: tuple = ()
    status: str = "active"
    scope: str = "local"
    bracket_symbols: tuple = ()
    brackets: list = None
    index: BracketIndex = None
    lookups: LookupCost = field(default_factory=LookupCost)


@dataclass
class _Plan:
    """What the module-level statements of one module ask for."""

    bracket: object = None
    prints: list = field(default_factory=list)
    collect: object = None
    skipped: set = field(default_factory=set)
    dropped: set = field(default_factory=set)
    merge: dict = field(default_factory=dict)


@dataclass
class _State:
    """Per-chunk execution state: the $-variables the statements read and write."""

    dollars: dict
    expression: str = None


class Session(PPHost):
    """
    Runs a program: preprocessor, compiler and engine in lockstep.

    The preprocessor is pulled one statement at a time. Statements are
    compiled as they arrive and each module is executed at its terminator,
    so that the rest of the program is expanded with the $-variable values
    the module produced.

    Output goes through `write` (one call per line group) and diagnostics
    through `error`; both default to click.echo.
    """

    def __init__(self, config=None, write=None, error=None):
        self.config = config or RunConfig()
        self.write = write or click.echo
        self.error = error or partial(click.echo, err=True)
        self.table = SymbolTable()
        self.compiler = ModuleCompiler(self.table)
        self.expressions = {}
        self.dollars = {}
        self.tables = {}
        self.flags = {"statistics": self.config.statistics, "names": False}
        self.failed = False
        self.modules = 0
        self._patterns = {}
        self._log = None

    # output

    def out(self, text):
        self.write(text)
        if self._log is not None:
            self._log.write(text + "\n")

    def _open_log(self):
        if not self.config.log or not self.config.program:
            return
        path = os.path.splitext(self.config.program)[0] + ".log"
        try:
            self._log = open(path, "w", encoding="utf-8")
        except OSError as e:
            throw(f"Cannot open log file {path}: {e.strerror}")

    def _close_log(self):
        if self._log is not None:
            self._log.close()
            self._log = None

    # PPHost

    def dollar_text(self, name):
        if name not in self.dollars:
            throw(f"Undefined $-variable ${name}", exc=PreprocessorError)
        return tc.format_terms(self.dollars[name], compact=True)

    def dollar_step(self, name, delta):
        if name not in self.dollars:
            throw(f"Undefined $-variable ${name}", exc=PreprocessorError)
        self.dollars[name] = tc.add(self.dollars[name], tc.const(delta))

    def expression_text(self, name):
        expr = self.expressions.get(name)
        if expr is None:
            throw(f"Unknown expression {name}", exc=PreprocessorError)
        return tc.format_terms(expr.terms)

    def emit(self, text):
        self.out(text[:-1] if text.endswith("\n") else text)

    def message(self, text):
        self.error(f"~~~{text}")

    # driving

    def run(self, text, file="program.frm"):
        """Run program text; returns the process exit status."""
        env = PPEnv(definitions=dict(self.config.defines), include_path=self.config.search_path())
        preprocessor = Preprocessor(env, host=self)
        self._open_log()
        try:
            for item in preprocessor.run(text, file):
                if isinstance(item, DollarPreset):
                    self._preset(item)
                elif isinstance(item, PPStatement):
                    self.compiler.feed(item)
                    if self.compiler.errors and self.compiler.errors[-1].in_loop:
                        for diagnostic in self.compiler.errors:
                            self._report(diagnostic)
                        self.error("++++Errors in Loop")
                        return 1
                else:
                    self.end_module(self.compiler.finish(item))
        except MiniformError as e:
            self.error(str(e))
            if e.listing:
                logger.info("failing statement:\n%s", e.listing)
            return 1
        finally:
            self._close_log()

        if self.failed:
            self.error("++++Errors")
            return 1
        return 0

    def run_file(self, path):
        try:
            with open(path, encoding="utf-8") as handle:
                text = handle.read()
        except OSError as e:
            self.error(f"Cannot open file {path}: {e.strerror}")
            return 1
        return self.run(text, path)

    def _preset(self, item):
        try:
            tree = self.compiler.parse_value(item.text)
            self.dollars[item.name] = self._check_dollar(item.name, evaluate(tree, self._context(None, self.dollars)))
        except MiniformError as e:
            raise e.located(item.file, item.line)

    def _report(self, diagnostic):
        self.error(diagnostic.text)
        if diagnostic.listing:
            logger.info("rejected statement:\n%s", diagnostic.listing)

    def end_module(self, module):
        self.modules += 1
        for diagnostic in module.errors:
            self._report(diagnostic)
        if module.errors:
            self.failed = True
        if self.failed:
            logger.debug("module %d compiled only", self.modules)
            return
        logger.debug("module %d ends with .%s at %s line %d", self.modules, module.kind, module.file, module.line)
        self.run_module(module)

    # modules

    def run_module(self, module):
        plan = _Plan()
        for action in module.actions:
            try:
                self._action(action, plan)
            except MiniformError as e:
                raise e.located(action.file, action.line, action.listing())

        for definition in module.definitions:
            try:
                self._define(definition)
            except MiniformError as e:
                raise e.located(definition.file, definition.line, definition.listing())

        results = {}
        for name, expr in self.expressions.items():
            if name in plan.dropped or name in plan.skipped or expr.status == "hidden":
                continue
            results[name] = self._process(expr, module.statements, plan)

        bracket = plan.bracket
        for name, (terms, stats) in results.items():
            expr = self.expressions[name]
            expr.terms = terms
            if bracket is None:
                expr.bracket_symbols, expr.brackets, expr.index = (), None, None
            else:
                symbols = tuple(bracket.operands["symbols"])
                expr.bracket_symbols = symbols
                expr.brackets = bracket_terms(terms, symbols)
                expr.index = None
                if bracket.operands["indexed"]:
                    expr.index = BracketIndex(expr.brackets, self.config.bracket_index_cap)
            if self.flags["statistics"]:
                self.out("")
                self.out(stats.block(name))

        for name in plan.dropped:
            self.expressions.pop(name, None)

        for ir in plan.prints:
            names = ir.operands["names"] or [n for n, e in self.expressions.items() if e.status == "active"]
            for name in names:
                expr = self.expressions.get(name)
                if expr is None:
                    continue
                self.out("")
                self.out(print_expression(expr, ir.operands["flags"]))

        if self.flags["names"]:
            self.out(self.table.listing())

    def _action(self, ir, plan):
        op, operands = ir.opcode, ir.operands
        if op == "OnOff":
            for flag in operands["flags"]:
                self.flags[flag] = operands["value"]
        elif op == "ModuleOption":
            for name in operands["dollars"]:
                plan.merge[name] = operands["mode"]
        elif op == "Fill":
            self._fill(ir)
        elif op in ("Hide", "Unhide", "Skip", "Drop"):
            for name in operands["names"]:
                expr = self.expressions.get(name)
                if expr is None:
                    throw(f"Expression {name} does not exist", exc=ExecutionError)
                if op == "Hide":
                    expr.status = "hidden"
                elif op == "Unhide":
                    expr.status = "active"
                elif op == "Skip":
                    plan.skipped.add(name)
                else:
                    plan.dropped.add(name)
        elif op == "Collect":
            plan.collect = operands["fun"]
        elif op == "Bracket":
            plan.bracket = ir
        elif op == "Print":
            plan.prints.append(ir)

    def _fill(self, ir):
        var, key = ir.operands["table"], ir.operands["key"]
        entries = self.tables.setdefault(var.name, {})
        ctx = self._context(None, self.dollars)
        for offset, tree in enumerate(ir.operands["values"]):
            entries[key[:-1] + (key[-1] + offset,)] = evaluate(tree, ctx)

    def _define(self, ir):
        name = ir.operands["name"]
        terms = evaluate(ir.operands["expr"], self._context(None, self.dollars))
        scope = "global" if ir.operands["global"] else "local"
        expr = self.expressions.get(name)
        if expr is None:
            self.expressions[name] = Expression(name, terms, scope=scope)
        else:
            expr.terms, expr.status, expr.scope = terms, "active", scope
            expr.bracket_symbols, expr.brackets, expr.index = (), None, None

    def _process(self, expr, statements, plan):
        sorter = Sorter(self.config, self.table, expr.name)
        terms = expr.terms
        if plan.collect is not None:
            terms = collect(expr, plan.collect, self.config.max_term_size)

        chunks = self._chunks(terms, statements, plan)
        if chunks is None:
            self._run_terms(terms, statements, _State(self.dollars, expr.name), sorter)
            return sorter.finish(), sorter.stats

        start = dict(self.dollars)
        finals = []
        for chunk in chunks:
            state = _State(dict(start), expr.name)
            self._run_terms(chunk, statements, state, sorter)
            finals.append(state.dollars)
        for name, mode in plan.merge.items():
            self.dollars.update(_merge_dollar(name, mode, start, finals))
        logger.debug("%s ran in %d chunks", expr.name, len(chunks))
        return sorter.finish(), sorter.stats

    def _run_terms(self, terms, statements, state, sorter):
        for term in terms:
            for result, _ in self._flow(statements, 0, term, state):
                sorter.add(_checked(result, self.config.max_term_size))

    def _chunks(self, terms, statements, plan):
        """
        The input of one expression cut into `threads` chunks, or None.

        Only cut when every $-variable assigned in the module has a merge
        mode; each chunk then works on its own copy of the $-variables.
        """
        threads = self.config.threads
        if threads < 2 or len(terms) < 2:
            return None
        if not set(_assigned_dollars(statements)) <= set(plan.merge):
            return None
        size = -(-len(terms) // threads)
        return [terms[start : start + size] for start in range(0, len(terms), size)]

    # the term pipeline

    def _flow(self, statements, i, term, state, changed=False):
        """
        Everything `term` becomes after statements[i:], depth first.

        Yields (term, changed) pairs, where changed tells whether any
        statement on the way altered the term.
        """
        if i == len(statements):
            yield term, changed
            return
        for result, hit in self._execute(statements[i], term, state):
            yield from self._flow(statements, i + 1, result, state, changed or hit)

    def _execute(self, ir, term, state):
        try:
            yield from self._dispatch(ir, term, state)
        except MiniformError as e:
            raise e.located(ir.file, ir.line, ir.listing())

    def _dispatch(self, ir, term, state):
        op, operands = ir.opcode, ir.operands
        ctx = self._context(term, state.dollars)

        if op == "Id":
            result = pattern.apply_id(operands["pattern"], operands["rhs"], term, ctx)
            if result is None:
                yield term, False
                return
            for t in result:
                yield t, True

        elif op == "Repeat":
            yield from self._repeat(ir, term, state)

        elif op == "If":
            for condition, body in operands["branches"]:
                if self.eval_condition(condition, term, state):
                    yield from self._flow(body, 0, term, state)
                    return
            if operands["otherwise"] is not None:
                yield from self._flow(operands["otherwise"], 0, term, state)
                return
            yield term, False

        elif op == "Multiply":
            for t in tc.multiply((term,), evaluate(operands["expr"], ctx)):
                yield t, True

        elif op == "SplitArg":
            result = split_arg(term, operands["funs"], operands["marker"], ctx)
            if result is term:
                yield term, False
            elif result is not None:
                yield result, True

        elif op == "ReplaceLoop":
            result = replace_loop(term, operands["fun"], operands["arguments"], operands["loopsize"], operands["outfun"])
            if result is None:
                yield term, False
                return
            for t in result:
                yield t, True

        elif op == "Term":
            yield from self._term_environment(ir, term, state)

        elif op == "DollarAssign":
            name = operands["name"]
            state.dollars[name] = self._check_dollar(name, evaluate(operands["expr"], ctx))
            yield term, False

        elif op == "PrintTerm":
            self.out(self._render(operands["format"], operands["args"], term, state))
            yield term, False

        else:
            throw(f"Statement {op} cannot be executed per term", exc=ExecutionError)

    def _repeat(self, ir, term, state):
        """
        Apply the body until it no longer changes a term.

        Each term the body produces runs through the repeat again before the
        next one is looked at; the generators are kept on a stack.
        """
        limit = self.config.repeat_limit
        rounds = 0
        stack = [self._flow(ir.body, 0, term, state)]
        while stack:
            found = next(stack[-1], None)
            if found is None:
                stack.pop()
                continue
            result, hit = found
            if hit:
                rounds += 1
                if rounds > limit:
                    throw(f"Repeat limit of {limit} passes exceeded", exc=ExecutionError)
                stack.append(self._flow(ir.body, 0, result, state))
            else:
                yield result, len(stack) > 1

    def _term_environment(self, ir, term, state):
        private = (term,)
        for segment in ir.operands["segments"]:
            produced = []
            for t in private:
                produced.extend(result for result, _ in self._flow(segment, 0, t, state))
            private = tc.sort_terms(produced)
        if private == (term,):
            yield term, False
            return
        for t in private:
            yield t, True

    # conditions

    def eval_condition(self, node, term, state):
        if isinstance(node, Logic):
            left = self.eval_condition(node.left, term, state)
            if node.op == "&&":
                return left and self.eval_condition(node.right, term, state)
            return left or self.eval_condition(node.right, term, state)
        if isinstance(node, Not):
            return not self.eval_condition(node.operand, term, state)
        if isinstance(node, Compare):
            left = self._condition_value(node.left, term, state)
            right = self._condition_value(node.right, term, state)
            if node.op not in ("==", "=", "!=") and not (isinstance(left, Fraction) and isinstance(right, Fraction)):
                throw("Only numbers can be ordered in a condition", exc=ExecutionError)
            return _COMPARE[node.op](left, right)
        return self._condition_value(node, term, state) != 0

    def _condition_value(self, node, term, state):
        ctx = self._context(term, state.dollars)
        if isinstance(node, CondCall):
            if node.name == "count":
                return pattern.count(term, node.args, ctx)
            if node.name == "coefficient":
                return term.coef
            if node.name == "expression":
                names = [arg.name for arg in node.args if isinstance(arg, ExprRef)]
                if len(names) != len(node.args):
                    throw("expression() takes expression names", exc=ExecutionError)
                return Fraction(int(state.expression in names))
            if node.name == "match":
                compiled = self._patterns.get(id(node))
                if compiled is None:
                    compiled = self._patterns[id(node)] = pattern.compile_pattern(node.args[0], self.table)
                return Fraction(int(pattern.match(compiled, term) is not None))
        value = evaluate(node, ctx)
        if tc.is_number(value):
            return tc.number_value(value)
        return value

    # helpers

    def _context(self, term, dollars):
        return Context(
            dollars=dollars,
            tables=self.tables,
            expressions=self._expression_terms,
            bracket=self._bracket_contents,
            term=term,
            max_term_size=self.config.max_term_size,
        )

    def _expression_terms(self, name):
        expr = self.expressions.get(name)
        if expr is None:
            throw(f"Expression {name} does not exist", exc=ExecutionError)
        return expr.terms

    def _bracket_contents(self, name, key):
        """F[key]: the contents of one bracket of F as left by its last sort."""
        expr = self.expressions.get(name)
        if expr is None:
            throw(f"Expression {name} does not exist", exc=ExecutionError)
        if len(key) != 1 or key[0].coef != 1:
            throw(f"Bracket key of {name} must be a single term", exc=ExecutionError)
        (key_term,) = key
        if expr.index is not None:
            return expr.index.lookup(key_term)
        if expr.brackets is not None:
            return linear_lookup(expr.brackets, key_term, expr.lookups)
        symbols = [f.var for f in key_term.factors if isinstance(f, tc.SymbolPower)]
        return linear_lookup(bracket_terms(expr.terms, symbols), key_term)

    def _check_dollar(self, name, value):
        size = sum(t.size for t in value)
        if size > self.config.max_term_size:
            throw(f"Value of ${name} exceeds MaxTermSize {self.config.max_term_size}", exc=ExecutionError)
        return value

    def _render(self, fmt, args, term, state):
        out = []
        args = list(args)
        i = 0
        while i < len(fmt):
            if fmt[i] != "%" or i + 1 >= len(fmt):
                out.append(fmt[i])
                i += 1
                continue
            directive = fmt[i + 1]
            if directive == "t":
                out.append(tc.format_term(term))
            elif directive == "$":
                if not args:
                    throw("Not enough arguments for %$", exc=ExecutionError)
                name = args.pop(0)
                if name not in state.dollars:
                    throw(f"Undefined $-variable ${name}", exc=ExecutionError)
                out.append(tc.format_terms(state.dollars[name], compact=True))
            else:
                out.append("%")
            i += 2
        return "".join(out)

    def expression(self, name):
        """The terms of an expression (for callers that drive a Session)."""
        return self._expression_terms(name)


# Termwise operations
# ------------------


def _checked(term, limit):
    if term.size > limit:
        throw(f"Term too complex: exceeds MaxTermSize {limit}", exc=ExecutionError)
    return term


def _contains(term, marker):
    for m in marker.factors:
        if isinstance(m, tc.SymbolPower):
            if not any(
                isinstance(f, tc.SymbolPower)
                and f.var is m.var
                and f.exponent * m.exponent > 0
                and abs(f.exponent) >= abs(m.exponent)
                for f in term.factors
            ):
                return False
        elif m not in term.factors:
            return False
    return True


def _split(arg, marker):
    if len(arg) < 2:
        return [arg]
    if marker is None:
        return [(t,) for t in arg]
    without = tuple(t for t in arg if not _contains(t, marker))
    with_marker = tuple(t for t in arg if _contains(t, marker))
    if not without or not with_marker:
        return [arg]
    return [without, with_marker]


def split_arg(term, funs, marker, ctx):
    """
    SplitArg on one term.

    Without a marker every multiterm argument of the selected functions
    becomes one argument per term. With a marker each multiterm argument
    becomes (terms without the marker, terms with it); a single term, or
    an argument whose terms all fall on one side, stays as it is. Returns
    the same term object when nothing was split, None when the term
    vanished.
    """
    marker_term = None
    if marker is not None:
        value = evaluate(marker, ctx)
        if len(value) != 1:
            throw("SplitArg marker must be a single term", exc=ExecutionError)
        marker_term = value[0]

    changed = False
    coef = term.coef
    factors = []
    for f in term.factors:
        selected = isinstance(f, tc.FuncApp) and (
            any(f.var is v for v in funs) if funs else f.var.kind == "function"
        )
        if not selected:
            factors.append(f)
            continue
        args = [piece for arg in f.args for piece in _split(arg, marker_term)]
        if len(args) == len(f.args):
            factors.append(f)
            continue
        changed = True
        app, sign = tc.make_function(f.var, args, ctx.max_term_size)
        if sign == 0:
            return None
        coef *= sign
        factors.append(app)

    if not changed:
        return term
    return tc.normalize(coef, factors)


def collect(expr, fun, max_size=None):
    """Each bracket of the previous sort becomes key * fun(contents)."""
    out = []
    for bracket in bracket_terms(expr.terms, expr.bracket_symbols):
        app, sign = tc.make_function(fun, [bracket.contents], max_size)
        out.append(tc.normalize(sign, [*bracket.key.factors, app]))
    return tc.sort_terms(out)


def _assigned_dollars(statements):
    for ir in statements:
        if ir.opcode == "DollarAssign":
            yield ir.operands["name"]
        yield from _assigned_dollars(ir.body)
        for _, body in ir.operands.get("branches", ()):
            yield from _assigned_dollars(body)
        yield from _assigned_dollars(ir.operands.get("otherwise") or ())
        for segment in ir.operands.get("segments", ()):
            yield from _assigned_dollars(segment)


def _merge_dollar(name, mode, start, finals):
    """The value of $name after merging the per-chunk values."""
    initial = start.get(name)
    values = [f[name] for f in finals if name in f]
    if mode == "local" or not values:
        return {} if initial is None else {name: initial}
    if mode == "sum":
        base = initial or ()
        total = base
        for value in values:
            total = tc.add(total, tc.add(value, tc.negate(base)))
        return {name: total}
    for value in values:
        if not tc.is_number(value):
            throw(f"${name} must be a number to take its {mode}", exc=ExecutionError)
    pick = max if mode == "maximum" else min
    return {name: tc.const(pick(tc.number_value(v) for v in values))}


# Output
# ------------------


def _wrap(pieces, indent="      "):
    lines = []
    line = indent
    for piece in pieces:
        if line.strip() and len(line) + len(piece) > LINE_WIDTH:
            lines.append(line)
            line = indent
        line += piece
    lines.append(line)
    return lines


def print_expression(expr, flags=()):
    """
    Text of `Print F;`.

    Bracketed expressions print one bracket per line as
    `+ key * ( contents )`; `+s` prints one term per line.
    """
    name, terms = expr.name, expr.terms
    if not terms:
        return f"   {name} = 0;"

    if expr.brackets is not None and expr.bracket_symbols:
        lines = [f"   {name} ="]
        for bracket in expr.brackets:
            contents = tc.format_terms(bracket.contents)
            if bracket.key.factors:
                lines.append(f"       + {tc.format_term(bracket.key, first=True)} * ( {contents} )")
            else:
                lines.append(f"       + ( {contents} )")
        lines[-1] += ";"
        return "\n".join(lines)

    if "+s" in flags:
        lines = [f"   {name} ="]
        lines.extend(f"      {tc.format_term(t)}" for t in terms)
        lines[-1] += ";"
        return "\n".join(lines)

    body = tc.format_terms(terms)
    single = f"   {name} = {body};"
    if len(single) <= LINE_WIDTH:
        return single
    pieces = [tc.format_term(terms[0], first=True)]
    pieces.extend(tc.format_term(t) for t in terms[1:])
    lines = [f"   {name} =", *_wrap(pieces)]
    lines[-1] += ";"
    return "\n".join(lines)

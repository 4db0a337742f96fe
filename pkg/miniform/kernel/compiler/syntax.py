from dataclasses import dataclass
from fractions import Fraction

from miniform import hooks
from miniform.utils import CompileError, throw

MAX_EXPONENT = 2**31 - 1
CONDITION_FUNCTIONS = ("count", "match", "expression", "coefficient")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int
    restrict: str = None


# Expression tree
# ------------------


@dataclass(frozen=True)
class Num:
    value: Fraction


@dataclass(frozen=True)
class Ref:
    """A declared symbol or index."""

    var: object


@dataclass(frozen=True)
class ExprRef:
    name: str


@dataclass(frozen=True)
class Wild:
    """
    `x?` with its optional restriction.

    `restrict` is a tuple of nodes for `{...}`, a builtin set name such as
    "number_", or a declared set name; `exclude` marks the `!{...}` form.
    """

    var: object
    restrict: object = None
    exclude: bool = False

    @property
    def name(self):
        return self.var.name


@dataclass(frozen=True)
class ArgField:
    name: str


@dataclass(frozen=True)
class Dollar:
    name: str


@dataclass(frozen=True)
class Call:
    var: object
    args: tuple


@dataclass(frozen=True)
class Builtin:
    name: str
    args: tuple


@dataclass(frozen=True)
class BracketRef:
    name: str
    key: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class CondCall:
    name: str
    args: tuple


@dataclass(frozen=True)
class Compare:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Logic:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    operand: object


def walk(node):
    """Every node of a tree, parents before children."""
    yield node
    if isinstance(node, (Call, Builtin, CondCall)):
        for arg in node.args:
            yield from walk(arg)
    elif isinstance(node, (BinOp, Compare, Logic)):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, (Neg, Not)):
        yield from walk(node.operand)
    elif isinstance(node, BracketRef):
        yield from walk(node.key)
    elif isinstance(node, Wild) and isinstance(node.restrict, tuple):
        for element in node.restrict:
            yield from walk(element)


# Lexer
# ------------------

_TWO_CHAR = ("==", "!=", "<=", ">=", "&&", "||")
_ONE_CHAR = "+-*/^(),{}!=<>[]:"


def _name_end(text, pos):
    while pos < len(text) and (text[pos].isalnum() or text[pos] == "_"):
        pos += 1
    return pos


def tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch.isspace():
            pos += 1
            continue

        if ch.isdigit():
            end = pos
            while end < n and text[end].isdigit():
                end += 1
            tokens.append(Token("num", text[pos:end], pos))
            pos = end
            continue

        if ch.isalpha():
            end = _name_end(text, pos)
            name = text[pos:end]
            if end < n and text[end] == "?":
                rest = _name_end(text, end + 1)
                restrict = text[end + 1 : rest] if rest > end + 1 else None
                tokens.append(Token("wild", name, pos, restrict))
                pos = rest
            else:
                tokens.append(Token("name", name, pos))
                pos = end
            continue

        if ch == "$" or (ch == "?" and pos + 1 < n and text[pos + 1].isalpha()):
            end = _name_end(text, pos + 1)
            if end == pos + 1:
                throw(f"Illegal character: {ch}", exc=CompileError)
            tokens.append(Token("dollar" if ch == "$" else "argfield", text[pos + 1 : end], pos))
            pos = end
            continue

        if ch == "[" and not (tokens and tokens[-1].kind == "name" and tokens[-1].pos + len(tokens[-1].text) == pos):
            depth = 0
            end = pos
            while end < n:
                if text[end] == "[":
                    depth += 1
                elif text[end] == "]":
                    depth -= 1
                    if depth == 0:
                        break
                end += 1
            if end >= n:
                throw("Unbalanced [ in name", exc=CompileError)
            tokens.append(Token("name", text[pos : end + 1], pos))
            pos = end + 1
            continue

        if ch == '"':
            end = text.find('"', pos + 1)
            if end < 0:
                throw("Unterminated string", exc=CompileError)
            tokens.append(Token("string", text[pos + 1 : end], pos))
            pos = end + 1
            continue

        if text[pos : pos + 2] in _TWO_CHAR:
            tokens.append(Token("op", text[pos : pos + 2], pos))
            pos += 2
            continue
        if ch in _ONE_CHAR:
            tokens.append(Token("op", ch, pos))
            pos += 1
            continue

        throw(f"Illegal character: {ch}", exc=CompileError)
    return tokens


# Parser
# ------------------


class Parser:
    """
    Recursive descent over the algebra of one statement.

    Grammar (loosest first):
        expr    := term (('+'|'-') term)*
        term    := unary (('*'|'/') unary)*
        unary   := '-' unary | '+' unary | power
        power   := atom ('^' ('-')? power)?
    `^` is right-associative and binds tighter than unary minus.

    `patterns` allows wildcards; `conditions` allows comparisons, logic
    and the condition functions count, match, expression, coefficient.
    """

    def __init__(self, text, table, patterns=False, conditions=False):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.table = table
        self.patterns = patterns
        self.conditions = conditions

    # token access

    def peek(self, offset=0):
        index = self.pos + offset
        return self.tokens[index] if index < len(self.tokens) else None

    def at(self, text, kind="op"):
        token = self.peek()
        return token is not None and token.kind == kind and token.text == text

    def take(self):
        token = self.peek()
        self.pos += 1
        return token

    def expect(self, text):
        token = self.take()
        if token is None or token.kind != "op" or token.text != text:
            found = "end of statement" if token is None else token.text
            throw(f"Expected {text} but found {found}", exc=CompileError)
        return token

    def done(self):
        return self.pos >= len(self.tokens)

    def finish(self):
        if not self.done():
            token = self.peek()
            throw(f"Unexpected {token.text} in {self.text.strip()}", exc=CompileError)

    # entry points

    def parse(self):
        node = self.condition() if self.conditions else self.expr()
        self.finish()
        return node

    def parse_list(self):
        items = [self.expr()]
        while self.at(","):
            self.take()
            items.append(self.expr())
        self.finish()
        return items

    # conditions

    def condition(self):
        node = self.conjunction()
        while self.at("||"):
            self.take()
            node = Logic("||", node, self.conjunction())
        return node

    def conjunction(self):
        node = self.negation()
        while self.at("&&"):
            self.take()
            node = Logic("&&", node, self.negation())
        return node

    def negation(self):
        if self.at("!"):
            self.take()
            return Not(self.negation())
        return self.comparison()

    def comparison(self):
        left = self.expr()
        token = self.peek()
        if token is not None and token.kind == "op" and token.text in ("==", "!=", "<", ">", "<=", ">="):
            self.take()
            return Compare(token.text, left, self.expr())
        return left

    # algebra

    def expr(self):
        node = self.term()
        while self.at("+") or self.at("-"):
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.at("*") or self.at("/"):
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.at("-"):
            self.take()
            return Neg(self.unary())
        if self.at("+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if not self.at("^"):
            return base
        self.take()
        if self.at("-"):
            self.take()
            exponent = Neg(self.power())
        else:
            exponent = self.power()
        value = exponent.operand if isinstance(exponent, Neg) else exponent
        if isinstance(value, Num) and abs(value.value) > MAX_EXPONENT:
            throw(f"Exponent too large: {value.value}", exc=CompileError)
        return BinOp("^", base, exponent)

    def atom(self):
        token = self.take()
        if token is None:
            throw(f"Unexpected end of statement: {self.text.strip()}", exc=CompileError)

        if token.kind == "num":
            return Num(Fraction(int(token.text)))
        if token.kind == "dollar":
            return Dollar(token.text)
        if token.kind == "argfield":
            return ArgField(token.text)
        if token.kind == "wild":
            return self.wildcard(token)
        if token.kind == "name":
            return self.named(token)
        if token.kind == "op" and token.text == "(":
            node = self.condition() if self.conditions else self.expr()
            self.expect(")")
            return node

        following = self.peek()
        suffix = following.text if following is not None and following.kind in ("num", "name") else ""
        throw(f"Illegal position for operator: {token.text}{suffix}", exc=CompileError)

    def wildcard(self, token):
        if not self.patterns:
            throw(f"Wildcard {token.text}? not allowed here", exc=CompileError)
        var = self.table.lookup(token.text)
        restrict = token.restrict
        exclude = False
        if restrict is not None and restrict not in hooks.builtin_sets:
            if self.table.get_set(restrict) is None:
                throw(f"Undeclared set {restrict}", exc=CompileError)
        if restrict is None and self.at("!") and self.peek(1) is not None and self.peek(1).text == "{":
            self.take()
            exclude = True
        if restrict is None and self.at("{"):
            self.take()
            elements = []
            while not self.at("}"):
                elements.append(self.expr())
                if self.at(","):
                    self.take()
                elif not self.at("}"):
                    throw("Expected , or } in set", exc=CompileError)
            self.take()
            restrict = tuple(elements)
        elif exclude:
            throw("Expected { after !", exc=CompileError)
        return Wild(var, restrict, exclude)

    def arguments(self):
        self.expect("(")
        args = []
        if self.at(")"):
            self.take()
            return tuple(args)
        while True:
            args.append(self.expr())
            if self.at(","):
                self.take()
                continue
            self.expect(")")
            return tuple(args)

    def named(self, token):
        name = token.text

        if self.at("[") and self.peek().pos == token.pos + len(name):
            var = self.table.find(name)
            if var is None:
                throw(f"Undeclared variable {name}", exc=CompileError)
            if var.kind != "expression":
                throw(f"Bracket lookup on {name}, which is not an expression", exc=CompileError)
            self.take()
            key = self.expr()
            self.expect("]")
            return BracketRef(name, key)

        if self.conditions and name in CONDITION_FUNCTIONS and self.table.find(name) is None:
            return self.condition_call(name)

        if name in hooks.builtin_functions:
            return Builtin(name, self.arguments())

        var = self.table.lookup(name)
        if var.kind in ("symbol", "index"):
            return Ref(var)
        if var.kind == "expression":
            return ExprRef(name)
        if var.kind in ("function", "tensor", "table"):
            if self.at("("):
                return Call(var, self.arguments())
            return Call(var, ())
        throw(f"{name} cannot be used in an expression", exc=CompileError)

    def condition_call(self, name):
        if name == "coefficient":
            if self.at("("):
                self.expect("(")
                self.expect(")")
            return CondCall(name, ())
        if name == "match":
            self.expect("(")
            saved = self.patterns
            self.patterns = True
            try:
                pattern = self.expr()
            finally:
                self.patterns = saved
            self.expect(")")
            return CondCall(name, (pattern,))
        return CondCall(name, self.arguments())


def parse_expression(text, table, patterns=False):
    return Parser(text, table, patterns=patterns).parse()


def parse_condition(text, table):
    return Parser(text, table, conditions=True).parse()

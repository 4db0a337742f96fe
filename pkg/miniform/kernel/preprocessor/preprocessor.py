import os
import re
from dataclasses import dataclass, field

import click

from miniform.utils import PreprocessorError, get_logger, throw

logger = get_logger("preprocessor")

MAX_INTERPOLATION_DEPTH = 100
TERMINATORS = ("sort", "end", "global", "store")

_QUOTED = re.compile(r"`([^`']*)'")
_DOTS = re.compile(r"([,+*])\.\.\.([,+*])")
_ITEM_TAIL = re.compile(r"[\w?$]+$")
_ITEM_HEAD = re.compile(r"^[\w?$]+")
_DIRECTIVE = re.compile(r"#\s*([A-Za-z$+\-]\w*|[+\-])\s*(.*)$", re.S)


@dataclass(frozen=True)
class Line:
    file: str
    number: int
    text: str


@dataclass(frozen=True)
class PPStatement:
    text: str
    file: str
    line: int
    in_loop: bool = False


@dataclass(frozen=True)
class ModuleEnd:
    kind: str
    label: str
    file: str
    line: int


@dataclass(frozen=True)
class DollarPreset:
    """A `#$name = value;` line, evaluated by the session the moment it is reached."""

    name: str
    text: str
    file: str
    line: int
    in_loop: bool = False


@dataclass
class Procedure:
    name: str
    params: list
    lines: list


@dataclass
class PPEnv:
    definitions: dict = field(default_factory=dict)
    procedures: dict = field(default_factory=dict)
    include_path: list = field(default_factory=list)


class PPHost:
    """
    What the preprocessor needs from the running session.

    The default host has no $-variables and no expressions; the engine's
    Session replaces it.
    """

    def dollar_text(self, name):
        throw(f"Undefined $-variable ${name}", exc=PreprocessorError)

    def dollar_step(self, name, delta):
        throw(f"Undefined $-variable ${name}", exc=PreprocessorError)

    def expression_text(self, name):
        throw(f"Unknown expression {name}", exc=PreprocessorError)

    def emit(self, text):
        click.echo(text, nl=False)

    def message(self, text):
        click.echo(f"~~~{text}", err=True)


@dataclass
class _Cond:
    parent: bool
    taken: bool
    active: bool


def source_lines(text, file):
    return [Line(file, n, raw.rstrip("\r")) for n, raw in enumerate(text.split("\n"), start=1)]


class Preprocessor:
    """
    Turns program text into a lazy stream of statements and module ends.

    Core idea:
    - the stream is a generator, so a directive is only expanded when the
      consumer asks for the next statement; the session executes each module
      before pulling further, which is what makes `$max' see runtime values
    - `#do` and `#procedure` bodies are kept as raw lines and re-read on
      every iteration or call
    - statements are split on `;` outside strings and carry the file and line
      on which they start
    """

    def __init__(self, env=None, host=None):
        self.env = env or PPEnv()
        self.host = host or PPHost()
        self.loop_depth = 0
        self.finished = False
        self._buffer = []
        self._buffer_at = None

    # Entry points

    def run(self, text, file="program.frm"):
        yield from self._process(source_lines(text, file))
        if not self.finished:
            if self._buffer:
                throw("Unterminated statement", exc=PreprocessorError, file=self._buffer_at.file, line=self._buffer_at.number)
            throw("Program ends without .end", exc=PreprocessorError, file=file, line=text.count("\n") + 1)

    # Line processing

    def _process(self, lines):
        conds = []
        it = iter(lines)
        for line in it:
            if self.finished:
                return
            active = not conds or conds[-1].active
            stripped = line.text.strip()

            if stripped.startswith("#"):
                match = _DIRECTIVE.match(stripped)
                if not match:
                    throw(f"Illegal preprocessor instruction: {stripped}", exc=PreprocessorError, file=line.file, line=line.number)
                name, rest = match.group(1), match.group(2).strip()
                lowered = name.lower()

                if lowered in ("if", "ifdef", "ifndef", "else", "elseif", "endif"):
                    self._conditional(lowered, rest, conds, active, line)
                    continue
                if not active:
                    continue
                yield from self._directive(name, rest, line, it)
                continue

            if not active:
                continue
            if not stripped or line.text.startswith("*"):
                continue
            yield from self._text(line)

        if conds:
            throw("#if without #endif", exc=PreprocessorError, file=lines[-1].file, line=lines[-1].number)

    def _conditional(self, name, rest, conds, active, line):
        if name in ("if", "ifdef", "ifndef"):
            value = False
            if active:
                value = self._test(name, rest, line)
            conds.append(_Cond(parent=active, taken=value, active=active and value))
            return

        if not conds:
            throw(f"#{name} without #if", exc=PreprocessorError, file=line.file, line=line.number)
        frame = conds[-1]
        if name == "endif":
            conds.pop()
        elif name == "else":
            frame.active = frame.parent and not frame.taken
            frame.taken = True
        else:
            if frame.taken or not frame.parent:
                frame.active = False
            else:
                frame.active = self._test("if", rest, line)
                frame.taken = frame.active

    def _test(self, name, rest, line):
        try:
            if name == "if":
                return pp_condition(self.interpolate(rest)) != 0
            arg = rest.strip()
            if arg.startswith("`") and arg.endswith("'"):
                arg = self.interpolate(arg[1:-1])
            else:
                arg = self.interpolate(arg)
            defined = arg.strip() in self.env.definitions
            return defined if name == "ifdef" else not defined
        except PreprocessorError as e:
            raise e.located(line.file, line.number)

    def _directive(self, name, rest, line, it):
        lowered = name.lower()
        at = {"file": line.file, "line": line.number}

        if lowered in ("-", "+"):
            return
        if name.startswith("$"):
            text = self.interpolate_at(rest, line)
            _, eq, value = text.partition("=")
            if not eq or not name[1:]:
                throw("Illegal #$ assignment", exc=PreprocessorError, **at)
            value = value.strip().rstrip(";").strip()
            yield DollarPreset(name[1:], value, line.file, line.number, self.loop_depth > 0)
            return

        if lowered in ("define", "redefine"):
            text = self.interpolate_at(rest, line)
            parts = text.split(None, 1)
            if not parts:
                throw(f"#{lowered} needs a name", exc=PreprocessorError, **at)
            value = parts[1].strip() if len(parts) > 1 else ""
            if len(value) >= 2 and value[0] == '"' and value[-1] == '"':
                value = value[1:-1]
            self.env.definitions[parts[0]] = value
        elif lowered == "undefine":
            self.env.definitions.pop(self.interpolate_at(rest, line).strip(), None)
        elif lowered == "do":
            body = self._collect(it, "do", "enddo", line)
            yield from self._do(rest, body, line)
        elif lowered == "enddo":
            throw("#enddo without #do", exc=PreprocessorError, **at)
        elif lowered == "procedure":
            body = self._collect(it, "procedure", "endprocedure", line)
            name, params = _signature(rest)
            self.env.procedures[name] = Procedure(name, params, body)
            logger.debug("procedure %s defined in %s", name, line.file)
        elif lowered == "endprocedure":
            throw("#endprocedure without #procedure", exc=PreprocessorError, **at)
        elif lowered == "call":
            yield from self._call(self.interpolate_at(rest, line), line)
        elif lowered == "include":
            path = self._find(_unquote(self.interpolate_at(rest, line)), line)
            logger.debug("include %s", path)
            yield from self._process(source_lines(self._read(path, line), path))
        elif lowered == "write":
            self._write(self.interpolate_at(rest, line), line)
        elif lowered == "message":
            self.host.message(self.interpolate_at(rest, line))
        else:
            throw(f"Unknown preprocessor instruction #{name}", exc=PreprocessorError, **at)

    def _collect(self, it, opener, closer, start):
        body = []
        depth = 1
        for line in it:
            match = _DIRECTIVE.match(line.text.strip())
            if match:
                word = match.group(1).lower()
                if word == opener:
                    depth += 1
                elif word == closer:
                    depth -= 1
                    if depth == 0:
                        return body
            body.append(line)
        throw(f"#{opener} without #{closer}", exc=PreprocessorError, file=start.file, line=start.number)

    def _do(self, rest, body, line):
        text = self.interpolate_at(rest, line)
        var, eq, spec = text.partition("=")
        var = var.strip()
        if not eq or not var:
            throw("Illegal #do instruction", exc=PreprocessorError, file=line.file, line=line.number)

        spec = spec.strip()
        try:
            if spec.startswith("{") and spec.endswith("}"):
                values = [v.strip() for v in split_top(spec[1:-1], ",|")]
            else:
                bounds = [pp_arith(b) for b in split_top(spec, ",")]
                if len(bounds) not in (2, 3):
                    throw("#do needs two or three bounds", exc=PreprocessorError)
                step = bounds[2] if len(bounds) == 3 else 1
                if step == 0:
                    throw("#do step cannot be zero", exc=PreprocessorError)
                stop = bounds[1] + (1 if step > 0 else -1)
                values = [str(v) for v in range(bounds[0], stop, step)]
        except PreprocessorError as e:
            raise e.located(line.file, line.number)

        saved = self.env.definitions.get(var)
        self.loop_depth += 1
        try:
            for value in values:
                self.env.definitions[var] = value
                yield from self._process(body)
                if self.finished:
                    return
        finally:
            self.loop_depth -= 1
            if saved is None:
                self.env.definitions.pop(var, None)
            else:
                self.env.definitions[var] = saved

    def _call(self, text, line):
        name, args = _signature(text)
        procedure = self.env.procedures.get(name)
        if procedure is None:
            path = self._find(f"{name}.prc", line)
            logger.debug("loading procedure file %s", path)
            yield from self._process(source_lines(self._read(path, line), path))
            procedure = self.env.procedures.get(name)
            if procedure is None:
                throw(f"File {path} does not define procedure {name}", exc=PreprocessorError, file=line.file, line=line.number)

        if len(args) != len(procedure.params):
            throw(
                f"Procedure {name} needs {len(procedure.params)} arguments, got {len(args)}",
                exc=PreprocessorError,
                file=line.file,
                line=line.number,
            )

        saved = {p: self.env.definitions.get(p) for p in procedure.params}
        self.env.definitions.update(zip(procedure.params, args))
        try:
            yield from self._process(procedure.lines)
        finally:
            for param, value in saved.items():
                if value is None:
                    self.env.definitions.pop(param, None)
                else:
                    self.env.definitions[param] = value

    def _write(self, text, line):
        target = None
        text = text.strip()
        if text.startswith("<"):
            end = text.find(">")
            if end < 0:
                throw("Unterminated file name in #write", exc=PreprocessorError, file=line.file, line=line.number)
            target = text[1:end].strip()
            text = text[end + 1 :].strip().lstrip(",").strip()

        parts = [p.strip() for p in split_top(text, ",")]
        if len(parts[0]) < 2 or parts[0][0] != '"' or parts[0][-1] != '"':
            throw("#write needs a format string", exc=PreprocessorError, file=line.file, line=line.number)
        try:
            output = self.format(parts[0][1:-1], parts[1:]) + "\n"
        except PreprocessorError as e:
            raise e.located(line.file, line.number)

        if target is None:
            self.host.emit(output)
            return
        try:
            with open(target, "a", encoding="utf-8") as handle:
                handle.write(output)
        except OSError as e:
            throw(f"Cannot write to file {target}: {e.strerror}", exc=PreprocessorError, file=line.file, line=line.number)

    def format(self, fmt, args):
        """printf-like rendering for #write: %s, %$, %E, %% and \\n."""
        out = []
        args = list(args)
        i = 0
        while i < len(fmt):
            ch = fmt[i]
            if ch == "\\" and i + 1 < len(fmt) and fmt[i + 1] == "n":
                out.append("\n")
                i += 2
                continue
            if ch != "%" or i + 1 >= len(fmt):
                out.append(ch)
                i += 1
                continue
            directive = fmt[i + 1]
            if directive == "%":
                out.append("%")
            else:
                if directive not in "s$E":
                    throw(f"Unknown format directive %{directive}", exc=PreprocessorError)
                if not args:
                    throw(f"Not enough arguments for %{directive}", exc=PreprocessorError)
                arg = args.pop(0)
                if directive == "s":
                    out.append(_unquote(arg))
                elif directive == "$":
                    out.append(self.host.dollar_text(arg.lstrip("$")))
                else:
                    out.append(self.host.expression_text(arg))
            i += 2
        return "".join(out)

    # Statement assembly

    def _text(self, line):
        text = self.interpolate_at(line.text, line)
        stripped = text.strip()

        if not self._buffer and stripped.startswith(".") and stripped[1:2].isalpha():
            yield self._terminator(stripped, line)
            return

        pieces, rest, closed = _split_statements(text)
        for piece in pieces:
            self._append(piece, line)
            statement = self._statement()
            if statement.text:
                yield statement
        if rest.strip() and not (closed and rest.lstrip().startswith("*")):
            self._append(rest, line)

    def _append(self, text, line):
        if not self._buffer:
            self._buffer_at = line
        self._buffer.append(text)

    def _statement(self):
        text = "\n".join(self._buffer).strip()
        at = self._buffer_at
        self._buffer = []
        self._buffer_at = None
        if not text:
            return PPStatement("", at.file, at.number, self.loop_depth > 0)
        try:
            text = expand_dots(text)
        except PreprocessorError as e:
            raise e.located(at.file, at.number)
        return PPStatement(text, at.file, at.number, self.loop_depth > 0)

    def _terminator(self, text, line):
        word, _, label = text[1:].partition(":")
        kind = word.strip().rstrip(";").lower()
        if kind not in TERMINATORS:
            throw(f"Illegal module terminator .{word}", exc=PreprocessorError, file=line.file, line=line.number)
        if kind == "end":
            self.finished = True
        return ModuleEnd(kind, label.strip().rstrip(";").strip(), line.file, line.number)

    # Interpolation

    def interpolate_at(self, text, line):
        try:
            return self.interpolate(text)
        except PreprocessorError as e:
            raise e.located(line.file, line.number)

    def interpolate(self, text):
        """Replace backquote-quote pairs, innermost first."""
        limit = MAX_INTERPOLATION_DEPTH + text.count("`")
        steps = 0
        while True:
            match = _QUOTED.search(text)
            if not match:
                return text
            steps += 1
            if steps > limit:
                throw("Preprocessor variables nested too deeply", exc=PreprocessorError)
            text = text[: match.start()] + self._value(match.group(1)) + text[match.end() :]

    def _value(self, name):
        delta = 0
        if name.endswith("++"):
            name, delta = name[:-2], 1
        elif name.endswith("--"):
            name, delta = name[:-2], -1

        if name.startswith("$"):
            value = self.host.dollar_text(name[1:])
            if delta:
                self.host.dollar_step(name[1:], delta)
            return value

        if name not in self.env.definitions:
            throw(f"Undefined preprocessor variable {name}", exc=PreprocessorError)
        value = self.env.definitions[name]
        if delta:
            try:
                self.env.definitions[name] = str(int(value) + delta)
            except ValueError:
                throw(f"Preprocessor variable {name} is not a number: {value}", exc=PreprocessorError)
        return value

    # Files

    def _find(self, name, line):
        candidates = []
        here = os.path.dirname(line.file) if line else ""
        if os.path.isabs(name):
            candidates.append(name)
        else:
            candidates.append(os.path.join(here, name) if here else name)
            candidates.extend(os.path.join(d, name) for d in self.env.include_path)
        for path in candidates:
            if os.path.isfile(path):
                return path
        throw(f"Cannot find file {name}", exc=PreprocessorError, file=line.file, line=line.number)

    def _read(self, path, line):
        try:
            with open(path, encoding="utf-8") as handle:
                return handle.read()
        except OSError as e:
            throw(f"Cannot open file {path}: {e.strerror}", exc=PreprocessorError, file=line.file, line=line.number)


# Text helpers
# ------------------


def _unquote(text):
    text = text.strip()
    if len(text) >= 2 and (text[0], text[-1]) in (('"', '"'), ("<", ">")):
        return text[1:-1].strip()
    return text


def _signature(text):
    """`name(a,b)` -> ("name", ["a", "b"]); a bare name has no arguments."""
    text = text.strip().rstrip(";").strip()
    if "(" not in text:
        return text, []
    name, _, args = text.partition("(")
    args = args.rstrip()
    if not args.endswith(")"):
        throw(f"Unbalanced parentheses in {text}", exc=PreprocessorError)
    args = args[:-1]
    if not args.strip():
        return name.strip(), []
    return name.strip(), [a.strip() for a in split_top(args, ",")]


def split_top(text, separators):
    parts = []
    depth = 0
    quoted = False
    current = []
    for ch in text:
        if ch == '"':
            quoted = not quoted
        elif not quoted and ch in "([{":
            depth += 1
        elif not quoted and ch in ")]}":
            depth -= 1
        if ch in separators and depth == 0 and not quoted:
            parts.append("".join(current))
            current = []
            continue
        current.append(ch)
    parts.append("".join(current))
    return parts


def _split_statements(text):
    """
    Cut a line at `;` outside strings.

    Returns (finished pieces, trailing text, whether any `;` was seen).
    """
    pieces = []
    quoted = False
    start = 0
    for i, ch in enumerate(text):
        if ch == '"':
            quoted = not quoted
        elif ch == ";" and not quoted:
            pieces.append(text[start:i])
            start = i + 1
    return pieces, text[start:], bool(pieces)


# Triple dots
# ------------------


def expand_sequence(begin, end, separator=","):
    """
    Items from `begin` to `end`, which differ only in embedded integers.

    Every varying number moves one step per item towards its end value, so
    all varying numbers need the same distance. Numbers that do not differ
    stay fixed. Bracketed running patterns `<...>` lose their brackets.
    """
    if begin.startswith("<") and begin.endswith(">") and end.startswith("<") and end.endswith(">"):
        begin, end = begin[1:-1], end[1:-1]

    left = re.split(r"(\d+)", begin)
    right = re.split(r"(\d+)", end)
    if len(left) != len(right) or any(a != b for a, b in zip(left[::2], right[::2])):
        throw(f"Illegal use of ...: {begin} and {end} do not match", exc=PreprocessorError)

    starts = [int(v) for v in left[1::2]]
    diffs = [int(b) - a for a, b in zip(starts, (int(v) for v in right[1::2]))]
    distances = {abs(d) for d in diffs if d}
    if len(distances) > 1:
        throw(f"Illegal use of ...: unequal differences between {begin} and {end}", exc=PreprocessorError)
    distance = distances.pop() if distances else 0

    items = []
    for step in range(distance + 1):
        parts = list(left)
        for k, (a, d) in enumerate(zip(starts, diffs)):
            parts[2 * k + 1] = str(a + step * (1 if d > 0 else -1 if d < 0 else 0))
        items.append("".join(parts))
    return items


def expand_dots(text):
    while True:
        match = None
        for candidate in _DOTS.finditer(text):
            if candidate.group(1) == candidate.group(2):
                match = candidate
                break
        if match is None:
            return text

        sep = match.group(1)
        head, tail = text[: match.start()], text[match.end() :]

        if head.endswith(">"):
            b_start = head.rfind("<")
        else:
            found = _ITEM_TAIL.search(head)
            b_start = found.start() if found else -1
        if tail.startswith("<"):
            e_end = tail.find(">") + 1
        else:
            found = _ITEM_HEAD.search(tail)
            e_end = found.end() if found else 0
        if b_start < 0 or e_end <= 0:
            throw("Illegal use of ...", exc=PreprocessorError)

        items = expand_sequence(head[b_start:], tail[:e_end], sep)
        text = head[:b_start] + sep.join(items) + tail[e_end:]


# Preprocessor arithmetic
# ------------------

_ARITH_TOKEN = re.compile(r"\s*(\d+|&&|\|\||==|!=|<=|>=|[-+*/()<>!]|\"[^\"]*\"|[^\s()<>=!&|+*/-]+)")


def _tokens(text):
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        match = _ARITH_TOKEN.match(text, pos)
        if not match:
            throw(f"Illegal character in preprocessor expression: {text[pos:]}", exc=PreprocessorError)
        tokens.append(match.group(1))
        pos = match.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return tokens


class _Arith:
    def __init__(self, text, allow_compare):
        self.tokens = _tokens(text)
        self.pos = 0
        self.allow_compare = allow_compare
        self.text = text

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        token = self.peek()
        self.pos += 1
        return token

    def parse(self):
        if not self.tokens:
            throw("Empty preprocessor expression", exc=PreprocessorError)
        value = self.logic() if self.allow_compare else self.sum()
        if self.peek() is not None:
            throw(f"Illegal preprocessor expression: {self.text}", exc=PreprocessorError)
        if not isinstance(value, int):
            throw(f"Not a number in preprocessor expression: {value}", exc=PreprocessorError)
        return value

    def logic(self):
        value = self.conjunction()
        while self.peek() == "||":
            self.take()
            right = self.conjunction()
            value = int(bool(value) or bool(right))
        return value

    def conjunction(self):
        value = self.comparison()
        while self.peek() == "&&":
            self.take()
            right = self.comparison()
            value = int(bool(value) and bool(right))
        return value

    def comparison(self):
        left = self.sum()
        op = self.peek()
        if op not in ("==", "!=", "<", ">", "<=", ">="):
            return left
        self.take()
        right = self.sum()
        if isinstance(left, int) and isinstance(right, int):
            return int(
                {
                    "==": left == right,
                    "!=": left != right,
                    "<": left < right,
                    ">": left > right,
                    "<=": left <= right,
                    ">=": left >= right,
                }[op]
            )
        if op not in ("==", "!="):
            throw(f"Cannot order strings {left} and {right}", exc=PreprocessorError)
        return int((str(left) == str(right)) == (op == "=="))

    def sum(self):
        value = self.product()
        while self.peek() in ("+", "-"):
            op = self.take()
            right = self.product()
            value = _number(value) + _number(right) if op == "+" else _number(value) - _number(right)
        return value

    def product(self):
        value = self.unary()
        while self.peek() in ("*", "/"):
            op = self.take()
            right = _number(self.unary())
            value = _number(value)
            if op == "*":
                value = value * right
            else:
                if right == 0:
                    throw("Division by zero in preprocessor expression", exc=PreprocessorError)
                quotient = abs(value) // abs(right)
                value = quotient if (value < 0) == (right < 0) else -quotient
        return value

    def unary(self):
        token = self.peek()
        if token == "-":
            self.take()
            return -_number(self.unary())
        if token == "+":
            self.take()
            return _number(self.unary())
        if token == "!" and self.allow_compare:
            self.take()
            return int(not _number(self.unary()))
        return self.atom()

    def atom(self):
        token = self.take()
        if token is None:
            throw(f"Incomplete preprocessor expression: {self.text}", exc=PreprocessorError)
        if token == "(":
            value = self.logic() if self.allow_compare else self.sum()
            if self.take() != ")":
                throw(f"Unbalanced parentheses in {self.text}", exc=PreprocessorError)
            return value
        if token.isdigit():
            return int(token)
        if not self.allow_compare:
            throw(f"Not a number in preprocessor expression: {token}", exc=PreprocessorError)
        if token.startswith('"'):
            token = token[1:-1]
            try:
                return int(token)
            except ValueError:
                return token
        return token


def _number(value):
    if not isinstance(value, int):
        throw(f"Not a number in preprocessor expression: {value}", exc=PreprocessorError)
    return value


def pp_arith(text):
    """Integer value of +,-,*,/ arithmetic; division truncates toward zero."""
    return _Arith(text, allow_compare=False).parse()


def pp_condition(text):
    """Value of an #if condition: arithmetic plus comparisons, !, && and ||."""
    return _Arith(text, allow_compare=True).parse()

import re
from dataclasses import dataclass, field

from miniform import hooks
from miniform.kernel.compiler import syntax
from miniform.kernel.compiler.syntax import Call, Neg, Num, Parser, parse_condition, parse_expression
from miniform.kernel.pattern import pattern
from miniform.kernel.preprocessor.preprocessor import split_top
from miniform.kernel.term_core.term_core import Variable
from miniform.utils import CompileError, get_logger, throw

logger = get_logger("compiler")

_NAME = re.compile(r"^([A-Za-z][A-Za-z0-9_]*|\[[^\]]*\])$")
_KEYWORD = re.compile(r"^\s*([A-Za-z]+)(\+)?")

SYMMETRY_OPTIONS = {
    "symmetric": "symmetric",
    "antisymmetric": "antisymmetric",
    "cyclesymmetric": "cyclesymmetric",
    "cyclic": "cyclesymmetric",
    "rcyclesymmetric": "rcyclesymmetric",
    "reversecyclesymmetric": "rcyclesymmetric",
}

# opcodes executed once per module rather than once per term
MODULE_LEVEL = ("Print", "Bracket", "Hide", "Unhide", "Skip", "Drop", "Fill", "ModuleOption", "OnOff", "Collect")
ON_OFF_FLAGS = ("statistics", "names")


class SymbolTable:
    """
    Every declared name with its class and properties.

    Ordinals are handed out in declaration order from one counter shared by
    all classes, so recompiling a program yields the same canonical order.
    There is no capacity limit.
    """

    def __init__(self):
        self._names = {}
        self._sets = {}
        self._ordinal = 0
        self.table_bounds = {}
        self.declare(hooks.levi_civita, "tensor", symmetry="antisymmetric")

    def declare(self, name, kind, commuting=True, symmetry="none", dimension=0):
        if not _NAME.match(name):
            throw(f"Illegal name {name}", exc=CompileError)
        existing = self._names.get(name) or (name if name in self._sets else None)
        if existing is not None:
            if isinstance(existing, Variable) and existing.kind == kind:
                return existing
            other = existing.kind if isinstance(existing, Variable) else "set"
            throw(f"{name} has already been declared as {other}", exc=CompileError)

        self._ordinal += 1
        var = Variable(
            name=name,
            kind=kind,
            ordinal=self._ordinal,
            commuting=commuting,
            symmetry=symmetry,
            tensor=kind == "tensor",
            dimension=dimension,
        )
        self._names[name] = var
        return var

    def declare_set(self, name, elements):
        if name in self._names:
            throw(f"{name} has already been declared as {self._names[name].kind}", exc=CompileError)
        self._sets[name] = tuple(elements)

    def find(self, name):
        return self._names.get(name)

    def lookup(self, name):
        var = self._names.get(name)
        if var is None:
            throw(f"Undeclared variable {name}", exc=CompileError)
        return var

    def get_set(self, name):
        return self._sets.get(name)

    def by_kind(self, kind):
        return [v for v in self._names.values() if v.kind == kind]

    def __len__(self):
        return len(self._names)

    def listing(self):
        """Name lists as printed by `On names;`."""
        titles = (
            ("symbol", "Symbols"),
            ("index", "Indices"),
            ("function", "Functions"),
            ("tensor", "Tensors"),
            ("table", "Tables"),
            ("expression", "Expressions"),
        )
        lines = []
        for kind, title in titles:
            names = [v.name for v in self.by_kind(kind)]
            if names:
                lines.append(f" {title}")
                lines.append("  " + " ".join(names))
        return "\n".join(lines)


@dataclass
class StatementIR:
    opcode: str
    operands: dict = field(default_factory=dict)
    body: list = field(default_factory=list)
    file: str = None
    line: int = None
    source: str = ""

    def listing(self, depth=0):
        pad = "    " * depth
        lines = [f"{pad}{self.opcode}: {' '.join(self.source.split())}"]
        if self.opcode == "If":
            for n, (_, body) in enumerate(self.operands["branches"]):
                if n:
                    lines.append(f"{pad}  elseif")
                lines.extend(s.listing(depth + 1) for s in body)
            if self.operands.get("otherwise") is not None:
                lines.append(f"{pad}  else")
                lines.extend(s.listing(depth + 1) for s in self.operands["otherwise"])
        elif self.opcode == "Term":
            for n, segment in enumerate(self.operands["segments"]):
                if n:
                    lines.append(f"{pad}  sort")
                lines.extend(s.listing(depth + 1) for s in segment)
        else:
            lines.extend(s.listing(depth + 1) for s in self.body)
        return "\n".join(lines)


@dataclass(frozen=True)
class Diagnostic:
    text: str
    in_loop: bool = False
    listing: str = ""


@dataclass
class Module:
    kind: str
    label: str
    file: str
    line: int
    definitions: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    statements: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def listing(self):
        return "\n".join(s.listing() for s in (*self.definitions, *self.actions, *self.statements))


@dataclass
class _Frame:
    kind: str
    ir: StatementIR
    target: list


class ModuleCompiler:
    """
    Compiles the statements of one module as the preprocessor hands them over.

    Declarations take effect immediately. Everything else becomes a
    StatementIR; block statements (repeat, if, Term) are assembled on a
    stack. A statement with an error is reported and skipped, and
    compilation goes on with the next one.
    """

    def __init__(self, table):
        self.table = table
        self._reset()

    def _reset(self):
        self.definitions = []
        self.actions = []
        self.statements = []
        self.errors = []
        self._stack = []

    # driving

    def feed(self, statement):
        try:
            ir = self.compile_statement(statement.text, statement.file, statement.line)
            if ir is not None:
                self._place(ir)
        except CompileError as e:
            e.located(statement.file, statement.line)
            self.errors.append(Diagnostic(str(e), statement.in_loop, " ".join(statement.text.split())))
            logger.debug("compile error: %s", e)

    def finish(self, end):
        for frame in self._stack:
            closer = {"repeat": "endrepeat", "if": "endif", "term": "EndTerm"}[frame.kind]
            message = f"Missing {closer} for statement in line {frame.ir.line}"
            self.errors.append(Diagnostic(str(CompileError(message, end.file, end.line)), listing=frame.ir.listing()))
        module = Module(
            kind=end.kind,
            label=end.label,
            file=end.file,
            line=end.line,
            definitions=self.definitions,
            actions=self.actions,
            statements=self.statements,
            errors=self.errors,
        )
        self._reset()
        return module

    def parse_value(self, text):
        """Parse the right-hand side of a `#$name = value;` line."""
        return parse_expression(text, self.table)

    # block assembly

    def _place(self, ir):
        op = ir.opcode
        top = self._stack[-1] if self._stack else None

        if op == "RepeatOpen":
            block = StatementIR("Repeat", file=ir.file, line=ir.line, source=ir.source)
            self._push("repeat", block, block.body)
        elif op == "EndRepeat":
            self._pop("repeat", "endrepeat")
        elif op == "IfOpen":
            block = StatementIR(
                "If",
                {"branches": [[ir.operands["condition"], []]], "otherwise": None},
                file=ir.file,
                line=ir.line,
                source=ir.source,
            )
            self._push("if", block, block.operands["branches"][0][1])
        elif op in ("ElseIf", "Else"):
            if top is None or top.kind != "if" or top.ir.operands["otherwise"] is not None:
                throw(f"{op.lower()} without if", exc=CompileError)
            if op == "ElseIf":
                branch = [ir.operands["condition"], []]
                top.ir.operands["branches"].append(branch)
                top.target = branch[1]
            else:
                top.ir.operands["otherwise"] = []
                top.target = top.ir.operands["otherwise"]
        elif op == "EndIf":
            self._pop("if", "endif")
        elif op == "TermOpen":
            if any(frame.kind == "term" for frame in self._stack):
                throw("Term environments cannot be nested", exc=CompileError)
            block = StatementIR("Term", {"segments": [[]]}, file=ir.file, line=ir.line, source=ir.source)
            self._push("term", block, block.operands["segments"][0])
        elif op == "InnerSort":
            if top is None or top.kind != "term":
                throw("sort statement outside a Term environment", exc=CompileError)
            top.ir.operands["segments"].append([])
            top.target = top.ir.operands["segments"][-1]
        elif op == "EndTerm":
            self._pop("term", "EndTerm")
        elif top is not None:
            if op in MODULE_LEVEL or op == "Define":
                throw(f"{ir.source.split()[0]} statement not allowed inside a block", exc=CompileError)
            top.target.append(ir)
        elif op == "Define":
            self.definitions.append(ir)
        elif op in MODULE_LEVEL:
            self.actions.append(ir)
        else:
            self.statements.append(ir)

    def _push(self, kind, ir, target):
        self._stack.append(_Frame(kind, ir, target))

    def _pop(self, kind, word):
        if not self._stack or self._stack[-1].kind != kind:
            throw(f"{word} without matching opening statement", exc=CompileError)
        frame = self._stack.pop()
        if self._stack:
            self._stack[-1].target.append(frame.ir)
        else:
            self.statements.append(frame.ir)

    # statements

    def compile_statement(self, text, file=None, line=None):
        text = text.strip()
        if text.startswith("$"):
            return self._dollar(text, file, line)

        match = _KEYWORD.match(text)
        if not match:
            throw(f"Illegal statement: {text}", exc=CompileError)
        keyword = match.group(1).lower()
        plus = bool(match.group(2))
        rest = text[match.end() :]

        handler = _HANDLERS.get(keyword)
        if handler is None or (plus and keyword not in ("b", "bracket")):
            throw(f"Unrecognized statement: {match.group(0).strip()}", exc=CompileError)
        ir = handler(self, keyword, rest, plus)
        if ir is not None:
            _locate(ir, file, line)
            ir.source = text
        return ir

    def _declare(self, keyword, rest, plus):
        kind, commuting = _DECLARATIONS[keyword]
        if kind == "set":
            return self._set(rest)

        for item in split_top(rest.strip().lstrip(","), ","):
            item = item.strip()
            if not item:
                continue
            name, options = _name_and_options(item)
            if kind == "table":
                if name.lower() in ("sparse", "strict", "relax") and options is None:
                    continue
                self._table(name, options)
                continue

            symmetry = "none"
            if options is not None and kind in ("function", "tensor"):
                for option in options:
                    option = option.strip().lower()
                    if option not in SYMMETRY_OPTIONS:
                        throw(f"Unknown function property {option}", exc=CompileError)
                    symmetry = SYMMETRY_OPTIONS[option]
            self.table.declare(name, kind, commuting=commuting, symmetry=symmetry)
        return None

    def _table(self, name, options):
        if not options:
            throw(f"Table {name} needs a dimension", exc=CompileError)
        bounds = []
        for option in options:
            option = option.strip()
            if ":" in option:
                lo, _, hi = option.partition(":")
                try:
                    bounds.append((int(lo), int(hi)))
                except ValueError:
                    throw(f"Illegal table bounds {option}", exc=CompileError)
            elif option.isdigit() and len(options) == 1:
                bounds.extend([None] * int(option))
            else:
                throw(f"Illegal table bounds {option}", exc=CompileError)
        self.table.declare(name, "table", dimension=len(bounds))
        self.table.table_bounds[name] = tuple(bounds)

    def _set(self, rest):
        name, colon, elements = rest.strip().partition(":")
        name = name.strip()
        if not colon or not _NAME.match(name):
            throw("Set needs the form name: elements", exc=CompileError)
        nodes = Parser(elements, self.table).parse_list() if elements.strip() else []
        self.table.declare_set(name, nodes)
        return None

    def _define(self, keyword, rest, plus):
        name, rhs = _assignment(rest)
        if not _NAME.match(name):
            throw(f"Illegal expression name {name}", exc=CompileError)
        self.table.declare(name, "expression")
        expr = parse_expression(rhs, self.table)
        return StatementIR("Define", {"name": name, "expr": expr, "global": keyword.startswith("g")})

    def _id(self, keyword, rest, plus):
        rest = rest.strip()
        if rest.startswith(","):
            option, _, rest = rest[1:].partition(" ")
            if option.strip().lower() not in ("", "many", "multi", "all"):
                throw(f"Unknown id option {option}", exc=CompileError)
        lhs, rhs = _assignment(rest)
        pattern_tree = parse_expression(lhs, self.table, patterns=True)
        if symmetric_argument_field(pattern_tree):
            throw("Argument field wildcards are not allowed in symmetric functions", exc=CompileError)
        compiled = pattern.compile_pattern(pattern_tree, self.table)
        replacement = parse_expression(rhs, self.table)
        return StatementIR("Id", {"pattern": compiled, "rhs": replacement})

    def _repeat(self, keyword, rest, plus):
        if not rest.strip():
            return StatementIR("RepeatOpen")
        inner = self.compile_statement(rest)
        return StatementIR("Repeat", body=[inner])

    def _endrepeat(self, keyword, rest, plus):
        return StatementIR("EndRepeat")

    def _if(self, keyword, rest, plus):
        condition_text, remainder = _parenthesized(rest)
        condition = parse_condition(condition_text, self.table)
        if keyword == "elseif":
            if remainder.strip():
                throw("elseif cannot carry a statement", exc=CompileError)
            return StatementIR("ElseIf", {"condition": condition})
        if remainder.strip():
            inner = self.compile_statement(remainder)
            return StatementIR("If", {"branches": [[condition, [inner]]], "otherwise": None})
        return StatementIR("IfOpen", {"condition": condition})

    def _else(self, keyword, rest, plus):
        return StatementIR("Else")

    def _endif(self, keyword, rest, plus):
        return StatementIR("EndIf")

    def _multiply(self, keyword, rest, plus):
        rest = rest.strip()
        for option in ("left,", "right,", ","):
            if rest.lower().startswith(option):
                rest = rest[len(option) :]
                break
        return StatementIR("Multiply", {"expr": parse_expression(rest, self.table)})

    def _splitarg(self, keyword, rest, plus):
        rest = rest.strip().lstrip(",").strip()
        marker = None
        if rest.startswith("(("):
            depth = 0
            end = None
            for i, ch in enumerate(rest):
                if ch == "(":
                    depth += 1
                elif ch == ")":
                    depth -= 1
                    if depth == 0:
                        end = i
                        break
            if end is None or rest[end - 1] != ")":
                throw("SplitArg needs ((expression)) as marker", exc=CompileError)
            marker = parse_expression(rest[2 : end - 1], self.table)
            rest = rest[end + 1 :].strip().lstrip(",")
        funs = self._functions(rest)
        return StatementIR("SplitArg", {"marker": marker, "funs": funs or None})

    def _functions(self, text):
        funs = []
        for name in split_top(text, ","):
            name = name.strip()
            if not name:
                continue
            var = self.table.lookup(name)
            if var.kind not in ("function", "tensor"):
                throw(f"{name} is not a function", exc=CompileError)
            funs.append(var)
        return funs

    def _replaceloop(self, keyword, rest, plus):
        parts = [p.strip() for p in split_top(rest.strip().lstrip(","), ",") if p.strip()]
        if not parts:
            throw("ReplaceLoop needs a function", exc=CompileError)
        fun = self.table.lookup(parts[0])
        if fun.kind not in ("function", "tensor"):
            throw(f"{parts[0]} is not a function", exc=CompileError)

        options = {}
        for part in parts[1:]:
            key, eq, value = part.partition("=")
            key = key.strip().lower()
            full = next((k for k in ("arguments", "loopsize", "outfun") if key and k.startswith(key)), None)
            if not eq or full is None:
                throw(f"Illegal ReplaceLoop option {part}", exc=CompileError)
            options[full] = value.strip()

        for required in ("arguments", "loopsize", "outfun"):
            if required not in options:
                throw(f"ReplaceLoop needs the {required} option", exc=CompileError)

        arguments = _positive(options["arguments"], "arguments")
        if options["loopsize"].lower() == "all":
            loopsize = None
        else:
            try:
                loopsize = int(options["loopsize"])
            except ValueError:
                throw(f"Illegal loopsize {options['loopsize']}", exc=CompileError)
            if loopsize < 2:
                throw("ReplaceLoop loopsize must be at least 2", exc=CompileError)

        outfun = self.table.lookup(options["outfun"])
        if outfun.kind not in ("function", "tensor") or outfun.symmetry not in (
            "cyclesymmetric",
            "rcyclesymmetric",
            "symmetric",
        ):
            throw(f"Output function {outfun.name} of ReplaceLoop must be cyclesymmetric", exc=CompileError)
        return StatementIR(
            "ReplaceLoop",
            {"fun": fun, "arguments": arguments, "loopsize": loopsize, "outfun": outfun},
        )

    def _term(self, keyword, rest, plus):
        _no_operands(keyword, rest)
        return StatementIR("TermOpen")

    def _endterm(self, keyword, rest, plus):
        _no_operands(keyword, rest)
        return StatementIR("EndTerm")

    def _sort(self, keyword, rest, plus):
        _no_operands(keyword, rest)
        return StatementIR("InnerSort")

    def _collect(self, keyword, rest, plus):
        funs = self._functions(rest.strip().lstrip(","))
        if len(funs) != 1:
            throw("Collect needs exactly one function", exc=CompileError)
        return StatementIR("Collect", {"fun": funs[0]})

    def _bracket(self, keyword, rest, plus):
        names = []
        for name in split_top(rest.strip().lstrip(","), ","):
            name = name.strip()
            if not name:
                continue
            var = self.table.lookup(name)
            if var.kind != "symbol":
                throw(f"Can only bracket in symbols, not {name}", exc=CompileError)
            names.append(var)
        return StatementIR("Bracket", {"symbols": names, "indexed": plus})

    def _print(self, keyword, rest, plus):
        flags = set()
        rest = rest.strip()
        while rest[:1] in ("+", "-") and rest[1:2].isalpha():
            flags.add(rest[:2].lower())
            rest = rest[2:].strip()

        if rest.startswith('"'):
            end = rest.find('"', 1)
            if end < 0:
                throw("Unterminated format string", exc=CompileError)
            fmt = rest[1:end]
            _check_format(fmt)
            args = [a.strip() for a in split_top(rest[end + 1 :].strip().lstrip(","), ",") if a.strip()]
            for arg in args:
                if not arg.startswith("$"):
                    throw(f"Print arguments must be $-variables: {arg}", exc=CompileError)
            return StatementIR("PrintTerm", {"format": fmt, "args": [a[1:] for a in args], "flags": flags})

        names = self._expression_names(rest)
        return StatementIR("Print", {"names": names, "flags": flags})

    def _expression_names(self, text):
        names = []
        for name in split_top(text.strip().lstrip(","), ","):
            name = name.strip()
            if not name:
                continue
            var = self.table.find(name)
            if var is None or var.kind != "expression":
                throw(f"Undeclared expression {name}", exc=CompileError)
            names.append(name)
        return names

    def _status(self, keyword, rest, plus):
        opcode = keyword.capitalize()
        return StatementIR(opcode, {"names": self._expression_names(rest)})

    def _dollar(self, text, file, line):
        name, rhs = _assignment(text[1:])
        if not _NAME.match(name):
            throw(f"Illegal $-variable name ${name}", exc=CompileError)
        ir = StatementIR("DollarAssign", {"name": name, "expr": parse_expression(rhs, self.table)})
        ir.file, ir.line, ir.source = file, line, text
        return ir

    def _fill(self, keyword, rest, plus):
        lhs, rhs = _assignment(rest)
        target = parse_expression(lhs, self.table)
        if not isinstance(target, Call) or target.var.kind != "table":
            throw(f"Fill needs a table element, not {lhs.strip()}", exc=CompileError)
        key = tuple(_integer(arg) for arg in target.args)
        values = Parser(rhs, self.table).parse_list()
        var = target.var
        if len(key) != var.dimension:
            throw(f"Table {var.name} has dimension {var.dimension}", exc=CompileError)

        bounds = self.table.table_bounds.get(var.name, ())
        for offset in range(len(values)):
            cell = key[:-1] + (key[-1] + offset,)
            for value, bound in zip(cell, bounds):
                if bound is not None and not bound[0] <= value <= bound[1]:
                    throw(f"Fill of {var.name} outside its bounds: {cell}", exc=CompileError)
        return StatementIR("Fill", {"table": var, "key": key, "values": values})

    def _moduleoption(self, keyword, rest, plus):
        if keyword != "moduleoption":
            _no_operands(keyword, rest)
            return StatementIR("ModuleOption", {"mode": None, "dollars": []})

        words = [w.strip() for w in split_top(rest.strip().lstrip(","), ",") if w.strip()]
        if not words:
            throw("ModuleOption needs an option", exc=CompileError)
        mode = words[0].lower()
        if mode in hooks.parallel_options:
            return StatementIR("ModuleOption", {"mode": None, "dollars": []})
        if mode not in hooks.merge_modes:
            throw(f"Unknown module option {words[0]}", exc=CompileError)
        dollars = []
        for word in words[1:]:
            if not word.startswith("$"):
                throw(f"ModuleOption {mode} needs $-variables, not {word}", exc=CompileError)
            dollars.append(word[1:])
        return StatementIR("ModuleOption", {"mode": mode, "dollars": dollars})

    def _onoff(self, keyword, rest, plus):
        flags = [w.strip().lower() for w in split_top(rest.strip().lstrip(","), ",") if w.strip()]
        if not flags:
            throw(f"{keyword.capitalize()} needs an option", exc=CompileError)
        for flag in flags:
            if flag not in ON_OFF_FLAGS:
                throw(f"Unknown option {flag}", exc=CompileError)
        return StatementIR("OnOff", {"flags": flags, "value": keyword == "on"})


_DECLARATIONS = {}
for _words, _kind, _commuting in (
    (("s", "symbol", "symbols"), "symbol", True),
    (("i", "index", "indices"), "index", True),
    (("cf", "cfunction", "cfunctions"), "function", True),
    (("f", "function", "functions", "nf", "nfunction", "nfunctions"), "function", False),
    (("t", "tensor", "tensors", "ct", "ctensor", "ctensors"), "tensor", True),
    (("nt", "ntensor", "ntensors"), "tensor", False),
    (("table", "tables"), "table", True),
    (("set", "sets"), "set", True),
):
    for _word in _words:
        _DECLARATIONS[_word] = (_kind, _commuting)

_HANDLERS = {word: ModuleCompiler._declare for word in _DECLARATIONS}
_HANDLERS.update(
    {
        "l": ModuleCompiler._define,
        "local": ModuleCompiler._define,
        "g": ModuleCompiler._define,
        "global": ModuleCompiler._define,
        "id": ModuleCompiler._id,
        "identify": ModuleCompiler._id,
        "repeat": ModuleCompiler._repeat,
        "endrepeat": ModuleCompiler._endrepeat,
        "if": ModuleCompiler._if,
        "elseif": ModuleCompiler._if,
        "else": ModuleCompiler._else,
        "endif": ModuleCompiler._endif,
        "multiply": ModuleCompiler._multiply,
        "splitarg": ModuleCompiler._splitarg,
        "replaceloop": ModuleCompiler._replaceloop,
        "term": ModuleCompiler._term,
        "endterm": ModuleCompiler._endterm,
        "sort": ModuleCompiler._sort,
        "collect": ModuleCompiler._collect,
        "b": ModuleCompiler._bracket,
        "bracket": ModuleCompiler._bracket,
        "print": ModuleCompiler._print,
        "hide": ModuleCompiler._status,
        "unhide": ModuleCompiler._status,
        "skip": ModuleCompiler._status,
        "drop": ModuleCompiler._status,
        "fill": ModuleCompiler._fill,
        **{keyword: ModuleCompiler._moduleoption for keyword in hooks.parallel_statements},
        "on": ModuleCompiler._onoff,
        "off": ModuleCompiler._onoff,
    }
)


# helpers
# ------------------


def _locate(ir, file, line):
    if ir.file is None:
        ir.file, ir.line = file, line
    for inner in ir.body:
        _locate(inner, file, line)
    for _, body in ir.operands.get("branches", ()):
        for inner in body:
            _locate(inner, file, line)


def _assignment(text):
    """Split `lhs = rhs` at the first `=` that is not part of `==`, `<=`, ..."""
    depth = 0
    for i, ch in enumerate(text):
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == "=" and depth == 0:
            before = text[i - 1] if i else ""
            after = text[i + 1] if i + 1 < len(text) else ""
            if before not in "=!<>" and after != "=":
                lhs, rhs = text[:i].strip(), text[i + 1 :].strip()
                if not lhs or not rhs:
                    break
                return lhs, rhs
    throw(f"Statement needs the form lhs = rhs: {text.strip()}", exc=CompileError)


def _parenthesized(text):
    text = text.strip()
    if not text.startswith("("):
        throw("Condition must be enclosed in parentheses", exc=CompileError)
    depth = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return text[1:i], text[i + 1 :]
    throw("Unbalanced parentheses in condition", exc=CompileError)


def _name_and_options(item):
    if item.startswith("["):
        return item, None
    if "(" not in item:
        return item, None
    name, _, options = item.partition("(")
    if not options.endswith(")"):
        throw(f"Unbalanced parentheses in {item}", exc=CompileError)
    return name.strip(), [o for o in split_top(options[:-1], ",")]


def _integer(node):
    negative = False
    if isinstance(node, Neg):
        negative = True
        node = node.operand
    if not isinstance(node, Num) or node.value.denominator != 1:
        throw("Table indices must be integers", exc=CompileError)
    value = int(node.value)
    return -value if negative else value


def _positive(text, what):
    try:
        value = int(text)
    except ValueError:
        value = 0
    if value < 1:
        throw(f"{what} must be a positive integer, not {text}", exc=CompileError)
    return value


def _no_operands(keyword, rest):
    if rest.strip():
        throw(f"{keyword} takes no operands", exc=CompileError)


_FORMAT_DIRECTIVE = re.compile(r"%(.?)")


def _check_format(fmt):
    for match in _FORMAT_DIRECTIVE.finditer(fmt):
        if match.group(1) not in ("t", "$", "%"):
            throw(f"Unknown format directive %{match.group(1)}", exc=CompileError)


def symmetric_argument_field(tree):
    """True when an argument-field wildcard sits directly inside a (anti)symmetric function."""
    for node in syntax.walk(tree):
        if isinstance(node, Call) and node.var.symmetry in ("symmetric", "antisymmetric"):
            if any(isinstance(arg, syntax.ArgField) for arg in node.args):
                return True
    return False


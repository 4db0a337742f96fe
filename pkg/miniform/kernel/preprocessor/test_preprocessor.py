# Copyright (c) 2025, Miniform and Contributors
# See license.txt

import os
import random
import tempfile
import unittest

from miniform.kernel.preprocessor.preprocessor import (
    DollarPreset,
    ModuleEnd,
    PPEnv,
    PPHost,
    PPStatement,
    Preprocessor,
    expand_dots,
    expand_sequence,
    pp_arith,
    pp_condition,
)
from miniform.utils import PreprocessorError


class RecordingHost(PPHost):
    def __init__(self):
        self.dollars = {}
        self.output = []
        self.messages = []

    def dollar_text(self, name):
        if name not in self.dollars:
            return super().dollar_text(name)
        return str(self.dollars[name])

    def dollar_step(self, name, delta):
        self.dollars[name] += delta

    def expression_text(self, name):
        return f"<{name}>"

    def emit(self, text):
        self.output.append(text)

    def message(self, text):
        self.messages.append(text)


def statements(text, env=None, host=None):
    items = Preprocessor(env, host or RecordingHost()).run(text, "test.frm")
    return [item.text for item in items if isinstance(item, PPStatement)]


class TestPreprocessor(unittest.TestCase):
    def test_postincrement(self):
        env = PPEnv()
        text = '#define k "1"\n' + "Local F`k++' = x;\n" * 4 + ".end\n"
        self.assertEqual(statements(text, env), [f"Local F{k} = x" for k in range(1, 5)])
        self.assertEqual(env.definitions["k"], "5")

    def test_postincrement_of_undefined_is_error(self):
        with self.assertRaises(PreprocessorError):
            statements("Local F`k++' = x;\n.end\n")

    def test_ifndef(self):
        text = "#ifndef `X'\nS x;\n#endif\n.end\n"
        self.assertEqual(statements(text), ["S x"])
        env = PPEnv(definitions={"X": "1"})
        self.assertEqual(statements(text, env), [])

    def test_else_and_elseif(self):
        text = (
            "#define A \"2\"\n"
            "#if `A' == 1\nS one;\n#elseif `A' == 2\nS two;\n#else\nS other;\n#endif\n"
            "#if (`A' > 1) && (`A' < 3)\nS between;\n#endif\n.end\n"
        )
        self.assertEqual(statements(text), ["S two", "S between"])

    def test_do_calls_each_procedure_once(self):
        text = (
            "#define size \"2\"\n"
            "#procedure table1\n#ifndef `STABLE1HFILE'\n#define STABLE1HFILE \"1\"\nS t1;\n#endif\n#endprocedure\n"
            "#procedure table2\n#ifndef `STABLE2HFILE'\n#define STABLE2HFILE \"1\"\nS t2;\n#endif\n#endprocedure\n"
            "#do itabs = 1,`size'\n#ifndef `STABLE`itabs'HFILE'\n#call table`itabs'\n#endif\n#enddo\n"
            "#do itabs = 1,`size'\n#call table`itabs'\n#enddo\n"
            ".end\n"
        )
        self.assertEqual(statements(text), ["S t1", "S t2"])

    def test_nested_interpolation(self):
        pp = Preprocessor(PPEnv(definitions={"itabs": "5", "STABLE5HFILE": "yes"}))
        self.assertEqual(pp.interpolate("STABLE`itabs'HFILE"), "STABLE5HFILE")
        self.assertEqual(pp.interpolate("`STABLE`itabs'HFILE'"), "yes")

    def test_plain_text_untouched(self):
        pp = Preprocessor(PPEnv(definitions={"a": "x"}))
        text = "id x = y + 1 and (f(1,2))"
        self.assertEqual(pp.interpolate(text), text)
        self.assertEqual(expand_dots(text), text)

    def test_recursive_definition_is_stopped(self):
        pp = Preprocessor(PPEnv(definitions={"a": "`a'"}))
        with self.assertRaises(PreprocessorError):
            pp.interpolate("`a'")

    def test_expand_sequence(self):
        items = expand_sequence("x1", "x100")
        self.assertEqual(len(items), 100)
        self.assertEqual(items[:2] + items[-1:], ["x1", "x2", "x100"])
        self.assertEqual(expand_dots("Local Fac10 = 1*...*10"), "Local Fac10 = 1*2*3*4*5*6*7*8*9*10")
        self.assertEqual(expand_dots("id f(<p1,m4>,...,<p4,m1>) = 1"), "id f(p1,m4,p2,m3,p3,m2,p4,m1) = 1")
        self.assertEqual(expand_dots("e_(i1?,...,i1?)"), "e_(i1?)")
        self.assertEqual(expand_dots("(x1+...+x3)^2"), "(x1+x2+x3)^2")

    def test_expand_sequence_length(self):
        rng = random.Random(1)
        for _ in range(200):
            a, b = rng.randint(0, 50), rng.randint(0, 50)
            self.assertEqual(len(expand_sequence(f"n{a}", f"n{b}")), abs(b - a) + 1)

    def test_expand_sequence_errors(self):
        with self.assertRaises(PreprocessorError):
            expand_sequence("x1", "y3")
        with self.assertRaises(PreprocessorError):
            expand_sequence("<p1,m1>", "<p4,m2>")

    def test_pp_arith(self):
        self.assertEqual(pp_arith("4-1"), 3)
        self.assertEqual(pp_arith("2*(3+4)"), 14)
        self.assertEqual(pp_arith("-7/2"), -3)
        self.assertEqual(pp_condition("3 >= 3 || 0"), 1)
        with self.assertRaises(PreprocessorError):
            pp_arith("1/0")
        with self.assertRaises(PreprocessorError):
            pp_arith("1+x")

    def test_do_bound_arithmetic(self):
        text = "#define MAX \"6\"\n#do j = 1,`MAX'-1\nS x`j';\n#enddo\n.end\n"
        self.assertEqual(statements(text), [f"S x{j}" for j in range(1, 6)])

    def test_do_list_and_step(self):
        text = "#do v = {a,b}\nS `v';\n#enddo\n#do i = 1,5,2\nS y`i';\n#enddo\n.end\n"
        self.assertEqual(statements(text), ["S a", "S b", "S y1", "S y3", "S y5"])

    def test_terminators_and_comments(self):
        text = (
            "* a comment\n"
            "S x; * trailing comment\n"
            "L F = x\n"
            "   + 1;\n"
            "#do j = 1,1\n.sort:step `j';\n#enddo\n"
            ".end\n"
            "S ignored;\n"
        )
        items = list(Preprocessor(host=RecordingHost()).run(text, "t.frm"))
        self.assertEqual(items[0], PPStatement("S x", "t.frm", 2))
        self.assertEqual(items[1].text, "L F = x\n   + 1")
        self.assertEqual(items[1].line, 3)
        self.assertEqual(items[2], ModuleEnd("sort", "step 1", "t.frm", 6))
        self.assertEqual(items[3].kind, "end")
        self.assertEqual(len(items), 4)

    def test_missing_end(self):
        with self.assertRaises(PreprocessorError):
            statements("S x;\n")

    def test_unmatched_enddo_is_located(self):
        with self.assertRaises(PreprocessorError) as ctx:
            statements("S x;\n#enddo\n.end\n")
        self.assertEqual(str(ctx.exception), "test.frm Line 2 --> #enddo without #do")

    def test_dollar_values_read_lazily(self):
        host = RecordingHost()
        host.dollars["max"] = -100
        stream = Preprocessor(host=host).run("#$max = -100;\n.sort\n#do i = 1,`$max'\nS x`i';\n#enddo\n.end\n", "t.frm")
        preset = next(stream)
        self.assertEqual(preset, DollarPreset("max", "-100", "t.frm", 1))
        self.assertIsInstance(next(stream), ModuleEnd)
        host.dollars["max"] = 2
        rest = [item.text for item in stream if isinstance(item, PPStatement)]
        self.assertEqual(rest, ["S x1", "S x2"])

    def test_write_and_message(self):
        host = RecordingHost()
        host.dollars["a"] = 7
        with tempfile.TemporaryDirectory() as tmp:
            target = os.path.join(tmp, "out.txt")
            text = (
                f'#write <{target}> "a = %$ in %E%%", $a, F\n'
                f'#write <{target}> "%s\\ndone", "word"\n'
                '#write "plain"\n'
                "#message hello\n.end\n"
            )
            statements(text, host=host)
            with open(target, encoding="utf-8") as handle:
                self.assertEqual(handle.read(), "a = 7 in <F>%\nword\ndone\n")
        self.assertEqual(host.output, ["plain\n"])
        self.assertEqual(host.messages, ["hello"])

    def test_call_from_include_path(self):
        with tempfile.TemporaryDirectory() as tmp:
            with open(os.path.join(tmp, "double.prc"), "w", encoding="utf-8") as handle:
                handle.write("#procedure double(F)\nid `F'(x?) = 2*`F'(x);\n#endprocedure\n")
            with open(os.path.join(tmp, "decl.h"), "w", encoding="utf-8") as handle:
                handle.write("S x;\n")
            env = PPEnv(include_path=[tmp])
            text = "#include <decl.h>\n#call double(g)\n#call double(h)\n.end\n"
            self.assertEqual(statements(text, env), ["S x", "id g(x?) = 2*g(x)", "id h(x?) = 2*h(x)"])
            self.assertNotIn("F", env.definitions)

    def test_missing_procedure(self):
        with self.assertRaises(PreprocessorError):
            statements("#call nowhere\n.end\n")

    def test_statements_in_loop_are_marked(self):
        items = list(Preprocessor(host=RecordingHost()).run("S a;\n#do i = 1,1\nS b;\n#enddo\n.end\n", "t.frm"))
        self.assertEqual([i.in_loop for i in items if isinstance(i, PPStatement)], [False, True])

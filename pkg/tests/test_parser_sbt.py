from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exemplargen.parser import (
    AstNode,
    Leaf,
    LexError,
    ParseError,
    consumed_tokens,
    lex,
    parse_method,
    sbt,
    sbt_ao,
    sbt_to_ao,
    tokenize_source,
)

from _support import random_ast, sbt_is_well_formed


def shape(node: AstNode):
    """(label, children) view that ignores absorbed syntax."""
    return (node.label(), [shape(c) for c in node.children])


def find(node: AstNode, category: str):
    return [n for n in node.walk() if n.category == category]


# ----------------------------------------------------------------- lexer


def test_tokenize_simple_statement():
    assert tokenize_source("int x = 1;") == ["int", "x", "=", "1", ";"]


def test_tokenize_call():
    assert tokenize_source("a.b()") == ["a", ".", "b", "(", ")"]


def test_unterminated_string_reports_offset():
    with pytest.raises(LexError) as err:
        tokenize_source('"unclosed')
    assert err.value.offset == 0


def test_unterminated_char_and_comment():
    with pytest.raises(LexError) as err:
        tokenize_source("x = 'a")
    assert err.value.offset == 4
    with pytest.raises(LexError):
        tokenize_source("x /* never closed")


def test_comments_and_whitespace_are_dropped():
    src = "int a = 1; // trailing\n/* block */ b += 0x1F;"
    assert tokenize_source(src) == ["int", "a", "=", "1", ";", "b", "+=", "0x1F", ";"]


def test_literals_are_single_tokens():
    toks = lex(r'''s = "a \"q\" b" + 'c' + '\n' + 1.5e3f;''')
    assert [t.kind for t in toks] == ["ident", "op", "string", "op", "char", "op", "char", "op", "number", "op"]


def test_greater_than_always_lexes_alone():
    # keeps generic closers and shift operators unambiguous
    assert tokenize_source("a >>= b >> c >= d") == ["a", ">", ">=", "b", ">", ">", "c", ">=", "d"]


# ---------------------------------------------------------------- parser


def test_parse_empty_method():
    ast = parse_method("void f() {}")
    assert shape(ast) == ("MethodDeclaration", [("Type_void", []), ("Name_f", []), ("Block", [])])


def test_parse_return_literal():
    ast = parse_method("int g(){return 1;}")
    ret = find(ast, "Return")
    assert len(ret) == 1
    assert shape(ret[0]) == ("Return", [("Literal_1", [])])


def test_unsupported_statement_becomes_generic():
    ast = parse_method("void h(){ @weird stuff; }")
    block = find(ast, "Block")[0]
    assert len(block.children) == 1
    generic = block.children[0]
    assert generic.category == "GenericStatement"
    assert generic.children and all(not c.children for c in generic.children)


def test_unbalanced_braces_report_position():
    with pytest.raises(ParseError) as err:
        parse_method("void f() { if (x) { y(); }")
    assert err.value.offset == 9
    with pytest.raises(ParseError):
        parse_method("void f() { } }")


def test_header_parts():
    ast = parse_method("public static <T> List<T> copy(final List<T> src, int n) throws IOException { return src; }")
    labels = [c.label() for c in ast.children]
    assert labels[:2] == ["Modifier_public", "Modifier_static"]
    assert "Name_copy" in labels
    assert len(find(ast, "Parameter")) == 2
    assert find(ast, "Throws")


def test_constructor_has_no_return_type():
    ast = parse_method("public Foo(int a) { this.a = a; }")
    assert [c.category for c in ast.children][:2] == ["Modifier", "Name"]


def test_control_flow_nodes():
    src = """
    int f(int[] xs) {
        int total = 0;
        for (int i = 0; i < xs.length; i++) { if (xs[i] > 0) total += xs[i]; else continue; }
        for (int x : xs) { while (x > 1) { x = x / 2; } }
        return total > 0 ? total : -total;
    }
    """
    ast = parse_method(src)
    for cat in ("For", "ForEach", "If", "While", "Return", "LocalVariable", "Conditional", "ArrayAccess"):
        assert find(ast, cat), cat


def test_binary_precedence():
    ast = parse_method("int f() { return a + b * c; }")
    expr = find(ast, "Return")[0].children[0]
    assert expr.category == "BinaryExpr"
    assert [c.label() for c in expr.children][:2] == ["Name_a", "Operator_+"]
    assert expr.children[2].category == "BinaryExpr"


SOURCES = [
    "void f() {}",
    "int g(){return 1;}",
    "void h(){ @weird stuff; }",
    'public String name() { return "n" + this.first.trim() + (x >> 2) + y[3]; }',
    "void m(int a) { try { run(a); } catch (Exception e) { log(e); } switch (a) { case 1: break; } }",
    "protected synchronized <K extends Comparable<K>> Map<K, List<V>> group(Collection<? extends V> items) "
    "{ Map<K, List<V>> out = new HashMap<>(); for (V v : items) { out.computeIfAbsent(key(v), k -> new ArrayList<>()).add(v); } return out; }",
    "void s() { x >>>= 1; y <<= 2; z = (int) w; do { a--; } while (a > 0); }",
    "boolean b() { return !(a && b) || c != d && e instanceof F; }",
]


@pytest.mark.parametrize("src", SOURCES)
def test_parse_never_drops_tokens(src):
    ast = parse_method(src)
    assert Counter(consumed_tokens(ast)) == Counter(tokenize_source(src))
    assert ast.category == "MethodDeclaration"


# ------------------------------------------------------------------- SBT


def test_sbt_single_leaf():
    assert sbt(Leaf("Name", "x")) == ["(", "Name_x", ")", "Name_x"]
    assert sbt_ao(Leaf("Name", "x")) == ["(", "Name_<OTHER>", ")", "Name_<OTHER>"]


def test_sbt_hand_traversal():
    tree = AstNode("A", children=[Leaf("B", "x"), AstNode("C")])
    assert sbt(tree) == ["(", "A", "(", "B_x", ")", "B_x", "(", "C", ")", "C", ")", "A"]


def test_sbt_ao_erases_values_only():
    t1 = parse_method("int f(int a) { return a + 1; }")
    t2 = parse_method("int g(int b) { return b + 2; }")
    assert sbt(t1) != sbt(t2)
    assert sbt_ao(t1) == sbt_ao(t2)
    assert sbt_ao(AstNode("A")) == ["(", "A", ")", "A"]


def test_sbt_to_ao_matches_tree_erasure():
    ast = parse_method(SOURCES[3])
    assert sbt_to_ao(sbt(ast)) == sbt_ao(ast)


def test_deep_tree_does_not_recurse():
    node = Leaf("Name", "x")
    for _ in range(5000):
        node = AstNode("Paren", children=[node])
    assert len(sbt(node)) == 4 * 5001


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sbt_invariants_on_random_trees(seed):
    ast = random_ast(np.random.default_rng(seed))
    full, ao = sbt(ast), sbt_ao(ast)
    assert len(full) == 4 * ast.count() == len(ao)
    assert sbt_is_well_formed(full) and sbt_is_well_formed(ao)
    for a, b in zip(full, ao):
        if a != b:
            assert "_" in a and b == a.split("_", 1)[0] + "_<OTHER>"

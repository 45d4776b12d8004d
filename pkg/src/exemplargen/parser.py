"""Tokenizer and error-tolerant recursive-descent parser for Java methods.

Only a pragmatic subset of the language is understood: method headers,
blocks, if/else, while, for, return, local variables and expression
statements.  Any other statement is kept as a ``GenericStatement`` whose
children are the raw tokens, so nothing from the source is lost.

The parse tree is linearised with structure-based traversal (SBT): every
node emits ``(``, its label, its children, ``)``, its label.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

OTHER = "<OTHER>"


class LexError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass(frozen=True)
class Token:
    text: str
    kind: str  # ident | number | string | char | op
    offset: int


# '>' is always emitted alone so that nested generics close cleanly; the
# expression parser re-joins adjacent '>' for shifts.
_OPERATORS = sorted(
    """<<= >= <= == != && || ++ -- += -= *= /= %= &= |= ^= << -> ::
    + - * / % = < > ! ~ ? : ; , . ( ) [ ] { } & | ^ @""".split(),
    key=len,
    reverse=True,
)
_IDENT = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_NUMBER = re.compile(
    r"0[xX][0-9a-fA-F_]+[lL]?|0[bB][01_]+[lL]?|"
    r"(?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d+)?[fFdDlL]?"
)


def lex(source: str) -> list[Token]:
    tokens = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                raise LexError("unterminated block comment", i)
            i = j + 2
            continue
        if ch in "\"'":
            j = i + 1
            while j < n and source[j] != ch:
                if source[j] == "\n":
                    break
                j += 2 if source[j] == "\\" else 1
            if j >= n or source[j] != ch:
                raise LexError("unterminated string literal" if ch == '"' else "unterminated char literal", i)
            tokens.append(Token(source[i : j + 1], "string" if ch == '"' else "char", i))
            i = j + 1
            continue
        m = _IDENT.match(source, i)
        if m:
            tokens.append(Token(m.group(), "ident", i))
            i = m.end()
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            m = _NUMBER.match(source, i)
            tokens.append(Token(m.group(), "number", i))
            i = m.end()
            continue
        for op in _OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token(op, "op", i))
                i += len(op)
                break
        else:
            # unknown character: keep it rather than fail
            tokens.append(Token(ch, "op", i))
            i += 1
    return tokens


def tokenize_source(source: str) -> list[str]:
    """Split Java source into token strings, dropping comments and whitespace."""
    return [t.text for t in lex(source)]


# ---------------------------------------------------------------------- AST


@dataclass
class AstNode:
    category: str
    value: str | None = None
    children: list[AstNode] = field(default_factory=list)
    # keywords and punctuation absorbed by this node; never part of the SBT
    syntax: list[str] = field(default_factory=list)

    def label(self, erase_values: bool = False) -> str:
        if self.value is None:
            return self.category
        return f"{self.category}_{OTHER if erase_values else self.value}"

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def count(self) -> int:
        return sum(1 for _ in self.walk())


def Leaf(category: str, value: str) -> AstNode:  # noqa: N802
    return AstNode(category, value)


def sbt(ast: AstNode) -> list[str]:
    return _traverse(ast, erase_values=False)


def sbt_ao(ast: AstNode) -> list[str]:
    """SBT with every token value replaced by ``<OTHER>``."""
    return _traverse(ast, erase_values=True)


def _traverse(root: AstNode, erase_values: bool) -> list[str]:
    out: list[str] = []
    # explicit stack; deep expression chains would overflow recursion
    stack: list[tuple[AstNode, bool]] = [(root, False)]
    while stack:
        node, closing = stack.pop()
        label = node.label(erase_values)
        if closing:
            out.extend((")", label))
            continue
        out.extend(("(", label))
        stack.append((node, True))
        for child in reversed(node.children):
            stack.append((child, False))
    return out


def sbt_to_ao(tokens: list[str]) -> list[str]:
    """Derive SBT-AO from a stored SBT token sequence.

    Category names never contain ``_``, so the first underscore separates the
    category from the value.
    """
    out = []
    for tok in tokens:
        if tok in ("(", ")") or "_" not in tok:
            out.append(tok)
        else:
            out.append(tok.split("_", 1)[0] + "_" + OTHER)
    return out


# ------------------------------------------------------------------- parser

MODIFIERS = {
    "public", "protected", "private", "static", "final", "abstract",
    "synchronized", "native", "strictfp", "default", "transient", "volatile",
}
PRIMITIVES = {"void", "int", "long", "short", "byte", "char", "boolean", "float", "double"}
LITERAL_WORDS = {"true", "false", "null"}
STATEMENT_KEYWORDS = {
    "if", "else", "while", "for", "do", "return", "try", "catch", "finally",
    "switch", "case", "break", "continue", "throw", "synchronized", "new",
    "assert",
}
ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<="}
BINARY_LEVELS = [
    ["||"],
    ["&&"],
    ["|"],
    ["^"],
    ["&"],
    ["==", "!="],
    ["<", ">", "<=", ">=", "instanceof"],
    ["<<", ">>", ">>>"],
    ["+", "-"],
    ["*", "/", "%"],
]


class _Fail(Exception):
    """Internal backtracking signal; never escapes the parser."""


class _Parser:
    def __init__(self, tokens: list[Token], source_len: int):
        self.toks = tokens
        self.pos = 0
        self.end_offset = source_len

    # -- token helpers
    def peek(self, k: int = 0) -> Token | None:
        i = self.pos + k
        return self.toks[i] if i < len(self.toks) else None

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t is not None and t.text == text and t.kind in ("op", "ident")

    def offset(self) -> int:
        t = self.peek()
        return t.offset if t else self.end_offset

    def take(self, text: str | None = None) -> Token:
        t = self.peek()
        if t is None:
            raise _Fail()
        if text is not None and (t.text != text or t.kind not in ("op", "ident")):
            raise _Fail()
        self.pos += 1
        return t

    def ident(self) -> Token:
        t = self.peek()
        if t is None or t.kind != "ident" or t.text in STATEMENT_KEYWORDS or t.text in LITERAL_WORDS:
            raise _Fail()
        self.pos += 1
        return t

    # -- header
    def method(self) -> AstNode:
        node = AstNode("MethodDeclaration")
        while True:
            if self.at("@") and self.peek(1) is not None and self.peek(1).kind == "ident":
                self.take("@")
                ann = AstNode("Annotation", syntax=["@"])
                ann.children.append(Leaf("Name", self.take().text))
                if self.at("("):
                    ann.children.extend(self.balanced_leaves("(", ")"))
                node.children.append(ann)
            elif self.peek() is not None and self.peek().text in MODIFIERS:
                node.children.append(Leaf("Modifier", self.take().text))
            else:
                break
        if self.at("<"):
            tp = AstNode("TypeParameters")
            tp.children.extend(self.balanced_leaves("<", ">"))
            node.children.append(tp)
        # constructors have no return type
        if not (self.peek() and self.peek().kind == "ident" and self.at("(", 1)):
            node.children.append(self.type_())
        node.children.append(Leaf("Name", self.ident().text))
        self.parameters(node)
        while self.at("["):  # legacy `int f()[]`
            node.syntax.extend([self.take("[").text, self.take("]").text])
        if self.at("throws"):
            th = AstNode("Throws", syntax=[self.take().text])
            th.children.append(self.type_())
            while self.at(","):
                th.syntax.append(self.take(",").text)
                th.children.append(self.type_())
            node.children.append(th)
        if self.at(";"):  # abstract / interface method
            node.syntax.append(self.take(";").text)
            node.children.append(AstNode("Block"))
        else:
            node.children.append(self.block())
        return node

    def balanced_leaves(self, open_: str, close: str) -> list[AstNode]:
        depth, leaves = 0, []
        while True:
            t = self.take()
            leaves.append(Leaf("Token", t.text))
            if t.text == open_:
                depth += 1
            elif t.text == close:
                depth -= 1
                if depth == 0:
                    return leaves

    def type_(self) -> AstNode:
        start = self.pos
        parts = [self.take().text] if self.peek() and self.peek().text in PRIMITIVES else [self.ident().text]
        while self.at(".") and self.peek(1) and self.peek(1).kind == "ident":
            parts += [self.take(".").text, self.take().text]
        if self.at("<"):
            depth = 0
            while True:
                t = self.take()
                parts.append(t.text)
                if t.text == "<":
                    depth += 1
                elif t.text == ">":
                    depth -= 1
                    if depth == 0:
                        break
                elif t.text in (";", "{", "}", "(", ")", "="):
                    self.pos = start
                    raise _Fail()
        while self.at("[") and self.at("]", 1):
            parts += [self.take().text, self.take().text]
        if len(parts) == 1:
            return Leaf("Type", parts[0])
        return AstNode("Type", children=[Leaf("TypeToken", p) for p in parts])

    def parameters(self, node: AstNode):
        """Append ``Parameter`` children to the method node."""
        node.syntax.append(self.take("(").text)
        while not self.at(")"):
            param = AstNode("Parameter")
            while self.at("final") or self.at("@"):
                if self.at("@"):
                    self.take("@")
                    param.syntax.append("@")
                    param.children.append(Leaf("Annotation", self.ident().text))
                else:
                    param.children.append(Leaf("Modifier", self.take().text))
            param.children.append(self.type_())
            # varargs: `String... args` lexes as three '.' tokens
            while self.at("."):
                param.syntax.append(self.take(".").text)
            param.children.append(Leaf("Name", self.ident().text))
            node.children.append(param)
            if self.at(","):
                node.syntax.append(self.take(",").text)
            elif not self.at(")"):
                raise _Fail()
        node.syntax.append(self.take(")").text)

    # -- statements
    def block(self) -> AstNode:
        if not self.at("{"):
            raise ParseError("expected '{'", self.offset())
        open_offset = self.offset()
        node = AstNode("Block", syntax=[self.take("{").text])
        while not self.at("}"):
            if self.peek() is None:
                raise ParseError("unbalanced braces: '{' never closed", open_offset)
            node.children.append(self.statement())
        node.syntax.append(self.take("}").text)
        return node

    def statement(self) -> AstNode:
        start = self.pos
        try:
            return self.structured_statement()
        except _Fail:
            self.pos = start
            return self.generic_statement()

    def generic_statement(self) -> AstNode:
        """Consume up to a top-level ';' or the end of a braced block."""
        node = AstNode("GenericStatement")
        depth = 0
        start_offset = self.offset()
        while True:
            t = self.peek()
            if t is None:
                raise ParseError("unbalanced braces in statement", start_offset)
            if t.text == "}" and t.kind == "op" and depth == 0:
                if not node.children:
                    raise ParseError("unbalanced braces: unexpected '}'", t.offset)
                return node
            self.pos += 1
            node.children.append(Leaf("Token", t.text))
            if t.kind != "op":
                continue
            if t.text in ("{", "(", "["):
                depth += 1
            elif t.text in ("}", ")", "]"):
                depth -= 1
                if t.text == "}" and depth == 0:
                    return node
            elif t.text == ";" and depth == 0:
                return node

    def structured_statement(self) -> AstNode:
        t = self.peek()
        if t is None:
            raise _Fail()
        if self.at("{"):
            return self.block()
        if self.at(";"):
            return AstNode("EmptyStatement", syntax=[self.take().text])
        if self.at("if"):
            node = AstNode("If", syntax=[self.take().text, self.take("(").text])
            node.children.append(self.expression())
            node.syntax.append(self.take(")").text)
            node.children.append(self.statement())
            if self.at("else"):
                node.syntax.append(self.take().text)
                node.children.append(self.statement())
            return node
        if self.at("while"):
            node = AstNode("While", syntax=[self.take().text, self.take("(").text])
            node.children.append(self.expression())
            node.syntax.append(self.take(")").text)
            node.children.append(self.statement())
            return node
        if self.at("for"):
            return self.for_statement()
        if self.at("return"):
            node = AstNode("Return", syntax=[self.take().text])
            if not self.at(";"):
                node.children.append(self.expression())
            node.syntax.append(self.take(";").text)
            return node
        if t.kind == "ident" and t.text in STATEMENT_KEYWORDS - {"new"}:
            raise _Fail()
        decl = self.try_local_variable()
        if decl is not None:
            decl.syntax.append(self.take(";").text)
            return decl
        node = AstNode("ExpressionStatement")
        node.children.append(self.expression())
        node.syntax.append(self.take(";").text)
        return node

    def for_statement(self) -> AstNode:
        node = AstNode("For", syntax=[self.take("for").text, self.take("(").text])
        decl = self.try_local_variable(allow_foreach=True)
        if decl is not None and decl.category == "ForEachVariable":
            node.category = "ForEach"
            node.children.append(decl)
            node.syntax.append(self.take(":").text)
            node.children.append(self.expression())
        else:
            init = AstNode("ForInit")
            if decl is not None:
                init.children.append(decl)
            elif not self.at(";"):
                init.children.append(self.expression())
                while self.at(","):
                    init.syntax.append(self.take(",").text)
                    init.children.append(self.expression())
            node.children.append(init)
            node.syntax.append(self.take(";").text)
            cond = AstNode("ForCondition")
            if not self.at(";"):
                cond.children.append(self.expression())
            node.children.append(cond)
            node.syntax.append(self.take(";").text)
            update = AstNode("ForUpdate")
            while not self.at(")"):
                update.children.append(self.expression())
                if self.at(","):
                    update.syntax.append(self.take(",").text)
                elif not self.at(")"):
                    raise _Fail()
            node.children.append(update)
        node.syntax.append(self.take(")").text)
        node.children.append(self.statement())
        return node

    def try_local_variable(self, allow_foreach: bool = False) -> AstNode | None:
        start = self.pos
        node = AstNode("LocalVariable")
        try:
            while self.at("final"):
                node.children.append(Leaf("Modifier", self.take().text))
            node.children.append(self.type_())
            node.children.append(Leaf("Name", self.ident().text))
        except _Fail:
            self.pos = start
            return None
        if allow_foreach and self.at(":"):
            node.category = "ForEachVariable"
            return node
        if self.at("="):
            node.syntax.append(self.take().text)
            node.children.append(self.expression())
        elif not self.at(";"):
            self.pos = start
            return None
        return node

    # -- expressions
    def expression(self) -> AstNode:
        lhs = self.ternary()
        t = self.peek()
        if t is not None and t.kind == "op" and (t.text in ASSIGN_OPS or self.shift_assign()):
            op = self.operator_leaves()
            rhs = self.expression()
            return AstNode("Assign", children=[lhs, *op, rhs])
        return lhs

    def adjacent(self, texts: list[str]) -> bool:
        """True if the next tokens spell ``texts`` with no gaps between them."""
        first = self.peek()
        if first is None:
            return False
        off = first.offset
        for k, text in enumerate(texts):
            tk = self.peek(k)
            if tk is None or tk.kind != "op" or tk.text != text or tk.offset != off:
                return False
            off += len(text)
        return True

    def shift_assign(self) -> int:
        # `>>=` lexes as '>' '>=' and `>>>=` as '>' '>' '>='
        for run in ([">", ">", ">="], [">", ">="]):
            if self.adjacent(run):
                return len(run)
        return 0

    def shift_op(self) -> int:
        if self.shift_assign():
            return 0
        for run in ([">", ">", ">"], [">", ">"]):
            if self.adjacent(run) and not self.adjacent(run + [">="]) and not self.adjacent(run[:-1] + [">="]):
                return len(run)
        return 0

    def operator_leaves(self) -> list[AstNode]:
        n = self.shift_assign() or 1
        return [Leaf("Operator", self.take().text) for _ in range(n)]

    def ternary(self) -> AstNode:
        cond = self.binary(0)
        if self.at("?"):
            node = AstNode("Conditional", syntax=[self.take().text])
            node.children.extend([cond, self.expression()])
            node.syntax.append(self.take(":").text)
            node.children.append(self.expression())
            return node
        return cond

    def binary(self, level: int) -> AstNode:
        if level == len(BINARY_LEVELS):
            return self.unary()
        ops = BINARY_LEVELS[level]
        left = self.binary(level + 1)
        while True:
            t = self.peek()
            if t is None:
                return left
            if ">>" in ops and t.text == ">":
                n = self.shift_op()
                if not n:
                    return left
                op = [Leaf("Operator", self.take().text) for _ in range(n)]
            elif t.text in ops and t.kind in ("op", "ident"):
                if t.text == ">" and (self.shift_op() or self.shift_assign()):
                    return left
                op = [Leaf("Operator", self.take().text)]
            else:
                return left
            if op[0].value == "instanceof":
                right = self.type_()
            else:
                right = self.binary(level + 1)
            left = AstNode("BinaryExpr", children=[left, *op, right])

    def unary(self) -> AstNode:
        t = self.peek()
        if t is not None and t.kind == "op" and t.text in ("!", "-", "+", "~", "++", "--"):
            op = Leaf("Operator", self.take().text)
            return AstNode("UnaryExpr", children=[op, self.unary()])
        expr = self.postfix()
        while self.at("++") or self.at("--"):
            expr = AstNode("PostfixExpr", children=[expr, Leaf("Operator", self.take().text)])
        return expr

    def postfix(self) -> AstNode:
        expr = self.primary()
        while True:
            if self.at("."):
                dot = self.take().text
                if self.at("<"):
                    raise _Fail()
                name = Leaf("Name", self.ident().text)
                expr = AstNode("FieldAccess", children=[expr, name], syntax=[dot])
            elif self.at("("):
                expr = AstNode("Call", children=[expr, self.arguments()])
            elif self.at("["):
                node = AstNode("ArrayAccess", syntax=[self.take().text])
                node.children = [expr, self.expression()]
                node.syntax.append(self.take("]").text)
                expr = node
            else:
                return expr

    def arguments(self) -> AstNode:
        node = AstNode("Arguments", syntax=[self.take("(").text])
        while not self.at(")"):
            node.children.append(self.expression())
            if self.at(","):
                node.syntax.append(self.take().text)
            elif not self.at(")"):
                raise _Fail()
        node.syntax.append(self.take(")").text)
        return node

    def primary(self) -> AstNode:
        t = self.peek()
        if t is None:
            raise _Fail()
        if t.kind in ("number", "string", "char") or (t.kind == "ident" and t.text in LITERAL_WORDS):
            self.pos += 1
            return Leaf("Literal", t.text)
        if t.kind == "ident" and t.text in ("this", "super"):
            self.pos += 1
            return Leaf("Name", t.text)
        if self.at("new"):
            node = AstNode("New", syntax=[self.take().text])
            node.children.append(self.type_())
            if not self.at("("):
                raise _Fail()
            node.children.append(self.arguments())
            if self.at("{"):
                raise _Fail()
            return node
        if self.at("("):
            node = AstNode("Paren", syntax=[self.take().text])
            node.children.append(self.expression())
            node.syntax.append(self.take(")").text)
            # `(T) x` is a cast; leave it to the fallback
            nxt = self.peek()
            if nxt is not None and (nxt.kind != "op" or nxt.text in ("(", "!", "~")):
                raise _Fail()
            return node
        return Leaf("Name", self.ident().text)


def parse_tokens(tokens: list[Token], source_len: int = 0) -> AstNode:
    _check_braces(tokens, source_len)
    p = _Parser(tokens, source_len)
    try:
        node = p.method()
    except _Fail:
        raise ParseError("unsupported method header", p.offset()) from None
    if p.peek() is not None:
        raise ParseError("trailing tokens after method body", p.offset())
    return node


def parse_method(source: str) -> AstNode:
    """Parse one Java method declaration into a ``MethodDeclaration`` tree."""
    return parse_tokens(lex(source), len(source))


def _check_braces(tokens: list[Token], source_len: int):
    stack = []
    for t in tokens:
        if t.kind != "op":
            continue
        if t.text == "{":
            stack.append(t.offset)
        elif t.text == "}":
            if not stack:
                raise ParseError("unbalanced braces: unexpected '}'", t.offset)
            stack.pop()
    if stack:
        raise ParseError("unbalanced braces: '{' never closed", stack[-1])


def consumed_tokens(ast: AstNode) -> list[str]:
    """Every source token the tree accounts for: leaf values plus absorbed syntax."""
    out = []
    for node in ast.walk():
        out.extend(node.syntax)
        if node.value is not None:
            out.append(node.value)
    return out

"""
Recursive-descent parser for MiniLang blocks.

Also hosts the block-boundary helpers the kernel uses while reading LLM
output: ``is_block_complete``, ``extract_block`` and ``render_echo``.
"""

import logging
from typing import List, Optional, Tuple, Union

from . import lexer as lx
from .lexer import Token
from .nodes import (
    Assign,
    Attribute,
    AugAssign,
    BinOp,
    BoolOp,
    Break,
    Call,
    Comment,
    Compare,
    Constant,
    Continue,
    ExprStmt,
    For,
    FormattedValue,
    FString,
    If,
    IfExp,
    Keyword,
    ListComp,
    ListDisplay,
    MapDisplay,
    Name,
    Node,
    Pass,
    Slice,
    SourceBlock,
    Span,
    Stmt,
    Subscript,
    SyntaxDiagnostic,
    TupleDisplay,
    UnaryOp,
    While,
    make_diagnostic,
)

logger = logging.getLogger(__name__)

RESERVED = frozenset(
    {
        "def", "class", "import", "from", "return", "lambda", "try", "except",
        "finally", "raise", "with", "as", "yield", "global", "nonlocal", "del",
        "assert", "async", "await",
    }
)
KEYWORDS = RESERVED | {
    "for", "in", "while", "if", "elif", "else", "break", "continue", "pass",
    "and", "or", "not", "is", "True", "False", "None",
}
SPANNING = (lx.NAME, lx.NUMBER, lx.STRING, lx.OP)
AUG_OPS = ("+=", "-=", "*=", "/=", "//=", "%=", "**=")
COMPARE_OPS = ("<", ">", "==", "!=", "<=", ">=")
SIMPLE_ESCAPES = {
    "\n": "", "\\": "\\", "'": "'", '"': '"', "a": "\a", "b": "\b",
    "f": "\f", "n": "\n", "r": "\r", "t": "\t", "v": "\v",
}


class ParseError(Exception):
    def __init__(self, token: Token, reason: str = "invalid syntax"):
        super().__init__(reason)
        self.token = token
        self.reason = reason


def _join(first: Span, last: Span) -> Span:
    return (first[0], first[1], last[2], last[3])


def decode_escapes(body: str) -> str:
    """Decode backslash escapes the way a Python string literal does."""
    out = []
    i = 0
    n = len(body)
    while i < n:
        c = body[i]
        if c != "\\" or i + 1 >= n:
            out.append(c)
            i += 1
            continue
        nxt = body[i + 1]
        if nxt in SIMPLE_ESCAPES:
            out.append(SIMPLE_ESCAPES[nxt])
            i += 2
        elif nxt in "01234567":
            j = i + 1
            while j < n and j < i + 4 and body[j] in "01234567":
                j += 1
            out.append(chr(int(body[i + 1 : j], 8)))
            i = j
        elif nxt in "xuU":
            width = {"x": 2, "u": 4, "U": 8}[nxt]
            digits = body[i + 2 : i + 2 + width]
            try:
                if len(digits) != width:
                    raise ValueError(digits)
                out.append(chr(int(digits, 16)))
                i += 2 + width
            except ValueError:
                out.append(c)
                i += 1
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _split_string_token(text: str) -> Tuple[str, str]:
    """Return (lowercase prefix, body) of a string token."""
    idx = 0
    while text[idx] not in "'\"":
        idx += 1
    prefix = text[:idx].lower()
    quote = text[idx]
    width = 3 if text.startswith(quote * 3, idx) else 1
    return prefix, text[idx + width : len(text) - width]


class Parser:
    """Parses the token stream of exactly one block."""

    def __init__(self, tokens: List[Token], source: str):
        self.source = source
        self.comments = {t.line: t.text for t in tokens if t.kind == lx.COMMENT}
        self.tokens = [t for t in tokens if t.kind != lx.COMMENT]
        self.pos = 0

    # Token helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        if self.pos < len(self.tokens) - 1:
            self.pos += 1
        return token

    def expect_op(self, text: str) -> Token:
        if not self.tok.is_op(text):
            raise ParseError(self.tok)
        return self.advance()

    def expect_kind(self, kind: str) -> Token:
        if self.tok.kind != kind:
            raise ParseError(self.tok)
        return self.advance()

    def expect_keyword(self, word: str) -> Token:
        if not self.tok.is_keyword(word):
            raise ParseError(self.tok)
        return self.advance()

    def at_name(self) -> bool:
        return self.tok.kind == lx.NAME and self.tok.text not in KEYWORDS

    # Blocks

    def parse_block(self) -> Stmt:
        while self.tok.kind == lx.NEWLINE:
            self.advance()
        if self.tok.kind == lx.END:
            if self.comments:
                first = min(self.comments)
                last = max(self.comments)
                text = "\n".join(self.comments[k] for k in sorted(self.comments))
                end_col = len(self.source.split("\n")[last - 1]) + 1
                return Comment(text, span=(first, 1, last, end_col))
            raise ParseError(self.tok, "empty block")
        statement = self.statement()
        while self.tok.kind == lx.NEWLINE:
            self.advance()
        if self.tok.kind != lx.END:
            raise ParseError(
                self.tok,
                "multiple statements found while compiling a single statement",
            )
        return statement

    def statement(self) -> Stmt:
        if self.tok.kind == lx.INDENT:
            raise ParseError(self.tok, "unexpected indent")
        if self.tok.is_keyword("for"):
            return self.for_stmt()
        if self.tok.is_keyword("while"):
            return self.while_stmt()
        if self.tok.is_keyword("if"):
            return self.if_stmt()
        node = self.simple_stmt()
        node.comment = self.comments.get(node.span[2])
        if self.tok.kind not in (lx.NEWLINE, lx.END):
            raise ParseError(self.tok)
        if self.tok.kind == lx.NEWLINE:
            self.advance()
        return node

    def suite(self, header: Token) -> List[Stmt]:
        self.expect_op(":")
        if self.tok.kind != lx.NEWLINE:
            node = self.simple_stmt()
            node.comment = self.comments.get(node.span[2])
            if self.tok.kind == lx.NEWLINE:
                self.advance()
            elif self.tok.kind != lx.END:
                raise ParseError(self.tok)
            return [node]
        self.advance()
        if self.tok.kind != lx.INDENT:
            raise ParseError(
                self.tok,
                f"expected an indented block after '{header.text}' statement "
                f"on line {header.line}",
            )
        self.advance()
        body = []
        while self.tok.kind not in (lx.DEDENT, lx.END):
            body.append(self.statement())
        if self.tok.kind == lx.DEDENT:
            self.advance()
        return body

    def _stmt_span(self, start: Token, body: List[Stmt]) -> Span:
        return _join(start.span, body[-1].span)

    def for_stmt(self) -> Stmt:
        start = self.advance()
        target = self.target_list()
        self.expect_keyword("in")
        iterable = self.testlist()
        comment = self.comments.get(start.line)
        body = self.suite(start)
        return For(target, iterable, body, span=self._stmt_span(start, body), comment=comment)

    def while_stmt(self) -> Stmt:
        start = self.advance()
        test = self.test()
        comment = self.comments.get(start.line)
        body = self.suite(start)
        return While(test, body, span=self._stmt_span(start, body), comment=comment)

    def if_stmt(self, is_elif: bool = False) -> Stmt:
        start = self.advance()
        test = self.test()
        comment = self.comments.get(start.line)
        body = self.suite(start)
        orelse: List[Stmt] = []
        if self.tok.is_keyword("elif"):
            orelse = [self.if_stmt(is_elif=True)]
        elif self.tok.is_keyword("else"):
            header = self.advance()
            orelse = self.suite(header)
        last = orelse[-1] if orelse else body[-1]
        return If(
            test,
            body,
            orelse,
            is_elif,
            span=_join(start.span, last.span),
            comment=comment,
        )

    def simple_stmt(self) -> Stmt:
        token = self.tok
        if token.is_keyword("pass"):
            self.advance()
            return Pass(span=token.span)
        if token.is_keyword("break"):
            self.advance()
            return Break(span=token.span)
        if token.is_keyword("continue"):
            self.advance()
            return Continue(span=token.span)
        if token.kind == lx.NAME and token.text in RESERVED:
            raise ParseError(token)

        first = self.testlist()
        if self.tok.kind == lx.OP and self.tok.text in AUG_OPS:
            op = self.advance().text[:-1]
            self._check_target(first, allow_tuple=False)
            value = self.testlist()
            return AugAssign(first, op, value, span=_join(first.span, value.span))
        if self.tok.is_op("="):
            targets = [first]
            while self.tok.is_op("="):
                self.advance()
                targets.append(self.testlist())
            value = targets.pop()
            for target in targets:
                self._check_target(target)
            return Assign(targets, value, span=_join(first.span, value.span))
        return ExprStmt(first, span=first.span)

    def _check_target(self, node: Node, allow_tuple: bool = True):
        if isinstance(node, (Name, Subscript, Attribute)):
            return
        if allow_tuple and isinstance(node, (TupleDisplay, ListDisplay)):
            for elt in node.elts:
                if not isinstance(elt, Name):
                    raise ParseError(self._token_at(elt), "cannot assign to expression")
            return
        raise ParseError(self._token_at(node), "cannot assign to expression")

    def _token_at(self, node: Node) -> Token:
        for token in self.tokens:
            if (token.line, token.col) == (node.span[0], node.span[1]):
                return token
        return self.tok

    # Expressions

    def target_list(self) -> Node:
        first_token = self.tok
        names = [self.target_atom()]
        while self.tok.is_op(","):
            self.advance()
            if self.tok.is_keyword("in"):
                break
            names.append(self.target_atom())
        if len(names) == 1 and not self.tokens[self.pos - 1].is_op(","):
            return names[0]
        return TupleDisplay(names, span=_join(first_token.span, names[-1].span))

    def target_atom(self) -> Node:
        if self.tok.is_op("("):
            self.advance()
            node = self.target_list()
            self.expect_op(")")
            return node
        if not self.at_name():
            raise ParseError(self.tok)
        token = self.advance()
        return Name(token.text, span=token.span)

    def testlist(self) -> Node:
        first = self.test()
        if not self.tok.is_op(","):
            return first
        elts = [first]
        last_span = first.span
        while self.tok.is_op(","):
            comma = self.advance()
            last_span = comma.span
            if not self._starts_expression():
                break
            elts.append(self.test())
            last_span = elts[-1].span
        return TupleDisplay(elts, span=_join(first.span, last_span))

    def _starts_expression(self) -> bool:
        token = self.tok
        if token.kind in (lx.NUMBER, lx.STRING):
            return True
        if token.kind == lx.NAME:
            return token.text not in KEYWORDS or token.text in (
                "not", "True", "False", "None",
            )
        return token.is_op("(", "[", "{", "-", "+", "~")

    def test(self) -> Node:
        body = self.or_test()
        if self.tok.is_keyword("if"):
            self.advance()
            cond = self.or_test()
            self.expect_keyword("else")
            orelse = self.test()
            return IfExp(cond, body, orelse, span=_join(body.span, orelse.span))
        return body

    def or_test(self) -> Node:
        return self._bool_chain("or", self.and_test)

    def and_test(self) -> Node:
        return self._bool_chain("and", self.not_test)

    def _bool_chain(self, word: str, operand) -> Node:
        first = operand()
        values = [first]
        while self.tok.is_keyword(word):
            self.advance()
            values.append(operand())
        if len(values) == 1:
            return first
        return BoolOp(word, values, span=_join(first.span, values[-1].span))

    def not_test(self) -> Node:
        if self.tok.is_keyword("not"):
            start = self.advance()
            operand = self.not_test()
            return UnaryOp("not", operand, span=_join(start.span, operand.span))
        return self.comparison()

    def comparison(self) -> Node:
        left = self.arith()
        ops: List[str] = []
        comparators: List[Node] = []
        while True:
            token = self.tok
            if token.kind == lx.OP and token.text in COMPARE_OPS:
                self.advance()
                ops.append(token.text)
            elif token.is_keyword("in"):
                self.advance()
                ops.append("in")
            elif token.is_keyword("not") and self.peek().is_keyword("in"):
                self.advance()
                self.advance()
                ops.append("not in")
            elif token.is_keyword("is"):
                self.advance()
                if self.tok.is_keyword("not"):
                    self.advance()
                    ops.append("is not")
                else:
                    ops.append("is")
            else:
                break
            comparators.append(self.arith())
        if not ops:
            return left
        return Compare(left, ops, comparators, span=_join(left.span, comparators[-1].span))

    def _binary(self, ops: Tuple[str, ...], operand) -> Node:
        left = operand()
        while self.tok.kind == lx.OP and self.tok.text in ops:
            op = self.advance().text
            right = operand()
            left = BinOp(left, op, right, span=_join(left.span, right.span))
        return left

    def arith(self) -> Node:
        return self._binary(("+", "-"), self.term)

    def term(self) -> Node:
        return self._binary(("*", "/", "//", "%"), self.factor)

    def factor(self) -> Node:
        if self.tok.is_op("-", "+", "~"):
            start = self.advance()
            operand = self.factor()
            return UnaryOp(start.text, operand, span=_join(start.span, operand.span))
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.tok.is_op("**"):
            self.advance()
            exponent = self.factor()
            return BinOp(base, "**", exponent, span=_join(base.span, exponent.span))
        return base

    def primary(self) -> Node:
        node = self.atom()
        while True:
            if self.tok.is_op("("):
                node = self.call(node)
            elif self.tok.is_op("["):
                self.advance()
                index = self.subscript()
                end = self.expect_op("]")
                node = Subscript(node, index, span=_join(node.span, end.span))
            elif self.tok.is_op("."):
                self.advance()
                if self.tok.kind != lx.NAME:
                    raise ParseError(self.tok)
                attr = self.advance()
                node = Attribute(node, attr.text, span=_join(node.span, attr.span))
            else:
                return node

    def call(self, func: Node) -> Node:
        self.advance()
        args: List[Node] = []
        keywords: List[Keyword] = []
        while not self.tok.is_op(")"):
            if self.tok.kind == lx.NAME and self.peek().is_op("="):
                name = self.advance()
                self.advance()
                value = self.test()
                keywords.append(Keyword(name.text, value, span=_join(name.span, value.span)))
            else:
                if keywords:
                    raise ParseError(self.tok, "positional argument follows keyword argument")
                arg = self.test()
                if self.tok.is_keyword("for"):
                    arg = self.comprehension_tail(arg, arg.span)
                args.append(arg)
            if not self.tok.is_op(","):
                break
            self.advance()
        end = self.expect_op(")")
        return Call(func, args, keywords, span=_join(func.span, end.span))

    def subscript(self) -> Node:
        start = self.tok
        parts: List[Optional[Node]] = [None, None, None]
        idx = 0
        is_slice = False
        if not self.tok.is_op(":"):
            parts[0] = self.testlist()
        while self.tok.is_op(":") and idx < 2:
            is_slice = True
            self.advance()
            idx += 1
            if not self.tok.is_op(":", "]"):
                parts[idx] = self.test()
        if not is_slice:
            return parts[0]
        end = self.tokens[self.pos - 1]
        return Slice(parts[0], parts[1], parts[2], span=_join(start.span, end.span))

    def comprehension_tail(self, elt: Node, start: Span) -> ListComp:
        self.expect_keyword("for")
        target = self.target_list()
        self.expect_keyword("in")
        iterable = self.or_test()
        conditions = []
        while self.tok.is_keyword("if"):
            self.advance()
            conditions.append(self.or_test())
        last = conditions[-1].span if conditions else iterable.span
        if self.tok.is_keyword("for"):
            raise ParseError(self.tok)
        return ListComp(elt, target, iterable, conditions, span=_join(start, last))

    def atom(self) -> Node:
        token = self.tok
        if token.kind == lx.NAME:
            if token.text in ("True", "False", "None"):
                self.advance()
                value = {"True": True, "False": False, "None": None}[token.text]
                return Constant(value, span=token.span)
            if token.text in KEYWORDS:
                raise ParseError(token)
            self.advance()
            return Name(token.text, span=token.span)
        if token.kind == lx.NUMBER:
            self.advance()
            raw = token.text.replace("_", "")
            if any(ch in raw for ch in ".eE"):
                return Constant(float(raw), span=token.span)
            return Constant(int(raw), span=token.span)
        if token.kind == lx.STRING:
            return self.strings()
        if token.is_op("("):
            return self.paren()
        if token.is_op("["):
            return self.list_display()
        if token.is_op("{"):
            return self.map_display()
        raise ParseError(token)

    def paren(self) -> Node:
        start = self.advance()
        if self.tok.is_op(")"):
            end = self.advance()
            return TupleDisplay([], span=_join(start.span, end.span))
        first = self.test()
        if self.tok.is_keyword("for"):
            comp = self.comprehension_tail(first, start.span)
            end = self.expect_op(")")
            comp.span = _join(start.span, end.span)
            return comp
        if not self.tok.is_op(","):
            self.expect_op(")")
            return first
        elts = [first]
        while self.tok.is_op(","):
            self.advance()
            if self.tok.is_op(")"):
                break
            elts.append(self.test())
        end = self.expect_op(")")
        return TupleDisplay(elts, span=_join(start.span, end.span))

    def list_display(self) -> Node:
        start = self.advance()
        if self.tok.is_op("]"):
            end = self.advance()
            return ListDisplay([], span=_join(start.span, end.span))
        first = self.test()
        if self.tok.is_keyword("for"):
            comp = self.comprehension_tail(first, start.span)
            end = self.expect_op("]")
            comp.span = _join(start.span, end.span)
            return comp
        elts = [first]
        while self.tok.is_op(","):
            self.advance()
            if self.tok.is_op("]"):
                break
            elts.append(self.test())
        end = self.expect_op("]")
        return ListDisplay(elts, span=_join(start.span, end.span))

    def map_display(self) -> Node:
        start = self.advance()
        keys: List[Node] = []
        values: List[Node] = []
        while not self.tok.is_op("}"):
            keys.append(self.test())
            self.expect_op(":")
            values.append(self.test())
            if not self.tok.is_op(","):
                break
            self.advance()
        end = self.expect_op("}")
        return MapDisplay(keys, values, span=_join(start.span, end.span))

    def strings(self) -> Node:
        first = self.tok
        pieces: List[Tuple[str, str, Token]] = []
        while self.tok.kind == lx.STRING:
            token = self.advance()
            prefix, body = _split_string_token(token.text)
            if "b" in prefix:
                raise ParseError(token, "bytes literals are not supported")
            pieces.append((prefix, body, token))
        span = _join(first.span, pieces[-1][2].span)

        if not any("f" in prefix for prefix, _, _ in pieces):
            text = "".join(
                body if "r" in prefix else decode_escapes(body)
                for prefix, body, _ in pieces
            )
            return Constant(text, span=span)

        parts: List[Node] = []
        for prefix, body, token in pieces:
            if "f" in prefix:
                parts.extend(self.fstring_parts(body, "r" in prefix, token, span))
            else:
                text = body if "r" in prefix else decode_escapes(body)
                parts.append(Constant(text, span=span))
        merged: List[Node] = []
        for part in parts:
            if merged and isinstance(part, Constant) and isinstance(merged[-1], Constant):
                merged[-1] = Constant(merged[-1].value + part.value, span=span)
            else:
                merged.append(part)
        return FString(merged, span=span)

    def fstring_parts(self, body: str, raw: bool, token: Token, span: Span) -> List[Node]:
        parts: List[Node] = []
        literal: List[str] = []
        i = 0
        n = len(body)

        def flush():
            if literal:
                text = "".join(literal)
                parts.append(Constant(text if raw else decode_escapes(text), span=span))
                literal.clear()

        while i < n:
            c = body[i]
            if c == "{" and body.startswith("{{", i):
                literal.append("{")
                i += 2
                continue
            if c == "}" and body.startswith("}}", i):
                literal.append("}")
                i += 2
                continue
            if c == "}":
                raise ParseError(token, "f-string: single '}' is not allowed")
            if c != "{":
                literal.append(c)
                i += 1
                continue
            flush()
            depth = 0
            j = i + 1
            quote = None
            conversion_at = spec_at = -1
            while j < n:
                ch = body[j]
                if quote:
                    if ch == quote:
                        quote = None
                elif ch in "'\"":
                    quote = ch
                elif ch in "([{":
                    depth += 1
                elif ch in ")]":
                    depth -= 1
                elif ch == "}":
                    if depth == 0:
                        break
                    depth -= 1
                elif depth == 0 and ch == "!" and body[j + 1 : j + 2] != "=" and conversion_at < 0 and spec_at < 0:
                    conversion_at = j
                elif depth == 0 and ch == ":" and spec_at < 0:
                    spec_at = j
                j += 1
            if j >= n:
                raise ParseError(token, "f-string: expecting '}'")
            expr_end = min(x for x in (conversion_at, spec_at, j) if x >= 0)
            expr_text = body[i + 1 : expr_end]
            conversion = None
            if conversion_at >= 0:
                conversion = body[conversion_at + 1 : spec_at if spec_at >= 0 else j].strip()
                if conversion not in ("r", "s", "a"):
                    raise ParseError(token, "f-string: invalid conversion character")
            format_spec = body[spec_at + 1 : j] if spec_at >= 0 else None
            value = parse_expression_text(expr_text, token)
            for node in value.walk():
                node.span = span
            parts.append(FormattedValue(value, conversion, format_spec, span=span))
            i = j + 1
        flush()
        return parts


def parse_expression_text(text: str, token: Token) -> Node:
    """Parse the expression embedded in an f-string replacement field."""
    if not text.strip():
        raise ParseError(token, "f-string: empty expression not allowed")
    scanned = lx.scan("(" + text.strip() + ")")
    if scanned.diagnostic is not None:
        raise ParseError(token, "f-string: invalid syntax")
    inner = Parser(scanned.tokens, text)
    try:
        node = inner.test()
    except ParseError:
        raise ParseError(token, "f-string: invalid syntax")
    if inner.tok.kind not in (lx.NEWLINE, lx.END):
        raise ParseError(token, "f-string: invalid syntax")
    return node


def parse_block(block: Union[SourceBlock, str]) -> Union[Stmt, SyntaxDiagnostic]:
    """
    Parse one block into a single statement node.

    Args:
        block: SourceBlock or raw text

    Returns:
        The statement node, or a SyntaxDiagnostic; never raises for bad input
    """
    if isinstance(block, SourceBlock):
        text, offset = block.text, block.line_offset
    else:
        text, offset = block, 0
    text = text.replace("\r\n", "\n")

    scanned = lx.scan(text, line_offset=offset)
    if scanned.diagnostic is not None:
        return scanned.diagnostic
    if not text.strip():
        return make_diagnostic("empty block", text, 1, 1, line_offset=offset)

    parser = Parser(scanned.tokens, text)
    try:
        return parser.parse_block()
    except ParseError as error:
        token = error.token
        return make_diagnostic(
            error.reason,
            text,
            token.line,
            token.col,
            token.end_line if token.kind in SPANNING else token.line,
            token.end_col if token.kind in SPANNING else token.col,
            line_offset=offset,
        )
    except RecursionError:
        return make_diagnostic("too many nested parentheses", text, 1, 1, line_offset=offset)


def _indent_width(line: str) -> int:
    width = 0
    for ch in line:
        if ch == " ":
            width += 1
        elif ch == "\t":
            width = (width // lx.TAB_SIZE + 1) * lx.TAB_SIZE
        elif ch == "\f":
            continue
        else:
            break
    return width


def _is_clause_line(line: str) -> bool:
    stripped = line.strip()
    return stripped.startswith(("elif ", "elif(", "else:", "else :"))


def is_block_complete(partial_text: str) -> bool:
    """
    Decide whether ``partial_text`` can be finalized as one block.

    A simple statement is complete once its brackets and strings close. A
    compound statement needs a body and then a terminated blank line or a
    dedented line that is not an ``elif``/``else`` clause.
    """
    if not partial_text.strip():
        return False
    scanned = lx.scan(partial_text, partial=True)
    if scanned.incomplete:
        return False
    if scanned.diagnostic is not None or not scanned.logical_lines:
        return True

    header = scanned.logical_lines[0]
    if not header.is_header:
        return True

    base = header.indent
    need_body = True
    clause_lines = {header.start_line}
    for logical in scanned.logical_lines[1:]:
        if logical.indent > base:
            need_body = False
        elif logical.indent == base and logical.first.is_keyword("elif", "else"):
            if need_body:
                return True
            need_body = True
            clause_lines.add(logical.start_line)
        else:
            return True

    if need_body:
        return False

    physical = partial_text.split("\n")[:-1]
    covered = set()
    for logical in scanned.logical_lines:
        covered.update(range(logical.start_line, logical.end_line + 1))
    first_body = min(l.start_line for l in scanned.logical_lines if l.indent > base)
    for number, line in enumerate(physical, 1):
        if number > first_body and number not in covered and not line.strip():
            return True
    return False


def _strip_decorations(completion: str) -> List[str]:
    lines = completion.replace("\r\n", "\n").split("\n")
    cleaned: List[str] = []
    seen_code = False
    for line in lines:
        if line.startswith(">>> ") or line.rstrip() == ">>>":
            if seen_code:
                break
            line = line[4:]
        elif line.startswith("... "):
            line = line[4:]
        elif line.rstrip() == "...":
            if seen_code:
                break
            continue
        if line.strip():
            seen_code = True
        cleaned.append(line)
    return cleaned


def extract_block(completion: str) -> Union[SourceBlock, SyntaxDiagnostic]:
    """
    Take the first complete statement from an LLM completion.

    Leading ``>>> ``/``... `` decorations are stripped; a second ``>>>``
    prompt or a lone ``...`` line ends the block. Text after the block is
    discarded.

    Args:
        completion: Raw completion text

    Returns:
        SourceBlock, or a SyntaxDiagnostic if no statement is present
    """
    lines = _strip_decorations(completion)
    start = 0
    while start < len(lines) and not lines[start].strip():
        start += 1
    if start >= len(lines):
        return make_diagnostic("no statement found in completion", "", 1, 1)

    end = start
    while True:
        end += 1
        scanned = lx.scan("\n".join(lines[start:end]), partial=True)
        if scanned.diagnostic is not None or not scanned.incomplete or end >= len(lines):
            break

    text = "\n".join(lines[start:end])
    if scanned.diagnostic is not None or not scanned.logical_lines:
        return SourceBlock(text.rstrip("\n"))
    header = scanned.logical_lines[0]
    if not header.is_header:
        return SourceBlock(text.rstrip("\n"))

    base = _indent_width(lines[start])
    while end < len(lines):
        if lx.scan("\n".join(lines[start:end]), partial=True).incomplete:
            end += 1
            continue
        line = lines[end]
        if not line.strip():
            break
        width = _indent_width(line)
        if width < base or (width == base and not _is_clause_line(line)):
            break
        end += 1

    while end > start and not lines[end - 1].strip():
        end -= 1
    return SourceBlock("\n".join(lines[start:end]))


def _is_compound(text: str) -> bool:
    scanned = lx.scan(text, partial=True)
    if scanned.logical_lines:
        first = scanned.logical_lines[0]
        return first.is_header
    first_line = text.split("\n", 1)[0].split("#", 1)[0].rstrip()
    return "\n" in text and first_line.endswith(":")


def render_echo(text: str) -> List[str]:
    """
    Render a block the way the REPL echoes it.

    The first line gets ``>>> ``, continuation lines ``... ``; a compound
    block ends with a lone ``...`` line.
    """
    lines = text.split("\n")
    echo = [">>> " + lines[0]] + ["... " + line for line in lines[1:]]
    if _is_compound(text):
        echo.append("...")
    return echo


def strip_echo(lines: List[str]) -> str:
    """Inverse of ``render_echo``."""
    body = []
    for line in lines:
        if line == "...":
            continue
        if line.startswith((">>> ", "... ")):
            body.append(line[4:])
        else:
            body.append(line)
    return "\n".join(body)

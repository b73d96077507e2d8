"""
Tokenizer for MiniLang blocks.

Produces Python-style tokens (NAME, NUMBER, STRING, OP, COMMENT, NEWLINE,
INDENT, DEDENT, END). Indentation is measured relative to the first
significant line of the block, with tabs expanded to multiples of 8.
"""

import re
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

from .nodes import SourceBlock, SyntaxDiagnostic, make_diagnostic

NAME = "NAME"
NUMBER = "NUMBER"
STRING = "STRING"
OP = "OP"
COMMENT = "COMMENT"
NEWLINE = "NEWLINE"
INDENT = "INDENT"
DEDENT = "DEDENT"
END = "END"

TAB_SIZE = 8

OPERATORS = (
    "**=", "//=",
    "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "**", "//", "->",
    "+", "-", "*", "/", "%", "<", ">", "=", "(", ")", "[", "]", "{", "}",
    ",", ":", ".", ";", "~", "@", "&", "|", "^",
)
OPENERS = {"(": ")", "[": "]", "{": "}"}
CLOSERS = {")": "(", "]": "[", "}": "{"}
STRING_PREFIXES = frozenset(
    {"", "r", "u", "f", "b", "rf", "fr", "rb", "br"}
)

DIGITS = "0123456789"

NUMBER_RE = re.compile(
    r"(?:[0-9][0-9_]*(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?"
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int
    end_line: int
    end_col: int

    @property
    def span(self) -> Tuple[int, int, int, int]:
        return (self.line, self.col, self.end_line, self.end_col)

    def is_op(self, *texts: str) -> bool:
        return self.kind == OP and self.text in texts

    def is_keyword(self, *texts: str) -> bool:
        return self.kind == NAME and self.text in texts


@dataclass
class LogicalLine:
    """One logical source line: its first physical line, indent and edge tokens."""

    start_line: int
    end_line: int
    indent: int
    first: Token
    last: Token

    @property
    def is_header(self) -> bool:
        return (
            self.first.is_keyword("for", "while", "if", "elif", "else")
            and self.last.is_op(":")
        )


@dataclass
class Scan:
    tokens: List[Token] = field(default_factory=list)
    logical_lines: List[LogicalLine] = field(default_factory=list)
    incomplete: bool = False
    diagnostic: Optional[SyntaxDiagnostic] = None


class LexError(Exception):
    def __init__(self, diagnostic: SyntaxDiagnostic):
        super().__init__(diagnostic.message)
        self.diagnostic = diagnostic


class _Lexer:
    def __init__(self, text: str, partial: bool, line_offset: int = 0):
        self.text = text
        self.partial = partial
        self.line_offset = line_offset
        self.scan = Scan()
        self.indents: List[int] = []
        self.brackets: List[Token] = []
        self.line_starts = [0] + [i + 1 for i, c in enumerate(text) if c == "\n"]
        self.pending: List[Token] = []
        self.logical_indent = 0

    def loc(self, index: int) -> Tuple[int, int]:
        line = bisect_right(self.line_starts, index)
        return line, index - self.line_starts[line - 1] + 1

    def fail(self, reason: str, index: int, end: Optional[int] = None, keep_newline=True):
        line, col = self.loc(index)
        end_line, end_col = self.loc(end) if end is not None else (line, col)
        raise LexError(
            make_diagnostic(
                reason,
                self.text,
                line,
                col,
                end_line,
                end_col,
                keep_newline=keep_newline,
                line_offset=self.line_offset,
            )
        )

    def emit(self, kind: str, start: int, end: int) -> Token:
        line, col = self.loc(start)
        end_line, end_col = self.loc(end) if end > start else (line, col)
        token = Token(kind, self.text[start:end], line, col, end_line, end_col)
        self.scan.tokens.append(token)
        if kind not in (COMMENT, NEWLINE, INDENT, DEDENT, END):
            self.pending.append(token)
        return token

    def close_logical_line(self):
        if not self.pending:
            return
        first, last = self.pending[0], self.pending[-1]
        self.scan.logical_lines.append(
            LogicalLine(first.line, last.end_line, self.logical_indent, first, last)
        )
        self.pending = []

    def measure_indent(self, index: int) -> Tuple[int, int]:
        width = 0
        while index < len(self.text) and self.text[index] in " \t\f":
            if self.text[index] == "\t":
                width = (width // TAB_SIZE + 1) * TAB_SIZE
            elif self.text[index] == " ":
                width += 1
            index += 1
        return width, index

    def apply_indent(self, width: int, index: int):
        self.logical_indent = width
        if not self.indents:
            self.indents.append(width)
            return
        if width > self.indents[-1]:
            self.indents.append(width)
            self.emit(INDENT, index, index)
            return
        while len(self.indents) > 1 and width < self.indents[-1]:
            self.indents.pop()
            self.emit(DEDENT, index, index)
        if width != self.indents[-1]:
            self.fail("unindent does not match any outer indentation level", index)

    def run(self) -> Scan:
        text = self.text
        n = len(text)
        i = 0
        at_line_start = True
        while i < n:
            if at_line_start and not self.brackets:
                width, j = self.measure_indent(i)
                if j >= n or text[j] in "\n#":
                    if j < n and text[j] == "#":
                        end = text.find("\n", j)
                        end = n if end == -1 else end
                        self.emit(COMMENT, j, end)
                        j = end
                    i = j + 1 if j < n else j
                    continue
                self.apply_indent(width, j)
                i = j
                at_line_start = False
                continue

            c = text[i]
            if c == "\n":
                if not self.brackets and self.pending:
                    self.emit(NEWLINE, i, i + 1)
                    self.close_logical_line()
                i += 1
                at_line_start = not self.brackets
                continue
            if c in " \t\f\r":
                i += 1
                continue
            if c == "\\":
                if i + 1 < n and text[i + 1] == "\n":
                    i += 2
                    continue
                if i + 1 == n and self.partial:
                    self.scan.incomplete = True
                    return self.scan
                self.fail("unexpected character after line continuation character", i)
            if c == "#":
                end = text.find("\n", i)
                end = n if end == -1 else end
                self.emit(COMMENT, i, end)
                i = end
                continue

            string_end = self.try_string(i)
            if string_end is not None:
                if string_end < 0:
                    return self.scan
                i = string_end
                continue

            if c in DIGITS or (c == "." and i + 1 < n and text[i + 1] in DIGITS):
                match = NUMBER_RE.match(text, i)
                end = match.end()
                if end < n and ("_" + text[end]).isidentifier():
                    self.fail("invalid decimal literal", i, end + 1)
                self.emit(NUMBER, i, end)
                i = end
                continue

            if c.isidentifier():
                end = i + 1
                while end < n and ("_" + text[end]).isidentifier():
                    end += 1
                self.emit(NAME, i, end)
                i = end
                continue

            for op in OPERATORS:
                if text.startswith(op, i):
                    token = self.emit(OP, i, i + len(op))
                    self.track_bracket(token, i)
                    i += len(op)
                    break
            else:
                if c == "!":
                    self.fail("invalid syntax", i, i + 1)
                self.fail(f"invalid character '{c}' (U+{ord(c):04X})", i, i + 1)

        return self.finish()

    def track_bracket(self, token: Token, index: int):
        if token.text in OPENERS:
            self.brackets.append(token)
        elif token.text in CLOSERS:
            if not self.brackets:
                self.fail(f"unmatched '{token.text}'", index, index + 1)
            opener = self.brackets.pop()
            if OPENERS[opener.text] != token.text:
                self.fail(
                    f"closing parenthesis '{token.text}' does not match "
                    f"opening parenthesis '{opener.text}'",
                    index,
                    index + 1,
                )

    def try_string(self, i: int) -> Optional[int]:
        """Scan a string literal at ``i``; returns its end, -1 if incomplete, None if absent."""
        text = self.text
        n = len(text)
        j = i
        while j < n and j - i < 2 and text[j].isalpha():
            j += 1
        for cut in range(j, i - 1, -1):
            if cut < n and text[cut] in "'\"" and text[i:cut].lower() in STRING_PREFIXES:
                j = cut
                break
        else:
            return None

        quote = text[j]
        triple = text.startswith(quote * 3, j)
        k = j + (3 if triple else 1)
        while k < n:
            ch = text[k]
            if ch == "\\":
                k += 2
                continue
            if triple and text.startswith(quote * 3, k):
                self.emit(STRING, i, k + 3)
                return k + 3
            if not triple and ch == quote:
                self.emit(STRING, i, k + 1)
                return k + 1
            if not triple and ch == "\n":
                break
            k += 1

        if triple:
            if self.partial:
                self.scan.incomplete = True
                return -1
            line, _ = self.loc(n)
            self.fail(
                f"unterminated triple-quoted string literal (detected at line {line})",
                i,
                keep_newline=False,
            )
        line, _ = self.loc(i)
        self.fail(
            f"unterminated string literal (detected at line {line})",
            i,
            keep_newline=False,
        )
        return None

    def finish(self) -> Scan:
        n = len(self.text)
        if self.brackets:
            if self.partial:
                self.scan.incomplete = True
                self.close_logical_line()
                return self.scan
            opener = self.brackets[-1]
            index = self.line_starts[opener.line - 1] + opener.col - 1
            self.fail(f"'{opener.text}' was never closed", index, index + 1)
        if self.pending:
            self.emit(NEWLINE, n, n)
            self.close_logical_line()
        while len(self.indents) > 1:
            self.indents.pop()
            self.emit(DEDENT, n, n)
        self.emit(END, n, n)
        return self.scan


def scan(text: str, partial: bool = False, line_offset: int = 0) -> Scan:
    """
    Tokenize ``text`` and collect logical-line information.

    In partial mode an open bracket, a trailing backslash or an open
    triple-quoted string marks the scan incomplete instead of failing.
    Any other fault is stored on ``Scan.diagnostic``.
    """
    text = text.replace("\r\n", "\n")
    lexer = _Lexer(text, partial, line_offset)
    try:
        return lexer.run()
    except LexError as error:
        lexer.scan.diagnostic = error.diagnostic
        return lexer.scan


def tokenize(block: Union[SourceBlock, str]) -> Union[List[Token], SyntaxDiagnostic]:
    """
    Tokenize one block.

    Args:
        block: SourceBlock or raw text

    Returns:
        Token list ending with an END token, or the first SyntaxDiagnostic
    """
    if isinstance(block, SourceBlock):
        result = scan(block.text, line_offset=block.line_offset)
    else:
        result = scan(block)
    if result.diagnostic is not None:
        return result.diagnostic
    return result.tokens

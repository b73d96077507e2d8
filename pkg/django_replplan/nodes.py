"""
MiniLang source blocks, syntax tree nodes and syntax diagnostics.

A block is what one ``>>>`` prompt accepts: a single simple statement, or a
single compound statement together with its indented body.
"""

from dataclasses import dataclass, field, fields
from typing import Any, Iterator, List, Optional, Tuple

ORIGIN_LLM = "llm"
ORIGIN_DEMO = "demo"
ORIGIN_TEST = "test"

# (line, col, end_line, end_col); columns are 1-based, end_col exclusive.
Span = Tuple[int, int, int, int]
NO_SPAN: Span = (0, 0, 0, 0)


@dataclass(frozen=True)
class SourceBlock:
    text: str
    origin: str = ORIGIN_LLM
    line_offset: int = 0


@dataclass(frozen=True)
class SyntaxDiagnostic:
    """A syntax fault rendered the way a Python REPL would show it."""

    message: str
    span: Span
    reason: str = "invalid syntax"

    def __str__(self) -> str:
        return self.message


def make_diagnostic(
    reason: str,
    source: str,
    line: int,
    col: int,
    end_line: Optional[int] = None,
    end_col: Optional[int] = None,
    keep_newline: bool = True,
    line_offset: int = 0,
) -> SyntaxDiagnostic:
    """
    Build a diagnostic whose message is ``SyntaxError('<reason>', (...))``.

    Args:
        reason: Short message, e.g. ``invalid syntax``
        source: Full block text, used to quote the offending line
        line: 1-based line of the fault within the block
        col: 1-based column of the fault
        end_line: Line where the faulty range ends (defaults to ``line``)
        end_col: Column where the faulty range ends (defaults to ``col``)
        keep_newline: Quote the line with its trailing newline
        line_offset: Added to the span lines, not to the rendered message

    Returns:
        SyntaxDiagnostic
    """
    end_line = line if end_line is None else end_line
    end_col = col if end_col is None else end_col
    lines = source.split("\n")
    text = lines[line - 1] if 0 < line <= len(lines) else ""
    if keep_newline:
        text += "\n"
    details = ("<unknown>", line, col, text, end_line, end_col)
    message = f"SyntaxError({reason!r}, {details!r})"
    span = (line + line_offset, col, end_line + line_offset, end_col)
    return SyntaxDiagnostic(message=message, span=span, reason=reason)


@dataclass
class Node:
    span: Span = field(default=NO_SPAN, kw_only=True, compare=False)

    def children(self) -> List["Node"]:
        found: List[Node] = []
        for item in fields(self):
            if item.name == "span":
                continue
            value = getattr(self, item.name)
            if isinstance(value, Node):
                found.append(value)
            elif isinstance(value, list):
                found.extend(v for v in value if isinstance(v, Node))
        return found

    def walk(self) -> Iterator["Node"]:
        yield self
        for child in self.children():
            yield from child.walk()


@dataclass
class Stmt(Node):
    comment: Optional[str] = field(default=None, kw_only=True, compare=False)


# Statements


@dataclass
class Assign(Stmt):
    targets: List[Node]
    value: Node


@dataclass
class AugAssign(Stmt):
    target: Node
    op: str
    value: Node


@dataclass
class ExprStmt(Stmt):
    value: Node


@dataclass
class For(Stmt):
    target: Node
    iter: Node
    body: List[Stmt]


@dataclass
class While(Stmt):
    test: Node
    body: List[Stmt]


@dataclass
class If(Stmt):
    test: Node
    body: List[Stmt]
    orelse: List[Stmt]
    is_elif: bool = False


@dataclass
class Break(Stmt):
    pass


@dataclass
class Continue(Stmt):
    pass


@dataclass
class Pass(Stmt):
    pass


@dataclass
class Comment(Stmt):
    text: str


# Expressions


@dataclass
class Name(Node):
    id: str


@dataclass
class Constant(Node):
    value: Any


@dataclass
class FormattedValue(Node):
    value: Node
    conversion: Optional[str] = None
    format_spec: Optional[str] = None


@dataclass
class FString(Node):
    parts: List[Node]


@dataclass
class ListDisplay(Node):
    elts: List[Node]


@dataclass
class TupleDisplay(Node):
    elts: List[Node]


@dataclass
class MapDisplay(Node):
    keys: List[Node]
    values: List[Node]


@dataclass
class ListComp(Node):
    elt: Node
    target: Node
    iter: Node
    conditions: List[Node]


@dataclass
class BinOp(Node):
    left: Node
    op: str
    right: Node


@dataclass
class UnaryOp(Node):
    op: str
    operand: Node


@dataclass
class BoolOp(Node):
    op: str
    values: List[Node]


@dataclass
class Compare(Node):
    left: Node
    ops: List[str]
    comparators: List[Node]


@dataclass
class Keyword(Node):
    name: str
    value: Node


@dataclass
class Call(Node):
    func: Node
    args: List[Node]
    keywords: List[Keyword] = field(default_factory=list)


@dataclass
class Attribute(Node):
    value: Node
    attr: str


@dataclass
class Slice(Node):
    lower: Optional[Node]
    upper: Optional[Node]
    step: Optional[Node]


@dataclass
class Subscript(Node):
    value: Node
    index: Node


@dataclass
class IfExp(Node):
    test: Node
    body: Node
    orelse: Node


COMPOUND_KEYWORDS = frozenset({"for", "while", "if"})

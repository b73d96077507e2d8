"""
Tree-walking evaluator for MiniLang with replay-cache execution.

A block is always evaluated from its start. Every context-sensitive call
(``act``, ``answer``, ``get_args``, ``get_obs``, ``print``, ``print_page``
and calls to LLM-REPL functions) is numbered per callable name in order of
evaluation. When the ledger already holds a result for ``(name, index)``
the call returns it without any side effect; the first unresolved call
suspends the block with an ``Effect`` for the kernel to resolve. The
kernel records the result and evaluates the block again.
"""

import logging
import math
from typing import Any, Dict, List, Optional

from . import nodes as ast
from .builtins_table import BUILTINS, MAX_SEQUENCE_LENGTH, PRIMITIVES, builtin_call, call_method
from .values import (
    ACT,
    ANSWER,
    COMPLETED,
    ECHO,
    FAILED,
    GET_ARGS,
    GET_OBS,
    PRINT,
    SPAWN,
    SUSPENDED,
    BuiltinFn,
    CallLedger,
    Effect,
    ExecOutcome,
    ReplFn,
    Scope,
    render_value,
    type_name,
)

logger = logging.getLogger(__name__)

DEFAULT_STEP_BUDGET = 100_000
CALL = "call"
NON_CALL = "non-call"

# Largest integer power result, in bits, a block may compute.
MAX_POWER_BITS = 100_000


class REPLNameError(NameError):
    """Non-call use of a name that is neither bound nor a builtin."""

    def __init__(self, name: str):
        super().__init__(f"name '{name}' not defined.")
        self.name = name


class RuntimeBudgetExceeded(RuntimeError):
    pass


class SpawnRequest:
    """Marker returned by ``resolve_name`` for an unbound name in call position."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __eq__(self, other):
        return isinstance(other, SpawnRequest) and other.name == self.name

    def __repr__(self):
        return f"SpawnRequest({self.name!r})"


class _Suspend(Exception):
    def __init__(self, effect: Effect):
        super().__init__(effect.describe())
        self.effect = effect


class _Break(Exception):
    pass


class _Continue(Exception):
    pass


RUNTIME_ERRORS = (
    ArithmeticError,
    AttributeError,
    LookupError,
    MemoryError,
    NameError,
    RuntimeError,
    TypeError,
    ValueError,
)


def resolve_name(name: str, scope: Any, position: str = NON_CALL) -> Any:
    """
    Look up ``name`` in a REPL scope.

    Args:
        name: Identifier, never a keyword
        scope: ``Scope`` or a bindings mapping
        position: ``call`` when the name is being called, else ``non-call``

    Returns:
        The bound value, a ``BuiltinFn`` handle for builtins and primitives,
        or a ``SpawnRequest`` when an unbound name is called

    Raises:
        REPLNameError: unbound name outside call position
    """
    bindings = scope.bindings if isinstance(scope, Scope) else scope
    if name in bindings:
        return bindings[name]
    if name in BUILTINS or name in PRIMITIVES:
        return BuiltinFn(name)
    if position == CALL:
        return SpawnRequest(name)
    raise REPLNameError(name)


def format_error(error: BaseException) -> str:
    """Render a runtime fault the way the REPL shows it, e.g. ``KeyError('x')``."""
    if isinstance(error, RecursionError):
        return "RecursionError('maximum recursion depth exceeded')"
    return repr(error)


class _Run:
    """State of one evaluation pass over a block."""

    def __init__(self, bindings: Dict[str, Any], ledger: CallLedger, step_budget: int):
        self.bindings = bindings
        self.ledger = ledger
        self.step_budget = step_budget
        self.steps = 0
        self.counters: Dict[str, int] = {}
        self.stdout: List[str] = []
        self.prints: List[tuple] = []
        self.frames: List[Dict[str, Any]] = []
        self.echo = ""

    def tick(self):
        self.steps += 1
        if self.steps > self.step_budget:
            raise RuntimeBudgetExceeded(
                f"block exceeded {self.step_budget} evaluation steps"
            )

    # Names

    def lookup(self, name: str, position: str = NON_CALL) -> Any:
        for frame in reversed(self.frames):
            if name in frame:
                return frame[name]
        return resolve_name(name, self.bindings, position)

    def is_unbound(self, name: str) -> bool:
        if any(name in frame for frame in self.frames):
            return False
        return name not in self.bindings and name not in BUILTINS and name not in PRIMITIVES

    def bind(self, name: str, value: Any):
        if self.frames:
            self.frames[-1][name] = value
        else:
            self.bindings[name] = value

    # Context-sensitive calls

    def context_call(self, name: str, make_effect) -> Any:
        index = self.counters.get(name, 0) + 1
        self.counters[name] = index
        hit = self.ledger.lookup(name, index)
        if hit is not None:
            return hit.value
        raise _Suspend(make_effect(index))

    def emit_print(self, args: List[Any], kwargs: Dict[str, Any]) -> None:
        for key in kwargs:
            if key not in ("sep", "end"):
                raise TypeError(f"'{key}' is an invalid keyword argument for print()")
        index = self.counters.get(PRINT, 0) + 1
        self.counters[PRINT] = index
        if self.ledger.lookup(PRINT, index) is not None:
            return None
        sep = kwargs.get("sep", " ")
        end = kwargs.get("end", "\n")
        sep = " " if sep is None else sep
        end = "\n" if end is None else end
        text = sep.join(render_value(arg, PRINT) for arg in args) + end
        self.stdout.append(text)
        self.prints.append((index, text))
        return None

    def call_primitive(self, name: str, args: List[Any], kwargs: Dict[str, Any]) -> Any:
        if name == "print":
            return self.emit_print(args, kwargs)
        if kwargs:
            key = next(iter(kwargs))
            raise TypeError(f"{name}() got an unexpected keyword argument '{key}'")
        if name == "act":
            if len(args) != 1:
                raise TypeError(f"act() takes exactly one argument ({len(args)} given)")
            return self.context_call(
                ACT, lambda i: Effect(ACT, ACT, i, payload=args[0])
            )
        if name == "answer":
            if len(args) > 1:
                raise TypeError(f"answer() takes at most 1 argument ({len(args)} given)")
            value = args[0] if args else None
            return self.context_call(
                ANSWER, lambda i: Effect(ANSWER, ANSWER, i, payload=value)
            )
        if args:
            raise TypeError(f"{name}() takes no arguments ({len(args)} given)")
        if name == "get_args":
            return self.context_call(GET_ARGS, lambda i: Effect(GET_ARGS, GET_ARGS, i))
        return self.context_call(name, lambda i: Effect(GET_OBS, name, i))

    def call_repl(self, name: str, args: List[Any], kwargs: Dict[str, Any], bound: bool) -> Any:
        if kwargs:
            raise TypeError(f"LLM-REPL function {name}() takes positional arguments only")
        return self.context_call(
            name,
            lambda i: Effect(SPAWN, name, i, args=tuple(args), bound=bound),
        )


class Interpreter:
    """
    Evaluates parsed blocks against a REPL scope and call ledger.

    The interpreter holds no per-REPL state, so one instance can serve every
    REPL of an episode.
    """

    def __init__(self, step_budget: int = DEFAULT_STEP_BUDGET):
        self.step_budget = step_budget

    def evaluate_block(self, node: ast.Stmt, scope: Scope, ledger: CallLedger) -> ExecOutcome:
        """
        Evaluate a block from its start.

        The ledger is only read. Fresh ``print`` calls are returned on the
        outcome and must be recorded with ``commit_prints`` before the block
        is evaluated again. The scope is updated only when the block
        completes.

        Args:
            node: Parsed block
            scope: Scope holding the block-start bindings
            ledger: Results already resolved for this block

        Returns:
            ExecOutcome (completed, suspended or failed)
        """
        run = _Run(scope.snapshot(), ledger, self.step_budget)
        try:
            self.exec_stmt(run, node, top_level=True)
        except _Suspend as suspend:
            return self._outcome(run, SUSPENDED, effect=suspend.effect)
        except _Break:
            return self._outcome(run, FAILED, diag="SyntaxError(\"'break' outside loop\")")
        except _Continue:
            return self._outcome(
                run, FAILED, diag="SyntaxError(\"'continue' not properly in loop\")"
            )
        except RUNTIME_ERRORS as error:
            logger.debug(f"Block failed: {format_error(error)}")
            return self._outcome(run, FAILED, diag=format_error(error))

        scope.commit(run.bindings)
        return self._outcome(run, COMPLETED, echo=run.echo)

    @staticmethod
    def _outcome(run: _Run, kind: str, **fields) -> ExecOutcome:
        return ExecOutcome(
            kind=kind,
            stdout="".join(run.stdout),
            steps=run.steps,
            prints=list(run.prints),
            **fields,
        )

    # Statements

    def exec_stmt(self, run: _Run, node: ast.Stmt, top_level: bool = False):
        run.tick()
        if isinstance(node, ast.ExprStmt):
            value = self.eval(run, node.value)
            if top_level:
                run.echo = render_value(value, ECHO)
            return
        getattr(self, f"visit_{type(node).__name__}")(run, node)

    def exec_body(self, run: _Run, body: List[ast.Stmt]):
        for stmt in body:
            self.exec_stmt(run, stmt)

    def visit_Assign(self, run: _Run, node: ast.Assign):
        value = self.eval(run, node.value)
        for target in node.targets:
            self.assign(run, target, value)

    def visit_AugAssign(self, run: _Run, node: ast.AugAssign):
        op = node.op[:-1]
        target = node.target
        if isinstance(target, ast.Name):
            current = run.lookup(target.id)
            value = self.eval(run, node.value)
            if op == "+" and isinstance(current, list):
                current.extend(self.iterate(value))
                value = current
            else:
                value = self.binary(op, current, value)
            run.bind(target.id, value)
        elif isinstance(target, ast.Subscript):
            container = self.eval(run, target.value)
            index = self.eval(run, target.index)
            updated = self.binary(op, container[index], self.eval(run, node.value))
            container[index] = updated
        else:
            self.assign(run, target, None)

    def visit_For(self, run: _Run, node: ast.For):
        iterable = self.eval(run, node.iter)
        for item in self.iterate(iterable):
            run.tick()
            self.assign(run, node.target, item)
            try:
                self.exec_body(run, node.body)
            except _Break:
                break
            except _Continue:
                continue

    def visit_While(self, run: _Run, node: ast.While):
        while self.eval(run, node.test):
            run.tick()
            try:
                self.exec_body(run, node.body)
            except _Break:
                break
            except _Continue:
                continue

    def visit_If(self, run: _Run, node: ast.If):
        if self.eval(run, node.test):
            self.exec_body(run, node.body)
        else:
            self.exec_body(run, node.orelse)

    def visit_Break(self, run: _Run, node: ast.Break):
        raise _Break()

    def visit_Continue(self, run: _Run, node: ast.Continue):
        raise _Continue()

    def visit_Pass(self, run: _Run, node: ast.Pass):
        pass

    def visit_Comment(self, run: _Run, node: ast.Comment):
        pass

    # Targets

    def assign(self, run: _Run, target: ast.Node, value: Any):
        if isinstance(target, ast.Name):
            run.bind(target.id, value)
        elif isinstance(target, (ast.TupleDisplay, ast.ListDisplay)):
            self.unpack(run, target.elts, value)
        elif isinstance(target, ast.Subscript):
            container = self.eval(run, target.value)
            index = self.eval(run, target.index)
            container[index] = value
        elif isinstance(target, ast.Attribute):
            owner = self.eval_receiver(run, target.value)
            raise AttributeError(
                f"'{type_name(owner)}' object has no attribute '{target.attr}'"
            )
        else:
            raise TypeError(f"cannot assign to {type(target).__name__}")

    def unpack(self, run: _Run, targets: List[ast.Node], value: Any):
        if isinstance(value, (int, float, bool)) or value is None or isinstance(
            value, (BuiltinFn, ReplFn)
        ):
            raise TypeError(f"cannot unpack non-iterable {type_name(value)} object")
        items = list(self.iterate(value))
        if len(items) > len(targets):
            raise ValueError(f"too many values to unpack (expected {len(targets)})")
        if len(items) < len(targets):
            raise ValueError(
                f"not enough values to unpack (expected {len(targets)}, got {len(items)})"
            )
        for target, item in zip(targets, items):
            self.assign(run, target, item)

    @staticmethod
    def iterate(value: Any):
        if isinstance(value, range) and len(value) > MAX_SEQUENCE_LENGTH:
            raise MemoryError("range too large to iterate")
        if isinstance(value, (BuiltinFn, ReplFn)):
            raise TypeError(f"'{type_name(value)}' object is not iterable")
        return iter(value)

    # Expressions

    def eval(self, run: _Run, node: ast.Node) -> Any:
        run.tick()
        return getattr(self, f"visit_{type(node).__name__}")(run, node)

    def visit_Constant(self, run: _Run, node: ast.Constant):
        return node.value

    def visit_Name(self, run: _Run, node: ast.Name):
        return run.lookup(node.id)

    def visit_FString(self, run: _Run, node: ast.FString):
        pieces = []
        for part in node.parts:
            if isinstance(part, ast.Constant):
                pieces.append(part.value)
            else:
                pieces.append(self.visit_FormattedValue(run, part))
        return "".join(pieces)

    def visit_FormattedValue(self, run: _Run, node: ast.FormattedValue):
        value = self.eval(run, node.value)
        if node.conversion == "r":
            value = repr(value)
        elif node.conversion == "s":
            value = str(value)
        elif node.conversion == "a":
            value = ascii(value)
        if isinstance(value, (BuiltinFn, ReplFn)):
            value = repr(value)
        return format(value, node.format_spec or "")

    def visit_ListDisplay(self, run: _Run, node: ast.ListDisplay):
        return [self.eval(run, elt) for elt in node.elts]

    def visit_TupleDisplay(self, run: _Run, node: ast.TupleDisplay):
        return tuple(self.eval(run, elt) for elt in node.elts)

    def visit_MapDisplay(self, run: _Run, node: ast.MapDisplay):
        result = {}
        for key_node, value_node in zip(node.keys, node.values):
            key = self.eval(run, key_node)
            result[key] = self.eval(run, value_node)
        return result

    def visit_ListComp(self, run: _Run, node: ast.ListComp):
        iterable = self.eval(run, node.iter)
        result = []
        run.frames.append({})
        try:
            for item in self.iterate(iterable):
                run.tick()
                self.assign(run, node.target, item)
                if all(self.eval(run, cond) for cond in node.conditions):
                    result.append(self.eval(run, node.elt))
        finally:
            run.frames.pop()
        return result

    def visit_IfExp(self, run: _Run, node: ast.IfExp):
        if self.eval(run, node.test):
            return self.eval(run, node.body)
        return self.eval(run, node.orelse)

    def visit_UnaryOp(self, run: _Run, node: ast.UnaryOp):
        operand = self.eval(run, node.operand)
        if node.op == "not":
            return not operand
        if node.op == "-":
            return -operand
        if node.op == "+":
            return +operand
        return ~operand

    def visit_BoolOp(self, run: _Run, node: ast.BoolOp):
        value = None
        for operand in node.values:
            value = self.eval(run, operand)
            if node.op == "and" and not value:
                return value
            if node.op == "or" and value:
                return value
        return value

    def visit_BinOp(self, run: _Run, node: ast.BinOp):
        left = self.eval(run, node.left)
        right = self.eval(run, node.right)
        return self.binary(node.op, left, right)

    @staticmethod
    def binary(op: str, left: Any, right: Any) -> Any:
        if op == "*":
            _check_repeat(left, right)
            _check_repeat(right, left)
            return left * right
        if op == "+":
            if isinstance(left, (str, list, tuple)) and isinstance(right, type(left)):
                if len(left) + len(right) > MAX_SEQUENCE_LENGTH:
                    raise MemoryError("sequence too large")
            return left + right
        if op == "-":
            return left - right
        if op == "/":
            return left / right
        if op == "//":
            return left // right
        if op == "%":
            return left % right
        if op == "**":
            _check_power(left, right)
            return left**right
        if op == "&":
            return left & right
        if op == "|":
            return left | right
        if op == "^":
            return left ^ right
        raise TypeError(f"unsupported operator {op!r}")

    def visit_Compare(self, run: _Run, node: ast.Compare):
        left = self.eval(run, node.left)
        for op, comparator in zip(node.ops, node.comparators):
            right = self.eval(run, comparator)
            if not _compare(op, left, right):
                return False
            left = right
        return True

    def visit_Attribute(self, run: _Run, node: ast.Attribute):
        owner = self.eval_receiver(run, node.value)
        raise AttributeError(
            f"'{type_name(owner)}' object attribute '{node.attr}' can only be called"
        )

    def visit_Subscript(self, run: _Run, node: ast.Subscript):
        container = self.eval(run, node.value)
        index = self.eval(run, node.index)
        if isinstance(container, (BuiltinFn, ReplFn)):
            raise TypeError(f"'{type_name(container)}' object is not subscriptable")
        return container[index]

    def visit_Slice(self, run: _Run, node: ast.Slice):
        return slice(
            self.eval(run, node.lower) if node.lower is not None else None,
            self.eval(run, node.upper) if node.upper is not None else None,
            self.eval(run, node.step) if node.step is not None else None,
        )

    def eval_receiver(self, run: _Run, node: ast.Node) -> Any:
        """Evaluate the object of an attribute access; unbound names stand for REPLs."""
        if isinstance(node, ast.Name) and run.is_unbound(node.id):
            return ReplFn(node.id)
        return self.eval(run, node)

    def visit_Call(self, run: _Run, node: ast.Call):
        func = node.func
        if isinstance(func, ast.Attribute):
            receiver = self.eval_receiver(run, func.value)
            args, kwargs = self.call_arguments(run, node)
            if isinstance(receiver, (ReplFn, BuiltinFn)):
                raise AttributeError(
                    f"'{type_name(receiver)}' object has no attribute '{func.attr}'"
                )
            return call_method(receiver, func.attr, args, kwargs)

        if isinstance(func, ast.Name):
            callee = run.lookup(func.id, CALL)
        else:
            callee = self.eval(run, func)
        args, kwargs = self.call_arguments(run, node)

        if isinstance(callee, SpawnRequest):
            return run.call_repl(callee.name, args, kwargs, bound=False)
        if isinstance(callee, ReplFn):
            return run.call_repl(callee.name, args, kwargs, bound=True)
        if isinstance(callee, BuiltinFn):
            if callee.name in PRIMITIVES:
                return run.call_primitive(callee.name, args, kwargs)
            return builtin_call(callee.name, args, kwargs)
        raise TypeError(f"'{type_name(callee)}' object is not callable")

    def call_arguments(self, run: _Run, node: ast.Call):
        args = [self.eval(run, arg) for arg in node.args]
        kwargs = {}
        for keyword in node.keywords:
            kwargs[keyword.name] = self.eval(run, keyword.value)
        return args, kwargs


def _check_repeat(sequence: Any, count: Any):
    if isinstance(sequence, (str, list, tuple)) and isinstance(count, int):
        if len(sequence) * max(count, 0) > MAX_SEQUENCE_LENGTH:
            raise MemoryError("sequence too large")


def _check_power(base: Any, exponent: Any):
    if isinstance(base, int) and isinstance(exponent, int) and exponent > 0 and abs(base) > 1:
        if exponent * math.log2(abs(base)) > MAX_POWER_BITS:
            raise OverflowError("integer power result too large")


def _compare(op: str, left: Any, right: Any) -> bool:
    if op == "<":
        return left < right
    if op == ">":
        return left > right
    if op == "==":
        return left == right
    if op == "!=":
        return left != right
    if op == "<=":
        return left <= right
    if op == ">=":
        return left >= right
    if op == "in":
        return left in right
    if op == "not in":
        return left not in right
    if op == "is":
        return left is right
    if op == "is not":
        return left is not right
    raise TypeError(f"unsupported comparison {op!r}")

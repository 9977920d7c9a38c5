"""Abstract syntax tree for the supported Verilog subset.

Expression nodes are plain dataclasses; every node carries the source
location of its first token.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ipsim.errors import SourceLocation


@dataclass(frozen=True)
class Expr:
    loc: SourceLocation


@dataclass(frozen=True)
class Ident(Expr):
    name: str


@dataclass(frozen=True)
class Number(Expr):
    text: str
    value: int | None  # None when the literal contains x/z bits


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Ternary(Expr):
    cond: Expr
    true: Expr
    false: Expr


@dataclass(frozen=True)
class Concat(Expr):
    parts: tuple[Expr, ...]


@dataclass(frozen=True)
class Repeat(Expr):
    count: Expr
    parts: tuple[Expr, ...]


@dataclass(frozen=True)
class BitSelect(Expr):
    base: Expr
    index: Expr


@dataclass(frozen=True)
class PartSelect(Expr):
    base: Expr
    msb: Expr
    lsb: Expr


@dataclass
class Range:
    """[msb:lsb] declaration bounds; resolved holds concrete ints after
    parameter resolution at flatten time."""

    msb: Expr
    lsb: Expr
    resolved: tuple[int, int] | None = None


@dataclass
class Port:
    name: str
    direction: str  # input | output | inout
    width: Range | None
    loc: SourceLocation
    is_reg: bool = False


@dataclass
class NetDecl:
    name: str
    kind: str  # wire | reg
    width: Range | None
    loc: SourceLocation


@dataclass
class ParamDecl:
    name: str
    value: Expr
    local: bool
    loc: SourceLocation


@dataclass
class ContinuousAssign:
    lhs: Expr
    rhs: Expr
    loc: SourceLocation


@dataclass
class SensItem:
    edge: str | None  # posedge | negedge | None
    signal: str


@dataclass
class AssignStmt:
    lhs: Expr
    rhs: Expr
    blocking: bool
    loc: SourceLocation


@dataclass
class IfStmt:
    cond: Expr
    then_body: list
    else_body: list
    loc: SourceLocation


@dataclass
class CaseItem:
    labels: tuple[Expr, ...] | None  # None marks the default arm
    body: list


@dataclass
class CaseStmt:
    subject: Expr
    items: list[CaseItem]
    loc: SourceLocation


Statement = AssignStmt | IfStmt | CaseStmt


@dataclass
class AlwaysBlock:
    sensitivity: list[SensItem] | None  # None means @(*)
    body: list
    loc: SourceLocation


@dataclass
class Instance:
    module_name: str
    instance_name: str
    param_overrides: list[tuple[str | None, Expr]]
    connections: list[tuple[str | None, Expr | None]]  # (port or None for positional, expr)
    loc: SourceLocation


@dataclass
class GateInstance:
    gate: str  # and|nand|or|nor|xor|xnor|not|buf
    instance_name: str | None
    terminals: list[Expr]  # output(s) first, inputs last per gate type
    loc: SourceLocation


@dataclass
class ModuleDecl:
    name: str
    ports: list[Port]
    params: list[ParamDecl]
    nets: list[NetDecl]
    assigns: list[ContinuousAssign]
    always_blocks: list[AlwaysBlock]
    instances: list[Instance]
    gates: list[GateInstance]
    loc: SourceLocation
    # Emission order of concurrent items, as (kind, index) pairs.
    item_order: list[tuple[str, int]] = field(default_factory=list)

    def port(self, name: str) -> Port | None:
        for p in self.ports:
            if p.name == name:
                return p
        return None


@dataclass
class Ast:
    modules: list[ModuleDecl]

    def module(self, name: str) -> ModuleDecl | None:
        for m in self.modules:
            if m.name == name:
                return m
        return None

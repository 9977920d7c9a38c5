"""Hierarchy elaboration.

Inlines every instance into a single flat module. Signals from an
instance subtree get dot-joined path prefixes (u1.u2.sig), parameters
are resolved to integer constants, and primitive gate instances are
lowered to equivalent continuous assignments. Port connections to
simple identifiers become pure renames; compound connections become
glue assignments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ipsim.errors import (
    ElaborationError,
    PortArityMismatch,
    RecursiveInstantiation,
    UnknownModule,
    UnresolvedIdentifier,
)
from ipsim.frontend import nodes as n

GATE_FOLD_OP = {
    "and": "&", "nand": "&",
    "or": "|", "nor": "|",
    "xor": "^", "xnor": "^",
}
GATE_INVERTS = frozenset(["nand", "nor", "xnor", "not"])


@dataclass
class FlatPort:
    name: str
    direction: str
    width: tuple[int, int] | None


@dataclass
class FlatModule:
    """A fully elaborated design: no instances, no parameters."""

    name: str
    ports: list[FlatPort] = field(default_factory=list)
    widths: dict[str, tuple[int, int] | None] = field(default_factory=dict)
    assigns: list[n.ContinuousAssign] = field(default_factory=list)
    always_blocks: list[n.AlwaysBlock] = field(default_factory=list)

    def port_directions(self) -> dict[str, str]:
        return {p.name: p.direction for p in self.ports}


def const_eval(expr: n.Expr, env: dict[str, int]) -> int:
    """Evaluate a constant expression over integer parameters."""
    if isinstance(expr, n.Number):
        if expr.value is None:
            raise ElaborationError(f"x/z digits in constant expression at {expr.loc}")
        return expr.value
    if isinstance(expr, n.Ident):
        if expr.name not in env:
            raise UnresolvedIdentifier(expr.name, expr.loc)
        return env[expr.name]
    if isinstance(expr, n.Unary):
        v = const_eval(expr.operand, env)
        if expr.op == "-":
            return -v
        if expr.op == "~":
            return ~v
        if expr.op == "!":
            return int(v == 0)
        raise ElaborationError(f"{expr.loc}: reduction operator in constant expression")
    if isinstance(expr, n.Binary):
        a = const_eval(expr.left, env)
        b = const_eval(expr.right, env)
        try:
            return _const_binop(expr.op, a, b)
        except ZeroDivisionError:
            raise ElaborationError(f"{expr.loc}: division by zero in constant expression")
    if isinstance(expr, n.Ternary):
        return const_eval(expr.true, env) if const_eval(expr.cond, env) else const_eval(expr.false, env)
    raise ElaborationError(f"{expr.loc}: unsupported constant expression form")


def _const_binop(op: str, a: int, b: int) -> int:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        q = abs(a) // abs(b)
        return -q if (a < 0) != (b < 0) else q
    if op == "%":
        r = abs(a) % abs(b)
        return -r if a < 0 else r
    if op in ("<<", "<<<"):
        return a << b
    if op in (">>", ">>>"):
        return a >> b
    if op == "<":
        return int(a < b)
    if op == "<=":
        return int(a <= b)
    if op == ">":
        return int(a > b)
    if op == ">=":
        return int(a >= b)
    if op == "==":
        return int(a == b)
    if op == "!=":
        return int(a != b)
    if op == "&":
        return a & b
    if op == "|":
        return a | b
    if op in ("^",):
        return a ^ b
    if op in ("~^", "^~"):
        return ~(a ^ b)
    if op == "&&":
        return int(bool(a) and bool(b))
    if op == "||":
        return int(bool(a) or bool(b))
    raise ElaborationError(f"operator {op!r} not valid in constant expressions")


def _eval_params(mod: n.ModuleDecl, overrides: dict[str, int]) -> dict[str, int]:
    env: dict[str, int] = {}
    for p in mod.params:
        if not p.local and p.name in overrides:
            env[p.name] = overrides[p.name]
        else:
            env[p.name] = const_eval(p.value, env)
    unknown = set(overrides) - {p.name for p in mod.params if not p.local}
    if unknown:
        raise ElaborationError(f"module {mod.name!r} has no parameter(s) {sorted(unknown)}")
    return env


def _resolve_width(width: n.Range | None, env: dict[str, int]) -> tuple[int, int] | None:
    if width is None:
        return None
    return (const_eval(width.msb, env), const_eval(width.lsb, env))


class _Flattener:
    def __init__(self, ast: n.Ast):
        self.ast = ast
        self.flat: FlatModule | None = None

    def run(self, top: str) -> FlatModule:
        mod = self.ast.module(top)
        if mod is None:
            raise UnknownModule(top)
        env = _eval_params(mod, {})
        self.flat = FlatModule(name=top)
        for port in mod.ports:
            self.flat.ports.append(FlatPort(port.name, port.direction, _resolve_width(port.width, env)))
        self._inline(mod, prefix="", env=env, alias={}, stack=[top])
        return self.flat

    def _inline(self, mod: n.ModuleDecl, prefix: str, env: dict[str, int],
                alias: dict[str, str], stack: list[str]):
        flat = self.flat
        for port in mod.ports:
            if port.name not in alias:
                flat.widths[prefix + port.name] = _resolve_width(port.width, env)
        for net in mod.nets:
            if net.name not in alias:
                flat.widths[prefix + net.name] = _resolve_width(net.width, env)

        def sub(expr: n.Expr) -> n.Expr:
            return self._sub_expr(expr, prefix, env, alias)

        for assign in mod.assigns:
            flat.assigns.append(n.ContinuousAssign(sub(assign.lhs), sub(assign.rhs), assign.loc))
        for blk in mod.always_blocks:
            sens = None
            if blk.sensitivity is not None:
                sens = [n.SensItem(s.edge, alias.get(s.signal, prefix + s.signal)) for s in blk.sensitivity]
            flat.always_blocks.append(n.AlwaysBlock(sens, self._sub_stmts(blk.body, prefix, env, alias), blk.loc))
        for gate in mod.gates:
            self._lower_gate(gate, sub)
        for inst in mod.instances:
            self._inline_instance(mod, inst, prefix, env, alias, stack)

    def _lower_gate(self, gate: n.GateInstance, sub):
        loc = gate.loc
        terms = [sub(t) for t in gate.terminals]
        if gate.gate in ("not", "buf"):
            if len(terms) < 2:
                raise ElaborationError(f"{loc}: {gate.gate} gate needs at least 2 terminals")
            src = terms[-1]
            for out in terms[:-1]:
                rhs = n.Unary(loc, "~", src) if gate.gate == "not" else src
                self.flat.assigns.append(n.ContinuousAssign(out, rhs, loc))
            return
        if len(terms) < 3:
            raise ElaborationError(f"{loc}: {gate.gate} gate needs at least 3 terminals")
        op = GATE_FOLD_OP[gate.gate]
        rhs = terms[1]
        for t in terms[2:]:
            rhs = n.Binary(loc, op, rhs, t)
        if gate.gate in GATE_INVERTS:
            rhs = n.Unary(loc, "~", rhs)
        self.flat.assigns.append(n.ContinuousAssign(terms[0], rhs, loc))

    def _inline_instance(self, parent: n.ModuleDecl, inst: n.Instance, prefix: str,
                         env: dict[str, int], alias: dict[str, str], stack: list[str]):
        child = self.ast.module(inst.module_name)
        if child is None:
            raise UnknownModule(inst.module_name)
        if inst.module_name in stack:
            raise RecursiveInstantiation(stack + [inst.module_name])

        overrides: dict[str, int] = {}
        settable = [p for p in child.params if not p.local]
        positional_overrides = [ov for ov in inst.param_overrides if ov[0] is None]
        if positional_overrides and len(positional_overrides) != len(inst.param_overrides):
            raise ElaborationError(f"{inst.loc}: mixed positional and named parameter overrides")
        if positional_overrides:
            if len(positional_overrides) > len(settable):
                raise ElaborationError(f"{inst.loc}: too many parameter overrides for {child.name!r}")
            for p, (_, expr) in zip(settable, positional_overrides):
                overrides[p.name] = const_eval(self._sub_expr(expr, prefix, env, alias), {})
        else:
            for name, expr in inst.param_overrides:
                overrides[name] = const_eval(self._sub_expr(expr, prefix, env, alias), {})
        child_env = _eval_params(child, overrides)

        conns = inst.connections
        port_map: dict[str, n.Expr | None] = {}
        if conns and all(name is None for name, _ in conns):
            if len(conns) != len(child.ports):
                raise PortArityMismatch(f"{prefix}{inst.instance_name}", len(child.ports), len(conns))
            for port, (_, expr) in zip(child.ports, conns):
                port_map[port.name] = expr
        else:
            port_names = {p.name for p in child.ports}
            for name, expr in conns:
                if name is None:
                    raise ElaborationError(f"{inst.loc}: mixed positional and named connections")
                if name not in port_names:
                    raise ElaborationError(
                        f"{inst.loc}: module {child.name!r} has no port {name!r}")
                if name in port_map:
                    raise ElaborationError(f"{inst.loc}: port {name!r} connected twice")
                port_map[name] = expr

        child_prefix = f"{prefix}{inst.instance_name}."
        child_alias: dict[str, str] = {}
        for port in child.ports:
            expr = port_map.get(port.name)
            if expr is None:
                continue  # unconnected ports keep their prefixed net, undriven
            sub_conn = self._sub_expr(expr, prefix, env, alias)
            if isinstance(sub_conn, n.Ident):
                child_alias[port.name] = sub_conn.name
                continue
            inner = n.Ident(inst.loc, child_prefix + port.name)
            if port.direction == "output":
                self.flat.assigns.append(n.ContinuousAssign(sub_conn, inner, inst.loc))
            else:
                self.flat.assigns.append(n.ContinuousAssign(inner, sub_conn, inst.loc))
        self._inline(child, child_prefix, child_env, child_alias, stack + [inst.module_name])

    def _sub_expr(self, expr: n.Expr, prefix: str, env: dict[str, int],
                  alias: dict[str, str]) -> n.Expr:
        sub = lambda e: self._sub_expr(e, prefix, env, alias)
        if isinstance(expr, n.Ident):
            if expr.name in env:
                return n.Number(expr.loc, str(env[expr.name]), env[expr.name])
            if expr.name in alias:
                return n.Ident(expr.loc, alias[expr.name])
            return n.Ident(expr.loc, prefix + expr.name)
        if isinstance(expr, n.Number):
            return expr
        if isinstance(expr, n.Unary):
            return n.Unary(expr.loc, expr.op, sub(expr.operand))
        if isinstance(expr, n.Binary):
            return n.Binary(expr.loc, expr.op, sub(expr.left), sub(expr.right))
        if isinstance(expr, n.Ternary):
            return n.Ternary(expr.loc, sub(expr.cond), sub(expr.true), sub(expr.false))
        if isinstance(expr, n.Concat):
            return n.Concat(expr.loc, tuple(sub(p) for p in expr.parts))
        if isinstance(expr, n.Repeat):
            count = const_eval(expr.count, env)
            return n.Repeat(expr.loc, n.Number(expr.loc, str(count), count), tuple(sub(p) for p in expr.parts))
        if isinstance(expr, n.BitSelect):
            return n.BitSelect(expr.loc, sub(expr.base), sub(expr.index))
        if isinstance(expr, n.PartSelect):
            # Bounds must elaborate to constants so slices can be compared.
            msb = const_eval(expr.msb, env)
            lsb = const_eval(expr.lsb, env)
            return n.PartSelect(expr.loc, sub(expr.base),
                                n.Number(expr.loc, str(msb), msb), n.Number(expr.loc, str(lsb), lsb))
        raise ElaborationError(f"unexpected expression node {type(expr).__name__}")

    def _sub_stmts(self, stmts: list, prefix: str, env: dict[str, int], alias: dict[str, str]) -> list:
        sub = lambda e: self._sub_expr(e, prefix, env, alias)
        out = []
        for stmt in stmts:
            if isinstance(stmt, n.AssignStmt):
                out.append(n.AssignStmt(sub(stmt.lhs), sub(stmt.rhs), stmt.blocking, stmt.loc))
            elif isinstance(stmt, n.IfStmt):
                out.append(n.IfStmt(sub(stmt.cond),
                                    self._sub_stmts(stmt.then_body, prefix, env, alias),
                                    self._sub_stmts(stmt.else_body, prefix, env, alias), stmt.loc))
            elif isinstance(stmt, n.CaseStmt):
                items = []
                for item in stmt.items:
                    labels = None if item.labels is None else tuple(sub(l) for l in item.labels)
                    items.append(n.CaseItem(labels, self._sub_stmts(item.body, prefix, env, alias)))
                out.append(n.CaseStmt(sub(stmt.subject), items, stmt.loc))
            else:
                raise ElaborationError(f"unexpected statement node {type(stmt).__name__}")
        return out


def infer_top(ast: n.Ast) -> str:
    """The top module is the unique module never instantiated by another."""
    if not ast.modules:
        raise ElaborationError("no modules in source")
    instantiated = set()
    for mod in ast.modules:
        for inst in mod.instances:
            instantiated.add(inst.module_name)
    tops = [m.name for m in ast.modules if m.name not in instantiated]
    if len(tops) == 1:
        return tops[0]
    if not tops:
        raise ElaborationError("no top module: every module is instantiated somewhere")
    raise ElaborationError(f"ambiguous top module, candidates: {sorted(tops)}")


def flatten_hierarchy(ast: n.Ast, top: str | None = None) -> FlatModule:
    """Elaborate an Ast into a single FlatModule rooted at `top`."""
    return _Flattener(ast).run(top if top is not None else infer_top(ast))

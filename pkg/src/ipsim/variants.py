"""Seeded source-level rewrites that preserve the data-flow graph.

Used to grow labeled positive pairs from a handful of seed designs.
Each transform keeps ports and the trimmed graph intact by construction:
renames touch only non-port identifiers, reordering permutes concurrent
items, assign splitting routes a subexpression through a fresh wire
that later trims away, operand swaps touch only commutative operators,
and wrapping adds a pass-through top module.
"""

from __future__ import annotations

import numpy as np

from ipsim.frontend import nodes as n
from ipsim.frontend.emit import emit
from ipsim.frontend.flatten import infer_top
from ipsim.frontend.lexer import KEYWORDS, UNSUPPORTED_KEYWORDS
from ipsim.frontend.parser import parse
from ipsim.frontend.preprocess import preprocess_text

COMMUTATIVE = frozenset(["&", "|", "^", "~^", "^~", "+", "*", "==", "!=", "&&", "||"])


def _loc():
    from ipsim.errors import SourceLocation
    return SourceLocation("<variant>", 0, 0)


def _module_names(mod: n.ModuleDecl) -> set[str]:
    names = {p.name for p in mod.ports}
    names.update(d.name for d in mod.nets)
    names.update(p.name for p in mod.params)
    names.update(i.instance_name for i in mod.instances)
    names.update(g.instance_name for g in mod.gates if g.instance_name)
    return names


def _fresh_name(base: str, taken: set[str]) -> str:
    name = base
    bump = 0
    while name in taken or name in KEYWORDS or name in UNSUPPORTED_KEYWORDS:
        bump += 1
        name = f"{base}_{bump}"
    taken.add(name)
    return name


def _map_expr(expr: n.Expr, mapping: dict[str, str]) -> n.Expr:
    if isinstance(expr, n.Ident):
        if expr.name in mapping:
            return n.Ident(expr.loc, mapping[expr.name])
        return expr
    if isinstance(expr, n.Number):
        return expr
    if isinstance(expr, n.Unary):
        return n.Unary(expr.loc, expr.op, _map_expr(expr.operand, mapping))
    if isinstance(expr, n.Binary):
        return n.Binary(expr.loc, expr.op, _map_expr(expr.left, mapping), _map_expr(expr.right, mapping))
    if isinstance(expr, n.Ternary):
        return n.Ternary(expr.loc, _map_expr(expr.cond, mapping),
                         _map_expr(expr.true, mapping), _map_expr(expr.false, mapping))
    if isinstance(expr, n.Concat):
        return n.Concat(expr.loc, tuple(_map_expr(p, mapping) for p in expr.parts))
    if isinstance(expr, n.Repeat):
        return n.Repeat(expr.loc, _map_expr(expr.count, mapping),
                        tuple(_map_expr(p, mapping) for p in expr.parts))
    if isinstance(expr, n.BitSelect):
        return n.BitSelect(expr.loc, _map_expr(expr.base, mapping), _map_expr(expr.index, mapping))
    if isinstance(expr, n.PartSelect):
        return n.PartSelect(expr.loc, _map_expr(expr.base, mapping),
                            _map_expr(expr.msb, mapping), _map_expr(expr.lsb, mapping))
    raise TypeError(type(expr).__name__)


def _map_range(width: n.Range | None, mapping: dict[str, str]) -> n.Range | None:
    if width is None:
        return None
    return n.Range(_map_expr(width.msb, mapping), _map_expr(width.lsb, mapping))


def _map_stmts(stmts: list, mapping: dict[str, str]) -> list:
    out = []
    for stmt in stmts:
        if isinstance(stmt, n.AssignStmt):
            out.append(n.AssignStmt(_map_expr(stmt.lhs, mapping), _map_expr(stmt.rhs, mapping),
                                    stmt.blocking, stmt.loc))
        elif isinstance(stmt, n.IfStmt):
            out.append(n.IfStmt(_map_expr(stmt.cond, mapping),
                                _map_stmts(stmt.then_body, mapping),
                                _map_stmts(stmt.else_body, mapping), stmt.loc))
        elif isinstance(stmt, n.CaseStmt):
            items = [n.CaseItem(None if it.labels is None else tuple(_map_expr(l, mapping) for l in it.labels),
                                _map_stmts(it.body, mapping)) for it in stmt.items]
            out.append(n.CaseStmt(_map_expr(stmt.subject, mapping), items, stmt.loc))
        else:
            out.append(stmt)
    return out


def rename_signals(mod: n.ModuleDecl, rng: np.random.Generator):
    """Give every non-port declared name a fresh machine name."""
    port_names = {p.name for p in mod.ports}
    old = sorted(name for name in
                 ({d.name for d in mod.nets} | {p.name for p in mod.params})
                 if name not in port_names)
    taken = _module_names(mod)
    numbers = rng.permutation(len(old) * 3 + 7)[:len(old)]
    mapping = {}
    for name, num in zip(old, numbers):
        mapping[name] = _fresh_name(f"n{int(num):03d}", taken)
    inst_names = sorted(i.instance_name for i in mod.instances)
    inst_numbers = rng.permutation(len(inst_names) * 3 + 7)[:len(inst_names)]
    inst_map = {}
    for name, num in zip(inst_names, inst_numbers):
        inst_map[name] = _fresh_name(f"g{int(num):03d}", taken)
    _apply_rename(mod, mapping, inst_map)


def _apply_rename(mod: n.ModuleDecl, mapping: dict[str, str], inst_map: dict[str, str]):
    for i, net in enumerate(mod.nets):
        mod.nets[i] = n.NetDecl(mapping.get(net.name, net.name), net.kind,
                                _map_range(net.width, mapping), net.loc)
    for i, p in enumerate(mod.params):
        mod.params[i] = n.ParamDecl(mapping.get(p.name, p.name), _map_expr(p.value, mapping),
                                    p.local, p.loc)
    for port in mod.ports:
        port.width = _map_range(port.width, mapping)
    for i, a in enumerate(mod.assigns):
        mod.assigns[i] = n.ContinuousAssign(_map_expr(a.lhs, mapping), _map_expr(a.rhs, mapping), a.loc)
    for blk in mod.always_blocks:
        if blk.sensitivity is not None:
            blk.sensitivity = [n.SensItem(s.edge, mapping.get(s.signal, s.signal))
                               for s in blk.sensitivity]
        blk.body = _map_stmts(blk.body, mapping)
    for i, inst in enumerate(mod.instances):
        conns = [(name, None if e is None else _map_expr(e, mapping)) for name, e in inst.connections]
        overrides = [(name, _map_expr(e, mapping)) for name, e in inst.param_overrides]
        mod.instances[i] = n.Instance(inst.module_name, inst_map.get(inst.instance_name, inst.instance_name),
                                      overrides, conns, inst.loc)
    for i, gate in enumerate(mod.gates):
        name = inst_map.get(gate.instance_name, gate.instance_name) if gate.instance_name else None
        mod.gates[i] = n.GateInstance(gate.gate, name,
                                      [_map_expr(t, mapping) for t in gate.terminals], gate.loc)


def reorder_items(mod: n.ModuleDecl, rng: np.random.Generator):
    """Permute concurrent module items and named connection lists."""
    perm = rng.permutation(len(mod.item_order))
    mod.item_order = [mod.item_order[i] for i in perm]
    for i, inst in enumerate(mod.instances):
        if inst.connections and all(name is not None for name, _ in inst.connections):
            cperm = rng.permutation(len(inst.connections))
            conns = [inst.connections[j] for j in cperm]
            mod.instances[i] = n.Instance(inst.module_name, inst.instance_name,
                                          inst.param_overrides, conns, inst.loc)


def swap_commutative(mod: n.ModuleDecl, rng: np.random.Generator):
    """Flip operands of commutative binary operators at random."""

    def swap(expr: n.Expr) -> n.Expr:
        if isinstance(expr, n.Binary):
            left = swap(expr.left)
            right = swap(expr.right)
            if expr.op in COMMUTATIVE and rng.random() < 0.5:
                left, right = right, left
            return n.Binary(expr.loc, expr.op, left, right)
        if isinstance(expr, n.Unary):
            return n.Unary(expr.loc, expr.op, swap(expr.operand))
        if isinstance(expr, n.Ternary):
            return n.Ternary(expr.loc, swap(expr.cond), swap(expr.true), swap(expr.false))
        if isinstance(expr, n.Concat):
            return n.Concat(expr.loc, tuple(swap(p) for p in expr.parts))
        if isinstance(expr, n.Repeat):
            return n.Repeat(expr.loc, expr.count, tuple(swap(p) for p in expr.parts))
        if isinstance(expr, n.BitSelect):
            return n.BitSelect(expr.loc, swap(expr.base), swap(expr.index))
        if isinstance(expr, n.PartSelect):
            return n.PartSelect(expr.loc, swap(expr.base), expr.msb, expr.lsb)
        return expr

    def swap_stmts(stmts: list) -> list:
        out = []
        for stmt in stmts:
            if isinstance(stmt, n.AssignStmt):
                out.append(n.AssignStmt(stmt.lhs, swap(stmt.rhs), stmt.blocking, stmt.loc))
            elif isinstance(stmt, n.IfStmt):
                out.append(n.IfStmt(swap(stmt.cond), swap_stmts(stmt.then_body),
                                    swap_stmts(stmt.else_body), stmt.loc))
            elif isinstance(stmt, n.CaseStmt):
                items = [n.CaseItem(it.labels, swap_stmts(it.body)) for it in stmt.items]
                out.append(n.CaseStmt(swap(stmt.subject), items, stmt.loc))
            else:
                out.append(stmt)
        return out

    for i, a in enumerate(mod.assigns):
        mod.assigns[i] = n.ContinuousAssign(a.lhs, swap(a.rhs), a.loc)
    for blk in mod.always_blocks:
        blk.body = swap_stmts(blk.body)


def _subexpressions(expr: n.Expr) -> list[n.Expr]:
    found = []
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, (n.Binary, n.Unary, n.Ternary, n.Concat)):
            found.append(e)
        if isinstance(e, n.Unary):
            stack.append(e.operand)
        elif isinstance(e, n.Binary):
            stack.extend((e.left, e.right))
        elif isinstance(e, n.Ternary):
            stack.extend((e.cond, e.true, e.false))
        elif isinstance(e, n.Concat):
            stack.extend(e.parts)
    return found


def _replace_once(expr: n.Expr, target: n.Expr, repl: n.Expr) -> n.Expr:
    if expr is target:
        return repl
    if isinstance(expr, n.Unary):
        return n.Unary(expr.loc, expr.op, _replace_once(expr.operand, target, repl))
    if isinstance(expr, n.Binary):
        return n.Binary(expr.loc, expr.op, _replace_once(expr.left, target, repl),
                        _replace_once(expr.right, target, repl))
    if isinstance(expr, n.Ternary):
        return n.Ternary(expr.loc, _replace_once(expr.cond, target, repl),
                         _replace_once(expr.true, target, repl),
                         _replace_once(expr.false, target, repl))
    if isinstance(expr, n.Concat):
        return n.Concat(expr.loc, tuple(_replace_once(p, target, repl) for p in expr.parts))
    return expr


def split_assign(mod: n.ModuleDecl, rng: np.random.Generator) -> bool:
    """Route one random subexpression of a continuous assign through a
    fresh wire. Returns False when the module has nothing to split."""
    candidates = [i for i, a in enumerate(mod.assigns)
                  if _subexpressions(a.rhs)]
    if not candidates:
        return False
    pick = candidates[int(rng.integers(0, len(candidates)))]
    assign = mod.assigns[pick]
    subs = _subexpressions(assign.rhs)
    target = subs[int(rng.integers(0, len(subs)))]
    taken = _module_names(mod)
    wire = _fresh_name(f"t{int(rng.integers(0, 900)):03d}", taken)
    width = None
    if isinstance(assign.lhs, n.Ident):
        for port in mod.ports:
            if port.name == assign.lhs.name:
                width = port.width
        for net in mod.nets:
            if net.name == assign.lhs.name:
                width = net.width
    loc = _loc()
    mod.nets.append(n.NetDecl(wire, "wire", width, loc))
    mod.item_order.append(("net", len(mod.nets) - 1))
    mod.assigns.append(n.ContinuousAssign(n.Ident(loc, wire), target, loc))
    mod.item_order.append(("assign", len(mod.assigns) - 1))
    mod.assigns[pick] = n.ContinuousAssign(
        assign.lhs, _replace_once(assign.rhs, target, n.Ident(loc, wire)), assign.loc)
    return True


def wrap_top(ast: n.Ast, tag: str) -> n.Ast:
    """Add a pass-through top module around the current top."""
    top = ast.module(infer_top(ast))
    loc = _loc()
    taken = {m.name for m in ast.modules}
    name = _fresh_name(f"{top.name}_{tag}", taken)
    ports = [n.Port(p.name, p.direction, p.width, loc, is_reg=False) for p in top.ports]
    params = [n.ParamDecl(p.name, p.value, p.local, loc) for p in top.params]
    overrides = [(p.name, n.Ident(loc, p.name)) for p in top.params if not p.local]
    conns = [(p.name, n.Ident(loc, p.name)) for p in top.ports]
    inst = n.Instance(top.name, "u_core", overrides, conns, loc)
    wrapper = n.ModuleDecl(name=name, ports=ports, params=params, nets=[], assigns=[],
                           always_blocks=[], instances=[inst], gates=[], loc=loc,
                           item_order=[("instance", 0)])
    return n.Ast(ast.modules + [wrapper])


def make_variant(text: str, seed: int, index: int, path: str = "<seed>") -> str:
    """One deterministic rewrite of a source file; same (seed, index)
    always yields the same text."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))
    ast = parse(preprocess_text(text, path), path)
    for mod in ast.modules:
        rename_signals(mod, rng)
        swap_commutative(mod, rng)
        for _ in range(int(rng.integers(0, 3))):
            split_assign(mod, rng)
        reorder_items(mod, rng)
    if rng.random() < 0.4:
        ast = wrap_top(ast, f"w{index}")
    return emit(ast)


def synthesize_variants(text: str, count: int, seed: int, path: str = "<seed>") -> list[str]:
    return [make_variant(text, seed, i, path) for i in range(count)]

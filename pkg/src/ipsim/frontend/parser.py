"""Recursive-descent parser for the supported Verilog subset.

Constructs outside the subset raise UnsupportedConstruct (not a syntax
error) so corpus scans can skip such files. Operator precedence follows
the Verilog standard.
"""

from __future__ import annotations

from ipsim.errors import SourceLocation, UnresolvedIdentifier, UnsupportedConstruct, VerilogSyntaxError
from ipsim.frontend.lexer import GATE_KEYWORDS, UNSUPPORTED_KEYWORDS, Token, parse_number, tokenize
from ipsim.frontend import nodes as n

UNARY_OPS = frozenset(["~", "!", "&", "|", "^", "~&", "~|", "~^", "^~", "+", "-"])

BINARY_PREC = {
    "*": 11, "/": 11, "%": 11,
    "+": 10, "-": 10,
    "<<": 9, ">>": 9, "<<<": 9, ">>>": 9,
    "<": 8, "<=": 8, ">": 8, ">=": 8,
    "==": 7, "!=": 7, "===": 7, "!==": 7,
    "&": 6,
    "^": 5, "^~": 5, "~^": 5,
    "|": 4,
    "&&": 3,
    "||": 2,
}


class _Parser:
    def __init__(self, tokens: list[Token], path: str):
        self.tokens = tokens
        self.path = path
        self.pos = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def check(self, text: str) -> bool:
        return self.cur.text == text and self.cur.kind in ("op", "keyword")

    def accept(self, text: str) -> Token | None:
        if self.check(text):
            return self.advance()
        return None

    def expect(self, text: str) -> Token:
        if not self.check(text):
            self.error(repr(text))
        return self.advance()

    def expect_ident(self) -> Token:
        if self.cur.kind != "ident":
            self.error("an identifier")
        return self.advance()

    def error(self, *expected: str):
        got = self.cur.text if self.cur.kind != "eof" else "end of input"
        raise VerilogSyntaxError(self.cur.loc, expected, got)

    def unsupported(self, construct: str, loc: SourceLocation | None = None):
        raise UnsupportedConstruct(loc or self.cur.loc, construct)

    # --- top level ---------------------------------------------------

    def parse_source(self) -> n.Ast:
        modules = []
        while self.cur.kind != "eof":
            if self.check("module"):
                modules.append(self.parse_module())
            elif self.cur.kind == "keyword" and self.cur.text in UNSUPPORTED_KEYWORDS:
                self.unsupported(self.cur.text)
            else:
                self.error("'module'")
        ast = n.Ast(modules)
        for mod in modules:
            _resolve_module(mod, self.path)
        return ast

    def parse_module(self) -> n.ModuleDecl:
        loc = self.expect("module").loc
        name = self.expect_ident().text
        mod = n.ModuleDecl(
            name=name, ports=[], params=[], nets=[], assigns=[],
            always_blocks=[], instances=[], gates=[], loc=loc,
        )
        if self.accept("#"):
            self.parse_param_header(mod)
        header_names: list[str] = []
        if self.accept("("):
            if not self.accept(")"):
                if self.cur.text in ("input", "output", "inout"):
                    self.parse_ansi_ports(mod)
                else:
                    header_names.append(self.expect_ident().text)
                    while self.accept(","):
                        header_names.append(self.expect_ident().text)
                self.expect(")")
        self.expect(";")
        for pname in header_names:
            # Direction/width filled by body declarations.
            mod.ports.append(n.Port(pname, "", None, loc))
        while not self.check("endmodule"):
            if self.cur.kind == "eof":
                self.error("'endmodule'")
            self.parse_item(mod)
        self.expect("endmodule")
        for port in mod.ports:
            if not port.direction:
                raise VerilogSyntaxError(port.loc, (f"a direction declaration for port {port.name!r}",), "none")
        return mod

    def parse_param_header(self, mod: n.ModuleDecl):
        self.expect("(")
        self.expect("parameter")
        while True:
            if self.check("["):
                self.parse_range()  # parameter range is metadata we don't keep
            tok = self.expect_ident()
            self.expect("=")
            mod.params.append(n.ParamDecl(tok.text, self.parse_expr(), local=False, loc=tok.loc))
            if not self.accept(","):
                break
            self.accept("parameter")
        self.expect(")")

    def parse_ansi_ports(self, mod: n.ModuleDecl):
        direction = None
        is_reg = False
        width = None
        while True:
            if self.cur.text in ("input", "output", "inout"):
                direction = self.advance().text
                is_reg = False
                width = None
                if self.check("reg"):
                    self.advance()
                    is_reg = True
                elif self.check("wire"):
                    self.advance()
                if self.check("["):
                    width = self.parse_range()
            if direction is None:
                self.error("'input'", "'output'", "'inout'")
            tok = self.expect_ident()
            mod.ports.append(n.Port(tok.text, direction, width, tok.loc, is_reg=is_reg))
            if not self.accept(","):
                break

    def parse_range(self) -> n.Range:
        self.expect("[")
        msb = self.parse_expr()
        self.expect(":")
        lsb = self.parse_expr()
        self.expect("]")
        return n.Range(msb, lsb)

    # --- module items ------------------------------------------------

    def parse_item(self, mod: n.ModuleDecl):
        tok = self.cur
        if tok.text in ("input", "output", "inout"):
            self.parse_port_decl(mod)
        elif tok.text in ("wire", "reg"):
            self.parse_net_decl(mod)
        elif tok.text in ("parameter", "localparam"):
            self.parse_param_decl(mod)
        elif tok.text == "assign":
            self.parse_assign(mod)
        elif tok.text == "always":
            self.parse_always(mod)
        elif tok.kind == "keyword" and tok.text in GATE_KEYWORDS:
            self.parse_gate(mod)
        elif tok.kind == "keyword" and tok.text in UNSUPPORTED_KEYWORDS:
            self.unsupported(tok.text)
        elif tok.kind == "ident":
            self.parse_instance(mod)
        elif tok.kind == "system":
            self.unsupported(f"system task {tok.text}")
        else:
            self.error("a module item")

    def parse_port_decl(self, mod: n.ModuleDecl):
        direction = self.advance().text
        is_reg = False
        if self.check("reg"):
            self.advance()
            is_reg = True
        elif self.check("wire"):
            self.advance()
        width = self.parse_range() if self.check("[") else None
        while True:
            tok = self.expect_ident()
            port = mod.port(tok.text)
            if port is None:
                mod.ports.append(n.Port(tok.text, direction, width, tok.loc, is_reg=is_reg))
            elif port.direction:
                raise VerilogSyntaxError(tok.loc, (f"a single declaration of port {tok.text!r}",), "redeclaration")
            else:
                port.direction = direction
                port.width = width
                port.is_reg = is_reg
            if not self.accept(","):
                break
        self.expect(";")

    def parse_net_decl(self, mod: n.ModuleDecl):
        kind = self.advance().text
        width = self.parse_range() if self.check("[") else None
        while True:
            tok = self.expect_ident()
            if self.check("["):
                self.unsupported("memory array declaration", tok.loc)
            mod.nets.append(n.NetDecl(tok.text, kind, width, tok.loc))
            mod.item_order.append(("net", len(mod.nets) - 1))
            if self.accept("="):
                rhs = self.parse_expr()
                mod.assigns.append(n.ContinuousAssign(n.Ident(tok.loc, tok.text), rhs, tok.loc))
                mod.item_order.append(("assign", len(mod.assigns) - 1))
            if not self.accept(","):
                break
        self.expect(";")

    def parse_param_decl(self, mod: n.ModuleDecl):
        local = self.advance().text == "localparam"
        if self.check("["):
            self.parse_range()
        while True:
            tok = self.expect_ident()
            self.expect("=")
            mod.params.append(n.ParamDecl(tok.text, self.parse_expr(), local=local, loc=tok.loc))
            if not self.accept(","):
                break
        self.expect(";")

    def parse_assign(self, mod: n.ModuleDecl):
        self.expect("assign")
        if self.check("#"):
            self.unsupported("delay control")
        while True:
            lhs = self.parse_lvalue()
            self.expect("=")
            rhs = self.parse_expr()
            mod.assigns.append(n.ContinuousAssign(lhs, rhs, lhs.loc))
            mod.item_order.append(("assign", len(mod.assigns) - 1))
            if not self.accept(","):
                break
        self.expect(";")

    def parse_always(self, mod: n.ModuleDecl):
        loc = self.expect("always").loc
        self.expect("@")
        sens = self.parse_sensitivity()
        body = self.parse_stmt()
        mod.always_blocks.append(n.AlwaysBlock(sens, body, loc))
        mod.item_order.append(("always", len(mod.always_blocks) - 1))

    def parse_sensitivity(self) -> list[n.SensItem] | None:
        if self.accept("*"):
            return None
        self.expect("(")
        if self.accept("*"):
            self.expect(")")
            return None
        items = []
        while True:
            edge = None
            if self.cur.text in ("posedge", "negedge"):
                edge = self.advance().text
            items.append(n.SensItem(edge, self.expect_ident().text))
            if not (self.accept("or") or self.accept(",")):
                break
        self.expect(")")
        return items

    def parse_stmt(self) -> list:
        tok = self.cur
        if self.accept("begin"):
            if self.accept(":"):
                self.expect_ident()  # named blocks: name is ignorable metadata
            stmts: list = []
            while not self.check("end"):
                if self.cur.kind == "eof":
                    self.error("'end'")
                stmts.extend(self.parse_stmt())
            self.expect("end")
            return stmts
        if self.accept("if"):
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            then_body = self.parse_stmt()
            else_body = self.parse_stmt() if self.accept("else") else []
            return [n.IfStmt(cond, then_body, else_body, tok.loc)]
        if tok.text in ("case", "casex", "casez"):
            return [self.parse_case()]
        if self.accept(";"):
            return []
        if tok.kind == "keyword" and tok.text in UNSUPPORTED_KEYWORDS:
            self.unsupported(tok.text)
        if tok.kind == "system":
            self.unsupported(f"system task {tok.text}")
        if self.check("#"):
            self.unsupported("delay control")
        lhs = self.parse_lvalue()
        if self.accept("="):
            blocking = True
        elif self.accept("<="):
            blocking = False
        else:
            self.error("'='", "'<='")
        rhs = self.parse_expr()
        self.expect(";")
        return [n.AssignStmt(lhs, rhs, blocking, tok.loc)]

    def parse_case(self) -> n.CaseStmt:
        loc = self.advance().loc  # case/casex/casez
        self.expect("(")
        subject = self.parse_expr()
        self.expect(")")
        items: list[n.CaseItem] = []
        while not self.check("endcase"):
            if self.cur.kind == "eof":
                self.error("'endcase'")
            if self.accept("default"):
                self.accept(":")
                items.append(n.CaseItem(None, self.parse_stmt()))
            else:
                labels = [self.parse_expr()]
                while self.accept(","):
                    labels.append(self.parse_expr())
                self.expect(":")
                items.append(n.CaseItem(tuple(labels), self.parse_stmt()))
        self.expect("endcase")
        return n.CaseStmt(subject, items, loc)

    def parse_gate(self, mod: n.ModuleDecl):
        gate = self.advance().text
        while True:
            inst_name = self.expect_ident().text if self.cur.kind == "ident" else None
            loc = self.expect("(").loc
            terms = [self.parse_expr()]
            while self.accept(","):
                terms.append(self.parse_expr())
            self.expect(")")
            mod.gates.append(n.GateInstance(gate, inst_name, terms, loc))
            mod.item_order.append(("gate", len(mod.gates) - 1))
            if not self.accept(","):
                break
        self.expect(";")

    def parse_instance(self, mod: n.ModuleDecl):
        mtok = self.expect_ident()
        overrides: list[tuple[str | None, n.Expr]] = []
        if self.accept("#"):
            self.expect("(")
            if not self.check(")"):
                while True:
                    if self.accept("."):
                        pname = self.expect_ident().text
                        self.expect("(")
                        overrides.append((pname, self.parse_expr()))
                        self.expect(")")
                    else:
                        overrides.append((None, self.parse_expr()))
                    if not self.accept(","):
                        break
            self.expect(")")
        while True:
            itok = self.expect_ident()
            self.expect("(")
            conns = self.parse_connections()
            self.expect(")")
            mod.instances.append(n.Instance(mtok.text, itok.text, overrides, conns, mtok.loc))
            mod.item_order.append(("instance", len(mod.instances) - 1))
            if not self.accept(","):
                break
        self.expect(";")

    def parse_connections(self) -> list[tuple[str | None, n.Expr | None]]:
        conns: list[tuple[str | None, n.Expr | None]] = []
        if self.check(")"):
            return conns
        while True:
            if self.accept("."):
                pname = self.expect_ident().text
                self.expect("(")
                expr = None if self.check(")") else self.parse_expr()
                self.expect(")")
                conns.append((pname, expr))
            elif self.check(",") or self.check(")"):
                conns.append((None, None))
            else:
                conns.append((None, self.parse_expr()))
            if not self.accept(","):
                break
        return conns

    # --- expressions -------------------------------------------------

    def parse_lvalue(self) -> n.Expr:
        if self.check("{"):
            loc = self.advance().loc
            parts = [self.parse_lvalue()]
            while self.accept(","):
                parts.append(self.parse_lvalue())
            self.expect("}")
            return n.Concat(loc, tuple(parts))
        tok = self.expect_ident()
        return self.parse_postfix(n.Ident(tok.loc, tok.text))

    def parse_expr(self) -> n.Expr:
        left = self.parse_binary(0)
        if self.accept("?"):
            true = self.parse_expr()
            self.expect(":")
            false = self.parse_expr()
            return n.Ternary(left.loc, left, true, false)
        return left

    def parse_binary(self, min_prec: int) -> n.Expr:
        left = self.parse_unary()
        while self.cur.kind == "op" and BINARY_PREC.get(self.cur.text, -1) >= min_prec:
            op = self.advance().text
            if op in ("===", "!=="):
                op = "==" if op == "===" else "!="  # four-state equality collapses
            right = self.parse_binary(BINARY_PREC[op if op in BINARY_PREC else "=="] + 1)
            left = n.Binary(left.loc, op, left, right)
        return left

    def parse_unary(self) -> n.Expr:
        if self.cur.kind == "op" and self.cur.text in UNARY_OPS:
            tok = self.advance()
            operand = self.parse_unary()
            if tok.text == "+":
                return operand
            return n.Unary(tok.loc, tok.text, operand)
        return self.parse_primary()

    def parse_primary(self) -> n.Expr:
        tok = self.cur
        if tok.kind == "number":
            self.advance()
            return n.Number(tok.loc, tok.text, parse_number(tok.text))
        if tok.kind == "real":
            self.unsupported("real literal")
        if tok.kind == "system":
            self.unsupported(f"system function {tok.text}")
        if tok.kind == "ident":
            self.advance()
            if self.check("."):
                self.unsupported("hierarchical reference", tok.loc)
            if self.check("("):
                self.unsupported("function call", tok.loc)
            return self.parse_postfix(n.Ident(tok.loc, tok.text))
        if self.accept("("):
            expr = self.parse_expr()
            self.expect(")")
            return expr
        if self.check("{"):
            return self.parse_concat()
        self.error("an expression")

    def parse_postfix(self, base: n.Expr) -> n.Expr:
        while self.check("["):
            loc = self.advance().loc
            first = self.parse_expr()
            if self.accept(":"):
                second = self.parse_expr()
                self.expect("]")
                base = n.PartSelect(loc, base, first, second)
            elif self.cur.text in ("+", "-") and self.tokens[self.pos + 1].text == ":":
                self.unsupported("indexed part select", loc)
            else:
                self.expect("]")
                if isinstance(base, (n.BitSelect, n.PartSelect)):
                    self.unsupported("memory element select", loc)
                base = n.BitSelect(loc, base, first)
        return base

    def parse_concat(self) -> n.Expr:
        loc = self.expect("{").loc
        first = self.parse_expr()
        if self.check("{"):
            self.advance()
            parts = [self.parse_expr()]
            while self.accept(","):
                parts.append(self.parse_expr())
            self.expect("}")
            self.expect("}")
            return n.Repeat(loc, first, tuple(parts))
        parts = [first]
        while self.accept(","):
            parts.append(self.parse_expr())
        self.expect("}")
        return n.Concat(loc, tuple(parts))


def _expr_idents(expr: n.Expr):
    """Yield every Ident node referenced in an expression tree."""
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, n.Ident):
            yield e
        elif isinstance(e, n.Unary):
            stack.append(e.operand)
        elif isinstance(e, n.Binary):
            stack.extend((e.left, e.right))
        elif isinstance(e, n.Ternary):
            stack.extend((e.cond, e.true, e.false))
        elif isinstance(e, n.Concat):
            stack.extend(e.parts)
        elif isinstance(e, n.Repeat):
            stack.append(e.count)
            stack.extend(e.parts)
        elif isinstance(e, n.BitSelect):
            stack.extend((e.base, e.index))
        elif isinstance(e, n.PartSelect):
            stack.extend((e.base, e.msb, e.lsb))


def _resolve_module(mod: n.ModuleDecl, path: str):
    """Check identifier resolution, inserting implicit 1-bit wires where the
    standard allows them (simple names in port connections and assign LHS)."""
    declared = {p.name for p in mod.ports}
    declared.update(d.name for d in mod.nets)
    declared.update(p.name for p in mod.params)

    def implicit(name: str, loc: SourceLocation):
        if name not in declared:
            declared.add(name)
            mod.nets.append(n.NetDecl(name, "wire", None, loc))
            mod.item_order.append(("net", len(mod.nets) - 1))

    for inst in mod.instances:
        for _, expr in inst.connections:
            if isinstance(expr, n.Ident):
                implicit(expr.name, expr.loc)
    for gate in mod.gates:
        for expr in gate.terminals:
            if isinstance(expr, n.Ident):
                implicit(expr.name, expr.loc)
    for assign in mod.assigns:
        for ident in _expr_idents(assign.lhs):
            implicit(ident.name, ident.loc)

    def check_expr(expr: n.Expr | None):
        if expr is None:
            return
        for ident in _expr_idents(expr):
            if ident.name not in declared:
                raise UnresolvedIdentifier(ident.name, ident.loc)

    def check_stmts(stmts: list):
        for stmt in stmts:
            if isinstance(stmt, n.AssignStmt):
                check_expr(stmt.lhs)
                check_expr(stmt.rhs)
            elif isinstance(stmt, n.IfStmt):
                check_expr(stmt.cond)
                check_stmts(stmt.then_body)
                check_stmts(stmt.else_body)
            elif isinstance(stmt, n.CaseStmt):
                check_expr(stmt.subject)
                for item in stmt.items:
                    if item.labels:
                        for lab in item.labels:
                            check_expr(lab)
                    check_stmts(item.body)

    for assign in mod.assigns:
        check_expr(assign.rhs)
    for blk in mod.always_blocks:
        if blk.sensitivity:
            for item in blk.sensitivity:
                if item.signal not in declared:
                    raise UnresolvedIdentifier(item.signal, blk.loc)
        check_stmts(blk.body)
    for inst in mod.instances:
        for _, expr in inst.connections:
            check_expr(expr)
        for _, expr in inst.param_overrides:
            check_expr(expr)
    for gate in mod.gates:
        for expr in gate.terminals:
            check_expr(expr)


def parse(text: str, path: str = "<text>") -> n.Ast:
    """Parse preprocessed Verilog text into an Ast."""
    return _Parser(tokenize(text, path), path).parse_source()


def parse_unit(preprocessed: list[tuple[str, str]]) -> n.Ast:
    """Parse every file of a preprocessed unit into one merged Ast."""
    modules: list[n.ModuleDecl] = []
    seen: dict[str, str] = {}
    for path, text in preprocessed:
        ast = parse(text, path)
        for mod in ast.modules:
            if mod.name in seen:
                raise VerilogSyntaxError(mod.loc, (f"a unique definition of module {mod.name!r}",), f"duplicate (first in {seen[mod.name]})")
            seen[mod.name] = path
            modules.append(mod)
    return n.Ast(modules)

"""Data-flow graph construction from elaborated modules.

Every output port becomes a root. Edges point from a consumer toward
the expression that produces its value, so leaves are input ports and
constants. Procedural blocks are walked symbolically: conditional
updates become Branch nodes and an unassigned path holds the signal's
own previous value, which is what turns registers into cycles.

Node kinds come from a fixed vocabulary so that feature encodings stay
aligned across designs and checkpoint versions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ipsim.errors import (
    DfgError,
    DfgFormatError,
    MultipleContinuousDrivers,
    UndrivenSignal,
)
from ipsim.frontend import nodes as n
from ipsim.frontend.flatten import FlatModule

NODE_KINDS = (
    "Input", "Output", "Inout", "Signal", "Constant",
    "Branch", "Concat", "PartSelect",
    "And", "Or", "Xor", "Xnor", "Nand", "Nor", "Not",
    "Plus", "Minus", "Times", "Divide", "Mod",
    "ShiftL", "ShiftR",
    "Eq", "Neq", "Lt", "Gt", "Le", "Ge",
    "LAnd", "LOr", "LNot",
    "RedAnd", "RedOr", "RedXor",
    "Cond", "Unknown",
)
KIND_INDEX = {k: i for i, k in enumerate(NODE_KINDS)}

UNARY_KIND = {"~": "Not", "!": "LNot", "&": "RedAnd", "|": "RedOr",
              "^": "RedXor", "-": "Minus"}
UNARY_INVERTED = {"~&": "RedAnd", "~|": "RedOr", "~^": "RedXor", "^~": "RedXor"}
BINARY_KIND = {
    "&": "And", "|": "Or", "^": "Xor", "~^": "Xnor", "^~": "Xnor",
    "+": "Plus", "-": "Minus", "*": "Times", "/": "Divide", "%": "Mod",
    "<<": "ShiftL", "<<<": "ShiftL", ">>": "ShiftR", ">>>": "ShiftR",
    "==": "Eq", "!=": "Neq", "<": "Lt", ">": "Gt", "<=": "Le", ">=": "Ge",
    "&&": "LAnd", "||": "LOr",
}


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    label: str = ""


@dataclass
class Graph:
    """Rooted directed multigraph with parallel edges already collapsed."""

    name: str
    nodes: list[Node] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)
    roots: list[int] = field(default_factory=list)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def successors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for src, dst in self.edges:
            out[src].append(dst)
        return out

    def predecessors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for src, dst in self.edges:
            out[dst].append(src)
        return out

    def kind_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for node in self.nodes:
            counts[node.kind] = counts.get(node.kind, 0) + 1
        return counts

    def node_by_label(self, label: str) -> Node | None:
        for node in self.nodes:
            if node.label == label:
                return node
        return None

    def has_path(self, src: int, dst: int) -> bool:
        succ = self.successors()
        seen = {src}
        stack = [src]
        while stack:
            cur = stack.pop()
            if cur == dst:
                return True
            for nxt in succ[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False


class _Sym:
    """Operator node in a symbolic driver tree. Shared subtrees are
    deliberate (blocking reads snapshot the writer's tree) and are
    emitted once, by object identity."""

    __slots__ = ("kind", "label", "children")

    def __init__(self, kind: str, label: str, children: tuple):
        self.kind = kind
        self.label = label
        self.children = children


class _Ref:
    """Read of a named signal, resolved to that signal's node."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name


def _const_label(num: n.Number) -> str:
    if num.value is not None:
        return str(num.value)
    return num.text.lower().replace("_", "")


def _width_of(flat: FlatModule, name: str) -> tuple[int, int]:
    width = flat.widths.get(name)
    if width is None:
        return (0, 0)
    msb, lsb = width
    return (msb, lsb) if msb >= lsb else (lsb, msb)


def _lhs_width(flat: FlatModule, lhs: n.Expr) -> int:
    if isinstance(lhs, n.Ident):
        hi, lo = _width_of(flat, lhs.name)
        return hi - lo + 1
    if isinstance(lhs, n.BitSelect):
        return 1
    if isinstance(lhs, n.PartSelect):
        hi = lhs.msb.value
        lo = lhs.lsb.value
        return abs(hi - lo) + 1
    if isinstance(lhs, n.Concat):
        return sum(_lhs_width(flat, p) for p in lhs.parts)
    raise DfgError(f"{lhs.loc}: assignment target must be a signal, select, or concatenation")


def _part(sym, hi: int, lo: int):
    return _Sym("PartSelect", f"[{hi}:{lo}]", (sym,))


class _DriverTable:
    """Per-signal drivers with multiple-driver detection.

    A signal is either fully driven once (continuous or procedural) or
    covered by non-overlapping continuous slices that combine under a
    Concat node ordered most significant first.
    """

    def __init__(self, flat: FlatModule):
        self.flat = flat
        self.full: dict[str, object] = {}
        self.slices: dict[str, list[tuple[int, int, object]]] = {}

    def add_full(self, name: str, sym):
        if name in self.full or name in self.slices:
            raise MultipleContinuousDrivers(name)
        self.full[name] = sym

    def add_slice(self, name: str, hi: int, lo: int, sym):
        if name in self.full:
            raise MultipleContinuousDrivers(name)
        for prev_hi, prev_lo, _ in self.slices.get(name, []):
            if hi >= prev_lo and prev_hi >= lo:
                raise MultipleContinuousDrivers(name)
        self.slices.setdefault(name, []).append((hi, lo, sym))

    def driver(self, name: str):
        if name in self.full:
            return self.full[name]
        if name in self.slices:
            parts = sorted(self.slices[name], key=lambda s: -s[0])
            if len(parts) == 1:
                return parts[0][2]
            return _Sym("Concat", "", tuple(sym for _, _, sym in parts))
        return None


class _Builder:
    def __init__(self, flat: FlatModule):
        self.flat = flat
        self.dirs = flat.port_directions()
        self.table = _DriverTable(flat)
        self.kinds: list[str] = []
        self.labels: list[str] = []
        self.edges: set[tuple[int, int]] = set()
        self.signal_nodes: dict[str, int] = {}
        self.const_nodes: dict[str, int] = {}
        self.sym_nodes: dict[int, int] = {}
        self._collect()

    # --- driver collection --------------------------------------------

    def _collect(self):
        for assign in self.flat.assigns:
            self._continuous(assign.lhs, self._conv(assign.rhs, {}))
        for blk in self.flat.always_blocks:
            env: dict[str, object] = {}
            self._walk(blk.body, env)
            for name, sym in env.items():
                self.table.add_full(name, sym)

    def _continuous(self, lhs: n.Expr, sym):
        if isinstance(lhs, n.Ident):
            self.table.add_full(lhs.name, sym)
            return
        if isinstance(lhs, n.BitSelect):
            base, idx = self._select_base(lhs)
            self.table.add_slice(base, idx, idx, sym)
            return
        if isinstance(lhs, n.PartSelect):
            base, hi, lo = self._part_base(lhs)
            self.table.add_slice(base, hi, lo, sym)
            return
        if isinstance(lhs, n.Concat):
            total = _lhs_width(self.flat, lhs)
            consumed = 0
            for part in lhs.parts:
                w = _lhs_width(self.flat, part)
                hi = total - 1 - consumed
                self._continuous(part, _part(sym, hi, hi - w + 1))
                consumed += w
            return
        raise DfgError(f"{lhs.loc}: unsupported continuous assignment target")

    def _select_base(self, sel: n.BitSelect) -> tuple[str, int]:
        if not isinstance(sel.base, n.Ident):
            raise DfgError(f"{sel.loc}: select target must be a plain signal")
        if not isinstance(sel.index, n.Number) or sel.index.value is None:
            raise DfgError(f"{sel.loc}: bit-select assignment index must be constant")
        return sel.base.name, sel.index.value

    def _part_base(self, sel: n.PartSelect) -> tuple[str, int, int]:
        if not isinstance(sel.base, n.Ident):
            raise DfgError(f"{sel.loc}: select target must be a plain signal")
        hi, lo = sel.msb.value, sel.lsb.value
        if hi is None or lo is None:
            raise DfgError(f"{sel.loc}: part-select bounds must be constant")
        return sel.base.name, max(hi, lo), min(hi, lo)

    # --- symbolic walk of procedural code -------------------------------

    def _walk(self, stmts: list, env: dict):
        for stmt in stmts:
            if isinstance(stmt, n.AssignStmt):
                self._store(stmt.lhs, self._conv(stmt.rhs, env), env)
            elif isinstance(stmt, n.IfStmt):
                cond = self._conv(stmt.cond, env)
                env_t = dict(env)
                env_e = dict(env)
                self._walk(stmt.then_body, env_t)
                self._walk(stmt.else_body, env_e)
                self._merge(env, cond, env_t, env_e)
            elif isinstance(stmt, n.CaseStmt):
                self._walk_case(stmt, env)
            else:
                raise DfgError(f"unexpected statement {type(stmt).__name__}")

    def _merge(self, env: dict, cond, env_t: dict, env_e: dict):
        changed = {k for k in env_t if env_t[k] is not env.get(k)}
        changed |= {k for k in env_e if env_e[k] is not env.get(k)}
        for name in changed:
            hold = env.get(name, _Ref(name))
            tval = env_t.get(name, hold)
            eval_ = env_e.get(name, hold)
            env[name] = tval if tval is eval_ else _Sym("Branch", "", (cond, tval, eval_))

    def _walk_case(self, stmt: n.CaseStmt, env: dict):
        subject = self._conv(stmt.subject, env)
        arms = []
        default_env = None
        for item in stmt.items:
            arm_env = dict(env)
            self._walk(item.body, arm_env)
            if item.labels is None:
                default_env = arm_env
            else:
                cond = None
                for label in item.labels:
                    test = _Sym("Eq", "", (subject, self._conv(label, env)))
                    cond = test if cond is None else _Sym("LOr", "", (cond, test))
                arms.append((cond, arm_env))
        changed = set()
        for _, arm_env in arms:
            changed |= {k for k in arm_env if arm_env[k] is not env.get(k)}
        if default_env is not None:
            changed |= {k for k in default_env if default_env[k] is not env.get(k)}
        for name in changed:
            hold = env.get(name, _Ref(name))
            acc = default_env.get(name, hold) if default_env is not None else hold
            for cond, arm_env in reversed(arms):
                aval = arm_env.get(name, hold)
                acc = aval if aval is acc else _Sym("Branch", "", (cond, aval, acc))
            env[name] = acc

    def _store(self, lhs: n.Expr, sym, env: dict):
        if isinstance(lhs, n.Ident):
            env[lhs.name] = sym
            return
        if isinstance(lhs, (n.BitSelect, n.PartSelect)):
            if isinstance(lhs, n.BitSelect):
                name, hi = self._select_base(lhs)
                lo = hi
            else:
                name, hi, lo = self._part_base(lhs)
            top, bot = _width_of(self.flat, name)
            old = env.get(name, _Ref(name))
            parts = []
            if hi < top:
                parts.append(_part(old, top, hi + 1))
            parts.append(sym)
            if lo > bot:
                parts.append(_part(old, lo - 1, bot))
            env[name] = sym if len(parts) == 1 else _Sym("Concat", "", tuple(parts))
            return
        if isinstance(lhs, n.Concat):
            total = _lhs_width(self.flat, lhs)
            consumed = 0
            for part in lhs.parts:
                w = _lhs_width(self.flat, part)
                hi = total - 1 - consumed
                self._store(part, _part(sym, hi, hi - w + 1), env)
                consumed += w
            return
        raise DfgError(f"{lhs.loc}: unsupported assignment target")

    # --- expression conversion -------------------------------------------

    def _conv(self, expr: n.Expr, env: dict):
        if isinstance(expr, n.Ident):
            return env.get(expr.name) or _Ref(expr.name)
        if isinstance(expr, n.Number):
            return _Sym("Constant", _const_label(expr), ())
        if isinstance(expr, n.Unary):
            inner = self._conv(expr.operand, env)
            if expr.op in UNARY_INVERTED:
                return _Sym("Not", "", (_Sym(UNARY_INVERTED[expr.op], "", (inner,)),))
            return _Sym(UNARY_KIND[expr.op], "", (inner,))
        if isinstance(expr, n.Binary):
            return _Sym(BINARY_KIND[expr.op], "",
                        (self._conv(expr.left, env), self._conv(expr.right, env)))
        if isinstance(expr, n.Ternary):
            return _Sym("Cond", "", (self._conv(expr.cond, env),
                                     self._conv(expr.true, env),
                                     self._conv(expr.false, env)))
        if isinstance(expr, n.Concat):
            return _Sym("Concat", "", tuple(self._conv(p, env) for p in expr.parts))
        if isinstance(expr, n.Repeat):
            return _Sym("Concat", "", tuple(self._conv(p, env) for p in expr.parts))
        if isinstance(expr, n.BitSelect):
            base = self._conv(expr.base, env)
            if isinstance(expr.index, n.Number) and expr.index.value is not None:
                return _Sym("PartSelect", f"[{expr.index.value}]", (base,))
            return _Sym("PartSelect", "[]", (base, self._conv(expr.index, env)))
        if isinstance(expr, n.PartSelect):
            hi, lo = expr.msb.value, expr.lsb.value
            return _Sym("PartSelect", f"[{hi}:{lo}]", (self._conv(expr.base, env),))
        raise DfgError(f"unexpected expression {type(expr).__name__}")

    # --- node emission ----------------------------------------------------

    def _new_node(self, kind: str, label: str = "") -> int:
        self.kinds.append(kind)
        self.labels.append(label)
        return len(self.kinds) - 1

    def _emit(self, sym) -> int:
        if isinstance(sym, _Ref):
            return self._signal_node(sym.name)
        key = id(sym)
        cached = self.sym_nodes.get(key)
        if cached is not None:
            return cached
        if sym.kind == "Constant":
            cached = self.const_nodes.get(sym.label)
            if cached is not None:
                self.sym_nodes[key] = cached
                return cached
            nid = self._new_node("Constant", sym.label)
            self.const_nodes[sym.label] = nid
            self.sym_nodes[key] = nid
            return nid
        nid = self._new_node(sym.kind, sym.label)
        self.sym_nodes[key] = nid
        for child in sym.children:
            self.edges.add((nid, self._emit(child)))
        return nid

    def _signal_node(self, name: str) -> int:
        cached = self.signal_nodes.get(name)
        if cached is not None:
            return cached
        direction = self.dirs.get(name)
        kind = {"input": "Input", "output": "Output", "inout": "Inout"}.get(direction, "Signal")
        nid = self._new_node(kind, name)
        self.signal_nodes[name] = nid
        driver = self.table.driver(name)
        if driver is not None:
            self.edges.add((nid, self._emit(driver)))
        elif kind in ("Output", "Signal"):
            raise UndrivenSignal(name)
        return nid

    def build(self, root_signals: list[str], name: str) -> Graph:
        roots = [self._signal_node(s) for s in root_signals]
        nodes = [Node(i, k, l) for i, (k, l) in enumerate(zip(self.kinds, self.labels))]
        return Graph(name=name, nodes=nodes, edges=sorted(self.edges), roots=roots)


def build_dfg(flat: FlatModule, trimmed: bool = True) -> Graph:
    """Build the design's data-flow graph rooted at its output ports."""
    outputs = [p.name for p in flat.ports if p.direction == "output"]
    if not outputs:
        raise DfgError(f"module {flat.name!r} has no output ports")
    graph = _Builder(flat).build(outputs, flat.name)
    return trim(graph) if trimmed else _canonicalize(graph)


def analyze_signal(flat: FlatModule, signal: str, trimmed: bool = False) -> Graph:
    """Build the driver cone of one signal (untrimmed by default)."""
    graph = _Builder(flat).build([signal], f"{flat.name}.{signal}")
    return trim(graph) if trimmed else _canonicalize(graph)


def trim(graph: Graph) -> Graph:
    """Drop nodes unreachable from the roots and splice out single-driver
    Signal nodes so pure renames collapse to identical graphs. Idempotent."""
    succ = graph.successors()
    keep: set[int] = set()
    stack = list(graph.roots)
    while stack:
        cur = stack.pop()
        if cur in keep:
            continue
        keep.add(cur)
        stack.extend(succ[cur])

    edges = {(s, d) for s, d in graph.edges if s in keep and d in keep}
    alive = set(keep)
    redirect: dict[int, int] = {}

    def resolve(node: int) -> int:
        while node in redirect:
            node = redirect[node]
        return node

    changed = True
    while changed:
        changed = False
        out: dict[int, set[int]] = {}
        for s, d in edges:
            out.setdefault(s, set()).add(d)
        for nid in sorted(alive):
            if graph.nodes[nid].kind != "Signal" or nid in graph.roots:
                continue
            succs = out.get(nid, set())
            if len(succs) != 1:
                continue
            target = next(iter(succs))
            if target == nid:
                continue  # self alias stays, nothing to splice to
            redirect[nid] = target
            alive.discard(nid)
            edges = {(resolve(s), resolve(d)) for s, d in edges if s != nid}
            changed = True
            break

    order = sorted(alive)
    return _canonicalize(Graph(
        name=graph.name,
        nodes=[graph.nodes[i] for i in order],
        edges=sorted((order.index(s), order.index(d)) for s, d in edges),
        roots=[order.index(resolve(r)) for r in graph.roots],
    ))


def _canonicalize(graph: Graph) -> Graph:
    """Renumber nodes by (kind, label, prior position) so equal structure
    yields equal serialized form."""
    ranking = sorted(range(graph.num_nodes),
                     key=lambda i: (KIND_INDEX[graph.nodes[i].kind], graph.nodes[i].label, i))
    remap = {old: new for new, old in enumerate(ranking)}
    nodes = [Node(remap[i], node.kind, node.label)
             for i, node in enumerate(graph.nodes)]
    nodes.sort(key=lambda nd: nd.id)
    return Graph(
        name=graph.name,
        nodes=nodes,
        edges=sorted((remap[s], remap[d]) for s, d in set(graph.edges)),
        roots=[remap[r] for r in graph.roots],
    )


# --- serialization ----------------------------------------------------------

FORMAT_NAME = "ipsim-dfg"
FORMAT_VERSION = 1


def graph_to_dict(graph: Graph) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "name": graph.name,
        "nodes": [{"id": nd.id, "kind": nd.kind, "label": nd.label} for nd in graph.nodes],
        "edges": [[s, d] for s, d in graph.edges],
        "roots": list(graph.roots),
    }


def graph_from_dict(data: dict) -> Graph:
    if not isinstance(data, dict):
        raise DfgFormatError("graph document must be a JSON object")
    if data.get("format") != FORMAT_NAME:
        raise DfgFormatError(f"not a {FORMAT_NAME} document")
    if data.get("version") != FORMAT_VERSION:
        raise DfgFormatError(f"unsupported format version {data.get('version')!r}")
    try:
        raw_nodes = data["nodes"]
        raw_edges = data["edges"]
        raw_roots = data["roots"]
        name = data["name"]
    except KeyError as exc:
        raise DfgFormatError(f"missing field {exc.args[0]!r}")
    nodes = []
    for i, raw in enumerate(raw_nodes):
        try:
            nid, kind, label = raw["id"], raw["kind"], raw["label"]
        except (KeyError, TypeError):
            raise DfgFormatError(f"malformed node record at index {i}")
        if nid != i:
            raise DfgFormatError(f"node ids must be contiguous, got {nid} at index {i}")
        if kind not in KIND_INDEX:
            raise DfgFormatError(f"unknown node kind {kind!r}")
        nodes.append(Node(nid, kind, label))
    count = len(nodes)
    edges = []
    for raw in raw_edges:
        if (not isinstance(raw, (list, tuple)) or len(raw) != 2
                or not all(isinstance(v, int) and 0 <= v < count for v in raw)):
            raise DfgFormatError(f"malformed edge {raw!r}")
        edges.append((raw[0], raw[1]))
    for r in raw_roots:
        if not isinstance(r, int) or not 0 <= r < count:
            raise DfgFormatError(f"root {r!r} out of range")
    return Graph(name=name, nodes=nodes, edges=edges, roots=list(raw_roots))


def serialize(graph: Graph) -> str:
    return json.dumps(graph_to_dict(graph), indent=None, separators=(",", ":"))


def deserialize(text: str) -> Graph:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DfgFormatError(f"invalid JSON: {exc}")
    return graph_from_dict(data)


# --- isomorphism ------------------------------------------------------------

def _refine_colors(graph: Graph) -> list[tuple]:
    anchored = ("Input", "Output", "Inout", "Constant")
    colors: list = [
        (nd.kind, nd.label if nd.kind in anchored else "", nd.id in set(graph.roots))
        for nd in graph.nodes
    ]
    succ = graph.successors()
    pred = graph.predecessors()
    for _ in range(graph.num_nodes + 1):
        nxt = [
            (colors[i], tuple(sorted(colors[j] for j in succ[i])),
             tuple(sorted(colors[j] for j in pred[i])))
            for i in range(graph.num_nodes)
        ]
        if len(set(nxt)) == len(set(colors)):
            return nxt
        colors = nxt
    return colors


def is_isomorphic(a: Graph, b: Graph, node_budget: int = 200000) -> bool:
    """Kind- and anchor-preserving isomorphism via color refinement plus
    a bounded backtracking check of an explicit bijection."""
    if a.num_nodes != b.num_nodes or len(set(a.edges)) != len(set(b.edges)):
        return False
    ca = _refine_colors(a)
    cb = _refine_colors(b)
    hist_a: dict = {}
    hist_b: dict = {}
    for c in ca:
        hist_a[c] = hist_a.get(c, 0) + 1
    for c in cb:
        hist_b[c] = hist_b.get(c, 0) + 1
    if hist_a != hist_b:
        return False

    by_color: dict = {}
    for j, c in enumerate(cb):
        by_color.setdefault(c, []).append(j)
    candidates = [by_color[c] for c in ca]
    order = sorted(range(a.num_nodes), key=lambda i: len(candidates[i]))
    succ_a = [set(s) for s in a.successors()]
    succ_b = [set(s) for s in b.successors()]
    mapping: dict[int, int] = {}
    used: set[int] = set()
    steps = 0

    def attempt(pos: int) -> bool:
        nonlocal steps
        if pos == len(order):
            return True
        steps += 1
        if steps > node_budget:
            raise DfgError("isomorphism search budget exceeded")
        i = order[pos]
        for j in candidates[i]:
            if j in used:
                continue
            ok = True
            for i2, j2 in mapping.items():
                if (i2 in succ_a[i]) != (j2 in succ_b[j]) or (i in succ_a[i2]) != (j in succ_b[j2]):
                    ok = False
                    break
            if (i in succ_a[i]) != (j in succ_b[j]):
                ok = False
            if not ok:
                continue
            mapping[i] = j
            used.add(j)
            if attempt(pos + 1):
                return True
            del mapping[i]
            used.discard(j)
        return False

    return attempt(0)

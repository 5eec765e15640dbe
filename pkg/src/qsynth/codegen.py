"""Control-law code generation as a merged binary decision tree.

Cells are addressed by their index bits, interleaved across state variables
most-significant bit first, so the evaluation path for any input is at most
the total number of quantization bits: the worst-case execution time of the
emitted law is linear in the AD bits. Identical subtrees merge during
construction, which collapses constant regions (a controller mapping every
cell to one action compiles to a single return).

The emitted text is a deliberately tiny C-like subset: two functions over
the bit array, nested conditionals only, no loops. An in-repo parser reads
that subset back for conformance testing against the in-memory tree.
"""

from __future__ import annotations

from dataclasses import dataclass

from .quantize import QuantSchema
from .synthesis import Controller

FAULT = -1


class _Leaf:
    __slots__ = ("value",)

    def __init__(self, value: int):
        self.value = value


class _Node:
    __slots__ = ("bit", "zero", "one")

    def __init__(self, bit: int, zero, one):
        self.bit = bit
        self.zero = zero
        self.one = one


@dataclass(frozen=True)
class DecisionTree:
    """Merged decision tree over interleaved cell-index bits."""

    root: object
    bit_positions: tuple[tuple[int, int], ...]  # (state variable, shift)
    counts: tuple[int, ...]
    action_width: int

    @property
    def n_bits(self) -> int:
        return len(self.bit_positions)


def bit_order(schema: QuantSchema) -> tuple[tuple[int, int], ...]:
    """Interleaved MSB-first positions: (variable index, right-shift)."""
    out = []
    for level in range(max(schema.bits)):
        for v, b in enumerate(schema.bits):
            if level < b:
                out.append((v, b - 1 - level))
    return tuple(out)


def cell_bits(tree: DecisionTree, cell) -> list[int]:
    return [(cell[v] >> shift) & 1 for v, shift in tree.bit_positions]


class _Builder:
    def __init__(self):
        self._leaves: dict[int, _Leaf] = {}
        self._nodes: dict[tuple[int, int, int], _Node] = {}

    def leaf(self, value: int) -> _Leaf:
        node = self._leaves.get(value)
        if node is None:
            node = self._leaves[value] = _Leaf(value)
        return node

    def node(self, bit: int, zero, one):
        if zero is one:
            return zero  # identical subtrees merge
        key = (bit, id(zero), id(one))
        node = self._nodes.get(key)
        if node is None:
            node = self._nodes[key] = _Node(bit, zero, one)
        return node


def compile_tree(controller: Controller, schema: QuantSchema | None = None) -> DecisionTree:
    """Compile the controller's chosen-action table; uncontrollable cells
    compile to the FAULT leaf."""
    schema = schema or controller.schema
    positions = bit_order(schema)
    total = len(positions)
    builder = _Builder()
    chosen = controller.chosen
    actions = controller.actions
    counts = schema.counts

    def value_of(bits: list[int]) -> int:
        cell = [0] * len(counts)
        for (v, shift), b in zip(positions, bits):
            cell[v] |= b << shift
        idx = schema.linear_index(tuple(cell))
        aidx = chosen.get(idx)
        if aidx is None:
            return FAULT
        return _pack_action(actions[aidx])

    def build(level: int, prefix: list[int]):
        if level == total:
            return builder.leaf(value_of(prefix))
        prefix.append(0)
        zero = build(level + 1, prefix)
        prefix[-1] = 1
        one = build(level + 1, prefix)
        prefix.pop()
        return builder.node(level, zero, one)

    root = build(0, [])
    width = len(actions[0]) if actions else 1
    return DecisionTree(root, positions, counts, width)


def _pack_action(action) -> int:
    value = 0
    for bit in action:
        value = (value << 1) | bit
    return value


def unpack_action(value: int, width: int) -> tuple[int, ...]:
    return tuple((value >> (width - 1 - i)) & 1 for i in range(width))


def interpret(tree: DecisionTree, cell) -> int:
    """Evaluate the tree on a cell: packed action bits, or FAULT."""
    bits = cell_bits(tree, cell)
    node = tree.root
    steps = 0
    while isinstance(node, _Node):
        node = node.one if bits[node.bit] else node.zero
        steps += 1
        if steps > tree.n_bits:
            raise RuntimeError("decision tree deeper than the bit string")
    return node.value


def max_depth(tree: DecisionTree) -> int:
    memo: dict[int, int] = {}

    def depth(node) -> int:
        if isinstance(node, _Leaf):
            return 0
        got = memo.get(id(node))
        if got is None:
            got = memo[id(node)] = 1 + max(depth(node.zero), depth(node.one))
        return got

    return depth(tree.root)


def trees_equal(a: DecisionTree, b: DecisionTree) -> bool:
    if a.bit_positions != b.bit_positions:
        return False
    memo: dict[tuple[int, int], bool] = {}

    def eq(x, y) -> bool:
        if x is y:
            return True
        if isinstance(x, _Leaf) or isinstance(y, _Leaf):
            return isinstance(x, _Leaf) and isinstance(y, _Leaf) and x.value == y.value
        key = (id(x), id(y))
        got = memo.get(key)
        if got is None:
            memo[key] = True  # cycle guard; trees are acyclic anyway
            got = memo[key] = x.bit == y.bit and eq(x.zero, y.zero) and eq(x.one, y.one)
        return got

    return eq(a.root, b.root)


def map_leaves(tree: DecisionTree, fn) -> DecisionTree:
    """Rebuild with transformed leaf values, re-merging collapsed subtrees."""
    builder = _Builder()
    memo: dict[int, object] = {}

    def walk(node):
        got = memo.get(id(node))
        if got is not None:
            return got
        if isinstance(node, _Leaf):
            out = builder.leaf(fn(node.value))
        else:
            out = builder.node(node.bit, walk(node.zero), walk(node.one))
        memo[id(node)] = out
        return out

    return DecisionTree(walk(tree.root), tree.bit_positions, tree.counts, tree.action_width)


# ---------------------------------------------------------------------------
# Source emission and the conformance parser


def _emit_body(node, indent: str, lines: list[str]) -> None:
    if isinstance(node, _Leaf):
        lines.append(f"{indent}return {node.value};")
        return
    lines.append(f"{indent}if (b[{node.bit}] == 0) {{")
    _emit_body(node.zero, indent + "  ", lines)
    lines.append(f"{indent}}} else {{")
    _emit_body(node.one, indent + "  ", lines)
    lines.append(f"{indent}}}")


def emit_source(tree: DecisionTree, header: dict | None = None) -> str:
    """Self-contained C-like source for control_law and controllable_region.

    control_law returns the packed action bits (-1 for FAULT); the region
    test returns 1 on controllable cells. Both take the interleaved cell
    index bits as an int array.
    """
    lines = []
    for key, value in (header or {}).items():
        lines.append(f"/* {key}: {value} */")
    lines.append(f"/* bits: {tree.n_bits}, worst-case comparisons: {max_depth(tree)} */")
    lines.append("")
    lines.append(f"int control_law(const int b[{tree.n_bits}]) {{")
    _emit_body(tree.root, "  ", lines)
    lines.append("}")
    lines.append("")
    region = map_leaves(tree, lambda v: 0 if v == FAULT else 1)
    lines.append(f"int controllable_region(const int b[{tree.n_bits}]) {{")
    _emit_body(region.root, "  ", lines)
    lines.append("}")
    return "\n".join(lines) + "\n"


def parse_source(text: str, like: DecisionTree) -> DecisionTree:
    """Parse emitted source back into a tree (the control_law function).

    Only the emitted subset is understood; ``like`` supplies the bit layout.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    try:
        start = next(i for i, ln in enumerate(lines) if ln.startswith("int control_law"))
    except StopIteration:
        raise ValueError("no control_law function found") from None
    builder = _Builder()
    pos = start + 1

    def parse_block():
        nonlocal pos
        line = lines[pos]
        if line.startswith("return "):
            value = int(line[len("return "):].rstrip(";"))
            pos += 1
            return builder.leaf(value)
        if line.startswith("if (b[") and line.endswith("] == 0) {"):
            bit = int(line[len("if (b["):line.index("]")])
            pos += 1
            zero = parse_block()
            if lines[pos] != "} else {":
                raise ValueError(f"expected '}} else {{' at line {pos + 1}")
            pos += 1
            one = parse_block()
            if lines[pos] != "}":
                raise ValueError(f"expected '}}' at line {pos + 1}")
            pos += 1
            return builder.node(bit, zero, one)
        raise ValueError(f"unexpected line {pos + 1}: {line!r}")

    root = parse_block()
    return DecisionTree(root, like.bit_positions, like.counts, like.action_width)

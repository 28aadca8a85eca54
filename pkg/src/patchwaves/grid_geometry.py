"""Staggered patch-grid geometry.

Node parity lattices, the 16 compatible patch edge types, 2x2 macro-cell
layouts, and the base-17 layout Id encoding.

Index conventions.  A patch is an (m_x + 1) x (m_y + 1) lattice of potential
node sites, i = 0..m_x left to right and j = 0..m_y bottom to top, with the
patch edges on i in {0, m_x} and j in {0, m_y}.  Each site holds at most one
of the three staggered fields h, u, v, fixed by the parity phase of the patch.
Macro-cells tile the patch grid 2 x 2: the slot of patch (I, J) is
(p, q) = (I mod 2, J mod 2), p along x and q along y.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum


class NodeKind(Enum):
    H = "h"
    U = "u"
    V = "v"


EDGE_NAMES = ("left", "right", "bottom", "top")

#: slot order of the base-17 digits, most significant first
ID_SLOT_ORDER = ((0, 0), (1, 0), (0, 1), (1, 1))

#: slot order of state-vector patch blocks
STATE_SLOT_ORDER = ((0, 0), (0, 1), (1, 0), (1, 1))

EMPTY_TOKEN = "----"

N_LAYOUTS = 17**4 - 1  # 83520 per parity family


def node_kind(i: int, j: int, phase: tuple[int, int]) -> NodeKind | None:
    """Kind of the lattice site (i, j) for a patch with parity ``phase``.

    Returns None for sites that hold no field.  ``phase = (a, b)`` is chosen
    so that h sits where i - a and j - b are both odd.
    """
    a, b = phase
    dx = (i - a) % 2
    dy = (j - b) % 2
    if dx and dy:
        return NodeKind.H
    if dy:
        return NodeKind.U
    if dx:
        return NodeKind.V
    return None


def _edge_phase(name: str) -> tuple[int, int]:
    # left edge u-nodes force even i - a on i = 0, h-nodes force odd
    a = 0 if name[0] == "u" else 1
    b = 0 if name[2] == "v" else 1
    return a, b


@dataclass(frozen=True)
class MicroGridSpec:
    """One patch micro-grid: edge type plus the derived lattice facts."""

    name: str
    n: int
    m_x: int
    m_y: int
    phase: tuple[int, int]
    centre: NodeKind | None

    @property
    def symmetric(self) -> bool:
        return self.name[0] == self.name[1] and self.name[2] == self.name[3]

    @property
    def centred(self) -> bool:
        return self.centre is not None

    def kind(self, i: int, j: int) -> NodeKind | None:
        return node_kind(i, j, self.phase)

    def interior_nodes(self) -> list[tuple[int, int, NodeKind]]:
        out = []
        for i in range(1, self.m_x):
            for j in range(1, self.m_y):
                k = self.kind(i, j)
                if k is not None:
                    out.append((i, j, k))
        return out

    @classmethod
    def from_name(cls, name: str, n: int) -> "MicroGridSpec":
        validate_type_name(name)
        if n < 4 or n % 2:
            raise ValueError(f"n must be even and >= 4, got {n}")
        m_x = n if name[0] == name[1] else n - 1
        m_y = n if name[2] == name[3] else n - 1
        phase = _edge_phase(name)
        centre = None
        if m_x % 2 == 0 and m_y % 2 == 0:
            centre = node_kind(m_x // 2, m_y // 2, phase)
        return cls(name, n, m_x, m_y, phase, centre)


def validate_type_name(name: str) -> None:
    if (
        len(name) != 4
        or name[0] not in "hu"
        or name[1] not in "hu"
        or name[2] not in "hv"
        or name[3] not in "hv"
    ):
        raise ValueError(
            f"bad edge type {name!r}: want l,r in (h,u) and b,t in (h,v)"
        )


def enumerate_edge_types(n: int) -> list[MicroGridSpec]:
    """All 16 geometrically compatible patch types for the given n."""
    names = (
        "".join(p)
        for p in itertools.product("hu", "hu", "hv", "hv")
    )
    return [MicroGridSpec.from_name(name, n) for name in names]


@dataclass(frozen=True)
class Stencil:
    """Finite-difference neighbour requirements of the wave equations.

    First derivatives couple h with u along x and h with v along y at index
    offset 1.  The viscous term needs like-kind neighbours at offset 2.
    """

    viscous: bool = False

    def requirements(self, kind: NodeKind) -> tuple[tuple[int, int, NodeKind], ...]:
        if kind is NodeKind.H:
            return (
                (1, 0, NodeKind.U),
                (-1, 0, NodeKind.U),
                (0, 1, NodeKind.V),
                (0, -1, NodeKind.V),
            )
        like = kind
        grad = NodeKind.H
        axis = (1, 0) if kind is NodeKind.U else (0, 1)
        out = [
            (axis[0], axis[1], grad),
            (-axis[0], -axis[1], grad),
        ]
        if self.viscous:
            out += [
                (2, 0, like),
                (-2, 0, like),
                (0, 2, like),
                (0, -2, like),
            ]
        return tuple(out)


@dataclass(frozen=True)
class EdgeLayerSpec:
    """Edge node strips: ``normal_layers`` deep, ``tangential_layers`` past
    the interior span along each edge."""

    normal_layers: int = 1
    tangential_layers: int = 0

    def __post_init__(self):
        if self.normal_layers < 1:
            raise ValueError("normal_layers must be >= 1")
        if self.tangential_layers < 0:
            raise ValueError("tangential_layers must be >= 0")

    @property
    def name(self) -> str:
        return f"n{self.normal_layers}t{self.tangential_layers}"

    @classmethod
    def from_name(cls, text: str) -> "EdgeLayerSpec":
        import re

        m = re.fullmatch(r"n(\d+)t(\d+)", text)
        if not m:
            raise ValueError(f"bad edge layer spec {text!r}, want e.g. 'n2t0'")
        return cls(int(m.group(1)), int(m.group(2)))


def edge_nodes(spec: MicroGridSpec, layers: EdgeLayerSpec) -> list[tuple[int, int, NodeKind]]:
    """Edge node sites of a patch, deduped, sorted by (kind, i, j).

    Lateral strips run i in {1-alpha..0} and {m_x..m_x+alpha-1} over
    j in {1-tau..m_y-1+tau}; bottom/top strips are the transpose.  Sites are
    whatever the parity lattice provides, continued outward through the edge.
    """
    alpha = layers.normal_layers
    tau = layers.tangential_layers
    seen: set[tuple[int, int]] = set()
    out: list[tuple[int, int, NodeKind]] = []

    cols = list(range(1 - alpha, 1)) + list(range(spec.m_x, spec.m_x + alpha))
    rows = list(range(1 - alpha, 1)) + list(range(spec.m_y, spec.m_y + alpha))
    for i in cols:
        for j in range(1 - tau, spec.m_y + tau):
            k = spec.kind(i, j)
            if k is not None and (i, j) not in seen:
                seen.add((i, j))
                out.append((i, j, k))
    for j in rows:
        for i in range(1 - tau, spec.m_x + tau):
            k = spec.kind(i, j)
            if k is not None and (i, j) not in seen:
                seen.add((i, j))
                out.append((i, j, k))
    out.sort(key=lambda t: (t[2].value, t[0], t[1]))
    return out


def _owning_edges(spec: MicroGridSpec, i: int, j: int) -> list[str]:
    out = []
    if i <= 0:
        out.append("left")
    if i >= spec.m_x:
        out.append("right")
    if j <= 0:
        out.append("bottom")
    if j >= spec.m_y:
        out.append("top")
    return out


def is_compatible(
    spec: MicroGridSpec,
    stencil: Stencil,
    layers: EdgeLayerSpec = EdgeLayerSpec(1, 0),
    edge_kinds: dict[str, set[NodeKind]] | None = None,
) -> bool:
    """Whether every interior finite difference finds its neighbours.

    ``edge_kinds`` optionally overrides the node kinds available on a named
    edge, for what-if checks; by default an edge offers whatever the parity
    lattice puts there.
    """
    available = {(i, j): k for i, j, k in edge_nodes(spec, layers)}
    for i, j, kind in spec.interior_nodes():
        for di, dj, need in stencil.requirements(kind):
            ti, tj = i + di, j + dj
            if 1 <= ti <= spec.m_x - 1 and 1 <= tj <= spec.m_y - 1:
                if spec.kind(ti, tj) is not need:
                    return False
                continue
            if available.get((ti, tj)) is not need:
                return False
            if edge_kinds:
                for edge in _owning_edges(spec, ti, tj):
                    allowed = edge_kinds.get(edge)
                    if allowed is not None and need not in allowed:
                        return False
    return True


TYPE_CODE = {
    spec.name: 8 * (spec.name[0] == "u")
    + 4 * (spec.name[1] == "u")
    + 2 * (spec.name[2] == "v")
    + (spec.name[3] == "v")
    + 1
    for spec in enumerate_edge_types(6)
}
CODE_TYPE = {code: name for name, code in TYPE_CODE.items()}


@dataclass(frozen=True)
class PatchGridLayout:
    """A 2x2 macro-cell of patch types, one per slot, empties allowed.

    ``slots`` lists the edge-type name or None for each slot in the Id digit
    order (0,0),(1,0),(0,1),(1,1) of (p, q).  ``n`` picks the parity family
    (n/2 odd or even) and the actual micro-grid size used downstream.
    """

    slots: tuple[str | None, str | None, str | None, str | None]
    n: int = 6

    def __post_init__(self):
        if all(s is None for s in self.slots):
            raise ValueError("layout cannot be all-empty")
        for s in self.slots:
            if s is not None:
                validate_type_name(s)

    def type_at(self, p: int, q: int) -> str | None:
        return self.slots[ID_SLOT_ORDER.index((p, q))]

    def non_empty(self) -> list[tuple[tuple[int, int], str]]:
        """(slot, type name) pairs in state-vector slot order."""
        return [
            ((p, q), t)
            for (p, q) in STATE_SLOT_ORDER
            if (t := self.type_at(p, q)) is not None
        ]

    def spec_at(self, p: int, q: int) -> MicroGridSpec | None:
        t = self.type_at(p, q)
        return None if t is None else MicroGridSpec.from_name(t, self.n)

    def to_string(self) -> str:
        return ",".join(s if s is not None else EMPTY_TOKEN for s in self.slots)

    @classmethod
    def from_string(cls, text: str, n: int = 6) -> "PatchGridLayout":
        tokens = text.strip().split(",")
        if len(tokens) != 4:
            raise ValueError(
                f"layout string needs 4 comma-separated tokens, got {text!r}"
            )
        slots = tuple(None if t == EMPTY_TOKEN else t for t in tokens)
        return cls(slots, n)  # type: ignore[arg-type]

    @property
    def grid_id(self) -> int:
        return encode_id(self)


def encode_id(layout: PatchGridLayout) -> int:
    """Base-17 layout Id, digits most-significant-first over the slot order."""
    value = 0
    for s in layout.slots:
        value = value * 17 + (0 if s is None else TYPE_CODE[s])
    return value


def decode_id(grid_id: int, n: int = 6) -> PatchGridLayout:
    if not 1 <= grid_id <= N_LAYOUTS:
        raise ValueError(f"grid id must be in 1..{N_LAYOUTS}, got {grid_id}")
    digits = []
    v = grid_id
    for _ in range(4):
        v, d = divmod(v, 17)
        digits.append(d)
    slots = tuple(CODE_TYPE[d] if d else None for d in reversed(digits))
    return PatchGridLayout(slots, n)  # type: ignore[arg-type]


@dataclass(frozen=True)
class LayoutClass:
    centred: bool
    symmetric_only: bool
    centre_kinds: frozenset[NodeKind]


def classify_layout(layout: PatchGridLayout) -> LayoutClass:
    """Centred iff every non-empty patch is centred and the centre kinds
    cover all of h, u, v.  Symmetric-only iff every patch is symmetric."""
    kinds = []
    all_centred = True
    all_symmetric = True
    for _, name in layout.non_empty():
        spec = MicroGridSpec.from_name(name, layout.n)
        if spec.centre is None:
            all_centred = False
        else:
            kinds.append(spec.centre)
        if not spec.symmetric:
            all_symmetric = False
    covered = frozenset(kinds)
    return LayoutClass(
        centred=all_centred and covered >= {NodeKind.H, NodeKind.U, NodeKind.V},
        symmetric_only=all_symmetric,
        centre_kinds=covered,
    )


def iter_layouts(n: int = 6):
    """All 83520 layouts of a parity family, ascending Id."""
    for grid_id in range(1, N_LAYOUTS + 1):
        yield decode_id(grid_id, n)


def count_centred(n: int = 6) -> int:
    return sum(1 for lay in iter_layouts(n) if classify_layout(lay).centred)

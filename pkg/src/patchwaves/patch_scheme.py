"""Patch scheme assembly: node books, stencil operators, aggregates.

A scheme couples small staggered patches, one per non-empty layout slot,
repeated over an (N/2) x (N/2) lattice of macro-cells.  Everything the
dynamics needs is precomputed here as sparse per-slot operators:

* ``S_int``: interior -> interior stencil coefficients,
* ``S_edge``: edge -> interior stencil coefficients,
* aggregate rows: interior -> one macroscale value per field and patch.

State ordering.  Cell-local vectors list slots by (p, q) with p outer, each
patch contributing its h block, then u, then v, blocks sorted by (i, j) with
i outer.  Full-lattice vectors list patches by (I, J) with I outer, skipping
empty slots, each patch ordered the same way.  Edge vectors follow the same
slot/patch order with per-patch edge nodes sorted by (kind, i, j).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import pi

import numpy as np
import scipy.sparse as sp

from .grid_geometry import (
    EdgeLayerSpec,
    MicroGridSpec,
    NodeKind,
    PatchGridLayout,
    STATE_SLOT_ORDER,
    classify_layout,
    edge_nodes,
)
from .microscale_model import WaveParams


class SchemeError(ValueError):
    """Raised when a layout, stencil and edge-layer combination cannot be
    assembled into a patch scheme."""


@dataclass(frozen=True)
class GridParams:
    """Macroscale discretisation: domain edge L, N macro intervals,
    n micro intervals per patch, patch scale ratio r = l / (2 Delta)."""

    L: float = 2 * pi
    N: int = 10
    n: int = 6
    r: float = 0.1

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.N < 2 or self.N % 2:
            raise ValueError("N must be even and >= 2")
        if self.n < 4 or self.n % 2:
            raise ValueError("n must be even and >= 4")
        if not 0 < self.r <= 0.5:
            raise ValueError("r must be in (0, 0.5]")
        if self.delta >= self.Delta:
            raise ValueError("micro interval must be below macro interval")

    @property
    def Delta(self) -> float:
        return self.L / self.N

    @property
    def l(self) -> float:
        return 2 * self.r * self.Delta

    @property
    def delta(self) -> float:
        return self.l / self.n

    @property
    def m_cells(self) -> int:
        """Macro-cells per direction."""
        return self.N // 2

    def resolved_wavenumbers(self) -> list[int]:
        """Integer wavenumber residues the patch lattice resolves per axis."""
        m = self.m_cells
        return list(range(-((m - 1) // 2), m // 2 + 1))


_FIELD_ORDER = (NodeKind.H, NodeKind.U, NodeKind.V)


def _block_sorted(nodes):
    return sorted(nodes, key=lambda t: (_FIELD_ORDER.index(t[2]), t[0], t[1]))


def _nearest_shell(nodes, cx, cy):
    """Indices of the nodes at minimal Chebyshev distance from (cx, cy);
    ties are all kept, so an off-lattice target yields the symmetric pair
    or quad around it."""
    best, picks = None, []
    for t, (i, j, _) in enumerate(nodes):
        d = max(abs(i - cx), abs(j - cy))
        if best is None or d < best - 1e-9:
            best, picks = d, [t]
        elif abs(d - best) <= 1e-9:
            picks.append(t)
    return picks


@dataclass
class SlotScheme:
    """One layout slot: its micro-grid, node books and operators."""

    slot: tuple[int, int]
    spec: MicroGridSpec
    interior: list[tuple[int, int, NodeKind]]
    edge: list[tuple[int, int, NodeKind]]
    s_int: sp.csr_matrix
    s_edge: sp.csr_matrix
    agg: dict[NodeKind, tuple[np.ndarray, np.ndarray]]
    int_offset: int = 0
    edge_offset: int = 0

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def n_edge(self) -> int:
        return len(self.edge)

    def local_offsets(self, delta: float, which: str) -> np.ndarray:
        """Physical (x, y) offsets of nodes from the window centre."""
        nodes = self.interior if which == "interior" else self.edge
        cx, cy = self.spec.m_x / 2, self.spec.m_y / 2
        return np.array([[(i - cx) * delta, (j - cy) * delta] for i, j, _ in nodes])

    def nominal_offset(self, delta: float) -> tuple[float, float]:
        """Offset of the patch's anchor point from the window centre.

        The anchor is where the patch's aggregates are taken to live when
        edge values are interpolated: the centroid of the interior nodes
        nearest index point (n/2, n/2).  A node on that point anchors there
        exactly, and a symmetric ring of nearest nodes averages back onto
        it, so the anchor leaves (n/2, n/2) only for truncated windows
        whose nearest-node shell is lopsided.
        """
        half = self.spec.n / 2
        picks = _nearest_shell(self.interior, half, half)
        ax = sum(self.interior[t][0] for t in picks) / len(picks)
        ay = sum(self.interior[t][1] for t in picks) / len(picks)
        return ((ax - self.spec.m_x / 2) * delta,
                (ay - self.spec.m_y / 2) * delta)


def _build_slot(
    name: str, slot: tuple[int, int], params: GridParams,
    wave: WaveParams, layers: EdgeLayerSpec,
) -> SlotScheme:
    blocks = _cached_slot_blocks(
        name, params.n, params.delta, wave.c_d, wave.c_v,
        layers.normal_layers, layers.tangential_layers,
    )
    interior, edge, s_int, s_edge, agg = blocks
    return SlotScheme(slot, MicroGridSpec.from_name(name, params.n),
                      list(interior), list(edge), s_int, s_edge, dict(agg))


@lru_cache(maxsize=512)
def _cached_slot_blocks(name, n, delta, c_d, c_v, alpha, tau):
    """Per-type node books and operators; everything downstream of the slot
    position is position independent, so one cache entry serves every slot
    and every layout using this patch type."""
    spec = MicroGridSpec.from_name(name, n)
    layers = EdgeLayerSpec(alpha, tau)
    interior = _block_sorted(spec.interior_nodes())
    edge = edge_nodes(spec, layers)
    int_index = {(i, j): t for t, (i, j, _) in enumerate(interior)}
    edge_index = {(i, j): t for t, (i, j, _) in enumerate(edge)}

    rows_i, cols_i, vals_i = [], [], []
    rows_e, cols_e, vals_e = [], [], []

    def add(row, ti, tj, need, coeff):
        t = int_index.get((ti, tj))
        if t is not None:
            rows_i.append(row), cols_i.append(t), vals_i.append(coeff)
            return
        t = edge_index.get((ti, tj))
        if t is None or edge[t][2] is not need:
            raise SchemeError(
                f"patch {name}: stencil needs {need.value} at ({ti},{tj}) "
                f"which edge layers {layers.name} do not provide"
            )
        rows_e.append(row), cols_e.append(t), vals_e.append(coeff)

    inv2d = 1.0 / (2 * delta)
    inv4d2 = 1.0 / (4 * delta * delta)
    for row, (i, j, kind) in enumerate(interior):
        if kind is NodeKind.H:
            add(row, i + 1, j, NodeKind.U, -inv2d)
            add(row, i - 1, j, NodeKind.U, +inv2d)
            add(row, i, j + 1, NodeKind.V, -inv2d)
            add(row, i, j - 1, NodeKind.V, +inv2d)
            continue
        di, dj = (1, 0) if kind is NodeKind.U else (0, 1)
        add(row, i + di, j + dj, NodeKind.H, -inv2d)
        add(row, i - di, j - dj, NodeKind.H, +inv2d)
        if c_d:
            rows_i.append(row), cols_i.append(row), vals_i.append(-c_d)
        if c_v:
            for ti, tj in ((i + 2, j), (i - 2, j), (i, j + 2), (i, j - 2)):
                add(row, ti, tj, kind, c_v * inv4d2)
            rows_i.append(row), cols_i.append(row), vals_i.append(-4 * c_v * inv4d2)

    n_i, n_e = len(interior), len(edge)
    s_int = sp.csr_matrix((vals_i, (rows_i, cols_i)), shape=(n_i, n_i))
    s_edge = sp.csr_matrix((vals_e, (rows_e, cols_e)), shape=(n_i, n_e))

    agg = {}
    # aggregate = mean of the field's nodes nearest the macro site (n/2, n/2)
    cx = cy = n / 2
    for kind in _FIELD_ORDER:
        own = [t for t, (_, _, k) in enumerate(interior) if k is kind]
        if not own:
            raise SchemeError(f"patch {name}: no interior {kind.value} nodes "
                              "to aggregate")
        picks = [own[t] for t in _nearest_shell(
            [interior[t] for t in own], cx, cy)]
        agg[kind] = (np.array(picks), np.full(len(picks), 1.0 / len(picks)))

    return tuple(interior), tuple(edge), s_int, s_edge, tuple(agg.items())


@dataclass
class PatchScheme:
    """A fully assembled patch scheme over one layout."""

    layout: PatchGridLayout
    params: GridParams
    wave: WaveParams
    layers: EdgeLayerSpec
    slots: list[SlotScheme]
    coupling: str = "self"
    carriers: dict[NodeKind, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        off_i = off_e = 0
        for s in self.slots:
            s.int_offset, s.edge_offset = off_i, off_e
            off_i += s.n_interior
            off_e += s.n_edge
        self._n_interior_cell = off_i
        self._n_edge_cell = off_e
        self._cell_cache: dict[str, np.ndarray] = {}
        self._full_cache: dict[str, object] = {}

    @property
    def n_interior_cell(self) -> int:
        return self._n_interior_cell

    @property
    def n_edge_cell(self) -> int:
        return self._n_edge_cell

    @property
    def n_cells(self) -> int:
        return self.params.m_cells ** 2

    @property
    def n_interior_total(self) -> int:
        return self.n_cells * self.n_interior_cell

    @property
    def n_edge_total(self) -> int:
        return self.n_cells * self.n_edge_cell

    # cell-local operators

    def cell_interior_matrix(self) -> np.ndarray:
        if "s_int" not in self._cell_cache:
            self._cell_cache["s_int"] = sp.block_diag(
                [s.s_int for s in self.slots], format="csr").toarray()
        return self._cell_cache["s_int"]

    def cell_edge_matrix(self) -> np.ndarray:
        if "s_edge" not in self._cell_cache:
            self._cell_cache["s_edge"] = sp.block_diag(
                [s.s_edge for s in self.slots], format="csr").toarray()
        return self._cell_cache["s_edge"]

    def edge_sources(self, si: int, kind: NodeKind) -> list[int]:
        """Slots whose aggregate drives slot si's edge values of one field:
        the field's carrier slots under centred coupling, the patch itself
        otherwise."""
        if self.coupling == "centred":
            return self.carriers[kind]
        return [si]

    def cell_aggregate_rows(self) -> dict[NodeKind, np.ndarray]:
        """Mean aggregate row per field over that field's carrier slots,
        embedded in cell-local interior indices.  Centred coupling only;
        under self coupling no shared per-field row exists."""
        if self.coupling != "centred":
            raise SchemeError(
                "per-field aggregate rows need centred coupling, "
                f"scheme uses {self.coupling!r}"
            )
        if "agg_rows" not in self._cell_cache:
            rows = {}
            for kind in _FIELD_ORDER:
                row = np.zeros(self.n_interior_cell)
                picks = self.carriers[kind]
                for si in picks:
                    s = self.slots[si]
                    idx, w = s.agg[kind]
                    row[s.int_offset + idx] += w / len(picks)
                rows[kind] = row
            self._cell_cache["agg_rows"] = rows
        return self._cell_cache["agg_rows"]

    def edge_fields_and_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Per cell-local edge node: field index (0,1,2 for h,u,v) and the
        physical (x, y) offset from the owning patch centre."""
        if "edge_geo" not in self._cell_cache:
            kinds = np.concatenate([
                np.array([_FIELD_ORDER.index(k) for _, _, k in s.edge], dtype=int)
                for s in self.slots
            ])
            offs = np.concatenate([
                s.local_offsets(self.params.delta, "edge") for s in self.slots
            ])
            self._cell_cache["edge_geo"] = (kinds, offs)
        return self._cell_cache["edge_geo"]

    def describe(self) -> dict:
        cls = classify_layout(self.layout)
        return {
            "layout": self.layout.to_string(),
            "grid_id": self.layout.grid_id,
            "n": self.params.n,
            "N": self.params.N,
            "L": self.params.L,
            "r": self.params.r,
            "Delta": self.params.Delta,
            "delta": self.params.delta,
            "edge_layers": self.layers.name,
            "centred": cls.centred,
            "symmetric_only": cls.symmetric_only,
            "coupling": self.coupling,
            "n_cells": self.n_cells,
            "interior_per_cell": self.n_interior_cell,
            "edge_per_cell": self.n_edge_cell,
            "interior_total": self.n_interior_total,
            "edge_total": self.n_edge_total,
            "slots": [
                {
                    "slot": list(s.slot),
                    "type": s.spec.name,
                    "centre": s.spec.centre.value if s.spec.centre else None,
                    "interior": s.n_interior,
                    "edge": s.n_edge,
                    "aggregates": {
                        k.value: [list(s.interior[t][:2]) for t in idx]
                        for k, (idx, _) in s.agg.items()
                    },
                }
                for s in self.slots
            ],
            "carriers": {
                k.value: [list(self.slots[si].slot) for si in picks]
                for k, picks in self.carriers.items()
            },
        }


def build_scheme(
    layout: PatchGridLayout,
    params: GridParams,
    wave: WaveParams = WaveParams(),
    layers: EdgeLayerSpec = EdgeLayerSpec(1, 0),
) -> PatchScheme:
    """Assemble the scheme, or raise SchemeError with the offending stencil."""
    if layout.n != params.n:
        raise SchemeError(
            f"layout parity family n={layout.n} != grid n={params.n}"
        )
    if wave.c_v and layers.normal_layers < 2:
        raise SchemeError(
            "viscosity reaches 2 sites past the interior; edge layers "
            f"{layers.name} provide normal_layers={layers.normal_layers} < 2"
        )
    slots = [
        _build_slot(name, slot, params, wave, layers)
        for slot, name in layout.non_empty()
    ]
    scheme = PatchScheme(layout, params, wave, layers, slots)
    if classify_layout(layout).centred:
        scheme.coupling = "centred"
        scheme.carriers = _pick_carriers(scheme)
    return scheme


def _pick_carriers(scheme: PatchScheme) -> dict[NodeKind, list[int]]:
    """Per field, the slots centred on that field.  A centred layout has at
    least one for every field; their exact centre values feed every patch's
    edges for the field."""
    return {
        kind: [si for si, s in enumerate(scheme.slots) if s.spec.centre is kind]
        for kind in _FIELD_ORDER
    }


def rhs_patch(x_interior: np.ndarray, x_edge: np.ndarray, scheme: PatchScheme) -> np.ndarray:
    """Cell-local time derivative given interior and edge values."""
    if x_interior.shape[-1] != scheme.n_interior_cell:
        raise ValueError("interior vector has wrong length")
    if x_edge.shape[-1] != scheme.n_edge_cell:
        raise ValueError("edge vector has wrong length")
    return (
        scheme.cell_interior_matrix() @ x_interior
        + scheme.cell_edge_matrix() @ x_edge
    )


def aggregate_values(scheme: PatchScheme, x_cell: np.ndarray) -> dict:
    """Per-slot, per-field macroscale values of one cell state."""
    out = {}
    for s in scheme.slots:
        for kind in _FIELD_ORDER:
            idx, w = s.agg[kind]
            out[(s.slot, kind.value)] = complex(
                np.dot(x_cell[s.int_offset + idx], w)
            ) if np.iscomplexobj(x_cell) else float(
                np.dot(x_cell[s.int_offset + idx], w)
            )
    return out


# full-lattice index books


def full_index_arrays(scheme: PatchScheme) -> dict:
    """Gather indices for the (I, J)-ordered full state and edge vectors.

    Returns per slot position s arrays ``interior[s]`` of shape
    (M, M, n_interior_s) and ``edge[s]`` of shape (M, M, n_edge_s), where the
    patch of slot (p, q) in macro-cell (a, b) sits at (I, J) = (2a+p, 2b+q).
    """
    if "gidx" in scheme._full_cache:
        return scheme._full_cache["gidx"]
    params = scheme.params
    m = params.m_cells
    by_slot = {s.slot: si for si, s in enumerate(scheme.slots)}
    int_start = {}
    edge_start = {}
    off_i = off_e = 0
    for bigi in range(params.N):
        for bigj in range(params.N):
            si = by_slot.get((bigi % 2, bigj % 2))
            if si is None:
                continue
            int_start[(bigi, bigj)] = off_i
            edge_start[(bigi, bigj)] = off_e
            off_i += scheme.slots[si].n_interior
            off_e += scheme.slots[si].n_edge
    interior, edge = [], []
    for s in scheme.slots:
        p, q = s.slot
        gi = np.empty((m, m, s.n_interior), dtype=np.intp)
        ge = np.empty((m, m, s.n_edge), dtype=np.intp)
        for a in range(m):
            for b in range(m):
                start = int_start[(2 * a + p, 2 * b + q)]
                gi[a, b] = np.arange(start, start + s.n_interior)
                start = edge_start[(2 * a + p, 2 * b + q)]
                ge[a, b] = np.arange(start, start + s.n_edge)
        interior.append(gi)
        edge.append(ge)
    out = {"interior": interior, "edge": edge,
           "n_interior": off_i, "n_edge": off_e}
    scheme._full_cache["gidx"] = out
    return out


def patch_centres(scheme: PatchScheme, slot_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Physical centre coordinates of one slot's patches, each (M, M)."""
    p, q = scheme.slots[slot_index].slot
    m = scheme.params.m_cells
    d = scheme.params.Delta
    xs = d * (2 * np.arange(m) + p)
    ys = d * (2 * np.arange(m) + q)
    return np.broadcast_to(xs[:, None], (m, m)), np.broadcast_to(ys[None, :], (m, m))

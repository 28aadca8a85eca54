"""Scheme assembly oracles.

Frozen counts for the three-patch centred layouts: interior per cell
9n^2/4 - 4n + 2 = {59, 187, 387} at n = {6, 10, 14}, 531 interior nodes for
N=6, single-layer edge total 360 at N=6, and two-layer per-cell edge counts
{92, 164, 236}.  The state ordering oracle is the worked 59-entry listing:
slot blocks (0,0), (0,1), (1,0), fields h, u, v, nodes (i, j) with i outer.
"""

import json
from math import pi

import numpy as np
import pytest

from patchwaves.grid_geometry import (
    EdgeLayerSpec,
    NodeKind,
    PatchGridLayout,
    decode_id,
)
from patchwaves.microscale_model import WaveParams
from patchwaves.patch_scheme import (
    GridParams,
    SchemeError,
    aggregate_values,
    build_scheme,
    full_index_arrays,
    rhs_patch,
)

HUV = decode_id(79985)
IDEAL = WaveParams()
DAMPED = WaveParams(c_d=1e-6, c_v=1e-4)


def scheme_for(n=6, N=10, r=0.1, wave=IDEAL, layers=EdgeLayerSpec(1, 0), layout=None):
    lay = layout if layout is not None else decode_id(79985, n)
    return build_scheme(lay, GridParams(N=N, n=n, r=r), wave, layers)


def test_micro_interval_worked_values():
    assert GridParams(N=10, n=6, r=0.01).delta == pytest.approx(2 * pi / 3000, rel=1e-14)
    assert GridParams(N=14, n=6, r=0.1).delta == pytest.approx(2 * pi / 420, rel=1e-14)
    assert GridParams(N=10, n=6, r=0.1).delta == pytest.approx(2 * pi / 300, rel=1e-14)


def test_param_validation():
    with pytest.raises(ValueError):
        GridParams(N=9)
    with pytest.raises(ValueError):
        GridParams(n=5)
    with pytest.raises(ValueError):
        GridParams(r=0.6)
    with pytest.raises(ValueError):
        GridParams(r=0.0)


@pytest.mark.parametrize("N,want", [(6, [-1, 0, 1]), (10, [-2, -1, 0, 1, 2]),
                                    (14, [-3, -2, -1, 0, 1, 2, 3])])
def test_resolved_wavenumbers(N, want):
    assert GridParams(N=N).resolved_wavenumbers() == want


@pytest.mark.parametrize("n,per_cell", [(6, 59), (10, 187), (14, 387)])
def test_interior_count_identity(n, per_cell):
    s = scheme_for(n=n)
    assert s.n_interior_cell == per_cell
    assert per_cell == 9 * n * n // 4 - 4 * n + 2


def test_total_interior_count_n6():
    s = scheme_for(N=6)
    assert s.n_interior_total == 531
    assert full_index_arrays(s)["n_interior"] == 531


def test_single_layer_edge_total_n6():
    s = scheme_for(N=6)
    assert s.n_edge_cell == 40
    assert s.n_edge_total == 360


@pytest.mark.parametrize("n,per_cell", [(6, 92), (10, 164), (14, 236)])
def test_two_layer_edge_counts(n, per_cell):
    s = scheme_for(n=n, layers=EdgeLayerSpec(2, 0))
    assert s.n_edge_cell == per_cell


def test_state_ordering_matches_worked_listing():
    s = scheme_for()
    assert [sl.spec.name for sl in s.slots] == ["uuvv", "uuhh", "hhvv"]
    assert [sl.slot for sl in s.slots] == [(0, 0), (0, 1), (1, 0)]
    assert [sl.n_interior for sl in s.slots] == [21, 19, 19]
    uuvv = s.slots[0].interior
    assert uuvv[:3] == [(1, 1, NodeKind.H), (1, 3, NodeKind.H), (1, 5, NodeKind.H)]
    assert uuvv[8] == (5, 5, NodeKind.H)
    assert uuvv[9] == (2, 1, NodeKind.U)
    assert uuvv[15] == (1, 2, NodeKind.V)
    uuhh = s.slots[1].interior
    assert uuhh[0] == (1, 2, NodeKind.H)
    assert uuhh[6] == (2, 2, NodeKind.U)
    assert uuhh[10] == (1, 1, NodeKind.V)
    hhvv = s.slots[2].interior
    assert hhvv[0] == (2, 1, NodeKind.H)
    assert hhvv[6] == (1, 1, NodeKind.U)
    assert hhvv[15] == (2, 2, NodeKind.V)


def test_rhs_patch_column_probe():
    s = scheme_for()
    d = s.params.delta
    idx = {node: t for t, node in enumerate(s.slots[0].interior)}
    x = np.zeros(s.n_interior_cell)
    x[idx[(2, 3, NodeKind.U)]] = 1.0
    dx = rhs_patch(x, np.zeros(s.n_edge_cell), s)
    assert dx[idx[(1, 3, NodeKind.H)]] == pytest.approx(-1 / (2 * d))
    assert dx[idx[(3, 3, NodeKind.H)]] == pytest.approx(+1 / (2 * d))
    # u feels h gradients only, so the u column stays clear of u rows
    assert dx[idx[(2, 3, NodeKind.U)]] == 0.0


def test_rhs_patch_drag_is_diagonal():
    s = scheme_for(wave=WaveParams(c_d=0.25))
    idx = {node: t for t, node in enumerate(s.slots[0].interior)}
    x = np.zeros(s.n_interior_cell)
    x[idx[(2, 3, NodeKind.U)]] = 2.0
    dx = rhs_patch(x, np.zeros(s.n_edge_cell), s)
    assert dx[idx[(2, 3, NodeKind.U)]] == pytest.approx(-0.5)
    # h carries no drag
    x[:] = 0
    x[idx[(3, 3, NodeKind.H)]] = 1.0
    dx = rhs_patch(x, np.zeros(s.n_edge_cell), s)
    assert dx[idx[(3, 3, NodeKind.H)]] == 0.0


def test_viscosity_needs_second_layer():
    with pytest.raises(SchemeError, match="normal_layers"):
        scheme_for(wave=DAMPED, layers=EdgeLayerSpec(1, 0))
    s = scheme_for(wave=DAMPED, layers=EdgeLayerSpec(2, 0))
    assert s.n_edge_cell == 92


def test_layout_grid_parity_mismatch():
    with pytest.raises(SchemeError, match="parity"):
        build_scheme(decode_id(79985, n=4), GridParams(N=10, n=6, r=0.1))


def test_aggregates_centred_fields_use_centre_nodes():
    s = scheme_for()
    uuvv = s.slots[0]
    idx, w = uuvv.agg[NodeKind.H]
    assert [uuvv.interior[t][:2] for t in idx] == [(3, 3)]
    assert w.tolist() == [1.0]
    idx, w = uuvv.agg[NodeKind.U]
    assert sorted(uuvv.interior[t][:2] for t in idx) == [(2, 3), (4, 3)]
    assert np.allclose(w, 0.5)
    idx, w = uuvv.agg[NodeKind.V]
    assert sorted(uuvv.interior[t][:2] for t in idx) == [(3, 2), (3, 4)]


def test_aggregates_non_centred_patch():
    # truncated windows keep (3, 3) as the macro site: the h node lands on
    # it, u and v fall back to their straddling pairs
    s = scheme_for(layout=decode_id(56236))
    uhvh = s.slots[0]
    assert uhvh.spec.name == "uhvh"
    want = {NodeKind.H: [(3, 3)],
            NodeKind.U: [(2, 3), (4, 3)],
            NodeKind.V: [(3, 2), (3, 4)]}
    for kind, nodes in want.items():
        idx, w = uhvh.agg[kind]
        assert sorted(uhvh.interior[t][:2] for t in idx) == nodes
        assert np.allclose(w, 1.0 / len(nodes))
    uhhv = s.slots[1]
    assert uhhv.spec.name == "uhhv"
    idx, w = uhhv.agg[NodeKind.U]
    assert sorted(uhhv.interior[t][:2] for t in idx) \
        == [(2, 2), (2, 4), (4, 2), (4, 4)]
    assert np.allclose(w, 0.25)


def test_aggregate_values_reads_cell_state():
    s = scheme_for()
    x = np.zeros(s.n_interior_cell)
    uuvv = s.slots[0]
    centre = next(t for t, (i, j, k) in enumerate(uuvv.interior)
                  if (i, j, k) == (3, 3, NodeKind.H))
    x[uuvv.int_offset + centre] = 4.5
    vals = aggregate_values(s, x)
    assert vals[((0, 0), "h")] == pytest.approx(4.5)
    assert vals[((0, 0), "u")] == 0.0
    assert vals[((1, 0), "h")] == 0.0


def test_coupling_mode_and_carrier_choice():
    s = scheme_for()
    assert s.coupling == "centred"
    names = {k: [s.slots[si].spec.name for si in v] for k, v in s.carriers.items()}
    assert names == {NodeKind.H: ["uuvv"], NodeKind.U: ["hhvv"],
                     NodeKind.V: ["uuhh"]}
    assert s.edge_sources(1, NodeKind.H) == [0]
    # four-patch layout with a repeated h patch: two h carriers
    s = scheme_for(layout=decode_id(80001))
    assert s.coupling == "centred"
    assert [s.slots[si].spec.name for si in s.carriers[NodeKind.H]] \
        == ["uuvv", "uuvv"]
    # any non-centred layout couples each patch to itself
    s = scheme_for(layout=decode_id(56236))
    assert s.coupling == "self"
    assert s.carriers == {}
    assert [s.edge_sources(si, NodeKind.U) for si in range(3)] \
        == [[0], [1], [2]]
    with pytest.raises(SchemeError, match="centred coupling"):
        s.cell_aggregate_rows()


def test_describe_is_json_serializable():
    s = scheme_for(N=6)
    doc = json.loads(json.dumps(s.describe()))
    assert doc["grid_id"] == 79985
    assert doc["interior_total"] == 531
    assert doc["edge_layers"] == "n1t0"
    assert len(doc["slots"]) == 3


def test_full_index_arrays_are_permutations():
    s = scheme_for(N=6)
    gidx = full_index_arrays(s)
    allg = np.concatenate([g.ravel() for g in gidx["interior"]])
    assert np.array_equal(np.sort(allg), np.arange(531))
    alle = np.concatenate([g.ravel() for g in gidx["edge"]])
    assert np.array_equal(np.sort(alle), np.arange(360))


def test_full_ordering_is_patch_major():
    # first patch in (I, J) order for the three-patch layout is (0, 0)=uuvv,
    # then (0, 1)=uuhh in the same macro-cell
    s = scheme_for(N=6)
    gidx = full_index_arrays(s)
    assert gidx["interior"][0][0, 0, 0] == 0
    assert gidx["interior"][1][0, 0, 0] == 21  # uuhh block follows uuvv
    # hhvv lives at patch (1, 0), after the whole I=0 row of 3 uuvv + 3 uuhh
    assert gidx["interior"][2][0, 0, 0] == 3 * 21 + 3 * 19

"""Edge coupling by spectral interpolation of patch aggregates.

Every patch reports one aggregate value per field, anchored at its macro
lattice site.  The aggregates of one source slot form a doubly periodic
array over the macro-cell lattice (spacing two macro intervals);
trigonometric interpolation of that array, evaluated at the physical
edge-node positions, closes the patch dynamics.

Which slots source a patch's edges depends on the layout.  When every patch
is centred and the three centre kinds cover h, u and v, each field is
interpolated from the patches centred on it (several carriers average their
interpolants); the aggregate there is the exact centre value, which keeps
resolved wave modes exact.  Any other layout falls back to self coupling:
each patch's edges interpolate that patch's own aggregate array.

Two routes to the same closure live here.  ``couple_edges_fft`` evaluates it
for a full state vector with one FFT per source array and one phase-shifted
inverse FFT per (slot, field, source) triple.  ``one_cell_edge_closure``
reduces it, for one Bloch wavevector, to a dense (edge x interior) matrix on
a single macro-cell; writing patch states as chi * exp(i k . X_site) makes
the inter-slot phase offsets cancel, leaving only each edge node's offset
from its own patch site.
"""

from __future__ import annotations

import numpy as np

from .grid_geometry import NodeKind
from .patch_scheme import PatchScheme, full_index_arrays

_FIELDS = (NodeKind.H, NodeKind.U, NodeKind.V)


class CouplingError(ValueError):
    """Raised when a state vector cannot be coupled on this scheme."""


def coupling_wavenumbers(scheme: PatchScheme) -> np.ndarray:
    """Physical wavenumbers of the carrier lattice in FFT index order."""
    m = scheme.params.m_cells
    return 2 * np.pi * np.fft.fftfreq(m, d=2 * scheme.params.Delta)


def _axis_phases(ks: np.ndarray, off: np.ndarray, m: int) -> np.ndarray:
    """exp(i k off) per (node, wavenumber); an even m folds the Nyquist
    mode to its cosine so real data stays real."""
    p = np.exp(1j * np.outer(off, ks))
    if m % 2 == 0:
        p[:, m // 2] = np.cos(ks[m // 2] * off)
    return p


def _coupling_plan(scheme: PatchScheme) -> dict:
    if "coupling" in scheme._full_cache:
        return scheme._full_cache["coupling"]
    ks = coupling_wavenumbers(scheme)
    m = scheme.params.m_cells
    Delta = scheme.params.Delta
    delta = scheme.params.delta
    per_slot = []
    for si, s in enumerate(scheme.slots):
        offs = s.local_offsets(delta, "edge")
        sx, sy = s.nominal_offset(delta)
        kinds = [k for _, _, k in s.edge]
        fields = {}
        for f in _FIELDS:
            es = np.array([t for t, k in enumerate(kinds) if k is f], dtype=np.intp)
            srcs = scheme.edge_sources(si, f)
            phases = []
            for ci in srcs:
                c = scheme.slots[ci]
                off_x = (s.slot[0] - c.slot[0]) * Delta + offs[es, 0] - sx
                off_y = (s.slot[1] - c.slot[1]) * Delta + offs[es, 1] - sy
                px = _axis_phases(ks, off_x, m)
                py = _axis_phases(ks, off_y, m)
                phases.append(px[:, :, None] * py[:, None, :])
            fields[f] = (es, srcs, phases)
        per_slot.append(fields)
    plan = {"ks": ks, "per_slot": per_slot}
    scheme._full_cache["coupling"] = plan
    return plan


def carrier_aggregates(scheme: PatchScheme, x_full: np.ndarray) -> dict:
    """(field, source slot index) -> (M, M) aggregate array."""
    gidx = full_index_arrays(scheme)
    out = {}
    for si in range(len(scheme.slots)):
        for f in _FIELDS:
            for ci in scheme.edge_sources(si, f):
                if (f, ci) in out:
                    continue
                s = scheme.slots[ci]
                idx, w = s.agg[f]
                out[(f, ci)] = x_full[gidx["interior"][ci]][:, :, idx] @ w
    return out


def couple_edges_fft(scheme: PatchScheme, x_full: np.ndarray) -> np.ndarray:
    """Edge values for a full interior state, via FFT interpolation."""
    x_full = np.asarray(x_full)
    if x_full.shape != (scheme.n_interior_total,):
        raise CouplingError(
            f"state has shape {x_full.shape}, scheme needs "
            f"({scheme.n_interior_total},)"
        )
    plan = _coupling_plan(scheme)
    gidx = full_index_arrays(scheme)
    spectra = {
        key: np.fft.fft2(D)
        for key, D in carrier_aggregates(scheme, x_full).items()
    }
    edges = np.zeros(scheme.n_edge_total, dtype=complex)
    for si, s in enumerate(scheme.slots):
        ge = gidx["edge"][si]
        for f in _FIELDS:
            es, srcs, phases = plan["per_slot"][si][f]
            if es.size == 0:
                continue
            acc = np.zeros((es.size,) + spectra[(f, srcs[0])].shape,
                           dtype=complex)
            for ci, P in zip(srcs, phases):
                acc += np.fft.ifft2(spectra[(f, ci)][None, :, :] * P,
                                    axes=(1, 2))
            acc /= len(srcs)
            edges[ge[:, :, es]] = np.moveaxis(acc, 0, -1)
    return edges if np.iscomplexobj(x_full) else edges.real


def fill_edges_extrapolate(scheme: PatchScheme, x_full: np.ndarray) -> np.ndarray:
    """Constant closure: every edge node copies its own patch's aggregate.

    Deliberately too crude to couple patches; useful as a contrast case when
    probing how much the interpolation matters.
    """
    x_full = np.asarray(x_full)
    if x_full.shape != (scheme.n_interior_total,):
        raise CouplingError(
            f"state has shape {x_full.shape}, scheme needs "
            f"({scheme.n_interior_total},)"
        )
    gidx = full_index_arrays(scheme)
    edges = np.zeros(scheme.n_edge_total, dtype=x_full.dtype)
    for si, s in enumerate(scheme.slots):
        ge = gidx["edge"][si]
        own = x_full[gidx["interior"][si]]
        kinds = [k for _, _, k in s.edge]
        for f in _FIELDS:
            es = np.array([t for t, k in enumerate(kinds) if k is f], dtype=np.intp)
            if es.size == 0:
                continue
            idx, w = s.agg[f]
            edges[ge[:, :, es]] = (own[:, :, idx] @ w)[:, :, None]
    return edges


def one_cell_edge_closure(scheme: PatchScheme, kx: float, ky: float) -> np.ndarray:
    """Closure matrix C(k) with edge = C(k) @ interior on one macro-cell.

    Valid for Bloch states chi exp(i(kx X_I + ky Y_J)) at resolved
    wavenumbers.  Rows of one (slot, field) pair share a single source row
    up to the phase of the edge node's offset from the patch site, so
    rank(C) <= 3 under centred coupling and C is per-slot block diagonal
    under self coupling.
    """
    fe, offs = scheme.edge_fields_and_offsets()
    delta = scheme.params.delta
    C = np.zeros((scheme.n_edge_cell, scheme.n_interior_cell), dtype=complex)
    for si, s in enumerate(scheme.slots):
        sx, sy = s.nominal_offset(delta)
        rows = slice(s.edge_offset, s.edge_offset + s.n_edge)
        ph = np.exp(1j * (kx * (offs[rows, 0] - sx)
                          + ky * (offs[rows, 1] - sy)))
        for fi, f in enumerate(_FIELDS):
            er = np.flatnonzero(fe[rows] == fi)
            if er.size == 0:
                continue
            srcs = scheme.edge_sources(si, f)
            g = np.zeros(scheme.n_interior_cell)
            for ci in srcs:
                c = scheme.slots[ci]
                idx, w = c.agg[f]
                g[c.int_offset + idx] += w / len(srcs)
            C[s.edge_offset + er, :] = ph[er][:, None] * g[None, :]
    return C

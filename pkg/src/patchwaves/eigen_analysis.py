"""Bloch eigenanalysis of patch schemes.

The coupled dynamics over the whole patch lattice block-diagonalises over
the resolved wavenumbers of the macro-cell lattice: one dense Jacobian per
wavevector, of one macro-cell's interior size.  Eigenvalues at -k are the
conjugates of those at +k, so scans over a symmetric wavenumber set only
factor half of it.

Mode classes.  A threshold box picks the modes that should shadow the
microscale dispersion relation: Re above ``macro_re_min`` and |Im| below
``macro_im_max``.  A structural ratio (RMS of within-patch, within-field
deviations over RMS of the whole eigenvector) gives an independent check
that a selected mode really is smooth across each patch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import isfinite

import numpy as np

from .grid_geometry import NodeKind
from .microscale_model import eig_mu
from .patch_scheme import PatchScheme
from .spectral_coupling import one_cell_edge_closure


class AnalysisError(RuntimeError):
    """Raised when an eigensolve fails, with the offending wavevector."""


@dataclass(frozen=True)
class ModeThresholds:
    macro_re_min: float = -0.01
    macro_im_max: float = 10.0
    unstable_re: float = 1e-5
    structure_ratio: float = 0.5


def one_cell_jacobian(scheme: PatchScheme, kx: float, ky: float) -> np.ndarray:
    """Dense cell Jacobian at one Bloch wavevector."""
    c = one_cell_edge_closure(scheme, kx, ky)
    return scheme.cell_interior_matrix() + scheme.cell_edge_matrix() @ c


def zero_multiplicity(j: np.ndarray, rtol: float | None = None) -> int:
    """Algebraic multiplicity of the eigenvalue 0 of j.

    Counts generalized null vectors level by level: first the kernel, then
    vectors j maps into the kernel, and so on (a staircase; the increments
    are the Weyr characteristic of 0).  Every level tests singular values
    of a compression of j itself against one cutoff relative to
    sigma_max(j).  Powers of j would be simpler but leak: a genuine
    eigenvalue mu shrinks like |mu|^p in j^p and eventually drops below
    any rank tolerance, which would count damped modes as kernel.
    """
    n = j.shape[0]
    if n == 0:
        return 0
    smax = np.linalg.norm(j, 2)
    if smax == 0.0:
        return n
    tol = smax * (n * np.finfo(float).eps if rtol is None else rtol)
    kernel = None
    rest = np.eye(n, dtype=j.dtype)
    mult = 0
    for _ in range(n):
        b = j @ rest
        if kernel is not None:
            b = b - kernel @ (kernel.conj().T @ b)
        _, sv, vh = np.linalg.svd(b)
        k = int(np.count_nonzero(sv < tol)) + (rest.shape[1] - sv.size)
        if k == 0:
            return mult
        mult += k
        v = vh.conj().T
        grown = rest @ v[:, v.shape[1] - k:]
        rest = rest @ v[:, :v.shape[1] - k]
        kernel = grown if kernel is None else np.hstack([kernel, grown])
        kernel, _ = np.linalg.qr(kernel)
        if rest.shape[1] == 0:
            return mult
    return mult


def deflate_zero_cluster(j: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Replace the numerically split zero eigenvalues of j with exact zeros.

    A defective zero of height p splits, in finite precision, into a ring of
    eigenvalues of size about (norm(j) eps)^(1/p), which can cross an
    instability threshold; the subspace-counted multiplicity is immune to
    that splitting.  The ``m`` smallest-magnitude entries of w are zeroed,
    m the algebraic multiplicity of 0.
    """
    m = zero_multiplicity(j)
    if m == 0:
        return w
    w = w.copy()
    w[np.argsort(np.abs(w))[:m]] = 0.0
    return w


def patch_spectrum(scheme: PatchScheme, kx: float, ky: float,
                   eigvecs: bool = False, deflate: bool = True):
    """Eigenvalues (and optionally eigenvectors) of the cell Jacobian.

    Unless ``deflate`` is off, the zero cluster is snapped to exact zeros;
    see ``deflate_zero_cluster``.
    """
    j = one_cell_jacobian(scheme, kx, ky)
    try:
        if eigvecs:
            w, v = np.linalg.eig(j)
        else:
            w, v = np.linalg.eigvals(j), None
    except np.linalg.LinAlgError as exc:
        raise AnalysisError(
            f"eigensolve failed for grid #{scheme.layout.grid_id} at "
            f"k=({kx}, {ky}): {exc}"
        ) from exc
    if deflate:
        w = deflate_zero_cluster(j, w)
    return (w, v) if eigvecs else w


def high_precision_spectrum(scheme: PatchScheme, kx: float, ky: float,
                            dps: int = 20, deflate: bool = True) -> np.ndarray:
    """Eigenvalues of the cell Jacobian at ``dps`` significant digits.

    The fast double path cannot certify distances to the imaginary axis
    below its round-off floor eps * norm(j), about 1e-12 when delta is
    2*pi/3000.  This one runs the QR iteration in software floats
    (mpmath), so a wave-preserving scheme shows real parts at the 1e-17
    level instead of solver noise.  Two orders of magnitude slower than
    ``patch_spectrum``; meant for certification runs, not sweeps.

    Deflation still applies: a defective zero splits into a ring of size
    (norm(j) * 10**-dps)**(1/height) no matter the precision, so the
    multiplicity count from ``zero_multiplicity`` snaps the cluster here
    exactly as in the double path.
    """
    import mpmath as mp

    j = one_cell_jacobian(scheme, kx, ky)
    with mp.workdps(dps):
        jm = mp.matrix([[mp.mpc(z) for z in row] for row in j.tolist()])
        w = np.array([complex(z) for z in
                      mp.eig(jm, left=False, right=False)])
    if deflate:
        w = deflate_zero_cluster(j, w)
    return w


def micro_reference(scheme: PatchScheme, kx: float, ky: float) -> np.ndarray:
    """The three microscale eigenvalues the macroscale modes should shadow."""
    return eig_mu(kx, ky, scheme.params.delta, scheme.wave)


def macroscale_mask(w: np.ndarray,
                    thresholds: ModeThresholds = ModeThresholds()) -> np.ndarray:
    return (w.real > thresholds.macro_re_min) \
        & (np.abs(w.imag) < thresholds.macro_im_max)


def structure_ratios(scheme: PatchScheme, v: np.ndarray) -> np.ndarray:
    """Per-column RMS(within-patch-field deviation) / RMS(column)."""
    groups = []
    for s in scheme.slots:
        for kind in (NodeKind.H, NodeKind.U, NodeKind.V):
            rows = np.array([
                s.int_offset + t for t, (_, _, k) in enumerate(s.interior)
                if k is kind
            ])
            groups.append(rows)
    dev = np.empty_like(v)
    for rows in groups:
        block = v[rows, :]
        dev[rows, :] = block - block.mean(axis=0, keepdims=True)
    num = np.linalg.norm(dev, axis=0)
    den = np.linalg.norm(v, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.inf)


def classify_modes(scheme: PatchScheme, kx: float, ky: float,
                   thresholds: ModeThresholds = ModeThresholds()) -> dict:
    """Classify the modes at one wavevector by both available rules.

    The threshold rule boxes the eigenvalue; the structural rule bounds the
    within-patch variation of the eigenvector.  Both masks are returned
    together with the indices where they disagree (degenerate eigenvalues
    can mix eigenvectors arbitrarily, so disagreement is reportable, not
    an error).
    """
    w, v = patch_spectrum(scheme, kx, ky, eigvecs=True)
    boxed = macroscale_mask(w, thresholds)
    ratios = structure_ratios(scheme, v)
    smooth = ratios < thresholds.structure_ratio
    return {
        "eigvals": w,
        "threshold_macro": boxed,
        "structural_macro": smooth,
        "structure_ratios": ratios,
        "disagree": np.flatnonzero(boxed != smooth),
    }


def eps_accuracy(scheme: PatchScheme, kx: float, ky: float,
                 w: np.ndarray | None = None,
                 thresholds: ModeThresholds = ModeThresholds()) -> float:
    """Worst distance from a macroscale eigenvalue to the microscale trio.

    Infinite when the selection at this wavevector is empty.
    """
    if w is None:
        w = patch_spectrum(scheme, kx, ky)
    sel = w[macroscale_mask(w, thresholds)]
    if sel.size == 0:
        return float("inf")
    mu = micro_reference(scheme, kx, ky)
    return float(np.abs(sel[:, None] - mu[None, :]).min(axis=1).max())


def _half_wavenumber_set(ks: list[int]) -> list[tuple[int, int, int]]:
    """(kx, ky, multiplicity) covering ks x ks up to conjugation."""
    if min(ks) != -max(ks):
        # an unpaired end (even cell count) breaks conjugate symmetry
        return [(kx, ky, 1) for kx in ks for ky in ks]
    out = []
    for kx in ks:
        for ky in ks:
            if (ky, kx) > (0, 0):
                out.append((kx, ky, 2))
            elif (kx, ky) == (0, 0):
                out.append((0, 0, 1))
    return out


@dataclass
class WavevectorResult:
    kx: int
    ky: int
    multiplicity: int
    eigvals: np.ndarray
    eps: float


@dataclass
class LayoutScan:
    grid_id: int
    results: list[WavevectorResult] = field(default_factory=list)
    max_re: float = -np.inf
    n_unstable: int = 0
    max_eps: float = 0.0

    def stable(self, thresholds: ModeThresholds = ModeThresholds()) -> bool:
        return self.max_re < thresholds.unstable_re


def scan_layout(scheme: PatchScheme,
                thresholds: ModeThresholds = ModeThresholds(),
                keep_eigvals: bool = True) -> LayoutScan:
    """Factor the scheme over every resolved wavevector and summarise."""
    scan = LayoutScan(grid_id=scheme.layout.grid_id)
    scale = 2 * np.pi / scheme.params.L
    for kx, ky, mult in _half_wavenumber_set(scheme.params.resolved_wavenumbers()):
        w = patch_spectrum(scheme, kx * scale, ky * scale)
        eps = eps_accuracy(scheme, kx * scale, ky * scale, w, thresholds)
        scan.max_re = max(scan.max_re, float(w.real.max()))
        scan.n_unstable += mult * int((w.real > thresholds.unstable_re).sum())
        if isfinite(eps):
            scan.max_eps = max(scan.max_eps, eps)
        else:
            scan.max_eps = float("inf")
        if keep_eigvals:
            scan.results.append(WavevectorResult(kx, ky, mult, w, eps))
    return scan


def macroscale_im_values(scan: LayoutScan,
                         thresholds: ModeThresholds = ModeThresholds(),
                         decimals: int = 4) -> set[float]:
    """Distinct |Im| of macroscale eigenvalues, rounded for comparison."""
    vals = set()
    for r in scan.results:
        sel = r.eigvals[macroscale_mask(r.eigvals, thresholds)]
        vals.update(np.round(np.abs(sel.imag), decimals).tolist())
    return vals


def spectrum_rows(scan: LayoutScan,
                  thresholds: ModeThresholds = ModeThresholds()) -> list[dict]:
    """Flat per-eigenvalue rows for export, conjugates reinstated."""
    rows = []
    for r in scan.results:
        copies = [(r.kx, r.ky, r.eigvals)]
        if r.multiplicity == 2:
            copies.append((-r.kx, -r.ky, r.eigvals.conj()))
        for kx, ky, w in copies:
            macro = macroscale_mask(w, thresholds)
            for lam, is_macro in zip(w, macro):
                rows.append({
                    "k_x": kx,
                    "k_y": ky,
                    "re": float(lam.real),
                    "im": float(lam.imag),
                    "mode_class": "macro" if is_macro else "micro",
                })
    rows.sort(key=lambda d: (d["k_x"], d["k_y"], -d["re"], d["im"]))
    return rows

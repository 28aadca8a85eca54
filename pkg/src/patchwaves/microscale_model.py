"""Full-domain discretisations of weakly damped linear waves.

The PDEs are

    dh/dt = -du/dx - dv/dy
    du/dt = -dh/dx - c_D u + c_V (u_xx + u_yy)
    dv/dt = -dh/dy - c_D v + c_V (v_xx + v_yy)

on a doubly periodic square, discretised either on a collocated grid (all
three fields on every node) or on a staggered grid (h, u, v interleaved on
the parity lattice).  Both store each field as an M x M array, M = n/2 for
the staggered grid with n micro intervals of size delta; the staggered field
lattices are offset by delta from each other, the collocated lattice keeps
all fields on the same points spaced 2*delta.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np


@dataclass(frozen=True)
class WaveParams:
    """Drag and viscosity coefficients; both zero is the ideal wave."""

    c_d: float = 0.0
    c_v: float = 0.0

    def __post_init__(self):
        if self.c_d < 0 or self.c_v < 0:
            raise ValueError("damping coefficients must be non-negative")

    @property
    def ideal(self) -> bool:
        return self.c_d == 0.0 and self.c_v == 0.0


_LAYOUTS = ("staggered", "collocated")


@dataclass(frozen=True)
class MicroGrid:
    """Full-domain grid: ``n`` micro intervals of ``delta = length/n``.

    n must be even.  The staggered grid places h at (even, even) sites,
    u at (odd, even), v at (even, odd), so each field lattice has n/2 points
    per direction at spacing 2*delta.  The collocated grid puts all three
    fields on the n/2 x n/2 lattice of spacing 2*delta.
    """

    layout: str
    n: int
    length: float = 2 * pi

    def __post_init__(self):
        if self.layout not in _LAYOUTS:
            raise ValueError(f"layout must be one of {_LAYOUTS}")
        if self.n < 4 or self.n % 2:
            raise ValueError("n must be even and >= 4")
        if self.length <= 0:
            raise ValueError("length must be positive")

    @property
    def delta(self) -> float:
        return self.length / self.n

    @property
    def m(self) -> int:
        return self.n // 2

    @property
    def n_unknowns(self) -> int:
        return 3 * self.m * self.m

    def wavenumbers(self) -> list[int]:
        """Fourier residues resolved per axis, one per field-lattice column."""
        return [int(f) for f in np.fft.fftfreq(self.m, d=1.0 / self.m)]


@dataclass
class MicroState:
    """Fields as M x M arrays, axis 0 along x.  Flat order is the h block,
    then u, then v, each row-major with the x index outermost."""

    h: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.h.ravel(), self.u.ravel(), self.v.ravel()])

    @classmethod
    def from_flat(cls, x: np.ndarray, m: int) -> "MicroState":
        if x.shape != (3 * m * m,):
            raise ValueError(f"state length {x.shape} does not match m={m}")
        parts = x.reshape(3, m, m)
        return cls(parts[0].copy(), parts[1].copy(), parts[2].copy())

    @classmethod
    def zeros(cls, m: int, dtype=float) -> "MicroState":
        return cls(*(np.zeros((m, m), dtype) for _ in range(3)))


def field_positions(grid: MicroGrid, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Physical x and y coordinates of one field's lattice, each shape (M, M)."""
    d = grid.delta
    m = grid.m
    base = 2 * d * np.arange(m)
    if grid.layout == "collocated":
        off = {"h": (0.0, 0.0), "u": (0.0, 0.0), "v": (0.0, 0.0)}[kind]
    else:
        off = {"h": (0.0, 0.0), "u": (d, 0.0), "v": (0.0, d)}[kind]
    x = base[:, None] + off[0] + np.zeros((1, m))
    y = base[None, :] + off[1] + np.zeros((m, 1))
    return x, y


def rhs_staggered(grid: MicroGrid, params: WaveParams, state: MicroState) -> MicroState:
    """Time derivative on the staggered grid, periodic in both directions."""
    if grid.layout != "staggered":
        raise ValueError("grid is not staggered")
    d = grid.delta
    h, u, v = state.h, state.u, state.v
    um = np.roll(u, 1, axis=0)   # u at x - delta relative to h sites
    vm = np.roll(v, 1, axis=1)
    hp = np.roll(h, -1, axis=0)  # h at x + delta relative to u sites
    hq = np.roll(h, -1, axis=1)
    dh = -(u - um) / (2 * d) - (v - vm) / (2 * d)
    du = -(hp - h) / (2 * d) - params.c_d * u
    dv = -(hq - h) / (2 * d) - params.c_d * v
    if params.c_v:
        lap = 4 * d * d
        du = du + params.c_v * (
            np.roll(u, -1, 0) + np.roll(u, 1, 0)
            + np.roll(u, -1, 1) + np.roll(u, 1, 1) - 4 * u
        ) / lap
        dv = dv + params.c_v * (
            np.roll(v, -1, 0) + np.roll(v, 1, 0)
            + np.roll(v, -1, 1) + np.roll(v, 1, 1) - 4 * v
        ) / lap
    return MicroState(dh, du, dv)


def rhs_collocated(grid: MicroGrid, params: WaveParams, state: MicroState) -> MicroState:
    """Time derivative on the collocated grid; node spacing is 2*delta so the
    central differences span 4*delta."""
    if grid.layout != "collocated":
        raise ValueError("grid is not collocated")
    s = 2 * grid.delta
    h, u, v = state.h, state.u, state.v

    def ddx(f):
        return (np.roll(f, -1, 0) - np.roll(f, 1, 0)) / (2 * s)

    def ddy(f):
        return (np.roll(f, -1, 1) - np.roll(f, 1, 1)) / (2 * s)

    dh = -ddx(u) - ddy(v)
    du = -ddx(h) - params.c_d * u
    dv = -ddy(h) - params.c_d * v
    if params.c_v:
        def lap(f):
            return (
                np.roll(f, -1, 0) + np.roll(f, 1, 0)
                + np.roll(f, -1, 1) + np.roll(f, 1, 1) - 4 * f
            ) / (s * s)

        du = du + params.c_v * lap(u)
        dv = dv + params.c_v * lap(v)
    return MicroState(dh, du, dv)


def rhs(grid: MicroGrid, params: WaveParams, state: MicroState) -> MicroState:
    fn = rhs_staggered if grid.layout == "staggered" else rhs_collocated
    return fn(grid, params, state)


def jacobian_mu(
    kx: float, ky: float, delta: float, params: WaveParams,
    layout: str = "staggered",
) -> np.ndarray:
    """Per-wavenumber 3x3 Jacobian, rows and columns ordered (h, u, v)."""
    if layout == "staggered":
        sx = np.sin(kx * delta) / delta
        sy = np.sin(ky * delta) / delta
        omega2 = sx * sx + sy * sy
    elif layout == "collocated":
        s = 2 * delta
        sx = np.sin(kx * s) / s
        sy = np.sin(ky * s) / s
        omega2 = (
            4 * np.sin(kx * s / 2) ** 2 / (s * s)
            + 4 * np.sin(ky * s / 2) ** 2 / (s * s)
        )
    else:
        raise ValueError(f"layout must be one of {_LAYOUTS}")
    diag = -params.c_d - params.c_v * omega2
    jac = np.zeros((3, 3), dtype=complex)
    jac[0, 1] = jac[1, 0] = -1j * sx
    jac[0, 2] = jac[2, 0] = -1j * sy
    jac[1, 1] = jac[2, 2] = diag
    return jac


def eig_mu(
    kx: float, ky: float, delta: float, params: WaveParams,
    layout: str = "staggered",
) -> np.ndarray:
    """The three microscale eigenvalues at one wavenumber, sorted."""
    return np.sort_complex(
        np.linalg.eigvals(jacobian_mu(kx, ky, delta, params, layout))
    )


def omega_mu0(kx: float, ky: float, delta: float) -> float:
    """Ideal staggered wave frequency sqrt(sin^2(kx d) + sin^2(ky d)) / d."""
    return float(
        np.hypot(np.sin(kx * delta), np.sin(ky * delta)) / delta
    )


_FULL_JACOBIAN_N_MAX = 40


def assemble_full_jacobian(grid: MicroGrid, params: WaveParams) -> np.ndarray:
    """Dense Jacobian of the full-domain model by column probing.

    Dense assembly scales as n^4; sizes beyond n = 40 are refused since the
    per-wavenumber route (jacobian_mu) answers spectral questions directly.
    """
    if grid.n > _FULL_JACOBIAN_N_MAX:
        raise ValueError(
            f"n={grid.n} too large for dense assembly (max {_FULL_JACOBIAN_N_MAX})"
        )
    m = grid.m
    size = grid.n_unknowns
    jac = np.zeros((size, size))
    probe = np.zeros(size)
    for col in range(size):
        probe[col] = 1.0
        jac[:, col] = rhs(grid, params, MicroState.from_flat(probe, m)).flat()
        probe[col] = 0.0
    return jac


def full_spectrum_reference(grid: MicroGrid, params: WaveParams) -> np.ndarray:
    """Union over resolved wavenumbers of the per-wavenumber eigenvalues."""
    out = []
    for kx in grid.wavenumbers():
        for ky in grid.wavenumbers():
            kxs = 2 * pi / grid.length * kx
            kys = 2 * pi / grid.length * ky
            out.append(eig_mu(kxs, kys, grid.delta, params, grid.layout))
    return np.sort_complex(np.concatenate(out))


def spectral_mismatch(a: np.ndarray, b: np.ndarray) -> float:
    """Largest pair distance of the optimal matching between two eigenvalue
    multisets.  Sorting is not enough: roundoff-sized real parts flip the
    order of conjugate pairs."""
    from scipy.optimize import linear_sum_assignment

    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.shape != b.shape:
        raise ValueError(f"multiset sizes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())

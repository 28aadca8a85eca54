"""Time integration of the full staggered model and of patch schemes.

Both integrators advance a linear right-hand side: the full-domain staggered
stencil, or the patch operators with edge values recomputed from patch
aggregates by FFT interpolation inside every derivative evaluation.
Trajectories sample at caller-chosen times through cubic Hermite
interpolation of the surrounding step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .microscale_model import MicroGrid, MicroState, WaveParams, jacobian_mu, rhs
from .patch_scheme import _FIELD_ORDER, PatchScheme, full_index_arrays, patch_centres
from .spectral_coupling import couple_edges_fft

_METHODS = ("rk4", "rk23")


class SimulationError(RuntimeError):
    """Integration aborted; the message carries the diagnostics."""


@dataclass(frozen=True)
class Integrator:
    """How to advance in time.

    ``rk4`` is the fixed-step classical fourth-order method and the default;
    ``rk23`` is the embedded adaptive third-order pair, whose controller
    keeps the local error estimate below ``rtol``/``atol`` each step.
    ``dt`` of None picks the stability-limited step for the problem at hand.
    """

    method: str = "rk4"
    dt: float | None = None
    rtol: float = 1e-8
    atol: float = 1e-11
    max_steps: int = 2_000_000
    dt_min: float = 1e-12

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class Trajectory:
    """Sampled states: row k of ``x`` is the flat state at ``t[k]``."""

    t: np.ndarray
    x: np.ndarray
    n_steps: int
    n_rhs: int
    method: str

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]


def stable_step(delta: float, wave: WaveParams, safety: float = 0.8) -> float:
    """Largest safe fixed step for the explicit fourth-order method.

    The staggered operator's spectrum satisfies |Im| <= sqrt(2)/delta and
    |Re| <= c_d + 2 c_v / delta^2, and the method's stability interval on
    the imaginary axis ends at 2*sqrt(2), so the step must stay below
    2*sqrt(2) / rho with rho the spectral radius bound.  ``safety``
    shrinks that limit.
    """
    rho = np.sqrt(2.0) / delta + wave.c_d + 2.0 * wave.c_v / delta**2
    return safety * 2.0 * np.sqrt(2.0) / rho


def _diag(t: float, dt: float, x: np.ndarray) -> str:
    amax = float(np.max(np.abs(x))) if x.size else 0.0
    return f"t={t:.6g} dt={dt:.6g} max|x|={amax:.6g}"


def _hermite(tau, t0, h, x0, f0, x1, f1):
    """Cubic matching value and slope at both ends of one step."""
    s = (tau - t0) / h
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * x0 + (s3 - 2 * s2 + s) * h * f0
            + (-2 * s3 + 3 * s2) * x1 + (s3 - s2) * h * f1)


def _check_samples(samples, t_end: float) -> np.ndarray | None:
    if samples is None:
        return None
    s = np.atleast_1d(np.asarray(samples, dtype=float))
    if s.ndim != 1 or s.size == 0:
        raise ValueError("samples must be a one-dimensional, non-empty set")
    if np.any(np.diff(s) <= 0):
        raise ValueError("samples must be strictly increasing")
    if s[0] < -1e-12 or s[-1] > t_end * (1 + 1e-12):
        raise ValueError(f"samples must lie within [0, {t_end}]")
    return np.clip(s, 0.0, t_end)


def _integrate_rk4(f, x0, t_end, integ: Integrator, dt_default, samples):
    dt_want = integ.dt if integ.dt is not None else dt_default
    if dt_want <= integ.dt_min:
        raise SimulationError(
            f"step size underflow: dt={dt_want:.6g} <= dt_min={integ.dt_min:.6g} "
            f"({_diag(0.0, dt_want, x0)})")
    n_steps = max(1, int(np.ceil(t_end / dt_want - 1e-12)))
    if n_steps > integ.max_steps:
        raise SimulationError(
            f"t_end={t_end:.6g} at dt={dt_want:.6g} needs {n_steps} steps, "
            f"above max_steps={integ.max_steps}")
    dt = t_end / n_steps

    x = np.array(x0, dtype=complex if np.iscomplexobj(x0) else float)
    out_t, out_x = [], []
    if samples is None:
        out_t.append(0.0)
        out_x.append(x.copy())
    sp = 0
    if samples is not None:
        while sp < samples.size and samples[sp] <= 0.0:
            out_t.append(float(samples[sp]))
            out_x.append(x.copy())
            sp += 1

    f0 = f(x)
    n_rhs = 1
    for i in range(n_steps):
        t0 = i * dt
        t1 = (i + 1) * dt if i + 1 < n_steps else t_end
        h = t1 - t0
        k1 = f0
        k2 = f(x + (h / 2) * k1)
        k3 = f(x + (h / 2) * k2)
        k4 = f(x + h * k3)
        x1 = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        n_rhs += 3
        if not np.all(np.isfinite(x1.view(float))):
            raise SimulationError(
                f"state lost finiteness inside step {i + 1} "
                f"({_diag(t1, h, x)})")
        f1 = f(x1)
        n_rhs += 1
        if samples is None:
            out_t.append(t1)
            out_x.append(x1.copy())
        else:
            while sp < samples.size and samples[sp] <= t1 + 1e-12:
                tau = min(float(samples[sp]), t1)
                out_t.append(tau)
                out_x.append(_hermite(tau, t0, h, x, k1, x1, f1))
                sp += 1
        x, f0 = x1, f1
    return Trajectory(np.array(out_t), np.array(out_x), n_steps, n_rhs, "rk4")


def _integrate_rk23(f, x0, t_end, integ: Integrator, samples):
    sol = solve_ivp(lambda _, y: f(y), (0.0, t_end), np.asarray(x0),
                    method="RK23", rtol=integ.rtol, atol=integ.atol,
                    t_eval=samples)
    if sol.status != 0:
        raise SimulationError(
            f"adaptive integration stopped at t={sol.t[-1] if sol.t.size else 0.0:.6g} "
            f"of {t_end:.6g}: {sol.message}")
    return Trajectory(sol.t, sol.y.T.copy(), max(0, sol.t.size - 1),
                      int(sol.nfev), "rk23")


def _run(f, x0, t_end, integ, dt_default, samples):
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    s = _check_samples(samples, t_end)
    if integ.method == "rk4":
        return _integrate_rk4(f, x0, t_end, integ, dt_default, s)
    return _integrate_rk23(f, x0, t_end, integ, s)


def integrate_full(grid: MicroGrid, wave: WaveParams, state0: MicroState,
                   t_end: float, integrator: Integrator = Integrator(),
                   samples=None) -> Trajectory:
    """Advance the full-domain model; rows of the result are flat states."""
    m = grid.m

    def f(x):
        return rhs(grid, wave, MicroState.from_flat(x, m)).flat()

    return _run(f, np.asarray(state0.flat()), t_end, integrator,
                stable_step(grid.delta, wave), samples)


def _slot_ops(scheme: PatchScheme):
    ops = scheme._full_cache.get("sim_ops")
    if ops is None:
        ops = [(np.ascontiguousarray(s.s_int.toarray().T),
                np.ascontiguousarray(s.s_edge.toarray().T))
               for s in scheme.slots]
        scheme._full_cache["sim_ops"] = ops
    return ops


def rhs_patch_full(scheme: PatchScheme, x: np.ndarray) -> np.ndarray:
    """Time derivative of a whole-lattice interior state.

    Edge values are rebuilt from the current aggregates on every call, so
    the coupling error enters the dynamics exactly as it enters the
    eigen-analysis.
    """
    x = np.asarray(x)
    edges = couple_edges_fft(scheme, x)
    gidx = full_index_arrays(scheme)
    ops = _slot_ops(scheme)
    dx = np.empty_like(x)
    for si in range(len(scheme.slots)):
        a_int, a_edge = ops[si]
        dx[gidx["interior"][si]] = (x[gidx["interior"][si]] @ a_int
                                    + edges[gidx["edge"][si]] @ a_edge)
    return dx


def integrate_patch(scheme: PatchScheme, x0: np.ndarray, t_end: float,
                    integrator: Integrator = Integrator(),
                    samples=None) -> Trajectory:
    """Advance a patch-scheme interior state of length n_interior_total."""
    x0 = np.asarray(x0)
    if x0.shape != (scheme.n_interior_total,):
        raise ValueError(
            f"state has shape {x0.shape}, scheme needs "
            f"({scheme.n_interior_total},)")
    return _run(lambda x: rhs_patch_full(scheme, x), x0, t_end, integrator,
                stable_step(scheme.params.delta, scheme.wave), samples)


def energy(state: MicroState) -> float:
    """Lattice sum of squares over all three fields; without damping the
    spatial operator conserves it exactly, so any drift is time error."""
    return float(sum(np.vdot(a, a).real for a in (state.h, state.u, state.v)))


def micro_mode(kx: float, ky: float, delta: float, wave: WaveParams,
               branch: str = "+") -> tuple[complex, np.ndarray]:
    """One eigenpair of the per-wavenumber operator.

    branch "+" / "-" select the wave pair by the sign of the frequency,
    "0" the remaining slow mode.
    """
    w, vecs = np.linalg.eig(jacobian_mu(kx, ky, delta, wave))
    pick = {"+": np.argmax, "-": np.argmin}.get(branch)
    i = int(pick(w.imag)) if pick else int(np.argmin(np.abs(w.imag)))
    return complex(w[i]), vecs[:, i]


def fourier_mode_state(grid: MicroGrid, wave: WaveParams, kx_int: int,
                       ky_int: int, branch: str = "+"
                       ) -> tuple[MicroState, complex]:
    """A single travelling mode on the full grid and its exact growth rate.

    The fields are sampled at their own staggered positions, so the state
    is an exact eigenvector of the spatial operator and the trajectory is
    e^(lambda t) times the initial state.
    """
    from .microscale_model import field_positions

    k = 2 * np.pi / grid.length
    kx, ky = k * kx_int, k * ky_int
    lam, w = micro_mode(kx, ky, grid.delta, wave, branch)
    parts = []
    for fi, kind in enumerate("huv"):
        px, py = field_positions(grid, kind)
        parts.append(w[fi] * np.exp(1j * (kx * px + ky * py)))
    return MicroState(*parts), lam


def sample_patch_mode(scheme: PatchScheme, kx: float, ky: float,
                      branch: str = "+") -> tuple[np.ndarray, complex]:
    """Interior state sampling one travelling mode at every node position.

    Returns the state together with the growth rate the microscale
    assigns to the mode at the patch-interior spacing.
    """
    p = scheme.params
    lam, w = micro_mode(kx, ky, p.delta, scheme.wave, branch)
    amp = {kind: w[fi] for fi, kind in enumerate(_FIELD_ORDER)}
    gidx = full_index_arrays(scheme)
    x = np.zeros(scheme.n_interior_total, dtype=complex)
    for si, s in enumerate(scheme.slots):
        cx, cy = patch_centres(scheme, si)
        off = s.local_offsets(p.delta, "interior")
        w_nodes = np.array([amp[kind] for _, _, kind in s.interior])
        phase = np.exp(1j * (kx * (cx[..., None] + off[:, 0])
                             + ky * (cy[..., None] + off[:, 1])))
        x[gidx["interior"][si]] = w_nodes * phase
    return x, lam


def embed_bloch(scheme: PatchScheme, kx: float, ky: float,
                v_cell: np.ndarray) -> np.ndarray:
    """Spread a one-cell interior vector over the lattice with its own
    phase ramp, turning a cell-closure eigenvector into a whole-lattice
    eigenvector of the coupled dynamics."""
    v_cell = np.asarray(v_cell)
    if v_cell.shape != (scheme.n_interior_cell,):
        raise ValueError("cell vector has wrong length")
    p = scheme.params
    gidx = full_index_arrays(scheme)
    m = p.m_cells
    cells = 2 * p.Delta * np.arange(m)
    ramp = np.exp(1j * (kx * cells[:, None] + ky * cells[None, :]))
    x = np.zeros(scheme.n_interior_total, dtype=complex)
    for si, s in enumerate(scheme.slots):
        # the cell closure works in per-patch frames anchored at each
        # patch's aggregation point, so restore that frame's carrier phase
        ax, ay = s.nominal_offset(p.delta)
        frame = np.exp(1j * (kx * (p.Delta * s.slot[0] + ax)
                             + ky * (p.Delta * s.slot[1] + ay)))
        block = v_cell[s.int_offset:s.int_offset + s.n_interior]
        x[gidx["interior"][si]] = frame * ramp[:, :, None] * block
    return x


def aggregate_trajectory(scheme: PatchScheme, traj: Trajectory
                         ) -> tuple[list[str], np.ndarray]:
    """Per-patch macroscale values of every sample, one column per
    (field, slot, cell), labelled like ``h01_2_3``."""
    gidx = full_index_arrays(scheme)
    m = scheme.params.m_cells
    labels, cols = [], []
    for si, s in enumerate(scheme.slots):
        p, q = s.slot
        block = traj.x[:, gidx["interior"][si]]
        for kind in _FIELD_ORDER:
            idx, w = s.agg[kind]
            agg = block[..., idx] @ w
            for a in range(m):
                for b in range(m):
                    labels.append(f"{kind.value}{p}{q}_{a}_{b}")
                    cols.append(agg[:, a, b])
    return labels, np.column_stack(cols)


def _fmt17(x: float) -> str:
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def write_traj_csv(path, traj: Trajectory, labels: list[str] | None = None,
                   values: np.ndarray | None = None, meta: dict | None = None
                   ) -> None:
    """Write t plus either the raw states or caller-supplied columns.

    Complex data splits into re_/im_ column pairs.  ``meta`` entries become
    leading ``# key=value`` comment lines.
    """
    data = traj.x if values is None else values
    if labels is None:
        labels = [f"x{j}" for j in range(data.shape[1])]
    if len(labels) != data.shape[1]:
        raise ValueError("one label per column required")
    if np.iscomplexobj(data):
        labels = [p + lbl for lbl in labels for p in ("re_", "im_")]
        inter = np.empty((data.shape[0], 2 * data.shape[1]))
        inter[:, 0::2], inter[:, 1::2] = data.real, data.imag
        data = inter
    with open(path, "w", newline="") as fh:
        for key, val in (meta or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write(",".join(["t"] + list(labels)) + "\n")
        for ti, row in zip(traj.t, data):
            fh.write(",".join([_fmt17(ti)] + [_fmt17(v) for v in row]) + "\n")

"""Command-line front end.

Every run that writes files also writes the fully-resolved configuration
next to them as ``config.txt``, and stamps each output with the sha256
hash of that text, so any result file can be traced to, and reproduced
from, the exact configuration that made it.  Reruns are byte-identical:
nothing here ever prints a timestamp into an output file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from .census import PARITY_N, run_census, summarize, write_census_csv
from .eigen_analysis import (
    AnalysisError,
    ModeThresholds,
    scan_layout,
    spectrum_rows,
)
from .grid_geometry import (
    EdgeLayerSpec,
    PatchGridLayout,
    decode_id,
    enumerate_edge_types,
)
from .microscale_model import MicroGrid, MicroState, WaveParams, eig_mu
from .patch_scheme import GridParams, SchemeError, build_scheme
from .sim import (
    Integrator,
    SimulationError,
    aggregate_trajectory,
    fourier_mode_state,
    integrate_full,
    integrate_patch,
    sample_patch_mode,
    write_traj_csv,
)

PROG = "patchwaves"

# exit codes: 0 ok, 2 rejected input, 1 failure while running
EXIT_BAD_INPUT = 2
EXIT_RUNTIME = 1


class CliError(Exception):
    def __init__(self, kind: str, detail: str, code: int = EXIT_BAD_INPUT):
        super().__init__(detail)
        self.kind = kind
        self.code = code


def _fmt(x) -> str:
    if isinstance(x, float):
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    if isinstance(x, bool):
        return "true" if x else "false"
    return str(x)


# configuration files: "command=..." plus one sorted key=value line per
# resolved flag; '#' starts a comment; values keep their flag syntax


_NON_CONFIG_KEYS = ("config", "command", "action", "func")
# recorded in config.txt but outside the hash: they steer where and how
# fast results are produced, never what is in them
_NON_IDENTITY_KEYS = ("out", "threads", "resume")


def config_text(command: str, values: dict, identity_only: bool = False) -> str:
    lines = [f"command={command}"]
    skip = _NON_CONFIG_KEYS + (_NON_IDENTITY_KEYS if identity_only else ())
    for key in sorted(values):
        if values[key] is not None and key not in skip:
            lines.append(f"{key}={_fmt(values[key])}")
    return "\n".join(lines) + "\n"


def config_hash(command: str, values: dict) -> str:
    text = config_text(command, values, identity_only=True)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def parse_config_file(path: str) -> tuple[str, dict]:
    try:
        raw = open(path).read()
    except OSError as exc:
        raise CliError("bad-config", f"cannot read {path}: {exc}")
    command, values = None, {}
    for ln, line in enumerate(raw.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError("bad-config", f"{path}:{ln}: expected key=value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key == "command":
            command = val
        elif val in ("true", "false"):
            values[key] = val == "true"
        else:
            values[key] = val
    if command is None:
        raise CliError("bad-config", f"{path}: missing command=")
    return command, values


def _grid_flags(p: argparse.ArgumentParser):
    p.add_argument("--L", type=float, default=2 * np.pi,
                   help="domain edge length (default 2*pi)")
    p.add_argument("--N", type=int, default=10,
                   help="macroscale intervals per direction (default 10)")
    p.add_argument("--n", type=int, default=6,
                   help="microscale intervals per patch (default 6)")
    p.add_argument("--r", type=float, default=0.1,
                   help="patch size ratio (default 0.1)")
    p.add_argument("--cD", type=float, default=0.0,
                   help="drag coefficient (default 0, ideal)")
    p.add_argument("--cV", type=float, default=0.0,
                   help="viscosity coefficient (default 0, ideal)")
    p.add_argument("--layers", default="n1t0",
                   help="edge layer spec like n1t0, n2t0, n3t2 (default n1t0)")


def _out_flag(p: argparse.ArgumentParser):
    p.add_argument("--out", default=".",
                   help="directory for output files (default current)")


def _layers(text: str) -> EdgeLayerSpec:
    t = text.strip().lower()
    if len(t) == 4 and t[0] == "n" and t[2] == "t" \
            and t[1].isdigit() and t[3].isdigit():
        try:
            return EdgeLayerSpec(int(t[1]), int(t[3]))
        except ValueError as exc:
            raise CliError("incompatible-layers", str(exc))
    raise CliError("incompatible-layers", f"cannot parse layer spec {text!r}")


def _grid_params(a) -> GridParams:
    try:
        return GridParams(L=a.L, N=a.N, n=a.n, r=a.r)
    except ValueError as exc:
        raise CliError("bad-flags", str(exc))


def _scheme(a):
    params = _grid_params(a)
    try:
        layout = PatchGridLayout.from_string(a.layout, n=params.n)
    except ValueError as exc:
        raise CliError("bad-layout", str(exc))
    try:
        return build_scheme(layout, params, WaveParams(c_d=a.cD, c_v=a.cV),
                            _layers(a.layers))
    except SchemeError as exc:
        raise CliError("incompatible-layers", str(exc))


def _prepare_out(a, command: str) -> tuple[str, str]:
    """Create the output directory, write config.txt, return (dir, hash)."""
    values = vars(a)
    text = config_text(command, values)
    h = config_hash(command, values)
    try:
        os.makedirs(a.out, exist_ok=True)
        with open(os.path.join(a.out, "config.txt"), "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError("unwritable-output", str(exc), EXIT_RUNTIME)
    return a.out, h


# grids


def cmd_grids_list(a) -> int:
    specs = enumerate_edge_types(a.n if a.n is not None else PARITY_N[a.parity])
    for s in specs:
        marks = []
        if s.centred:
            marks.append(f"centred:{s.centre.value}")
        if s.symmetric:
            marks.append("symmetric")
        print(f"{s.name}  {s.m_x}x{s.m_y}  {' '.join(marks)}".rstrip())
    return 0


def cmd_grids_describe(a) -> int:
    desc = _scheme(a).describe()
    if a.out is not None:
        out, h = _prepare_out(a, "grids.describe")
        desc["config"] = h
        path = os.path.join(out, "describe.json")
        try:
            with open(path, "w") as fh:
                json.dump(desc, fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise CliError("unwritable-output", str(exc), EXIT_RUNTIME)
    print(json.dumps(desc, indent=2, sort_keys=True))
    return 0


def cmd_grids_id(a) -> int:
    if (a.layout is None) == (a.id is None):
        raise CliError("bad-flags", "give exactly one of --layout or --id")
    if a.layout is not None:
        try:
            print(PatchGridLayout.from_string(a.layout, n=a.n).grid_id)
        except ValueError as exc:
            raise CliError("bad-layout", str(exc))
    else:
        try:
            print(decode_id(a.id, n=a.n).to_string())
        except ValueError as exc:
            raise CliError("bad-layout", str(exc))
    return 0


# eig


def _csv_write(path, header: list[str], rows, meta: dict):
    try:
        with open(path, "w", newline="") as fh:
            for key, val in meta.items():
                fh.write(f"# {key}={val}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise CliError("unwritable-output", str(exc), EXIT_RUNTIME)


def cmd_eig_micro(a) -> int:
    params = _grid_params(a)
    wave = WaveParams(c_d=a.cD, c_v=a.cV)
    out, h = _prepare_out(a, "eig.micro")
    scale = 2 * np.pi / params.L
    ks = params.resolved_wavenumbers()
    rows = []
    for kx in sorted(ks):
        for ky in sorted(ks):
            for lam in eig_mu(kx * scale, ky * scale, params.delta, wave):
                rows.append((kx, ky, float(lam.real), float(lam.imag)))
    _csv_write(os.path.join(out, "mu.csv"), ["k_x", "k_y", "re", "im"],
               rows, {"config": h})
    print(f"wavevectors={len(ks) ** 2} rows={len(rows)} out={out}/mu.csv")
    return 0


def cmd_eig_patch(a) -> int:
    scheme = _scheme(a)
    out, h = _prepare_out(a, "eig.patch")
    try:
        scan = scan_layout(scheme, ModeThresholds())
    except AnalysisError as exc:
        raise CliError("analysis-failed", str(exc), EXIT_RUNTIME)
    rows = spectrum_rows(scan)
    _csv_write(os.path.join(out, "eigs.csv"),
               ["k_x", "k_y", "re", "im", "mode_class"],
               [(r["k_x"], r["k_y"], r["re"], r["im"], r["mode_class"])
                for r in rows],
               {"config": h})
    report = {
        "config": h,
        "grid_id": scheme.layout.grid_id,
        "layout": scheme.layout.to_string(),
        "coupling": scheme.coupling,
        "max_re": scan.max_re,
        "n_unstable": scan.n_unstable,
        "stable": scan.stable(),
        "max_eps": scan.max_eps,
        "eps": [{"k_x": r.kx, "k_y": r.ky, "eps": r.eps}
                for r in scan.results],
    }
    try:
        with open(os.path.join(out, "report.json"), "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise CliError("unwritable-output", str(exc), EXIT_RUNTIME)
    print(f"max_re={_fmt(scan.max_re)} n_unstable={scan.n_unstable} "
          f"max_eps={_fmt(scan.max_eps)} stable={_fmt(scan.stable())}")
    return 0


# census


def cmd_census(a) -> int:
    parities = ["odd", "even"] if a.parity == "both" else [a.parity]
    for p in parities:
        if p not in PARITY_N:
            raise CliError("bad-flags", f"parity must be odd, even or both")
    params = _grid_params(a)
    wave = WaveParams(c_d=a.cD, c_v=a.cV)
    layers = _layers(a.layers)
    out, h = _prepare_out(a, "census")
    records = []
    for p in parities:
        jsonl = os.path.join(out, f"census_{p}.jsonl")
        records += run_census(p, params, wave=wave, layers=layers,
                              jsonl_path=jsonl, workers=a.threads,
                              resume=a.resume, progress=sys.stderr)
    write_census_csv(records, os.path.join(out, "census.csv"),
                     meta={"config": h})
    for p in parities:
        s = summarize([r for r in records if r.parity == p])
        print(f"parity={p} total={s.total} stable={s.stable} "
              f"centred_stable={s.centred_stable} "
              f"non_centred_stable={s.non_centred_stable} "
              f"unstable={s.unstable} accurate={s.accurate} "
              f"errors={s.errors}")
    if len(parities) > 1:
        s = summarize(records)
        print(f"combined total={s.total} stable={s.stable} "
              f"accurate={s.accurate}")
    return 0


# simulate


def _initial_patch(a, scheme):
    kind, _, arg = a.init.partition(":")
    if kind == "mode":
        try:
            kx, ky = (int(tok) for tok in arg.split(","))
        except ValueError:
            raise CliError("bad-flags", f"--init mode needs KX,KY, got {arg!r}")
        scale = 2 * np.pi / scheme.params.L
        x0, _ = sample_patch_mode(scheme, kx * scale, ky * scale)
        return x0
    if kind == "random":
        rng = np.random.default_rng(int(arg) if arg else 0)
        return rng.standard_normal(scheme.n_interior_total)
    if kind == "constant":
        return np.ones(scheme.n_interior_total)
    raise CliError("bad-flags", f"unknown initial state {a.init!r}")


def _initial_full(a, grid, wave):
    kind, _, arg = a.init.partition(":")
    if kind == "mode":
        try:
            kx, ky = (int(tok) for tok in arg.split(","))
        except ValueError:
            raise CliError("bad-flags", f"--init mode needs KX,KY, got {arg!r}")
        state, _ = fourier_mode_state(grid, wave, kx, ky)
        return state
    if kind == "random":
        rng = np.random.default_rng(int(arg) if arg else 0)
        return MicroState.from_flat(rng.standard_normal(grid.n_unknowns),
                                    grid.m)
    if kind == "constant":
        return MicroState.from_flat(np.ones(grid.n_unknowns), grid.m)
    raise CliError("bad-flags", f"unknown initial state {a.init!r}")


def cmd_simulate(a) -> int:
    if (a.layout is None) == (not a.full):
        raise CliError("bad-flags", "give exactly one of --layout or --full")
    if a.t_end <= 0:
        raise CliError("bad-flags", "--t-end must be positive")
    if a.samples < 2:
        raise CliError("bad-flags", "--samples must be at least 2")
    integ = Integrator(method=a.method, dt=a.dt, rtol=a.rtol, atol=a.atol)
    times = np.linspace(0.0, a.t_end, a.samples)
    wave = WaveParams(c_d=a.cD, c_v=a.cV)
    out, h = _prepare_out(a, "simulate")
    meta = {"config": h}
    try:
        if a.full:
            if a.aggregates:
                raise CliError("bad-flags",
                               "--aggregates needs a patch run (--layout)")
            params = _grid_params(a)
            n_full = params.N * params.n / (2 * params.r)
            if abs(n_full - round(n_full)) > 1e-9 or round(n_full) % 2:
                raise CliError(
                    "bad-flags",
                    f"L/delta = {n_full:.6g} is not an even integer; "
                    "adjust N, n or r")
            grid = MicroGrid("staggered", int(round(n_full)), params.L)
            state = _initial_full(a, grid, wave)
            traj = integrate_full(grid, wave, state, a.t_end, integ,
                                  samples=times)
            write_traj_csv(os.path.join(out, "traj.csv"), traj, meta=meta)
        else:
            scheme = _scheme(a)
            x0 = _initial_patch(a, scheme)
            traj = integrate_patch(scheme, x0, a.t_end, integ, samples=times)
            if a.aggregates:
                labels, values = aggregate_trajectory(scheme, traj)
                write_traj_csv(os.path.join(out, "traj.csv"), traj,
                               labels=labels, values=values, meta=meta)
            else:
                write_traj_csv(os.path.join(out, "traj.csv"), traj, meta=meta)
    except SimulationError as exc:
        raise CliError("integration-failed", str(exc), EXIT_RUNTIME)
    except OSError as exc:
        raise CliError("unwritable-output", str(exc), EXIT_RUNTIME)
    print(f"samples={len(traj.t)} dof={traj.x.shape[1]} method={traj.method} "
          f"steps={traj.n_steps} rhs_evals={traj.n_rhs} out={out}/traj.csv")
    return 0


# wiring


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog=PROG,
        description="Staggered-grid patch dynamics: grid geometry, "
                    "spectra, stability census and time integration.")
    top.add_argument("--config", default=None,
                     help="load flag values from an emitted config.txt; "
                     "explicit flags still win")
    sub = top.add_subparsers(dest="command", metavar="command")
    parsers = {}

    g = sub.add_parser("grids", help="inspect patch grid layouts")
    gsub = g.add_subparsers(dest="action", metavar="action")
    gl = gsub.add_parser("list", help="list the 16 patch edge types")
    gl.add_argument("--parity", choices=("odd", "even"), default="odd",
                    help="parity family: odd means n=6, even n=4")
    gl.add_argument("--n", type=int, default=None,
                    help="explicit patch intervals; overrides --parity")
    gl.set_defaults(func=cmd_grids_list)
    parsers["grids.list"] = gl

    gd = gsub.add_parser("describe",
                         help="dump one layout's scheme as JSON")
    _grid_flags(gd)
    gd.add_argument("--layout", required=True,
                    help='layout string like "uuvv,hhvv,uuhh,----"')
    gd.add_argument("--out", default=None,
                    help="also write describe.json and config.txt here")
    gd.set_defaults(func=cmd_grids_describe)
    parsers["grids.describe"] = gd

    gi = gsub.add_parser("id", help="convert layout string to id or back")
    gi.add_argument("--layout", default=None, help="layout string to encode")
    gi.add_argument("--id", type=int, default=None, help="id to decode")
    gi.add_argument("--n", type=int, default=6,
                    help="patch intervals for decoding (default 6)")
    gi.set_defaults(func=cmd_grids_id)
    parsers["grids.id"] = gi

    e = sub.add_parser("eig", help="eigenvalue analyses")
    esub = e.add_subparsers(dest="action", metavar="action")
    em = esub.add_parser("micro",
                         help="microscale reference spectrum to mu.csv")
    _grid_flags(em)
    _out_flag(em)
    em.set_defaults(func=cmd_eig_micro)
    parsers["eig.micro"] = em

    ep = esub.add_parser("patch",
                         help="patch scheme spectrum to eigs.csv/report.json")
    _grid_flags(ep)
    ep.add_argument("--layout", required=True,
                    help='layout string like "uuvv,hhvv,uuhh,----"')
    _out_flag(ep)
    ep.add_argument("--threads", type=int, default=1,
                    help="accepted for symmetry; the scan is sequential")
    ep.set_defaults(func=cmd_eig_patch)
    parsers["eig.patch"] = ep

    c = sub.add_parser("census", help="score every layout of a parity")
    _grid_flags(c)
    c.add_argument("--parity", choices=("odd", "even", "both"),
                   required=True, help="layout family to sweep")
    _out_flag(c)
    c.add_argument("--threads", type=int, default=1,
                   help="worker processes (default 1)")
    c.add_argument("--resume", action="store_true",
                   help="skip ids already in the JSONL from a previous run")
    c.set_defaults(func=cmd_census)
    parsers["census"] = c

    s = sub.add_parser("simulate", help="integrate a trajectory to traj.csv")
    _grid_flags(s)
    s.add_argument("--layout", default=None,
                   help="patch layout to integrate")
    s.add_argument("--full", action="store_true",
                   help="integrate the full-domain model at the patch "
                   "interior spacing instead of a patch scheme")
    s.add_argument("--t-end", type=float, default=1.0,
                   help="integration time (default 1)")
    s.add_argument("--method", choices=("rk4", "rk23"), default="rk4",
                   help="fixed-step classical or embedded adaptive")
    s.add_argument("--dt", type=float, default=None,
                   help="fixed step; default is the stability-limited step")
    s.add_argument("--rtol", type=float, default=1e-8,
                   help="adaptive relative tolerance")
    s.add_argument("--atol", type=float, default=1e-11,
                   help="adaptive absolute tolerance")
    s.add_argument("--samples", type=int, default=51,
                   help="number of evenly spaced output times (default 51)")
    s.add_argument("--init", default="mode:1,0",
                   help="initial state: mode:KX,KY, random:SEED or constant")
    s.add_argument("--aggregates", action="store_true",
                   help="write per-patch aggregates instead of raw state")
    _out_flag(s)
    s.set_defaults(func=cmd_simulate)
    parsers["simulate"] = s

    top._command_parsers = parsers
    return top


def _apply_config(argv: list[str], top: argparse.ArgumentParser) -> list[str]:
    """Turn --config FILE into subparser defaults; flags given win."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise CliError("bad-config", "--config needs a file path")
    command, values = parse_config_file(argv[i + 1])
    rest = argv[:i] + argv[i + 2:]
    parsers = top._command_parsers
    if command not in parsers:
        raise CliError("bad-config", f"config names unknown command {command}")
    known = {act.dest for act in parsers[command]._actions}
    bad = set(values) - known
    if bad:
        raise CliError("bad-config",
                       f"config keys not accepted by {command}: "
                       f"{', '.join(sorted(bad))}")
    parsers[command].set_defaults(**values)
    path = command.split(".")
    j = 0
    while j < len(rest) and j < len(path) and rest[j] == path[j]:
        j += 1
    return path + rest[j:]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    top = build_parser()
    try:
        argv = _apply_config(argv, top)
        args = top.parse_args(argv)
        if getattr(args, "func", None) is None:
            top.print_help(sys.stderr)
            return EXIT_BAD_INPUT
        return args.func(args)
    except CliError as exc:
        print(json.dumps({"error": exc.kind, "detail": str(exc)}),
              file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

"""Stability sweep over every patch layout of one parity family.

Each of the 83520 layouts is scored by the spectral analysis at the
sweep parameters. Two facts keep the sweep cheap. Under self coupling
the one-cell Jacobian is block diagonal over patches and each block
depends only on the patch type, so the 16 single-type spectra cover
every non-centred layout by composition: growth rates combine by max,
unstable counts add, accuracy combines by max over the wavevectors that
actually carry macroscale modes. Only the centred layouts (60 per
parity) need a full per-layout eigensolve.

Results stream to an append-only JSONL sink during the run and are
finalized as a CSV sorted by grid id, so output bytes do not depend on
worker count or completion order.
"""

from __future__ import annotations

import json
import multiprocessing
import time
import warnings
from dataclasses import dataclass, asdict, replace
from math import isfinite, isnan

import numpy as np

from .grid_geometry import (EdgeLayerSpec, N_LAYOUTS, PatchGridLayout,
                            classify_layout, decode_id)
from .microscale_model import WaveParams
from .patch_scheme import GridParams, build_scheme
from .eigen_analysis import ModeThresholds, scan_layout

PARITY_N = {"odd": 6, "even": 4}
ACCURACY_EPS = 1e-9

_CSV_COLUMNS = ("id", "layout", "parity", "centred", "symmetric_only",
                "max_re", "stable", "n_unstable", "max_eps")


@dataclass
class CensusRecord:
    grid_id: int
    layout: str
    parity: str
    centred: bool
    symmetric_only: bool
    max_re: float
    stable: bool
    n_unstable: int
    max_eps: float
    wall_time: float
    error: str | None = None

    def accurate(self) -> bool:
        return self.stable and isfinite(self.max_eps) \
            and self.max_eps < ACCURACY_EPS


@dataclass
class CensusSummary:
    parities: tuple[str, ...]
    total: int
    expected: int
    stable: int
    centred_stable: int
    non_centred_stable: int
    unstable: int
    accurate: int
    errors: int
    stable_iff_symmetric: bool
    partial: bool


@dataclass
class _TypeScore:
    """Single-type slice of the sweep, composable across slots."""
    max_re: float
    n_unstable: int
    # per wavevector: eps over this type's macroscale modes, -inf if the
    # type carries none there
    eps_k: np.ndarray
    has_macro_k: np.ndarray


def _type_cache(n: int, params: GridParams, wave: WaveParams,
                layers: EdgeLayerSpec,
                thresholds: ModeThresholds) -> dict[str, _TypeScore]:
    from .grid_geometry import enumerate_edge_types

    cache = {}
    for spec in enumerate_edge_types(n):
        lay = PatchGridLayout((spec.name, None, None, None), n)
        scheme = build_scheme(lay, params, wave, layers)
        scan = scan_layout(scheme, thresholds)
        eps_k = np.array([r.eps if isfinite(r.eps) else -np.inf
                          for r in scan.results])
        has = np.array([isfinite(r.eps) for r in scan.results])
        cache[spec.name] = _TypeScore(scan.max_re, scan.n_unstable, eps_k, has)
    return cache


def _compose(names: list[str], cache: dict[str, _TypeScore]) -> tuple:
    scores = [cache[nm] for nm in names]
    max_re = max(s.max_re for s in scores)
    n_unstable = sum(s.n_unstable for s in scores)
    has = np.vstack([s.has_macro_k for s in scores])
    eps = np.vstack([s.eps_k for s in scores])
    covered = has.any(axis=0)
    if covered.all():
        max_eps = float(eps.max(axis=0).max())
    else:
        max_eps = float("inf")
    return max_re, n_unstable, max_eps


def score_layout(grid_id: int, parity: str, params: GridParams,
                 wave: WaveParams, layers: EdgeLayerSpec,
                 thresholds: ModeThresholds,
                 cache: dict[str, _TypeScore]) -> CensusRecord:
    """One census record; centred layouts get the full eigensolve."""
    n = PARITY_N[parity]
    t0 = time.perf_counter()
    lay = decode_id(grid_id, n)
    cls = classify_layout(lay)
    try:
        if cls.centred:
            scan = scan_layout(build_scheme(lay, params, wave, layers),
                               thresholds, keep_eigvals=False)
            max_re, n_unstable, max_eps = \
                scan.max_re, scan.n_unstable, scan.max_eps
        else:
            names = [t for t in lay.slots if t is not None]
            max_re, n_unstable, max_eps = _compose(names, cache)
    except Exception as exc:
        return CensusRecord(grid_id, lay.to_string(), parity, cls.centred,
                            cls.symmetric_only, float("nan"), False, -1,
                            float("nan"), time.perf_counter() - t0,
                            error=f"{type(exc).__name__}: {exc}")
    return CensusRecord(grid_id, lay.to_string(), parity, cls.centred,
                        cls.symmetric_only, max_re,
                        max_re < thresholds.unstable_re, n_unstable,
                        max_eps, time.perf_counter() - t0)


_WORKER_STATE: dict = {}


def _init_worker(parity, params, wave, layers, thresholds, cache):
    _WORKER_STATE.update(parity=parity, params=params, wave=wave,
                         layers=layers, thresholds=thresholds, cache=cache)


def _score_chunk(ids: list[int]) -> list[CensusRecord]:
    w = _WORKER_STATE
    return [score_layout(i, w["parity"], w["params"], w["wave"], w["layers"],
                         w["thresholds"], w["cache"]) for i in ids]


def _load_resume_ids(path) -> set[int]:
    done = set()
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    done.add(int(rec["grid_id"]))
                except (ValueError, KeyError):
                    continue  # torn tail line from a crashed run
    except FileNotFoundError:
        pass
    return done


def run_census(parity: str, params: GridParams,
               wave: WaveParams = WaveParams(),
               layers: EdgeLayerSpec = EdgeLayerSpec(1, 0),
               thresholds: ModeThresholds = ModeThresholds(),
               jsonl_path=None, workers: int = 1, resume: bool = False,
               grid_ids=None, progress=None) -> list[CensusRecord]:
    """Score every layout of one parity; returns records sorted by id.

    With ``jsonl_path`` records append to disk as they complete, and
    ``resume`` skips ids already present there. ``workers`` > 1 fans the
    id space out over processes pulling chunks on demand; scores do not
    depend on scheduling, only the JSONL line order does.
    """
    if parity not in PARITY_N:
        raise ValueError(f"parity must be one of {sorted(PARITY_N)}, "
                         f"got {parity!r}")
    n = PARITY_N[parity]
    if params.n != n:
        params = replace(params, n=n)
    ids = list(grid_ids) if grid_ids is not None \
        else list(range(1, N_LAYOUTS + 1))
    done: set[int] = set()
    records: list[CensusRecord] = []
    sink = None
    if jsonl_path is not None:
        if resume:
            done = _load_resume_ids(jsonl_path)
            records.extend(_replay_jsonl(jsonl_path, keep=set(ids)))
        sink = open(jsonl_path, "a" if resume else "w")
    todo = [i for i in ids if i not in done]

    cache = _type_cache(n, params, wave, layers, thresholds)
    t_start = time.perf_counter()
    n_done = 0

    def emit(rec: CensusRecord):
        nonlocal n_done
        records.append(rec)
        if sink is not None:
            sink.write(json.dumps(asdict(rec)) + "\n")
        n_done += 1
        if progress is not None and (n_done % 8192 == 0
                                     or n_done == len(todo)):
            rate = n_done / max(time.perf_counter() - t_start, 1e-9)
            print(f"census {parity}: {n_done}/{len(todo)} "
                  f"({rate:.0f}/s)", file=progress, flush=True)

    try:
        if workers <= 1:
            _init_worker(parity, params, wave, layers, thresholds, cache)
            for i in todo:
                emit(_score_chunk([i])[0])
        else:
            chunks = [todo[i:i + 1024] for i in range(0, len(todo), 1024)]
            with multiprocessing.Pool(
                    workers, initializer=_init_worker,
                    initargs=(parity, params, wave, layers, thresholds,
                              cache)) as pool:
                for recs in pool.imap_unordered(_score_chunk, chunks):
                    for rec in recs:
                        emit(rec)
    finally:
        if sink is not None:
            sink.close()
    records.sort(key=lambda r: r.grid_id)
    return records


def _replay_jsonl(path, keep: set[int]) -> list[CensusRecord]:
    out = []
    seen = set()
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                rec = CensusRecord(**d)
            except (ValueError, KeyError, TypeError):
                continue
            if rec.grid_id in keep and rec.grid_id not in seen:
                seen.add(rec.grid_id)
                out.append(rec)
    return out


def summarize(records: list[CensusRecord],
              expected: int | None = None) -> CensusSummary:
    """Headline counts; warns when the record set is incomplete."""
    parities = tuple(sorted({r.parity for r in records}))
    if expected is None:
        expected = N_LAYOUTS * len(parities)
    partial = len(records) != expected
    if partial:
        warnings.warn(f"partial census: {len(records)} of {expected} "
                      f"records; counts below are not headline numbers",
                      stacklevel=2)
    ok = [r for r in records if r.error is None]
    stable = [r for r in ok if r.stable]
    # ids repeat across parities, so keys are (parity, id) pairs
    sym_keys = {(r.parity, r.grid_id) for r in ok if r.symmetric_only}
    stable_keys = {(r.parity, r.grid_id) for r in stable}
    return CensusSummary(
        parities=parities,
        total=len(records),
        expected=expected,
        stable=len(stable),
        centred_stable=sum(1 for r in stable if r.centred),
        non_centred_stable=sum(1 for r in stable if not r.centred),
        unstable=sum(1 for r in ok if not r.stable),
        accurate=sum(1 for r in stable if r.accurate()),
        errors=len(records) - len(ok),
        stable_iff_symmetric=(sym_keys == stable_keys),
        partial=partial,
    )


def _fmt(x: float) -> str:
    if isnan(x):
        return "nan"
    if x == float("inf"):
        return "inf"
    return "%.17g" % x


def write_census_csv(records: list[CensusRecord], path,
                     meta: dict | None = None) -> None:
    """Finalized sweep table, sorted by (parity, id), stable byte output.

    ``meta`` entries become leading ``# key=value`` comment lines."""
    import csv

    rows = sorted(records, key=lambda r: (r.parity, r.grid_id))
    with open(path, "w", newline="") as fh:
        for key, val in (meta or {}).items():
            fh.write(f"# {key}={val}\n")
        w = csv.writer(fh)
        w.writerow(_CSV_COLUMNS)
        for r in rows:
            w.writerow([r.grid_id, r.layout, r.parity,
                        int(r.centred), int(r.symmetric_only),
                        _fmt(r.max_re), int(r.stable), r.n_unstable,
                        _fmt(r.max_eps)])

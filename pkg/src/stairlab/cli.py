"""Command-line interface: configuration, dispatch, and report emission.

Configuration lives in a flat key=value text file; every key has a flag of
the same name (flags win), a documented default, and unknown keys are
rejected rather than ignored.  Rationals are written as ``p/q`` or decimal
strings, booleans as true/false, big integers in decimal.  All outputs are
CSV files whose bodies are byte-identical across reruns with the same config
and a warm cache; run metadata (seed, construction fingerprint) sits in
``#`` comment headers.  Exit status: 0 on success, 2 when any certified
verdict came out indeterminate, 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import analytics, formal, oracle
from .construction import Staircase, StaircaseParams
from .correlation import CorrelationEngine
from .intervals import Enclosure

CACHE_ENV_VAR = "STAIRLAB_CACHE_DIR"

SUBCOMMANDS = ("build", "corr", "lemma", "ineq2", "cross", "distance",
               "census", "identity", "spectrum", "mix", "oracle-check")


def parse_rational(text: str) -> Fraction:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/")
        return Fraction(int(num), int(den))
    return Fraction(Decimal(text))


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_int_list(text: str) -> Tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(tok) for tok in text.split(","))


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of the artifact, with its documented default."""

    # construction
    d: float = 0.5
    rounding: str = "round"
    r_min: int = 2
    base_stage: int = 0
    base_level: int = 0
    constant_rank: Optional[int] = None
    override_ranks: Optional[Tuple[int, ...]] = None
    level_cap: int = 10**7
    # certified correlation queries
    eps: Fraction = Fraction(1, 10**9)
    stage_budget: int = 64
    # analytics grids
    r_list: Tuple[int, ...] = (1, 2, 3)
    basis_list: Tuple[int, ...] = (4, 8, 16, 32, 64)
    p_list: Tuple[int, ...] = (0, 1, 2)
    n_list: Tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)
    n_max: int = 64
    height_cap_digits: int = 300
    precision_bits: int = 256
    num_moments: int = 256
    grid_size: int = 1024
    mode: str = "both"            # identity: printed | corrected | both
    stages: int = 12              # build: stages to dump
    stages_max: int = 10          # oracle-check: deepest stage
    samples: int = 200            # oracle-check: shifts per stage
    tower_lags: bool = False      # mix: use tower-return lags h_j + {0,1}
    normalize: bool = False       # mix: divide by total measure for display
    j_max: Optional[int] = None   # census scan bound (None: scan to closure)
    shifts_file: Optional[str] = None  # corr: one decimal shift per line
    # io
    out_dir: str = "out"
    cache_dir: Optional[str] = None
    seed: int = 20260810
    workers: int = 1


_PARSERS = {
    "d": float,
    "rounding": str,
    "r_min": int,
    "base_stage": int,
    "base_level": int,
    "constant_rank": int,
    "override_ranks": parse_int_list,
    "level_cap": int,
    "eps": parse_rational,
    "stage_budget": int,
    "r_list": parse_int_list,
    "basis_list": parse_int_list,
    "p_list": parse_int_list,
    "n_list": parse_int_list,
    "n_max": int,
    "height_cap_digits": int,
    "precision_bits": int,
    "num_moments": int,
    "grid_size": int,
    "mode": str,
    "stages": int,
    "stages_max": int,
    "samples": int,
    "tower_lags": parse_bool,
    "normalize": parse_bool,
    "j_max": int,
    "shifts_file": str,
    "out_dir": str,
    "cache_dir": str,
    "seed": int,
    "workers": int,
}


def load_config_file(path: str) -> Dict[str, object]:
    values: Dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _PARSERS:
            raise ValueError(f"{path}:{lineno}: unknown configuration key {key!r}")
        values[key] = _PARSERS[key](value.strip())
    return values


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stairlab",
        description="exact staircase rank-one constructions: certified "
                    "correlations and spectral experiments")
    parser.add_argument("--config", help="flat key=value configuration file")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value configuration file")
    for name, parse in _PARSERS.items():
        flag = "--" + name.replace("_", "-")
        common.add_argument(flag, dest=name, type=parse, default=None,
                            help=f"config key {name}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "build": "dump exact stage geometry",
        "corr": "certified correlation enclosures for given shifts",
        "lemma": "gap between tower-height averages and the Cesaro norm",
        "ineq2": "norm deviation of the double average from tower translates",
        "cross": "off-diagonal Gram deviations across one plateau",
        "distance": "distance to the cyclic space of the product vector",
        "census": "plateau census of the rank sequence",
        "identity": "telescoping identity residuals (printed and corrected)",
        "spectrum": "Fejér spectral density estimates",
        "mix": "correlation profile against the mixing target",
        "oracle-check": "compare the engine against the brute-force oracle",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: Dict[str, object] = {}
    if args.config:
        values.update(load_config_file(args.config))
    for f in fields(RunConfig):
        flag_val = getattr(args, f.name, None)
        if flag_val is not None:
            values[f.name] = flag_val
    cfg = RunConfig(**values)
    if cfg.cache_dir is None and os.environ.get(CACHE_ENV_VAR):
        cfg = replace(cfg, cache_dir=os.environ[CACHE_ENV_VAR])
    return cfg


def staircase_params(cfg: RunConfig) -> StaircaseParams:
    return StaircaseParams(
        d=cfg.d, r_min=cfg.r_min, rounding=cfg.rounding,
        base_stage=cfg.base_stage, base_level=cfg.base_level,
        constant_rank=cfg.constant_rank,
        override_ranks=cfg.override_ranks or None,
        level_cap=cfg.level_cap)


# ----------------------------------------------------------------------
# report emission
# ----------------------------------------------------------------------

FORMATS_TEXT = """\
stairlab output formats
=======================

All CSV files start with '#' comment lines (run metadata: seed, construction
fingerprint); the body is a fixed header row plus data rows and is
byte-identical across reruns with identical configuration and a warm cache.
Exact rationals are written as p/q (or a bare integer), big integers in
decimal, floats in repr precision.

build:    geometry.json    stage table (decimal strings for big integers)
corr:     corr.csv         n, lo, hi, width, stage_used
census:   census.csv       r, j_r, size, reference, members (|-separated)
lemma:    lemma.csv        r, j, height, gap_lo, gap_hi, bound, verdict
ineq2:    ineq2.csv        r, size, qq_lo, qq_hi, qp_lo, qp_hi, pp_lo, pp_hi,
                           lhs_lo, lhs_hi, rhs, verdict
cross:    cross.csv        r, j, p, dev_lo, dev_hi, height_ratio, r_power,
                           c_estimate
distance: distance.csv     r, N, rho_sq, gram_condition, solver_residual,
                           precision_bits, effective_rank
identity: identity.csv     r, mode, l1_norm, support_size, best_shift,
                           best_shift_l1
spectrum: spectrum.csv     theta, density, product_density
          moments.csv      n, c_lo, c_hi, csq_mid
mix:      mix.csv          n, lo, hi, target_lo, target_hi
oracle-check: oracle.csv   stage, kind, shift, engine_value, oracle_value
                           (body empty when every sampled check matches)

cache file (cache_dir/counts-<construction digest>.txt): append-only records
'P stage shift count' (pair counts) and 'T stage shift count' (top-window
counts), all integers in decimal; two header lines pin the format version
and the construction fingerprint.

configuration file: flat key=value lines, '#' comments; keys equal the CLI
flag names with underscores; unknown keys are rejected.
"""


class Emitter:
    def __init__(self, cfg: RunConfig, command: str, fingerprint: str):
        self.cfg = cfg
        self.command = command
        self.fingerprint = fingerprint
        self.out_dir = Path(cfg.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "FORMATS").write_text(FORMATS_TEXT)

    def write_csv(self, filename: str, header: Sequence[str],
                  rows: Sequence[Sequence[object]]) -> Path:
        path = self.out_dir / filename
        lines = [f"# stairlab {self.command}",
                 f"# seed={self.cfg.seed}",
                 f"# params={self.fingerprint}",
                 ",".join(header)]
        for row in rows:
            lines.append(",".join(str(x) for x in row))
        path.write_text("\n".join(lines) + "\n")
        return path

    def write_text(self, filename: str, text: str) -> Path:
        path = self.out_dir / filename
        path.write_text(text)
        return path


def _grid_map(workers: int, fn, items: list) -> list:
    """Run fn over items (optionally in a thread pool), preserving order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_build(cfg: RunConfig, emitter: Emitter, stair: Staircase,
              engine: CorrelationEngine) -> int:
    stages = []
    for j in range(cfg.stages + 1):
        geo = stair.stage_geometry(j)
        stages.append({
            "stage": j,
            "rank": geo.rank,
            "height": str(geo.height),
            "width": str(geo.width),
            "tower_measure": str(geo.tower_measure),
            "spacers": [str(s) for s in geo.spacers],
            "offsets": [str(o) for o in geo.offsets],
        })
    doc = {"params": stair.fingerprint(), "stages": stages}
    emitter.write_text("geometry.json", json.dumps(doc, indent=1) + "\n")
    total = stair.total_measure(cfg.stages)
    print(f"construction {stair.fingerprint()}")
    print(f"{'j':>4} {'r_j':>5} {'h_j':>24} {'w_j':>16}")
    for row in stages:
        h = row["height"]
        h_disp = h if len(h) <= 24 else h[:10] + "..." + f"({len(h)}d)"
        print(f"{row['stage']:>4} {row['rank']:>5} {h_disp:>24} {row['width']:>16}")
    print(f"total measure enclosure at stage {cfg.stages}: [{total.lo}, {total.hi}]")
    return 0


def cmd_corr(cfg: RunConfig, emitter: Emitter, stair: Staircase,
             engine: CorrelationEngine) -> int:
    shifts = list(cfg.n_list)
    if cfg.shifts_file:
        for line in Path(cfg.shifts_file).read_text().split():
            shifts.append(int(line))
    rows = []
    nonconverged = 0
    for n in shifts:
        enc = engine.correlation(n, cfg.eps, cfg.stage_budget)
        if not enc.converged:
            nonconverged += 1
        rows.append((n, enc.lo, enc.hi, enc.width, enc.stage))
    emitter.write_csv("corr.csv", ("n", "lo", "hi", "width", "stage_used"), rows)
    for row in rows:
        print(f"c({row[0]}) in [{row[1]}, {row[2]}] (stage {row[4]})")
    if nonconverged:
        print(f"warning: {nonconverged} enclosures missed the width target "
              f"within the stage budget", file=sys.stderr)
    return 0


def cmd_census(cfg: RunConfig, emitter: Emitter, stair: Staircase,
               engine: CorrelationEngine) -> int:
    rows = []
    for r in cfg.r_list:
        rep = stair.j_r_census(r, cfg.j_max)
        ref = "" if rep.reference is None else repr(rep.reference)
        rows.append((r, rep.j_r, rep.size, ref, "|".join(map(str, rep.members))))
        print(f"r={r}: j_r={rep.j_r} |J_r|={rep.size} reference~{ref or 'n/a'}")
    emitter.write_csv("census.csv", ("r", "j_r", "size", "reference", "members"),
                      rows)
    return 0


def _accessible_plateaus(stair: Staircase, r_list: Sequence[int],
                         height_cap: int) -> List[int]:
    out = []
    for r in r_list:
        rep = stair.j_r_census(r)
        members = [j for j in rep.members if stair.height(j) <= height_cap]
        if members:
            out.append(r)
    return out


def cmd_lemma(cfg: RunConfig, emitter: Emitter, stair: Staircase,
              engine: CorrelationEngine) -> int:
    height_cap = 10**cfg.height_cap_digits
    rows = []
    indeterminate = 0

    def one(r: int):
        return r, analytics.plateau_gap_sweep(engine, r, height_cap, cfg.j_max)

    for r, reports in _grid_map(cfg.workers, one, list(cfg.r_list)):
        for rep in reports:
            rows.append((r, rep.j, rep.height, rep.gap.lo, rep.gap.hi,
                         rep.bound, rep.verdict))
            if rep.verdict == analytics.INDETERMINATE:
                indeterminate += 1
        if len(reports) >= 2:
            slope = analytics.gap_decay_slope(reports)
            print(f"r={r}: {len(reports)} stages, gap slope vs height "
                  f"{slope:+.3f}, verdicts "
                  + "/".join(rep.verdict for rep in reports))
    emitter.write_csv("lemma.csv",
                      ("r", "j", "height", "gap_lo", "gap_hi", "bound", "verdict"),
                      rows)
    return 2 if indeterminate else 0


def cmd_ineq2(cfg: RunConfig, emitter: Emitter, stair: Staircase,
              engine: CorrelationEngine) -> int:
    rows = []
    indeterminate = 0

    def one(r: int):
        return analytics.tower_average_deviation(engine, r, j_max=cfg.j_max)

    for rep in _grid_map(cfg.workers, one, list(cfg.r_list)):
        rows.append((rep.r, rep.census.size,
                     rep.qq.lo, rep.qq.hi, rep.qp.lo, rep.qp.hi,
                     rep.pp.lo, rep.pp.hi, rep.lhs.lo, rep.lhs.hi,
                     rep.rhs, rep.verdict))
        if rep.verdict == analytics.INDETERMINATE:
            indeterminate += 1
        print(f"r={rep.r}: |J_r|={rep.census.size} lhs=[{float(rep.lhs.lo):.8f},"
              f" {float(rep.lhs.hi):.8f}] rhs={float(rep.rhs):.8f} -> {rep.verdict}")
    emitter.write_csv("ineq2.csv",
                      ("r", "size", "qq_lo", "qq_hi", "qp_lo", "qp_hi",
                       "pp_lo", "pp_hi", "lhs_lo", "lhs_hi", "rhs", "verdict"),
                      rows)
    return 2 if indeterminate else 0


def cmd_cross(cfg: RunConfig, emitter: Emitter, stair: Staircase,
              engine: CorrelationEngine) -> int:
    rows = []
    for r in cfg.r_list:
        census = stair.j_r_census(r, cfg.j_max)
        for p in cfg.p_list:
            usable = [j for j in census.members if j + p <= census.j_r
                      and stair.rank_sequence(j + p) == r + 1]
            for j in usable:
                rep = analytics.cross_height_deviation(engine, j, p, r, cfg.eps)
                rows.append((r, j, p, rep.deviation.lo, rep.deviation.hi,
                             rep.height_ratio, rep.r_power,
                             repr(rep.c_estimate)))
            if usable:
                print(f"r={r} p={p}: {len(usable)} stages, last C estimate "
                      f"{rows[-1][-1]}")
    emitter.write_csv("cross.csv",
                      ("r", "j", "p", "dev_lo", "dev_hi", "height_ratio",
                       "r_power", "c_estimate"), rows)
    return 0


def cmd_distance(cfg: RunConfig, emitter: Emitter, stair: Staircase,
                 engine: CorrelationEngine) -> int:
    rows = []
    eig_cache: dict = {}
    for N in cfg.basis_list:
        for r in cfg.r_list:
            rep = analytics.cyclic_distance(engine, r, N, cfg.precision_bits,
                                            eig_cache=eig_cache)
            rows.append((r, N, repr(rep.rho_sq), repr(rep.gram_condition),
                         repr(rep.solver_residual), rep.precision_bits,
                         rep.effective_rank))
            print(f"r={r} N={N}: rho_sq={rep.rho_sq:.6e} "
                  f"(rank {rep.effective_rank}, residual {rep.solver_residual:.2e})")
    rows.sort(key=lambda t: (t[0], t[1]))
    emitter.write_csv("distance.csv",
                      ("r", "N", "rho_sq", "gram_condition", "solver_residual",
                       "precision_bits", "effective_rank"), rows)
    return 0


def cmd_identity(cfg: RunConfig, emitter: Emitter, stair: Staircase,
                 engine: CorrelationEngine) -> int:
    modes = ("printed", "corrected") if cfg.mode == "both" else (cfg.mode,)
    rows = []
    status = 0
    for r in cfg.r_list:
        for mode in modes:
            if mode == "corrected":
                residual = formal.corrected_identity_residual(r)
                rows.append((r, mode, residual.l1_norm(),
                             len(residual.coeffs), 0, residual.l1_norm()))
                ok = residual.is_zero()
                print(f"r={r} corrected: residual l1 = {residual.l1_norm()}"
                      + ("" if ok else "  UNEXPECTEDLY NONZERO"))
                if not ok:
                    status = 1
            else:
                rep = formal.printed_identity_residual(r)
                rows.append((r, mode, rep.l1_norm, len(rep.residual.coeffs),
                             rep.best_common_shift, rep.best_common_shift_l1))
                print(f"r={r} printed: residual l1 = {rep.l1_norm}, best common "
                      f"diagonal shift {rep.best_common_shift} leaves l1 = "
                      f"{rep.best_common_shift_l1}")
    emitter.write_csv("identity.csv",
                      ("r", "mode", "l1_norm", "support_size", "best_shift",
                       "best_shift_l1"), rows)
    return status


def cmd_spectrum(cfg: RunConfig, emitter: Emitter, stair: Staircase,
                 engine: CorrelationEngine) -> int:
    res = analytics.spectral_density(engine, cfg.num_moments, cfg.grid_size)
    rows = [(repr(float(t)), repr(float(d)), repr(float(p)))
            for t, d, p in zip(res.grid, res.density, res.product_density)]
    emitter.write_csv("spectrum.csv", ("theta", "density", "product_density"),
                      rows)
    mrows = [(n, m.lo, m.hi, sq.mid)
             for n, (m, sq) in enumerate(zip(res.moments, res.product_moments))]
    emitter.write_csv("moments.csv", ("n", "c_lo", "c_hi", "csq_mid"), mrows)
    print(f"moments: {res.num_moments}, grid: {cfg.grid_size}")
    print(f"density grid mean {res.grid_mean:.9f} (c(0) = {float(engine.support_measure):.9f})")
    print(f"min density {res.density.min():.3e}, certified >= -{res.width_budget:.3e}")
    return 0


def cmd_mix(cfg: RunConfig, emitter: Emitter, stair: Staircase,
            engine: CorrelationEngine) -> int:
    if cfg.tower_lags:
        lags = analytics.tower_return_lags(engine, cfg.stages_max)
    else:
        lags = analytics.default_mix_lags(cfg.n_max)
    rows_data = analytics.mixing_profile(engine, lags, cfg.eps, cfg.stage_budget)
    total = stair.total_measure(64)
    rows = []
    for row in rows_data:
        val, tgt = row.value, row.target
        if cfg.normalize:
            val = val.divide(total)
            tgt = tgt.divide(total)
        rows.append((row.n, val.lo, val.hi, tgt.lo, tgt.hi))
    emitter.write_csv("mix.csv", ("n", "lo", "hi", "target_lo", "target_hi"),
                      rows)
    tgt = rows_data[0].target
    print(f"{len(rows)} lags; mixing target in [{float(tgt.lo):.6f}, {float(tgt.hi):.6f}]")
    for row in rows_data[-4:]:
        print(f"c({row.n}) in [{float(row.value.lo):.6f}, {float(row.value.hi):.6f}]")
    return 0


def cmd_oracle_check(cfg: RunConfig, emitter: Emitter, stair: Staircase,
                     engine: CorrelationEngine) -> int:
    stages = list(range(cfg.base_stage, cfg.stages_max + 1))
    result = oracle.oracle_check(engine, stages, cfg.samples, cfg.seed)
    rows = [(m.stage, m.kind, m.shift, m.engine_value, m.oracle_value)
            for m in result.mismatches]
    emitter.write_csv("oracle.csv",
                      ("stage", "kind", "shift", "engine_value", "oracle_value"),
                      rows)
    print(f"{result.checks} checks across stages {stages[0]}..{stages[-1]}: "
          + ("all match" if result.ok else f"{len(result.mismatches)} MISMATCHES"))
    return 0 if result.ok else 1


_DISPATCH = {
    "build": cmd_build,
    "corr": cmd_corr,
    "lemma": cmd_lemma,
    "ineq2": cmd_ineq2,
    "cross": cmd_cross,
    "distance": cmd_distance,
    "census": cmd_census,
    "identity": cmd_identity,
    "spectrum": cmd_spectrum,
    "mix": cmd_mix,
    "oracle-check": cmd_oracle_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        params = staircase_params(cfg)
        stair = Staircase(params)
        engine = CorrelationEngine(stair, cache_dir=cfg.cache_dir,
                                   stage_budget=cfg.stage_budget)
        emitter = Emitter(cfg, args.command, stair.fingerprint())
        try:
            return _DISPATCH[args.command](cfg, emitter, stair, engine)
        finally:
            engine.close()
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

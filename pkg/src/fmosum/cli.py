"""Command-line entry point: ``fmosum <command> [options]``.

Commands: detect, multiscale, simulate, cpt-plot, register, bench. Options
may also come from a flat ``key = value`` file given by ``--config``; flags
given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from .distrib import ProbGrid
from .io import (
    detection_record,
    dump_json,
    format_quantile_csv,
    ingest_raw,
    multiscale_record,
    read_quantile_csv,
    to_jsonable,
)
from .mosum import DetectConfig, detect
from .multiscale import MultiscaleConfig, multiscale_detect
from .refine import cpt_plot_data, lsd_refine, register_indices
from .simgen import dgp1, dgp2, dgp3, scaling_sequences, variance_change_sequence

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INGEST = 3
EXIT_COMPUTE = 4
EXIT_OUTPUT = 5

COMMANDS = ("detect", "multiscale", "simulate", "cpt-plot", "register", "bench")
DEFAULT_FORMAT = {
    "detect": "json",
    "multiscale": "json",
    "simulate": "csv",
    "cpt-plot": "csv",
    "register": "csv",
    "bench": "csv",
}
SIMULATORS = {"1": dgp1, "2": dgp2, "3": dgp3, "varchange": variance_change_sequence}


class StageError(Exception):
    def __init__(self, stage: str, code: int, exc: BaseException):
        super().__init__(f"{stage} failed: {exc}")
        self.code = code


def parse_range(text: str) -> tuple:
    """``A:B:STEP`` inclusive integer range, or a comma-separated list."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected A:B:STEP, got {text!r}")
        a, b, step = (int(p) for p in parts)
        if step <= 0 or b < a:
            raise ValueError(f"empty range {text!r}")
        return tuple(range(a, b + 1, step))
    return tuple(int(p) for p in text.split(",") if p.strip())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    command: str
    inputs: tuple = ()
    bandwidth: int = 80
    alpha: float = 0.05
    min_block: float = 15.0
    epsilon: Optional[float] = None
    boundary_c: float = 0.1
    boundary_correction: bool = True
    refine: bool = False
    grid_size: int = 201
    strategy: str = "SQI"
    seed: int = 0
    g_grid: tuple = tuple(range(30, 81, 2))
    raw: bool = False
    day_col: str = "day"
    value_col: str = "value"
    dgp: str = "1"
    n: int = 800
    lengths: tuple = tuple(range(2000, 20001, 2000))
    workers: int = 1
    output: str = "-"
    format: Optional[str] = None
    truth: Optional[str] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.bandwidth < 1:
            raise ValueError("bandwidth must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.grid_size < 3:
            raise ValueError("grid-size must be >= 3")
        if self.strategy not in ("SQI", "KSE"):
            raise ValueError("strategy must be SQI or KSE")
        if self.format not in (None, "json", "csv"):
            raise ValueError("format must be json or csv")
        if self.dgp not in SIMULATORS:
            raise ValueError(f"dgp must be one of {sorted(SIMULATORS)}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.g_grid or not self.lengths:
            raise ValueError("g-grid and lengths must be non-empty")
        # Shared validation of the detection parameters.
        self.detect_config()

    @property
    def out_format(self) -> str:
        return self.format or DEFAULT_FORMAT[self.command]

    def grid(self) -> ProbGrid:
        # Kernel estimates have no finite 0 and 1 quantiles, so KSE uses
        # midpoint levels.
        if self.strategy == "KSE":
            return ProbGrid.open(self.grid_size)
        return ProbGrid.uniform(self.grid_size)

    def detect_config(self, G: Optional[int] = None) -> DetectConfig:
        return DetectConfig(
            G=self.bandwidth if G is None else G,
            alpha=self.alpha,
            min_block_len=self.min_block,
            epsilon=self.epsilon,
            boundary_c=self.boundary_c,
            boundary_correction=self.boundary_correction,
        )

    def multiscale_config(self) -> MultiscaleConfig:
        cap = int(os.environ.get("FMOSUM_THREADS", self.workers))
        return MultiscaleConfig(
            g_grid=self.g_grid,
            template=self.detect_config(self.g_grid[0]),
            seed=self.seed,
            workers=max(1, min(self.workers, cap)),
        )

    def resolved(self) -> dict:
        return to_jsonable(asdict(self))


# Option name -> converter, shared by flags and the config file.
_CONVERTERS = {
    "bandwidth": int,
    "alpha": float,
    "min_block": float,
    "epsilon": float,
    "boundary_c": float,
    "boundary_correction": _bool,
    "refine": _bool,
    "grid_size": int,
    "strategy": lambda s: str(s).upper(),
    "seed": int,
    "g_grid": parse_range,
    "raw": _bool,
    "day_col": str,
    "value_col": str,
    "dgp": str,
    "n": int,
    "lengths": parse_range,
    "workers": int,
    "output": str,
    "format": lambda s: str(s).lower(),
    "truth": str,
}


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _CONVERTERS[key](value)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--bandwidth", "-G", type=int, help="window half-length G (default 80)")
    common.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    common.add_argument("--min-block", type=float, help="minimum block length rule: eps = min(0.5, value/G) (default 15)")
    common.add_argument("--epsilon", type=float, help="fixed eps, overriding --min-block")
    common.add_argument("--boundary-c", type=float, help="boundary CUSUM trim c (default 0.1)")
    common.add_argument("--no-boundary", dest="boundary_correction", action="store_false", help="disable the boundary extension")
    common.add_argument("--refine", action="store_true", help="add LSD refinement after detection")
    common.add_argument("--grid-size", type=int, help="number of probability levels M (default 201)")
    common.add_argument("--strategy", type=str.upper, choices=("SQI", "KSE"), help="quantile estimator for raw input")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--g-grid", type=parse_range, help="bandwidth grid A:B:STEP (default 30:80:2)")
    common.add_argument("--raw", action="store_true", help="inputs are raw day,value samples")
    common.add_argument("--day-col", help="day column of raw input (default day)")
    common.add_argument("--value-col", help="value column of raw input (default value)")
    common.add_argument("--workers", type=int, help="bandwidths run in parallel (capped by FMOSUM_THREADS)")
    common.add_argument("--output", "-o", help="output path, - for stdout")
    common.add_argument("--format", type=str.lower, choices=("json", "csv"))

    parser = argparse.ArgumentParser(prog="fmosum", description="Frechet-MOSUM change-point detection for distributional sequences.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("detect", "multiscale", "cpt-plot"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("input", help="quantile-matrix CSV (or raw samples with --raw)")
    p = sub.add_parser("register", parents=[common])
    p.add_argument("input", nargs="+", help="labelled sequences to detect and register")
    p = sub.add_parser("simulate", parents=[common], argument_default=argparse.SUPPRESS)
    p.add_argument("--dgp", choices=sorted(SIMULATORS), help="generator (default 1)")
    p.add_argument("--n", type=int, help="sequence length (default 800)")
    p.add_argument("--truth", help="truth sidecar path (default OUTPUT.truth.json)")
    p = sub.add_parser("bench", parents=[common], argument_default=argparse.SUPPRESS)
    p.add_argument("--lengths", type=parse_range, help="sequence lengths A:B:STEP (default 2000:20000:2000)")
    return parser


def resolve_config(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    inputs = ns.pop("input", ())
    values = read_config_file(ns.pop("config")) if "config" in ns else {}
    values.update(ns)
    if isinstance(inputs, str):
        inputs = (inputs,)
    return RunConfig(command=command, inputs=tuple(inputs), **values)


# -- stages -------------------------------------------------------------------


def _stage(name: str, code: int, fn, *args):
    try:
        return fn(*args)
    except (ValueError, OSError, ArithmeticError) as exc:
        raise StageError(name, code, exc) from exc


def _load(cfg: RunConfig, path: str):
    if cfg.raw:
        return ingest_raw(path, cfg.grid(), cfg.strategy, cfg.day_col, cfg.value_col)
    return read_quantile_csv(path)


def _csv_text(header, rows, config: dict) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if isinstance(x, float) and math.isnan(x) else x for x in r])
    return buf.getvalue()


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.output == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(cfg.output).write_text(text)


def _detect_one(cfg: RunConfig, seq):
    dcfg = cfg.detect_config()
    cps, profile = detect(seq, dcfg)
    if cfg.refine:
        cps = lsd_refine(seq, cps, dcfg.G, dcfg.alpha, dcfg.min_block_len, dcfg.epsilon)
    return cps, profile


def cmd_detect(cfg: RunConfig) -> str:
    seq = _stage("ingest", EXIT_INGEST, _load, cfg, cfg.inputs[0])
    cps, profile = _stage("detect", EXIT_COMPUTE, _detect_one, cfg, seq)
    config = cfg.resolved()
    if cfg.out_format == "csv":
        rows = [(k, b.start, b.end, b.peak) for k, b in zip(cps.estimates, cps.blocks)]
        return _csv_text(("index", "block_start", "block_end", "peak"), rows, config)
    return dump_json(detection_record(cps, profile, cfg.detect_config().eps, config))


def cmd_multiscale(cfg: RunConfig) -> str:
    seq = _stage("ingest", EXIT_INGEST, _load, cfg, cfg.inputs[0])
    mcfg = _stage("config", EXIT_USAGE, cfg.multiscale_config)
    cps, cpi, trajs = _stage("multiscale", EXIT_COMPUTE, multiscale_detect, seq, mcfg)
    config = cfg.resolved()
    if cfg.out_format == "csv":
        return _csv_text(("index",), [(k,) for k in cps.estimates], config)
    return dump_json(multiscale_record(cps, cpi, trajs, mcfg.min_traj_len, config))


def cmd_cpt_plot(cfg: RunConfig) -> str:
    seq = _stage("ingest", EXIT_INGEST, _load, cfg, cfg.inputs[0])
    data = _stage("cpt-plot", EXIT_COMPUTE, cpt_plot_data, seq, cfg.g_grid, cfg.detect_config(cfg.g_grid[0]))
    rows = [(G, k, data.counts[k], data.is_stable(k)) for G, k in data.rows]
    config = cfg.resolved()
    if cfg.out_format == "csv":
        return _csv_text(("G", "index", "count", "stable"), rows, config)
    recs = [dict(zip(("G", "index", "count", "stable"), r)) for r in rows]
    return dump_json({"rows": recs, "stable": list(data.stable), "config": config})


def cmd_register(cfg: RunConfig) -> str:
    seqs = [_stage("ingest", EXIT_INGEST, _load, cfg, p) for p in cfg.inputs]
    cps_list = [_stage("detect", EXIT_COMPUTE, _detect_one, cfg, s)[0] for s in seqs]
    reg = _stage("register", EXIT_COMPUTE, register_indices, seqs, cps_list)
    header = ("sequence_id", "original_index", "registered_index", "time_label")
    rows = list(reg.records())
    config = cfg.resolved()
    if cfg.out_format == "csv":
        return _csv_text(header, rows, config)
    return dump_json({"union_size": int(reg.union_labels.size), "records": [dict(zip(header, r)) for r in rows], "config": config})


def cmd_simulate(cfg: RunConfig) -> str:
    def run():
        return SIMULATORS[cfg.dgp](cfg.seed, n=cfg.n, grid=ProbGrid.uniform(cfg.grid_size))

    sim = _stage("simulate", EXIT_COMPUTE, run)
    truth = {"dgp": cfg.dgp, "seed": cfg.seed, "n": sim.seq.n, "true_cps": list(sim.true_cps)}
    truth_path = cfg.truth or (None if cfg.output == "-" else cfg.output + ".truth.json")
    if truth_path:
        _stage("output", EXIT_OUTPUT, Path(truth_path).write_text, dump_json({**truth, "config": cfg.resolved()}))
    if cfg.out_format == "json":
        return dump_json({**truth, "grid": sim.seq.grid.points, "values": sim.seq.values, "config": cfg.resolved()})
    return format_quantile_csv(sim.seq)


def run_bench(lengths, seed: int, detect_config: DetectConfig) -> list:
    """Time one detect per prefix of the duplicated Beta sequence; ``[(n, seconds)]``."""
    n_dup = math.ceil(max(lengths) / 500)
    rows = []
    for sim in scaling_sequences(n_dup, lengths, seed):
        t0 = time.perf_counter()
        detect(sim.seq, detect_config)
        rows.append((sim.seq.n, time.perf_counter() - t0))
    return rows


def cmd_bench(cfg: RunConfig) -> str:
    dcfg = cfg.detect_config()
    rows = _stage("bench", EXIT_COMPUTE, run_bench, cfg.lengths, cfg.seed, dcfg)
    config = cfg.resolved()
    if cfg.out_format == "json":
        return dump_json({"rows": [{"n": n, "seconds": s} for n, s in rows], "config": config})
    return _csv_text(("n", "seconds"), [(n, f"{s:.6f}") for n, s in rows], config)


HANDLERS = {
    "detect": cmd_detect,
    "multiscale": cmd_multiscale,
    "cpt-plot": cmd_cpt_plot,
    "register": cmd_register,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    except (ValueError, OSError, TypeError) as exc:
        print(f"fmosum: config failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        text = HANDLERS[cfg.command](cfg)
        _stage("output", EXIT_OUTPUT, _emit, cfg, text)
    except StageError as exc:
        print(f"fmosum: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

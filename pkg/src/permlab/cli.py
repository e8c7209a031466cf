"""``permlab`` command line: batch sweeps, search, lemma checks and plot scripts.

Exit codes: 0 success (all checks pass), 1 error or violation, 2 budget refusal.
Outputs go to ``--out`` or, by default, ``$PERMLAB_OUTPUT_DIR`` (falling back
to ``./permlab_out``).

Seeding: each run gets a permutation seed ``derive_seed(master, run_id)``
and an initialization seed ``derive_seed(master ^ INIT_SALT, repeat)``, so
repeat r starts every algorithm from the same point.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import analysis, search
from .engine import RunConfig, run
from .instances import GENERATORS, from_json, initial_point
from .problems import ContractError, StepSizeError, StepSizeRule, instance_stats
from .rng import derive_seed
from .schedulers import make_strategy

OUTPUT_ENV = "PERMLAB_OUTPUT_DIR"
INIT_SALT = 0x5EED1A17
SWEEP_COLUMNS = ("run_id", "algo", "flipflop", "n", "d", "K", "seed", "alpha", "epoch", "sq_error")
SUMMARY_COLUMNS = ("algo", "flipflop", "K", "median", "q1", "q3", "runs", "diverged")
DEFAULT_K_GRID = (8, 16, 32, 64, 128, 256)
ALL_ALGOS = ("igd", "ff-igd", "ss", "ff-ss", "rr", "ff-rr")
_AUTO_RULE = {"igd": "thm6_igd", "ss": "thm4_ss", "rr": "thm5_rr"}

EXIT_OK, EXIT_ERROR, EXIT_BUDGET = 0, 1, 2


class UsageError(ValueError):
    pass


def fmt(x: float) -> str:
    """17 significant digits: round-trips every double."""
    return format(float(x), ".17g")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "permlab_out"))


# ------------------------------------------------------------------ sweeps


@dataclass
class ExperimentConfig:
    """One sweep: algorithms x K grid x repeats on a single instance.

    ``step`` is ``"auto"`` (each algorithm's theorem rule), ``"auto:C"`` (same
    with leading constant C), a rule name such as ``"thm5_rr:1.5"``, or a
    number for an explicit constant step.
    """

    instance: dict[str, Any]
    algos: list[str] = field(default_factory=lambda: list(ALL_ALGOS))
    K_grid: list[int] = field(default_factory=lambda: list(DEFAULT_K_GRID))
    repeats: int = 10
    step: str = "auto"
    seed: int = 0
    name: str = "sweep"
    workers: int = 1
    burn_in: float = 0.25

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise UsageError(f"config: unknown field(s) {sorted(extra)}")
        if "instance" not in d:
            raise UsageError("config.instance: required")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.instance, dict) or "kind" not in self.instance:
            raise UsageError("config.instance: must be an object with 'kind'")
        if not isinstance(self.repeats, int) or self.repeats < 1:
            raise UsageError("config.repeats: must be an integer >= 1")
        if not self.algos:
            raise UsageError("config.algos: must not be empty")
        for i, a in enumerate(self.algos):
            base = a[3:] if a.startswith("ff-") else a
            if base not in _AUTO_RULE:
                raise UsageError(f"config.algos[{i}]: unknown algorithm {a!r}")
        if not self.K_grid:
            raise UsageError("config.K_grid: must not be empty")
        for i, K in enumerate(self.K_grid):
            if not isinstance(K, int) or K < 1:
                raise UsageError(f"config.K_grid[{i}]: must be a positive integer")
            if K % 2 and any(a.startswith("ff-") for a in self.algos):
                raise UsageError(f"config.K_grid[{i}]: FlipFlop algorithms need even K, got {K}")
        if not 0 <= self.seed < 2**64:
            raise UsageError("config.seed: must be a u64")
        if self.workers < 1:
            raise UsageError("config.workers: must be >= 1")
        rule_for(self.step, "rr")


def rule_for(step: str, algo: str) -> StepSizeRule:
    base = algo[3:] if algo.startswith("ff-") else algo
    try:
        if step == "auto" or step.startswith("auto:"):
            coef = step.partition(":")[2]
            return StepSizeRule(_AUTO_RULE[base], coef=float(coef) if coef else None)
        return StepSizeRule.parse(step)
    except ValueError as e:
        raise UsageError(f"config.step: {e}") from None


@lru_cache(maxsize=4)
def _instance(key: str):
    return from_json(json.loads(key))


def _job(args: tuple) -> tuple[list[tuple], dict[str, Any]]:
    run_id, inst_key, algo, K, rep, step, master = args
    fs = _instance(inst_key)
    x0 = initial_point(fs, derive_seed(master ^ INIT_SALT, rep))
    st = instance_stats(fs, x0)
    alpha = rule_for(step, algo).resolve(fs.n, K, st.mu, st.L, st.L_H, st.G)
    seed = derive_seed(master, run_id)
    traj = run(fs, make_strategy(algo, fs.n, seed), RunConfig(alpha, K, x0), st.minimizer)
    ff = algo.startswith("ff-")
    base = algo[3:] if ff else algo
    rows = [(run_id, base, int(ff), fs.n, fs.d, K, seed, alpha, k + 1, float(e))
            for k, e in enumerate(traj.sq_errors)]
    if traj.diverged:
        rows.append((run_id, base, int(ff), fs.n, fs.d, K, seed, alpha, traj.diverged_epoch, math.inf))
    final = float(traj.sq_errors[-1]) if not traj.diverged else math.inf
    return rows, {"run_id": run_id, "algo": algo, "K": K, "rep": rep, "final": final, "diverged": traj.diverged}


def run_experiment(cfg: ExperimentConfig) -> tuple[list[tuple], dict[str, Any]]:
    """Execute all runs; rows come back sorted by (run_id, epoch)."""
    cfg.validate()
    key = json.dumps(cfg.instance, sort_keys=True)
    try:
        _instance(key)
    except (ContractError, TypeError) as e:
        raise UsageError(f"config.instance: {e}") from None
    jobs = []
    rid = 0
    for algo in cfg.algos:
        for K in cfg.K_grid:
            for rep in range(cfg.repeats):
                jobs.append((rid, key, algo, K, rep, cfg.step, cfg.seed))
                rid += 1
    try:
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
                results = list(ex.map(_job, jobs, chunksize=4))
        else:
            results = [_job(j) for j in jobs]
    except StepSizeError as e:
        raise UsageError(f"config.step: {e}") from None
    rows = sorted((r for res in results for r in res[0]), key=lambda r: (r[0], r[8]))
    return rows, summarize([res[1] for res in results], cfg)


def summarize(finals: list[dict[str, Any]], cfg: ExperimentConfig) -> dict[str, Any]:
    table = []
    fits = {}
    for algo in cfg.algos:
        meds = []
        for K in cfg.K_grid:
            sel = [f for f in finals if f["algo"] == algo and f["K"] == K]
            ok = np.array([f["final"] for f in sel if not f["diverged"]])
            div = sum(f["diverged"] for f in sel)
            if ok.size:
                q1, med, q3 = (float(v) for v in np.percentile(ok, [25, 50, 75]))
            else:
                q1 = med = q3 = math.nan
            table.append({"algo": algo, "K": K, "median": med, "q1": q1, "q3": q3,
                          "runs": len(sel), "diverged": div})
            meds.append(med)
        fit = None
        usable = [(K, m) for K, m in zip(cfg.K_grid, meds) if math.isfinite(m) and m > 0]
        if len(usable) >= 4:
            Ks, ms = zip(*usable)
            fit = analysis.fit_poly_rate(Ks, ms, burn_in=cfg.burn_in).as_dict()
        fits[algo] = fit
    return {"name": cfg.name, "instance": cfg.instance, "step": cfg.step, "seed": cfg.seed,
            "repeats": cfg.repeats, "K_grid": list(cfg.K_grid), "table": table, "fits": fits,
            "diverged_runs": int(sum(f["diverged"] for f in finals))}


def rows_to_csv(rows: Sequence[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([r[0], r[1], r[2], r[3], r[4], r[5], r[6], fmt(r[7]), r[8], fmt(r[9])])
    return buf.getvalue()


def summary_to_csv(summary: dict[str, Any]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for t in summary["table"]:
        ff = t["algo"].startswith("ff-")
        base = t["algo"][3:] if ff else t["algo"]
        w.writerow([base, int(ff), t["K"], fmt(t["median"]), fmt(t["q1"]), fmt(t["q3"]), t["runs"], t["diverged"]])
    return buf.getvalue()


def emit_gnuplot(summary_csv: str, data_name: str = "summary.csv") -> str:
    """Gnuplot script with log-log axes, one median line plus quartile band per algorithm.

    The summary data is embedded as datablocks so the script is self-contained.
    """
    lines = [
        f"# permlab plot script (source: {data_name})",
        "set logscale xy",
        'set xlabel "epochs K"',
        'set ylabel "squared distance to minimizer"',
        "set key outside right",
        "set style fill transparent solid 0.2 noborder",
    ]
    series: dict[str, list[list[str]]] = {}
    reader = csv.DictReader(io.StringIO(summary_csv))
    for row in reader:
        label = ("ff-" if row["flipflop"] == "1" else "") + row["algo"]
        series.setdefault(label, []).append([row["K"], row["median"], row["q1"], row["q3"]])
    if not series:
        return "\n".join(lines) + "\n"
    clauses = []
    for j, (label, pts) in enumerate(series.items()):
        lines.append(f"$s{j} << EOD")
        lines.extend(" ".join(p) for p in pts)
        lines.append("EOD")
        clauses.append(f"$s{j} using 1:3:4 with filledcurves lc {j + 1} notitle")
        clauses.append(f'$s{j} using 1:2 with linespoints lc {j + 1} title "{label.upper()}"')
    lines.append("plot " + ", \\\n     ".join(clauses))
    return "\n".join(lines) + "\n"


def _write_outputs(rows, summary, out: Path, name: str) -> dict[str, str]:
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{name}.csv", "summary_csv": out / f"{name}_summary.csv",
             "summary_json": out / f"{name}_summary.json", "gnuplot": out / f"{name}.gp"}
    paths["csv"].write_text(rows_to_csv(rows))
    scsv = summary_to_csv(summary)
    paths["summary_csv"].write_text(scsv)
    paths["summary_json"].write_text(json.dumps(summary, indent=2, default=_json_default))
    paths["gnuplot"].write_text(emit_gnuplot(scsv, paths["summary_csv"].name))
    return {k: str(v) for k, v in paths.items()}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


# ------------------------------------------------------------------ parsing


def _parse_instance(args) -> dict[str, Any]:
    spec = args.instance
    if spec is None:
        raise UsageError("--instance is required")
    if spec.lstrip().startswith("{"):
        obj = json.loads(spec)
    elif os.path.exists(spec):
        obj = json.loads(Path(spec).read_text())
    elif spec in GENERATORS:
        obj = {"kind": spec}
    else:
        raise UsageError(f"--instance: {spec!r} is neither a generator name, a JSON file nor inline JSON")
    for key in ("n", "d", "L", "seed", "eps"):
        val = getattr(args, f"inst_{key}", None)
        if val is not None:
            obj[key] = val
    if getattr(args, "x0", None) is not None:
        obj["x0"] = json.loads(args.x0) if args.x0.strip().startswith("[") else [float(args.x0)]
    return obj


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("instance")
    g.add_argument("--instance", help="generator name, path to a JSON instance, or inline JSON")
    g.add_argument("--n", dest="inst_n", type=int)
    g.add_argument("--d", dest="inst_d", type=int)
    g.add_argument("--L", dest="inst_L", type=float)
    g.add_argument("--eps", dest="inst_eps", type=float)
    g.add_argument("--instance-seed", dest="inst_seed", type=int)
    g.add_argument("--x0", help="initial point (number or JSON list); default: the instance's rule")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="permlab", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run one algorithm over a K grid"),
                        ("sweep", "run several algorithms over a K grid")):
        sp = sub.add_parser(name, help=help_)
        _add_instance_args(sp)
        sp.add_argument("--config", help="JSON experiment config (flags override nothing when given)")
        if name == "run":
            sp.add_argument("--algo", choices=("igd", "ss", "rr"), default="rr")
            sp.add_argument("--flipflop", action="store_true")
        else:
            sp.add_argument("--algos", default=",".join(ALL_ALGOS))
        sp.add_argument("--seed", type=int, default=0, help="master seed (u64)")
        sp.add_argument("--K", default=None, help="comma-separated epoch counts")
        sp.add_argument("--repeats", type=int, default=None)
        sp.add_argument("--step", default="auto")
        sp.add_argument("--name", default=None)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV})")

    sp = sub.add_parser("search", help="greedy or exhaustive permutation-sequence search")
    _add_instance_args(sp)
    sp.add_argument("--mode", choices=("greedy", "exhaustive"), default="greedy")
    sp.add_argument("--objective", choices=("min", "max"), default="min")
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--step", default=None, help="step rule; default thm1_1d")
    sp.add_argument("--max-sequences", type=int, default=1 << 22)
    sp.add_argument("--full", action="store_true", help="print the full result instead of the sequence")

    sp = sub.add_parser("verify", help="numerical lemma checks")
    sp.add_argument("--lemma", choices=("amgm", "coupling", "prefix", "zmoment", "bounded"), required=True)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--alpha", type=float, default=None, help="amgm/prefix/zmoment: explicit step")
    sp.add_argument("--alpha-scale", type=float, default=None, help="coupling/bounded: multiple of the lemma's bound")
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--d", type=int, default=None)

    sp = sub.add_parser("plot", help="gnuplot script from a summary CSV")
    sp.add_argument("--summary", required=True)
    sp.add_argument("--out", default=None, help="script path (default: stdout)")
    return p


def _sweep_config(args, command: str) -> ExperimentConfig:
    if args.config:
        d = json.loads(Path(args.config).read_text())
        return ExperimentConfig.from_dict(d)
    inst = _parse_instance(args)
    if command == "run":
        algos = [("ff-" if args.flipflop else "") + args.algo]
    else:
        algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    K_grid = _int_list(args.K) if args.K else list(DEFAULT_K_GRID)
    repeats = args.repeats if args.repeats is not None else (1 if command == "run" else 10)
    name = args.name or (algos[0] if command == "run" else "sweep")
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be a u64")
    cfg = ExperimentConfig(instance=inst, algos=algos, K_grid=K_grid, repeats=repeats, step=args.step,
                           seed=args.seed, name=name, workers=args.workers)
    cfg.validate()
    return cfg


def cmd_run(args, command: str) -> int:
    cfg = _sweep_config(args, command)
    rows, summary = run_experiment(cfg)
    out = Path(args.out) if args.out else default_output_dir()
    paths = _write_outputs(rows, summary, out, cfg.name)
    print(json.dumps({"outputs": paths, "fits": summary["fits"],
                      "diverged_runs": summary["diverged_runs"]}, indent=2, default=_json_default))
    return EXIT_OK


def cmd_search(args) -> int:
    fs = from_json(_parse_instance(args))
    x0 = initial_point(fs, 0)
    st = instance_stats(fs, x0)
    if args.alpha is not None:
        alpha = args.alpha
    else:
        rule = StepSizeRule.parse(args.step or "thm1_1d")
        alpha = rule.resolve(fs.n, args.K, st.mu, st.L, st.L_H, st.G)
    objective = "min_final_error" if args.objective == "min" else "max_final_error"
    if args.mode == "greedy":
        if args.objective != "min":
            raise UsageError("--mode greedy only supports --objective min")
        res = search.greedy_sequence_run(fs, x0, alpha, args.K)
    else:
        budget = search.SequenceSearchBudget(max_sequences=args.max_sequences, max_K=max(args.K, 16),
                                             objective=objective)
        res = search.exhaustive_sequence_search(fs, x0, alpha, args.K, budget)
    if args.full:
        out = res.as_dict()
        out["alpha"] = alpha
        print(json.dumps(out, indent=2, default=_json_default))
    else:
        print(json.dumps(res.sequence_one_based()))
    return EXIT_OK


def cmd_verify(args) -> int:
    kw: dict[str, Any] = {"seed": args.seed}
    if args.trials is not None:
        kw["trials"] = args.trials
    for key in ("n", "d"):
        if getattr(args, key) is not None:
            kw[key] = getattr(args, key)
    lemma = args.lemma
    if lemma in ("amgm", "prefix", "zmoment") and args.alpha is not None:
        kw["alpha"] = args.alpha
    if lemma in ("coupling", "bounded") and args.alpha_scale is not None:
        kw["alpha_scale"] = args.alpha_scale
    if lemma == "coupling" and "d" in kw:
        raise UsageError("coupling is 1-D; --d does not apply")
    fn = {"amgm": analysis.verify_amgm_matrix, "coupling": analysis.verify_coupling,
          "prefix": analysis.verify_prefix_sums, "zmoment": analysis.verify_z_moment,
          "bounded": analysis.verify_bounded_iterates}[lemma]
    report = fn(**kw)
    print(report.to_json())
    return EXIT_OK if report.passed else EXIT_ERROR


def cmd_plot(args) -> int:
    text = Path(args.summary).read_text()
    script = emit_gnuplot(text, Path(args.summary).name)
    if args.out:
        Path(args.out).write_text(script)
    else:
        sys.stdout.write(script)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("run", "sweep"):
            return cmd_run(args, args.command)
        if args.command == "search":
            return cmd_search(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_plot(args)
    except search.BudgetExceeded as e:
        print(json.dumps({"error": "budget", "message": str(e), "estimated_sequences": e.estimate}),
              file=sys.stderr)
        return EXIT_BUDGET
    except (UsageError, ContractError, StepSizeError, ValueError, OSError) as e:
        print(f"permlab: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

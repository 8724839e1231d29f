"""Batch experiment runner.

Reads a TOML config describing an alphabet, a word source, a test
function and a task, runs the task, and writes CSV data files plus a
JSON manifest into the output directory.  Identical config and seed
produce byte-identical CSVs no matter how many workers run the
sampling; the manifest additionally records wall-clock time and so is
not byte-stable.  Exit codes: 0 success, 2 invalid config, 3 task
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .clt_harness import (
    CltExperiment,
    esseen_bound,
    empirical_char_gap,
    komlos_quantities,
    rate_exponent,
    run_clt,
    verify_komlos_inequalities,
)
from .ergodic_stats import (
    BlockScheme,
    coboundary_detect,
    quenched_variance_curve,
    variance_series,
)
from .exact_linalg import Alphabet, IntMatrix, Word, standard_alphabet
from .freq_lattice import SeparationInstance, check_separation
from .random_products import (
    ExplicitSource,
    IIDSource,
    RotationSource,
    growth_diagnostics,
    sample_word,
)
from .sl2_positive import dilation_constants, gap_for_freq_bound
from .test_functions import RegularSetIndicator, TrigPoly
from .torus_dynamics import DEFAULT_MODULUS

TASKS = (
    "clt", "variance", "separation", "sl2-constants", "komlos",
    "diagnostics", "coboundary",
)

CONFIG_INVALID = 2
TASK_FAILED = 3

_WORKERS_ENV = "TORALCLT_WORKERS"


class ConfigError(ValueError):
    pass


def _table(cfg: dict, name: str, required: bool = True) -> dict:
    t = cfg.get(name)
    if t is None:
        if required:
            raise ConfigError(f"missing [{name}] table")
        return {}
    if not isinstance(t, dict):
        raise ConfigError(f"[{name}] must be a table")
    return t


def build_alphabet(table: dict) -> Alphabet:
    kind = table.get("kind", "standard")
    if kind == "standard":
        return standard_alphabet()
    if kind != "explicit":
        raise ConfigError(f"alphabet.kind must be standard or explicit, got {kind!r}")
    mats = table.get("matrices")
    if not mats:
        raise ConfigError("alphabet.matrices required for explicit alphabets")
    matrices = []
    for m in mats:
        try:
            matrices.append(IntMatrix(m))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad matrix {m!r}: {exc}") from exc
    labels = table.get("labels") or [chr(ord("A") + i) for i in range(len(matrices))]
    try:
        return Alphabet(labels, matrices)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_source(table: dict, alphabet: Alphabet, seed: int):
    kind = table.get("kind", "iid")
    try:
        if kind == "iid":
            return IIDSource(
                alphabet,
                weights=tuple(table["weights"]) if "weights" in table else None,
                seed=int(table.get("seed", seed)),
            )
        if kind == "explicit":
            letters = table.get("word")
            if not letters:
                raise ConfigError("source.word required for explicit sources")
            if all(isinstance(v, str) for v in letters):
                idx = tuple(alphabet.index_of(v) for v in letters)
            else:
                idx = tuple(int(v) for v in letters)
            return ExplicitSource(Word(alphabet, idx))
        if kind == "rotation":
            return RotationSource(
                alphabet,
                angle=float(table["angle"]),
                interval=tuple(table.get("interval", (0.0, 0.5))),
                omega0=float(table.get("omega0", 0.0)),
            )
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad [source] table: {exc}") from exc
    raise ConfigError(f"source.kind must be iid, explicit or rotation, got {kind!r}")


def build_function(table: dict, dim: int):
    kind = table.get("kind", "cos")
    try:
        if kind == "cos":
            freq = tuple(int(v) for v in table.get("freq", (1,) + (0,) * (dim - 1)))
            return TrigPoly.cosine(freq, float(table.get("amplitude", 1.0)))
        if kind == "trig":
            terms = {}
            for t in table["terms"]:
                freq = tuple(int(v) for v in t["freq"])
                terms[freq] = complex(float(t.get("re", 0.0)), float(t.get("im", 0.0)))
            return TrigPoly(dim, terms, const=float(table.get("const", 0.0)))
        if kind == "box":
            return RegularSetIndicator(
                shape="box",
                bounds=tuple(tuple(float(x) for x in iv) for iv in table["bounds"]),
            )
        if kind == "ball":
            return RegularSetIndicator(
                shape="ball",
                center=tuple(float(x) for x in table["center"]),
                radius=float(table["radius"]),
            )
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad [function] table: {exc}") from exc
    raise ConfigError(f"function.kind must be cos, trig, box or ball, got {kind!r}")


@dataclasses.dataclass(frozen=True)
class LoadedConfig:
    task: str
    seed: int
    q: int
    alphabet: Alphabet
    source: object
    function: object
    params: dict
    raw_bytes: bytes


def load_config(path) -> LoadedConfig:
    raw = Path(path).read_bytes()
    try:
        cfg = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    exp = _table(cfg, "experiment")
    task = exp.get("task")
    if task not in TASKS:
        raise ConfigError(f"experiment.task must be one of {TASKS}, got {task!r}")
    seed = int(exp.get("seed", 0))
    q = int(exp.get("q", DEFAULT_MODULUS))
    alphabet = build_alphabet(_table(cfg, "alphabet", required=False))
    source = build_source(_table(cfg, "source", required=False), alphabet, seed)
    function = build_function(_table(cfg, "function", required=False), alphabet.dim)
    params = _table(cfg, "params", required=False)
    return LoadedConfig(task, seed, q, alphabet, source, function, params, raw)


def _fmt(value) -> str:
    # repr of a float is its shortest round-trip form, which keeps CSVs
    # byte-stable across runs and platforms
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, TrigPoly):
        return {
            "dim": obj.dim,
            "const": obj.coeff((0,) * obj.dim).real,
            "terms": [
                {"freq": list(p), "re": c.real, "im": c.imag}
                for p, c in sorted(obj.pair_items())
            ],
        }
    if isinstance(obj, Word):
        return {"labels": [obj.alphabet.labels[i] for i in obj.indices]}
    if isinstance(obj, Alphabet):
        return {"labels": list(obj.labels), "matrices": [m.rows for m in obj.matrices]}
    if isinstance(obj, IntMatrix):
        return [list(r) for r in obj.rows]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(params: dict, key: str):
    if key not in params:
        raise ConfigError(f"params.{key} is required for this task")
    return params[key]


def _task_clt(cfg: LoadedConfig, outdir: Path, workers: int):
    exp = CltExperiment(
        source=cfg.source,
        f=cfg.function,
        n_grid=tuple(int(n) for n in _require(cfg.params, "n_grid")),
        samples=int(_require(cfg.params, "samples")),
        seed=cfg.seed,
        standardization=cfg.params.get("standardization", "exact-l2"),
        q=cfg.q,
        r_max=int(cfg.params.get("r_max", 6)),
        fejer_order=int(cfg.params.get("fejer_order", 32)),
    )
    report = run_clt(exp, workers=workers)
    _write_csv(
        outdir / "clt.csv",
        ("n", "sigma_hat", "ks"),
        zip(report.n_grid, report.sigma_hat, report.ks),
    )
    _write_json(outdir / "clt_report.json", report)
    fitted = {"loglog_slope": report.loglog_slope}
    return ["clt.csv", "clt_report.json"], fitted


def _task_variance(cfg: LoadedConfig, outdir: Path, workers: int):
    if not isinstance(cfg.function, TrigPoly):
        raise ConfigError("variance task needs a trigonometric polynomial")
    weights = getattr(cfg.source, "weights", None)
    series = variance_series(
        cfg.alphabet, weights, cfg.function,
        int(cfg.params.get("r_max", 8)),
        word_samples=int(cfg.params.get("word_samples", 2000)),
        seed=cfg.seed,
    )
    rows = [(r + 1, v) for r, v in enumerate(series.per_shift)]
    _write_csv(outdir / "variance_series.csv", ("shift", "correlation"), rows)
    outputs = ["variance_series.csv", "variance_report.json"]
    report = {"series": series}
    if "n_grid" in cfg.params:
        word = sample_word(cfg.source, max(int(n) for n in cfg.params["n_grid"]))
        curve = quenched_variance_curve(
            word, cfg.function,
            tuple(int(n) for n in cfg.params["n_grid"]),
            samples=int(cfg.params.get("samples", 20000)),
            seed=cfg.seed, q=cfg.q,
        )
        stderrs = curve.stderrs if curve.stderrs is not None else [0.0] * len(curve.n_grid)
        _write_csv(
            outdir / "variance_curve.csv",
            ("n", "l2_sq_over_n", "stderr"),
            zip(curve.n_grid, curve.values, stderrs),
        )
        outputs.insert(1, "variance_curve.csv")
        report["curve_mode"] = curve.mode
    _write_json(outdir / "variance_report.json", report)
    return outputs, {"sigma_sq": series.sigma_sq}


def _task_separation(cfg: LoadedConfig, outdir: Path, workers: int):
    n = int(_require(cfg.params, "n"))
    word = sample_word(cfg.source, n)
    inst = SeparationInstance(
        word=word,
        freq_bound=int(_require(cfg.params, "freq_bound")),
        gap=int(_require(cfg.params, "gap")),
        max_blocks=int(cfg.params.get("s_max", 3)),
        force_primed_zero=bool(cfg.params.get("force_primed_zero", False)),
    )
    report = check_separation(inst, budget=int(cfg.params.get("budget", 10**8)))
    _write_json(outdir / "separation.json", report)
    _write_csv(
        outdir / "separation.csv",
        ("n", "freq_bound", "gap", "s_max", "verdict"),
        [(n, inst.freq_bound, inst.gap, inst.max_blocks, report.verdict)],
    )
    return ["separation.csv", "separation.json"], None


def _task_sl2_constants(cfg: LoadedConfig, outdir: Path, workers: int):
    consts = dilation_constants(
        cfg.alphabet,
        sample_budget=int(cfg.params.get("sample_budget", 4000)),
        seed=cfg.seed,
    )
    d_grid = [int(d) for d in cfg.params.get("d_grid", (1, 2, 3))]
    rows = []
    for d in d_grid:
        choice = gap_for_freq_bound(d, consts)
        rows.append((d, choice.rho1, choice.delta))
    _write_csv(outdir / "gaps.csv", ("freq_bound", "rho1", "gap"), rows)
    _write_json(outdir / "dilation_constants.json", consts)
    fitted = {"c1": consts.c1, "gamma": consts.gamma, "c": consts.c, "c2": consts.c2}
    return ["gaps.csv", "dilation_constants.json"], fitted


def _task_komlos(cfg: LoadedConfig, outdir: Path, workers: int):
    if not isinstance(cfg.function, TrigPoly):
        raise ConfigError("komlos task needs a trigonometric polynomial")
    n = int(_require(cfg.params, "n"))
    scheme = BlockScheme(
        n=n,
        beta=float(_require(cfg.params, "beta")),
        gap=int(_require(cfg.params, "gap")),
    )
    word = sample_word(cfg.source, n)
    kq = komlos_quantities(
        word, cfg.function, scheme,
        x=float(cfg.params.get("x", 0.1)),
        samples=int(_require(cfg.params, "samples")),
        rng=cfg.seed, q=cfg.q,
    )
    report = verify_komlos_inequalities(kq, c_probe=float(cfg.params.get("c_probe", 1.0)))
    rows = [
        ("u", kq.u, 0.0),
        ("a", kq.a, 0.0),
        ("delta", kq.delta, 0.0),
        ("delta_bound", kq.delta_bound, 0.0),
        ("e_z_re", kq.e_z.real, kq.e_z_stderr),
        ("e_z_im", kq.e_z.imag, kq.e_z_stderr),
        ("e_q_re", kq.e_q.real, kq.e_q_stderr),
        ("e_q_im", kq.e_q.imag, kq.e_q_stderr),
        ("q_l2", kq.q_l2, kq.q_l2_stderr),
        ("y_minus_a_l2", kq.y_minus_a_l2, kq.y_minus_a_l2_stderr),
    ]
    _write_csv(outdir / "komlos.csv", ("quantity", "value", "stderr"), rows)
    _write_json(outdir / "komlos_report.json", {"quantities": kq, "checks": report})
    fitted = {c.name: c.min_c for c in report.checks}
    return ["komlos.csv", "komlos_report.json"], fitted


def _task_diagnostics(cfg: LoadedConfig, outdir: Path, workers: int):
    diag = growth_diagnostics(
        cfg.source,
        tuple(int(n) for n in _require(cfg.params, "n_grid")),
        trials=int(cfg.params.get("trials", 1000)),
        delta=float(cfg.params.get("delta", 0.1)),
        seed=cfg.seed,
    )
    rows = []
    for gi, n in enumerate(diag.n_grid):
        for i in range(diag.ratio_stat.shape[1]):
            rows.append(
                (n, f"ratio_stat_{i}", diag.ratio_stat[gi, i], diag.ratio_stat_stderr[gi, i])
            )
        for zi, z in enumerate(diag.zeta_grid):
            rows.append((n, f"dominance@{_fmt(z)}", diag.dominance_freq[gi, zi], ""))
        for name, qv in zip(("norm_q50", "norm_q90", "norm_max"), diag.norm_quantiles[gi]):
            rows.append((n, name, qv, ""))
    _write_csv(outdir / "diagnostics.csv", ("n", "statistic", "estimate", "stderr"), rows)
    fitted = {
        "rho_hat": list(map(float, diag.rho_hat)),
        "zeta_hat": diag.zeta_hat,
        "xi0_hat": diag.xi0_hat,
        "delta": diag.delta,
    }
    _write_json(outdir / "diagnostics_report.json", {"fitted": fitted, "flags": diag.flags})
    return ["diagnostics.csv", "diagnostics_report.json"], fitted


def _task_coboundary(cfg: LoadedConfig, outdir: Path, workers: int):
    if not isinstance(cfg.function, TrigPoly):
        raise ConfigError("coboundary task needs a trigonometric polynomial")
    if len(cfg.alphabet) == 1:
        source = cfg.alphabet.matrices[0]
    else:
        source = sample_word(cfg.source, int(cfg.params.get("n", 50)))
    report = coboundary_detect(
        source, cfg.function,
        horizon=int(cfg.params.get("horizon", 200)),
        condition_asserted=bool(cfg.params.get("condition_asserted", False)),
    )
    _write_json(outdir / "coboundary.json", report)
    _write_csv(outdir / "coboundary.csv", ("verdict",), [(report.verdict,)])
    return ["coboundary.csv", "coboundary.json"], None


_RUNNERS = {
    "clt": _task_clt,
    "variance": _task_variance,
    "separation": _task_separation,
    "sl2-constants": _task_sl2_constants,
    "komlos": _task_komlos,
    "diagnostics": _task_diagnostics,
    "coboundary": _task_coboundary,
}


def run(config_path, outdir, seed=None, workers=1) -> dict:
    """Load the config, run its task, write outputs, return the manifest."""
    cfg = load_config(config_path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed))
        if isinstance(cfg.source, IIDSource):
            cfg = dataclasses.replace(
                cfg, source=dataclasses.replace(cfg.source, seed=int(seed))
            )
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    start = time.monotonic()
    outputs, fitted = _RUNNERS[cfg.task](cfg, outdir, workers)
    manifest = {
        "config_sha256": hashlib.sha256(cfg.raw_bytes).hexdigest(),
        "version": __version__,
        "task": cfg.task,
        "seed": cfg.seed,
        "workers": workers,
        "wall_clock_s": round(time.monotonic() - start, 3),
        "outputs": outputs,
        "fitted_constants": fitted,
    }
    _write_json(outdir / "manifest.json", manifest)
    return manifest


_SCHEMA = """\
Config schema (TOML)

[experiment]
task = "clt" | "variance" | "separation" | "sl2-constants" | "komlos"
     | "diagnostics" | "coboundary"
seed = 0                  # integer; --seed overrides
q = 2305843009213693951   # modulus of the rational grid (optional)

[alphabet]
kind = "standard"         # the positive pair [[2,1],[1,1]], [[1,1],[1,2]]
# kind = "explicit" with matrices = [[[2,1],[1,1]], ...] and optional labels

[source]
kind = "iid"              # iid | explicit | rotation
weights = [0.5, 0.5]      # iid, optional (uniform otherwise)
# word = ["A", "B", ...]  # explicit
# angle / interval / omega0  # rotation

[function]
kind = "cos"              # cos | trig | box | ball
freq = [1, 0]             # cos
amplitude = 1.0
# trig: terms = [{freq = [1,0], re = 0.5, im = 0.0}, ...], const = 0.0
# box:  bounds = [[0.0, 0.5], [0.0, 1.0]]
# ball: center = [0.5, 0.5], radius = 0.25

[params]                  # per task
# clt:         n_grid, samples, standardization ("exact-l2"|"series-sigma"),
#              r_max, fejer_order
# variance:    r_max, word_samples, optional n_grid + samples for the curve
# separation:  n, freq_bound, gap, s_max, budget, force_primed_zero
# sl2-constants: sample_budget, d_grid
# komlos:      n, beta, gap, x, samples, c_probe
# diagnostics: n_grid, trials, delta
# coboundary:  horizon, n, condition_asserted

CSV columns
  clt.csv:              n, sigma_hat, ks
  variance_series.csv:  shift, correlation
  variance_curve.csv:   n, l2_sq_over_n, stderr
  separation.csv:       n, freq_bound, gap, s_max, verdict
  gaps.csv:             freq_bound, rho1, gap
  komlos.csv:           quantity, value, stderr
  diagnostics.csv:      n, statistic, estimate, stderr
  coboundary.csv:       verdict

Floats are printed with repr (shortest round trip); reruns of the same
config and seed are byte-identical regardless of --workers.
"""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="toralclt", description="Batch experiments for toral orbit-sum statistics."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a config and write outputs")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.add_argument(
        "--workers", type=int,
        default=int(os.environ.get(_WORKERS_ENV, "1")),
        help=f"sampling threads (default ${_WORKERS_ENV} or 1)",
    )
    p_val = sub.add_parser("validate-config", help="parse and validate a config")
    p_val.add_argument("config")
    sub.add_parser("print-schema", help="print the config and CSV schema")
    args = parser.parse_args(argv)

    if args.command == "print-schema":
        print(_SCHEMA, end="")
        return 0
    if args.command == "validate-config":
        try:
            cfg = load_config(args.config)
        except (ConfigError, OSError) as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return CONFIG_INVALID
        print(f"ok: task={cfg.task} seed={cfg.seed}")
        return 0
    try:
        manifest = run(args.config, args.out, seed=args.seed, workers=args.workers)
    except (ConfigError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return CONFIG_INVALID
    except Exception as exc:  # noqa: BLE001 - task failures map to one exit code
        print(f"task failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return TASK_FAILED
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

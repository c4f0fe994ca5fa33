"""Experiment orchestration: configs, Monte Carlo runs, CSV output, CLI.

A run sweeps a (transmit power x reflector position) grid; every grid point
executes independent trials, each drawing a fresh scene, sounding it,
running the two-stage recovery, designing phases and beamformers, and
scoring errors against the generating truth.  Per-trial RNG substreams are
derived from (seed, grid index, trial index) only, so results are
reproducible byte-for-byte and independent of execution order.
"""

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import crlb as crlb_mod
from .channel import PathLossModel, Topology, cascade, path_loss, sample_scene, synth_channel
from .control import design_beamformers, design_phases
from .estimation import angle_differences, build_reflected_pilots, two_stage_estimate
from .exceptions import (
    CertificateError,
    ConfigurationError,
    ConvergenceError,
    DegenerateInputError,
    IllConditionedError,
)
from .metrics import TrialRecord, squared_error
from .sounding import (
    SoundingConfig,
    make_active_set,
    make_combiner,
    make_phase_schedule,
    make_training_matrix,
    noise_power,
    overhead_hybrid,
    sound_hybrid,
)

__all__ = [
    "ExperimentConfig",
    "SETUPS",
    "run",
    "sweep_distance",
    "emit_plot_script",
    "main",
]

CSV_VERSION_COMMENT = "# ris-anm-sim v1"
CSV_COLUMNS = [
    "setup", "p_t_dbm", "d_x_m", "trial",
    "mse_theta_mr", "mse_phi_mr", "mse_rho_mr",
    "mse_theta_rb", "mse_phi_rb", "mse_rho_rb",
    "mse_delta", "se_bits",
    "crlb_theta_mr", "crlb_phi_mr", "crlb_rho_mr",
    "crlb_theta_rb", "crlb_phi_rb", "crlb_rho_rb",
    "status",
]

#: named hybrid-reflector setups (element counts, schedule shape, RF chains)
SETUPS = {
    "setup1": dict(n_b=16, n_r=32, n_m=16, m=4, n_rfr=4, k=5, t=8, n_cb=8, n_rfb=8),
    "setup2": dict(n_b=16, n_r=32, n_m=16, m=2, n_rfr=2, k=5, t=8, n_cb=8, n_rfb=8),
    "setup3": dict(n_b=16, n_r=64, n_m=16, m=8, n_rfr=8, k=7, t=8, n_cb=8, n_rfb=8),
    "setup4": dict(n_b=16, n_r=64, n_m=16, m=6, n_rfr=6, k=7, t=8, n_cb=8, n_rfb=8),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a named setup plus sweeps, trial count and toggles."""

    setup: str = "setup2"
    n_b: int = 16
    n_r: int = 32
    n_m: int = 16
    m: int = 2
    n_rfr: int = 2
    k: int = 5
    t: int = 8
    n_cb: int = 8
    n_rfb: int = 8
    l_mr: int = 2
    l_rb: int = 2
    p_t_dbm: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    d_t: float = 22.0
    d_x: tuple = (15.0,)
    d_y: float = 2.0
    trials: int = 100
    seed: int = 0
    t_c: int = 500
    fc: float = 28e9
    gamma: float = 3.0
    d0: float = 1.0
    n0_dbm_hz: float = -173.0
    bandwidth_hz: float = 1e8
    reg_scale: float = 1.0
    compute_crlb: bool = True
    noiseless_oracle: bool = False
    phase_design_baseline: bool = False
    workers: int = 1
    out_dir: str = "results"
    trace_solver: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not self.p_t_dbm or not self.d_x:
            raise ConfigurationError("power and distance sweeps must be nonempty")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    @classmethod
    def from_named_setup(cls, name, **overrides):
        if name not in SETUPS:
            raise ConfigurationError(f"unknown setup {name!r}; choose from {sorted(SETUPS)}")
        params = dict(SETUPS[name], setup=name)
        params.update(overrides)
        return cls(**params)

    @classmethod
    def from_toml(cls, path):
        """Load a config from a TOML file with a single [setup] table."""
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as err:
            raise ConfigurationError(f"cannot read config {path}: {err}") from err
        except tomllib.TOMLDecodeError as err:
            raise ConfigurationError(f"malformed TOML in {path}: {err}") from err
        table = data.get("setup", data)
        if not isinstance(table, dict):
            raise ConfigurationError("config must contain a [setup] table")
        table = {k: tuple(v) if isinstance(v, list) else v for k, v in table.items()}
        name = table.pop("setup", None)
        known = set(cls.__dataclass_fields__)
        unknown = set(table) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if name is not None:
            return cls.from_named_setup(name, **table)
        return cls(**table)

    def grid(self):
        """Grid points in execution order: power outer, distance inner."""
        return [(p, dx) for p in self.p_t_dbm for dx in self.d_x]


def _dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _trial_rng(seed, grid_index, trial_index):
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(grid_index, trial_index))
    )


def _sounding_config(config, p_t_dbm):
    sigma2 = 0.0 if config.noiseless_oracle else noise_power(
        config.n0_dbm_hz, config.bandwidth_hz
    )
    m = config.n_r if config.noiseless_oracle else config.m
    n_cb = config.n_b if config.noiseless_oracle else config.n_cb
    return SoundingConfig(
        n_b=config.n_b, n_r=config.n_r, n_m=config.n_m, m=m,
        k=config.k, t=config.t, n_cb=n_cb, n_rfb=config.n_rfb,
        n_rfr=config.n_rfr, p_t=_dbm_to_watts(p_t_dbm), sigma2=sigma2,
    )


def run_trial(config, grid_index, trial_index, crlb_only=False):
    """Execute one trial; returns a dict of row fields plus rate components.

    Raises the solver/conditioning exceptions of the pipeline; the caller
    decides whether to record them as counted failures.
    """
    p_t_dbm, d_x = config.grid()[grid_index]
    rng = _trial_rng(config.seed, grid_index, trial_index)
    cfg = _sounding_config(config, p_t_dbm)

    scene_mr = sample_scene(rng, config.l_mr, cfg.n_m, cfg.n_r)
    scene_rb = sample_scene(rng, config.l_rb, cfg.n_r, cfg.n_b)
    h_mr = synth_channel(scene_mr, cfg.n_r, cfg.n_m)
    h_rb = synth_channel(scene_rb, cfg.n_b, cfg.n_r)

    topo = Topology(d_t=config.d_t, d_x=d_x, d_y=config.d_y)
    beta1, beta2 = path_loss(topo, PathLossModel(d0=config.d0, gamma=config.gamma, fc=config.fc))

    pilots = make_training_matrix(cfg.n_m, cfg.t, rng)
    if config.noiseless_oracle:
        # Idealized check of the recovery algorithm: identity combiner, full
        # direct observation of the reflector, reflection untouched.
        combiner = np.eye(cfg.n_b, cfg.n_cb, dtype=complex)
        empty = np.empty((cfg.k, 0), dtype=int)
        schedule = make_phase_schedule(cfg.n_r, cfg.k, empty, rng)
        record = sound_hybrid(cfg, h_mr, h_rb, schedule, pilots, combiner, rng,
                              beta1=beta1, beta2=beta2, observe_all=True)
    else:
        combiner = make_combiner(cfg.n_b, cfg.n_cb, rng)
        # The active elements are re-switched every block, which spreads the
        # direct observations over the whole reflector aperture.
        active_sets = np.stack([make_active_set(cfg.n_r, cfg.m, rng) for _ in range(cfg.k)])
        schedule = make_phase_schedule(cfg.n_r, cfg.k, active_sets, rng)
        record = sound_hybrid(cfg, h_mr, h_rb, schedule, pilots, combiner, rng,
                              beta1=beta1, beta2=beta2)

    row = {
        "setup": config.setup,
        "p_t_dbm": p_t_dbm,
        "d_x_m": d_x,
        "trial": trial_index,
        "status": "ok",
    }

    if config.compute_crlb and cfg.sigma2 > 0.0:
        s1 = np.sqrt(cfg.p_t) * beta1
        s2 = np.sqrt(cfg.p_t) * beta2
        rep1 = crlb_mod.fim_stage1(
            scene_mr.aod, scene_mr.aoa, scene_mr.gains,
            pilots, record.selection, s1, cfg.sigma2,
        )
        true_reflected = build_reflected_pilots(schedule, h_mr, pilots)
        rep2 = crlb_mod.fim_stage2(
            scene_rb.aod, scene_rb.aoa, scene_rb.gains,
            true_reflected, combiner, s2, cfg.sigma2,
        )
        row.update(
            crlb_theta_mr=np.mean(crlb_mod.angle_bounds(rep1, "aod")),
            crlb_phi_mr=np.mean(crlb_mod.angle_bounds(rep1, "aoa")),
            crlb_rho_mr=np.mean(crlb_mod.gain_bounds(rep1)),
            crlb_theta_rb=np.mean(crlb_mod.angle_bounds(rep2, "aod")),
            crlb_phi_rb=np.mean(crlb_mod.angle_bounds(rep2, "aoa")),
            crlb_rho_rb=np.mean(crlb_mod.gain_bounds(rep2)),
        )
    else:
        row.update({k: np.nan for k in CSV_COLUMNS if k.startswith("crlb_")})

    if crlb_only:
        row.update({k: np.nan for k in CSV_COLUMNS if k.startswith("mse_")})
        row["se_bits"] = np.nan
        row["status"] = "crlb_only"
        return row, None, None, None

    solver_options = None
    if config.trace_solver and trial_index == 0:
        from .anm import SolverOptions

        solver_options = SolverOptions(keep_trace=True)
    result = two_stage_estimate(
        record, cfg, config.l_mr, config.l_rb, truth=(scene_mr, scene_rb),
        reg_scale=config.reg_scale, solver_options=solver_options,
    )
    if result.warnings:
        row["status"] = "degenerate"

    true_delta = angle_differences(scene_mr.aoa, scene_rb.aod)
    row.update(
        mse_theta_mr=squared_error(result.theta_mr, scene_mr.aod),
        mse_phi_mr=squared_error(result.phi_mr, scene_mr.aoa),
        mse_rho_mr=squared_error(result.rho_mr, scene_mr.gains),
        mse_theta_rb=squared_error(result.theta_rb, scene_rb.aod),
        mse_phi_rb=squared_error(result.phi_rb, scene_rb.aoa),
        mse_rho_rb=squared_error(result.rho_rb, scene_rb.gains),
        mse_delta=squared_error(result.delta, true_delta),
    )

    design = design_phases(cfg.n_r, result.delta.ravel(), result.rho_prod)
    h_hat_cascade = cascade(result.h_rb_hat, design.omega, result.h_mr_hat)
    w_rx, f_tx = design_beamformers(h_hat_cascade)
    amp = np.sqrt(cfg.p_t) * beta2
    h_true_cascade = cascade(h_rb, design.omega, h_mr)
    err = amp * (h_true_cascade - h_hat_cascade)
    trial_rec = TrialRecord(
        signal_power=float(np.abs(w_rx.conj() @ (amp * h_hat_cascade) @ f_tx) ** 2),
        error_scalar=complex(w_rx.conj() @ err @ f_tx),
    )
    solver_traces = (result.stage1.trace, result.stage2.trace)
    return row, trial_rec, solver_traces, result


def _format_value(key, value):
    if key in ("setup", "status"):
        return str(value)
    if key == "trial":
        return str(int(value))
    if isinstance(value, float) and np.isnan(value):
        return "nan"
    return f"{float(value):.12e}"


def _trial_task(args):
    config, grid_index, trial_index, crlb_only = args
    try:
        return (grid_index, trial_index, run_trial(config, grid_index, trial_index, crlb_only), None)
    except (ConvergenceError, IllConditionedError, CertificateError,
            DegenerateInputError, ConfigurationError) as err:
        return (grid_index, trial_index, None, f"{type(err).__name__}: {err}")


def run(config, crlb_only=False, emit_plots=False, out_dir=None):
    """Execute the full experiment grid and persist results.

    Writes ``results.csv`` (one row per successful trial, schema versioned
    by a leading comment), ``failures.csv`` when any trial failed, and
    optionally a gnuplot script.  Returns a summary dict with row/failure
    counts and output paths.  Identical config and seed reproduce identical
    bytes.
    """
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    grid = config.grid()
    tasks = [
        (config, g, t, crlb_only)
        for g in range(len(grid))
        for t in range(config.trials)
    ]

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_trial_task, tasks, chunksize=1))
    else:
        outcomes = [_trial_task(t) for t in tasks]
    outcomes.sort(key=lambda o: (o[0], o[1]))

    sigma2 = 0.0 if config.noiseless_oracle else noise_power(config.n0_dbm_hz, config.bandwidth_hz)
    t_h = overhead_hybrid(_sounding_config(config, config.p_t_dbm[0]))

    rows = []
    failures = []
    for g in range(len(grid)):
        grid_outcomes = [o for o in outcomes if o[0] == g]
        ok = [o for o in grid_outcomes if o[2] is not None]
        failures.extend(
            {"grid_index": o[0], "trial": o[1], "error": o[3]}
            for o in grid_outcomes if o[2] is None
        )
        recs = [o[2][1] for o in ok if o[2][1] is not None]
        for o in ok:
            row, rec, traces = o[2][:3]
            row = dict(row)
            if rec is not None:
                row["se_bits"] = _se_for_trial(rec, recs, sigma2, config.t_c, t_h)
            if traces is not None and config.trace_solver and o[1] == 0:
                _dump_traces(out_dir, g, traces)
            rows.append(row)

    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w", newline="") as fh:
        fh.write(CSV_VERSION_COMMENT + "\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_format_value(k, row.get(k, np.nan)) for k in CSV_COLUMNS])

    failure_path = None
    if failures:
        failure_path = os.path.join(out_dir, "failures.csv")
        with open(failure_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["grid_index", "trial", "error"])
            for f in failures:
                writer.writerow([f["grid_index"], f["trial"], f["error"]])

    plot_path = None
    if emit_plots:
        plot_path = emit_plot_script(csv_path)

    return {
        "rows": len(rows),
        "failures": len(failures),
        "csv": csv_path,
        "failures_csv": failure_path,
        "plot_script": plot_path,
    }


def _se_for_trial(rec, all_recs, sigma2, t_c, t_h):
    # Per-row rate using the grid point's cross-trial error variance.
    errors = np.array([r.error_scalar for r in all_recs], dtype=complex)
    err_var = float(np.var(errors))
    prefactor = (t_c - t_h) / t_c
    return float(prefactor * np.log2(1.0 + rec.signal_power / (sigma2 + err_var)))


def _dump_traces(out_dir, grid_index, traces):
    for stage, trace in zip((1, 2), traces):
        if trace is None:
            continue
        path = os.path.join(out_dir, f"solver_trace_g{grid_index}_stage{stage}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "objective", "primal_res", "dual_res"])
            for i, obj, pri, dua in zip(trace.iterations, trace.objective,
                                        trace.primal, trace.dual):
                writer.writerow([int(i), f"{obj:.12e}", f"{pri:.12e}", f"{dua:.12e}"])


def sweep_distance(config, out_dir=None):
    """Distance sweep at fixed power; adds a monotone-trend summary file.

    Requires a single-entry power sweep.  The summary lists the median
    first-hop departure-angle MSE per distance and whether the medians
    increase monotonically with distance.
    """
    if len(config.p_t_dbm) != 1:
        raise ConfigurationError("distance sweep expects exactly one transmit power")
    summary = run(config, out_dir=out_dir)
    out_dir = out_dir or config.out_dir

    per_distance = {dx: [] for dx in config.d_x}
    with open(summary["csv"]) as fh:
        next(fh)  # version comment
        for row in csv.DictReader(fh):
            if row["status"] in ("ok", "degenerate"):
                per_distance[float(row["d_x_m"])].append(float(row["mse_theta_mr"]))
    medians = [float(np.median(per_distance[dx])) if per_distance[dx] else np.nan
               for dx in config.d_x]
    monotone = bool(np.all(np.diff(medians) > 0)) if len(medians) > 1 else True

    summary_path = os.path.join(out_dir, "distance_summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["d_x_m", "median_mse_theta_mr"])
        for dx, med in zip(config.d_x, medians):
            writer.writerow([f"{dx:.12e}", f"{med:.12e}"])
        writer.writerow(["monotone_increasing", str(monotone).lower()])
    summary["distance_summary"] = summary_path
    summary["monotone_increasing"] = monotone
    return summary


def emit_plot_script(csv_path, out_path=None):
    """Write a self-contained gnuplot script plotting MSE and SE versus power.

    Groups rows by setup into one curve each: a log-y MSE panel and a linear
    SE panel.  Raises :class:`ConfigurationError` with the offending line
    number on malformed input.
    """
    with open(csv_path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ConfigurationError(f"{csv_path}:1: missing version comment")
    if len(lines) < 2:
        raise ConfigurationError(f"{csv_path}:1: missing header line")
    header = lines[1].split(",")
    required = {"setup", "p_t_dbm", "mse_theta_mr", "se_bits", "status"}
    if not required.issubset(header):
        raise ConfigurationError(f"{csv_path}:2: header missing {sorted(required - set(header))}")
    idx = {name: header.index(name) for name in header}

    series = {}
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ConfigurationError(
                f"{csv_path}:{lineno}: expected {len(header)} fields, got {len(parts)}"
            )
        if parts[idx["status"]] not in ("ok", "degenerate"):
            continue
        try:
            p = float(parts[idx["p_t_dbm"]])
            mse_v = float(parts[idx["mse_theta_mr"]])
            se_v = float(parts[idx["se_bits"]])
        except ValueError as err:
            raise ConfigurationError(f"{csv_path}:{lineno}: {err}") from err
        series.setdefault(parts[idx["setup"]], {}).setdefault(p, []).append((mse_v, se_v))

    out_path = out_path or os.path.join(os.path.dirname(csv_path) or ".", "plots.gp")
    buf = io.StringIO()
    buf.write("# generated by ris-anm-sim; run with: gnuplot <this file>\n")
    buf.write("set terminal pngcairo size 900,600\n")
    if not series:
        buf.write("# warning: no plottable rows in the source CSV\n")
        buf.write("set output 'mse_vs_power.png'\nplot 0 title 'no data'\n")
        buf.write("set output 'se_vs_power.png'\nplot 0 title 'no data'\n")
    else:
        for name in sorted(series):
            buf.write(f"$data_{name} << EOD\n")
            for p in sorted(series[name]):
                vals = np.asarray(series[name][p], dtype=float)
                buf.write(f"{p:.6g} {np.mean(vals[:, 0]):.10e} {np.mean(vals[:, 1]):.10e}\n")
            buf.write("EOD\n")
        buf.write("set output 'mse_vs_power.png'\n")
        buf.write("set logscale y\nset xlabel 'transmit power [dBm]'\nset ylabel 'MSE [rad^2]'\n")
        buf.write("plot " + ", ".join(
            f"$data_{name} using 1:2 with linespoints title '{name}'" for name in sorted(series)
        ) + "\n")
        buf.write("unset logscale y\n")
        buf.write("set output 'se_vs_power.png'\n")
        buf.write("set ylabel 'effective SE [bits/s/Hz]'\n")
        buf.write("plot " + ", ".join(
            f"$data_{name} using 1:3 with linespoints title '{name}'" for name in sorted(series)
        ) + "\n")
    with open(out_path, "w") as fh:
        fh.write(buf.getvalue())
    return out_path


def main(argv=None):
    """Command-line entry point; returns the process exit code."""
    parser = argparse.ArgumentParser(
        prog="ris-anm-sim",
        description="Monte Carlo experiments for two-stage hybrid-reflector channel estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute an experiment described by a TOML config")
    run_p.add_argument("--config", required=True, help="path to the TOML config file")
    run_p.add_argument("--trials", type=int, default=None, help="override trial count")
    run_p.add_argument("--seed", type=int, default=None, help="override master seed")
    run_p.add_argument("--out", default=None, help="override output directory")
    run_p.add_argument("--emit-plots", action="store_true", help="write a gnuplot script")
    run_p.add_argument("--crlb-only", action="store_true", help="skip estimation, bounds only")
    run_p.add_argument("--trace-solver", action="store_true",
                       help="dump solver iteration traces for the first trial per grid point")

    args = parser.parse_args(argv)
    try:
        config = ExperimentConfig.from_toml(args.config)
        overrides = {}
        if args.trials is not None:
            overrides["trials"] = args.trials
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.trace_solver:
            overrides["trace_solver"] = True
        if overrides:
            config = replace(config, **overrides)
        summary = run(config, crlb_only=args.crlb_only, emit_plots=args.emit_plots)
    except ConfigurationError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    print(
        f"wrote {summary['rows']} rows to {summary['csv']}"
        + (f" ({summary['failures']} failed trials logged)" if summary["failures"] else "")
    )
    if summary["failures"]:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

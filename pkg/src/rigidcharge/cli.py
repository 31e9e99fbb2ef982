"""Command-line front end.

Subcommands::

    rigidcharge run --scenario soliton.toml [--scheme picard|strang] [--dt ..] [--T ..] [--out-dir ..]
    rigidcharge probe-lw --worldline circular --r0 1 --omega 0.6 --radii 25,50,100,200
    rigidcharge check-weight inverse_quadratic
    rigidcharge norms snapshot.bin --weight inverse_quadratic

Errors print one ``error=<code> key=value ... message="..."`` line on stderr
and exit with a nonzero status.
"""

import argparse
import io
import sys
from pathlib import Path

import numpy as np

from . import spectral
from .diagnostics import DiagnosticsRecorder
from .errors import ConfigError, ConvergenceError, RigidChargeError
from .evolution import evolve
from .initial_data import ADVANCED, RETARDED, Worldline, lw_scaling_probe
from .io_util import atomic_write_text, format_float
from .scenario import load_scenario
from .spectral import Grid, read_snapshot, write_snapshot
from .weights import (load_tabulated_weight, make_weight, norm_report, weight_class_report,
                      weight_function)

WORLDLINES = {"static": "static", "uniform": "uniform_velocity", "circular": "circular_orbit"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message, key="argv")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    p = _Parser(prog="rigidcharge", description="Maxwell-Lorentz dynamics of rigid charges.")
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized probes")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("--scenario", required=True)
    r.add_argument("--scheme", choices=("picard", "strang"))
    r.add_argument("--dt", type=float)
    r.add_argument("--T", type=float)
    r.add_argument("--out-dir")
    r.add_argument("--emit-plots-data", action="store_true")

    lw = sub.add_parser("probe-lw", help="radius scaling of Lienard-Wiechert field norms")
    lw.add_argument("--worldline", choices=sorted(WORLDLINES), default="circular")
    lw.add_argument("--r0", type=float, default=1.0)
    lw.add_argument("--omega", type=float, default=0.6)
    lw.add_argument("--velocity", type=_floats, default=[0.0, 0.0, 0.0])
    lw.add_argument("--radii", type=_floats, default=[25.0, 50.0, 100.0, 200.0])
    lw.add_argument("--t", type=float, default=0.0)
    lw.add_argument("--advanced", action="store_true", help="advanced instead of retarded field")
    lw.add_argument("--weight", default="inverse_quadratic", choices=("constant", "inverse_quadratic"))
    lw.add_argument("--out")

    cw = sub.add_parser("check-weight", help="print class constants of a weight")
    cw.add_argument("kind", choices=("constant", "inverse_quadratic", "tabulated"))
    cw.add_argument("--file", help="binary weight table (tabulated)")
    cw.add_argument("--L", type=float, default=25.6)
    cw.add_argument("--n", type=int, default=32)
    cw.add_argument("--pairs", type=int, default=1000)

    nm = sub.add_parser("norms", help="norm report of a stored field snapshot")
    nm.add_argument("snapshot")
    nm.add_argument("--weight", default="inverse_quadratic", choices=("constant", "inverse_quadratic"))
    nm.add_argument("--kmax", type=int, default=2)
    return p


# ---------------------------------------------------------------------------
# output helpers


def _csv(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(format_float(v) for v in row) + "\n")
    return buf.getvalue()


def trajectory_table(result, every=1):
    N = result.q[0].shape[0]
    header = ["t"]
    for i in range(N):
        header += [f"{c}{ax}_{i}" for c in "qpv" for ax in "xyz"]
    rows = []
    for k in range(0, len(result.times), max(1, every)):
        row = [result.times[k]]
        for i in range(N):
            row += list(result.q[k][i]) + list(result.p[k][i]) + list(result.v[k][i])
        rows.append(row)
    return header, rows


def diagnostics_table(recorder):
    N = recorder.system.N
    header = (["t", "H_per", "H_tot"] + [f"gauss_{i}" for i in range(N)]
              + [f"divB_{i}" for i in range(N)] + ["phase_norm", "propagator_bound_margin"])
    rows = []
    for r in recorder.records:
        rows.append([r.t, r.H_per, r.H_tot, *r.gauss_residuals, *r.divB_residuals,
                     r.phase_norm, r.propagator_bound_margin])
    return header, rows


def _write_outputs(out, traj, diag, emit_plots, suffix=""):
    atomic_write_text(out / ("trajectory.csv" + suffix), _csv(*traj))
    atomic_write_text(out / ("diagnostics.csv" + suffix), _csv(*diag))
    if emit_plots:
        header, rows = diag
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        for j, name in enumerate(header[1:], start=1):
            text = "".join(f"{format_float(r[0])} {format_float(r[j])}\n" for r in rows)
            atomic_write_text(plots / (name + ".dat" + suffix), text)


class _SnapshotWriter:
    def __init__(self, out, every):
        self.dir = out / "snapshots"
        self.every = every
        self.count = 0

    def __call__(self, t, phi):
        k = self.count
        self.count += 1
        if not self.every or k % self.every:
            return
        self.dir.mkdir(exist_ok=True)
        for i, fp in enumerate(phi.fields):
            write_snapshot(self.dir / f"step{k:06d}_charge{i}.bin", fp, t)


def cmd_run(args):
    scen = load_scenario(args.scenario, {"scheme": args.scheme, "dt": args.dt, "T": args.T,
                                         "out_dir": args.out_dir})
    out = Path(scen.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    recorder = DiagnosticsRecorder(scen.system, scen.phi0, every=scen.output.diagnostics_every)
    snaps = _SnapshotWriter(out, scen.output.snapshot_every)
    try:
        result = evolve(scen.system, scen.phi0, scen.evolve, callbacks=[recorder, snaps])
    except ConvergenceError as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            _write_outputs(out, trajectory_table(partial, scen.output.trajectory_every),
                           diagnostics_table(recorder), args.emit_plots_data, suffix=".partial")
        raise
    _write_outputs(out, trajectory_table(result, scen.output.trajectory_every),
                   diagnostics_table(recorder), args.emit_plots_data)
    print(f"steps={len(result.reports)} rejected={result.rejected} out={out}")
    return 0


def cmd_probe_lw(args):
    kind = WORLDLINES[args.worldline]
    if kind == "static":
        wl = Worldline("static")
    elif kind == "uniform_velocity":
        wl = Worldline(kind, velocity=tuple(args.velocity))
    else:
        wl = Worldline(kind, r0=args.r0, omega=args.omega)
    res = lw_scaling_probe(wl, args.radii, weight_function(args.weight), t=args.t,
                           sign=ADVANCED if args.advanced else RETARDED)
    header = ["radius", "E_l2_sq", "B_l2_sq", "E_l2w_sq", "B_l2w_sq", "l2_norm", "l2w_norm"]
    rows = zip(res.radii, res.E_l2_sq, res.B_l2_sq, res.E_l2w_sq, res.B_l2w_sq,
               res.l2_norms, res.l2w_norms)
    text = (f"# r_inner={format_float(res.r_inner)} l2_exponent={format_float(res.l2_exponent)} "
            f"l2w_exponent={format_float(res.l2w_exponent)}\n" + _csv(header, rows))
    if args.out:
        atomic_write_text(Path(args.out), text)
    sys.stdout.write(text)
    return 0


def cmd_check_weight(args):
    grid = Grid(args.L, args.n)
    if args.kind == "tabulated":
        if not args.file:
            raise ConfigError("check-weight tabulated needs --file", key="file")
        w = load_tabulated_weight(args.file)
        grid = w.grid
    else:
        w = make_weight(args.kind, grid)
    rng = np.random.default_rng(args.seed)
    half = grid.L / 2
    pairs = rng.uniform(-half, half, size=(args.pairs, 2, 3))
    rep = weight_class_report(w, pairs)
    print(f"kind={w.kind} C_w={w.C_w:g} P_w={w.P_w} gamma={w.gamma:.6f}")
    print("deriv_constants=" + ",".join(f"{c:.6g}" for c in w.deriv_constants))
    print(f"pairs={args.pairs} violations={len(rep.violations)} passed={rep.passed}")
    return 0 if rep.passed else 1


def cmd_norms(args):
    fp, t = read_snapshot(args.snapshot)
    w = make_weight(args.weight, fp.grid)
    rep = norm_report(fp, w, kmax=args.kmax)
    print(f"t={format_float(t)} weight={args.weight}")
    print(f"l2={format_float(rep.l2)}")
    print(f"l2w={format_float(rep.l2w)}")
    for k, v in enumerate(rep.hkw):
        print(f"h{k}w={format_float(v)}")
    print(f"phase_norm={format_float(rep.phase_norm)}")
    return 0


COMMANDS = {"run": cmd_run, "probe-lw": cmd_probe_lw, "check-weight": cmd_check_weight, "norms": cmd_norms}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        spectral.set_threads(args.threads)
        return COMMANDS[args.command](args)
    except RigidChargeError as exc:
        print(exc.one_line(), file=sys.stderr)
        return exc.exit_status
    except SystemExit as exc:  # --help
        return exc.code or 0


if __name__ == "__main__":
    sys.exit(main())

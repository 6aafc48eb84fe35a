"""Command-line front end: ``mubqkd <subcommand> [options]``.

Exit codes: 0 success, 2 validation failure, 3 unphysical input. Output files
go to ``--out``, else ``$MUBQKD_OUT_DIR``, else ``./out``. Every subcommand
prints the resolved field on its first line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import export, mub, optics, protocol, security
from .galois import FieldCtx, FieldError, field, prime_power

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_UNPHYSICAL = 3
OUT_ENV = "MUBQKD_OUT_DIR"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID, report: dict | None = None):
        super().__init__(message)
        self.code = code
        self.report = report or {}


def _emit(payload: dict):
    print(json.dumps(payload, indent=2, default=export._json_default))


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ctx(args) -> FieldCtx:
    try:
        ctx = field(args.p, args.N)
    except FieldError as exc:
        raise CliError(str(exc)) from exc
    print(f"field: {ctx!r}")
    return ctx


def _ctx_from_d(d: int) -> FieldCtx:
    try:
        ctx = field(*prime_power(d))
    except FieldError as exc:
        raise CliError(str(exc)) from exc
    print(f"field: {ctx!r}")
    return ctx


# -- subcommands


def cmd_gen_mub(args) -> int:
    ctx = _ctx(args)
    family = mub.build_family(ctx, args.construction)
    report = mub.verify_mub(family)
    out = _out_dir(args)
    stem = f"mub_p{ctx.p}_N{ctx.N}_{args.construction}"
    if args.format == "csv":
        data_path = export.write_mub_csv(out / f"{stem}.csv", ctx, family.bases)
    else:
        data_path = export.write_json(out / f"{stem}.json", export.mub_payload(ctx, family.bases, args.construction))
    report_path = export.write_json(out / f"{stem}_report.json", {"field": ctx.to_dict(), **report.to_dict()})
    _emit({"bases": len(family), "ok": report.ok, "data": str(data_path), "report": str(report_path)})
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_verify_mub(args) -> int:
    ctx = _ctx(args)
    family = mub.build_family(ctx, args.construction)
    report = mub.verify_mub(family)
    phases = [len(mub.phase_alphabet(family[r])) for r in range(ctx.d)]
    payload = {"field": ctx.to_dict(), "construction": args.construction, **report.to_dict(), "phase_counts": phases}
    if args.equivalence:
        payload["equivalence_deviation"] = mub.equivalence_deviation(ctx)
    _emit(payload)
    return EXIT_OK if report.ok else EXIT_INVALID


def _layout(args, ctx):
    try:
        return optics.build_layout(ctx, args.topology, args.switch)
    except optics.LayoutError as exc:
        raise CliError(str(exc)) from exc


def _layout_summary(layout) -> dict:
    return {
        "topology": layout.topology.value,
        "switch_mode": layout.switch_mode.value,
        "interferometer_count": layout.interferometer_count,
        "loss_factor": layout.loss_factor,
        "loss_db": layout.loss_db,
    }


def cmd_netlist(args) -> int:
    ctx = _ctx(args)
    layout = _layout(args, ctx)
    path = export.write_json(_out_dir(args) / f"netlist_p{ctx.p}_N{ctx.N}_{args.topology}_{args.switch}.json", layout.netlist())
    _emit({**_layout_summary(layout), "netlist": str(path)})
    return EXIT_OK


def cmd_povm(args) -> int:
    ctx = _ctx(args)
    layout = _layout(args, ctx)
    povm = optics.extract_povm(layout)
    B0 = mub.build_wf_basis(ctx, 0)
    target = layout.loss_factor * np.einsum("an,bn->nab", B0, B0.conj())
    element_dev = float(np.abs(povm - target).max())
    completeness_dev = float(np.abs(povm.sum(axis=0) - layout.loss_factor * np.eye(ctx.d)).max())
    ok = max(element_dev, completeness_dev) <= mub.UNITARY_TOL
    path = export.write_povm_csv(_out_dir(args) / f"povm_p{ctx.p}_N{ctx.N}_{args.topology}_{args.switch}.csv", ctx, povm)
    _emit(
        {
            **_layout_summary(layout),
            "element_deviation": element_dev,
            "completeness_deviation": completeness_dev,
            "ok": ok,
            "povm": str(path),
        }
    )
    return EXIT_OK if ok else EXIT_INVALID


def _channel(args, d: int) -> protocol.ChannelModel:
    kind = args.channel
    if kind == "identity":
        return protocol.ChannelModel.identity(d)
    if kind == "bell":
        if not args.lambda_csv:
            raise CliError("--channel bell needs --lambda-csv")
        lam = export.read_lambda_csv(args.lambda_csv)
        if lam.shape != (d, d):
            raise CliError(f"lambda CSV has shape {lam.shape}, expected {(d, d)}")
        if np.any(lam < 0):
            raise CliError("channel weights must be non-negative", EXIT_UNPHYSICAL)
        return protocol.ChannelModel.bell(lam)
    if args.param is None:
        raise CliError(f"--channel {kind} needs --param")
    try:
        if kind == "depolarizing":
            return protocol.ChannelModel.depolarizing_from_error(d, args.param)
        return protocol.ChannelModel.correlated(d, args.param)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def cmd_simulate(args) -> int:
    ctx = _ctx(args)
    d = ctx.d
    basis_probs = None
    if args.basis_probs:
        basis_probs = [float(x) for x in args.basis_probs.split(",")]
    try:
        config = protocol.RunConfig(
            ctx,
            args.trials,
            seed=args.seed,
            basis_probs=basis_probs,
            backend=args.backend,
            topology=args.topology,
            switch_mode=args.switch,
            workers=args.workers,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    channel = _channel(args, d)
    tally = protocol.run_protocol(config, channel)
    out = _out_dir(args)
    stem = f"sim_p{ctx.p}_N{ctx.N}_{args.channel}_{args.backend}_s{args.seed}"
    tally_path = export.write_tally_csv(out / f"{stem}_tally.csv", tally)
    try:
        stats = protocol.stats_from_tally(tally)
    except protocol.InsufficientDataError as exc:
        raise CliError(str(exc)) from exc
    stats_path = export.write_json(
        out / f"{stem}_stats.json",
        {"field": ctx.to_dict(), "channel": channel.to_dict(), "trials": args.trials, "seed": args.seed, **stats.to_dict()},
    )
    _emit(
        {
            "trials": args.trials,
            "lost": int(tally.lost.sum()),
            "e_Z": stats.e_Z,
            "e_phase": stats.e_phase,
            "e_bar": stats.e_bar,
            "tally": str(tally_path),
            "stats": str(stats_path),
        }
    )
    return EXIT_OK


def cmd_keyrate(args) -> int:
    reports = {}
    if args.stats:
        stats = security.ErrorStats.from_dict(json.loads(Path(args.stats).read_text()))
        ctx = _ctx_from_d(stats.d)
        lam = security.lambda_from_q(ctx, stats)
        reports["bound"] = security.key_rate_avg_bound(ctx.d, min(stats.e_bar, ctx.d / (ctx.d + 1)))
        reports["lambda"] = lam.lam
        reports["negatives"] = lam.negatives
        if lam.physical:
            reports["full"] = security.key_rate_full(ctx, lam)
    elif args.lambda_csv:
        lam = security.LambdaMatrix(export.read_lambda_csv(args.lambda_csv))
        ctx = _ctx_from_d(lam.d)
        reports["bound"] = security.key_rate_avg_bound(ctx.d, lambda00=lam.lambda00)
        try:
            reports["full"] = security.key_rate_full(ctx, lam)
        except security.UnphysicalLambdaError as exc:
            raise CliError(
                str(exc),
                EXIT_UNPHYSICAL,
                {"negatives": exc.negatives, "bound": reports["bound"].to_dict()},
            ) from exc
    else:
        if args.d is None:
            raise CliError("give --d with --lambda00/--e-bar, or --stats, or --lambda-csv")
        ctx = _ctx_from_d(args.d)
        try:
            reports["bound"] = security.key_rate_avg_bound(ctx.d, args.e_bar, lambda00=args.lambda00)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
    payload = {k: (v.to_dict() if isinstance(v, security.RateReport) else v) for k, v in reports.items()}
    if args.out or os.environ.get(OUT_ENV):
        export.write_json(_out_dir(args) / f"keyrate_d{ctx.d}.json", {"field": ctx.to_dict(), **payload})
    _emit(payload)
    return EXIT_OK


def sweep_rows(d: int, points: int):
    """``(e_bar, r_two_basis, r_bound, r_correlated)`` on ``[0, d/(d+1)]``."""
    for e in np.linspace(0.0, d / (d + 1), points):
        e = float(e)
        yield (
            e,
            security.correlated_rate_two_basis(d, e),
            security.key_rate_avg_bound(d, e).r_inf,
            security.correlated_rate_full(d, e),
        )


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    summary = {}
    for d in args.d:
        ctx = _ctx_from_d(d)
        path = export.write_table_csv(
            out / f"sweep_d{d}.csv",
            ctx,
            ["e_bar", "r_two_basis", "r_d_plus_1_bound", "r_d_plus_1_correlated"],
            sweep_rows(d, args.points),
        )
        summary[str(d)] = {
            "csv": str(path),
            "threshold_bound": security.threshold(d, lambda e: security.key_rate_avg_bound(d, e).r_inf),
            "threshold_two_basis": security.threshold(d, lambda e: security.rate_two_basis_symmetric(d, e)),
        }
    _emit(summary)
    return EXIT_OK


# -- parser


def _add_field(sp):
    sp.add_argument("--p", type=int, required=True, help="field characteristic (prime)")
    sp.add_argument("--N", type=int, default=1, help="extension degree")


def _add_layout(sp):
    sp.add_argument("--topology", choices=[t.value for t in optics.Topology], default="tdm")
    sp.add_argument("--switch", choices=[s.value for s in optics.SwitchMode], default="passive")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mubqkd", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./out)")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-mub", parents=[common], aliases=["export-mub"], help="write a full MUB family")
    _add_field(sp)
    sp.add_argument("--construction", choices=[c.value for c in mub.Construction], default="wf")
    sp.add_argument("--format", choices=["json", "csv"], default="json")
    sp.set_defaults(func=cmd_gen_mub)

    sp = sub.add_parser("verify-mub", parents=[common], help="check unbiasedness and unitarity")
    _add_field(sp)
    sp.add_argument("--construction", choices=[c.value for c in mub.Construction], default="wf")
    sp.add_argument("--equivalence", action="store_true", help="also check the relabelling between constructions")
    sp.set_defaults(func=cmd_verify_mub)

    sp = sub.add_parser("netlist", parents=[common], aliases=["export-netlist"], help="write the interferometer network")
    _add_field(sp)
    _add_layout(sp)
    sp.set_defaults(func=cmd_netlist)

    sp = sub.add_parser("povm", parents=[common], aliases=["export-povm"], help="extract and check the detection POVM")
    _add_field(sp)
    _add_layout(sp)
    sp.set_defaults(func=cmd_povm)

    sp = sub.add_parser("simulate", parents=[common], help="Monte-Carlo protocol run")
    _add_field(sp)
    _add_layout(sp)
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--channel", choices=[k.value for k in protocol.ChannelKind], default="identity")
    sp.add_argument("--param", type=float, help="symbol error (depolarizing) or e_Z (correlated)")
    sp.add_argument("--lambda-csv", help="Bell-diagonal weights for --channel bell")
    sp.add_argument("--backend", choices=[b.value for b in protocol.Backend], default="ideal")
    sp.add_argument("--basis-probs", help="comma-separated, d+1 values, Z last")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("keyrate", parents=[common], help="asymptotic key rate")
    sp.add_argument("--d", type=int)
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--lambda00", type=float)
    group.add_argument("--e-bar", type=float)
    group.add_argument("--stats", help="error-statistics JSON from simulate")
    group.add_argument("--lambda-csv", help="d x d Bell-diagonal weights")
    sp.set_defaults(func=cmd_keyrate)

    sp = sub.add_parser("sweep", parents=[common], help="key rate against average symbol error")
    sp.add_argument("--d", type=int, nargs="+", default=[2, 4])
    sp.add_argument("--points", type=int, default=101)
    sp.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        _emit({"error": str(exc), "exit_code": exc.code, **exc.report})
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

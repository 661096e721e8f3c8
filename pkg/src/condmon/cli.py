"""Command-line interface: full runs, single folds, synthetic data, K sweeps,
and the live stream monitor."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import autoencoder, dataset, harness, stream
from .harness import OselmConfig, PipelineConfig

log = logging.getLogger(__name__)

DATA_ROOT_ENV = "CONDMON_DATA_ROOT"


def _parse_k_grid(text: str) -> tuple[float, ...]:
    try:
        a, b, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected a:b:step") from None
    if step <= 0 or b < a:
        raise argparse.ArgumentTypeError("need step > 0 and b >= a")
    return tuple(np.arange(a, b + step / 2, step))


def _resolve_data_root(arg: str | None) -> Path:
    env = os.environ.get(DATA_ROOT_ENV)
    if env:
        return Path(env)
    if arg is None:
        raise SystemExit(f"no data root: pass --data or set {DATA_ROOT_ENV}")
    return Path(arg)


def _load_manifest(data_arg: str | None) -> dataset.DatasetManifest:
    root = _resolve_data_root(data_arg)
    if root.is_file():
        return dataset.DatasetManifest.from_file(root)
    if (root / "manifest.cfg").is_file():
        return dataset.DatasetManifest.from_file(root / "manifest.cfg")
    if (root / "1st_test").is_dir():
        return dataset.default_manifest(root)
    raise SystemExit(
        f"{root}: no manifest.cfg and no stock 1st_test/2nd_test/3rd_test layout"
    )


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=harness.MODES, default="auto")
    p.add_argument("--data", help=f"data root or manifest file (or ${DATA_ROOT_ENV})")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--k", type=float, help="fixed K (skips per-fold calibration)")
    p.add_argument("--k-grid", type=_parse_k_grid, help="calibration grid a:b:step")
    p.add_argument("--c", type=float, default=OselmConfig().C, help="OSELM ridge C")
    p.add_argument("--hidden", type=int, default=OselmConfig().n_hidden)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument(
        "--decoder-activation", choices=autoencoder.DECODER_ACTIVATIONS, default="relu"
    )
    p.add_argument("--jobs", type=int, default=1, help="folds run in parallel")
    p.add_argument("--no-figures", action="store_true")


def _config_from(args) -> PipelineConfig:
    return PipelineConfig(
        mode=args.mode,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        decoder_activation=args.decoder_activation,
        oselm=OselmConfig(n_hidden=args.hidden, C=args.c),
        k_fixed=args.k,
        k_grid=args.k_grid,
        master_seed=args.seed,
        jobs=args.jobs,
        write_figures=not args.no_figures,
    )


def cmd_run_all(args) -> int:
    manifest = _load_manifest(args.data)
    config = _config_from(args)
    report = harness.run_all(manifest, config)
    harness.emit_report(report, Path(args.out), write_figures=config.write_figures)
    for fold in report.folds:
        mark = "ok " if fold.correct else "MISS"
        print(
            f"[{mark}] {fold.test_label}: {fold.state:7s} (truth {fold.ground_truth}; "
            f"K={fold.k:g}, T={fold.threshold:.4g}, max dev={fold.max_deviation:.4g}, "
            f"converged at {fold.converged_at})"
        )
    print(
        f"accuracy: {sum(f.correct for f in report.folds)}/{len(report.folds)} "
        f"({100 * report.accuracy:.1f}%), mode={report.mode}"
    )
    print(f"reports written to {args.out}")
    return 0


def cmd_run_fold(args) -> int:
    manifest = _load_manifest(args.data)
    config = _config_from(args)
    test = dataset.BearingSelector.parse(args.test)
    folds = dataset.make_loo_folds(manifest)
    index = next(i for i, f in enumerate(folds) if f.test == test)
    report = harness.run_fold(folds[index], manifest, config, index)
    harness.emit_fold(report, Path(args.out))
    mark = "matches" if report.correct else "CONTRADICTS"
    print(
        f"{report.test_label}: {report.state} ({mark} ground truth "
        f"{report.ground_truth}; K={report.k:g}, T={report.threshold:.4g}, "
        f"max dev={report.max_deviation:.4g}, "
        f"converged at {report.converged_at}/{report.n_samples})"
    )
    return 0


def cmd_sweep_k(args) -> int:
    manifest = _load_manifest(args.data)
    config = _config_from(args)
    # A sweep only needs each test bearing's stats; any fixed K skips the
    # 11-bearing calibration inside each fold.
    config = PipelineConfig(
        **{**config.__dict__, "k_fixed": args.k if args.k else 1.0}
    )
    report = harness.run_all(manifest, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["k,accuracy_pct"] + [f"{k:.12g},{a:.12g}" for k, a in report.k_curve]
    (out / "accuracy_vs_k.csv").write_text("\n".join(lines) + "\n")
    if config.write_figures:
        from . import plots

        plots.plot_accuracy_vs_k(
            {config.mode: report.k_curve}, out / "accuracy_vs_k.png"
        )
    best = max(a for _, a in report.k_curve)
    best_ks = [k for k, a in report.k_curve if a == best]
    print(
        f"max accuracy {best:.1f}% on K in [{best_ks[0]:g}, {best_ks[-1]:g}] "
        f"({len(best_ks)} grid points)"
    )
    print(f"curve written to {out / 'accuracy_vs_k.csv'}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.layout == "manifest":
        # Unset knobs fall back to the generator's tuned defaults.
        overrides = {
            name: value
            for name, value in [
                ("noise_sigma", args.noise_sigma),
                ("impulse_base", args.impulse_base),
                ("impulse_growth", args.impulse_growth),
                ("tone_amp", args.tone_amp),
            ]
            if value is not None
        }
        manifest_path = dataset.generate_synthetic_dataset(
            out,
            n_snapshots=args.snapshots,
            snapshot_len=args.snapshot_len,
            seed=args.seed,
            **overrides,
        )
        print(f"12-bearing synthetic dataset written; manifest at {manifest_path}")
        return 0
    cfg = dataset.SyntheticConfig(
        n_snapshots=args.snapshots,
        fault_onset=args.fault_onset,
        noise_sigma=1.0 if args.noise_sigma is None else args.noise_sigma,
        impulse_growth=0.05 if args.impulse_growth is None else args.impulse_growth,
        impulse_base=args.impulse_base,
        snapshot_len=args.snapshot_len,
        tone_amp=0.0 if args.tone_amp is None else args.tone_amp,
        rng_seed=args.seed,
    )
    snapshots = dataset.synth_bearing(cfg)
    if args.layout == "stream":
        out.parent.mkdir(parents=True, exist_ok=True)
        path = out if out.suffix else out / "stream.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for snap in snapshots:
                fh.write(" ".join(format(v, ".17g") for v in snap) + "\n")
        print(f"{len(snapshots)} stream frames written to {path}")
        return 0
    paths = dataset.write_snapshot_files(out, snapshots[:, :, None])
    print(f"{len(paths)} snapshot files written to {out}")
    return 0


def cmd_stream(args) -> int:
    encoder = autoencoder.load_encoder(Path(args.encoder))
    oselm_cfg = OselmConfig(n_hidden=args.hidden, C=args.c)

    def make_session() -> stream.StreamSession:
        if args.resume:
            return stream.StreamSession.resume(Path(args.resume), encoder)
        return stream.StreamSession(
            encoder,
            k=args.k,
            oselm_cfg=oselm_cfg,
            seed=args.seed,
            snapshot_len=args.snapshot_len,
        )

    checkpoint = Path(args.checkpoint) if args.checkpoint else None
    if args.stdin:
        session = make_session()
        accepted = stream.serve_stdin(session, checkpoint)
        log.info(
            "stream ended: %d frames accepted, %d malformed skipped",
            accepted, session.malformed,
        )
        return 0
    host, _, port = args.listen.rpartition(":")
    stream.serve_tcp(
        host or "127.0.0.1",
        int(port),
        make_session,
        checkpoint=checkpoint,
        max_connections=args.max_connections,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condmon",
        description="Bearing condition monitoring with learned features and an "
        "online-sequential ELM anomaly detector.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-all", help="run all 12 leave-one-out folds")
    _add_pipeline_args(p)
    p.set_defaults(fn=cmd_run_all)

    p = sub.add_parser("run-fold", help="run a single fold")
    _add_pipeline_args(p)
    p.add_argument("--test", required=True, help="test bearing, e.g. 1.3 or d1b3")
    p.set_defaults(fn=cmd_run_fold)

    p = sub.add_parser("sweep-k", help="accuracy-vs-K curve over all test bearings")
    _add_pipeline_args(p)
    p.set_defaults(fn=cmd_sweep_k)

    p = sub.add_parser("synth", help="generate synthetic vibration data")
    p.add_argument("--snapshots", type=int, required=True)
    p.add_argument("--fault-onset", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--layout", choices=("single", "manifest", "stream"), default="single",
        help="single bearing dir, full 12-bearing dataset, or line-per-frame file",
    )
    p.add_argument("--snapshot-len", type=int, default=dataset.SNAPSHOT_ROWS)
    p.add_argument("--noise-sigma", type=float, default=None)
    p.add_argument("--impulse-growth", type=float, default=None)
    p.add_argument("--impulse-base", type=float, default=None)
    p.add_argument("--tone-amp", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("stream", help="monitor a live snapshot stream")
    p.add_argument("--encoder", required=True, help="trained encoder model file")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--stdin", action="store_true")
    source.add_argument("--listen", metavar="ADDR:PORT")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--c", type=float, default=OselmConfig().C)
    p.add_argument("--hidden", type=int, default=OselmConfig().n_hidden)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snapshot-len", type=int, default=dataset.SNAPSHOT_ROWS)
    p.add_argument("--checkpoint", help="write session state here on EOF/disconnect")
    p.add_argument("--resume", help="resume from a checkpoint file")
    p.add_argument("--max-connections", type=int, default=None)
    p.set_defaults(fn=cmd_stream)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.fn(args)
    except (
        harness.FoldError,
        harness.ConvergenceError,
        dataset.DataFormatError,
        ValueError,
        OSError,
    ) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

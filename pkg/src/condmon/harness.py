"""Leave-one-out evaluation harness.

For each of the 12 folds: train the feature extractor offline on the 11
held-in bearings (auto mode), calibrate K on those same bearings, then stream
the held-out bearing through the online classifier in timestamp order and
judge it against its adaptive threshold. Emits CSV/JSON reports and figures.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import anomaly, autoencoder, dataset, features, oselm

log = logging.getLogger(__name__)

MODES = ("auto", "handcrafted")

AUTO_FEATURE_NAMES = tuple(f"code_{i}" for i in range(1, 6))


class ConvergenceError(RuntimeError):
    """The weight-change monitor never fired; carries the delta trace."""

    def __init__(self, message: str, delta_trace: list[float] | None = None):
        super().__init__(message)
        self.delta_trace = delta_trace or []


class FoldError(RuntimeError):
    """A fold failed; carries the test-bearing identity."""


@dataclass
class OselmConfig:
    n_hidden: int = oselm.DEFAULT_HIDDEN
    C: float = oselm.DEFAULT_C
    tc_percent: float = oselm.TC_PERCENT
    window: int = oselm.CONVERGENCE_WINDOW


@dataclass
class PipelineConfig:
    mode: str = "auto"
    code_size: int = autoencoder.DEFAULT_CODE_SIZE
    batch_size: int = 32
    learning_rate: float = 1e-3
    decoder_activation: str = "relu"
    oselm: OselmConfig = field(default_factory=OselmConfig)
    k_fixed: float | None = None
    k_grid: tuple[float, ...] | None = None
    master_seed: int = 0
    jobs: int = 1
    write_figures: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.k_fixed is not None and self.k_fixed <= 0:
            raise ValueError("fixed K must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def grid(self) -> np.ndarray:
        if self.k_grid is None:
            return anomaly.default_k_grid()
        return np.asarray(self.k_grid, dtype=float)

    def echo(self) -> dict:
        """Config snapshot for reports; paths deliberately excluded so that
        identical runs into different directories stay byte-identical."""
        return {
            "mode": self.mode,
            "code_size": self.code_size,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "decoder_activation": self.decoder_activation,
            "oselm": {
                "n_hidden": self.oselm.n_hidden,
                "C": self.oselm.C,
                "tc_percent": self.oselm.tc_percent,
                "window": self.oselm.window,
            },
            "k_fixed": self.k_fixed,
            "k_grid": None if self.k_grid is None else list(self.k_grid),
            "master_seed": self.master_seed,
        }


# Per-fold sub-seed stages.
SEED_AE_INIT = 0
SEED_AE_SHUFFLE = 1
SEED_OSELM = 2


def derive_seed(master_seed: int, fold_index: int, stage: int) -> int:
    return (master_seed * 1_000_003 + fold_index * 1009 + stage) % (2**31)


class FeatureStore:
    """Loads and caches per-bearing input matrices declared by a manifest.

    kind "averaged": (n_snapshots, snapshot_len/5) smoothed vectors.
    kind "handcrafted": (n_snapshots, 5) time-domain feature rows.
    """

    def __init__(self, manifest: dataset.DatasetManifest):
        self.manifest = manifest
        self._cache: dict = {}
        self._timestamps: dict[int, list[datetime]] = {}

    def matrix(self, selector: dataset.BearingSelector, kind: str) -> np.ndarray:
        key = (kind, selector)
        if key not in self._cache:
            self._load_dataset(selector.dataset_id, kind)
        return self._cache[key]

    def timestamps(self, selector: dataset.BearingSelector) -> list[datetime]:
        if selector.dataset_id not in self._timestamps:
            spec = self.manifest.datasets[selector.dataset_id]
            self._timestamps[selector.dataset_id] = [
                ts for ts, _ in dataset.scan_snapshots(spec.root)
            ]
        return self._timestamps[selector.dataset_id]

    def _load_dataset(self, dataset_id: int, kind: str) -> None:
        spec = self.manifest.datasets[dataset_id]
        entries = dataset.scan_snapshots(spec.root)
        selectors = [
            s for s in self.manifest.selectors if s.dataset_id == dataset_id
        ]
        rows: dict = {s: [] for s in selectors}
        stamps = []
        for ts, path in entries:
            snap = dataset.read_snapshot(
                path, spec.channels, expected_rows=spec.snapshot_len
            )
            stamps.append(ts)
            for sel in selectors:
                series = dataset.extract_bearing_series(snap, sel)
                if kind == "averaged":
                    rows[sel].append(features.average_downsample(series))
                elif kind == "handcrafted":
                    rows[sel].append(features.handcrafted_vector(series))
                else:
                    raise ValueError(f"unknown feature kind {kind!r}")
        for sel in selectors:
            self._cache[(kind, sel)] = np.array(rows[sel])
        self._timestamps[dataset_id] = stamps
        log.info("loaded dataset %d: %d snapshots (%s)", dataset_id, len(stamps), kind)


@dataclass
class OnlineRunResult:
    """Full deviation trace of one bearing's online train-then-infer pass."""

    deviations: np.ndarray
    phases: list[str]
    converged_at: int  # 1-based count of training samples (incl. init batch)
    stats: anomaly.DeviationStats
    model: oselm.OnlineElm

    def calibration_row(self, label: str, faulty: bool) -> anomaly.BearingCalibrationRow:
        inference = self.deviations[self.converged_at :]
        return anomaly.BearingCalibrationRow(
            label=label,
            mu_t=self.stats.mean,
            sigma_t=self.stats.std,
            max_deviation=float(inference.max()),
            faulty=faulty,
        )


def run_online_monitor(
    feature_rows: np.ndarray, cfg: OselmConfig, seed: int
) -> OnlineRunResult:
    """Streams feature rows through a fresh OSELM: init batch of 10, RLS
    updates until convergence, then pure inference on the remainder.

    Training-phase deviations (the init batch under beta_0, and each
    sequential sample's pre-update prediction) feed the threshold stats.
    """
    rows = np.atleast_2d(np.asarray(feature_rows, dtype=float))
    n = rows.shape[0]
    if n < oselm.INIT_BATCH_SIZE + cfg.window + 1:
        raise ValueError(
            f"stream too short ({n} samples) to train, converge and infer"
        )
    model = oselm.OnlineElm(
        n_in=rows.shape[1],
        n_hidden=cfg.n_hidden,
        C=cfg.C,
        seed=seed,
        tc_percent=cfg.tc_percent,
        window=cfg.window,
    )
    stats = anomaly.DeviationStats()
    deviations: list[float] = []
    phases: list[str] = []
    deltas: list[float] = []

    model.init_batch(rows[: oselm.INIT_BATCH_SIZE])
    for x in rows[: oselm.INIT_BATCH_SIZE]:
        _, dev = model.predict(x)
        deviations.append(dev)
        phases.append("init")
        stats.add(dev)

    i = oselm.INIT_BATCH_SIZE
    while i < n and model.phase is oselm.Phase.TRAINING:
        x = rows[i]
        _, dev = model.predict(x)  # output at the time the sample is seen
        delta = model.sequential_update(x)
        model.observe(delta)
        deviations.append(dev)
        phases.append("train")
        stats.add(dev)
        deltas.append(delta)
        i += 1

    if model.phase is not oselm.Phase.INFERENCE:
        raise ConvergenceError(
            f"no convergence after {n} samples "
            f"(last weight changes: {[f'{d:.4f}%' for d in deltas[-5:]]})",
            delta_trace=deltas,
        )
    converged_at = model.monitor.converged_at
    if i >= n:
        raise ConvergenceError(
            f"converged on the final sample ({converged_at}); empty inference region",
            delta_trace=deltas,
        )
    for x in rows[i:]:
        _, dev = model.predict(x)
        deviations.append(dev)
        phases.append("infer")

    return OnlineRunResult(
        deviations=np.array(deviations),
        phases=phases,
        converged_at=converged_at,
        stats=stats,
        model=model,
    )


@dataclass
class FoldReport:
    """Everything the fold produced, verdict plus reproducibility provenance."""

    test_label: str
    mode: str
    ground_truth: str
    k: float
    k_calibrated: bool
    mu_t: float
    sigma_t: float
    threshold: float
    converged_at: int
    n_samples: int
    max_deviation: float
    state: str
    correct: bool
    oselm_seed: int
    encoder_seed: int | None
    trainset_digest: str | None
    calibration: list[anomaly.BearingCalibrationRow]
    test_row: anomaly.BearingCalibrationRow
    deviations: np.ndarray
    phases: list[str]
    feature_rows: np.ndarray
    timestamps: list[datetime]
    encoder: autoencoder.Encoder | None
    model: oselm.OnlineElm
    timings: dict[str, float]

    def to_json_dict(self) -> dict:
        # Timings stay out: they are the one non-reproducible field.
        return {
            "test": self.test_label,
            "mode": self.mode,
            "ground_truth": self.ground_truth,
            "k": self.k,
            "k_calibrated": self.k_calibrated,
            "mu_t": self.mu_t,
            "sigma_t": self.sigma_t,
            "threshold": self.threshold,
            "converged_at": self.converged_at,
            "n_samples": self.n_samples,
            "max_deviation": self.max_deviation,
            "state": self.state,
            "correct": self.correct,
            "seeds": {"oselm": self.oselm_seed, "encoder": self.encoder_seed},
            "trainset_digest": self.trainset_digest,
            "calibration": [
                {
                    "bearing": r.label,
                    "mu_t": r.mu_t,
                    "sigma_t": r.sigma_t,
                    "max_deviation": r.max_deviation,
                    "ground_truth_faulty": r.faulty,
                }
                for r in self.calibration
            ],
        }


def train_fold_encoder(
    store: FeatureStore,
    train_selectors,
    config: PipelineConfig,
    fold_index: int,
) -> autoencoder.Encoder:
    """Trains this fold's autoencoder on the held-in bearings only and
    returns the deployable encoder half."""
    matrices = [store.matrix(s, "averaged") for s in train_selectors]
    digest = autoencoder.training_set_digest(matrices)
    init_seed = derive_seed(config.master_seed, fold_index, SEED_AE_INIT)
    shuffle_seed = derive_seed(config.master_seed, fold_index, SEED_AE_SHUFFLE)
    params = autoencoder.train(
        np.vstack(matrices),
        config.code_size,
        autoencoder.TrainConfig(
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            init_seed=init_seed,
            shuffle_seed=shuffle_seed,
            decoder_activation=config.decoder_activation,
        ),
    )
    return autoencoder.Encoder(
        W=params.W,
        b=params.b,
        provenance={"init_seed": init_seed, "trainset_digest": digest},
    )


def calibrate_fold_k(
    fold: dataset.LooFold,
    feature_of,
    manifest: dataset.DatasetManifest,
    config: PipelineConfig,
    oselm_seed: int,
) -> tuple[float, list[anomaly.BearingCalibrationRow]]:
    """Runs the online pipeline on each held-in bearing and picks the K that
    maximizes their verdict accuracy."""
    rows = []
    for sel in fold.train:
        try:
            result = run_online_monitor(feature_of(sel), config.oselm, oselm_seed)
        except ConvergenceError as exc:
            raise FoldError(f"calibration bearing {sel.label}: {exc}") from exc
        rows.append(result.calibration_row(sel.label, manifest.is_faulty(sel)))
    return anomaly.calibrate_k(rows, config.grid()), rows


def run_fold(
    fold: dataset.LooFold,
    manifest: dataset.DatasetManifest,
    config: PipelineConfig,
    fold_index: int,
    store: FeatureStore | None = None,
) -> FoldReport:
    """Executes one leave-one-out fold end to end."""
    store = store or FeatureStore(manifest)
    timings: dict[str, float] = {}
    t0 = time.perf_counter()

    encoder = None
    encoder_seed = None
    digest = None
    if config.mode == "auto":
        encoder = train_fold_encoder(store, fold.train, config, fold_index)
        encoder_seed = encoder.provenance["init_seed"]
        digest = encoder.provenance["trainset_digest"]
        timings["encoder_training"] = time.perf_counter() - t0

        def feature_of(sel):
            return encoder.encode(store.matrix(sel, "averaged"))

    else:
        digest = autoencoder.training_set_digest(
            store.matrix(s, "handcrafted") for s in fold.train
        )

        def feature_of(sel):
            return store.matrix(sel, "handcrafted")

    oselm_seed = derive_seed(config.master_seed, fold_index, SEED_OSELM)

    t1 = time.perf_counter()
    if config.k_fixed is not None:
        k, calibration = config.k_fixed, []
    else:
        k, calibration = calibrate_fold_k(
            fold, feature_of, manifest, config, oselm_seed
        )
    timings["k_calibration"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    test_features = feature_of(fold.test)
    try:
        result = run_online_monitor(test_features, config.oselm, oselm_seed)
    except ConvergenceError as exc:
        raise FoldError(f"test bearing {fold.test.label}: {exc}") from exc
    timings["online_monitoring"] = time.perf_counter() - t2
    timings["per_sample_inference"] = timings["online_monitoring"] / max(
        len(result.deviations), 1
    )

    thr = anomaly.threshold(result.stats, k)
    verdict = anomaly.bearing_verdict(result.deviations, thr, result.converged_at)
    truly_faulty = manifest.is_faulty(fold.test)
    timings["total"] = time.perf_counter() - t0

    return FoldReport(
        test_label=fold.test.label,
        mode=config.mode,
        ground_truth=manifest.ground_truth(fold.test),
        k=k,
        k_calibrated=config.k_fixed is None,
        mu_t=result.stats.mean,
        sigma_t=result.stats.std,
        threshold=thr.t,
        converged_at=result.converged_at,
        n_samples=len(result.deviations),
        max_deviation=verdict.max_deviation,
        state=verdict.state,
        correct=verdict.faulty == truly_faulty,
        oselm_seed=oselm_seed,
        encoder_seed=encoder_seed,
        trainset_digest=digest,
        calibration=calibration,
        test_row=result.calibration_row(fold.test.label, truly_faulty),
        deviations=result.deviations,
        phases=result.phases,
        feature_rows=np.asarray(test_features),
        timestamps=store.timestamps(fold.test),
        encoder=encoder,
        model=result.model,
        timings=timings,
    )


@dataclass
class RunReport:
    mode: str
    folds: list[FoldReport]
    accuracy: float
    k_curve: list[tuple[float, float]]
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "accuracy": self.accuracy,
            "n_correct": sum(f.correct for f in self.folds),
            "n_folds": len(self.folds),
            "config": self.config,
            "folds": [f.to_json_dict() for f in self.folds],
        }


def _fold_task(args) -> FoldReport:
    fold, manifest, config, index = args
    return run_fold(fold, manifest, config, index)


def run_all(
    manifest: dataset.DatasetManifest,
    config: PipelineConfig,
    folds: list[dataset.LooFold] | None = None,
) -> RunReport:
    """Runs every fold (optionally in parallel processes) and aggregates."""
    folds = folds if folds is not None else dataset.make_loo_folds(manifest)
    indexed = list(enumerate(folds))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            reports = list(
                pool.map(_fold_task, [(f, manifest, config, i) for i, f in indexed])
            )
    else:
        store = FeatureStore(manifest)
        reports = []
        for i, fold in indexed:
            try:
                reports.append(run_fold(fold, manifest, config, i, store=store))
            except (FoldError, ConvergenceError, ValueError) as exc:
                raise FoldError(f"fold {fold.test.label}: {exc}") from exc
    accuracy = sum(r.correct for r in reports) / len(reports)
    curve = anomaly.accuracy_vs_k([r.test_row for r in reports], config.grid())
    return RunReport(
        mode=config.mode,
        folds=reports,
        accuracy=accuracy,
        k_curve=curve,
        config=config.echo(),
    )


# -- report emission ----------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def emit_fold(report: FoldReport, out_dir: Path) -> list[Path]:
    """Writes one fold's trace CSV, feature CSV, JSON report and models."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    dev_path = out_dir / f"deviations_{report.test_label}.csv"
    _write_csv(
        dev_path,
        ["sample_index", "phase", "deviation"],
        (
            [str(i + 1), phase, _fmt(dev)]
            for i, (phase, dev) in enumerate(zip(report.phases, report.deviations))
        ),
    )
    written.append(dev_path)

    names = (
        features.FEATURE_NAMES if report.mode == "handcrafted" else AUTO_FEATURE_NAMES
    )
    feat_path = out_dir / f"features_{report.test_label}.csv"
    _write_csv(
        feat_path,
        ["timestamp", *names],
        (
            [ts.strftime(dataset.TIMESTAMP_FORMAT), *(_fmt(v) for v in row)]
            for ts, row in zip(report.timestamps, report.feature_rows)
        ),
    )
    written.append(feat_path)

    json_path = out_dir / f"fold_{report.test_label}.json"
    json_path.write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    written.append(json_path)

    models_dir = out_dir / "models"
    models_dir.mkdir(exist_ok=True)
    if report.encoder is not None:
        enc_path = models_dir / f"encoder_{report.test_label}.model"
        autoencoder.save_encoder(report.encoder, enc_path)
        written.append(enc_path)
    elm_path = models_dir / f"oselm_{report.test_label}.model"
    report.model.save(elm_path)
    written.append(elm_path)
    return written


def emit_report(report: RunReport, out_dir: Path, write_figures: bool = True) -> list[Path]:
    """Writes the aggregate CSVs/JSON, per-fold artifacts, timings and figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    verdicts_path = out_dir / "verdicts.csv"
    _write_csv(
        verdicts_path,
        [
            "bearing", "ground_truth", "state", "correct", "max_deviation",
            "threshold", "k", "mu_t", "sigma_t", "convergence_length", "n_samples",
        ],
        (
            [
                f.test_label, f.ground_truth, f.state, str(int(f.correct)),
                _fmt(f.max_deviation), _fmt(f.threshold), _fmt(f.k), _fmt(f.mu_t),
                _fmt(f.sigma_t), str(f.converged_at), str(f.n_samples),
            ]
            for f in report.folds
        ),
    )
    written.append(verdicts_path)

    curve_path = out_dir / "accuracy_vs_k.csv"
    _write_csv(
        curve_path,
        ["k", "accuracy_pct"],
        ([_fmt(k), _fmt(acc)] for k, acc in report.k_curve),
    )
    written.append(curve_path)

    k_path = out_dir / "k_per_fold.csv"
    _write_csv(
        k_path,
        ["bearing", "k", "calibrated"],
        ([f.test_label, _fmt(f.k), str(int(f.k_calibrated))] for f in report.folds),
    )
    written.append(k_path)

    run_path = out_dir / "run_report.json"
    run_path.write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    written.append(run_path)

    for fold_report in report.folds:
        written.extend(emit_fold(fold_report, out_dir))

    # Wall-clock diagnostics live apart from the reproducible reports.
    timings_path = out_dir / "timings.csv"
    stages = sorted({s for f in report.folds for s in f.timings})
    _write_csv(
        timings_path,
        ["bearing", *stages],
        (
            [f.test_label, *(_fmt(f.timings.get(s, 0.0)) for s in stages)]
            for f in report.folds
        ),
    )
    written.append(timings_path)

    if write_figures:
        from . import plots

        written.extend(plots.render_run_figures(report, out_dir / "figures"))
    return written

"""NASA IMS bearing snapshot parsing, manifests, leave-one-out folds, and a
synthetic vibration generator for dataset-free runs.

One snapshot = one ASCII file of whitespace-separated acceleration columns,
20480 rows (1 s at 20 kHz), named by its wall-clock timestamp.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

SNAPSHOT_ROWS = 20480
SNAPSHOT_INTERVAL = timedelta(minutes=10)
TIMESTAMP_FORMAT = "%Y.%m.%d.%H.%M.%S"
_TIMESTAMP_RE = re.compile(r"^\d{4}\.\d{2}\.\d{2}\.\d{2}\.\d{2}\.\d{2}$")

HEALTHY = "healthy"
INNER_RACE = "inner-race"
ROLLER_ELEMENT = "roller-element"
OUTER_RACE = "outer-race"
CONDITIONS = (HEALTHY, INNER_RACE, ROLLER_ELEMENT, OUTER_RACE)

DATASET_IDS = (1, 2, 3)
BEARING_IDS = (1, 2, 3, 4)
DATASET_CHANNELS = {1: 8, 2: 4, 3: 4}

# Run-to-failure ground truth and nominal file counts of the IMS datasets.
# Counts are documentation only; the scanner trusts the directory contents.
TABLE1_CONDITIONS = {
    (1, 1): HEALTHY,
    (1, 2): HEALTHY,
    (1, 3): INNER_RACE,
    (1, 4): ROLLER_ELEMENT,
    (2, 1): OUTER_RACE,
    (2, 2): HEALTHY,
    (2, 3): HEALTHY,
    (2, 4): HEALTHY,
    (3, 1): HEALTHY,
    (3, 2): HEALTHY,
    (3, 3): OUTER_RACE,
    (3, 4): HEALTHY,
}
TABLE1_SAMPLE_COUNTS = {1: 2156, 2: 984, 3: 6324}


class DataFormatError(ValueError):
    """A snapshot file, filename, or manifest does not match the declared format."""


@dataclass(frozen=True, order=True)
class BearingSelector:
    """Identifies one bearing and the snapshot column(s) that carry it.

    Dataset 1 instrumented each bearing on X and Y (columns 2k-2 and 2k-1);
    datasets 2-3 have one X-axis column per bearing (column k-1). Only the
    X-axis column is consumed downstream.
    """

    dataset_id: int
    bearing_id: int

    def __post_init__(self):
        if self.dataset_id not in DATASET_IDS:
            raise ValueError(f"dataset_id must be one of {DATASET_IDS}")
        if self.bearing_id not in BEARING_IDS:
            raise ValueError(f"bearing_id must be one of {BEARING_IDS}")

    @property
    def column(self) -> int:
        """X-axis column index for this bearing."""
        if self.dataset_id == 1:
            return 2 * (self.bearing_id - 1)
        return self.bearing_id - 1

    @property
    def label(self) -> str:
        return f"d{self.dataset_id}b{self.bearing_id}"

    @classmethod
    def parse(cls, text: str) -> "BearingSelector":
        """Accepts 'd1b3', 'D1B3' or '1.3'."""
        m = re.fullmatch(r"[dD](\d+)[bB](\d+)", text.strip()) or re.fullmatch(
            r"(\d+)\.(\d+)", text.strip()
        )
        if not m:
            raise ValueError(f"cannot parse bearing selector {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))


def all_selectors() -> list[BearingSelector]:
    return [BearingSelector(d, b) for d in DATASET_IDS for b in BEARING_IDS]


@dataclass(frozen=True)
class RawSnapshot:
    """One vibration record: rows = time steps, columns = accelerometer channels."""

    timestamp: datetime
    channels: np.ndarray

    def __post_init__(self):
        if self.channels.ndim != 2:
            raise DataFormatError(
                f"snapshot must be a 2-D matrix, got shape {self.channels.shape}"
            )
        if not np.isfinite(self.channels).all():
            raise DataFormatError("snapshot contains non-finite values")


def parse_timestamp(name: str) -> datetime:
    """Parses the YYYY.MM.DD.HH.MM.SS filename convention."""
    if not _TIMESTAMP_RE.match(name):
        raise DataFormatError(f"filename {name!r} is not a snapshot timestamp")
    return datetime.strptime(name, TIMESTAMP_FORMAT)


def parse_snapshot(
    text: str | bytes,
    expected_channels: int,
    *,
    expected_rows: int | None = SNAPSHOT_ROWS,
    timestamp: datetime | None = None,
) -> RawSnapshot:
    """Parses one ASCII snapshot body into a RawSnapshot.

    expected_rows=None relaxes the row-count check (test fixtures).
    """
    if isinstance(text, bytes):
        text = text.decode("ascii")
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != expected_channels:
            raise DataFormatError(
                f"line {lineno}: expected {expected_channels} columns, got {len(parts)}"
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise DataFormatError(f"line {lineno}: non-numeric token ({exc})") from None
    if not rows:
        raise DataFormatError("empty snapshot file")
    matrix = np.array(rows, dtype=float)
    if expected_rows is not None and matrix.shape[0] != expected_rows:
        raise DataFormatError(
            f"short file: expected {expected_rows} rows, got {matrix.shape[0]}"
        )
    return RawSnapshot(timestamp=timestamp or datetime.min, channels=matrix)


def read_snapshot(
    path: Path, expected_channels: int, *, expected_rows: int | None = SNAPSHOT_ROWS
) -> RawSnapshot:
    ts = parse_timestamp(Path(path).name)
    return parse_snapshot(
        Path(path).read_text(),
        expected_channels,
        expected_rows=expected_rows,
        timestamp=ts,
    )


def snapshot_to_text(snapshot: RawSnapshot) -> str:
    """Round-trip-exact ASCII serialization (re-parsing yields an identical matrix)."""
    lines = [
        "\t".join(format(v, ".17g") for v in row) for row in snapshot.channels
    ]
    return "\n".join(lines) + "\n"


def scan_snapshots(directory: Path) -> list[tuple[datetime, Path]]:
    """Lists a dataset directory's snapshot files sorted by filename timestamp.

    Non-matching visible filenames are rejected outright so a malformed drop
    directory fails loudly instead of silently skipping data.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataFormatError(f"dataset directory {directory} does not exist")
    entries = []
    rejects = []
    for p in sorted(directory.iterdir()):
        if p.name.startswith("."):
            continue
        if p.is_dir():
            rejects.append(p.name)
            continue
        try:
            entries.append((parse_timestamp(p.name), p))
        except DataFormatError:
            rejects.append(p.name)
    if rejects:
        raise DataFormatError(
            f"{directory}: filenames do not match YYYY.MM.DD.HH.MM.SS: "
            + ", ".join(rejects[:10])
        )
    if not entries:
        raise DataFormatError(f"zero files found in {directory}")
    entries.sort(key=lambda e: e[0])
    return entries


def extract_bearing_series(snapshot: RawSnapshot, selector: BearingSelector) -> np.ndarray:
    """The X-axis column of the selected bearing."""
    col = selector.column
    if col >= snapshot.channels.shape[1]:
        raise DataFormatError(
            f"selector {selector.label} needs column {col}, snapshot has "
            f"{snapshot.channels.shape[1]} channels"
        )
    return snapshot.channels[:, col]


@dataclass(frozen=True)
class DatasetSpec:
    """Where one dataset lives and how its files are shaped."""

    dataset_id: int
    root: Path
    channels: int
    snapshot_len: int = SNAPSHOT_ROWS


@dataclass(frozen=True)
class DatasetManifest:
    """All 12 bearings: dataset roots, file shapes, and ground-truth conditions."""

    datasets: dict[int, DatasetSpec]
    conditions: dict[BearingSelector, str]

    def __post_init__(self):
        if sorted(self.datasets) != list(DATASET_IDS):
            raise DataFormatError("manifest must declare datasets 1, 2 and 3")
        expected = set(all_selectors())
        if set(self.conditions) != expected:
            raise DataFormatError("manifest must declare exactly the 12 bearings")
        for sel, cond in self.conditions.items():
            if cond != TABLE1_CONDITIONS[(sel.dataset_id, sel.bearing_id)]:
                raise DataFormatError(
                    f"ground truth for {sel.label} must match the run-to-failure "
                    f"record ({TABLE1_CONDITIONS[(sel.dataset_id, sel.bearing_id)]})"
                )

    @property
    def selectors(self) -> list[BearingSelector]:
        return all_selectors()

    def spec_for(self, selector: BearingSelector) -> DatasetSpec:
        return self.datasets[selector.dataset_id]

    def ground_truth(self, selector: BearingSelector) -> str:
        return self.conditions[selector]

    def is_faulty(self, selector: BearingSelector) -> bool:
        return self.conditions[selector] != HEALTHY

    @classmethod
    def from_entries(
        cls, entries: list[tuple[BearingSelector, str]], datasets: dict[int, DatasetSpec]
    ) -> "DatasetManifest":
        seen = set()
        for sel, _ in entries:
            if sel in seen:
                raise DataFormatError(f"duplicate manifest entry {sel.label}")
            seen.add(sel)
        return cls(datasets=datasets, conditions=dict(entries))

    @classmethod
    def from_file(cls, path: Path) -> "DatasetManifest":
        """Reads the key-value manifest format (see to_text)."""
        path = Path(path)
        kv: dict[str, str] = {}
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        datasets = {}
        for d in DATASET_IDS:
            root_key = f"dataset{d}.root"
            if root_key not in kv:
                raise DataFormatError(f"{path}: missing {root_key}")
            root = Path(kv[root_key])
            if not root.is_absolute():
                root = path.parent / root
            datasets[d] = DatasetSpec(
                dataset_id=d,
                root=root,
                channels=int(kv.get(f"dataset{d}.channels", DATASET_CHANNELS[d])),
                snapshot_len=int(kv.get(f"dataset{d}.snapshot_len", SNAPSHOT_ROWS)),
            )
        conditions = {}
        for sel in all_selectors():
            default = TABLE1_CONDITIONS[(sel.dataset_id, sel.bearing_id)]
            cond = kv.get(f"bearing.{sel.label}", default)
            if cond not in CONDITIONS:
                raise DataFormatError(f"{path}: unknown condition {cond!r}")
            conditions[sel] = cond
        return cls(datasets=datasets, conditions=conditions)

    def to_text(self) -> str:
        lines = ["# condmon dataset manifest"]
        for d in DATASET_IDS:
            spec = self.datasets[d]
            lines.append(f"dataset{d}.root = {spec.root}")
            lines.append(f"dataset{d}.channels = {spec.channels}")
            lines.append(f"dataset{d}.snapshot_len = {spec.snapshot_len}")
        for sel in all_selectors():
            lines.append(f"bearing.{sel.label} = {self.conditions[sel]}")
        return "\n".join(lines) + "\n"


def default_manifest(data_root: Path) -> DatasetManifest:
    """Manifest for the stock IMS download layout (1st_test/2nd_test/3rd_test)."""
    data_root = Path(data_root)
    names = {1: "1st_test", 2: "2nd_test", 3: "3rd_test"}
    return DatasetManifest(
        datasets={
            d: DatasetSpec(d, data_root / names[d], DATASET_CHANNELS[d])
            for d in DATASET_IDS
        },
        conditions=dict(
            (BearingSelector(d, b), TABLE1_CONDITIONS[(d, b)])
            for d in DATASET_IDS
            for b in BEARING_IDS
        ),
    )


@dataclass(frozen=True)
class LooFold:
    """Leave-one-out split: train on 11 bearings, test on the held-out one."""

    test: BearingSelector
    train: tuple[BearingSelector, ...]

    def __post_init__(self):
        if self.test in self.train:
            raise ValueError("test bearing appears in the train set")
        if len(set(self.train)) != len(self.train):
            raise ValueError("duplicate bearings in the train set")
        if len(self.train) != len(all_selectors()) - 1:
            raise ValueError("train set must hold the other 11 bearings")


def make_loo_folds(manifest: DatasetManifest) -> list[LooFold]:
    """One fold per bearing, in d1b1..d3b4 order."""
    selectors = manifest.selectors
    if len(selectors) != 12:
        raise ValueError(f"expected 12 bearings, got {len(selectors)}")
    return [
        LooFold(test=s, train=tuple(t for t in selectors if t != s))
        for s in selectors
    ]


@dataclass(frozen=True)
class SyntheticConfig:
    """Synthetic run-to-failure stream: Gaussian noise, an optional fixed
    multi-tone baseline (tone_amp is an absolute amplitude, drawn per bearing
    in [0.5, 1.5] x tone_amp), and from fault_onset on, sparse impulse bursts
    whose amplitude starts at impulse_base and grows by impulse_growth per
    snapshot.

    impulse_base defaults to 3x noise_sigma, strong enough to separate
    healthy/faulty kurtosis from the first faulty snapshot.
    """

    n_snapshots: int
    fault_onset: int | None = None
    noise_sigma: float = 1.0
    impulse_growth: float = 0.05
    impulse_base: float | None = None
    snapshot_len: int = SNAPSHOT_ROWS
    tone_amp: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_snapshots < 1:
            raise ValueError("n_snapshots must be positive")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be positive")
        if self.fault_onset is not None and not (
            0 <= self.fault_onset <= self.n_snapshots
        ):
            raise ValueError("fault_onset must lie within the stream")
        if self.snapshot_len < 16:
            raise ValueError("snapshot_len too small")
        if self.impulse_growth < 0 or self.tone_amp < 0:
            raise ValueError("amplitudes must be non-negative")

    @property
    def base_amplitude(self) -> float:
        return 3.0 * self.noise_sigma if self.impulse_base is None else self.impulse_base


# One-sided decaying impact shape; same-sign so it survives 5-sample averaging.
# Sparse bursts leave the RMS nearly untouched while moving peak statistics,
# the way early rolling-element damage presents.
_BURST = 0.8 ** np.arange(8)
_BURSTS_PER_SNAPSHOT = 8


def synth_bearing(config: SyntheticConfig) -> np.ndarray:
    """Generates the ordered snapshot matrix (n_snapshots x snapshot_len).

    Deterministic for a fixed seed: the noise stream is drawn in snapshot
    order and impulse injection consumes no randomness.
    """
    rng = np.random.default_rng(config.rng_seed)
    n, length = config.n_snapshots, config.snapshot_len

    baseline = np.zeros(length)
    if config.tone_amp > 0:
        t = np.arange(length) / length
        freqs = rng.integers(8, 64, size=3)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
        amps = config.tone_amp * rng.uniform(0.5, 1.5, size=3)
        for f, ph, a in zip(freqs, phases, amps):
            baseline += a * np.sin(2.0 * np.pi * f * t + ph)

    period = max(4 * _BURST.size, length // _BURSTS_PER_SNAPSHOT)
    out = np.empty((n, length))
    for k in range(n):
        x = baseline + rng.normal(0.0, config.noise_sigma, size=length)
        if config.fault_onset is not None and k >= config.fault_onset:
            amp = config.base_amplitude + config.impulse_growth * (k - config.fault_onset)
            for start in range(period // 2, length - _BURST.size, period):
                x[start : start + _BURST.size] += amp * _BURST
        out[k] = x
    return out


# Faulty bearings of the synthetic 12-bearing manifest mirror the real layout.
SYNTH_FAULTY = tuple(
    BearingSelector(d, b)
    for (d, b), cond in sorted(TABLE1_CONDITIONS.items())
    if cond != HEALTHY
)


def write_snapshot_files(
    directory: Path,
    matrix_per_time: np.ndarray,
    start: datetime = datetime(2004, 2, 12, 10, 32, 39),
) -> list[Path]:
    """Writes one NASA-format file per time step from a (n, rows, cols) array."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    ts = start
    for snap in matrix_per_time:
        path = directory / ts.strftime(TIMESTAMP_FORMAT)
        path.write_text(snapshot_to_text(RawSnapshot(ts, np.atleast_2d(snap.T).T)))
        paths.append(path)
        ts = ts + SNAPSHOT_INTERVAL
    return paths


def generate_synthetic_dataset(
    out_dir: Path,
    *,
    n_snapshots: int = 320,
    snapshot_len: int = 2045,
    noise_sigma: float = 0.05,
    impulse_base: float = 0.5,
    impulse_growth: float = 0.2,
    tone_amp: float = 1.0,
    onset_frac: tuple[float, float] = (0.55, 0.7),
    seed: int = 0,
) -> Path:
    """Writes a full 12-bearing synthetic dataset plus its manifest file.

    Faulty bearings (same four positions as the real run-to-failure data) get
    fault onsets at deterministic, seed-dependent fractions of life inside
    onset_frac. The defaults put the handcrafted features and learned codes
    in the classifier's sensitive range: tone-dominated signals with small
    noise so healthy streams settle quickly, and impulse bursts that end up
    an order of magnitude above the tone peaks. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    onset_rng = np.random.default_rng(seed)
    onsets = {}
    for sel in SYNTH_FAULTY:
        frac = onset_rng.uniform(*onset_frac)
        onsets[sel] = int(round(frac * n_snapshots))

    datasets = {}
    for d in DATASET_IDS:
        n_cols = DATASET_CHANNELS[d]
        cube = np.zeros((n_snapshots, snapshot_len, n_cols))
        for b in BEARING_IDS:
            sel = BearingSelector(d, b)
            cfg = SyntheticConfig(
                n_snapshots=n_snapshots,
                fault_onset=onsets.get(sel),
                noise_sigma=noise_sigma,
                impulse_base=impulse_base,
                impulse_growth=impulse_growth,
                snapshot_len=snapshot_len,
                tone_amp=tone_amp,
                rng_seed=seed * 1009 + 17 * d + b,
            )
            cube[:, :, sel.column] = synth_bearing(cfg)
            if d == 1:
                # Y-axis channel: independent healthy noise, unused downstream.
                y_cfg = replace(cfg, fault_onset=None, rng_seed=cfg.rng_seed + 5000)
                cube[:, :, sel.column + 1] = synth_bearing(y_cfg)
        root = out_dir / f"dataset{d}"
        write_snapshot_files(root, cube)
        datasets[d] = DatasetSpec(d, root, n_cols, snapshot_len)

    manifest = DatasetManifest(
        datasets=datasets,
        conditions={
            BearingSelector(d, b): TABLE1_CONDITIONS[(d, b)]
            for d in DATASET_IDS
            for b in BEARING_IDS
        },
    )
    manifest_path = out_dir / "manifest.cfg"
    manifest_path.write_text(manifest.to_text())
    truth = {
        "n_snapshots": n_snapshots,
        "snapshot_len": snapshot_len,
        "seed": seed,
        "fault_onsets": {sel.label: onsets[sel] for sel in SYNTH_FAULTY},
    }
    (out_dir / "synthetic_truth.json").write_text(
        json.dumps(truth, indent=2, sort_keys=True) + "\n"
    )
    return manifest_path

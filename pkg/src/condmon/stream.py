"""Streaming ingest mode: raw snapshots arrive as lines of numbers (stdin or
TCP), are smoothed, encoded and monitored online; one record leaves per
accepted frame. Session state is checkpointable and resumable.
"""

from __future__ import annotations

import logging
import socket
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import anomaly, autoencoder, dataset, features, model_io, oselm
from .harness import OselmConfig

log = logging.getLogger(__name__)

RECORD_HEADER = "index,phase,deviation,threshold,flag"

_PHASE_NAMES = {
    oselm.Phase.COLLECTING: "init",
    oselm.Phase.TRAINING: "train",
    oselm.Phase.INFERENCE: "infer",
}


@dataclass
class StreamRecord:
    index: int
    phase: str
    deviation: float
    threshold: float | None
    flag: int

    def to_csv(self) -> str:
        thr = "" if self.threshold is None else format(self.threshold, ".10g")
        return (
            f"{self.index},{self.phase},{format(self.deviation, '.10g')},{thr},{self.flag}"
        )


class StreamSession:
    """One monitored source: encoder front end, OSELM, threshold stats.

    Frames buffered during the init-batch phase are emitted in a burst once
    beta_0 exists, so every accepted frame eventually yields exactly one
    record with a defined deviation.
    """

    def __init__(
        self,
        encoder: autoencoder.Encoder,
        k: float,
        oselm_cfg: OselmConfig | None = None,
        seed: int = 0,
        snapshot_len: int = dataset.SNAPSHOT_ROWS,
    ):
        if k <= 0:
            raise ValueError("K must be positive")
        if snapshot_len % features.SMOOTH_WINDOW != 0:
            raise ValueError(
                f"snapshot_len {snapshot_len} not divisible by {features.SMOOTH_WINDOW}"
            )
        if snapshot_len // features.SMOOTH_WINDOW != encoder.d:
            raise ValueError(
                f"snapshot_len {snapshot_len} averages to "
                f"{snapshot_len // features.SMOOTH_WINDOW} values, encoder wants {encoder.d}"
            )
        cfg = oselm_cfg or OselmConfig()
        self.encoder = encoder
        self.k = float(k)
        self.snapshot_len = snapshot_len
        self.model = oselm.OnlineElm(
            n_in=encoder.L,
            n_hidden=cfg.n_hidden,
            C=cfg.C,
            seed=seed,
            tc_percent=cfg.tc_percent,
            window=cfg.window,
        )
        self.stats = anomaly.DeviationStats()
        self.threshold: float | None = None
        self.index = 0
        self.malformed = 0
        self._pending: list[tuple[int, np.ndarray]] = []

    def process_line(self, line: str) -> list[StreamRecord]:
        """Parses one frame; malformed frames are skipped (counted, logged)."""
        parts = line.split()
        if not parts:
            return []
        try:
            values = np.array([float(p) for p in parts])
        except ValueError:
            self.malformed += 1
            log.warning("frame skipped: non-numeric token (total skipped %d)", self.malformed)
            return []
        if values.size != self.snapshot_len or not np.isfinite(values).all():
            self.malformed += 1
            log.warning(
                "frame skipped: got %d values, want %d (total skipped %d)",
                values.size, self.snapshot_len, self.malformed,
            )
            return []
        return self.process_frame(values)

    def process_frame(self, values: np.ndarray) -> list[StreamRecord]:
        code = self.encoder.encode(features.average_downsample(values))
        self.index += 1
        if self.model.phase is oselm.Phase.COLLECTING:
            self._pending.append((self.index, code))
            if len(self._pending) < oselm.INIT_BATCH_SIZE:
                return []
            self.model.init_batch(np.array([c for _, c in self._pending]))
            records = []
            for idx, pending_code in self._pending:
                _, dev = self.model.predict(pending_code)
                self.stats.add(dev)
                records.append(StreamRecord(idx, "init", dev, self.threshold, 0))
            self._pending.clear()
            return records
        if self.model.phase is oselm.Phase.TRAINING:
            _, dev = self.model.predict(code)
            delta = self.model.sequential_update(code)
            fired = self.model.observe(delta)
            self.stats.add(dev)
            if fired:
                self.threshold = anomaly.threshold(self.stats, self.k).t
                log.info(
                    "converged at sample %d; threshold %.6g",
                    self.model.monitor.converged_at, self.threshold,
                )
            return [StreamRecord(self.index, "train", dev, self.threshold, 0)]
        _, dev = self.model.predict(code)
        flag = int(anomaly.classify_sample(dev, self.threshold))
        return [StreamRecord(self.index, "infer", dev, self.threshold, flag)]

    # -- checkpointing --------------------------------------------------------

    def save_checkpoint(self, path: Path) -> None:
        arrays = {f"oselm.{k}": v for k, v in self.model.state_arrays().items()}
        if self._pending:
            arrays["pending_codes"] = np.array([c for _, c in self._pending])
            arrays["pending_indices"] = np.array([i for i, _ in self._pending])
        meta = {
            "oselm": self.model.state_meta(),
            "stats": {"n": self.stats.n, "mean": self.stats.mean, "m2": self.stats.m2},
            "session": {
                "k": self.k,
                "snapshot_len": self.snapshot_len,
                "threshold": self.threshold,
                "index": self.index,
                "malformed": self.malformed,
            },
        }
        model_io.save_blob(path, "stream-checkpoint", meta, arrays)

    @classmethod
    def resume(cls, path: Path, encoder: autoencoder.Encoder) -> "StreamSession":
        _, meta, arrays = model_io.load_blob(path, expected_kind="stream-checkpoint")
        sess_meta = meta["session"]
        session = cls(
            encoder,
            k=sess_meta["k"],
            snapshot_len=sess_meta["snapshot_len"],
        )
        session.model = oselm.OnlineElm.from_state(
            meta["oselm"],
            {k.split(".", 1)[1]: v for k, v in arrays.items() if k.startswith("oselm.")},
        )
        st = meta["stats"]
        session.stats = anomaly.DeviationStats(n=st["n"], mean=st["mean"], m2=st["m2"])
        session.threshold = sess_meta["threshold"]
        session.index = sess_meta["index"]
        session.malformed = sess_meta["malformed"]
        if "pending_codes" in arrays:
            session._pending = list(
                zip(arrays["pending_indices"].tolist(), arrays["pending_codes"])
            )
        return session


def pump(lines, session: StreamSession, write, checkpoint: Path | None = None) -> int:
    """Drives a session from an iterable of text lines; returns frames accepted.

    Writes the CSV header first, one record line per accepted frame after.
    Checkpoints on exhaustion/disconnect when a path is given.
    """
    write(RECORD_HEADER)
    try:
        for line in lines:
            for record in session.process_line(line):
                write(record.to_csv())
    finally:
        if checkpoint is not None:
            session.save_checkpoint(checkpoint)
            log.info("session state checkpointed to %s", checkpoint)
    return session.index


def serve_stdin(session: StreamSession, checkpoint: Path | None = None) -> int:
    out = sys.stdout
    return pump(
        sys.stdin,
        session,
        lambda text: (out.write(text + "\n"), out.flush()),
        checkpoint,
    )


def serve_tcp(
    host: str,
    port: int,
    session_factory,
    checkpoint: Path | None = None,
    max_connections: int | None = None,
    on_bound=None,
) -> None:
    """Accepts connections sequentially; each gets a fresh session.

    Frames arrive as lines on the socket and record lines go back on it.
    With a checkpoint path, connection n is saved to <checkpoint>-<n>.
    """
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(1)
        bound = server.getsockname()
        log.info("listening on %s:%d", bound[0], bound[1])
        if on_bound is not None:
            on_bound(bound)
        served = 0
        while max_connections is None or served < max_connections:
            conn, addr = server.accept()
            served += 1
            log.info("connection %d from %s", served, addr)
            ckpt = None
            if checkpoint is not None:
                ckpt = Path(f"{checkpoint}-{served}")
            with conn, conn.makefile("r") as reader, conn.makefile("w") as writer:
                session = session_factory()
                pump(
                    reader,
                    session,
                    lambda text: (writer.write(text + "\n"), writer.flush()),
                    ckpt,
                )

"""Sequence-level evaluation: per-component PSNR / MS-SSIM means, CSV
reports, and BD-rate summaries built from lossy vs. enhanced curves.

Bitrates are external inputs from the encoder logs in the manifest; the
post-processor never changes them, so anchor and test curves share the same
rate points and differ only in quality.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .metrics import RdCurve, RdPoint, bd_rate, ms_ssim, msssim_to_db, psnr
from .model import HVPPNet, enhance_frame
from .yuv import ManifestError, Yuv420Frame, YuvSequence

__all__ = [
    "EvalEntry",
    "EvalRow",
    "read_eval_manifest",
    "evaluate_sequences",
    "write_report_csv",
    "write_bdrate_csv",
    "model_enhancer",
    "read_rd_csv",
]

COMPONENTS = ("Y", "U", "V")
REPORT_HEADER = [
    "sequence",
    "qp",
    "component",
    "psnr_lossy",
    "psnr_enhanced",
    "msssim_lossy",
    "msssim_enhanced",
]
BDRATE_HEADER = ["component", "bd_rate_psnr_percent", "bd_rate_msssim_percent"]

Enhancer = Callable[[Yuv420Frame, int], Yuv420Frame]


@dataclass
class EvalEntry:
    """One manifest record: a decoded sequence, its source, QP, and bitrate."""

    lossy: YuvSequence
    lossless: YuvSequence
    qp: int
    bitrate_kbps: float

    @property
    def sequence_id(self) -> str:
        return Path(self.lossless.path).stem


@dataclass
class EvalRow:
    """Per-(sequence, QP, component) metric means across frames."""

    sequence: str
    qp: int
    component: str
    psnr_lossy: float
    psnr_enhanced: float
    msssim_lossy: float
    msssim_enhanced: float

    @property
    def psnr_delta(self) -> float:
        return self.psnr_enhanced - self.psnr_lossy

    @property
    def msssim_delta(self) -> float:
        return self.msssim_enhanced - self.msssim_lossy


def read_eval_manifest(path: str | os.PathLike) -> list[EvalEntry]:
    """Parse an evaluation manifest.

    One record per line:
    ``<lossy_path> <lossless_path> <width> <height> <qp> <bitrate_kbps>``.
    Relative paths resolve against the manifest's directory.
    """
    base = Path(path).resolve().parent
    entries: list[EvalEntry] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(" ")
            if len(fields) == 5:
                raise ManifestError(line_no, "missing bitrate field (expected 6 fields)")
            if len(fields) != 6:
                raise ManifestError(line_no, f"expected 6 fields, got {len(fields)}")
            lossy_path, lossless_path, w_s, h_s, qp_s, rate_s = fields
            try:
                w, h, qp = int(w_s), int(h_s), int(qp_s)
                bitrate = float(rate_s)
            except ValueError as exc:
                raise ManifestError(line_no, f"bad numeric field: {exc}") from exc
            if bitrate <= 0:
                raise ManifestError(line_no, f"bitrate must be positive, got {bitrate}")
            try:
                entry = EvalEntry(
                    lossy=YuvSequence(base / lossy_path, w, h),
                    lossless=YuvSequence(base / lossless_path, w, h),
                    qp=qp,
                    bitrate_kbps=bitrate,
                )
            except OSError as exc:
                raise ManifestError(line_no, str(exc)) from exc
            entries.append(entry)
    return entries


def model_enhancer(model: HVPPNet) -> Enhancer:
    """Wrap a model as the enhancer callable evaluate_sequences expects."""

    def enhance(frame: Yuv420Frame, qp: int) -> Yuv420Frame:
        return enhance_frame(frame, qp, model)

    return enhance


def _planes(frame: Yuv420Frame) -> dict[str, np.ndarray]:
    return {"Y": frame.y, "U": frame.u, "V": frame.v}


def _entry_metrics(entry: EvalEntry, enhance: Enhancer) -> list[EvalRow]:
    sums: dict[str, list[float]] = {c: [0.0, 0.0, 0.0, 0.0] for c in COMPONENTS}
    n = len(entry.lossy)
    if n == 0:
        raise ValueError(f"empty sequence: {entry.lossy.path}")
    for i in range(n):
        lossy = entry.lossy.read_frame(i)
        lossless = entry.lossless.read_frame(i)
        enhanced = enhance(lossy, entry.qp)
        ref, deg, enh = _planes(lossless), _planes(lossy), _planes(enhanced)
        for c in COMPONENTS:
            sums[c][0] += psnr(ref[c], deg[c])
            sums[c][1] += psnr(ref[c], enh[c])
            sums[c][2] += ms_ssim(ref[c], deg[c])
            sums[c][3] += ms_ssim(ref[c], enh[c])
    return [
        EvalRow(
            sequence=entry.sequence_id,
            qp=entry.qp,
            component=c,
            psnr_lossy=sums[c][0] / n,
            psnr_enhanced=sums[c][1] / n,
            msssim_lossy=sums[c][2] / n,
            msssim_enhanced=sums[c][3] / n,
        )
        for c in COMPONENTS
    ]


def evaluate_sequences(
    entries: list[EvalEntry],
    enhance: Enhancer,
) -> tuple[list[EvalRow], dict[str, float], dict[str, float]]:
    """Evaluate every manifest entry and summarize BD-rates per component.

    Returns (report rows in manifest order, BD-rate on PSNR per component,
    BD-rate on MS-SSIM-dB per component). BD-rates average over sequences;
    every sequence needs entries at >= 4 QPs with distinct bitrates.
    """
    if not entries:
        raise ValueError("no evaluation entries")
    rows: list[EvalRow] = []
    by_sequence: dict[str, list[tuple[EvalEntry, list[EvalRow]]]] = {}
    for entry in entries:
        entry_rows = _entry_metrics(entry, enhance)
        rows.extend(entry_rows)
        by_sequence.setdefault(entry.sequence_id, []).append((entry, entry_rows))

    bd_psnr: dict[str, list[float]] = {c: [] for c in COMPONENTS}
    bd_msssim: dict[str, list[float]] = {c: [] for c in COMPONENTS}
    for seq_id, items in by_sequence.items():
        items = sorted(items, key=lambda pair: pair[0].bitrate_kbps)
        for c_index, c in enumerate(COMPONENTS):
            anchor_psnr = [
                RdPoint(e.bitrate_kbps, rws[c_index].psnr_lossy) for e, rws in items
            ]
            test_psnr = [
                RdPoint(e.bitrate_kbps, rws[c_index].psnr_enhanced) for e, rws in items
            ]
            anchor_ms = [
                RdPoint(e.bitrate_kbps, msssim_to_db(rws[c_index].msssim_lossy))
                for e, rws in items
            ]
            test_ms = [
                RdPoint(e.bitrate_kbps, msssim_to_db(rws[c_index].msssim_enhanced))
                for e, rws in items
            ]
            bd_psnr[c].append(
                bd_rate(RdCurve(anchor_psnr, f"{seq_id}-{c}-lossy"), RdCurve(test_psnr, f"{seq_id}-{c}-enhanced"))
            )
            bd_msssim[c].append(
                bd_rate(RdCurve(anchor_ms, f"{seq_id}-{c}-lossy"), RdCurve(test_ms, f"{seq_id}-{c}-enhanced"))
            )

    mean_psnr = {c: float(np.mean(vals)) for c, vals in bd_psnr.items()}
    mean_msssim = {c: float(np.mean(vals)) for c, vals in bd_msssim.items()}
    return rows, mean_psnr, mean_msssim


def write_report_csv(rows: list[EvalRow], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.sequence,
                    row.qp,
                    row.component,
                    repr(row.psnr_lossy),
                    repr(row.psnr_enhanced),
                    repr(row.msssim_lossy),
                    repr(row.msssim_enhanced),
                ]
            )


def write_bdrate_csv(bd_psnr: dict[str, float], bd_msssim: dict[str, float], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(BDRATE_HEADER)
        for c in COMPONENTS:
            writer.writerow([c, repr(bd_psnr[c]), repr(bd_msssim[c])])


def read_rd_csv(path: str, label: str = "") -> RdCurve:
    """Read a rate-distortion CSV with header ``bitrate,quality``."""
    points: list[RdPoint] = []
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["bitrate", "quality"]:
            raise ValueError(f"{path}: expected header 'bitrate,quality', got {header}")
        for fields in reader:
            if not fields:
                continue
            if len(fields) != 2:
                raise ValueError(f"{path}: expected 2 columns, got {fields}")
            points.append(RdPoint(float(fields[0]), float(fields[1])))
    points.sort(key=lambda p: p.bitrate)
    return RdCurve(points, label or Path(path).stem)

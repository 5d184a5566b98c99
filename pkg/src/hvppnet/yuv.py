"""Raw planar YUV 4:2:0 I/O, chroma format conversion, QP conditioning
planes, and aligned patch sampling from lossy/lossless sequence pairs.

The on-disk layout is headerless frame-sequential 8-bit planar YUV: for each
frame the full-resolution Y plane, then the quarter-resolution U and V
planes, row-major, no padding. Dimensions always come from the caller (CLI
flags or manifest fields), never from the file.

Working-precision frames use float32 in [0, 1]; storage is 8-bit. Chroma
upsampling is nearest-neighbour replication and downsampling is the 2x2
mean, so a 4:2:0 -> 4:4:4 -> 4:2:0 round trip is exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Yuv420Frame",
    "Frame444",
    "QpPlane",
    "PatchPair",
    "YuvSequence",
    "TrainingPair",
    "ManifestError",
    "read_yuv420",
    "write_yuv420",
    "upsample_420_to_444",
    "downsample_444_to_420",
    "make_qp_plane",
    "sample_patch_pair",
    "read_train_manifest",
]

QP_MAX = 63


class ManifestError(ValueError):
    """Malformed dataset manifest line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"manifest line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class Yuv420Frame:
    """One 8-bit planar 4:2:0 frame.

    ``y`` is (H, W) uint8; ``u`` and ``v`` are (H/2, W/2) uint8. Width and
    height must be even.
    """

    y: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name, plane in (("y", self.y), ("u", self.u), ("v", self.v)):
            if not isinstance(plane, np.ndarray) or plane.ndim != 2 or plane.dtype != np.uint8:
                raise ValueError(f"{name} plane must be a 2-D uint8 array")
        h, w = self.y.shape
        if h % 2 or w % 2:
            raise ValueError(f"frame dimensions must be even, got {w}x{h}")
        if self.u.shape != (h // 2, w // 2) or self.v.shape != (h // 2, w // 2):
            raise ValueError(
                f"chroma planes must be quarter-area: expected {(h // 2, w // 2)}, "
                f"got u={self.u.shape}, v={self.v.shape}"
            )

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    @property
    def nbytes(self) -> int:
        return self.width * self.height * 3 // 2


@dataclass
class Frame444:
    """Full-resolution YUV frame, float32 in [0, 1].

    ``planes`` is channel-first (3, H, W) in Y, U, V order.
    """

    planes: np.ndarray

    def __post_init__(self):
        p = self.planes
        if not isinstance(p, np.ndarray) or p.ndim != 3 or p.shape[0] != 3:
            raise ValueError(f"planes must be a (3, H, W) array, got shape {getattr(p, 'shape', None)}")
        if p.dtype != np.float32:
            raise ValueError(f"planes must be float32, got {p.dtype}")
        if p.size and (p.min() < 0.0 or p.max() > 1.0):
            raise ValueError("plane values must lie in [0, 1]")

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    def crop(self, x: int, y: int, size: int) -> "Frame444":
        if x < 0 or y < 0 or x + size > self.width or y + size > self.height:
            raise ValueError(f"crop ({x},{y})+{size} exceeds {self.width}x{self.height} frame")
        return Frame444(self.planes[:, y : y + size, x : x + size].copy())


@dataclass
class QpPlane:
    """Constant conditioning plane holding qp/63 at every position."""

    qp: int
    plane: np.ndarray

    def __post_init__(self):
        if not (0 <= self.qp <= QP_MAX):
            raise ValueError(f"qp must be in [0, {QP_MAX}], got {self.qp}")


@dataclass
class PatchPair:
    """Aligned lossy/lossless training crops with their QP and provenance."""

    lossy: Frame444
    lossless: Frame444
    qp: int
    source_id: str
    offset: tuple[int, int]


def _frame_bytes(width: int, height: int) -> int:
    return width * height * 3 // 2


def read_yuv420(path: str | os.PathLike, width: int, height: int, frame_index: int) -> Yuv420Frame:
    """Read one frame from a raw planar 4:2:0 file.

    Raises IndexError if the file is too short for ``frame_index`` and
    ValueError for odd dimensions.
    """
    if width % 2 or height % 2:
        raise ValueError(f"frame dimensions must be even, got {width}x{height}")
    if frame_index < 0:
        raise IndexError(f"frame index must be non-negative, got {frame_index}")
    nbytes = _frame_bytes(width, height)
    file_size = os.path.getsize(path)
    if file_size < (frame_index + 1) * nbytes:
        raise IndexError(
            f"frame {frame_index} out of range: {path} holds {file_size // nbytes} "
            f"frame(s) of {width}x{height}"
        )
    with open(path, "rb") as f:
        f.seek(frame_index * nbytes)
        buf = f.read(nbytes)
    luma = width * height
    chroma = luma // 4
    y = np.frombuffer(buf, np.uint8, count=luma).reshape(height, width)
    u = np.frombuffer(buf, np.uint8, count=chroma, offset=luma).reshape(height // 2, width // 2)
    v = np.frombuffer(buf, np.uint8, count=chroma, offset=luma + chroma).reshape(height // 2, width // 2)
    return Yuv420Frame(y.copy(), u.copy(), v.copy())


def write_yuv420(frame: Yuv420Frame, path: str | os.PathLike, append: bool = False) -> None:
    """Write (or append) one frame in the layout read_yuv420 expects."""
    mode = "ab" if append else "wb"
    with open(path, mode) as f:
        f.write(frame.y.tobytes())
        f.write(frame.u.tobytes())
        f.write(frame.v.tobytes())


def upsample_420_to_444(frame: Yuv420Frame) -> Frame444:
    """4:2:0 -> 4:4:4 by nearest-neighbour chroma replication, scaled to [0, 1]."""
    y = frame.y.astype(np.float32) / 255.0
    u = np.repeat(np.repeat(frame.u, 2, axis=0), 2, axis=1).astype(np.float32) / 255.0
    v = np.repeat(np.repeat(frame.v, 2, axis=0), 2, axis=1).astype(np.float32) / 255.0
    return Frame444(np.stack([y, u, v], axis=0))


def _to_uint8(plane: np.ndarray) -> np.ndarray:
    # round-half-up in the 8-bit domain, then clamp
    scaled = np.floor(plane.astype(np.float64) * 255.0 + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def downsample_444_to_420(frame: Frame444 | np.ndarray) -> Yuv420Frame:
    """4:4:4 -> 4:2:0: 2x2-mean chroma, x255 with round-half-up and clamp.

    Accepts a Frame444 or a raw (3, H, W) array; raw values outside [0, 1]
    (possible straight out of the network) clamp to the 8-bit range.
    """
    planes = frame.planes if isinstance(frame, Frame444) else np.asarray(frame)
    if planes.ndim != 3 or planes.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) planes, got shape {planes.shape}")
    h, w = planes.shape[1], planes.shape[2]
    if h % 2 or w % 2:
        raise ValueError(f"frame dimensions must be even, got {w}x{h}")
    y = _to_uint8(planes[0])
    u = _to_uint8(planes[1].astype(np.float64).reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3)))
    v = _to_uint8(planes[2].astype(np.float64).reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3)))
    return Yuv420Frame(y, u, v)


def make_qp_plane(qp: int, width: int, height: int) -> QpPlane:
    """Constant plane of qp/63, the network's quantization conditioning input."""
    if not (0 <= qp <= QP_MAX):
        raise ValueError(f"qp must be in [0, {QP_MAX}], got {qp}")
    plane = np.full((height, width), np.float32(qp) / np.float32(QP_MAX), dtype=np.float32)
    return QpPlane(qp, plane)


class YuvSequence:
    """Frame source over one raw 4:2:0 file; frame count derives from file size."""

    def __init__(self, path: str | os.PathLike, width: int, height: int):
        if width % 2 or height % 2:
            raise ValueError(f"frame dimensions must be even, got {width}x{height}")
        self.path = str(path)
        self.width = width
        self.height = height
        self.frame_count = os.path.getsize(path) // _frame_bytes(width, height)

    def __len__(self) -> int:
        return self.frame_count

    def read_frame(self, index: int) -> Yuv420Frame:
        return read_yuv420(self.path, self.width, self.height, index)


def sample_patch_pair(
    lossy_seq: YuvSequence,
    lossless_seq: YuvSequence,
    qp: int,
    size: int,
    rng: np.random.Generator,
) -> PatchPair:
    """Draw one aligned training crop from a lossy/lossless sequence pair.

    The same frame index and crop offset apply to both sequences after
    4:2:0 -> 4:4:4 conversion; offsets are uniform over the valid range and
    the draw is deterministic given the generator state (order: frame, x, y).
    """
    if (lossy_seq.width, lossy_seq.height) != (lossless_seq.width, lossless_seq.height):
        raise ValueError(
            f"sequence dimensions differ: {lossy_seq.width}x{lossy_seq.height} vs "
            f"{lossless_seq.width}x{lossless_seq.height}"
        )
    if len(lossy_seq) != len(lossless_seq):
        raise ValueError(f"sequence frame counts differ: {len(lossy_seq)} vs {len(lossless_seq)}")
    if len(lossy_seq) == 0:
        raise ValueError(f"empty sequence: {lossy_seq.path}")
    w, h = lossy_seq.width, lossy_seq.height
    if size > min(w, h):
        raise ValueError(f"patch size {size} exceeds frame size {w}x{h}")

    frame_index = int(rng.integers(len(lossy_seq)))
    ox = int(rng.integers(w - size + 1))
    oy = int(rng.integers(h - size + 1))

    lossy = upsample_420_to_444(lossy_seq.read_frame(frame_index)).crop(ox, oy, size)
    lossless = upsample_420_to_444(lossless_seq.read_frame(frame_index)).crop(ox, oy, size)
    return PatchPair(lossy, lossless, qp, source_id=lossy_seq.path, offset=(ox, oy))


@dataclass
class TrainingPair:
    """One manifest record: a decoded lossy sequence, its source, and the QP."""

    lossy: YuvSequence
    lossless: YuvSequence
    qp: int


def read_train_manifest(path: str | os.PathLike) -> list[TrainingPair]:
    """Parse a training manifest.

    One record per line: ``<lossy_path> <lossless_path> <width> <height> <qp>``,
    single-space separated. Relative paths resolve against the manifest's
    directory. Blank lines are ignored.
    """
    base = Path(path).resolve().parent
    pairs: list[TrainingPair] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(" ")
            if len(fields) != 5:
                raise ManifestError(line_no, f"expected 5 fields, got {len(fields)}")
            lossy_path, lossless_path, w_s, h_s, qp_s = fields
            try:
                w, h, qp = int(w_s), int(h_s), int(qp_s)
            except ValueError as exc:
                raise ManifestError(line_no, f"bad integer field: {exc}") from exc
            if not (0 <= qp <= QP_MAX):
                raise ManifestError(line_no, f"qp {qp} out of range [0, {QP_MAX}]")
            try:
                lossy = YuvSequence(base / lossy_path, w, h)
                lossless = YuvSequence(base / lossless_path, w, h)
            except OSError as exc:
                raise ManifestError(line_no, str(exc)) from exc
            if len(lossy) != len(lossless):
                raise ManifestError(
                    line_no, f"frame counts differ: {len(lossy)} vs {len(lossless)}"
                )
            pairs.append(TrainingPair(lossy, lossless, qp))
    return pairs

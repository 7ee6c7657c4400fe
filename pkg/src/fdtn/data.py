"""Synthetic sequence generators, digit ingestion, and serialization.

Every generator derives one rng per sequence from (dataset seed, index)
with the portable splitmix64 stream, so datasets regenerate bit-identically
regardless of platform or generation order.

Coordinates: pixel (row j, col i) covers the unit square with center
(i + 0.5, j + 0.5); a width-W frame spans [0, W].
"""

import os
import string
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .gridfft import RealGrid
from .rng import SplitMix64, sub_seed

__all__ = [
    "SequenceDataset",
    "MotionState",
    "gen_morse",
    "gen_bouncing_ball",
    "gen_moving_digit",
    "builtin_glyphs",
    "load_idx",
    "export_frames",
    "load_pgm",
    "load_csv_frame",
    "save_dataset",
    "load_dataset",
    "morse_pattern",
    "MORSE_SYMBOLS",
]

_RNG_NAME = "splitmix64"


@dataclass
class SequenceDataset:
    """N sequences of T frames each, plus the recipe that made them."""

    sequences: np.ndarray
    split: str
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sequences = np.asarray(self.sequences, dtype=np.float32)
        if self.sequences.ndim != 4:
            raise ValueError("sequences must be (count, frames, height, width)")
        if self.sequences.shape[1] < 2:
            raise ValueError("sequences need at least two frames")
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")

    @property
    def count(self) -> int:
        return self.sequences.shape[0]

    @property
    def frames(self) -> int:
        return self.sequences.shape[1]

    def grid(self, i: int, t: int) -> RealGrid:
        f = self.sequences[i, t]
        return RealGrid(f.shape[1], f.shape[0], f.astype(np.float64))


@dataclass
class MotionState:
    """Object pose between frames, sub-pixel precise."""

    position: np.ndarray
    velocity: np.ndarray


# ---------------------------------------------------------------------------
# shared motion: advance with specular wall reflection


def _advance(pos: float, vel: float, lo: float, hi: float):
    """One step along one axis; returns (pos, vel, bounced)."""
    if lo > hi:
        raise ValueError("object does not fit between the walls")
    p = pos + vel
    v = vel
    bounced = False
    while p < lo or p > hi:
        if p < lo:
            p = 2.0 * lo - p
        else:
            p = 2.0 * hi - p
        v = -v
        bounced = True
    return p, v, bounced


def _signed_speed(rng: SplitMix64, lo: float, hi: float) -> float:
    s = lo + (hi - lo) * rng.uniform()
    return -s if rng.uniform() < 0.5 else s


# ---------------------------------------------------------------------------
# Morse sequences (1-D, periodic motion)

_MORSE_CODE = {
    "A": ".-", "B": "-...", "C": "-.-.", "D": "-..", "E": ".", "F": "..-.",
    "G": "--.", "H": "....", "I": "..", "J": ".---", "K": "-.-", "L": ".-..",
    "M": "--", "N": "-.", "O": "---", "P": ".--.", "Q": "--.-", "R": ".-.",
    "S": "...", "T": "-", "U": "..-", "V": "...-", "W": ".--", "X": "-..-",
    "Y": "-.--", "Z": "--..",
    "0": "-----", "1": ".----", "2": "..---", "3": "...--", "4": "....-",
    "5": ".....", "6": "-....", "7": "--...", "8": "---..", "9": "----.",
}

MORSE_SYMBOLS = tuple(string.ascii_uppercase + string.digits)


def morse_pattern(symbol: str) -> np.ndarray:
    """Binary rendering: dot = 1 px, dash = 3 px, 1 px gap between elements."""
    code = _MORSE_CODE[symbol]
    parts = [[1.0] if el == "." else [1.0, 1.0, 1.0] for el in code]
    out = []
    for i, p in enumerate(parts):
        if i:
            out.append(0.0)
        out.extend(p)
    return np.array(out)


_LONGEST_PATTERN = max(len(morse_pattern(s)) for s in MORSE_SYMBOLS)


def gen_morse(
    count: int,
    length: int = 32,
    velocity_range=(-3, 3),
    noise_sigma: float = 0.1,
    seed: int = 0,
    frames: int = 20,
    seed_count: int = 2,
    split: str = "train",
) -> SequenceDataset:
    """Random Morse symbols drifting at constant integer velocity with wrap.

    Gaussian noise (clamped to [0, 1]) corrupts only the first seed_count
    frames; the prediction targets stay clean.
    """
    if length < _LONGEST_PATTERN:
        raise ValueError(
            f"length {length} cannot hold the widest pattern ({_LONGEST_PATTERN} px)"
        )
    vlo, vhi = int(velocity_range[0]), int(velocity_range[1])
    if vlo > vhi:
        raise ValueError("empty velocity range")
    seqs = np.zeros((count, frames, 1, length), dtype=np.float32)
    for i in range(count):
        rng = SplitMix64(sub_seed(seed, i))
        pat = morse_pattern(MORSE_SYMBOLS[rng.randint(0, 35)])
        start = rng.randint(0, length - 1)
        vel = rng.randint(vlo, vhi)
        base = np.zeros(length)
        base[(start + np.arange(len(pat))) % length] = pat
        for t in range(frames):
            seqs[i, t, 0] = np.roll(base, vel * t)
        if noise_sigma > 0:
            for t in range(seed_count):
                noisy = seqs[i, t, 0] + noise_sigma * rng.gauss_array(length)
                seqs[i, t, 0] = np.clip(noisy, 0.0, 1.0)
    desc = {
        "generator": "morse",
        "count": str(count),
        "frames": str(frames),
        "length": str(length),
        "seed_count": str(seed_count),
        "velocity_lo": str(vlo),
        "velocity_hi": str(vhi),
        "noise_sigma": repr(float(noise_sigma)),
        "seed": str(seed),
        "split": split,
        "rng": _RNG_NAME,
    }
    return SequenceDataset(seqs, split, desc)


# ---------------------------------------------------------------------------
# bouncing ball (2-D, anti-aliased disc, specular walls)


def _render_disc(width: int, height: int, cx: float, cy: float, radius: float):
    x = np.arange(width) + 0.5
    y = np.arange(height) + 0.5
    dist = np.hypot(x[None, :] - cx, y[:, None] - cy)
    return np.clip(radius + 0.5 - dist, 0.0, 1.0)


def _ball_motion(seed: int, index: int, frames, width, height, radius_range, speed_range):
    """Trajectory for one sequence: (radius, positions, velocities, bounced)."""
    rng = SplitMix64(sub_seed(seed, index))
    radius = radius_range[0] + (radius_range[1] - radius_range[0]) * rng.uniform()
    lox, hix = radius, width - radius
    loy, hiy = radius, height - radius
    px = lox + (hix - lox) * rng.uniform()
    py = loy + (hiy - loy) * rng.uniform()
    vx = _signed_speed(rng, *speed_range)
    vy = _signed_speed(rng, *speed_range)
    positions = np.zeros((frames, 2))
    velocities = np.zeros((frames, 2))
    bounced = np.zeros(frames, dtype=bool)
    for t in range(frames):
        positions[t] = (px, py)
        velocities[t] = (vx, vy)
        if t + 1 < frames:
            px, vx, bx = _advance(px, vx, lox, hix)
            py, vy, by = _advance(py, vy, loy, hiy)
            bounced[t + 1] = bx or by
    return radius, positions, velocities, bounced


def gen_bouncing_ball(
    count: int,
    frames: int = 10,
    width: int = 40,
    height: int = 40,
    radius_range=(3.0, 5.0),
    speed_range=(0.5, 2.5),
    seed: int = 0,
    split: str = "train",
) -> SequenceDataset:
    """One anti-aliased disc per sequence, reflecting off the frame walls."""
    rlo, rhi = float(radius_range[0]), float(radius_range[1])
    if rlo <= 0 or rlo > rhi:
        raise ValueError("radius range must be positive and ordered")
    if 2 * rhi >= min(width, height):
        raise ValueError("disc cannot fit between opposite walls")
    slo, shi = float(speed_range[0]), float(speed_range[1])
    if slo < 0 or slo > shi:
        raise ValueError("speed range must be non-negative and ordered")
    seqs = np.zeros((count, frames, height, width), dtype=np.float32)
    for i in range(count):
        radius, positions, _, _ = _ball_motion(
            seed, i, frames, width, height, (rlo, rhi), (slo, shi)
        )
        for t in range(frames):
            seqs[i, t] = _render_disc(width, height, *positions[t], radius)
    desc = {
        "generator": "bouncing_ball",
        "count": str(count),
        "frames": str(frames),
        "width": str(width),
        "height": str(height),
        "radius_lo": repr(rlo),
        "radius_hi": repr(rhi),
        "speed_lo": repr(slo),
        "speed_hi": repr(shi),
        "seed": str(seed),
        "split": split,
        "rng": _RNG_NAME,
    }
    return SequenceDataset(seqs, split, desc)


# ---------------------------------------------------------------------------
# moving digit (2-D, bilinear sub-pixel placement, same wall model)

_SEGMENTS = {
    "a": ((8, 4), (20, 4)),
    "b": ((20, 4), (20, 14)),
    "c": ((20, 14), (20, 24)),
    "d": ((8, 24), (20, 24)),
    "e": ((8, 14), (8, 24)),
    "f": ((8, 4), (8, 14)),
    "g": ((8, 14), (20, 14)),
}

_DIGIT_SEGMENTS = (
    "abcdef", "bc", "abged", "abgcd", "fgbc",
    "afgcd", "afgecd", "abc", "abcdefg", "abcdfg",
)


def _segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / L2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def builtin_glyphs() -> np.ndarray:
    """Ten procedurally drawn 28x28 seven-segment digits in [0, 1]."""
    x = np.arange(28) + 0.5
    px = np.broadcast_to(x[None, :], (28, 28))
    py = np.broadcast_to(x[:, None], (28, 28))
    out = np.zeros((10, 28, 28))
    for d, segs in enumerate(_DIGIT_SEGMENTS):
        acc = np.zeros((28, 28))
        for s in segs:
            dist = _segment_distance(px, py, *_SEGMENTS[s])
            acc = np.maximum(acc, np.clip(2.0 - dist, 0.0, 1.0))
        out[d] = acc
    return out


def _place_bilinear(canvas: np.ndarray, glyph: np.ndarray, ox: float, oy: float):
    gh, gw = glyph.shape
    ix, iy = int(np.floor(ox)), int(np.floor(oy))
    fx, fy = ox - ix, oy - iy
    for sy, wy in ((0, 1.0 - fy), (1, fy)):
        if wy == 0.0:
            continue
        for sx, wx in ((0, 1.0 - fx), (1, fx)):
            if wx == 0.0:
                continue
            canvas[iy + sy : iy + sy + gh, ix + sx : ix + sx + gw] += wy * wx * glyph


def _digit_motion(seed, index, frames, width, height, glyph_count, glyph_shape, speed_range):
    rng = SplitMix64(sub_seed(seed, index))
    gidx = rng.randint(0, glyph_count - 1)
    gh, gw = glyph_shape
    hix, hiy = width - gw, height - gh
    ox = hix * rng.uniform()
    oy = hiy * rng.uniform()
    vx = _signed_speed(rng, *speed_range)
    vy = _signed_speed(rng, *speed_range)
    positions = np.zeros((frames, 2))
    bounced = np.zeros(frames, dtype=bool)
    for t in range(frames):
        positions[t] = (ox, oy)
        if t + 1 < frames:
            ox, vx, bx = _advance(ox, vx, 0.0, hix)
            oy, vy, by = _advance(oy, vy, 0.0, hiy)
            bounced[t + 1] = bx or by
    return gidx, positions, bounced


def gen_moving_digit(
    count: int,
    frames: int = 10,
    width: int = 40,
    height: int = 40,
    glyphs=None,
    speed_range=(0.5, 2.5),
    seed: int = 0,
    split: str = "train",
) -> SequenceDataset:
    """One glyph per sequence, moving with sub-pixel velocity and bouncing."""
    source = "builtin"
    if glyphs is None:
        glyphs = builtin_glyphs()
    else:
        glyphs = np.asarray(glyphs, dtype=np.float64)
        source = f"external:{len(glyphs)}"
    if len(glyphs) == 0:
        raise ValueError("digit source is empty")
    gh, gw = glyphs.shape[1], glyphs.shape[2]
    if gw > width or gh > height:
        raise ValueError("glyphs larger than the frame")
    slo, shi = float(speed_range[0]), float(speed_range[1])
    if slo < 0 or slo > shi:
        raise ValueError("speed range must be non-negative and ordered")
    seqs = np.zeros((count, frames, height, width), dtype=np.float32)
    for i in range(count):
        gidx, positions, _ = _digit_motion(
            seed, i, frames, width, height, len(glyphs), (gh, gw), (slo, shi)
        )
        for t in range(frames):
            canvas = np.zeros((height, width))
            _place_bilinear(canvas, glyphs[gidx], *positions[t])
            seqs[i, t] = canvas
    desc = {
        "generator": "moving_digit",
        "count": str(count),
        "frames": str(frames),
        "width": str(width),
        "height": str(height),
        "glyphs": source,
        "speed_lo": repr(slo),
        "speed_hi": repr(shi),
        "seed": str(seed),
        "split": split,
        "rng": _RNG_NAME,
    }
    return SequenceDataset(seqs, split, desc)


# ---------------------------------------------------------------------------
# IDX ingestion

_IDX_IMAGES = 0x00000803
_IDX_LABELS = 0x00000801


def load_idx(path) -> np.ndarray:
    """Big-endian IDX image file -> (count, rows, cols) floats in [0, 1]."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise ValueError("truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", blob[:16])
    if magic == _IDX_LABELS:
        raise ValueError("this is an IDX labels file, expected images")
    if magic != _IDX_IMAGES:
        raise ValueError(f"bad IDX magic 0x{magic:08x}")
    need = count * rows * cols
    if len(blob) - 16 != need:
        raise ValueError(f"IDX payload is {len(blob) - 16} bytes, expected {need}")
    if (rows, cols) != (28, 28):
        warnings.warn(f"IDX glyphs are {rows}x{cols}, not 28x28", stacklevel=2)
    data = np.frombuffer(blob, dtype=np.uint8, offset=16)
    return data.reshape(count, rows, cols).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# frame export / import


def _coerce_frames(sequence) -> np.ndarray:
    if isinstance(sequence, np.ndarray):
        arr = sequence.astype(np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        return arr
    return np.stack([np.asarray(f.values, dtype=np.float64) for f in sequence])


def export_frames(sequence, directory, fmt: str = "pgm"):
    """Write one file per frame; returns the paths written."""
    if fmt not in ("pgm", "csv"):
        raise ValueError(f"format must be pgm or csv, got {fmt!r}")
    arr = _coerce_frames(sequence)
    os.makedirs(directory, exist_ok=True)
    paths = []
    for t, frame in enumerate(arr):
        path = os.path.join(directory, f"frame_{t:04d}.{fmt}")
        if fmt == "pgm":
            h, w = frame.shape
            quant = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
            with open(path, "wb") as f:
                f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
                f.write(quant.tobytes())
        else:
            with open(path, "w") as f:
                for row in frame:
                    f.write(",".join(f"{v:.17g}" for v in row) + "\n")
        paths.append(path)
    return paths


def load_pgm(path) -> np.ndarray:
    """Binary P5 reader; returns floats in [0, 1]."""
    with open(path, "rb") as f:
        blob = f.read()
    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(blob):
        if blob[i : i + 1].isspace():
            i += 1
        elif blob[i : i + 1] == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
        else:
            j = i
            while j < len(blob) and not blob[j : j + 1].isspace():
                j += 1
            tokens.append(blob[i:j])
            i = j
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.frombuffer(blob, dtype=np.uint8, offset=i + 1, count=w * h)
    if data.size != w * h:
        raise ValueError("truncated PGM payload")
    return data.reshape(h, w).astype(np.float64) / float(maxval)


def load_csv_frame(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))


# ---------------------------------------------------------------------------
# dataset container: little-endian header, then f32 frames, sequence-major

_DATASET_VERSION = 1


def save_dataset(ds: SequenceDataset, path):
    name = ds.descriptor.get("generator", "unknown").encode("utf-8")
    desc = "\n".join(f"{k}={v}" for k, v in ds.descriptor.items()).encode("utf-8")
    n, t, h, w = ds.sequences.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<I", _DATASET_VERSION))
        f.write(struct.pack("<I", len(name)))
        f.write(name)
        f.write(struct.pack("<I", len(desc)))
        f.write(desc)
        f.write(struct.pack("<IIII", n, t, w, h))
        f.write(ds.sequences.astype("<f4").tobytes())


def load_dataset(path) -> SequenceDataset:
    with open(path, "rb") as f:
        blob = f.read()

    def take(fmt, off):
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise ValueError("truncated dataset file")
        return struct.unpack_from(fmt, blob, off), off + size

    (version,), off = take("<I", 0)
    if version != _DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    (name_len,), off = take("<I", off)
    off += name_len
    (desc_len,), off = take("<I", off)
    if off + desc_len > len(blob):
        raise ValueError("truncated dataset file")
    desc_text = blob[off : off + desc_len].decode("utf-8")
    off += desc_len
    (n, t, w, h), off = take("<IIII", off)
    need = n * t * w * h * 4
    if len(blob) - off != need:
        raise ValueError(f"dataset payload is {len(blob) - off} bytes, expected {need}")
    seqs = np.frombuffer(blob, dtype="<f4", offset=off).reshape(n, t, h, w)
    descriptor = {}
    for line in desc_text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            descriptor[k] = v
    return SequenceDataset(seqs.copy(), descriptor.get("split", "train"), descriptor)

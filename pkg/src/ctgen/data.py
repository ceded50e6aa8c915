"""Image ingestion, preprocessing, batching, and sample-grid output.

Supported inputs are binary PGM (P5) and the grayscale, non-interlaced
subset of PNG; outputs are always P5 at maxval 255. An "image buffer" is a
2-D float64 array of intensities; loaders normalize raw samples to [0, 1]
by dividing by the format's max value.

Preprocessing follows the training recipe: box-filter downsampling to the
target size (exactly mean-preserving, also for fractional ratios such as
512/40), then intensity scaling to [0, 2] per image (or over the whole
dataset with ``scaling="global"``).
"""

import json
import math
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from ctgen.errors import ConfigError, DimensionError, FormatError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------------------
# PGM (P5)
# ---------------------------------------------------------------------------

def _pgm_tokens(data, count):
    """First ``count`` whitespace-separated header tokens, skipping comments.
    Returns (tokens, offset just past the single whitespace after the last)."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise OSError("truncated PGM header")
        ch = data[i:i + 1]
        if ch == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
            if len(tokens) == count:
                if i >= len(data) or not data[i:i + 1].isspace():
                    raise OSError("truncated PGM header")
                i += 1  # exactly one whitespace byte before the raster
    return tokens, i


def read_pgm(path):
    """Binary PGM -> float intensities in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM, header starts {data[:2]!r}")
    tokens, offset = _pgm_tokens(data[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header fields {tokens!r}")
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid PGM dimensions/maxval {width}x{height}/{maxval}")
    raster = data[2 + offset:]
    dtype = ">u2" if maxval > 255 else "u1"
    need = width * height * (2 if maxval > 255 else 1)
    if len(raster) < need:
        raise OSError(f"{path}: truncated PGM raster ({len(raster)} of {need} bytes)")
    pixels = np.frombuffer(raster[:need], dtype=dtype).reshape(height, width)
    return pixels.astype(np.float64) / maxval


def write_pgm(path, pixels_u8):
    """Write a 2-D uint8 array as binary PGM, maxval 255."""
    pixels_u8 = np.ascontiguousarray(pixels_u8, dtype=np.uint8)
    h, w = pixels_u8.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(pixels_u8.tobytes())


# ---------------------------------------------------------------------------
# PNG (grayscale, non-interlaced subset)
# ---------------------------------------------------------------------------

def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw, height, stride, bpp):
    """Undo per-scanline PNG filters; returns the concatenated pixel bytes."""
    out = bytearray()
    prev = bytes(stride)
    pos = 0
    for _ in range(height):
        if pos + 1 + stride > len(raw):
            raise OSError("truncated PNG pixel data")
        ftype = raw[pos]
        line = bytearray(raw[pos + 1:pos + 1 + stride])
        pos += 1 + stride
        if ftype == 1:  # Sub
            for i in range(bpp, stride):
                line[i] = (line[i] + line[i - bpp]) & 0xFF
        elif ftype == 2:  # Up
            for i in range(stride):
                line[i] = (line[i] + prev[i]) & 0xFF
        elif ftype == 3:  # Average
            for i in range(stride):
                left = line[i - bpp] if i >= bpp else 0
                line[i] = (line[i] + (left + prev[i]) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            for i in range(stride):
                left = line[i - bpp] if i >= bpp else 0
                upleft = prev[i - bpp] if i >= bpp else 0
                line[i] = (line[i] + _paeth(left, prev[i], upleft)) & 0xFF
        elif ftype != 0:
            raise FormatError(f"unknown PNG filter type {ftype}")
        out.extend(line)
        prev = bytes(line)
    return bytes(out)


def read_png(path):
    """Grayscale non-interlaced PNG -> float intensities in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != PNG_SIGNATURE:
        raise FormatError(f"{path}: not a PNG, header starts {data[:8]!r}")
    pos = 8
    ihdr = None
    idat = bytearray()
    while pos + 8 <= len(data):
        length, ctype = struct.unpack(">I4s", data[pos:pos + 8])
        chunk = data[pos + 8:pos + 8 + length]
        if len(chunk) < length:
            raise OSError(f"{path}: truncated PNG chunk {ctype!r}")
        pos += 12 + length  # skip CRC
        if ctype == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", chunk)
        elif ctype == b"IDAT":
            idat.extend(chunk)
        elif ctype == b"IEND":
            break
    if ihdr is None:
        raise FormatError(f"{path}: PNG missing IHDR chunk")
    width, height, depth, color, compression, filt, interlace = ihdr
    if color != 0:
        raise FormatError(
            f"{path}: only grayscale PNG is supported, got color type {color} "
            f"(IHDR bytes {bytes(struct.pack('>IIBBBBB', *ihdr))!r})"
        )
    if depth not in (8, 16):
        raise FormatError(f"{path}: unsupported PNG bit depth {depth}")
    if interlace != 0:
        raise FormatError(f"{path}: interlaced PNG is not supported")
    if compression != 0 or filt != 0:
        raise FormatError(f"{path}: nonstandard PNG compression/filter method")
    if not idat:
        raise OSError(f"{path}: PNG has no IDAT data")
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as e:
        raise OSError(f"{path}: corrupt PNG stream ({e})")
    bpp = depth // 8
    pixels_bytes = _unfilter(raw, height, width * bpp, bpp)
    dtype = ">u2" if depth == 16 else "u1"
    pixels = np.frombuffer(pixels_bytes, dtype=dtype).reshape(height, width)
    return pixels.astype(np.float64) / (2 ** depth - 1)


def load_grayscale_image(path):
    """Load a PGM or grayscale PNG as a [H, W] float64 buffer in [0, 1]."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:2] == b"P5":
        return read_pgm(path)
    if head == PNG_SIGNATURE:
        return read_png(path)
    raise FormatError(f"{path}: unsupported image format, header starts {head!r}")


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def _box_weights(src, dst):
    """[dst, src] matrix of fractional box-overlap weights; rows sum to 1."""
    ratio = src / dst
    w = np.zeros((dst, src))
    for i in range(dst):
        lo = i * ratio
        hi = (i + 1) * ratio
        for j in range(int(math.floor(lo)), min(int(math.ceil(hi)), src)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / ratio


def area_downsample(img, target):
    """Box-filter resample of a [H, W] buffer to [target, target].

    Every output pixel is the exact area-weighted average of the source box
    it covers, so the global mean is preserved to rounding even when the
    ratio is fractional.
    """
    if target <= 0:
        raise ConfigError(f"target size must be positive, got {target}")
    h, w = img.shape
    if target > min(h, w):
        raise ConfigError(f"cannot downsample {h}x{w} to larger size {target}")
    return _box_weights(h, target) @ img @ _box_weights(w, target).T


def scale_intensity(img, lo=None, hi=None):
    """Min-max map onto [0, 2]; a constant image maps to all zeros.

    ``lo``/``hi`` override the per-image extrema (used for dataset-global
    scaling)."""
    lo = img.min() if lo is None else lo
    hi = img.max() if hi is None else hi
    if hi <= lo:
        return np.zeros_like(img)
    return 2.0 * (img - lo) / (hi - lo)


def to_training_tensor(img, channels):
    """[S, S] buffer -> [S, S, channels] tensor with the plane replicated."""
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise DimensionError(f"expected a square image, got shape {img.shape}")
    return np.repeat(img[:, :, None], channels, axis=2)


@dataclass
class ImageDataset:
    """Preprocessed training images, all [S, S, C] in [0, 2]."""

    items: list
    size: int
    channels: int
    fingerprint: str
    sources: list = field(default_factory=list)

    def __len__(self):
        return len(self.items)


def preprocess_images(images, size, channels, scaling="per-image"):
    """Downsample + intensity-scale loaded buffers into an ImageDataset."""
    if scaling not in ("per-image", "global"):
        raise ConfigError(f"scaling must be per-image or global, got {scaling!r}")
    small = [area_downsample(img, size) for img in images]
    if scaling == "global":
        lo = min(img.min() for img in small)
        hi = max(img.max() for img in small)
        scaled = [scale_intensity(img, lo, hi) for img in small]
    else:
        scaled = [scale_intensity(img) for img in small]
    fingerprint = f"size={size};channels={channels};scaling={scaling}"
    items = [to_training_tensor(img, channels) for img in scaled]
    return ImageDataset(items, size, channels, fingerprint)


def batch_iterator(ds, batch, rng, shuffle=True, passes=None):
    """Yield [batch, S, S, C] stacks; each pass is a fresh permutation and the
    sub-batch remainder is dropped."""
    n = len(ds.items)
    if n < batch:
        raise ConfigError(f"dataset has {n} images, need at least {batch}")
    done = 0
    while passes is None or done < passes:
        order = rng.permutation(n) if shuffle else np.arange(n)
        for start in range(0, n - batch + 1, batch):
            idx = order[start:start + batch]
            yield np.stack([ds.items[i] for i in idx])
        done += 1


# ---------------------------------------------------------------------------
# Dataset cache (manifest + float64-LE blob)
# ---------------------------------------------------------------------------

def _blob_path(manifest_path):
    return manifest_path + ".bin"


def save_dataset(ds, manifest_path):
    manifest = {
        "count": len(ds.items),
        "size": ds.size,
        "channels": ds.channels,
        "fingerprint": ds.fingerprint,
        "sources": ds.sources,
        "blob": os.path.basename(_blob_path(manifest_path)),
    }
    with open(_blob_path(manifest_path), "wb") as fh:
        for item in ds.items:
            fh.write(np.ascontiguousarray(item, dtype="<f8").tobytes())
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def load_dataset(manifest_path):
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    size, channels, count = manifest["size"], manifest["channels"], manifest["count"]
    item_len = size * size * channels
    with open(_blob_path(manifest_path), "rb") as fh:
        blob = fh.read()
    if len(blob) != count * item_len * 8:
        raise FormatError(f"{manifest_path}: dataset blob has wrong length")
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    items = [
        flat[i * item_len:(i + 1) * item_len].reshape(size, size, channels)
        for i in range(count)
    ]
    return ImageDataset(items, size, channels, manifest["fingerprint"],
                        manifest.get("sources", []))


# ---------------------------------------------------------------------------
# Sample grids
# ---------------------------------------------------------------------------

def write_sample_grid(samples, cols, path):
    """Tile [n, S, S, C] samples into one grayscale PGM.

    Channels are averaged, values clamped to [0, 2] and mapped to bytes as
    floor(v * 127.5); tiles are separated by 1-pixel black lines.
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    if n < 1:
        raise ConfigError("need at least one sample to write a grid")
    cols = max(1, min(cols, n))
    rows = (n + cols - 1) // cols
    s = samples.shape[1]
    gray = samples.mean(axis=3)
    tiles = np.clip(np.floor(np.clip(gray, 0.0, 2.0) * 127.5), 0, 255).astype(np.uint8)
    canvas = np.zeros((rows * s + rows - 1, cols * s + cols - 1), dtype=np.uint8)
    for i in range(n):
        r, c = divmod(i, cols)
        canvas[r * (s + 1):r * (s + 1) + s, c * (s + 1):c * (s + 1) + s] = tiles[i]
    write_pgm(path, canvas)

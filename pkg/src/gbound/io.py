"""File formats: images, layer stacks, optical flow and trained parameters."""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .core import LayerStack
from .postprocess import LogisticParams

STACK_MAGIC = b"GBLS"
STACK_VERSION = 1
FLO_MAGIC = 202021.25


class FormatError(ValueError):
    """Unreadable, truncated or unsupported file."""


# --- images -----------------------------------------------------------------

_PNM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _read_pnm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported PNM variant {magic!r}; only binary P5/P6")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PNM_TOKEN.match(data, pos)
        if not m:
            raise FormatError("truncated PNM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    if not 0 < maxval < 65536:
        raise FormatError(f"bad PNM maxval {maxval}")
    pos += 1  # single whitespace byte ends the header
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    if len(data) - pos < count * dtype.itemsize:
        raise FormatError("truncated PNM payload")
    pix = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float64) / maxval
    pix = pix.reshape(height, width, channels)
    return np.moveaxis(pix, -1, 0)


def _read_pillow(path: Path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                return arr[None]
            if mode in ("1", "L", "P", "LA") or mode.startswith("L"):
                return np.asarray(im.convert("L"), dtype=np.float64)[None] / 255.0
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
            return np.moveaxis(arr, -1, 0)
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"cannot decode {path}: {exc}") from exc


def read_raster(path) -> np.ndarray:
    """Decode PGM/PPM (binary), PNG or JPEG to a ``(C, H, W)`` float array in [0, 1]."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:1] == b"P":
        return _read_pnm(path.read_bytes())
    if head.startswith(b"\x89PNG") or head.startswith(b"\xff\xd8"):
        return _read_pillow(path)
    raise FormatError(f"{path}: unsupported image format")


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """CIE Lab (D65) of a ``(3, H, W)`` sRGB image with values in [0, 1]."""
    from skimage.color import rgb2lab

    return np.moveaxis(rgb2lab(np.moveaxis(np.clip(rgb, 0, 1), 0, -1), illuminant="D65"), -1, 0)


def lab_to_unit(lab: np.ndarray) -> np.ndarray:
    """Rescale Lab channels to roughly [0, 1]: L/100, (a+128)/255, (b+128)/255."""
    return np.stack([lab[0] / 100.0, (lab[1] + 128.0) / 255.0, (lab[2] + 128.0) / 255.0])


def read_image(path, lab: bool = False) -> LayerStack:
    """One layer for grey images, three for colour (optionally rescaled Lab)."""
    pix = read_raster(path)
    if pix.shape[0] == 1:
        return LayerStack(pix, ["gray"])
    if lab:
        return LayerStack(lab_to_unit(srgb_to_lab(pix)), ["L", "a", "b"])
    return LayerStack(pix, ["R", "G", "B"])


def write_pgm(path, values: np.ndarray) -> None:
    """8-bit binary PGM of a map with values in [0, 1] (clipped)."""
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    pix = np.round(np.clip(values, 0, 1) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(pix.tobytes())


def write_png(path, values: np.ndarray) -> None:
    """8-bit PNG of a ``(H, W)`` or ``(3, H, W)`` map with values in [0, 1]."""
    from PIL import Image

    values = np.clip(np.asarray(values, dtype=np.float64), 0, 1)
    if values.ndim == 3:
        values = np.moveaxis(values, 0, -1)
    Image.fromarray(np.round(values * 255).astype(np.uint8)).save(path)


def read_mask(path) -> np.ndarray:
    """Boolean map from an image or single-layer stack file (nonzero = on)."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path) > 0
    with open(path, "rb") as fh:
        is_stack = fh.read(4) == STACK_MAGIC
    arr = read_stack(path).data if is_stack else read_raster(path)
    return arr.max(axis=0) > 0


def read_seg(path) -> np.ndarray:
    """Region labels from a Berkeley ``.seg`` human segmentation file.

    The body after ``data`` holds ``segment row col_start col_end`` runs with
    inclusive column bounds.
    """
    header = {}
    lines = Path(path).read_text().splitlines()
    for i, line in enumerate(lines):
        parts = line.split()
        if parts == ["data"]:
            break
        if len(parts) >= 2:
            header[parts[0]] = parts[1]
    else:
        raise FormatError(f"{path}: no data section")
    try:
        w, h = int(header["width"]), int(header["height"])
    except (KeyError, ValueError):
        raise FormatError(f"{path}: missing width/height") from None
    labels = np.full((h, w), -1, dtype=np.int32)
    for line in lines[i + 1 :]:
        if not line.strip():
            continue
        seg, row, c0, c1 = (int(v) for v in line.split())
        labels[row, c0 : c1 + 1] = seg
    if np.any(labels < 0):
        raise FormatError(f"{path}: segmentation does not cover the image")
    return labels


# --- layer stacks -------------------------------------------------------------


def write_stack(path, stack: LayerStack) -> None:
    k, h, w = stack.data.shape
    with open(path, "wb") as fh:
        fh.write(STACK_MAGIC)
        fh.write(struct.pack("<HIIH", STACK_VERSION, w, h, k))
        for name in stack.names:
            raw = name.encode("utf-8")
            if b"\0" in raw:
                raise ValueError(f"layer name {name!r} contains a NUL byte")
            fh.write(raw + b"\0")
        fh.write(stack.data.astype("<f4").tobytes())


def read_stack(path) -> LayerStack:
    data = Path(path).read_bytes()
    if data[:4] != STACK_MAGIC:
        raise FormatError(f"{path}: not a layer stack file")
    if len(data) < 16:
        raise FormatError(f"{path}: truncated header")
    version, w, h, k = struct.unpack_from("<HIIH", data, 4)
    if version != STACK_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    pos = 16
    names = []
    for _ in range(k):
        end = data.find(b"\0", pos)
        if end < 0:
            raise FormatError(f"{path}: truncated layer names")
        names.append(data[pos:end].decode("utf-8"))
        pos = end + 1
    count = k * h * w
    if len(data) - pos != 4 * count:
        raise FormatError(f"{path}: payload is {len(data) - pos} bytes, header implies {4 * count}")
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(k, h, w)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite layer values")
    return LayerStack(arr.astype(np.float64), names)


# --- optical flow -------------------------------------------------------------


def write_flo(path, u: np.ndarray, v: np.ndarray) -> None:
    u = np.asarray(u, dtype=np.float32)
    v = np.asarray(v, dtype=np.float32)
    h, w = u.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(np.stack([u, v], axis=-1).astype("<f4").tobytes())


def read_flo(path) -> LayerStack:
    """Middlebury ``.flo`` file as a two-layer (u, v) stack, values unscaled."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FormatError(f"{path}: not a flow file")
    magic, w, h = struct.unpack_from("<fii", data, 0)
    if magic != np.float32(FLO_MAGIC):
        raise FormatError(f"{path}: not a flow file (bad magic {magic!r})")
    if w < 0 or h < 0 or len(data) - 12 != 8 * w * h:
        raise FormatError(f"{path}: corrupt flow file, size does not match {w}x{h}")
    uv = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2)
    return LayerStack(np.moveaxis(uv, -1, 0).astype(np.float64), ["flow_u", "flow_v"])


# --- layer loading --------------------------------------------------------------


def load_layers(path, lab: bool = False) -> LayerStack:
    """Any supported layer source, dispatched on content."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == STACK_MAGIC:
        return read_stack(path)
    if path.suffix.lower() == ".flo":
        return read_flo(path)
    if path.suffix == ".npy":
        return LayerStack(np.load(path))
    return read_image(path, lab=lab)


# --- parameter files ----------------------------------------------------------


def write_params(path, params: LogisticParams, gammas) -> None:
    gammas = np.asarray(gammas, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write(f"w0={params.w0!r}\n")
        fh.write(f"w1={params.w1!r}\n")
        fh.write("gamma=" + ",".join(repr(float(g)) for g in gammas) + "\n")


def read_params(path) -> tuple[LogisticParams, np.ndarray]:
    kv = read_keyvalue(path)
    try:
        params = LogisticParams(float(kv["w0"]), float(kv["w1"]))
        gammas = np.array([float(g) for g in kv["gamma"].split(",") if g.strip()])
    except KeyError as exc:
        raise FormatError(f"{path}: missing parameter {exc.args[0]}") from None
    return params, gammas


def read_keyvalue(path) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{n}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out

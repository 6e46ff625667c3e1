"""Readers and writers: PFM float maps, 16-bit PNG rasters, ASCII PLY."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .maps import DepthMap, DisparityMap
from .sphere import PointCloud


def read_pfm(path) -> np.ndarray:
    """Load a PFM file as a float64 array, top row first.

    Grayscale ("Pf") files give H x W, color ("PF") files H x W x 3.
    Both byte orders are accepted; the sign of the scale line selects it.
    """
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header == b"Pf":
            channels = 1
        elif header == b"PF":
            channels = 3
        else:
            raise ValueError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline()
        while dims.startswith(b"#"):
            dims = f.readline()
        match = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not match:
            raise ValueError(f"{path}: malformed PFM dimensions line {dims!r}")
        width, height = int(match.group(1)), int(match.group(2))
        scale = float(f.readline().strip())
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        data = np.frombuffer(f.read(4 * count), dtype=endian + "f4")
    if data.size != count:
        raise ValueError(f"{path}: expected {count} floats, found {data.size}")
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(data.reshape(shape)).astype(np.float64)


def write_pfm(path, array, byteorder: str = "little") -> None:
    """Write a float array as 32-bit PFM (rows stored bottom to top)."""
    array = np.asarray(array)
    if array.ndim == 2:
        header = b"Pf"
    elif array.ndim == 3 and array.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError(f"PFM holds H x W or H x W x 3 arrays, got {array.shape}")
    if byteorder not in ("little", "big"):
        raise ValueError("byteorder must be 'little' or 'big'")
    dtype = "<f4" if byteorder == "little" else ">f4"
    scale = -1.0 if byteorder == "little" else 1.0
    height, width = array.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{width} {height}\n".encode())
        f.write(f"{scale}\n".encode())
        f.write(np.flipud(array).astype(dtype).tobytes())


def read_depth_pfm(path) -> DepthMap:
    """Depth PFMs store invalid pixels as 0 (or any non-positive / non-finite value)."""
    return DepthMap(read_pfm(path))


def write_depth_pfm(path, depth: DepthMap, **kw) -> None:
    write_pfm(path, depth.filled(0.0), **kw)


def read_disparity_pfm(path) -> DisparityMap:
    """Disparity PFMs store invalid pixels as NaN; zero is a legal disparity."""
    return DisparityMap(read_pfm(path))


def write_disparity_pfm(path, disp: DisparityMap, **kw) -> None:
    write_pfm(path, disp.filled(np.nan), **kw)


def read_png16(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I;16B", "I;16L", "I"):
            raise ValueError(f"{path}: expected a 16-bit grayscale PNG, got mode {im.mode}")
        arr = np.array(im)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 65535:
        raise ValueError(f"{path}: values outside the 16-bit range")
    return arr.astype(np.uint16)


def write_png16(path, raw) -> None:
    raw = np.asarray(raw)
    if raw.dtype != np.uint16:
        raise TypeError(f"expected uint16 data, got {raw.dtype}")
    Image.fromarray(raw).save(path)


def write_mask_png(path, mask) -> None:
    Image.fromarray(np.asarray(mask, dtype=np.uint8) * 255).save(path)


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"))


def write_ply(path, cloud: PointCloud) -> None:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if cloud.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")
        if cloud.colors is None:
            np.savetxt(f, cloud.points, fmt="%.7g")
        else:
            rows = np.hstack([cloud.points, cloud.colors.astype(np.float64)])
            np.savetxt(f, rows, fmt=["%.7g"] * 3 + ["%d"] * 3)


def read_ply(path) -> PointCloud:
    """Read the ASCII PLY subset written by :func:`write_ply`."""
    with open(path, "r", encoding="ascii") as f:
        if f.readline().strip() != "ply":
            raise ValueError(f"{path}: not a PLY file")
        n = None
        props = []
        for line in f:
            line = line.strip()
            if line.startswith("format") and "ascii" not in line:
                raise ValueError(f"{path}: only ASCII PLY is supported")
            if line.startswith("element vertex"):
                n = int(line.split()[-1])
            elif line.startswith("property"):
                props.append(line.split()[-1])
            elif line == "end_header":
                break
        if n is None:
            raise ValueError(f"{path}: no vertex element")
        data = np.loadtxt(f, ndmin=2) if n else np.zeros((0, len(props)))
    if data.shape != (n, len(props)):
        raise ValueError(f"{path}: expected {n} x {len(props)} vertex table, got {data.shape}")
    idx = {p: i for i, p in enumerate(props)}
    points = data[:, [idx["x"], idx["y"], idx["z"]]]
    colors = None
    if "red" in idx:
        colors = data[:, [idx["red"], idx["green"], idx["blue"]]].astype(np.uint8)
    return PointCloud(points, colors)


def stem_index(directory, suffix: str) -> dict[str, Path]:
    return {p.stem: p for p in sorted(Path(directory).glob(f"*{suffix}")) if p.is_file()}

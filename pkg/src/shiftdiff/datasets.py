"""Dataset ingestion (synthetic GMM, MNIST IDX) and delimiter-separated / PNM export."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .oracle import GmmSpec, gmm_dataset

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxParseError(ValueError):
    pass


def _read_header(data: bytes, magic: int, ndims: int, path) -> tuple[int, ...]:
    need = 4 * (1 + ndims)
    if len(data) < need:
        raise IdxParseError(f"{path}: truncated header at offset {len(data)} (need {need} bytes)")
    got = struct.unpack(">I", data[:4])[0]
    if got != magic:
        raise IdxParseError(f"{path}: bad magic 0x{got:08x} at offset 0 (expected 0x{magic:08x})")
    return struct.unpack(f">{ndims}I", data[4:need])


def read_mnist_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Images as rows in [-1, 1] (pixel p -> 2p/255 - 1) and integer labels."""
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()
    count, rows, cols = _read_header(img, IMAGE_MAGIC, 3, images_path)
    (n_labels,) = _read_header(lab, LABEL_MAGIC, 1, labels_path)
    if count != n_labels:
        raise IdxParseError(f"{labels_path}: label count {n_labels} at offset 4 does not match "
                            f"image count {count} in {images_path}")
    size = count * rows * cols
    if len(img) - 16 < size:
        raise IdxParseError(f"{images_path}: truncated pixel data at offset {len(img)} "
                            f"(expected {16 + size} bytes)")
    if len(lab) - 8 < count:
        raise IdxParseError(f"{labels_path}: truncated label data at offset {len(lab)} "
                            f"(expected {8 + count} bytes)")
    pixels = np.frombuffer(img, dtype=np.uint8, count=size, offset=16).reshape(count, rows * cols)
    labels = np.frombuffer(lab, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    return pixels.astype(np.float64) * (2.0 / 255.0) - 1.0, labels


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images (N, rows, cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">4I", IMAGE_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", LABEL_MAGIC, n) + np.asarray(labels, np.uint8).tobytes())


def load_dataset(config, rng: np.random.Generator):
    """``(data, labels, num_classes, gmm_or_None)`` for the configured generator."""
    if config.data.generator == "mnist":
        if not config.data.mnist_images or not config.data.mnist_labels:
            raise FileNotFoundError("data.mnist_images and data.mnist_labels must name IDX files")
        data, labels = read_mnist_idx(config.data.mnist_images, config.data.mnist_labels)
        return data, labels, int(labels.max()) + 1, None
    gmm: GmmSpec = config.gmm()
    data, labels = gmm_dataset(gmm, config.data.per_class, rng)
    return data, labels, gmm.num_classes, gmm


def format_samples(samples: np.ndarray, header: dict) -> str:
    """One comma-separated vector per line after a ``# key=value ...`` header line."""
    head = "# " + " ".join(f"{k}={v}" for k, v in header.items())
    rows = [",".join(repr(float(v)) for v in row) for row in np.atleast_2d(samples)]
    return "\n".join([head, *rows]) + "\n"


def write_samples(path, samples: np.ndarray, header: dict) -> None:
    try:
        Path(path).write_text(format_samples(samples, header), encoding="utf-8")
    except OSError as err:
        raise OSError(f"cannot write samples {path}: {err.strerror}") from err


def read_samples(path) -> tuple[dict, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split())
    rows = [[float(v) for v in line.split(",")] for line in lines[1:] if line]
    return header, np.array(rows)


def to_bytes(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((np.asarray(image) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def write_pnm(path, image: np.ndarray) -> None:
    """Portable graymap (H, W) or pixmap (H, W, 3) from values in [-1, 1]."""
    pix = to_bytes(image)
    if pix.ndim == 2:
        head = f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n"
    elif pix.ndim == 3 and pix.shape[2] == 3:
        head = f"P6\n{pix.shape[1]} {pix.shape[0]}\n255\n"
    else:
        raise ValueError(f"cannot write image of shape {pix.shape} as PNM")
    Path(path).write_bytes(head.encode("ascii") + pix.tobytes())


def write_table(path, header: list[str], rows) -> None:
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

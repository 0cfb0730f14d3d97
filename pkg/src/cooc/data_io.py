"""Readers and writers: MNIST IDX, binary PGM, synthetic corpora, models.

File formats written here:

* model JSON: ``{"format": "cooc-model", "version": 1, "domain": {...},
  "group_size": s, "assignment": [k(p) ...], "groups": [{"edges": [...],
  "probs": [...]}, ...], "meta": {...}}``
* map dumps: one record per map, each a little-endian uint64 bit count ``n``
  followed by ``ceil(n / 64)`` little-endian uint64 words; bit ``p`` lives in
  word ``p // 64`` at position ``p % 64``.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from cooc import rng
from cooc.domain import Image, IndexDomain, SignificanceMap

PathLike = Union[str, os.PathLike]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MODEL_FORMAT = "cooc-model"
MODEL_SET_FORMAT = "cooc-class-models"
MODEL_VERSION = 1

PARTITION_STREAM = 0


class FormatError(ValueError):
    """A file does not follow its documented layout."""


class LengthError(FormatError):
    """A file is shorter than its header promises."""


class UnsupportedVariantError(FormatError):
    """A recognized but unsupported file variant (e.g. ASCII PGM)."""


class VersionError(FormatError):
    """A model file carries an unknown format version."""


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------

def _read_idx(path: PathLike, magic: int, n_dims: int) -> tuple[tuple, bytes]:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise LengthError(f"{path}: file too short for an IDX header")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise FormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    header_len = 4 + 4 * n_dims
    if len(data) < header_len:
        raise LengthError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{n_dims}I", data[4:header_len])
    payload = data[header_len:]
    need = int(np.prod(dims, dtype=np.int64))
    if len(payload) < need:
        raise LengthError(f"{path}: header promises {need} bytes, found {len(payload)}")
    return dims, payload[:need]


def read_idx_images(path: PathLike) -> list[Image]:
    """Read an IDX3 image file, scaling bytes to [0, 1]."""
    (count, rows, cols), payload = _read_idx(path, IDX_IMAGES_MAGIC, 3)
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols) / 255.0
    return [Image(cols, rows, pixels[i]) for i in range(count)]


def read_idx_image_array(path: PathLike) -> np.ndarray:
    """Raw ``(count, rows, cols)`` uint8 array from an IDX3 image file."""
    (count, rows, cols), payload = _read_idx(path, IDX_IMAGES_MAGIC, 3)
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols).copy()


def read_idx_labels(path: PathLike) -> list[int]:
    (count,), payload = _read_idx(path, IDX_LABELS_MAGIC, 1)
    labels = np.frombuffer(payload, dtype=np.uint8)
    if labels.size and labels.max() > 9:
        raise FormatError(f"{path}: label {int(labels.max())} outside [0, 9]")
    return labels.astype(int).tolist()


def write_idx_images(path: PathLike, pixels: np.ndarray) -> None:
    """Write a ``(count, rows, cols)`` uint8 array as an IDX3 file."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    header = struct.pack(">4I", IDX_IMAGES_MAGIC, *pixels.shape)
    Path(path).write_bytes(header + pixels.tobytes())


def write_idx_labels(path: PathLike, labels: Sequence[int]) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">2I", IDX_LABELS_MAGIC, labels.size) + labels.tobytes())


# ---------------------------------------------------------------------------
# PGM / PBM
# ---------------------------------------------------------------------------

def _pnm_tokens(data: bytes, n_tokens: int) -> tuple[list[bytes], int]:
    """Header tokens of a PNM file (comments skipped) and the payload offset."""
    tokens, pos = [], 0
    while len(tokens) < n_tokens:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError("truncated PNM header")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path: PathLike) -> Image:
    data = Path(path).read_bytes()
    if data[:2] == b"P2":
        raise UnsupportedVariantError(f"{path}: ASCII PGM (P2) is not supported")
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM file")
    tokens, offset = _pnm_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as err:
        raise FormatError(f"{path}: malformed PGM header") from err
    if width < 1 or height < 1 or not 0 < maxval <= 65535:
        raise FormatError(f"{path}: invalid PGM dimensions or maxval")
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    need = width * height * dtype.itemsize
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise LengthError(f"{path}: PGM raster truncated")
    samples = np.frombuffer(raster, dtype=dtype).astype(np.float64) / maxval
    return Image(width, height, samples)


def write_pgm(path: PathLike, image: Image, maxval: int = 255) -> None:
    values = np.clip(np.rint(image.samples * maxval), 0, maxval)
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode()
    Path(path).write_bytes(header + values.astype(dtype).tobytes())


def read_pgm_dir(directory: PathLike) -> list[Image]:
    """All ``*.pgm`` files of a directory, sorted by file name."""
    paths = sorted(Path(directory).glob("*.pgm"))
    if not paths:
        raise FormatError(f"{directory}: no .pgm files")
    return [read_pgm(p) for p in paths]


def write_pbm(path: PathLike, y: SignificanceMap) -> None:
    """Binary PBM (P4); significant indices are black."""
    w, h = y.domain.width, y.domain.height
    rows = y.members.reshape(h, w)
    packed = np.packbits(rows, axis=1)
    Path(path).write_bytes(f"P4\n{w} {h}\n".encode() + packed.tobytes())


# ---------------------------------------------------------------------------
# Bitset dumps
# ---------------------------------------------------------------------------

def encode_bitset(members: np.ndarray) -> bytes:
    members = np.asarray(members, dtype=bool).reshape(-1)
    n = members.size
    n_words = -(-n // 64)
    padded = np.zeros(n_words * 64, dtype=bool)
    padded[:n] = members
    return struct.pack("<Q", n) + np.packbits(padded, bitorder="little").tobytes()


def decode_bitsets(data: bytes) -> list[np.ndarray]:
    out, pos = [], 0
    while pos < len(data):
        if pos + 8 > len(data):
            raise LengthError("truncated bitset length prefix")
        (n,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        n_bytes = 8 * (-(-n // 64))
        if pos + n_bytes > len(data):
            raise LengthError("truncated bitset payload")
        bits = np.unpackbits(np.frombuffer(data, np.uint8, n_bytes, pos), bitorder="little")
        out.append(bits[:n].astype(bool))
        pos += n_bytes
    return out


def write_maps(path: PathLike, maps: Sequence[SignificanceMap]) -> None:
    Path(path).write_bytes(b"".join(encode_bitset(y.members) for y in maps))


def read_maps(path: PathLike, domain: IndexDomain) -> list[SignificanceMap]:
    out = []
    for bits in decode_bitsets(Path(path).read_bytes()):
        if bits.size != domain.size:
            raise FormatError(f"{path}: bitset of {bits.size} bits, domain has {domain.size}")
        out.append(SignificanceMap(domain, bits))
    return out


# ---------------------------------------------------------------------------
# Map datasets (maps.bin + manifest.json)
# ---------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    source: str
    count: int
    domain: IndexDomain
    labels: Optional[list] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in ("idx", "pgm-dir", "synthetic"):
            raise ValueError(f"unknown dataset source {self.source!r}")
        if self.count < 1:
            raise ValueError("a dataset holds at least one item")
        if self.labels is not None:
            if len(self.labels) != self.count:
                raise ValueError("one label per item is required")
            if self.source == "idx" and any(not 0 <= l <= 9 for l in self.labels):
                raise ValueError("digit labels must lie in [0, 9]")

    def to_dict(self) -> dict:
        out = {"source": self.source, "count": self.count, "domain": self.domain.to_dict()}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        if self.extra:
            out["extra"] = self.extra
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        return cls(data["source"], int(data["count"]), IndexDomain.from_dict(data["domain"]),
                   data.get("labels"), data.get("extra", {}))


def write_dataset(directory: PathLike, maps: Sequence[SignificanceMap],
                  manifest: DatasetManifest) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_maps(directory / "maps.bin", maps)
    (directory / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=1) + "\n")


def read_dataset(directory: PathLike) -> tuple[list[SignificanceMap], DatasetManifest]:
    directory = Path(directory)
    try:
        manifest = DatasetManifest.from_dict(json.loads((directory / "manifest.json").read_text()))
    except (KeyError, TypeError, json.JSONDecodeError) as err:
        raise FormatError(f"{directory}: bad manifest") from err
    maps = read_maps(directory / "maps.bin", manifest.domain)
    if len(maps) != manifest.count:
        raise FormatError(f"{directory}: manifest lists {manifest.count} maps, found {len(maps)}")
    return maps, manifest


# ---------------------------------------------------------------------------
# Synthetic planted-group corpora
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Corpus whose indices co-activate in hidden groups of ``group_size``.

    ``p_on`` / ``p_off`` are scalars or one value per planted group. The
    domain is laid out as a ``width x (domain_size / width)`` grid; ``width``
    defaults to the integer square root when the size is a perfect square.
    """

    domain_size: int
    group_size: int
    p_on: Union[float, tuple] = 0.9
    p_off: Union[float, tuple] = 0.05
    n_samples: int = 200
    seed: int = 0
    width: Optional[int] = None

    def __post_init__(self):
        if self.domain_size < 1 or self.group_size < 1:
            raise ValueError("sizes must be positive")
        if self.domain_size % self.group_size:
            raise ValueError("planted group size must divide the domain size")
        if self.n_samples < 1:
            raise ValueError("need at least one sample")
        on, off = self.probabilities()
        if np.any(off < 0) or np.any(on > 1) or np.any(off >= on):
            raise ValueError("need 0 <= p_off < p_on <= 1")
        if self.domain_size % self.grid_width:
            raise ValueError("grid width must divide the domain size")

    @property
    def n_groups(self) -> int:
        return self.domain_size // self.group_size

    @property
    def grid_width(self) -> int:
        if self.width is not None:
            return self.width
        root = math.isqrt(self.domain_size)
        return root if root * root == self.domain_size else self.domain_size

    @property
    def domain(self) -> IndexDomain:
        return IndexDomain(self.grid_width, self.domain_size // self.grid_width)

    def probabilities(self) -> tuple[np.ndarray, np.ndarray]:
        on = np.broadcast_to(np.asarray(self.p_on, dtype=np.float64), (self.n_groups,))
        off = np.broadcast_to(np.asarray(self.p_off, dtype=np.float64), (self.n_groups,))
        return on, off

    def to_dict(self) -> dict:
        def plain(v):
            return list(v) if isinstance(v, (tuple, list)) else v
        return {"domain_size": self.domain_size, "group_size": self.group_size,
                "p_on": plain(self.p_on), "p_off": plain(self.p_off),
                "n_samples": self.n_samples, "seed": self.seed, "width": self.width}

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        def tup(v):
            return tuple(v) if isinstance(v, list) else v
        return cls(int(data["domain_size"]), int(data["group_size"]), tup(data.get("p_on", 0.9)),
                   tup(data.get("p_off", 0.05)), int(data.get("n_samples", 200)),
                   int(data.get("seed", 0)), data.get("width"))


def planted_assignment(spec: SyntheticSpec) -> np.ndarray:
    """Hidden group of every index: a random balanced partition from the seed."""
    perm = rng.permutation(spec.seed, PARTITION_STREAM, spec.domain_size)
    assignment = np.empty(spec.domain_size, dtype=np.int64)
    assignment[perm] = np.arange(spec.domain_size) // spec.group_size
    return assignment


def gen_synthetic(spec: SyntheticSpec, split: int = 0) -> list[SignificanceMap]:
    """Draw ``spec.n_samples`` maps.

    Every (sample, planted group) pair gets a latent state that is on with
    probability 1/2; an index is then significant with its group's ``p_on``
    or ``p_off``. ``split`` selects an independent sample stream over the same
    planted partition, so ``split=1`` gives a held-out set.
    """
    assignment = planted_assignment(spec)
    n, n_groups = spec.n_samples, spec.n_groups
    latent = rng.uniforms(spec.seed, 1 + 2 * split, n * n_groups).reshape(n, n_groups) < 0.5
    on, off = spec.probabilities()
    prob = np.where(latent, on[None, :], off[None, :])[:, assignment]
    draws = rng.uniforms(spec.seed, 2 + 2 * split, n * spec.domain_size).reshape(n, spec.domain_size)
    members = draws < prob
    domain = spec.domain
    return [SignificanceMap(domain, members[i]) for i in range(n)]


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def model_to_dict(model) -> dict:
    g = model.grouping
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "domain": g.domain.to_dict(),
        "group_size": g.size,
        "assignment": g.assignment.tolist(),
        "groups": [{"edges": h.edges.tolist(), "probs": h.probs.tolist()} for h in model.histograms],
        "meta": model.meta,
    }


def model_from_dict(data: dict):
    from cooc.model import CoocModel, GroupHistogram, Grouping

    if data.get("format") != MODEL_FORMAT:
        raise FormatError(f"not a model document: format={data.get('format')!r}")
    if data.get("version") != MODEL_VERSION:
        raise VersionError(f"unsupported model version {data.get('version')!r}")
    try:
        domain = IndexDomain.from_dict(data["domain"])
        grouping = Grouping(domain, int(data["group_size"]), np.array(data["assignment"]))
        hists = tuple(GroupHistogram(np.array(g["edges"]), np.array(g["probs"], dtype=np.float64))
                      for g in data["groups"])
        return CoocModel(grouping, hists, dict(data.get("meta", {})))
    except (KeyError, TypeError) as err:
        raise FormatError(f"corrupted model field: {err}") from err


def dumps_model(model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True) + "\n"


def save_model(model, path: PathLike) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path: PathLike):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}: not valid JSON") from err
    return model_from_dict(data)


def save_model_set(models: Sequence, path: PathLike, meta: Optional[dict] = None) -> None:
    doc = {"format": MODEL_SET_FORMAT, "version": MODEL_VERSION,
           "models": [model_to_dict(m) for m in models], "meta": meta or {}}
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_model_set(path: PathLike) -> list:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}: not valid JSON") from err
    if data.get("format") != MODEL_SET_FORMAT:
        raise FormatError(f"{path}: not a class model set")
    if data.get("version") != MODEL_VERSION:
        raise VersionError(f"unsupported model set version {data.get('version')!r}")
    return [model_from_dict(m) for m in data["models"]]

"""Named-tensor store, seeded initialisation and the ``.lwga`` container.

Container layout (all integers little-endian)::

    b"LWGA" | version u16 | count u32
    per tensor: name_len u16 | utf-8 name | rank u8 | dims u64 * rank | float32 payload

Per-tensor random streams come from numpy's PCG64 seeded with
``SeedSequence([seed, h0, h1])`` where ``h0, h1`` are the first two 32-bit
little-endian words of ``sha256(name)``. That makes every tensor's values
independent of store ordering and identical across platforms.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

MAGIC = b"LWGA"
VERSION = 1
INIT_RANGE = 0.05

_HEADER = struct.Struct("<4sHI")


class WeightFormatError(ValueError):
    """Malformed store or container. ``kind`` is one of
    ``bad magic``, ``bad version``, ``truncated payload``, ``duplicate name``,
    ``bad rank``, ``trailing data``, ``manifest mismatch``."""

    def __init__(self, kind: str, detail: str = ""):
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple[int, ...]
    # weight | bias | alpha | bn_gamma | bn_beta | bn_mean | bn_var
    role: str

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def trainable(self) -> bool:
        return self.role not in ("bn_mean", "bn_var")


class WeightStore:
    """Insertion-ordered, read-only mapping of name -> float32 array."""

    def __init__(self, items: Iterable[tuple[str, np.ndarray]] = ()):
        self._data: dict[str, np.ndarray] = {}
        for name, arr in items:
            if name in self._data:
                raise WeightFormatError("duplicate name", name)
            a = np.array(arr, dtype="<f4", copy=True)
            if not 1 <= a.ndim <= 4:
                raise WeightFormatError("bad rank", f"{name} has rank {a.ndim}")
            a.setflags(write=False)
            self._data[name] = a

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    def __contains__(self, name: object) -> bool:
        return name in self._data

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def items(self):
        return self._data.items()

    def names(self) -> list[str]:
        return list(self._data)

    def manifest(self) -> list[tuple[str, tuple[int, ...], int]]:
        """(name, dims, payload byte offset within the container)."""
        out = []
        offset = _HEADER.size
        for name, a in self._data.items():
            offset += 2 + len(name.encode()) + 1 + 8 * a.ndim
            out.append((name, a.shape, offset))
            offset += a.nbytes
        return out

    def replace(self, **updates: np.ndarray) -> "WeightStore":
        missing = set(updates) - set(self._data)
        if missing:
            raise KeyError(f"unknown tensors: {sorted(missing)}")
        return WeightStore((k, updates.get(k, v)) for k, v in self._data.items())

    def map(self, fn) -> "WeightStore":
        """New store with ``fn(name, array)`` applied to every tensor."""
        return WeightStore((k, fn(k, v)) for k, v in self._data.items())

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, VERSION, len(self._data))]
        for name, a in self._data.items():
            raw = name.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
            parts.append(struct.pack("<B", a.ndim))
            parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
            parts.append(a.astype("<f4", copy=False).tobytes(order="C"))
        return b"".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def equals(self, other: "WeightStore") -> bool:
        """Bitwise equality, including name order."""
        return self.to_bytes() == other.to_bytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "WeightStore":
        if len(buf) < _HEADER.size:
            if buf[:4] != MAGIC[: len(buf[:4])]:
                raise WeightFormatError("bad magic")
            raise WeightFormatError("truncated payload", "header incomplete")
        magic, version, count = _HEADER.unpack_from(buf, 0)
        if magic != MAGIC:
            raise WeightFormatError("bad magic", repr(magic))
        if version != VERSION:
            raise WeightFormatError("bad version", str(version))
        pos = _HEADER.size
        items: list[tuple[str, np.ndarray]] = []
        seen: set[str] = set()

        def take(nbytes: int, what: str) -> bytes:
            nonlocal pos
            if pos + nbytes > len(buf):
                raise WeightFormatError("truncated payload", what)
            chunk = buf[pos : pos + nbytes]
            pos += nbytes
            return chunk

        for i in range(count):
            (nlen,) = struct.unpack("<H", take(2, f"tensor {i} name length"))
            name = take(nlen, f"tensor {i} name").decode("utf-8")
            if name in seen:
                raise WeightFormatError("duplicate name", name)
            seen.add(name)
            (rank,) = struct.unpack("<B", take(1, f"{name} rank"))
            if not 1 <= rank <= 4:
                raise WeightFormatError("bad rank", f"{name} has rank {rank}")
            dims = struct.unpack(f"<{rank}Q", take(8 * rank, f"{name} dims"))
            n = int(np.prod(dims))
            data = np.frombuffer(take(4 * n, f"{name} payload"), dtype="<f4").reshape(dims)
            items.append((name, data))
        if pos != len(buf):
            raise WeightFormatError("trailing data", f"{len(buf) - pos} extra bytes")
        return cls(items)


def save(store: WeightStore, path) -> None:
    Path(path).write_bytes(store.to_bytes())


def load(path) -> WeightStore:
    return WeightStore.from_bytes(Path(path).read_bytes())


def _stream(seed: int, name: str) -> np.random.Generator:
    h = hashlib.sha256(name.encode("utf-8")).digest()
    words = struct.unpack("<2I", h[:8])
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & (2**64 - 1), *words])))


def init_from_specs(specs: Iterable[ParamSpec], seed: int) -> WeightStore:
    items = []
    for spec in specs:
        if spec.role in ("bn_gamma", "bn_var"):
            arr = np.ones(spec.shape, np.float32)
        elif spec.role in ("bn_beta", "bn_mean"):
            arr = np.zeros(spec.shape, np.float32)
        else:
            arr = _stream(seed, spec.name).uniform(-INIT_RANGE, INIT_RANGE, spec.shape).astype(np.float32)
        items.append((spec.name, arr))
    return WeightStore(items)


def init_seeded(config, seed: int = 0) -> WeightStore:
    from .backbone import param_specs

    return init_from_specs(param_specs(config), seed)


def check_manifest(store: WeightStore, specs: Iterable[ParamSpec]) -> None:
    """Raise ``manifest mismatch`` unless names, order and dims agree exactly."""
    specs = list(specs)
    expected = [(s.name, tuple(s.shape)) for s in specs]
    got = [(name, tuple(a.shape)) for name, a in store.items()]
    if expected == got:
        return
    exp_names = {n for n, _ in expected}
    got_names = {n for n, _ in got}
    missing = sorted(exp_names - got_names)
    extra = sorted(got_names - exp_names)
    if missing or extra:
        detail = f"{len(missing)} missing (e.g. {missing[:3]}), {len(extra)} unexpected (e.g. {extra[:3]})"
    else:
        bad = [(n, d, dict(got)[n]) for n, d in expected if dict(got)[n] != d]
        detail = f"dims differ for {bad[:3]}" if bad else "tensor order differs"
    raise WeightFormatError("manifest mismatch", detail)

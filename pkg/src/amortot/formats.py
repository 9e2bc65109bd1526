"""Binary file formats (AOTM measures, AOTP plans, AOTW models), CSV and PGM export.

All binary layouts are little-endian with 64-bit floats. Any path ending in
``.zst`` is transparently zstd-compressed on write and decompressed on read.
"""

from __future__ import annotations

import csv
import logging
import struct
from pathlib import Path

import numpy as np
import zstandard

from amortot.amortize import AmortizedModel, TrainingMethod
from amortot.errors import BadMagic, BadVersion, MassNotNormalizable, TruncatedFile
from amortot.measures import CostFamily, CostSpec, DiscreteMeasure, Domain, TransportPlan
from amortot.slicing import ProjectionFamily, ProjectionSet

__all__ = [
    "read_measure",
    "write_measure",
    "read_plan",
    "write_plan",
    "read_model",
    "write_model",
    "write_measure_csv",
    "write_plan_csv",
    "write_plan_pgm",
]

logger = logging.getLogger(__name__)

VERSION = 1
NORMALIZE_TOL = 1e-6

_F8 = np.dtype("<f8")
_MEASURE_HEADER = struct.Struct("<4sIBII")
_PLAN_HEADER = struct.Struct("<4sIIId")
_MODEL_HEADER = struct.Struct("<4sIBBIIdd")
_MODEL_TRAILER = struct.Struct("<BQId")

_PROJECTION_CODES = {ProjectionFamily.LINEAR: 0, ProjectionFamily.STEREOGRAPHIC: 1}
_METHOD_CODES = {TrainingMethod.RA: 0, TrainingMethod.OA: 1}
_COST_CODES = {CostFamily.SQ_EUCLIDEAN: 0, CostFamily.EUCLIDEAN: 1, CostFamily.SPHERICAL_GEODESIC: 2}


def _invert(codes: dict) -> dict:
    return {v: k for k, v in codes.items()}


def _is_compressed(path: Path) -> bool:
    return path.suffix == ".zst"


def _write_bytes(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if _is_compressed(path):
        payload = zstandard.ZstdCompressor(level=3).compress(payload)
    path.write_bytes(payload)
    logger.debug("Wrote %d bytes to %s", len(payload), path)


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    if not _is_compressed(path):
        return path.read_bytes()
    dctx = zstandard.ZstdDecompressor()
    with open(path, "rb") as fh:
        with dctx.stream_reader(fh) as reader:
            return reader.readall()


class _Cursor:
    """Sequential reader over a byte buffer that reports truncation."""

    def __init__(self, data: bytes, path: str | Path):
        self.data = data
        self.offset = 0
        self.path = path

    def remaining(self) -> int:
        return len(self.data) - self.offset

    def unpack(self, layout: struct.Struct) -> tuple:
        if self.remaining() < layout.size:
            raise TruncatedFile(f"{self.path}: header truncated at byte {self.offset}")
        values = layout.unpack_from(self.data, self.offset)
        self.offset += layout.size
        return values

    def floats(self, count: int) -> np.ndarray:
        size = count * _F8.itemsize
        if self.remaining() < size:
            raise TruncatedFile(
                f"{self.path}: expected {count} float64 values, only {self.remaining()} bytes left"
            )
        values = np.frombuffer(self.data, dtype=_F8, count=count, offset=self.offset)
        self.offset += size
        return values.astype(np.float64)


def _check_magic(data: bytes, magic: bytes, path) -> None:
    if data[:4] != magic:
        raise BadMagic(f"{path}: expected magic {magic!r}, found {bytes(data[:4])!r}")


def _check_version(version: int, path) -> None:
    if version != VERSION:
        raise BadVersion(f"{path}: unsupported version {version} (expected {VERSION})")


def _floats_bytes(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype=_F8).tobytes()


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------

def write_measure(path: str | Path, measure: DiscreteMeasure) -> None:
    header = _MEASURE_HEADER.pack(b"AOTM", VERSION, int(measure.domain), measure.n, measure.dim)
    _write_bytes(path, header + _floats_bytes(measure.atoms) + _floats_bytes(measure.weights))


def read_measure(path: str | Path) -> DiscreteMeasure:
    """Load an AOTM file.

    Weights are renormalized when their total is within 1e-6 of one;
    anything further off is rejected.
    """
    data = _read_bytes(path)
    _check_magic(data, b"AOTM", path)
    cursor = _Cursor(data, path)
    _, version, domain_tag, n, d = cursor.unpack(_MEASURE_HEADER)
    _check_version(version, path)
    try:
        domain = Domain(domain_tag)
    except ValueError as e:
        raise BadMagic(f"{path}: unknown domain tag {domain_tag}") from e
    atoms = cursor.floats(n * d).reshape(n, d)
    weights = cursor.floats(n)
    total = float(weights.sum())
    # Positivity is checked first so a zero weight is reported as such.
    if np.all(weights > 0.0) and abs(total - 1.0) > NORMALIZE_TOL:
        raise MassNotNormalizable(f"{path}: total mass {total!r} is not within {NORMALIZE_TOL} of 1")
    return DiscreteMeasure(atoms, weights, domain)


def write_measure_csv(path: str | Path, measure: DiscreteMeasure) -> None:
    """CSV with header x0..x{d-1},weight and one row per atom."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{k}" for k in range(measure.dim)] + ["weight"])
        for atom, weight in zip(measure.atoms, measure.weights):
            writer.writerow([repr(float(v)) for v in atom] + [repr(float(weight))])


# ---------------------------------------------------------------------------
# Plans
# ---------------------------------------------------------------------------

def write_plan(path: str | Path, plan: TransportPlan) -> None:
    n, m = plan.shape
    header = _PLAN_HEADER.pack(b"AOTP", VERSION, n, m, float(plan.epsilon))
    _write_bytes(path, header + _floats_bytes(plan.to_dense()))


def read_plan(path: str | Path) -> TransportPlan:
    data = _read_bytes(path)
    _check_magic(data, b"AOTP", path)
    cursor = _Cursor(data, path)
    _, version, n, m, epsilon = cursor.unpack(_PLAN_HEADER)
    _check_version(version, path)
    return TransportPlan.from_dense(cursor.floats(n * m).reshape(n, m), epsilon)


def write_plan_csv(path: str | Path, plan: TransportPlan) -> None:
    """CSV with header row,col,mass listing the positive entries."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "mass"])
        for i, j, mass in plan.triples():
            writer.writerow([i, j, repr(mass)])


def write_plan_pgm(path: str | Path, plan: TransportPlan) -> None:
    """8-bit binary PGM heatmap, one pixel per plan entry, scaled to the largest mass."""
    dense = plan.to_dense()
    peak = float(dense.max())
    if peak > 0.0:
        pixels = np.rint(255.0 * dense / peak).astype(np.uint8)
    else:
        pixels = np.zeros(dense.shape, dtype=np.uint8)
    n, m = dense.shape
    header = f"P5\n{m} {n}\n255\n".encode("ascii")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + pixels.tobytes())


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

def write_model(path: str | Path, model: AmortizedModel) -> None:
    pset = model.pset
    header = _MODEL_HEADER.pack(
        b"AOTW", VERSION,
        _PROJECTION_CODES[pset.family], _METHOD_CODES[model.trained_by],
        pset.L, pset.dim, float(model.epsilon), float(model.ridge_lambda),
    )
    trailer = _MODEL_TRAILER.pack(
        _COST_CODES[model.cost.family], int(pset.seed), int(model.pairs_used), float(model.wall_seconds),
    )
    _write_bytes(path, header + _floats_bytes(pset.thetas) + _floats_bytes(model.omega) + trailer)


def read_model(path: str | Path) -> AmortizedModel:
    """Load an AOTW file; the trailer after omega is optional."""
    data = _read_bytes(path)
    _check_magic(data, b"AOTW", path)
    cursor = _Cursor(data, path)
    _, version, family_code, method_code, L, d, epsilon, ridge_lambda = cursor.unpack(_MODEL_HEADER)
    _check_version(version, path)
    try:
        family = _invert(_PROJECTION_CODES)[family_code]
        method = _invert(_METHOD_CODES)[method_code]
    except KeyError as e:
        raise BadMagic(f"{path}: unknown family/method code {e.args[0]}") from e
    thetas = cursor.floats(L * d).reshape(L, d)
    omega = cursor.floats(L)

    seed, pairs_used, wall_seconds = 0, 0, 0.0
    if cursor.remaining() >= _MODEL_TRAILER.size:
        cost_code, seed, pairs_used, wall_seconds = cursor.unpack(_MODEL_TRAILER)
        try:
            cost_family = _invert(_COST_CODES)[cost_code]
        except KeyError as e:
            raise BadMagic(f"{path}: unknown cost family code {cost_code}") from e
    elif family is ProjectionFamily.STEREOGRAPHIC:
        cost_family = CostFamily.SPHERICAL_GEODESIC
    else:
        cost_family = CostFamily.SQ_EUCLIDEAN

    return AmortizedModel(
        omega=omega,
        pset=ProjectionSet(family, thetas, seed),
        cost=CostSpec(cost_family),
        epsilon=epsilon,
        ridge_lambda=ridge_lambda,
        trained_by=method,
        pairs_used=pairs_used,
        wall_seconds=wall_seconds,
    )

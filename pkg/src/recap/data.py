"""Dataset containers, CSV ingestion, bundled survey data, and simulators.

Two kinds of data are supported: plain capture histories (per-individual
detection counts over J occasions) and spatial trap-array detections (counts
per individual per trap plus trap coordinates and a rectangular support
region for activity centers).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .dist import rng_streams

__all__ = [
    "DataError",
    "CaptureHistory",
    "Region",
    "ScrData",
    "SimTruth",
    "load_capture_csv",
    "write_capture_csv",
    "load_scr_csv",
    "write_scr_csv",
    "builtin_salamander",
    "builtin_hare",
    "builtin_sim_demo",
    "simulate_m0",
    "simulate_scr",
]

REGION_BUFFER_M = 100.0  # default support margin beyond the trap array


class DataError(ValueError):
    """Invalid or inconsistent survey data."""


@dataclass(frozen=True, eq=False)
class CaptureHistory:
    """Detection counts for the observed individuals of a closed survey.

    ``y[i]`` is the number of occasions (out of ``J``) on which individual i
    was detected.  Only observed individuals are stored, so every count is in
    1..J; augmented all-zero histories never materialize.
    """

    y: np.ndarray
    J: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int64)
        object.__setattr__(self, "y", y)
        if y.ndim != 1 or y.size < 1:
            raise DataError("capture history needs at least one observed individual")
        if self.J < 1:
            raise DataError(f"occasion count must be >= 1, got {self.J}")
        if np.any(y < 1) or np.any(y > self.J):
            raise DataError(f"detection counts must lie in 1..{self.J}")

    @property
    def n(self) -> int:
        return int(self.y.size)


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangular support for activity centers (meters)."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if self.xmax < self.xmin or self.ymax < self.ymin:
            raise DataError("region must have xmax >= xmin and ymax >= ymin")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (
            (pts[:, 0] >= self.xmin)
            & (pts[:, 0] <= self.xmax)
            & (pts[:, 1] >= self.ymin)
            & (pts[:, 1] <= self.ymax)
        )

    def sample(self, rng, size: int) -> np.ndarray:
        xs = rng.uniform(self.xmin, self.xmax, size=size)
        ys = rng.uniform(self.ymin, self.ymax, size=size)
        return np.column_stack([xs, ys])


def _bounding_region(traps: np.ndarray, buffer: float = REGION_BUFFER_M) -> Region:
    return Region(
        xmin=float(traps[:, 0].min() - buffer),
        xmax=float(traps[:, 0].max() + buffer),
        ymin=float(traps[:, 1].min() - buffer),
        ymax=float(traps[:, 1].max() + buffer),
    )


@dataclass(frozen=True, eq=False)
class ScrData:
    """Spatial capture-recapture detections on a trap array.

    ``Y[i, l]`` counts detections of individual i at trap l over ``J``
    occasions.  Every observed individual has at least one positive count.
    """

    traps: np.ndarray
    Y: np.ndarray
    J: int
    region: Region

    def __post_init__(self):
        traps = np.asarray(self.traps, dtype=float)
        Y = np.asarray(self.Y, dtype=np.int64)
        object.__setattr__(self, "traps", traps)
        object.__setattr__(self, "Y", Y)
        if traps.ndim != 2 or traps.shape[1] != 2 or traps.shape[0] < 1:
            raise DataError("traps must be an Lx2 coordinate matrix with L >= 1")
        if Y.ndim != 2 or Y.shape[1] != traps.shape[0]:
            raise DataError("detection matrix must be n x L to match the trap array")
        if self.J < 1:
            raise DataError(f"occasion count must be >= 1, got {self.J}")
        if np.any(Y < 0) or np.any(Y > self.J):
            raise DataError(f"detection counts must lie in 0..{self.J}")
        if np.any(Y.sum(axis=1) < 1):
            raise DataError("every observed individual needs at least one detection")
        if not self.region.contains(traps).all():
            raise DataError("region must contain all trap coordinates")

    @property
    def n(self) -> int:
        return int(self.Y.shape[0])

    @property
    def L(self) -> int:
        return int(self.traps.shape[0])


@dataclass(frozen=True, eq=False)
class SimTruth:
    """Generative bookkeeping for a simulated survey (n <= N <= M)."""

    N: int
    n: int
    M: int
    z: np.ndarray | None = None
    centers: np.ndarray | None = None

    def __post_init__(self):
        if not (0 <= self.n <= self.N <= self.M):
            raise DataError(f"need n <= N <= M, got n={self.n}, N={self.N}, M={self.M}")


# ---------------------------------------------------------------------------
# CSV formats
#
# Capture file:    '# J=<int>' metadata line, header 'id,y', one row per
#                  observed individual.
# Trap-array file: '# J=<int>' and optional '# region=x0,x1,y0,y1' metadata,
#                  header 'trap_id,x,y,ind1,...,indn', one row per trap.
# ---------------------------------------------------------------------------


def _read_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().splitlines()


def _parse_metadata(lines):
    meta = {}
    body = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        if text.startswith("#"):
            item = text.lstrip("#").strip()
            if "=" in item:
                key, value = item.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        body.append((lineno, text))
    return meta, body


def load_capture_csv(path, J: int | None = None) -> CaptureHistory:
    """Read a capture-history CSV; ``J`` overrides the file metadata."""
    meta, body = _parse_metadata(_read_lines(path))
    if J is None:
        if "J" not in meta:
            raise DataError(f"{path}: no '# J=' metadata line and no J argument")
        J = int(meta["J"])
    if not body:
        raise DataError(f"{path}: no rows")
    header_line, header = body[0]
    if [c.strip() for c in header.split(",")] != ["id", "y"]:
        raise DataError(f"{path}: line {header_line}: expected header 'id,y'")
    counts = []
    for lineno, text in body[1:]:
        parts = [c.strip() for c in text.split(",")]
        if len(parts) != 2:
            raise DataError(f"{path}: malformed row at line {lineno}: {text!r}")
        try:
            y = int(parts[1])
        except ValueError as exc:
            raise DataError(f"{path}: malformed count at line {lineno}: {parts[1]!r}") from exc
        if y == 0:
            raise DataError(f"{path}: zero capture history at line {lineno}")
        if y < 0 or y > J:
            raise DataError(f"{path}: count {y} outside 1..{J} at line {lineno}")
        counts.append(y)
    if not counts:
        raise DataError(f"{path}: no data rows")
    return CaptureHistory(y=np.array(counts, dtype=np.int64), J=J)


def write_capture_csv(path, data: CaptureHistory) -> None:
    buf = io.StringIO()
    buf.write(f"# J={data.J}\n")
    buf.write("id,y\n")
    for i, y in enumerate(data.y, start=1):
        buf.write(f"{i},{int(y)}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def _format_coord(v: float) -> str:
    return f"{int(v)}" if float(v).is_integer() else repr(float(v))


def load_scr_csv(path, J: int | None = None) -> ScrData:
    """Read a trap-array CSV; region defaults to the trap bounding box + 100 m."""
    meta, body = _parse_metadata(_read_lines(path))
    if J is None:
        if "J" not in meta:
            raise DataError(f"{path}: no '# J=' metadata line and no J argument")
        J = int(meta["J"])
    if not body:
        raise DataError(f"{path}: no rows")
    header_line, header = body[0]
    cols = [c.strip() for c in header.split(",")]
    if cols[:3] != ["trap_id", "x", "y"] or len(cols) < 4:
        raise DataError(
            f"{path}: line {header_line}: expected header 'trap_id,x,y,ind1,...'"
        )
    n_ind = len(cols) - 3
    traps = []
    counts = []
    for lineno, text in body[1:]:
        parts = [c.strip() for c in text.split(",")]
        if len(parts) != len(cols):
            raise DataError(f"{path}: malformed row at line {lineno}: {text!r}")
        try:
            traps.append((float(parts[1]), float(parts[2])))
            counts.append([int(v) for v in parts[3:]])
        except ValueError as exc:
            raise DataError(f"{path}: malformed value at line {lineno}") from exc
    traps = np.array(traps, dtype=float)
    Y = np.array(counts, dtype=np.int64).T  # rows become individuals
    if "region" in meta:
        vals = [float(v) for v in meta["region"].split(",")]
        if len(vals) != 4:
            raise DataError(f"{path}: region metadata needs 4 values x0,x1,y0,y1")
        region = Region(xmin=vals[0], xmax=vals[1], ymin=vals[2], ymax=vals[3])
    else:
        region = _bounding_region(traps)
    if Y.shape[0] != n_ind:
        raise DataError(f"{path}: inconsistent individual columns")
    return ScrData(traps=traps, Y=Y, J=J, region=region)


def write_scr_csv(path, data: ScrData) -> None:
    buf = io.StringIO()
    buf.write(f"# J={data.J}\n")
    r = data.region
    buf.write(
        "# region="
        + ",".join(_format_coord(v) for v in (r.xmin, r.xmax, r.ymin, r.ymax))
        + "\n"
    )
    buf.write("trap_id,x,y," + ",".join(f"ind{i+1}" for i in range(data.n)) + "\n")
    for l in range(data.L):
        row = [str(l + 1), _format_coord(data.traps[l, 0]), _format_coord(data.traps[l, 1])]
        row += [str(int(v)) for v in data.Y[:, l]]
        buf.write(",".join(row) + "\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


# ---------------------------------------------------------------------------
# Bundled datasets
# ---------------------------------------------------------------------------


def builtin_salamander() -> CaptureHistory:
    """Red-cheeked salamander survey: J=4 occasions, n=93 observed.

    78 individuals were seen once, 11 twice, and 4 on three occasions.
    """
    y = np.concatenate([np.ones(78), np.full(11, 2), np.full(4, 3)])
    return CaptureHistory(y=y.astype(np.int64), J=4)


# Snowshoe hare live-trap survey, winter 2007: 7x12 grid of traps 50 m apart,
# J=5 occasions, 13 individuals.  Row: trap id, easting, northing, then the
# detection count for each individual at that trap.
_HARE_TABLE = """
 [1,]    0    0 0 0 0 0 0 0 0 0 0 0 0 0 0
 [2,]   50    0 0 0 0 0 0 0 0 0 0 0 0 0 0
 [3,]  100    0 1 0 0 0 0 0 0 0 0 0 0 0 0
 [4,]  150    0 0 0 0 0 0 0 0 0 0 0 0 0 0
 [5,]  200    0 0 0 0 0 0 0 0 0 0 0 0 0 0
 [6,]  250    0 0 1 0 0 0 0 0 0 0 0 0 0 0
 [7,]  300    0 0 0 0 0 0 0 0 0 0 0 0 0 0
 [8,]  350    0 0 0 1 0 0 0 0 0 0 0 0 0 0
 [9,]  400    0 0 0 0 0 0 0 0 0 0 0 0 0 0
[10,]  450    0 0 0 0 1 0 0 0 0 0 0 0 0 0
[11,]  500    0 0 0 0 1 2 0 0 0 0 0 0 0 0
[12,]  550    0 0 0 0 0 0 0 0 0 0 0 0 0 0
[13,]    0  -50 0 0 0 0 0 0 0 0 0 0 0 0 0
[14,]   50  -50 1 0 0 0 0 0 0 0 0 0 0 0 0
[15,]  100  -50 0 0 0 0 0 0 0 0 0 0 0 0 0
[16,]  150  -50 0 0 0 0 0 0 0 0 0 0 0 0 0
[17,]  200  -50 0 0 0 0 0 0 0 0 0 0 0 0 0
[18,]  250  -50 0 0 0 0 0 0 0 0 0 0 0 0 0
[19,]  300  -50 0 0 0 0 0 0 0 0 0 0 0 0 0
[20,]  350  -50 0 0 0 0 0 1 0 0 0 0 0 0 0
[21,]  400  -50 0 0 0 0 0 0 0 0 0 0 0 0 0
[22,]  450  -50 0 0 0 0 0 0 0 0 0 0 0 0 0
[23,]  500  -50 0 0 0 0 0 0 0 0 0 0 0 0 0
[24,]  550  -50 0 0 0 1 0 0 0 0 0 0 0 0 0
[25,]    0 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
[26,]   50 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
[27,]  100 -100 1 0 0 0 0 0 0 0 0 0 0 0 0
[28,]  150 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
[29,]  200 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
[30,]  250 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
[31,]  300 -100 0 0 2 0 0 0 1 0 0 0 0 0 0
[32,]  350 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
[33,]  400 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
[34,]  450 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
[35,]  500 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
[36,]  550 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
[37,]    0 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
[38,]   50 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
[39,]  100 -150 0 0 0 0 0 0 0 1 0 0 0 0 0
[40,]  150 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
[41,]  200 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
[42,]  250 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
[43,]  300 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
[44,]  350 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
[45,]  400 -150 0 0 2 0 0 0 0 0 0 0 0 0 0
[46,]  450 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
[47,]  500 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
[48,]  550 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
[49,]    0 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
[50,]   50 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
[51,]  100 -200 0 0 0 0 0 0 0 1 0 0 0 0 0
[52,]  150 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
[53,]  200 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
[54,]  250 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
[55,]  300 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
[56,]  350 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
[57,]  400 -200 0 0 0 0 0 0 0 0 1 0 0 0 0
[58,]  450 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
[59,]  500 -200 0 0 0 0 2 0 0 0 0 0 0 0 0
[60,]  550 -200 0 0 0 0 0 0 0 0 0 2 0 0 0
[61,]    0 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
[62,]   50 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
[63,]  100 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
[64,]  150 -250 0 0 0 0 0 0 0 1 0 0 0 0 0
[65,]  200 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
[66,]  250 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
[67,]  300 -250 1 0 0 0 0 0 0 0 0 0 0 0 0
[68,]  350 -250 0 0 0 0 0 0 0 0 2 0 0 0 0
[69,]  400 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
[70,]  450 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
[71,]  500 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
[72,]  550 -250 0 0 0 0 0 0 0 0 0 1 1 0 0
[73,]    0 -300 0 0 0 0 0 0 0 0 0 0 0 1 0
[74,]   50 -300 0 0 0 0 0 0 0 0 0 0 0 0 1
[75,]  100 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
[76,]  150 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
[77,]  200 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
[78,]  250 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
[79,]  300 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
[80,]  350 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
[81,]  400 -300 0 0 0 0 0 0 0 0 1 0 0 0 0
[82,]  450 -300 0 0 0 0 0 0 0 0 1 0 0 0 0
[83,]  500 -300 0 0 0 0 0 0 0 0 0 0 1 0 0
[84,]  550 -300 0 0 0 0 0 0 0 0 0 0 1 0 0
"""


def _parse_trap_table(text: str):
    traps = []
    counts = []
    for line in text.strip().splitlines():
        parts = line.split()
        traps.append((float(parts[1]), float(parts[2])))
        counts.append([int(v) for v in parts[3:]])
    return np.array(traps), np.array(counts, dtype=np.int64).T


def builtin_hare() -> ScrData:
    """Snowshoe hare trap-array survey: 84 traps, J=5, 13 individuals."""
    traps, Y = _parse_trap_table(_HARE_TABLE)
    return ScrData(traps=traps, Y=Y, J=5, region=_bounding_region(traps))


def builtin_sim_demo() -> tuple[CaptureHistory, SimTruth]:
    """Fixed simulated homogeneous dataset used by the equivalence demo.

    Generated once from M=100, membership 0.4, detection 0.25, J=3; kept as a
    frozen fixture so the demo and its reference results are reproducible.
    """
    y = np.array([1, 1, 1, 1, 1, 1, 1, 2, 2, 1, 1, 1, 1, 2, 2, 1, 1, 2, 1], dtype=np.int64)
    return CaptureHistory(y=y, J=3), SimTruth(N=39, n=19, M=100)


# ---------------------------------------------------------------------------
# Generative simulators
# ---------------------------------------------------------------------------


def simulate_m0(M: int, psi: float, p: float, J: int, seed: int):
    """Simulate a homogeneous survey; returns (history or None, truth).

    Membership is Bernoulli(psi) per candidate individual, detections are
    Binomial(J, p) for members; only members with a positive count appear in
    the capture history.  The history is None when nothing was detected.
    """
    if M < 1:
        raise DataError(f"superpopulation size must be >= 1, got {M}")
    if not (0.0 <= psi <= 1.0 and 0.0 <= p <= 1.0):
        raise DataError("probabilities must lie in [0,1]")
    rng = rng_streams(seed, 0)
    z = rng.random(M) < psi
    y = np.where(z, rng.binomial(J, p, size=M), 0)
    observed = y > 0
    truth = SimTruth(N=int(z.sum()), n=int(observed.sum()), M=M, z=z)
    if truth.n == 0:
        return None, truth
    return CaptureHistory(y=y[observed].astype(np.int64), J=J), truth


def simulate_scr(
    M: int,
    psi: float,
    beta0: float,
    beta1: float,
    traps,
    region: Region,
    J: int,
    seed: int,
):
    """Simulate a trap-array survey; returns (data or None, truth).

    Activity centers are uniform on the region; detection probability at trap
    l is inverse-logit(beta0 + beta1 * squared distance).  Each member (one
    shared membership indicator per individual) yields Binomial(J, p_il)
    counts at every trap; individuals with no detections anywhere are dropped.
    """
    traps = np.asarray(traps, dtype=float)
    if not region.contains(traps).all():
        raise DataError("region must contain the trap array")
    if not (0.0 <= psi <= 1.0):
        raise DataError("membership probability must lie in [0,1]")
    rng = rng_streams(seed, 0)
    centers = region.sample(rng, M)
    z = rng.random(M) < psi
    d2 = ((centers[:, None, :] - traps[None, :, :]) ** 2).sum(axis=2)
    probs = 1.0 / (1.0 + np.exp(-(beta0 + beta1 * d2)))
    Y = rng.binomial(J, probs)
    Y[~z] = 0
    observed = Y.sum(axis=1) > 0
    truth = SimTruth(N=int(z.sum()), n=int(observed.sum()), M=M, z=z, centers=centers)
    if truth.n == 0:
        return None, truth
    data = ScrData(traps=traps, Y=Y[observed], J=J, region=region)
    return data, truth

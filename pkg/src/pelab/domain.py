"""Masked-grid representation of bounded planar domains.

A domain lives on a lattice of cell centers ``origin + (i*h, j*h)``.  The
outermost ring of the lattice always lies outside the domain, so the
complement is nonempty and every domain cell has a full set of lattice
neighbours.  Removed segments (comb teeth, slits) are dilated to cells whose
center lies within ``h/2`` of the segment, which guarantees that a slit
disconnects the rows on either side of it at every resolution.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import ndimage

CellIndex = tuple[int, int]

KINDS = ("square", "comb", "double_comb", "slit", "annulus", "custom")

_STRUCT4 = ndimage.generate_binary_structure(2, 1)
_STRUCT8 = ndimage.generate_binary_structure(2, 2)
_OFFSETS4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
_OFFSETS8 = _OFFSETS4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))

# relative slack for geometric comparisons made in floating point
_GEOM_EPS = 1e-9


class DomainError(ValueError):
    """Raised when a domain specification or mask is invalid."""


class DisconnectedDomainError(DomainError):
    def __init__(self, sizes: list[int]):
        self.sizes = sizes
        super().__init__(
            f"sampled mask is disconnected: {len(sizes)} components, "
            f"two largest have {sizes[0]} and {sizes[1]} cells"
        )


def structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return _STRUCT4
    if connectivity == 8:
        return _STRUCT8
    raise DomainError(f"connectivity must be 4 or 8, got {connectivity}")


def offsets(connectivity: int):
    return _OFFSETS4 if connectivity == 4 else _OFFSETS8


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Bounded open set sampled at cell centers.

    ``mask[i, j]`` is true when the center ``origin + (i*h, j*h)`` lies in
    the domain.  Instances are immutable; the mask is stored read-only.
    """

    mask: np.ndarray
    h: float
    origin: tuple[float, float] = (0.0, 0.0)
    connectivity: int = 4
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    clipping: tuple = ()

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool, copy=True)
        if mask.ndim != 2:
            raise DomainError("mask must be two-dimensional")
        if not self.h > 0:
            raise DomainError(f"h must be positive, got {self.h}")
        structure(self.connectivity)
        if not mask.any():
            raise DomainError("empty mask")
        if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
            raise DomainError("domain cells must lie strictly inside the bounding box")
        labels, n = ndimage.label(mask, structure=structure(self.connectivity))
        if n > 1:
            sizes = sorted(np.bincount(labels.ravel())[1:].tolist(), reverse=True)
            raise DisconnectedDomainError(sizes)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "h", float(self.h))
        ids = np.full(mask.shape, -1, dtype=np.int64)
        ids[mask] = np.arange(int(mask.sum()))
        ids.setflags(write=False)
        object.__setattr__(self, "_ids", ids)

    @property
    def nx(self) -> int:
        return self.mask.shape[0]

    @property
    def ny(self) -> int:
        return self.mask.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def n_cells(self) -> int:
        return int(self._ids.max()) + 1

    @property
    def cell_ids(self) -> np.ndarray:
        """Array mapping lattice index to domain-cell id (-1 outside)."""
        return self._ids

    @property
    def measure(self) -> float:
        return self.n_cells * self.h**2

    def cells(self) -> np.ndarray:
        """(n_cells, 2) array of domain cell indices, in id order."""
        return np.argwhere(self.mask)

    def center(self, c: CellIndex) -> tuple[float, float]:
        return (self.origin[0] + c[0] * self.h, self.origin[1] + c[1] * self.h)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Center coordinate arrays of shape ``(nx, ny)``."""
        x = self.origin[0] + self.h * np.arange(self.nx)
        y = self.origin[1] + self.h * np.arange(self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def in_grid(self, c: CellIndex) -> bool:
        return 0 <= c[0] < self.nx and 0 <= c[1] < self.ny

    def is_inside(self, c: CellIndex) -> bool:
        return self.in_grid(c) and bool(self.mask[c[0], c[1]])

    def locate(self, point) -> CellIndex:
        """Lattice index whose center is nearest to ``point``."""
        i = int(round((point[0] - self.origin[0]) / self.h))
        j = int(round((point[1] - self.origin[1]) / self.h))
        return (min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1))

    def snap(self, point) -> CellIndex:
        """Nearest domain cell to ``point``; ties go to the smallest index."""
        X, Y = self.centers()
        d2 = (X - point[0]) ** 2 + (Y - point[1]) ** 2
        d2 = np.where(self.mask, d2, np.inf)
        best = d2.min()
        cand = np.argwhere(d2 <= best + _GEOM_EPS * self.h**2)
        return (int(cand[0][0]), int(cand[0][1]))

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.packbits(self.mask).tobytes())
        digest.update(repr((self.mask.shape, self.h, self.origin, self.connectivity)).encode())
        return digest.hexdigest()[:16]

    def boundary_cells(self) -> np.ndarray:
        """Lattice cells outside the domain that are 4-adjacent to it."""
        grown = ndimage.binary_dilation(self.mask, structure=_STRUCT4)
        return np.argwhere(grown & ~self.mask)

    def to_pbm(self) -> str:
        """Plain PBM (P1) text; row 0 is the top of the domain, 1 = inside."""
        rows = [" ".join("1" if v else "0" for v in self.mask[:, j]) for j in range(self.ny - 1, -1, -1)]
        return "P1\n# pelab mask h={!r} origin={!r}\n{} {}\n{}\n".format(
            self.h, list(self.origin), self.nx, self.ny, "\n".join(rows)
        )

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": self.params,
            "h": self.h,
            "origin": list(self.origin),
            "nx": self.nx,
            "ny": self.ny,
            "connectivity": self.connectivity,
            "mask": ["".join("1" if v else "0" for v in self.mask[:, j]) for j in range(self.ny - 1, -1, -1)],
            "clipping": list(self.clipping),
            "fingerprint": self.fingerprint(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GridDomain":
        rows = obj["mask"]
        ny = len(rows)
        mask = np.array([[ch == "1" for ch in row] for row in rows], dtype=bool)[::-1].T
        if mask.shape != (obj.get("nx", mask.shape[0]), obj.get("ny", ny)):
            raise DomainError("mask rows do not match nx, ny")
        return cls(
            mask=mask,
            h=obj["h"],
            origin=tuple(obj.get("origin", (0.0, 0.0))),
            connectivity=obj.get("connectivity", 4),
            kind=obj.get("kind", "custom"),
            params=obj.get("parameters", {}),
            clipping=tuple(obj.get("clipping", ())),
        )


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    parameters: dict = field(default_factory=dict)
    h: float = 1.0 / 32

    @classmethod
    def from_json(cls, obj: dict) -> "DomainSpec":
        if not isinstance(obj, dict):
            raise DomainError("domain spec must be a JSON object")
        for key in ("kind", "h"):
            if key not in obj:
                raise DomainError(f"domain spec is missing field '{key}'")
        extra = sorted(set(obj) - {"kind", "h", "parameters"})
        if extra:
            raise DomainError(f"domain spec has unknown field(s) {', '.join(map(repr, extra))}")
        params = obj.get("parameters", {})
        if not isinstance(params, dict):
            raise DomainError("field 'parameters' must be an object")
        try:
            h = float(obj["h"])
        except (TypeError, ValueError):
            raise DomainError(f"field 'h' must be a number, got {obj['h']!r}") from None
        return cls(kind=obj["kind"], parameters=params, h=h)

    def to_json(self) -> dict:
        return {"kind": self.kind, "parameters": self.parameters, "h": self.h}


def load_spec(text: str) -> DomainSpec:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return DomainSpec.from_json(obj)


# -- geometry ---------------------------------------------------------------


def _segment_distance(X, Y, seg) -> np.ndarray:
    x0, y0, x1, y1 = seg
    dx, dy = x1 - x0, y1 - y0
    L2 = dx * dx + dy * dy
    if L2 == 0:
        return np.hypot(X - x0, Y - y0)
    t = np.clip(((X - x0) * dx + (Y - y0) * dy) / L2, 0.0, 1.0)
    return np.hypot(X - (x0 + t * dx), Y - (y0 + t * dy))


def _box_grid(box, h):
    x0, y0, x1, y1 = box
    if not (x1 > x0 and y1 > y0):
        raise DomainError(f"degenerate box {box}")
    nx_f, ny_f = (x1 - x0) / h, (y1 - y0) / h
    NX, NY = int(round(nx_f)), int(round(ny_f))
    if abs(nx_f - NX) > 1e-6 or abs(ny_f - NY) > 1e-6:
        raise DomainError(f"box {box} is not a whole number of cells at h={h}")
    if NX < 2 or NY < 2:
        raise DomainError(f"h={h} too coarse for box {box}")
    x = x0 + h * np.arange(NX + 1)
    y = y0 + h * np.arange(NY + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    tol = _GEOM_EPS * h
    inside = (X > x0 + tol) & (X < x1 - tol) & (Y > y0 + tol) & (Y < y1 - tol)
    return X, Y, inside


def _remove_segments(X, Y, mask, segments, h):
    for seg in segments:
        mask &= _segment_distance(X, Y, seg) > h / 2 * (1 + _GEOM_EPS)
    return mask


def _clip_teeth(teeth, h):
    """Greedy right-to-left selection of resolvable teeth.

    ``teeth`` is a list of (label, x, segment) sorted by decreasing x.  A
    tooth is kept when its distance to the previously kept tooth (initially
    the right wall) and to the left wall are both at least ``2h``.
    """
    kept, omitted = [], []
    last_x = 1.0
    for label, x, seg in teeth:
        spacing = min(last_x - x, x)
        if spacing + _GEOM_EPS >= 2 * h:
            kept.append(seg)
            last_x = x
        else:
            omitted.append({"feature": "tooth", "index": label, "x": x, "spacing": spacing,
                            "reason": f"spacing {spacing:.6g} < 2h = {2 * h:.6g}"})
    return kept, omitted


def comb_teeth(count: int) -> list:
    """Teeth ``{1/n} x [0, 1/2]`` for ``n = 2 .. count + 1``."""
    return [(n, 1.0 / n, (1.0 / n, 0.0, 1.0 / n, 0.5)) for n in range(2, count + 2)]


def double_comb_teeth(count: int) -> list:
    """First ``count`` teeth of the double comb, by decreasing x.

    For ``n >= 2`` the comb has a bottom tooth ``{1/(2n)} x [0, 1 - 1/n]``
    and a top tooth ``{1/(2n+1)} x [1/n, 1]``.
    """
    teeth = []
    n = 2
    while len(teeth) < count:
        teeth.append((f"{n}b", 1.0 / (2 * n), (1.0 / (2 * n), 0.0, 1.0 / (2 * n), 1.0 - 1.0 / n)))
        if len(teeth) < count:
            teeth.append((f"{n}t", 1.0 / (2 * n + 1), (1.0 / (2 * n + 1), 1.0 / n, 1.0 / (2 * n + 1), 1.0)))
        n += 1
    return teeth


def _as_point(v, name):
    try:
        x, y = (float(t) for t in v)
    except (TypeError, ValueError):
        raise DomainError(f"parameter '{name}' must be a pair of numbers, got {v!r}") from None
    return x, y


def generate(spec: DomainSpec, connectivity: int = 4) -> GridDomain:
    """Sample the named domain at cell centers.

    Raises :class:`DomainError` for invalid parameters, an empty mask, or a
    disconnected sampling (the two largest component sizes are reported).
    """
    kind, p, h = spec.kind, dict(spec.parameters), spec.h
    if kind not in KINDS:
        raise DomainError(f"unknown kind '{kind}'; expected one of {', '.join(KINDS)}")
    if not h > 0:
        raise DomainError(f"field 'h' must be positive, got {h}")
    unit = (0.0, 0.0, 1.0, 1.0)
    clipping: list = []
    if kind == "square":
        X, Y, mask = _box_grid(unit, h)
    elif kind in ("comb", "double_comb"):
        count = p.get("teeth", 4)
        if not isinstance(count, int) or count < 0:
            raise DomainError(f"parameter 'teeth' must be a nonnegative integer, got {count!r}")
        teeth = comb_teeth(count) if kind == "comb" else double_comb_teeth(count)
        segments, clipping = _clip_teeth(teeth, h)
        X, Y, mask = _box_grid(unit, h)
        mask = _remove_segments(X, Y, mask, segments, h)
    elif kind == "slit":
        a = _as_point(p.get("start", (0.5, 0.5)), "start")
        b = _as_point(p.get("end", (1.0, 0.5)), "end")
        for q, name in ((a, "start"), (b, "end")):
            if not (0.0 <= q[0] <= 1.0 and 0.0 <= q[1] <= 1.0):
                raise DomainError(f"slit {name} {q} lies outside the unit box")
        X, Y, mask = _box_grid(unit, h)
        mask = _remove_segments(X, Y, mask, [(a[0], a[1], b[0], b[1])], h)
    elif kind == "annulus":
        r1 = float(p.get("r_inner", 0.25))
        r2 = float(p.get("r_outer", 0.5))
        c = _as_point(p.get("center", (0.5, 0.5)), "center")
        if not (0.0 <= r1 < r2):
            raise DomainError(f"annulus radii must satisfy 0 <= r_inner < r_outer, got {r1}, {r2}")
        X, Y, mask = _box_grid((c[0] - r2, c[1] - r2, c[0] + r2, c[1] + r2), h)
        R = np.hypot(X - c[0], Y - c[1])
        tol = _GEOM_EPS * h
        mask &= (R > r1 + tol) & (R < r2 - tol)
    else:  # custom
        box = p.get("box", unit)
        if len(box) != 4:
            raise DomainError("parameter 'box' must be [x0, y0, x1, y1]")
        X, Y, mask = _box_grid(tuple(float(t) for t in box), h)
        segs = p.get("segments", [])
        try:
            segs = [tuple(float(t) for t in s) for s in segs]
        except (TypeError, ValueError):
            raise DomainError("parameter 'segments' must be a list of [x0, y0, x1, y1]") from None
        if any(len(s) != 4 for s in segs):
            raise DomainError("parameter 'segments' must be a list of [x0, y0, x1, y1]")
        mask = _remove_segments(X, Y, mask, segs, h)
    if not mask.any():
        raise DomainError(f"{kind} domain is empty at h={h}")
    origin = (float(X[0, 0]), float(Y[0, 0]))
    return GridDomain(mask=mask, h=h, origin=origin, connectivity=connectivity,
                      kind=kind, params=p, clipping=tuple(clipping))


# -- adjacency --------------------------------------------------------------


def cell_neighbors(dom: GridDomain, c: CellIndex, connectivity: int | None = None) -> list[CellIndex]:
    """Domain cells adjacent to ``c`` under the domain's connectivity."""
    if not dom.is_inside(c):
        raise DomainError(f"cell {tuple(c)} is not in the domain")
    conn = dom.connectivity if connectivity is None else connectivity
    out = []
    for di, dj in offsets(conn):
        q = (c[0] + di, c[1] + dj)
        if dom.is_inside(q):
            out.append(q)
    return out


def _as_index_array(cells: Iterable[CellIndex]) -> np.ndarray:
    arr = np.array(sorted(set(map(tuple, cells))), dtype=np.int64)
    return arr.reshape(-1, 2)


def neighborhood(dom: GridDomain, A: Iterable[CellIndex], r: float) -> set[CellIndex]:
    """Domain cells whose center is within Euclidean distance ``r`` of ``A``.

    The ball is closed, so ``neighborhood(dom, A, 0) == A`` for domain cells.
    """
    if r < 0:
        raise DomainError("radius must be nonnegative")
    pts = _as_index_array(A)
    if len(pts) == 0:
        raise DomainError("neighborhood of an empty set")
    seed = np.zeros(dom.shape, dtype=bool)
    seed[pts[:, 0], pts[:, 1]] = True
    dist = ndimage.distance_transform_edt(~seed) * dom.h
    hit = (dist <= r * (1 + _GEOM_EPS) + 1e-15) & dom.mask
    return set(map(tuple, np.argwhere(hit).tolist()))


def components(mask: np.ndarray, connectivity: int = 4) -> tuple[np.ndarray, int]:
    return ndimage.label(mask, structure=structure(connectivity))


def cells_to_mask(dom: GridDomain, cells: Iterable[CellIndex]) -> np.ndarray:
    m = np.zeros(dom.shape, dtype=bool)
    arr = _as_index_array(cells)
    if len(arr):
        m[arr[:, 0], arr[:, 1]] = True
    return m


def mask_to_cells(m: np.ndarray) -> set[CellIndex]:
    return set(map(tuple, np.argwhere(m).tolist()))


def disk_cells(dom: GridDomain, center, r: float, inside_only: bool = False) -> set[CellIndex]:
    """Lattice cells with center in the closed disk ``|x - center| <= r``."""
    X, Y = dom.centers()
    m = np.hypot(X - center[0], Y - center[1]) <= r * (1 + _GEOM_EPS)
    if inside_only:
        m &= dom.mask
    return mask_to_cells(m)

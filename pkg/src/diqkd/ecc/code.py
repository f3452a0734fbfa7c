"""SC-LDPC code construction: protograph, coupling, lifting, adaptation.

A small regular protograph is chained L times with forward edge
spreading (width w = d_v - 1), lifted by replacing each coupled edge
with an M x M permutation block, and then adapted to the exact target
length and syndrome size: surplus variable nodes are removed (smallest
degree first) and surplus check nodes are merged pairwise (largest
degree first, union of adjacencies). A public shuffle permutation is
attached so that the noisier test-round bits spread evenly over the
codeword.

Lifting uses circulant permutations with greedily chosen shifts that
avoid length-4 cycles; random per-edge permutations leave an
M-independent number of 4-cycles, which measurably hurts belief
propagation at small lifting factors.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

MAGIC = b"SCLC"
FORMAT_VERSION = 1
DEFAULT_COUPLING = 80
MAX_CHECK_DEGREE = 64


class ConstructionError(ValueError):
    """Raised when no code with the requested shape can be built."""


@dataclass(frozen=True)
class Protograph:
    """Biadjacency template: entry [i, j] counts edges between check i
    and variable j (multi-edges allowed)."""

    biadjacency: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.biadjacency, dtype=np.int64)
        if b.ndim != 2 or (b < 0).any():
            raise ValueError("biadjacency must be a 2-d non-negative matrix")
        if (b.sum(axis=1) == 0).any() or (b.sum(axis=0) == 0).any():
            raise ValueError("every check and variable needs at least one edge")
        object.__setattr__(self, "biadjacency", b)

    @classmethod
    def regular(cls, d_v: int, d_c: int) -> "Protograph":
        """Smallest protograph of the (d_v, d_c)-regular ensemble:
        (d_v/g) x (d_c/g) with all entries g, g = gcd(d_v, d_c)."""
        if d_v < 2 or d_c <= d_v:
            raise ValueError("need d_v >= 2 and d_c > d_v")
        g = math.gcd(d_v, d_c)
        return cls(np.full((d_v // g, d_c // g), g, dtype=np.int64))

    @property
    def n_checks(self) -> int:
        return self.biadjacency.shape[0]

    @property
    def n_vars(self) -> int:
        return self.biadjacency.shape[1]

    def design_rate(self) -> float:
        return 1.0 - self.n_checks / self.n_vars

    def coupled_rate(self, coupling: int, width: int) -> float:
        """Design rate after chaining `coupling` copies with spread width
        `width`: 1 - (L + w) n_c / (L n_v)."""
        return 1.0 - (coupling + width) * self.n_checks / (coupling * self.n_vars)


@dataclass
class ScLdpcCode:
    """Sparse parity-check structure plus construction lineage and the
    public shuffle seed.

    Edges are stored as parallel arrays (row index, column index), sorted
    by (row, column); helper views by row and by column are prebuilt for
    the decoder.
    """

    n_code: int
    m_code: int
    edge_row: np.ndarray
    edge_col: np.ndarray
    lineage: Dict[str, int]
    shuffle_seed: int

    def __post_init__(self):
        order = np.lexsort((self.edge_col, self.edge_row))
        self.edge_row = np.ascontiguousarray(self.edge_row[order], dtype=np.int64)
        self.edge_col = np.ascontiguousarray(self.edge_col[order], dtype=np.int64)
        col_deg = np.bincount(self.edge_col, minlength=self.n_code)
        if (col_deg < 2).any():
            raise ConstructionError("adaptation left a column with degree < 2")
        self._shuffle = None

    @property
    def shuffle(self) -> np.ndarray:
        """Public permutation of [n_code], derived from the shuffle seed."""
        if self._shuffle is None:
            rng = np.random.default_rng(np.random.PCG64(self.shuffle_seed))
            self._shuffle = rng.permutation(self.n_code)
        return self._shuffle

    @property
    def n_edges(self) -> int:
        return len(self.edge_row)

    def row_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_row, minlength=self.m_code)

    def save(self, path) -> None:
        """Serialize: header, per-row delta-encoded varint adjacency,
        shuffle seed."""
        lin = self.lineage
        out = bytearray()
        out += MAGIC
        out += struct.pack(
            "<HQQHHIHQQQ",
            FORMAT_VERSION,
            self.n_code,
            self.m_code,
            lin["d_v"],
            lin["d_c"],
            lin["coupling"],
            lin["width"],
            lin["lifting"],
            lin["removed_vars"],
            lin["merged_checks"],
        )
        rows: List[List[int]] = [[] for _ in range(self.m_code)]
        for r, c in zip(self.edge_row, self.edge_col):
            rows[r].append(int(c))
        for adj in rows:
            _write_varint(out, len(adj))
            prev = 0
            for c in adj:  # already sorted ascending
                _write_varint(out, c - prev)
                prev = c
        out += struct.pack("<Q", self.shuffle_seed)
        with open(path, "wb") as f:
            f.write(bytes(out))

    @classmethod
    def load(cls, path) -> "ScLdpcCode":
        with open(path, "rb") as f:
            data = f.read()
        if data[:4] != MAGIC:
            raise ValueError("not a code file")
        (version, n_code, m_code, d_v, d_c, coupling, width, lifting, removed,
         merged) = struct.unpack_from("<HQQHHIHQQQ", data, 4)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported code format version {version}")
        pos = 4 + struct.calcsize("<HQQHHIHQQQ")
        er, ec = [], []
        for r in range(m_code):
            deg, pos = _read_varint(data, pos)
            c = 0
            for _ in range(deg):
                delta, pos = _read_varint(data, pos)
                c += delta
                er.append(r)
                ec.append(c)
        (seed,) = struct.unpack_from("<Q", data, pos)
        return cls(
            n_code=n_code,
            m_code=m_code,
            edge_row=np.array(er, dtype=np.int64),
            edge_col=np.array(ec, dtype=np.int64),
            lineage={
                "d_v": d_v,
                "d_c": d_c,
                "coupling": coupling,
                "width": width,
                "lifting": lifting,
                "removed_vars": removed,
                "merged_checks": merged,
            },
            shuffle_seed=seed,
        )


def _write_varint(out: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _read_varint(data: bytes, pos: int) -> Tuple[int, int]:
    result = shift = 0
    while True:
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def choose_protograph(
    n: int, m: int, coupling: int = DEFAULT_COUPLING
) -> Tuple[Protograph, int, int]:
    """Pick the regular family whose coupled design rate is closest below
    1 - m/n. Returns (protograph, d_v, d_c).

    Candidates have d_v in {3, 4, 5} (degree >= 3 is required for the
    coupled ensemble's error-floor behaviour) and d_c up to 64.
    """
    target = 1.0 - m / n
    # pairwise merging at most halves the row count, so the coupled
    # overhead must not exceed twice the target overhead
    floor_rate = 1.0 - 2.0 * m / n
    best = None
    for d_v in (3, 4, 5):
        w = d_v - 1
        for d_c in range(d_v + 1, MAX_CHECK_DEGREE + 1):
            proto = Protograph.regular(d_v, d_c)
            rate = proto.coupled_rate(coupling, w)
            if floor_rate <= rate <= target and (best is None or rate > best[0]):
                best = (rate, d_v, d_c)
    if best is None:
        raise ConstructionError(
            f"no supported family has coupled rate within "
            f"[{floor_rate:.4f}, {target:.4f}] for n={n}, m={m}"
        )
    _, d_v, d_c = best
    return Protograph.regular(d_v, d_c), d_v, d_c


def _coupled_edges(base: Protograph, coupling: int, width: int) -> List[Tuple[int, int]]:
    """Chain `coupling` copies, spreading each variable's edges over the
    offsets 0..width cyclically (phase shifted by the column index so
    that every check position is fed by several variable positions)."""
    n_c, n_v = base.n_checks, base.n_vars
    b = base.biadjacency
    edges = []
    for t in range(coupling):
        for j in range(n_v):
            k = 0
            for i in range(n_c):
                for _ in range(int(b[i, j])):
                    off = (j + k) % (width + 1)
                    edges.append(((t + off) * n_c + i, t * n_v + j))
                    k += 1
    return edges


def _circulant_shifts(
    edges: List[Tuple[int, int]], lifting: int, rng: np.random.Generator
) -> List[int]:
    """Greedy per-edge circulant shifts avoiding lifted 4-cycles.

    A 4-cycle through block edges (r,c), (r,c2), (r2,c2), (r2,c) appears
    iff s(r,c) - s(r2,c) + s(r2,c2) - s(r,c2) = 0 mod M; each new edge
    picks, among random candidates, a shift hitting the fewest such
    congruences.
    """
    by_row: Dict[int, List[Tuple[int, int]]] = {}
    by_col: Dict[int, List[Tuple[int, int]]] = {}
    shifts = []
    for (r, c) in edges:
        forbidden: Dict[int, int] = {}
        for (c2, s_rc2) in by_row.get(r, ()):
            for (r2, s_r2c2) in by_col.get(c2, ()):
                if r2 == r:
                    continue
                for (c3, s_r2c) in by_row.get(r2, ()):
                    if c3 == c:
                        bad = (s_r2c - s_r2c2 + s_rc2) % lifting
                        forbidden[bad] = forbidden.get(bad, 0) + 1
        if forbidden:
            cands = rng.integers(0, lifting, size=24)
            s = int(min(cands, key=lambda v: forbidden.get(int(v) % lifting, 0)))
        else:
            s = int(rng.integers(0, lifting))
        s %= lifting
        shifts.append(s)
        by_row.setdefault(r, []).append((c, s))
        by_col.setdefault(c, []).append((r, s))
    return shifts


def build_code(
    n: int,
    m: int,
    base: Protograph,
    coupling: int = DEFAULT_COUPLING,
    lifting_hint: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    width: Optional[int] = None,
) -> ScLdpcCode:
    """Couple, lift and adapt `base` to exactly n columns and m rows.

    The lifting factor defaults to ceil(n / (coupling * n_vars)). Surplus
    variables are removed smallest-degree-first (ties by lowest column
    index); surplus checks are merged pairwise largest-degree-first, with
    ties spread evenly over the chain so the merge damage is not
    concentrated near the chain boundaries that seed the decoding wave.
    """
    if rng is None:
        rng = np.random.default_rng()
    d_v = int(base.biadjacency.sum(axis=0).max())
    w = (d_v - 1) if width is None else width
    n_c, n_v = base.n_checks, base.n_vars
    lifting = lifting_hint or math.ceil(n / (coupling * n_v))
    if lifting < 1:
        raise ConstructionError("lifting factor must be >= 1")
    n_lifted = coupling * n_v * lifting
    m_lifted = (coupling + w) * n_c * lifting
    if n_lifted < n:
        raise ConstructionError(
            f"lifted length {n_lifted} below target {n}; increase the lifting factor"
        )
    if m_lifted < m:
        raise ConstructionError(
            f"lifted row count {m_lifted} below target syndrome length {m}"
        )

    proto_edges = _coupled_edges(base, coupling, w)
    shifts = _circulant_shifts(proto_edges, lifting, rng)
    ks = np.arange(lifting, dtype=np.int64)
    er_parts, ec_parts = [], []
    for (r, c), s in zip(proto_edges, shifts):
        er_parts.append(r * lifting + (ks + s) % lifting)
        ec_parts.append(c * lifting + ks)
    er = np.concatenate(er_parts)
    ec = np.concatenate(ec_parts)

    # remove surplus variables: smallest degree first, ties by lowest index
    n_remove = n_lifted - n
    col_deg = np.bincount(ec, minlength=n_lifted)
    order = np.lexsort((np.arange(n_lifted), col_deg))
    keep = np.ones(n_lifted, dtype=bool)
    keep[order[:n_remove]] = False
    new_col = -np.ones(n_lifted, dtype=np.int64)
    new_col[keep] = np.arange(n)
    kept_edges = keep[ec]
    er, ec = er[kept_edges], new_col[ec[kept_edges]]

    # merge surplus checks pairwise: largest degree first; among equal
    # degrees pick rows evenly spaced along the chain, and pair each
    # selected row with a distant partner
    n_merge = m_lifted - m
    if 2 * n_merge > m_lifted:
        raise ConstructionError(
            f"cannot merge {n_merge} check pairs out of {m_lifted} rows"
        )
    if n_merge > 0:
        row_deg = np.bincount(er, minlength=m_lifted)
        order = np.lexsort((np.arange(m_lifted), -row_deg))
        degs = row_deg[order]
        thresh = degs[2 * n_merge - 1]
        above = order[degs > thresh]
        tied = np.sort(order[degs == thresh])
        need = 2 * n_merge - len(above)
        picks = np.floor(np.linspace(0, len(tied) - 1, need)).astype(np.int64)
        selected = np.sort(np.concatenate([above, tied[picks]]))
        targets, merged_away = selected[:n_merge], selected[n_merge:]
        row_map = np.arange(m_lifted, dtype=np.int64)
        row_map[merged_away] = targets
        er = row_map[er]
        gone = np.zeros(m_lifted, dtype=bool)
        gone[merged_away] = True
        new_row = -np.ones(m_lifted, dtype=np.int64)
        new_row[~gone] = np.arange(m)
        er = new_row[er]

    # union semantics for merged rows: drop duplicate (row, col) pairs
    packed = np.unique(er * np.int64(n) + ec)
    er = packed // n
    ec = packed % n

    return ScLdpcCode(
        n_code=n,
        m_code=m,
        edge_row=er,
        edge_col=ec,
        lineage={
            "d_v": d_v,
            "d_c": int(base.biadjacency.sum(axis=1).max()),
            "coupling": coupling,
            "width": w,
            "lifting": lifting,
            "removed_vars": n_remove,
            "merged_checks": n_merge,
        },
        shuffle_seed=int(rng.integers(0, 2**63)),
    )


def build_for_target(
    n: int,
    m: int,
    rng: Optional[np.random.Generator] = None,
    coupling: int = DEFAULT_COUPLING,
) -> ScLdpcCode:
    """Select the protograph family for (n, m) and build the code."""
    base, _, _ = choose_protograph(n, m, coupling)
    return build_code(n, m, base, coupling=coupling, rng=rng)


def encode(code: ScLdpcCode, bits: np.ndarray) -> np.ndarray:
    """Syndrome of `bits`: parities over each row's adjacency after the
    public shuffle is applied to the input."""
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) != code.n_code:
        raise ValueError(f"expected {code.n_code} bits, got {len(bits)}")
    shuffled = bits[code.shuffle]
    syn = np.bincount(
        code.edge_row, weights=shuffled[code.edge_col].astype(np.float64),
        minlength=code.m_code,
    )
    return (syn.astype(np.int64) % 2).astype(np.uint8)

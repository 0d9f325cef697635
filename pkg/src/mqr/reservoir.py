"""Reservoir unitary construction and connectivity-scheme enumeration.

A reservoir is the fixed map U = Rx(theta_g) * Uc * UM applied after the
data-encoding layer. UM is either per-module Ising ZZ dynamics (distance
decaying couplings theta_j / |i-j|^alpha up to a cutoff range) or per-module
Haar-random unitaries; Uc couples modules with uniform-angle ZZ edges. All Z
diagonals commute, so for the ZZ kind the intra- and inter-module angles are
fused into a single phase vector (one pass over the 2^n amplitudes) without
changing the UM-then-Uc semantics.

Global qubit indices are 1-based and contiguous per module: module mu owns
indices offset_mu + 1 .. offset_mu + n_mu.

Scheme text encodings (used in configs and result CSVs):
  ``bx:<R>``                 boundary-crossing connections with cross range R
  ``arb:<R>+<k-l,k-l,...>``  R-range edges plus explicit extra cross edges
  ``par:<bits>``             one-to-one parallel edges, two modules; bit 1 is
                             the leftmost character and stands for edge
                             (1, 1+n0)
  ``par:<bitsA>|<bitsB>``    three modules, one mask per neighboring pair
"""

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .statevector import (
    StateVector,
    apply_block_batch,
    diagonal_batch,
    rx_layer_batch,
)

MAX_CUE_DIM = 2 ** 13


@dataclass(frozen=True)
class ModuleLayout:
    """Qubit counts per module, e.g. (5, 5) or (5, 5, 5)."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 1 or any(s < 1 for s in sizes):
            raise ValueError(f"every module needs at least one qubit, got {sizes}")

    @property
    def m(self):
        return len(self.sizes)

    @property
    def n_total(self):
        return sum(self.sizes)

    @property
    def offsets(self):
        """offsets[mu] such that module mu owns offsets[mu]+1 .. offsets[mu]+sizes[mu]."""
        out = []
        acc = 0
        for s in self.sizes:
            out.append(acc)
            acc += s
        return tuple(out)

    def module_of(self, q):
        """Module index (0-based) owning global qubit q (1-based)."""
        if not 1 <= q <= self.n_total:
            raise IndexError(f"qubit {q} out of range 1..{self.n_total}")
        acc = 0
        for mu, s in enumerate(self.sizes):
            acc += s
            if q <= acc:
                return mu
        raise AssertionError("unreachable")

    def encode(self):
        return ",".join(str(s) for s in self.sizes)


@dataclass(frozen=True)
class IntraCoupling:
    """Distance-decaying ZZ angles inside one module.

    Pairwise angle theta_j / |i-j|^alpha for 0 < |i-j| <= cutoff, zero beyond.
    theta_j absorbs the evolution time (angle = coupling * time).
    """

    theta_j: float
    alpha: float
    cutoff: int

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.cutoff < 0:
            raise ValueError(f"cutoff must be >= 0, got {self.cutoff}")


def intra_angle(i, j, coupling):
    """Pairwise angle between local qubit indices i and j of one module."""
    if i == j:
        raise ValueError("intra-module pair needs two distinct qubits")
    dist = abs(i - j)
    if dist > coupling.cutoff:
        return 0.0
    return coupling.theta_j / dist ** coupling.alpha


@dataclass(frozen=True)
class InterEdge:
    """ZZ edge between two qubits in different modules, canonical k < l."""

    k: int
    l: int
    theta_c: float

    def __post_init__(self):
        if not self.k < self.l:
            raise ValueError(f"edge must be ordered k < l, got ({self.k}, {self.l})")


def boundary_cross_edges(layout, r_cross, theta_c):
    """All edges (k, l) with k in module 1, l in module 2, and l - k <= r_cross."""
    if layout.m != 2:
        raise ValueError(f"boundary-crossing needs exactly 2 modules, got {layout.m}")
    if r_cross < 0:
        raise ValueError(f"r_cross must be >= 0, got {r_cross}")
    n1 = layout.sizes[0]
    n = layout.n_total
    return [
        InterEdge(k, l, theta_c)
        for k in range(1, n1 + 1)
        for l in range(n1 + 1, n + 1)
        if l - k <= r_cross
    ]


def n_cross(r_cross):
    """Number of boundary-crossing edges at cross range r_cross."""
    return r_cross * (r_cross + 1) // 2


def _cross_pairs(layout):
    """All (k, l) pairs between modules 1 and 2, sorted."""
    n1 = layout.sizes[0]
    n = layout.n_total
    return [(k, l) for k in range(1, n1 + 1) for l in range(n1 + 1, n + 1)]


@dataclass(frozen=True)
class BoundaryCross:
    """Uniform connections across the two chain ends, cross range r_cross."""

    r_cross: int
    theta_c: float = 0.0

    def edges(self, layout):
        return boundary_cross_edges(layout, self.r_cross, self.theta_c)

    def connection_count(self, layout):
        return len(self.edges(layout))

    def encode(self):
        return f"bx:{self.r_cross}"


@dataclass(frozen=True)
class ArbitraryEdges:
    """r_cross boundary edges plus explicit extra cross-module edges."""

    r_cross: int
    extra: tuple
    theta_c: float = 0.0

    def __post_init__(self):
        extra = tuple(sorted((int(k), int(l)) for k, l in self.extra))
        object.__setattr__(self, "extra", extra)
        if len(set(extra)) != len(extra):
            raise ValueError(f"duplicate extra edges: {extra}")

    @property
    def n_a(self):
        return len(self.extra)

    def edges(self, layout):
        base = boundary_cross_edges(layout, self.r_cross, self.theta_c)
        base_pairs = {(e.k, e.l) for e in base}
        valid = set(_cross_pairs(layout))
        for k, l in self.extra:
            if (k, l) not in valid:
                raise ValueError(f"({k}, {l}) is not a cross-module pair")
            if (k, l) in base_pairs:
                raise ValueError(
                    f"({k}, {l}) duplicates a boundary edge of r_cross={self.r_cross}")
        return base + [InterEdge(k, l, self.theta_c) for k, l in self.extra]

    def connection_count(self, layout):
        return len(self.edges(layout))

    def encode(self):
        tail = ",".join(f"{k}-{l}" for k, l in self.extra)
        return f"arb:{self.r_cross}+{tail}"


@dataclass(frozen=True)
class ParallelMask:
    """One-to-one parallel edges between equal-size neighboring modules.

    One '0'/'1' string per neighboring module pair; character i-1 controls
    edge (i + offset_mu, i + offset_mu+1), so bit 1 is the leftmost character.
    """

    masks: tuple
    theta_c: float = 0.0

    def __post_init__(self):
        masks = tuple(str(m) for m in self.masks)
        object.__setattr__(self, "masks", masks)
        if not masks:
            raise ValueError("need at least one mask")
        for m in masks:
            if not m or set(m) - {"0", "1"}:
                raise ValueError(f"mask must be a non-empty 0/1 string, got {m!r}")

    @property
    def n_ell(self):
        return sum(m.count("1") for m in self.masks)

    @property
    def connected(self):
        """True when every neighboring module pair has at least one edge."""
        return all("1" in m for m in self.masks)

    def edges(self, layout):
        if len(set(layout.sizes)) != 1:
            raise ValueError(f"parallel connections need equal module sizes, got {layout.sizes}")
        n0 = layout.sizes[0]
        if len(self.masks) != layout.m - 1:
            raise ValueError(
                f"need {layout.m - 1} masks for {layout.m} modules, got {len(self.masks)}")
        offsets = layout.offsets
        out = []
        for p, mask in enumerate(self.masks):
            if len(mask) != n0:
                raise ValueError(f"mask {mask!r} has length {len(mask)}, expected {n0}")
            for i in range(1, n0 + 1):
                if mask[i - 1] == "1":
                    out.append(InterEdge(i + offsets[p], i + offsets[p + 1], self.theta_c))
        return out

    def connection_count(self, layout):
        return self.n_ell

    def encode(self):
        return "par:" + "|".join(self.masks)


@dataclass(frozen=True)
class NoEdges:
    """No inter-module connections; the only scheme valid for one module."""

    theta_c: float = 0.0

    def edges(self, layout):
        return []

    def connection_count(self, layout):
        return 0

    def encode(self):
        return "none"


def parse_scheme(text, theta_c=0.0):
    """Parse a scheme text encoding; theta_c is attached to the result."""
    if text == "none":
        return NoEdges(theta_c)
    head, sep, tail = text.partition(":")
    if not sep:
        raise ValueError(f"malformed scheme {text!r}")
    if head == "bx":
        return BoundaryCross(int(tail), theta_c)
    if head == "par":
        return ParallelMask(tuple(tail.split("|")), theta_c)
    if head == "arb":
        r_text, sep, edge_text = tail.partition("+")
        if not sep:
            raise ValueError(f"malformed arbitrary scheme {text!r}")
        extra = []
        if edge_text:
            for token in edge_text.split(","):
                k, _, l = token.partition("-")
                extra.append((int(k), int(l)))
        return ArbitraryEdges(int(r_text), tuple(extra), theta_c)
    raise ValueError(f"unknown scheme family {head!r}")


def enumerate_parallel_configs(layout, theta_c=0.0):
    """Every parallel-connection configuration: 2^n0 masks for two modules,
    2^(2 n0) mask pairs for three."""
    if len(set(layout.sizes)) != 1:
        raise ValueError(f"parallel connections need equal module sizes, got {layout.sizes}")
    if layout.m not in (2, 3):
        raise ValueError(f"parallel enumeration supports 2 or 3 modules, got {layout.m}")
    n0 = layout.sizes[0]
    single = [format(j, f"0{n0}b") for j in range(2 ** n0)]
    if layout.m == 2:
        return [ParallelMask((m,), theta_c) for m in single]
    return [ParallelMask((a, b), theta_c) for a in single for b in single]


def enumerate_arbitrary_configs(layout, r_cross, n_a, theta_c=0.0):
    """Every way to add n_a cross edges outside the r_cross boundary set."""
    base = {(e.k, e.l) for e in boundary_cross_edges(layout, r_cross, theta_c)}
    remaining = [p for p in _cross_pairs(layout) if p not in base]
    if not 0 <= n_a <= len(remaining):
        raise ValueError(
            f"n_a must be in [0, {len(remaining)}] for r_cross={r_cross}, got {n_a}")
    return [
        ArbitraryEdges(r_cross, combo, theta_c)
        for combo in itertools.combinations(remaining, n_a)
    ]


def sample_cue(dim, seed):
    """Haar-random unitary: QR of a complex Ginibre matrix with the
    R-diagonal phase correction. Deterministic for a fixed seed."""
    if dim < 2 or dim & (dim - 1):
        raise ValueError(f"dim must be a power of two >= 2, got {dim}")
    if dim > MAX_CUE_DIM:
        raise ValueError(f"dim {dim} exceeds the {MAX_CUE_DIM} cap")
    rng = np.random.default_rng(seed)
    re = rng.standard_normal((dim, dim))
    im = rng.standard_normal((dim, dim))
    z = (re + 1j * im) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))[None, :]
    return q


@dataclass(frozen=True)
class ZZKind:
    """Per-module Ising ZZ dynamics with one shared coupling law."""

    coupling: IntraCoupling


@dataclass(frozen=True)
class CUEKind:
    """Per-module Haar-random unitaries, one seed per module."""

    seeds: tuple

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True)
class ReservoirSpec:
    """Everything needed to build U = Rx(theta_g) * Uc * UM deterministically."""

    layout: ModuleLayout
    kind: object  # ZZKind | CUEKind
    scheme: object  # BoundaryCross | ArbitraryEdges | ParallelMask
    theta_g: float

    def __post_init__(self):
        if isinstance(self.kind, CUEKind) and len(self.kind.seeds) != self.layout.m:
            raise ValueError(
                f"need one CUE seed per module ({self.layout.m}), got {len(self.kind.seeds)}")

    def edges(self):
        return self.scheme.edges(self.layout)

    def diagonal_phases(self):
        """The fused ZZ diagonal: intra + inter for the ZZ kind, inter-module
        edges only for the CUE kind."""
        if isinstance(self.kind, ZZKind):
            return build_zz_phase(self.layout, self.kind.coupling, self.edges())
        return build_zz_phase(self.layout, None, self.edges())

    def module_unitaries(self):
        """Dense per-module unitaries (CUE kind only; empty list for ZZ)."""
        if isinstance(self.kind, ZZKind):
            return []
        return [
            sample_cue(2 ** size, seed)
            for size, seed in zip(self.layout.sizes, self.kind.seeds)
        ]

    def describe(self):
        """Canonical key=value descriptor of the reservoir side of a run."""
        parts = [f"layout={self.layout.encode()}"]
        if isinstance(self.kind, ZZKind):
            c = self.kind.coupling
            parts += [
                "kind=zz",
                f"theta_j={c.theta_j!r}",
                f"alpha={c.alpha!r}",
                f"cutoff={c.cutoff}",
            ]
        else:
            parts += ["kind=cue", "seeds=" + ",".join(str(s) for s in self.kind.seeds)]
        parts += [
            f"scheme={self.scheme.encode()}",
            f"theta_c={self.scheme.theta_c!r}",
            f"theta_g={self.theta_g!r}",
        ]
        return ";".join(parts)

    def with_theta_c(self, theta_c):
        return replace(self, scheme=replace(self.scheme, theta_c=theta_c))


def _pair_angles(layout, coupling, edges):
    """Flatten intra couplings and inter edges to (p, q, angle) triples with
    global 1-based indices p < q."""
    pairs = []
    if coupling is not None and coupling.theta_j != 0.0:
        for offset, size in zip(layout.offsets, layout.sizes):
            for i in range(1, size + 1):
                for j in range(i + 1, size + 1):
                    angle = intra_angle(i, j, coupling)
                    if angle != 0.0:
                        pairs.append((offset + i, offset + j, angle))
    n = layout.n_total
    seen = set()
    for e in edges:
        if not (1 <= e.k <= n and 1 <= e.l <= n):
            raise ValueError(f"edge ({e.k}, {e.l}) out of range 1..{n}")
        if layout.module_of(e.k) == layout.module_of(e.l):
            raise ValueError(f"edge ({e.k}, {e.l}) does not cross modules")
        if (e.k, e.l) in seen:
            raise ValueError(f"duplicate edge ({e.k}, {e.l})")
        seen.add((e.k, e.l))
        if e.theta_c != 0.0:
            pairs.append((e.k, e.l, e.theta_c))
    return pairs


def build_zz_phase(layout, coupling, edges):
    """Diagonal of exp(-i sum_pairs theta_pq Z_p Z_q) over the full register.

    phases[z] = exp(-i sum theta_pq s_p s_q) with s = 1 - 2 z_bit; includes
    both intra-module couplings (when given) and inter-module edges.
    """
    n = layout.n_total
    dim = 2 ** n
    angle = np.zeros(dim, dtype=np.float64)
    idx = np.arange(dim, dtype=np.int64)
    for p, q, theta in _pair_angles(layout, coupling, edges):
        # s_p * s_q = 1 - 2 (z_p xor z_q)
        bits = ((idx >> (n - p)) ^ (idx >> (n - q))) & 1
        angle += theta * (1 - 2 * bits)
    return np.exp(-1j * angle)


def apply_reservoir(state, spec):
    """Run the full reservoir on an encoded state: UM, then Uc, then the
    Rx(theta_g) layer on every qubit."""
    n = spec.layout.n_total
    if state.n_qubits != n:
        raise ValueError(
            f"state has {state.n_qubits} qubits, layout needs {n}")
    amps = state.amplitudes.reshape(1, -1).copy()
    for offset, u in zip(spec.layout.offsets, spec.module_unitaries()):
        apply_block_batch(amps, offset + 1, u, n)
    diagonal_batch(amps, spec.diagonal_phases())
    rx_layer_batch(amps, n, spec.theta_g)
    return StateVector(n, amps[0])


def apply_reservoir_batch(amps, spec, diag=None, mats=None):
    """In-place batch version of apply_reservoir on an (N, 2^n) array.

    diag and mats may be passed to reuse a prebuilt diagonal / CUE matrices
    across chunks.
    """
    n = spec.layout.n_total
    if diag is None:
        diag = spec.diagonal_phases()
    if mats is None:
        mats = spec.module_unitaries()
    for offset, u in zip(spec.layout.offsets, mats):
        apply_block_batch(amps, offset + 1, u, n)
    diagonal_batch(amps, diag)
    rx_layer_batch(amps, n, spec.theta_g)

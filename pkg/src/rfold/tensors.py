"""Block-shaped tensors: the data model for r-fold forms.

An r-fold form is a rank-m tensor whose slots split into r contiguous blocks,
each totally antisymmetric.  Components are stored all-covariant in the
canonical ("tilde") slot order, indexed by full index tuples; the component
map omits zero entries but its semantics are dense over all n^m tuples.
Scalars are either exact jets (curved-space backend) or complex amplitudes
(spectral backend); both support +, -, * natively, so every operation below
is generic over the two scalar kinds.

All tensors are immutable values; operations return fresh tensors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .jets import Jet
from .rationals import RAT_ZERO, is_rational, rational


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class BlockShape:
    """Form structure: dimension n and the rank of each antisymmetric block.

    A zero block rank is permitted as an internal transient (a collapsed
    block): it keeps its position so that a later block differential can
    target it again.
    """

    dim: int
    ranks: tuple

    def __post_init__(self):
        object.__setattr__(self, "ranks", tuple(int(x) for x in self.ranks))
        for x in self.ranks:
            if x < 0:
                raise ShapeError("negative block rank")

    @property
    def r(self) -> int:
        return len(self.ranks)

    @property
    def total_rank(self) -> int:
        return sum(self.ranks)

    def block_slots(self, i: int) -> range:
        """Slot positions of block i (1-based block index)."""
        if not 1 <= i <= self.r:
            raise ShapeError(f"block index {i} out of range 1..{self.r}")
        start = sum(self.ranks[: i - 1])
        return range(start, start + self.ranks[i - 1])

    def with_rank(self, i: int, new_rank: int) -> "BlockShape":
        ranks = list(self.ranks)
        ranks[i - 1] = new_rank
        return BlockShape(self.dim, tuple(ranks))

    def append_block(self, rank: int) -> "BlockShape":
        return BlockShape(self.dim, self.ranks + (rank,))

    def drop_zero_blocks(self) -> tuple:
        """Collapse zero-rank blocks; returns (shape, positions removed)."""
        removed = tuple(i + 1 for i, x in enumerate(self.ranks) if x == 0)
        kept = tuple(x for x in self.ranks if x > 0)
        return BlockShape(self.dim, kept), removed


def _value_is_zero(v) -> bool:
    if isinstance(v, Jet):
        return v.is_zero()
    return v == 0


def scalar_scale(v, q):
    """Multiply a component scalar by an exact rational weight."""
    if isinstance(v, Jet):
        return v * q
    if isinstance(q, int):
        return v * q
    qq = rational(q)
    return v * (int(qq.numerator) / int(qq.denominator))


class RFoldTensor:
    """Immutable component map over index tuples.

    Jet-kind tensors keep a uniform retained order across all components:
    mixed-order contributions are truncated to the least order present (or to
    an explicit ``order_cap`` from the producing operation).  This makes the
    "valid up to order k" claim of every stored coefficient trustworthy even
    when individual contributions cancel to zero and are pruned.
    """

    __slots__ = ("shape", "kind", "comps", "__weakref__")

    def __init__(
        self,
        shape: BlockShape,
        kind: str,
        comps: dict,
        _clean: bool = False,
        order_cap: int | None = None,
    ):
        if kind not in ("jet", "complex"):
            raise ShapeError(f"unknown scalar kind {kind!r}")
        self.shape = shape
        self.kind = kind
        if not _clean:
            comps = {k: v for k, v in comps.items() if not _value_is_zero(v)}
        if kind == "jet" and comps:
            omin = min(v.order for v in comps.values())
            if order_cap is not None and order_cap < omin:
                omin = order_cap
            if any(v.order > omin for v in comps.values()):
                comps = {k: v.truncate(omin) for k, v in comps.items()}
                comps = {k: v for k, v in comps.items() if not v.is_zero()}
        self.comps = comps

    @staticmethod
    def zero(shape: BlockShape, kind: str) -> "RFoldTensor":
        return RFoldTensor(shape, kind, {}, _clean=True)

    def is_zero(self) -> bool:
        return not self.comps

    def get(self, key):
        return self.comps.get(key)

    def __repr__(self):
        return (
            f"RFoldTensor(shape={self.shape.ranks}, dim={self.shape.dim}, "
            f"kind={self.kind}, nnz={len(self.comps)})"
        )

    def max_abs(self):
        """Largest absolute component: exact rational for jets, float for complex."""
        if self.kind == "jet":
            m = RAT_ZERO
            for v in self.comps.values():
                c = v.max_abs_coeff()
                if c > m:
                    m = c
            return m
        return max((abs(v) for v in self.comps.values()), default=0.0)

    def jet_order(self):
        """Minimum retained jet order over stored components (jet kind only)."""
        if self.kind != "jet" or not self.comps:
            return None
        return min(v.order for v in self.comps.values())


def _check_same(a: RFoldTensor, b: RFoldTensor):
    if a.shape != b.shape or a.kind != b.kind:
        raise ShapeError(f"shape/kind mismatch: {a} vs {b}")


def tensor_add(a: RFoldTensor, b: RFoldTensor) -> RFoldTensor:
    _check_same(a, b)
    out = dict(a.comps)
    for k, v in b.comps.items():
        u = out.get(k)
        s = v if u is None else u + v
        if _value_is_zero(s):
            out.pop(k, None)
        else:
            out[k] = s
    cap = None
    if a.kind == "jet":
        oa, ob = a.jet_order(), b.jet_order()
        caps = [o for o in (oa, ob) if o is not None]
        cap = min(caps) if caps else None
    return RFoldTensor(a.shape, a.kind, out, _clean=True, order_cap=cap)


def tensor_neg(a: RFoldTensor) -> RFoldTensor:
    return RFoldTensor(a.shape, a.kind, {k: -v for k, v in a.comps.items()}, _clean=True)


def tensor_sub(a: RFoldTensor, b: RFoldTensor) -> RFoldTensor:
    return tensor_add(a, tensor_neg(b))


def tensor_scale(a: RFoldTensor, q) -> RFoldTensor:
    """Scale by an exact rational (both kinds) or by a complex/float factor."""
    if isinstance(q, (int, Fraction)) or is_rational(q):
        if q == 0:
            return RFoldTensor.zero(a.shape, a.kind)
        return RFoldTensor(
            a.shape, a.kind, {k: scalar_scale(v, q) for k, v in a.comps.items()}, _clean=True
        )
    return RFoldTensor(a.shape, a.kind, {k: v * q for k, v in a.comps.items()})


def perm_sign(p) -> int:
    """Sign of a permutation given as a tuple/list of distinct ints."""
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def arrangement_sign(values) -> int:
    """Sign of the arrangement of distinct values relative to sorted order."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    return perm_sign(order)


def permute_slots(
    a: RFoldTensor,
    perm,
    new_shape: BlockShape,
    *,
    reantisymmetrize: bool = False,
    check: bool = True,
) -> RFoldTensor:
    """Relabel slots: old slot j lands at position perm[j] of the new tensor.

    The caller must either guarantee that the permuted components satisfy the
    new shape's block antisymmetry, request re-antisymmetrization, or disable
    the check for internal plumbing steps.
    """
    m = a.shape.total_rank
    if sorted(perm) != list(range(m)) or new_shape.total_rank != m:
        raise ShapeError("invalid slot permutation")
    out = {}
    for k, v in a.comps.items():
        k2 = [0] * m
        for j, pos in enumerate(perm):
            k2[pos] = k[j]
        out[tuple(k2)] = v
    t = RFoldTensor(new_shape, a.kind, out, _clean=True)
    if reantisymmetrize:
        for i in range(1, new_shape.r + 1):
            t = antisymmetrize_block(t, i)
    elif check and not is_block_antisymmetric(t):
        raise ShapeError("permuted tensor violates block antisymmetry")
    return t


def antisymmetrize_slots(a: RFoldTensor, slots) -> RFoldTensor:
    """Alternation (average with signs) over the given slot positions."""
    slots = list(slots)
    kfact = 1
    for i in range(2, len(slots) + 1):
        kfact *= i
    if len(slots) < 2:
        return a
    weight = rational(1, kfact)
    out = {}
    for key, v in a.comps.items():
        vals = [key[s] for s in slots]
        base = scalar_scale(v, weight)
        for p in itertools.permutations(range(len(slots))):
            k2 = list(key)
            for i, s in enumerate(slots):
                k2[s] = vals[p[i]]
            k2 = tuple(k2)
            contrib = base if perm_sign(p) == 1 else -base
            u = out.get(k2)
            s2 = contrib if u is None else u + contrib
            if _value_is_zero(s2):
                out.pop(k2, None)
            else:
                out[k2] = s2
    return RFoldTensor(a.shape, a.kind, out, _clean=True)


def antisymmetrize_block(a: RFoldTensor, i: int) -> RFoldTensor:
    return antisymmetrize_slots(a, a.shape.block_slots(i))


def alternate_all(a: RFoldTensor) -> RFoldTensor:
    """Total antisymmetrization over every slot."""
    return antisymmetrize_slots(a, range(a.shape.total_rank))


def is_block_antisymmetric(a: RFoldTensor) -> bool:
    if a.kind != "jet":
        return tensor_sub(a, _antisym_all_blocks(a)).max_abs() < 1e-10
    return tensor_sub(a, _antisym_all_blocks(a)).is_zero()


def _antisym_all_blocks(a: RFoldTensor) -> RFoldTensor:
    t = a
    for i in range(1, a.shape.r + 1):
        if a.shape.ranks[i - 1] >= 2:
            t = antisymmetrize_block(t, i)
    return t


# -- metric plumbing ----------------------------------------------------


def metric_rows(g: dict, n: int) -> list:
    """dict[(a,b)] -> value reorganized as rows[a] = [(b, value), ...]."""
    rows = [[] for _ in range(n)]
    for (x, y), v in g.items():
        if not _value_is_zero(v):
            rows[x].append((y, v))
    return rows


def raise_slot(a: RFoldTensor, slot: int, g_inv_rows: list) -> RFoldTensor:
    out = {}
    for key, v in a.comps.items():
        d = key[slot]
        for c, gcd in g_inv_rows[d]:
            k2 = key[:slot] + (c,) + key[slot + 1:]
            term = gcd * v
            u = out.get(k2)
            s = term if u is None else u + term
            if _value_is_zero(s):
                out.pop(k2, None)
            else:
                out[k2] = s
    return RFoldTensor(a.shape, a.kind, out, _clean=True)


def contract(a: RFoldTensor, slot_a: int, slot_b: int, g_inv: dict) -> RFoldTensor:
    """Metric contraction of two distinct slots; block ranks drop accordingly."""
    if slot_a == slot_b:
        raise ShapeError("contraction slots must be distinct")
    m = a.shape.total_rank
    if not (0 <= slot_a < m and 0 <= slot_b < m):
        raise ShapeError("slot out of range")
    ranks = list(a.shape.ranks)
    for s in (slot_a, slot_b):
        pos = 0
        for bi, rk in enumerate(ranks):
            if pos <= s < pos + a.shape.ranks[bi]:
                ranks[bi] -= 1
                break
            pos += a.shape.ranks[bi]
    new_shape = BlockShape(a.shape.dim, tuple(ranks))
    lo, hi = min(slot_a, slot_b), max(slot_a, slot_b)
    out = {}
    for key, v in a.comps.items():
        g = g_inv.get((key[slot_a], key[slot_b]))
        if g is None or _value_is_zero(g):
            continue
        k2 = key[:lo] + key[lo + 1: hi] + key[hi + 1:]
        term = g * v
        u = out.get(k2)
        s = term if u is None else u + term
        if _value_is_zero(s):
            out.pop(k2, None)
        else:
            out[k2] = s
    return RFoldTensor(new_shape, a.kind, out, _clean=True)


def pointwise_product(a: RFoldTensor, b: RFoldTensor, g_inv_rows: list):
    """Full contraction (a, b) with every slot of b raised by the inverse metric.

    Returns a scalar of the tensors' kind (a jet or a complex number).
    """
    _check_same(a, b)
    m = a.shape.total_rank
    b_up = b
    for s in range(m):
        b_up = raise_slot(b_up, s, g_inv_rows)
    acc = None
    for key, v in a.comps.items():
        w = b_up.comps.get(key)
        if w is None:
            continue
        term = v * w
        acc = term if acc is None else acc + term
    if acc is None:
        if a.kind == "jet":
            example = next(iter(a.comps.values()), None) or next(iter(b.comps.values()), None)
            dim = a.shape.dim
            order = example.order if example is not None else 0
            return Jet.zero(dim, order)
        return 0j
    return acc


# -- double-form specifics ----------------------------------------------


def _require_double(a: RFoldTensor):
    if a.shape.r != 2:
        raise ShapeError("operation requires a double form (r = 2)")


def trace_double(a: RFoldTensor, g_inv: dict) -> RFoldTensor:
    """Contract the leading slots of the two blocks of a double (q,p)-form.

    Collapsed blocks (rank 0) are retained internally so follow-up block
    operators still know which position disappeared.
    """
    _require_double(a)
    q, p = a.shape.ranks
    if q < 1 or p < 1:
        raise ShapeError("trace requires both block ranks >= 1")
    return contract(a, 0, q, g_inv)


def transpose_double(a: RFoldTensor) -> RFoldTensor:
    """Interchange the two blocks of a double form."""
    _require_double(a)
    q, p = a.shape.ranks
    new_shape = BlockShape(a.shape.dim, (p, q))
    perm = [p + j for j in range(q)] + [j for j in range(p)]
    return permute_slots(a, perm, new_shape, check=False)


def symmetric_part_pp(a: RFoldTensor) -> RFoldTensor:
    return tensor_scale(tensor_add(a, transpose_double(a)), rational(1, 2))


def antisymmetric_part_pp(a: RFoldTensor) -> RFoldTensor:
    return tensor_scale(tensor_sub(a, transpose_double(a)), rational(1, 2))


def project_riemann_candidate(a: RFoldTensor) -> RFoldTensor:
    """Project a double (2,2)-form onto curvature-type algebraic symmetries.

    The output is antisymmetric in both blocks, pair symmetric, and its cyclic
    part vanishes; genuine curvature tensors are fixed points.
    """
    _require_double(a)
    if a.shape.ranks != (2, 2):
        raise ShapeError("Riemann candidate projection requires shape (2,2)")
    s = antisymmetrize_block(antisymmetrize_block(a, 1), 2)
    s = symmetric_part_pp(s)
    # For a pair-symmetric, block-antisymmetric tensor the cyclic (first
    # Bianchi) defect equals the totally antisymmetric part; remove it.
    return tensor_sub(s, alternate_all(s))


def bianchi_cyclic_part(a: RFoldTensor) -> RFoldTensor:
    """T_{a[bcd]}: alternation over the last three slots of a (2,2)-form."""
    return antisymmetrize_slots(a, [1, 2, 3])


def tensor_product_metric_pair(g1: dict, g2: dict, pairing, shape: BlockShape, kind: str) -> RFoldTensor:
    """Components X[k] = g1[(k[i1], k[j1])] * g2[(k[i2], k[j2])] for fixed slot wiring."""
    (i1, j1), (i2, j2) = pairing
    n = shape.dim
    out = {}
    for key in itertools.product(range(n), repeat=shape.total_rank):
        v1 = g1.get((key[i1], key[j1]))
        if v1 is None or _value_is_zero(v1):
            continue
        v2 = g2.get((key[i2], key[j2]))
        if v2 is None or _value_is_zero(v2):
            continue
        out[key] = v1 * v2
    return RFoldTensor(shape, kind, out, _clean=True)


def project_weyl_candidate(a: RFoldTensor, g: dict, g_inv: dict, g_inv_rows: list) -> RFoldTensor:
    """Trace-free part of a Riemann candidate (its Weyl part).

    Implemented by the standard removal of the trace and double-trace pieces
    with dimension-dependent coefficients; validated by the fixed-point test
    on computed conformal curvature tensors.
    """
    n = a.shape.dim
    if n < 3:
        raise ShapeError("Weyl projection requires dimension >= 3")
    r = project_riemann_candidate(a)
    ric = trace_double(r, g_inv)
    scal = trace_double(ric, g_inv).comps.get(())
    shape = a.shape
    kind = a.kind

    def gg(i1, j1, i2, j2):
        return tensor_product_metric_pair(g, g, ((i1, j1), (i2, j2)), shape, kind)

    def gric(i1, j1, i2, j2):
        ric_map = {k: v for k, v in ric.comps.items()}
        return tensor_product_metric_pair(g, ric_map, ((i1, j1), (i2, j2)), shape, kind)

    # E_abcd = g_a[c Ric_d]b - g_b[c Ric_d]a
    half = rational(1, 2)
    E = tensor_scale(
        tensor_sub(
            tensor_sub(gric(0, 2, 3, 1), gric(0, 3, 2, 1)),
            tensor_sub(gric(1, 2, 3, 0), gric(1, 3, 2, 0)),
        ),
        half,
    )
    # F_abcd = g_a[c g_d]b
    F = tensor_scale(tensor_sub(gg(0, 2, 3, 1), gg(0, 3, 2, 1)), half)
    c1 = rational(2, n - 2)
    c2 = rational(2, (n - 1) * (n - 2))
    if scal is None:
        Fs = RFoldTensor.zero(shape, kind)
    else:
        Fs = RFoldTensor(shape, kind, {k: scal * v for k, v in F.comps.items()})
    return tensor_add(tensor_sub(r, tensor_scale(E, c1)), tensor_scale(Fs, c2))


def pointwise_like_scalar(t: RFoldTensor):
    """Extract the scalar value of a rank-0 tensor (possibly with collapsed blocks)."""
    if t.shape.total_rank != 0:
        raise ShapeError("not a scalar tensor")
    if t.comps:
        return t.comps[()]
    if t.kind == "jet":
        return None  # caller substitutes a zero jet of appropriate order
    return 0j


def scalar_tensor(shape_dim: int, kind: str, value, r_blocks=(0, 0)) -> RFoldTensor:
    """Wrap a scalar as an r-fold form with all-zero block ranks."""
    shape = BlockShape(shape_dim, tuple(r_blocks))
    if _value_is_zero(value):
        return RFoldTensor.zero(shape, kind)
    return RFoldTensor(shape, kind, {(): value}, _clean=True)


def collapse_zero_blocks(a: RFoldTensor) -> tuple:
    """Public-output form: drop zero-rank blocks, reporting their positions."""
    shape, removed = a.shape.drop_zero_blocks()
    if not removed:
        return a, removed
    return RFoldTensor(shape, a.kind, dict(a.comps), _clean=True), removed

"""Geometries: connection and curvature data derived from a metric jet.

A geometry bundles the metric, its exact inverse, Christoffel symbols, the
curvature tensors, and the volume form, all as jets about a single base
point.  Charts in the built-in catalog are chosen so that |det g| is the
square of a rational jet, keeping the volume form exact; metrics violating
this are rejected rather than approximated.

The geometry object also acts as the curved-space evaluation context for the
operator layer: it knows how to differentiate (covariant derivative with the
new slot appended as its own rank-1 block) and how to raise indices.
"""

from __future__ import annotations

import itertools
import weakref

from .jets import (
    Jet,
    JetError,
    jet_determinant,
    jet_invert_scalar,
    jet_matrix_inverse,
    jet_sqrt,
)
from .rationals import rational, rational_from_string
from .tensors import (
    BlockShape,
    RFoldTensor,
    arrangement_sign,
    contract,
    metric_rows,
    perm_sign,
    project_weyl_candidate,
    raise_slot,
)


class GeometryError(ValueError):
    pass


class Geometry:
    """Immutable bundle of metric + derived curvature data (all exact jets)."""

    kind = "jet"

    def __init__(self, name, g_mat, order):
        n = len(g_mat)
        if order < 2:
            raise GeometryError("jet order must be at least 2 (curvature consumes two orders)")
        for a in range(n):
            for b in range(n):
                if not (g_mat[a][b] == g_mat[b][a]):
                    raise GeometryError("metric must be symmetric")
        self.name = name
        self.n = n
        self.order = order
        self.g_mat = g_mat
        self.g = {
            (a, b): g_mat[a][b]
            for a in range(n)
            for b in range(n)
            if not g_mat[a][b].is_zero()
        }
        self.g_inv_mat = jet_matrix_inverse(g_mat)
        self.g_inv = {
            (a, b): self.g_inv_mat[a][b]
            for a in range(n)
            for b in range(n)
            if not self.g_inv_mat[a][b].is_zero()
        }
        self.g_rows = metric_rows(self.g, n)
        self.g_inv_rows = metric_rows(self.g_inv, n)

        det = jet_determinant(g_mat)
        det0 = det.constant_term()
        if det0 == 0:
            raise GeometryError("degenerate metric at base point")
        self.eps = 1 if det0 > 0 else -1
        det_abs = det if self.eps > 0 else -det
        try:
            self.vol = jet_sqrt(det_abs)
        except JetError as exc:
            raise GeometryError(
                "metric determinant is not the square of a rational jet; "
                "choose a chart with exact volume form"
            ) from exc

        self._build_connection_and_curvature()
        self._grad_cache = weakref.WeakKeyDictionary()
        # Property flags drive identity-check applicability; catalog builders
        # overwrite them with exact knowledge.
        self.is_flat = self.riemann.is_zero()
        self.ricci_flat = self.ricci.is_zero()
        self.parallel_ricci = None
        self.locally_symmetric = None
        self._infer_flags()

    def _build_connection_and_curvature(self):
        n, order = self.n, self.order
        dg = [[[self.g_mat[a][b].partial(c) for c in range(n)] for b in range(n)] for a in range(n)]
        half = rational(1, 2)
        gamma = {}
        for a in range(n):
            for b in range(n):
                for c in range(b, n):
                    acc = Jet.zero(n, order - 1)
                    for d in range(n):
                        gad = self.g_inv_mat[a][d]
                        if gad.is_zero():
                            continue
                        acc = acc + gad * (dg[d][c][b] + dg[d][b][c] - dg[b][c][d])
                    acc = acc * half
                    if not acc.is_zero():
                        gamma[(a, b, c)] = acc
                        if b != c:
                            gamma[(a, c, b)] = acc
        self.gamma = gamma
        by_upper = {}
        for (a, b, c), v in gamma.items():
            by_upper.setdefault(a, []).append((b, c, v))
        self.gamma_by_upper = by_upper  # upper index -> [(deriv index, slot index, jet)]

        # R^d_{abc} from the commutator of covariant derivatives on a 1-form,
        # then lowered on the first slot; components then carry the standard
        # curvature symmetries in slot order (d, a, b, c).
        def G(x, y, z):
            return self.gamma.get((x, y, z))

        rie_up = {}
        for d, a, b, c in itertools.product(range(n), repeat=4):
            if b >= c:
                continue  # antisymmetric in (b, c); fill both at the end
            term = Jet.zero(n, order - 2)
            g1 = G(d, c, a)
            if g1 is not None:
                term = term + g1.partial(b)
            g2 = G(d, b, a)
            if g2 is not None:
                term = term - g2.partial(c)
            for f in range(n):
                gfa_c = G(f, c, a)
                gdf_b = G(d, b, f)
                if gfa_c is not None and gdf_b is not None:
                    term = term + gfa_c * gdf_b
                gfa_b = G(f, b, a)
                gdf_c = G(d, c, f)
                if gfa_b is not None and gdf_c is not None:
                    term = term - gfa_b * gdf_c
            if not term.is_zero():
                rie_up[(d, a, b, c)] = term
                rie_up[(d, a, c, b)] = -term

        shape22 = BlockShape(n, (2, 2))
        rie = {}
        for (d, a, b, c), v in rie_up.items():
            for e in range(n):
                ged = self.g_mat[e][d]
                if ged.is_zero():
                    continue
                key = (e, a, b, c)
                t = ged * v
                u = rie.get(key)
                s = t if u is None else u + t
                if s.is_zero():
                    rie.pop(key, None)
                else:
                    rie[key] = s
        self.riemann = RFoldTensor(shape22, "jet", rie, _clean=True)
        self.ricci = contract(self.riemann, 0, 2, self.g_inv)
        scal = contract(self.ricci, 0, 1, self.g_inv)
        self.scalar = scal.comps.get((), Jet.zero(n, order - 2))
        if self.riemann.is_zero():
            self.weyl = RFoldTensor.zero(shape22, "jet")
        elif n >= 3:
            self.weyl = project_weyl_candidate(self.riemann, self.g, self.g_inv, self.g_inv_rows)
        else:
            self.weyl = RFoldTensor.zero(shape22, "jet")

    def _infer_flags(self):
        if self.is_flat:
            self.parallel_ricci = True
            self.locally_symmetric = True
            return
        try:
            self.parallel_ricci = self.ricci_flat or self.grad(self.ricci).is_zero()
        except JetError:
            self.parallel_ricci = False
        try:
            self.locally_symmetric = self.grad(self.riemann).is_zero()
        except JetError:
            self.locally_symmetric = False

    # -- evaluation-context interface used by the operator layer --------

    def zero_scalar(self):
        return Jet.zero(self.n, self.order)

    def grad(self, t: RFoldTensor) -> RFoldTensor:
        """Covariant derivative with the derivative slot appended as a new block.

        Results are cached per tensor (tensors are immutable), since block
        differentials, codifferentials and Laplacians all consume the same
        gradient.
        """
        cached = self._grad_cache.get(t)
        if cached is not None:
            return cached
        result = self._covariant_derivative(t)
        self._grad_cache[t] = result
        return result

    def _covariant_derivative(self, t: RFoldTensor) -> RFoldTensor:
        n = self.n
        m = t.shape.total_rank
        out = {}

        def acc(key, val):
            u = out.get(key)
            s = val if u is None else u + val
            if s.is_zero():
                out.pop(key, None)
            else:
                out[key] = s

        for key, v in t.comps.items():
            for e in range(n):
                acc(key + (e,), v.partial(e))
            # grad_e T_{..a..} = dT - sum Gamma^c_{e a} T_{..c..}: the stored
            # slot value is Gamma's upper index, the output slot its lower one.
            for s in range(m):
                for e, a, gam in self.gamma_by_upper.get(key[s], ()):
                    acc(key[:s] + (a,) + key[s + 1:] + (e,), -(gam * v))
        # A derivative consumes one retained order; cap the whole result so no
        # component claims validity its partial-derivative path cannot back.
        cap = None if t.jet_order() is None else t.jet_order() - 1
        return RFoldTensor(t.shape.append_block(1), "jet", out, _clean=True, order_cap=cap)

    def raise_slot(self, t: RFoldTensor, slot: int) -> RFoldTensor:
        return raise_slot(t, slot, self.g_inv_rows)

    @property
    def curvature_zero(self) -> bool:
        return self.is_flat

    def eta_tensor(self) -> RFoldTensor:
        """The volume n-form as a single-block tensor."""
        n = self.n
        comps = {}
        for p in itertools.permutations(range(n)):
            sign = perm_sign(p)
            comps[p] = self.vol if sign == 1 else -self.vol
        return RFoldTensor(BlockShape(n, (n,)), "jet", comps, _clean=True)


def build_geometry(g_mat, order: int, name: str = "custom") -> Geometry:
    return Geometry(name, g_mat, order)


def covariant_derivative(t: RFoldTensor, geom: Geometry) -> RFoldTensor:
    return geom.grad(t)


def hodge_dual_block(t: RFoldTensor, i: int, geom) -> RFoldTensor:
    """Dual of block i: contract it against the volume form with 1/rank! weight."""
    n = geom.n
    ranks = t.shape.ranks
    ni = ranks[i - 1]
    if ni > n:
        raise GeometryError("block rank exceeds dimension")
    slots = list(t.shape.block_slots(i))
    t_up = t
    for s in slots:
        t_up = geom.raise_slot(t_up, s)
    weight = rational(1, 1)
    for k in range(2, ni + 1):
        weight = weight / k
    lo = slots[0] if slots else sum(ranks[: i - 1])
    new_shape = t.shape.with_rank(i, n - ni)
    out = {}
    vol = geom.vol if geom.kind == "jet" else None
    for key, v in t_up.comps.items():
        b = key[lo: lo + ni]
        if len(set(b)) != ni:
            continue
        rest = [x for x in range(n) if x not in b]
        base = v * weight if geom.kind == "jet" else v * (int(weight.numerator) / int(weight.denominator))
        if vol is not None:
            base = vol * base
        for c in itertools.permutations(rest):
            sign = perm_sign(b + c)
            k2 = key[:lo] + c + key[lo + ni:]
            val = base if sign == 1 else -base
            u = out.get(k2)
            s = val if u is None else u + val
            if (s.is_zero() if isinstance(s, Jet) else s == 0):
                out.pop(k2, None)
            else:
                out[k2] = s
    return RFoldTensor(new_shape, t.kind, out, _clean=True)


# -- built-in catalog ----------------------------------------------------


def flat_euclidean(order: int, n: int = 4) -> Geometry:
    g = [[Jet.constant(n, order, 1 if a == b else 0) for b in range(n)] for a in range(n)]
    geom = Geometry(f"flat-euclidean({n})", g, order)
    geom.parallel_ricci = True
    geom.locally_symmetric = True
    return geom


def flat_lorentzian(order: int, n: int = 4) -> Geometry:
    g = [
        [Jet.constant(n, order, (-1 if a == 0 else 1) if a == b else 0) for b in range(n)]
        for a in range(n)
    ]
    geom = Geometry(f"flat-lorentzian({n})", g, order)
    geom.parallel_ricci = True
    geom.locally_symmetric = True
    return geom


def constant_curvature(curv, order: int, n: int = 4) -> Geometry:
    """Conformal chart g_ab = delta_ab / (1 + (K/4)|u|^2)^2 about u = 0."""
    curv = rational(curv)
    f = Jet.constant(n, order, 1)
    quarter = curv / 4
    for i in range(n):
        ui = Jet.variable(n, order, i)
        f = f + (ui * ui) * quarter
    psi = jet_invert_scalar(f)
    psi2 = psi * psi
    zero = Jet.zero(n, order)
    g = [[psi2 if a == b else zero for b in range(n)] for a in range(n)]
    geom = Geometry(f"constcurv({curv})", g, order)
    geom.parallel_ricci = True
    geom.locally_symmetric = True
    return geom


def schwarzschild(mass, radius, order: int) -> Geometry:
    """Isotropic chart about the exterior base point (t, x, y, z) = (0, r0, 0, 0).

    Requires r0 > M/2 so the base point lies outside the horizon sphere of
    the isotropic radial coordinate.
    """
    n = 4
    mass = rational(mass)
    radius = rational(radius)
    if not (mass > 0 and radius > mass / 2):
        raise GeometryError("need mass > 0 and base radius r0 > M/2 (exterior point)")
    u1, u2, u3 = (Jet.variable(n, order, i) for i in (1, 2, 3))
    x = u1 + Jet.constant(n, order, radius)
    rho_sq = x * x + u2 * u2 + u3 * u3
    rho = jet_sqrt(rho_sq)
    w = jet_invert_scalar(rho) * (mass / 2)  # M / (2 rho)
    one = Jet.constant(n, order, 1)
    phi = one + w
    lapse = (one - w) * jet_invert_scalar(phi)
    g_tt = -(lapse * lapse)
    g_sp = phi * phi * phi * phi
    zero = Jet.zero(n, order)
    g = [[zero for _ in range(n)] for _ in range(n)]
    g[0][0] = g_tt
    for i in (1, 2, 3):
        g[i][i] = g_sp
    geom = Geometry(f"schwarzschild(M={mass},r0={radius})", g, order)
    geom.parallel_ricci = True      # Ricci-flat
    geom.locally_symmetric = False  # grad Riemann != 0
    return geom


def flrw(coeffs, order: int) -> Geometry:
    """Spatially flat cosmological metric diag(-1, a(t)^2, ...) with polynomial a."""
    n = 4
    coeffs = [rational(c) for c in coeffs]
    if not coeffs or coeffs[0] == 0:
        raise GeometryError("scale factor must have nonzero constant term")
    t = Jet.variable(n, order, 0)
    a = Jet.constant(n, order, coeffs[0])
    tp = Jet.constant(n, order, 1)
    for c in coeffs[1:]:
        tp = tp * t
        a = a + tp * c
    a2 = a * a
    zero = Jet.zero(n, order)
    g = [[zero for _ in range(n)] for _ in range(n)]
    g[0][0] = Jet.constant(n, order, -1)
    for i in (1, 2, 3):
        g[i][i] = a2
    geom = Geometry(f"flrw({','.join(str(c) for c in coeffs)})", g, order)
    return geom


CATALOG_NAMES = (
    "flat-euclidean",
    "flat-lorentzian",
    "constcurv:K",
    "schwarzschild:M:r0",
    "flrw:poly-coeffs",
)


def catalog(spec: str, order: int) -> Geometry:
    """Build a catalog geometry from a name like 'schwarzschild:1:3'."""
    parts = spec.split(":")
    head = parts[0]
    try:
        if head == "flat-euclidean":
            return flat_euclidean(order, int(parts[1]) if len(parts) > 1 else 4)
        if head == "flat-lorentzian":
            return flat_lorentzian(order, int(parts[1]) if len(parts) > 1 else 4)
        if head == "constcurv":
            if len(parts) < 2:
                raise GeometryError("constcurv needs a curvature parameter, e.g. constcurv:1")
            nval = int(parts[2]) if len(parts) > 2 else 4
            return constant_curvature(rational_from_string(parts[1]), order, nval)
        if head == "schwarzschild":
            if len(parts) != 3:
                raise GeometryError("schwarzschild needs mass and radius, e.g. schwarzschild:1:3")
            return schwarzschild(rational_from_string(parts[1]), rational_from_string(parts[2]), order)
        if head == "flrw":
            if len(parts) != 2:
                raise GeometryError("flrw needs scale-factor coefficients, e.g. flrw:1,1,1")
            return flrw([rational_from_string(c) for c in parts[1].split(",")], order)
    except (ValueError, IndexError) as exc:
        raise GeometryError(f"cannot parse geometry spec {spec!r}: {exc}") from exc
    raise GeometryError(f"unknown geometry {spec!r}; known: {', '.join(CATALOG_NAMES)}")

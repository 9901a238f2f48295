"""Weak Galerkin spaces, weak differential operators, and form assembly.

A weak function carries an interior polynomial of degree k per element, a
trace polynomial of degree k-1 per interior edge, and (for the fourth-order
problem) an edge normal-derivative polynomial of degree k-1.  Boundary edge
unknowns are eliminated, never penalized, so the stiffness form stays
symmetric positive definite and the mass form positive semidefinite.

On a uniform square mesh with centered, h-scaled bases, every element shares
one set of local matrices; assembly reduces to a deterministic vectorized
scatter of that single pattern.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from . import linalg
from .errors import DegreeTooLowError, SolverFailureError
from .mesh import EDGE_SIGNS, MeshLevel
from .polyspace import (
    DEFAULT_FIELD_QUAD,
    EdgeBasis,
    ElementBasis,
    QuadratureRule,
    Segment,
    Square,
    dim_pk,
    gauss_rule,
)

LAPLACIAN = "laplacian"
BIHARMONIC = "biharmonic"
KINDS = (LAPLACIAN, BIHARMONIC)

# Outward normals of the (left, right, bottom, top) edges of any element.
EDGE_NORMALS = ((-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0))

_ELEMENT_CHUNK = 1 << 15


@dataclass
class WgSpace:
    """A weak Galerkin space on a uniform mesh.

    Local degree-of-freedom order on each element: the interior block of
    dimension (k+1)(k+2)/2, then trace blocks of dimension k per edge in
    (left, right, bottom, top) order, then normal-derivative blocks in the
    same order for the fourth-order problem.  Globally, interior blocks come
    first (element-major), then trace blocks (interior-edge-major), then
    normal blocks.
    """

    mesh: MeshLevel
    degree: int
    kind: str = LAPLACIAN
    epsilon: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        min_degree = 1 if self.kind == LAPLACIAN else 2
        if self.degree < min_degree:
            raise DegreeTooLowError(
                f"{self.kind} requires degree >= {min_degree}, got {self.degree}"
            )
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        self._kit = None
        self._dof_map = None

    @property
    def dim_interior(self) -> int:
        return dim_pk(self.degree)

    @property
    def dim_trace(self) -> int:
        return self.degree

    @property
    def num_edge_components(self) -> int:
        return 1 if self.kind == LAPLACIAN else 2

    @property
    def n_interior_dofs(self) -> int:
        return self.mesh.num_elements * self.dim_interior

    @property
    def ndof(self) -> int:
        return (
            self.n_interior_dofs
            + self.mesh.num_interior_edges * self.dim_trace * self.num_edge_components
        )

    @property
    def n_local(self) -> int:
        return self.dim_interior + 4 * self.dim_trace * self.num_edge_components

    def trace_dofs(self, interior_edge_pos: int) -> np.ndarray:
        k = self.dim_trace
        off = self.n_interior_dofs + interior_edge_pos * k
        return np.arange(off, off + k)

    def normal_dofs(self, interior_edge_pos: int) -> np.ndarray:
        if self.kind != BIHARMONIC:
            raise ValueError("normal components exist only for the fourth-order space")
        k = self.dim_trace
        off = (
            self.n_interior_dofs
            + self.mesh.num_interior_edges * k
            + interior_edge_pos * k
        )
        return np.arange(off, off + k)

    def local_dof_map(self) -> np.ndarray:
        """(Ne, n_local) global indices in local order; -1 marks boundary blocks."""
        if self._dof_map is not None:
            return self._dof_map
        mesh = self.mesh
        nd0 = self.dim_interior
        k = self.dim_trace
        ne = mesh.num_elements
        blocks = [np.arange(ne)[:, None] * nd0 + np.arange(nd0)[None, :]]
        trace_base = self.n_interior_dofs
        for side in range(4):
            ii = mesh.interior_index[mesh.elem_edges[:, side]]
            blk = trace_base + ii[:, None] * k + np.arange(k)[None, :]
            blocks.append(np.where(ii[:, None] >= 0, blk, -1))
        if self.kind == BIHARMONIC:
            normal_base = trace_base + mesh.num_interior_edges * k
            for side in range(4):
                ii = mesh.interior_index[mesh.elem_edges[:, side]]
                blk = normal_base + ii[:, None] * k + np.arange(k)[None, :]
                blocks.append(np.where(ii[:, None] >= 0, blk, -1))
        self._dof_map = np.concatenate(blocks, axis=1)
        return self._dof_map

    def kit(self) -> "_LocalKit":
        if self._kit is None:
            self._kit = _LocalKit(self)
        return self._kit

    def function(self, coeffs: np.ndarray | None = None) -> "WgFunction":
        if coeffs is None:
            coeffs = np.zeros(self.ndof)
        return WgFunction(self, np.asarray(coeffs, dtype=float))


@dataclass
class WgFunction:
    """Coefficient vector over the degree-of-freedom layout of a WgSpace."""

    space: WgSpace
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.space.ndof,):
            raise ValueError(
                f"coefficient length {self.coeffs.shape} does not match "
                f"space dimension {self.space.ndof}"
            )

    def interior_matrix(self) -> np.ndarray:
        """Interior coefficients reshaped to (num_elements, dim_interior)."""
        nd0 = self.space.dim_interior
        return self.coeffs[: self.space.n_interior_dofs].reshape(-1, nd0)

    def local_vector(self, element: int) -> np.ndarray:
        """Local coefficients of one element; boundary edge blocks read as 0."""
        row = self.space.local_dof_map()[element]
        return np.where(row >= 0, self.coeffs[np.maximum(row, 0)], 0.0)


@dataclass
class AssembledForms:
    """Sparse stiffness and mass pair of the discrete eigenvalue pencil."""

    space: WgSpace
    A: sp.csr_matrix
    B: sp.csr_matrix
    n_interior: int


class _LocalKit:
    """Shared per-element matrices for a space (uniform mesh, one pattern)."""

    def __init__(self, space: WgSpace):
        k = space.degree
        h = space.mesh.h
        self.space = space
        self.h = h
        nd0 = dim_pk(k)
        self.square = Square(0.0, 0.0, h)
        self.phi = ElementBasis.for_square(self.square, k)
        self.segments = (
            Segment(0.0, 0.0, 0.0, h),   # left, parametrized by increasing y
            Segment(h, 0.0, h, h),       # right
            Segment(0.0, 0.0, h, 0.0),   # bottom, parametrized by increasing x
            Segment(0.0, h, h, h),       # top
        )
        self.edge_bases = tuple(EdgeBasis(k - 1, seg) for seg in self.segments)

        nq = k + 2
        elem_rule = QuadratureRule.tensor_gauss(self.square, nq)
        ex, ey, ew = elem_rule.points[:, 0], elem_rule.points[:, 1], elem_rule.weights
        phi_vals = self.phi.eval(ex, ey)
        self.Gk = 0.5 * ((phi_vals.T @ (phi_vals * ew[:, None]))
                         + (phi_vals.T @ (phi_vals * ew[:, None])).T)
        self.Gk_cho = cho_factor(self.Gk)

        edge_rules = [QuadratureRule.interval_gauss(seg, nq) for seg in self.segments]
        psi_at = []
        for p, rule in enumerate(edge_rules):
            px, py = rule.points[:, 0], rule.points[:, 1]
            psi_at.append(self.edge_bases[p].eval(px, py))
        Ge = psi_at[0].T @ (psi_at[0] * edge_rules[0].weights[:, None])
        self.Ge = 0.5 * (Ge + Ge.T)
        self.Ge_cho = cho_factor(self.Ge)

        # Trace moments of the interior basis on each edge.
        self.Me = []
        for p, rule in enumerate(edge_rules):
            px, py, w = rule.points[:, 0], rule.points[:, 1], rule.weights
            self.Me.append(psi_at[p].T @ (self.phi.eval(px, py) * w[:, None]))

        if space.kind == LAPLACIAN:
            self._build_gradient_operator(k, ex, ey, ew, edge_rules, psi_at)
        else:
            self._build_laplacian_operator(k, ex, ey, ew, edge_rules, psi_at)
            # Normal-derivative moments with the fixed edge normal: d/dx on the
            # vertical edges, d/dy on the horizontal ones.
            self.Mn = []
            for p, rule in enumerate(edge_rules):
                px, py, w = rule.points[:, 0], rule.points[:, 1], rule.weights
                dphi = self.phi.eval(px, py, dx=1) if p < 2 else self.phi.eval(px, py, dy=1)
                self.Mn.append(psi_at[p].T @ (dphi * w[:, None]))

        self._build_stabilizer_blocks()
        self.a_local = self.stiff_local + self.stabilizer_local(space.epsilon)
        self.a_local = 0.5 * (self.a_local + self.a_local.T)
        self.b_local = self.Gk

    # -- weak operators ----------------------------------------------------

    def _build_gradient_operator(self, k, ex, ey, ew, edge_rules, psi_at):
        space = self.space
        chi = ElementBasis.for_square(self.square, k - 1)
        m = chi.dim
        nd0 = dim_pk(k)
        n_loc = space.n_local
        chi_vals = chi.eval(ex, ey)
        Gm = chi_vals.T @ (chi_vals * ew[:, None])
        self.Gm = 0.5 * (Gm + Gm.T)
        self.Gm_cho = cho_factor(self.Gm)

        phi_vals = self.phi.eval(ex, ey)
        Cx = chi.eval(ex, ey, dx=1).T @ (phi_vals * ew[:, None])
        Cy = chi.eval(ex, ey, dy=1).T @ (phi_vals * ew[:, None])

        Rx = np.zeros((m, n_loc))
        Ry = np.zeros((m, n_loc))
        Rx[:, :nd0] = -Cx
        Ry[:, :nd0] = -Cy
        kt = space.dim_trace
        for p, rule in enumerate(edge_rules):
            px, py, w = rule.points[:, 0], rule.points[:, 1], rule.weights
            Te = psi_at[p].T @ (chi.eval(px, py) * w[:, None])  # (kt, m)
            cols = slice(nd0 + p * kt, nd0 + (p + 1) * kt)
            nx, ny = EDGE_NORMALS[p]
            Rx[:, cols] = nx * Te.T
            Ry[:, cols] = ny * Te.T
        self.Wx = cho_solve(self.Gm_cho, Rx)
        self.Wy = cho_solve(self.Gm_cho, Ry)
        stiff = Rx.T @ self.Wx + Ry.T @ self.Wy
        self.stiff_local = 0.5 * (stiff + stiff.T)
        self.grad_dim = m

    def _build_laplacian_operator(self, k, ex, ey, ew, edge_rules, psi_at):
        space = self.space
        chi = ElementBasis.for_square(self.square, k - 2)
        mq = chi.dim
        nd0 = dim_pk(k)
        n_loc = space.n_local
        chi_vals = chi.eval(ex, ey)
        Gq = chi_vals.T @ (chi_vals * ew[:, None])
        self.Gq = 0.5 * (Gq + Gq.T)
        self.Gq_cho = cho_factor(self.Gq)

        phi_vals = self.phi.eval(ex, ey)
        lap_chi = chi.eval(ex, ey, dx=2) + chi.eval(ex, ey, dy=2)
        D = lap_chi.T @ (phi_vals * ew[:, None])  # (mq, nd0)

        R = np.zeros((mq, n_loc))
        R[:, :nd0] = D
        kt = space.dim_trace
        for p, rule in enumerate(edge_rules):
            px, py, w = rule.points[:, 0], rule.points[:, 1], rule.weights
            nx, ny = EDGE_NORMALS[p]
            dn_chi = nx * chi.eval(px, py, dx=1) + ny * chi.eval(px, py, dy=1)
            Nc = psi_at[p].T @ (dn_chi * w[:, None])          # (kt, mq)
            Te = psi_at[p].T @ (chi.eval(px, py) * w[:, None])  # (kt, mq)
            vb_cols = slice(nd0 + p * kt, nd0 + (p + 1) * kt)
            vn_cols = slice(nd0 + (4 + p) * kt, nd0 + (5 + p) * kt)
            R[:, vb_cols] = -Nc.T
            R[:, vn_cols] = EDGE_SIGNS[p] * Te.T
        self.W = cho_solve(self.Gq_cho, R)
        stiff = R.T @ self.W
        self.stiff_local = 0.5 * (stiff + stiff.T)
        self.lap_dim = mq

    # -- stabilizer ---------------------------------------------------------

    def _unit_penalty_block(self, M: np.ndarray, edge_block: slice) -> np.ndarray:
        """<P v0 - w, P u0 - w> on (v0, w) blocks, where P = Ge^{-1} M."""
        space = self.space
        nd0 = space.dim_interior
        S = np.zeros((space.n_local, space.n_local))
        GeinvM = cho_solve(self.Ge_cho, M)
        S[:nd0, :nd0] = M.T @ GeinvM
        S[:nd0, edge_block] = -M.T
        S[edge_block, :nd0] = -M
        S[edge_block, edge_block] = self.Ge
        return S

    def _build_stabilizer_blocks(self):
        space = self.space
        nd0 = space.dim_interior
        kt = space.dim_trace
        self.stab_trace_unit = np.zeros((space.n_local, space.n_local))
        for p in range(4):
            blk = slice(nd0 + p * kt, nd0 + (p + 1) * kt)
            self.stab_trace_unit += self._unit_penalty_block(self.Me[p], blk)
        if space.kind == BIHARMONIC:
            self.stab_normal_unit = np.zeros((space.n_local, space.n_local))
            for p in range(4):
                blk = slice(nd0 + (4 + p) * kt, nd0 + (5 + p) * kt)
                self.stab_normal_unit += self._unit_penalty_block(self.Mn[p], blk)

    def stabilizer_local(self, epsilon: float | None) -> np.ndarray:
        """Local stabilizer; epsilon=None gives the unweakened (epsilon=0) weights."""
        eps = 0.0 if epsilon is None else epsilon
        h = self.h
        if self.space.kind == LAPLACIAN:
            S = h ** (-1.0 + eps) * self.stab_trace_unit
        else:
            S = (h ** (-3.0 + eps) * self.stab_trace_unit
                 + h ** (-1.0 + eps) * self.stab_normal_unit)
        return 0.5 * (S + S.T)

    # -- quadrature references for field integrals --------------------------

    def element_quad(self, npts: int):
        """Offsets within an element, weights, and basis values at the points."""
        g, w = gauss_rule(npts)
        off = 0.5 * self.h * (g + 1.0)
        OX, OY = np.meshgrid(off, off, indexing="ij")
        W = np.outer(w, w).ravel() * (0.5 * self.h) ** 2
        ox, oy = OX.ravel(), OY.ravel()
        return ox, oy, W, self.phi.eval(ox, oy)

    def edge_quad(self, npts: int):
        """1D offsets within an edge, weights, and edge-basis values."""
        g, w = gauss_rule(npts)
        off = 0.5 * self.h * (g + 1.0)
        W = w * 0.5 * self.h
        s = off / self.h - 0.5
        psi = np.column_stack([s**i for i in range(self.space.dim_trace)])
        return off, W, psi


# -- local weak operators ----------------------------------------------------


def weak_gradient_local(space: WgSpace, local_coeffs: np.ndarray) -> np.ndarray:
    """Coefficients (2, dim P_{k-1}) of the discrete weak gradient on an element.

    The input follows the local ordering documented on WgSpace.  The result
    rows are the x and y components in the scaled P_{k-1} element basis.
    """
    if space.kind != LAPLACIAN:
        raise ValueError("weak gradient is defined for the second-order space")
    kit = space.kit()
    v = np.asarray(local_coeffs, dtype=float)
    if v.shape != (space.n_local,):
        raise ValueError(f"expected {space.n_local} local coefficients")
    return np.vstack([kit.Wx @ v, kit.Wy @ v])


def weak_laplacian_local(space: WgSpace, local_coeffs: np.ndarray) -> np.ndarray:
    """Coefficients in P_{k-2} of the discrete weak Laplacian on an element."""
    if space.kind != BIHARMONIC:
        raise ValueError("weak Laplacian is defined for the fourth-order space")
    kit = space.kit()
    v = np.asarray(local_coeffs, dtype=float)
    if v.shape != (space.n_local,):
        raise ValueError(f"expected {space.n_local} local coefficients")
    return kit.W @ v


# -- assembly ----------------------------------------------------------------


def _scatter_symmetric(space: WgSpace, local: np.ndarray) -> sp.csr_matrix:
    """Assemble one shared symmetric local matrix over all elements.

    Only entries with global row <= col are emitted, then mirrored, which
    makes the result exactly symmetric and the assembly order deterministic.
    """
    gdofs = space.local_dof_map()
    ndof = space.ndof
    n_loc = space.n_local
    rows, cols, vals = [], [], []
    for start in range(0, gdofs.shape[0], _ELEMENT_CHUNK):
        G = gdofs[start : start + _ELEMENT_CHUNK]
        ne = G.shape[0]
        R = np.broadcast_to(G[:, :, None], (ne, n_loc, n_loc))
        C = np.broadcast_to(G[:, None, :], (ne, n_loc, n_loc))
        mask = (R >= 0) & (C >= 0) & (R <= C)
        rows.append(R[mask])
        cols.append(C[mask])
        vals.append(np.broadcast_to(local, (ne, n_loc, n_loc))[mask])
    upper = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ndof, ndof),
    ).tocsr()
    return (upper + sp.triu(upper, k=1).T).tocsr()


def assemble(space: WgSpace) -> AssembledForms:
    """Assemble the stiffness form A and the mass form B of the pencil."""
    kit = space.kit()
    A = _scatter_symmetric(space, kit.a_local)
    ne = space.mesh.num_elements
    Bint = sp.kron(sp.identity(ne, format="csr"), sp.csr_matrix(kit.b_local)).tocoo()
    B = sp.coo_matrix(
        (Bint.data, (Bint.row, Bint.col)), shape=(space.ndof, space.ndof)
    ).tocsr()
    return AssembledForms(space=space, A=A, B=B, n_interior=space.n_interior_dofs)


_SPACE_EPSILON = object()


def stabilizer_matrix(space: WgSpace, epsilon=_SPACE_EPSILON) -> sp.csr_matrix:
    """Global stabilizer matrix; s(v, w) = v^T S w.

    By default the space's weakened exponent is used; epsilon=None drops the
    weakening (the exponents of the mesh-dependent reference norm).
    """
    kit = space.kit()
    eps = space.epsilon if epsilon is _SPACE_EPSILON else epsilon
    return _scatter_symmetric(space, kit.stabilizer_local(eps))


def norm1_matrix(space: WgSpace) -> sp.csr_matrix:
    """Matrix of the unweakened mesh-dependent norm (stiffness + epsilon-free penalty)."""
    kit = space.kit()
    local = kit.stiff_local + kit.stabilizer_local(None)
    return _scatter_symmetric(space, 0.5 * (local + local.T))


# -- interpolation and field integrals ----------------------------------------


def _interior_moments(space: WgSpace, f, npts: int) -> np.ndarray:
    """Per-element moments (f, phi_beta)_T, shape (Ne, dim_interior)."""
    kit = space.kit()
    ox, oy, w, phi_ref = kit.element_quad(npts)
    x0, y0 = space.mesh.element_origins()
    out = np.empty((space.mesh.num_elements, space.dim_interior))
    for start in range(0, x0.size, _ELEMENT_CHUNK):
        sl = slice(start, start + _ELEMENT_CHUNK)
        X = x0[sl][:, None] + ox[None, :]
        Y = y0[sl][:, None] + oy[None, :]
        out[sl] = (np.asarray(f(X, Y), dtype=float) * w[None, :]) @ phi_ref
    return out


def _edge_projections(space: WgSpace, values_fn, npts: int) -> np.ndarray:
    """Project a field onto the trace basis of every interior edge.

    values_fn(x, y, vertical_mask) returns the integrand values; vertical
    edges are parametrized by y, horizontal ones by x.  Returns coefficients
    of shape (num_interior_edges, dim_trace) in interior-edge order.
    """
    mesh = space.mesh
    kit = space.kit()
    off, w, psi_ref = kit.edge_quad(npts)
    ids = mesh.interior_edges
    mx, my = mesh.edge_midpoints()
    vertical = mesh.edge_orient[ids] == 0
    X = np.where(
        vertical[:, None], mx[ids][:, None], mx[ids][:, None] - 0.5 * space.mesh.h + off[None, :]
    )
    Y = np.where(
        vertical[:, None], my[ids][:, None] - 0.5 * space.mesh.h + off[None, :], my[ids][:, None]
    )
    vals = values_fn(X, Y, vertical)
    rhs = (np.asarray(vals, dtype=float) * w[None, :]) @ psi_ref
    return cho_solve(kit.Ge_cho, rhs.T).T


def qh_project(space: WgSpace, f, grad=None, npts: int = DEFAULT_FIELD_QUAD) -> WgFunction:
    """Componentwise projection of a smooth field into the WG space.

    f(x, y) must accept arrays; grad(x, y) -> (fx, fy) is required for the
    fourth-order space, whose edge normal component interpolates the normal
    derivative along the fixed edge normal.
    """
    if space.kind == BIHARMONIC and grad is None:
        raise ValueError("the fourth-order projection needs the gradient of f")
    kit = space.kit()
    coeffs = np.zeros(space.ndof)

    moments = _interior_moments(space, f, npts)
    coeffs[: space.n_interior_dofs] = cho_solve(kit.Gk_cho, moments.T).T.ravel()

    trace = _edge_projections(space, lambda X, Y, vert: f(X, Y), npts)
    k = space.dim_trace
    base = space.n_interior_dofs
    coeffs[base : base + trace.size] = trace.ravel()

    if space.kind == BIHARMONIC:
        def normal_derivative(X, Y, vertical):
            fx, fy = grad(X, Y)
            return np.where(vertical[:, None], fx, fy)

        normal = _edge_projections(space, normal_derivative, npts)
        off = base + space.mesh.num_interior_edges * k
        coeffs[off : off + normal.size] = normal.ravel()
    return WgFunction(space, coeffs)


def local_interpolant(space: WgSpace, element: int, f, grad=None,
                      npts: int = DEFAULT_FIELD_QUAD) -> np.ndarray:
    """Unconstrained componentwise interpolant of f on one element.

    Unlike qh_project, the trace and normal blocks of boundary edges are kept,
    so the element-local commutation identities of the weak operators hold for
    fields that do not vanish on the domain boundary.
    """
    from .polyspace import l2_project_edge, l2_project_element

    if space.kind == BIHARMONIC and grad is None:
        raise ValueError("the fourth-order interpolant needs the gradient of f")
    mesh = space.mesh
    h = mesh.h
    x0 = mesh.elem_ix[element] * h
    y0 = mesh.elem_iy[element] * h
    square = Square(x0, y0, h)
    segments = (
        Segment(x0, y0, x0, y0 + h),
        Segment(x0 + h, y0, x0 + h, y0 + h),
        Segment(x0, y0, x0 + h, y0),
        Segment(x0, y0 + h, x0 + h, y0 + h),
    )
    parts = [l2_project_element(f, square, space.degree, npts=npts)]
    for seg in segments:
        parts.append(l2_project_edge(f, seg, space.degree - 1, npts=npts))
    if space.kind == BIHARMONIC:
        for p, seg in enumerate(segments):
            comp = (lambda x, y: grad(x, y)[0]) if p < 2 else (lambda x, y: grad(x, y)[1])
            parts.append(l2_project_edge(comp, seg, space.degree - 1, npts=npts))
    return np.concatenate(parts)


def solve_source(space: WgSpace, f, forms: AssembledForms | None = None,
                 tol: float = 1e-10) -> WgFunction:
    """Solve the discrete source problem a_w(u_h, v) = (f, v_0)."""
    if forms is None:
        forms = assemble(space)
    rhs = np.zeros(space.ndof)
    rhs[: space.n_interior_dofs] = _interior_moments(space, f, DEFAULT_FIELD_QUAD).ravel()
    lu = linalg.factor_spd(forms.A)
    x, rel = linalg.refined_solve(lu, forms.A, rhs, tol)
    if rel > tol:
        raise SolverFailureError(
            f"source solve stalled at relative residual {rel:.3e} (tol {tol:.1e})"
        )
    return WgFunction(space, x)

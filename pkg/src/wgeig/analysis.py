"""Reference solutions, error norms, diagnostics, and study orchestration.

Eigenfunction errors are measured against L2-normalized generators, with a
free overall scale fitted by least squares, so reported energy errors are
insensitive to normalization conventions of the reference functions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .eigsolve import EigenPair, smallest_eigs
from .errors import (
    EmptyClusterError,
    MultiplicityMismatchError,
    NonPositiveError,
)
from .mesh import build_uniform
from .polyspace import DEFAULT_FIELD_QUAD
from .twogrid import SipgConfig, run_sipg
from .wg_core import BIHARMONIC, LAPLACIAN, AssembledForms, WgFunction, WgSpace, assemble, qh_project
from scipy.linalg import cho_factor, cho_solve

# First clamped-plate eigenvalue on the unit square (literature reference).
BIHARMONIC_LAMBDA1 = 1294.9339598

_CHUNK = 1 << 15


# -- exact spectra -------------------------------------------------------------


def _sine_mode(m: int, n: int) -> Callable:
    def u(x, y):
        return 2.0 * np.sin(m * np.pi * x) * np.sin(n * np.pi * y)

    return u


@dataclass(frozen=True)
class ExactEigen:
    """One exact eigenvalue with its multiplicity and L2-normalized generators."""

    value: float
    multiplicity: int
    modes: tuple[tuple[int, int], ...] = ()

    @property
    def generators(self) -> tuple[Callable, ...]:
        return tuple(_sine_mode(m, n) for m, n in self.modes)


def exact_laplacian_spectrum(count: int) -> list[ExactEigen]:
    """First `count` distinct Dirichlet eigenvalues (m^2 + n^2) pi^2, merged."""
    if count < 1:
        raise ValueError("count must be at least 1")
    reach = 8
    while True:
        sums: dict[int, list[tuple[int, int]]] = {}
        for m in range(1, reach + 1):
            for n in range(1, reach + 1):
                sums.setdefault(m * m + n * n, []).append((m, n))
        complete = sorted(s for s in sums if s <= reach * reach + 1)
        if len(complete) >= count:
            break
        reach *= 2
    out = []
    for s in complete[:count]:
        modes = tuple(sorted(sums[s]))
        out.append(ExactEigen(value=s * np.pi**2, multiplicity=len(modes), modes=modes))
    return out


def laplacian_eigenvalues(num: int) -> list[tuple[float, ExactEigen]]:
    """First `num` eigenvalues counted with multiplicity, with their clusters."""
    clusters = exact_laplacian_spectrum(num)  # enough: multiplicities only grow
    flat: list[tuple[float, ExactEigen]] = []
    for cl in clusters:
        flat.extend((cl.value, cl) for _ in range(cl.multiplicity))
        if len(flat) >= num:
            break
    return flat[:num]


# -- eigenfunction distances ---------------------------------------------------


def _span_distance(basis: np.ndarray, w: np.ndarray, M) -> float:
    """min over the span of the basis columns of the M-norm distance to w."""
    MB = M @ basis
    gram = basis.T @ MB
    r = MB.T @ w
    ww = float(w @ (M @ w))
    try:
        sol = cho_solve(cho_factor(gram), r)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(gram, r, rcond=None)[0]
    return float(np.sqrt(max(ww - r @ sol, 0.0)))


def energy_error(space: WgSpace, forms: AssembledForms, u_bar: np.ndarray,
                 generators) -> float:
    """Energy distance from u_bar to the span of the interpolated generators.

    Minimizes over all linear combinations (direction and scale) of the
    componentwise interpolants of the generators; for a single generator this
    reduces to a sign and scale alignment.
    """
    gens = list(generators)
    if not gens:
        raise EmptyClusterError("no generators supplied")
    cols = np.column_stack([qh_project(space, g).coeffs for g in gens])
    return _span_distance(cols, np.asarray(u_bar, dtype=float), forms.A)


class Diagnostics(NamedTuple):
    delta: float
    sigma: float
    eta: float
    gamma: float


def eigen_diagnostics(pairs: list[EigenPair], exact: ExactEigen, space: WgSpace,
                      forms: AssembledForms) -> Diagnostics:
    """Cluster diagnostics: value spread and best-approximation distances.

    delta/sigma are the largest/smallest absolute eigenvalue errors over the
    cluster; eta and gamma are the worst mass-seminorm and energy-norm
    distances from the computed vectors to the interpolated exact eigenspace.
    """
    if len(pairs) != exact.multiplicity:
        raise MultiplicityMismatchError(
            f"cluster size {len(pairs)} != exact multiplicity {exact.multiplicity}"
        )
    errs = [abs(exact.value - p.value) for p in pairs]
    cols = np.column_stack([qh_project(space, g).coeffs for g in exact.generators])
    eta = max(_span_distance(cols, p.vector, forms.B) for p in pairs)
    gamma = max(_span_distance(cols, p.vector, forms.A) for p in pairs)
    return Diagnostics(delta=max(errs), sigma=min(errs), eta=eta, gamma=gamma)


# -- convergence utilities -------------------------------------------------------


def rate_fit(h_list, e_list) -> float:
    """Least-squares slope of log(e) against log(h)."""
    h = np.asarray(h_list, dtype=float)
    e = np.asarray(e_list, dtype=float)
    if h.size < 2 or h.size != e.size:
        raise ValueError("need at least two (h, e) pairs of equal length")
    if np.any(e <= 0.0):
        raise NonPositiveError("error values must be strictly positive; take abs first")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def lower_bound_check(errors) -> list[bool]:
    """Flag per eigenvalue: True iff the signed error lambda - lambda_h is >= 0."""
    return [bool(e >= 0.0) for e in errors]


# -- field error norms -----------------------------------------------------------


def l2_error(u_h: WgFunction, f, npts: int = DEFAULT_FIELD_QUAD) -> float:
    """L2 distance between a smooth field and the interior component of u_h."""
    space = u_h.space
    kit = space.kit()
    ox, oy, w, phi_ref = kit.element_quad(npts)
    C = u_h.interior_matrix()
    x0, y0 = space.mesh.element_origins()
    total = 0.0
    for start in range(0, x0.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        X = x0[sl][:, None] + ox[None, :]
        Y = y0[sl][:, None] + oy[None, :]
        diff = np.asarray(f(X, Y), dtype=float) - C[sl] @ phi_ref.T
        total += float(((diff**2) * w[None, :]).sum())
    return float(np.sqrt(total))


def vnorm_error(u_h: WgFunction, u, grad_u, lap_u,
                npts: int = DEFAULT_FIELD_QUAD) -> float:
    """Mesh-dependent energy-type error of a fourth-order source solution.

    Combines the broken-Laplacian L2 error with h^-3 and h^-1 weighted edge
    penalties of the trace and normal-derivative mismatches, summed per
    element side exactly as the norm is defined.
    """
    space = u_h.space
    if space.kind != BIHARMONIC:
        raise ValueError("the V-norm error is defined for the fourth-order space")
    mesh = space.mesh
    kit = space.kit()
    h = mesh.h
    C = u_h.interior_matrix()

    ox, oy, w2, _ = kit.element_quad(npts)
    lap_ref = kit.phi.eval(ox, oy, dx=2) + kit.phi.eval(ox, oy, dy=2)
    x0, y0 = mesh.element_origins()
    total = 0.0
    for start in range(0, x0.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        X = x0[sl][:, None] + ox[None, :]
        Y = y0[sl][:, None] + oy[None, :]
        diff = np.asarray(lap_u(X, Y), dtype=float) - C[sl] @ lap_ref.T
        total += float(((diff**2) * w2[None, :]).sum())

    off, w1, psi_ref = kit.edge_quad(npts)
    nq = off.size
    mx, my = mesh.edge_midpoints()
    vertical = mesh.edge_orient == 0
    EX = np.where(vertical[:, None], mx[:, None], mx[:, None] - 0.5 * h + off[None, :])
    EY = np.where(vertical[:, None], my[:, None] - 0.5 * h + off[None, :], my[:, None])
    u_vals = np.asarray(u(EX, EY), dtype=float)
    qbu = cho_solve(kit.Ge_cho, ((u_vals * w1[None, :]) @ psi_ref).T).T

    k = space.dim_trace
    trace_c = np.zeros((mesh.num_edges, k))
    normal_c = np.zeros((mesh.num_edges, k))
    ii = mesh.interior_index
    inter = ii >= 0
    base = space.n_interior_dofs
    trace_c[inter] = u_h.coeffs[base : base + mesh.num_interior_edges * k].reshape(-1, k)[ii[inter]]
    nbase = base + mesh.num_interior_edges * k
    normal_c[inter] = u_h.coeffs[nbase : nbase + mesh.num_interior_edges * k].reshape(-1, k)[ii[inter]]

    side_pts = (
        (np.zeros(nq), off),   # left
        (np.full(nq, h), off),
        (off, np.zeros(nq)),
        (off, np.full(nq, h)),
    )
    for p in range(4):
        eid = mesh.elem_edges[:, p]
        lx, ly = side_pts[p]
        dn_side = kit.phi.eval(lx, ly, dx=1) if p < 2 else kit.phi.eval(lx, ly, dy=1)
        qbu0 = cho_solve(kit.Ge_cho, (kit.Me[p] @ C.T)).T      # (Ne, k)
        t1 = ((qbu[eid] - qbu0) + trace_c[eid]) @ psi_ref.T - u_vals[eid]
        t2 = normal_c[eid] @ psi_ref.T - C @ dn_side.T
        total += h ** (-3.0) * float(((t1**2) * w1[None, :]).sum())
        total += h ** (-1.0) * float(((t2**2) * w1[None, :]).sum())
    return float(np.sqrt(total))


# -- study orchestration ----------------------------------------------------------


@dataclass
class StudyRow:
    """One emitted row; the field order is the stable serialization schema."""

    problem: str
    k: int
    epsilon: float
    H_level: int
    h_level: int
    index: int
    lambda_exact: float | None
    lambda_h: float | None
    lambda_tilde: float | None
    err_direct: float | None
    err_sipg: float | None
    energy_err: float | None
    lower_bound: bool | None
    seconds: float | None


ROW_FIELDS = tuple(StudyRow.__dataclass_fields__)


@dataclass
class StudyResult:
    rows: list[StudyRow]
    orders: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def _exact_values(kind: str, num_eigs: int):
    if kind == LAPLACIAN:
        return laplacian_eigenvalues(num_eigs)
    vals: list[tuple[float | None, None]] = [(None, None)] * num_eigs
    vals[0] = (BIHARMONIC_LAMBDA1, None)
    return vals


def direct_study(kind: str, degree: int, epsilon: float, levels, num_eigs: int,
                 tol: float = 1e-10, cluster_tol: float = 1e-6,
                 with_energy: bool = True) -> StudyResult:
    """Direct eigensolves over a sweep of levels, with fitted convergence orders."""
    levels = list(levels)
    exact = _exact_values(kind, num_eigs)
    rows: list[StudyRow] = []
    errs: dict[int, list[float]] = {j: [] for j in range(1, num_eigs + 1)}
    energies: dict[int, list[float]] = {j: [] for j in range(1, num_eigs + 1)}
    hs: list[float] = []
    for level in levels:
        t0 = time.perf_counter()
        space = WgSpace(build_uniform(level), degree, kind=kind, epsilon=epsilon)
        forms = assemble(space)
        pairs = smallest_eigs(forms, num_eigs, tol=tol)
        dt = time.perf_counter() - t0
        hs.append(space.mesh.h)
        gen_cache: dict[int, object] = {}
        for j, pair in enumerate(pairs, start=1):
            lam_ex, cluster = exact[j - 1]
            err = None if lam_ex is None else lam_ex - pair.value
            energy = None
            if with_energy and kind == LAPLACIAN and cluster is not None:
                key = id(cluster)
                if key not in gen_cache:
                    gen_cache[key] = cluster.generators
                energy = energy_error(space, forms, pair.vector, gen_cache[key])
                energies[j].append(energy)
            if err is not None:
                errs[j].append(err)
            rows.append(StudyRow(
                problem=kind, k=degree, epsilon=epsilon,
                H_level=level, h_level=level, index=j,
                lambda_exact=lam_ex, lambda_h=pair.value, lambda_tilde=None,
                err_direct=err, err_sipg=None, energy_err=energy,
                lower_bound=None if err is None else bool(err >= 0.0),
                seconds=dt,
            ))
    orders: dict[str, float] = {}
    if len(levels) >= 2:
        for j in range(1, num_eigs + 1):
            if len(errs[j]) == len(levels) and all(e != 0 for e in errs[j]):
                orders[f"eig_{j}"] = rate_fit(hs, [abs(e) for e in errs[j]])
            if len(energies[j]) == len(levels) and all(e > 0 for e in energies[j]):
                orders[f"energy_{j}"] = rate_fit(hs, energies[j])
    return StudyResult(rows=rows, orders=orders)


def sipg_study(kind: str, degree: int, epsilon: float, coarse_levels, fine_level: int,
               num_eigs: int, include_direct: bool = False, tol: float = 1e-10,
               cluster_tol: float = 1e-6, with_energy: bool = True) -> StudyResult:
    """Two-grid sweep over coarse levels at a fixed fine level.

    The fine assembly is shared across the sweep.  With include_direct, the
    direct fine solve is run once and reported alongside for comparison.
    """
    exact = _exact_values(kind, num_eigs)
    fine_space = WgSpace(build_uniform(fine_level), degree, kind=kind, epsilon=epsilon)
    fine_forms = assemble(fine_space)
    direct_pairs = None
    if include_direct:
        direct_pairs = smallest_eigs(fine_forms, num_eigs, tol=tol)

    rows: list[StudyRow] = []
    warnings: list[str] = []
    for coarse_level in coarse_levels:
        cfg = SipgConfig(
            kind=kind, degree=degree, epsilon=epsilon,
            coarse_level=coarse_level, fine_level=fine_level,
            num_eigs=num_eigs, tol=tol, cluster_tol=cluster_tol,
        )
        res = run_sipg(cfg, fine=(fine_space, fine_forms))
        warnings.extend(res.warnings)
        for t in res.targets:
            j = t.index
            lam_ex, cluster = exact[j - 1]
            err_sipg = None
            if lam_ex is not None and np.isfinite(t.rayleigh):
                err_sipg = lam_ex - t.rayleigh
            lam_h = err_dir = None
            if direct_pairs is not None:
                lam_h = direct_pairs[j - 1].value
                if lam_ex is not None:
                    err_dir = lam_ex - lam_h
            energy = None
            if (with_energy and kind == LAPLACIAN and cluster is not None
                    and t.normalized is not None):
                energy = energy_error(fine_space, fine_forms, t.normalized,
                                      cluster.generators)
            rows.append(StudyRow(
                problem=kind, k=degree, epsilon=epsilon,
                H_level=coarse_level, h_level=fine_level, index=j,
                lambda_exact=lam_ex, lambda_h=lam_h,
                lambda_tilde=t.rayleigh if np.isfinite(t.rayleigh) else None,
                err_direct=err_dir, err_sipg=err_sipg, energy_err=energy,
                lower_bound=None if err_sipg is None else bool(err_sipg >= 0.0),
                seconds=t.seconds,
            ))
    return StudyResult(rows=rows, orders={}, warnings=warnings)

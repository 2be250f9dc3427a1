"""
End-to-end pipelines: solve the harmonic-map Dirichlet problem through the
Legendre transform, build the finite-dimensional approximants, and measure
convergence.

The solver pipeline is: sample the boundary family of symplectic potentials
on a polytope grid, extend the smooth parts harmonically over the parameter
domain N (one linear Dirichlet solve per fiber node), then invert the
Legendre transform slice by slice to get the potential family Phi(y, rho).
Positivity of the extension kernel makes every interior slice convex; this
is asserted, never assumed.

The approximants are built per level k: boundary norming tables -> harmonic
norming constants -> log-sum-exp potential Phi_k(y, rho).

Error norms compare Phi_k with Phi on an interior window (the moment-map
preimage of {ell_r >= window} under the reference boundary metric).  The C0
norm is mean-adjusted: the spatial mean of Phi_k - Phi over the window at a
fixed reference boundary node is subtracted first, which removes the
y-independent constant coming from the dropped volume normalizations of the
norming integrals.  Derivative norms need no adjustment.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bergman import BergmanFamily, harmonic_norming, norming_constants
from .dirichlet import (BoundaryData, DiscDomain, IntervalDomain,
                        RectangleDomain, harmonic_extend, make_disc,
                        make_interval, n_boundary_nodes)
from .polytope import DelzantPolytope, preset_polytope, polytope_from_json
from .potentials import (ConvexityError, PolytopeGrid, SymplecticPotential,
                         _canonical_inverse_guess, _invert_monotone_1d,
                         _product_ell_closed, _x_bracket, default_margin,
                         guillemin_hessian, make_polytope_grid,
                         preset_symplectic)

__all__ = [
    "ExperimentConfig",
    "HarmonicPotentialFamily",
    "KahlerFamilyField",
    "ErrorReport",
    "RateFit",
    "solve_harmonic_map",
    "kahler_field",
    "build_approximants",
    "error_report",
    "rate_fit",
    "geodesic_family",
    "loop_family",
    "window_rho_bounds",
    "write_error_csv",
    "write_error_dat",
]

ERROR_COLUMNS = ("C0", "C1_y", "C1_rho", "C2_rhorho", "C2_yrho", "C2_yy")


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs of one experiment; defaults reproduce the standard suites."""

    polytope: object = "interval"
    domain: str = "interval"
    boundary_family: str = "geodesic(0.1)"
    levels: tuple[int, ...] = (8, 16, 32, 64)
    n_y: int = 17                 # interval nodes
    n_radii: int = 9              # disc interior radii (plus the boundary ring)
    n_angles: int = 256           # disc angular nodes = boundary quadrature
    n_x: int = 801                # polytope-grid nodes per axis
    n_rho: int = 801              # rho-grid nodes
    rho_span: float = 4.0         # rho-grid on [-span, span]
    window: float = 0.1           # interior window {ell_r >= window}
    out_dir: str | None = None
    snapshot_every: int = 0

    def __post_init__(self):
        ks = tuple(int(k) for k in self.levels)
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("levels must be strictly increasing")
        object.__setattr__(self, "levels", ks)
        # the polytope grid must resolve the boundary margin 1/(4 k_max)
        if self.n_x < 2 * max(ks):
            raise ValueError(
                f"n_x = {self.n_x} too coarse for k_max = {max(ks)} "
                "(need at least 2 nodes per 1/k cell)")

    @classmethod
    def from_json(cls, doc) -> "ExperimentConfig":
        if isinstance(doc, (str, bytes)):
            doc = json.loads(doc)
        doc = dict(doc)
        # accept the compact domain-spec form {"domain": ..., "resolution": [...]}
        if "resolution" in doc:
            res = doc.pop("resolution")
            domain = doc.get("domain", "interval")
            if domain == "interval":
                (doc["n_y"],) = res
            elif domain == "disc":
                doc["n_radii"], doc["n_angles"] = res
            elif domain == "rectangle":
                doc["n_y"], doc["n_angles"] = res   # nx, ny of the rectangle grid
            else:
                raise ValueError(f"unknown domain {domain!r}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "levels" in doc:
            doc = dict(doc, levels=tuple(doc["levels"]))
        return cls(**doc)

    def build_polytope(self) -> DelzantPolytope:
        if isinstance(self.polytope, str):
            return preset_polytope(self.polytope)
        return polytope_from_json(json.dumps(self.polytope))


# -- the harmonic-map solver ----------------------------------------------------

@dataclass(frozen=True)
class HarmonicPotentialFamily:
    """u(y, .) = u0 + f(y, .), with f the harmonic extension of boundary data."""

    domain: object
    xgrid: PolytopeGrid
    boundary_potentials: tuple[SymplecticPotential, ...]
    f: np.ndarray                                    # (*domain.shape, nx)
    closed_family: object = None                     # optional y_index -> ClosedForm

    def potential_at(self, y_index) -> SymplecticPotential:
        idx = y_index if isinstance(y_index, tuple) else (y_index,)
        closed = self.closed_family(idx) if self.closed_family is not None else None
        return SymplecticPotential(self.xgrid.polytope, self.xgrid,
                                   f_values=self.f[idx], f_closed=closed,
                                   check=False)

    def node_indices(self):
        return list(np.ndindex(self.domain.shape))


def solve_harmonic_map(domain, xgrid: PolytopeGrid, boundary_potentials,
                       closed_family=None) -> HarmonicPotentialFamily:
    """Extend the boundary family of symplectic potentials harmonically over N.

    `boundary_potentials` lists one SymplecticPotential per boundary node of
    the domain (canonical order), all sampled on `xgrid`.  The smooth parts
    are extended fiberwise; convexity of every interior slice is verified and
    a ConvexityError names the offending node if it fails.
    """
    bps = tuple(boundary_potentials)
    if len(bps) != n_boundary_nodes(domain):
        raise ValueError(
            f"expected {n_boundary_nodes(domain)} boundary potentials, got {len(bps)}")
    for bp in bps:
        if bp.grid.shape != xgrid.shape or not all(
                np.array_equal(a, b) for a, b in zip(bp.grid.axes, xgrid.axes)):
            raise ValueError("boundary potentials must be sampled on the common grid")
    F = np.stack([bp.f_values for bp in bps], axis=0)     # (nb, nx)
    if isinstance(domain, IntervalDomain):
        t = (domain.nodes - domain.nodes[0]) / (domain.nodes[-1] - domain.nodes[0])
        f = (1.0 - t)[:, None] * F[0][None, :] + t[:, None] * F[1][None, :]
    elif isinstance(domain, DiscDomain):
        from .dirichlet import _disc_weight_matrix
        W = _disc_weight_matrix(domain)                   # (nr-1, ng, ng)
        interior = W.reshape(-1, W.shape[-1]) @ F         # (nr-1 * ng, nx)
        interior = interior.reshape(W.shape[0], W.shape[1], F.shape[1])
        f = np.concatenate([interior, F[None, :, :]], axis=0)  # ring keeps its data
    else:
        # generic path: one Dirichlet solve per fiber node
        cols = [harmonic_extend(domain, BoundaryData(F[:, j])).values
                for j in range(F.shape[1])]
        f = np.stack(cols, axis=-1)
    family = HarmonicPotentialFamily(domain=domain, xgrid=xgrid,
                                     boundary_potentials=bps, f=f,
                                     closed_family=closed_family)
    _assert_family_convexity(family)
    return family


def _assert_family_convexity(family: HarmonicPotentialFamily):
    x = family.xgrid.axes[0]
    h = x[1] - x[0]
    u0pp = guillemin_hessian(family.xgrid.polytope, x[:, None])[:, 0, 0]
    fpp = (family.f[..., 2:] - 2.0 * family.f[..., 1:-1] + family.f[..., :-2]) / h**2
    upp = u0pp[1:-1] + fpp
    bad = upp.min(axis=-1) <= 0
    if np.any(bad):
        raise ConvexityError(
            f"harmonic extension lost convexity at domain nodes {np.argwhere(bad)[:5].tolist()}")


@dataclass(frozen=True)
class KahlerFamilyField:
    """Phi(y, rho) and the moment solutions x(y, rho) on a common grid."""

    domain: object
    rho_axis: np.ndarray
    values: np.ndarray        # (*domain.shape, n_rho)
    moment: np.ndarray        # (*domain.shape, n_rho)


def kahler_field(family: HarmonicPotentialFamily, rho_axis: np.ndarray) -> KahlerFamilyField:
    """Invert the Legendre transform slice by slice over the whole family."""
    rho_axis = np.asarray(rho_axis, dtype=float)
    shape = family.domain.shape
    values = np.empty(shape + rho_axis.shape)
    moment = np.empty_like(values)
    # one x-bracket serves every slice: widen the target range by a uniform
    # bound on |f'| so the u0 log-divergence dominates at both ends
    x_nodes = family.xgrid.axes[0]
    h = x_nodes[1] - x_nodes[0]
    fgrad_bound = float(np.max(np.abs(np.gradient(family.f, h, axis=-1)))) + 1.0
    first = next(iter(np.ndindex(shape)))
    a, b = _x_bracket(family.potential_at(first),
                      float(rho_axis.min()) - 2 * fgrad_bound,
                      float(rho_axis.max()) + 2 * fgrad_bound)
    guess = np.clip(_canonical_inverse_guess(family.xgrid.polytope, rho_axis),
                    a, b)
    for idx in np.ndindex(shape):
        pot = family.potential_at(idx)
        x = _invert_monotone_1d(pot.grad, pot.hess, rho_axis, a, b,
                                what="symplectic gradient", s0=guess)
        values[idx] = x * rho_axis - np.asarray(pot.value(x))
        moment[idx] = x
    return KahlerFamilyField(domain=family.domain, rho_axis=rho_axis,
                             values=values, moment=moment)


# -- preset experiment families ---------------------------------------------------

def geodesic_family(a: float = 0.1, n_t: int = 17, n_x: int = 801,
                    k_max: int = 64):
    """Interval family between u0 and u0 + a prod ell (Legendre-linear path)."""
    P = preset_polytope("interval")
    xgrid = make_polytope_grid(P, n_x, default_margin(k_max))
    domain = make_interval(n_t)
    u_start = preset_symplectic("guillemin", P, xgrid)
    u_end = preset_symplectic(f"perturbed({a})", P, xgrid)
    t_nodes = domain.nodes

    def closed_family(idx):
        t = float(t_nodes[idx[0]])
        return _product_ell_closed(P, a * t)

    return solve_harmonic_map(domain, xgrid, [u_start, u_end], closed_family)


def loop_family(a: float = 0.05, n_radii: int = 9, n_angles: int = 256,
                n_x: int = 801, k_max: int = 32):
    """Disc family u_theta = u0 + a (1 + cos theta) prod ell on the boundary."""
    P = preset_polytope("interval")
    xgrid = make_polytope_grid(P, n_x, default_margin(k_max))
    domain = make_disc(n_radii, n_angles)
    bps = [SymplecticPotential(P, xgrid,
                               f_closed=_product_ell_closed(P, a * (1.0 + math.cos(th))))
           for th in domain.angles]
    radii, angles = domain.radii, domain.angles

    def closed_family(idx):
        r, g = radii[idx[0]], angles[idx[1]]
        return _product_ell_closed(P, a * (1.0 + r * math.cos(g)))

    return solve_harmonic_map(domain, xgrid, bps, closed_family)


# -- approximants ------------------------------------------------------------------

def build_approximants(family: HarmonicPotentialFamily, levels,
                       n_panels: int | None = None) -> dict[int, BergmanFamily]:
    """Boundary norming tables -> harmonic norming -> Phi_k, for each level."""
    out = {}
    for k in levels:
        tables = [norming_constants(bp, k, n_panels=n_panels)
                  for bp in family.boundary_potentials]
        norming = harmonic_norming(family.domain, tables, k)
        out[k] = BergmanFamily(norming)
    return out


# -- error norms --------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorReport:
    """Interior-window error norms of Phi_k - Phi per level."""

    levels: tuple[int, ...]
    norms: dict                      # column -> np.ndarray over levels
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.norms[name], dtype=float)


def window_rho_bounds(u_ref: SymplecticPotential, window: float) -> tuple[float, float]:
    """rho-interval = moment preimage of {ell_r >= window} under u_ref."""
    P = u_ref.polytope
    (lo,), (hi,) = P.bounding_box()
    return (float(u_ref.grad(np.asarray(lo + window))),
            float(u_ref.grad(np.asarray(hi - window))))


def _rho_window_mask(rho_axis: np.ndarray, bounds, guard_cells: int = 2) -> np.ndarray:
    mask = (rho_axis >= bounds[0]) & (rho_axis <= bounds[1])
    mask[:guard_cells] = False
    mask[-guard_cells:] = False
    return mask


def _d1(v, h, axis):
    return (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2.0 * h)


def _d2(v, h, axis):
    return (np.roll(v, -1, axis=axis) - 2.0 * v + np.roll(v, 1, axis=axis)) / h**2


def error_norms(E: np.ndarray, domain, rho_axis: np.ndarray,
                rho_mask: np.ndarray, ref_y_index) -> dict[str, float]:
    """Mean-adjusted C0 and FD C1/C2 sup norms of an error field E(y, rho)."""
    E = np.asarray(E, dtype=float)
    h_rho = rho_axis[1] - rho_axis[0]
    ref = E[(ref_y_index if isinstance(ref_y_index, tuple) else (ref_y_index,))]
    adjust = float(np.mean(ref[rho_mask]))
    c0 = float(np.max(np.abs(E[..., rho_mask] - adjust)))
    d_rho = _d1(E, h_rho, E.ndim - 1)
    d_rhorho = _d2(E, h_rho, E.ndim - 1)
    if isinstance(domain, IntervalDomain):
        h_t = domain.nodes[1] - domain.nodes[0]
        d_y = _d1(E, h_t, 0)
        d_yy = _d2(E, h_t, 0)
        d_yrho = _d1(d_y, h_rho, E.ndim - 1)
        ti = slice(1, -1)
        tii = slice(2, -2)
        return {
            "C0": c0,
            "C1_y": float(np.max(np.abs(d_y[ti][:, rho_mask]))),
            "C1_rho": float(np.max(np.abs(d_rho[..., rho_mask]))),
            "C2_rhorho": float(np.max(np.abs(d_rhorho[..., rho_mask]))),
            "C2_yrho": float(np.max(np.abs(d_yrho[ti][:, rho_mask]))),
            "C2_yy": float(np.max(np.abs(d_yy[tii][:, rho_mask]))),
        }
    if isinstance(domain, DiscDomain):
        r = domain.radii
        h_r = r[1] - r[0]
        h_g = 2.0 * np.pi / domain.angles.size
        nr_uniform = r.size - 1                      # exclude the boundary ring
        d_r = _d1(E, h_r, 0)
        d_g = _d1(E, h_g, 1)
        d_rr = _d2(E, h_r, 0)
        d_gg = _d2(E, h_g, 1)
        d_rg = _d1(d_r, h_g, 1)
        d_rrho = _d1(d_r, h_rho, E.ndim - 1)
        d_grho = _d1(d_g, h_rho, E.ndim - 1)
        ri = slice(1, nr_uniform - 1)
        rii = slice(2, nr_uniform - 2)
        rcol = r[:, None, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            grad_mag = np.sqrt(d_r**2 + (d_g / rcol) ** 2)
            h_tangent = d_gg / rcol**2 + d_r / rcol
            h_mixed_frame = d_rg / rcol - d_g / rcol**2
            mix_mag = np.maximum(np.abs(d_rrho), np.abs(d_grho / rcol))
            hess_mag = np.maximum.reduce(
                [np.abs(d_rr), np.abs(h_tangent), np.abs(h_mixed_frame)])
        return {
            "C0": c0,
            "C1_y": float(np.max(grad_mag[ri][..., rho_mask])),
            "C1_rho": float(np.max(np.abs(d_rho[..., rho_mask]))),
            "C2_rhorho": float(np.max(np.abs(d_rhorho[..., rho_mask]))),
            "C2_yrho": float(np.max(mix_mag[ri][..., rho_mask])),
            "C2_yy": float(np.max(hess_mag[rii][..., rho_mask])),
        }
    if isinstance(domain, RectangleDomain):
        hx = domain.x_nodes[1] - domain.x_nodes[0]
        hy = domain.y_nodes[1] - domain.y_nodes[0]
        d_x = _d1(E, hx, 0)
        d_y = _d1(E, hy, 1)
        d_xx = _d2(E, hx, 0)
        d_yy = _d2(E, hy, 1)
        d_xy = _d1(d_x, hy, 1)
        mix = np.maximum(np.abs(_d1(d_x, h_rho, E.ndim - 1)),
                         np.abs(_d1(d_y, h_rho, E.ndim - 1)))
        hess_mag = np.maximum.reduce([np.abs(d_xx), np.abs(d_yy), np.abs(d_xy)])
        i1 = (slice(1, -1), slice(1, -1))
        i2 = (slice(2, -2), slice(2, -2))
        return {
            "C0": c0,
            "C1_y": float(np.max(np.hypot(d_x, d_y)[i1][..., rho_mask])),
            "C1_rho": float(np.max(np.abs(d_rho[..., rho_mask]))),
            "C2_rhorho": float(np.max(np.abs(d_rhorho[..., rho_mask]))),
            "C2_yrho": float(np.max(mix[i1][..., rho_mask])),
            "C2_yy": float(np.max(hess_mag[i2][..., rho_mask])),
        }
    raise TypeError(f"unsupported domain {type(domain).__name__}")


def error_report(family: HarmonicPotentialFamily, phi_field: KahlerFamilyField,
                 approximants: dict[int, BergmanFamily],
                 window: float = 0.1, ref_y_index=None) -> ErrorReport:
    """Per-level error norms of Phi_k - Phi over the interior window."""
    rho_axis = phi_field.rho_axis
    bounds = window_rho_bounds(family.boundary_potentials[0], window)
    rho_mask = _rho_window_mask(rho_axis, bounds)
    if not rho_mask.any():
        raise ValueError("the rho grid does not meet the interior window")
    if ref_y_index is None:
        ref_y_index = _default_reference_node(family.domain)
    levels = tuple(sorted(approximants))
    cols = {name: [] for name in ERROR_COLUMNS}
    for k in levels:
        E = approximants[k].field(rho_axis) - phi_field.values
        norms = error_norms(E, family.domain, rho_axis, rho_mask, ref_y_index)
        for name in ERROR_COLUMNS:
            cols[name].append(norms[name])
    return ErrorReport(levels=levels,
                       norms={name: np.array(vals) for name, vals in cols.items()},
                       meta={"window": window, "rho_bounds": bounds,
                             "ref_y_index": ref_y_index,
                             "n_rho_window": int(rho_mask.sum())})


def _default_reference_node(domain):
    if isinstance(domain, IntervalDomain):
        return (0,)
    if isinstance(domain, DiscDomain):
        return (domain.radii.size - 1, 0)      # a boundary-ring node
    if isinstance(domain, RectangleDomain):
        return (0, 0)
    raise TypeError(f"unsupported domain {type(domain).__name__}")


# -- rate fitting -----------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    """Least-squares log-log slope and the log(k)/k flatness diagnostic."""

    levels: tuple[int, ...]
    errors: tuple[float, ...]
    slope: float
    intercept: float
    statistic: tuple[float, ...]        # eps_k * k / log k
    statistic_spread: float             # (max - min) / max of the statistic
    logk_model_rmse: float              # residual of the best c*log(k)/k fit
    power_model_rmse: float             # residual of the best c*k^slope fit
    exact_match: bool = False


def rate_fit(levels, errors) -> RateFit:
    """Fit log errors against log k; needs at least four levels.

    All-zero (machine-level) errors short-circuit to an exact-match report
    instead of a meaningless fit.
    """
    levels = tuple(int(k) for k in levels)
    errors = tuple(float(e) for e in errors)
    if len(levels) < 4:
        raise ValueError("rate fitting needs at least 4 levels")
    if max(errors) < 1e-14:
        return RateFit(levels, errors, math.nan, math.nan,
                       tuple(0.0 for _ in levels), 0.0, 0.0, 0.0, exact_match=True)
    lk = np.log(np.asarray(levels, dtype=float))
    le = np.log(np.asarray(errors, dtype=float))
    slope, intercept = np.polyfit(lk, le, 1)
    stat = tuple(e * k / math.log(k) for e, k in zip(errors, levels))
    spread = (max(stat) - min(stat)) / max(stat)
    c_logk = float(np.mean(stat))
    logk_pred = np.array([c_logk * math.log(k) / k for k in levels])
    power_pred = np.exp(intercept + slope * lk)
    err = np.asarray(errors)
    return RateFit(levels, errors, float(slope), float(intercept), stat,
                   float(spread),
                   float(np.sqrt(np.mean((logk_pred - err) ** 2))),
                   float(np.sqrt(np.mean((power_pred - err) ** 2))))


# -- output files ---------------------------------------------------------------------

def write_error_csv(report: ErrorReport, path):
    buf = io.StringIO()
    buf.write("k," + ",".join(ERROR_COLUMNS) + "\n")
    for i, k in enumerate(report.levels):
        row = [str(k)] + [repr(float(report.norms[c][i])) for c in ERROR_COLUMNS]
        buf.write(",".join(row) + "\n")
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def write_error_dat(report: ErrorReport, path):
    """gnuplot-friendly twin of the CSV (space-separated, # header)."""
    with open(path, "w") as fh:
        fh.write("# k " + " ".join(ERROR_COLUMNS) + "\n")
        for i, k in enumerate(report.levels):
            row = [str(k)] + [repr(float(report.norms[c][i])) for c in ERROR_COLUMNS]
            fh.write(" ".join(row) + "\n")

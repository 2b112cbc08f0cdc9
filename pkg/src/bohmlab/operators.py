"""Self-adjoint observables on the grid, pointwise value checks, and weak values.

The central objects are:

* ``apply(A, psi)``, the grid samples of (A psi);
* ``local_eigen_check``, which decides whether (A psi)(Q) = lambda * psi(Q)
  holds with real lambda at the particle position Q;
* ``weak_actual_value``, the position-conditioned ratio
  a_w = Re[psi^dag (A psi)] / psi^dag psi at Q together with the complex
  ratio A_w = (A psi)(Q) / psi(Q);
* ``robustness_probe``, which perturbs psi with a compactly supported bump
  carrying a prescribed complex ratio and traces how the pointwise ratio of
  psi_n = psi + phi/n responds.

Everything is a pure function of immutable inputs and safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .derivatives import Scheme, cubic_interp, default_scheme, gradient, laplacian
from .errors import (
    BohmlabError,
    ConfigurationError,
    NodeError,
    SelfAdjointnessError,
    ShapeMismatchError,
)
from .grid import Boundary, Grid, WaveFunction, density, inner_product

# rho(Q) below this fraction of max(rho) counts as a node for pointwise values
DEFAULT_RHO_FLOOR = 1e-12

# default tolerance rule for the pointwise eigenvalue check:
# holds iff |Im z| <= tol * (|z| + abs_floor)
DEFAULT_EIGEN_TOL = 1e-6
DEFAULT_ABS_FLOOR = 1e-12


class Observable:
    """Marker base class; concrete kinds are frozen dataclasses below."""


@dataclass(frozen=True)
class PositionAxis(Observable):
    axis: int = 0


@dataclass(frozen=True)
class MomentumAxis(Observable):
    axis: int = 0
    scheme: Scheme | None = None


@dataclass(frozen=True)
class Kinetic(Observable):
    scheme: Scheme | None = None


@dataclass(frozen=True)
class PotentialField(Observable):
    values: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.values is None:
            raise ConfigurationError("potential observable needs sampled values")
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Hamiltonian(Observable):
    potential: np.ndarray | None = field(repr=False, default=None)
    scheme: Scheme | None = None

    def __post_init__(self):
        if self.potential is not None:
            v = np.asarray(self.potential, dtype=float)
            v.setflags(write=False)
            object.__setattr__(self, "potential", v)


@dataclass(frozen=True)
class SpinComponent(Observable):
    n: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        n = tuple(float(x) for x in self.n)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ConfigurationError("spin direction must be a unit vector")
        object.__setattr__(self, "n", n)

    def matrix(self, hbar: float) -> np.ndarray:
        nx, ny, nz = self.n
        return 0.5 * hbar * np.array([[nz, nx - 1j * ny], [nx + 1j * ny, -nz]])


@dataclass(frozen=True)
class Scaled(Observable):
    c: float = 1.0
    inner: Observable = None

    def __post_init__(self):
        if self.inner is None:
            raise ConfigurationError("scaled observable needs an inner observable")
        object.__setattr__(self, "c", float(self.c))


@dataclass(frozen=True)
class Sum(Observable):
    parts: tuple[Observable, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))


def observable_id(A: Observable) -> str:
    if isinstance(A, PositionAxis):
        return f"position{A.axis}"
    if isinstance(A, MomentumAxis):
        return f"momentum{A.axis}"
    if isinstance(A, Kinetic):
        return "kinetic"
    if isinstance(A, PotentialField):
        return "potential"
    if isinstance(A, Hamiltonian):
        return "hamiltonian"
    if isinstance(A, SpinComponent):
        if A.n == (0.0, 0.0, 1.0):
            return "spin_z"
        return "spin(" + ",".join(f"{x:g}" for x in A.n) + ")"
    if isinstance(A, Scaled):
        return f"{A.c:g}*{observable_id(A.inner)}"
    if isinstance(A, Sum):
        return "+".join(observable_id(p) for p in A.parts)
    raise BohmlabError(f"unknown observable {A!r}")


def _resolve_scheme(scheme: Scheme | str | None, grid: Grid) -> Scheme:
    scheme = Scheme(scheme) if scheme else default_scheme(grid)
    if scheme is Scheme.SPECTRAL and grid.boundary is not Boundary.PERIODIC:
        raise ConfigurationError("spectral derivative scheme requires a periodic grid")
    return scheme


def apply(A: Observable, psi: WaveFunction) -> np.ndarray:
    """Grid samples of (A psi); returns an array shaped like psi.amplitudes."""
    grid = psi.grid
    amp = psi.amplitudes
    if isinstance(A, PositionAxis):
        return grid.coordinate_field(A.axis) * amp
    if isinstance(A, MomentumAxis):
        scheme = _resolve_scheme(A.scheme, grid)
        return -1j * psi.hbar * gradient(amp, grid, A.axis, scheme)
    if isinstance(A, Kinetic):
        scheme = _resolve_scheme(A.scheme, grid)
        return -(psi.hbar**2) / (2.0 * psi.mass) * laplacian(amp, grid, scheme)
    if isinstance(A, PotentialField):
        if A.values.shape != grid.shape:
            raise ShapeMismatchError("potential field shape does not match grid")
        return A.values * amp
    if isinstance(A, Hamiltonian):
        scheme = _resolve_scheme(A.scheme, grid)
        out = -(psi.hbar**2) / (2.0 * psi.mass) * laplacian(amp, grid, scheme)
        if A.potential is not None:
            if A.potential.shape != grid.shape:
                raise ShapeMismatchError("potential field shape does not match grid")
            out = out + A.potential * amp
        return out
    if isinstance(A, SpinComponent):
        if psi.components != 2:
            raise ShapeMismatchError("spin observables need a two-component wave function")
        m = A.matrix(psi.hbar)
        return np.einsum("ab,b...->a...", m, amp)
    if isinstance(A, Scaled):
        return A.c * apply(A.inner, psi)
    if isinstance(A, Sum):
        if not A.parts:
            raise ConfigurationError("empty observable sum")
        out = apply(A.parts[0], psi)
        for part in A.parts[1:]:
            out = out + apply(part, psi)
        return out
    raise BohmlabError(f"unknown observable {A!r}")


def expectation(A: Observable, psi: WaveFunction, max_imag: float = 1e-6,
                with_residual: bool = False):
    """Re <psi|A|psi>; the imaginary residual is a self-adjointness check.

    A residual above `max_imag` signals a discretization or boundary fault
    and raises.
    """
    apsi = psi.with_amplitudes(apply(A, psi))
    val = inner_product(psi, apsi)
    scale = max(abs(val), 1.0)
    resid = abs(val.imag) / scale
    if resid > max_imag:
        raise SelfAdjointnessError(
            f"<{observable_id(A)}> has imaginary residual {resid:.3e}"
        )
    if with_residual:
        return float(val.real), float(resid)
    return float(val.real)


# ---------------------------------------------------------------------------
# Pointwise evaluation helpers. Weak values interpolate the sesquilinear
# fields psi^dag (A psi) and rho = psi^dag psi, which are free of the fast
# phase oscillation of psi itself; the real-part formula and the complex
# ratio then share identical interpolated inputs, so their algebraic
# identity survives discretization exactly.


def sesquilinear_field(psi: WaveFunction, apsi: np.ndarray) -> np.ndarray:
    """psi^dag (A psi) summed over components, one complex value per point."""
    return np.sum(np.conj(psi.amplitudes) * apsi, axis=0)


def _values_at(psi: WaveFunction, apsi: np.ndarray, points: np.ndarray):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    psi_v = cubic_interp(psi.amplitudes, psi.grid, pts)   # (C, m)
    apsi_v = cubic_interp(apsi, psi.grid, pts)            # (C, m)
    rho_v = np.sum(np.abs(psi_v) ** 2, axis=0)            # (m,)
    return psi_v, apsi_v, rho_v


@dataclass(frozen=True)
class ActualValueVerdict:
    """Outcome of the pointwise eigenvalue check at one configuration point."""

    holds: bool
    lam: float | None
    ratio: complex
    imag_fraction: float
    tol: float
    abs_floor: float
    alignment_residual: float = 0.0  # spinor only: how far (A psi)(Q) is from z*psi(Q)


@dataclass(frozen=True)
class WeakValueRecord:
    a_w: float
    A_w: complex
    rho_at_Q: float
    observable: str
    spinor_extension: bool = False  # complex ratio for spinors is an extension


def _rho_floor(psi: WaveFunction, floor_rel: float) -> float:
    return floor_rel * float(density(psi).max())


def local_eigen_check_many(A: Observable, psi: WaveFunction, points: np.ndarray,
                           tol: float = DEFAULT_EIGEN_TOL,
                           abs_floor: float = DEFAULT_ABS_FLOOR,
                           rho_floor_rel: float = DEFAULT_RHO_FLOOR):
    """Vectorized eigen check; returns (holds, lam, z, imag_fraction, align, node_mask).

    z is the pointwise ratio (A psi)(Q)/psi(Q), evaluated in its sesquilinear
    form psi^dag (A psi) / psi^dag psi so it shares interpolated inputs with
    the weak-value formulas (a verdict's lambda then equals the weak value
    exactly). Spinors additionally require (A psi)(Q) parallel to psi(Q)
    within tolerance, since one complex ratio cannot express the
    two-component condition.
    """
    apsi = apply(A, psi)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    numer_v = cubic_interp(sesquilinear_field(psi, apsi), psi.grid, pts)
    rho_v = cubic_interp(density(psi), psi.grid, pts).real
    floor = _rho_floor(psi, rho_floor_rel)
    node = rho_v <= floor
    safe_rho = np.where(node, 1.0, rho_v)
    z = numer_v / safe_rho
    zmag = np.abs(z)
    imag_fraction = np.abs(z.imag) / np.maximum(zmag, abs_floor)
    holds = np.abs(z.imag) <= tol * (zmag + abs_floor)
    align = np.zeros_like(zmag)
    if psi.components > 1:
        # vector condition: (A psi)(Q) must be parallel to psi(Q)
        psi_v = cubic_interp(psi.amplitudes, psi.grid, pts)
        apsi_v = cubic_interp(apsi, psi.grid, pts)
        resid = apsi_v - z[None, :] * psi_v
        align = np.linalg.norm(resid, axis=0) / np.maximum(
            np.linalg.norm(apsi_v, axis=0), abs_floor
        )
        holds = holds & (align <= tol)
    holds = holds & ~node
    lam = np.where(holds, z.real, np.nan)
    return holds, lam, z, imag_fraction, align, node


def local_eigen_check(A: Observable, psi: WaveFunction, Q,
                      tol: float = DEFAULT_EIGEN_TOL,
                      abs_floor: float = DEFAULT_ABS_FLOOR,
                      rho_floor_rel: float = DEFAULT_RHO_FLOOR) -> ActualValueVerdict:
    """Decide whether (A psi)(Q) = lambda psi(Q) with real lambda at the point Q.

    The tolerance rule is |Im z| <= tol * (|z| + abs_floor) on the pointwise
    ratio z; for spinors the two components must additionally be parallel to
    z * psi(Q) within the same tolerance.
    """
    holds, lam, z, imf, align, node = local_eigen_check_many(
        A, psi, Q, tol=tol, abs_floor=abs_floor, rho_floor_rel=rho_floor_rel
    )
    if node[0]:
        raise NodeError("local eigen check at a node: rho(Q) below threshold")
    return ActualValueVerdict(
        holds=bool(holds[0]),
        lam=float(lam[0]) if holds[0] else None,
        ratio=complex(z[0]),
        imag_fraction=float(imf[0]),
        tol=tol,
        abs_floor=abs_floor,
        alignment_residual=float(align[0]),
    )


def weak_values_many(A: Observable, psi: WaveFunction, points: np.ndarray,
                     rho_floor_rel: float = DEFAULT_RHO_FLOOR,
                     apsi: np.ndarray | None = None):
    """Vectorized weak values; returns (a_w, A_w, rho, node_mask) arrays.

    a_w follows the real-part formula Re[psi^dag (A psi)] / psi^dag psi; A_w
    is the complex ratio (A psi)(Q)/psi(Q), evaluated in its equivalent
    sesquilinear form psi^dag (A psi) / psi^dag psi (for spinors this complex
    ratio is a recorded extension). Both formulas act on the same
    interpolated field values.
    """
    if apsi is None:
        apsi = apply(A, psi)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    numer_v = cubic_interp(sesquilinear_field(psi, apsi), psi.grid, pts)
    rho_v = cubic_interp(density(psi), psi.grid, pts).real
    floor = _rho_floor(psi, rho_floor_rel)
    node = rho_v <= floor
    safe_rho = np.where(node, 1.0, rho_v)
    a_w = numer_v.real / safe_rho
    A_w = numer_v / safe_rho
    a_w = np.where(node, np.nan, a_w)
    A_w = np.where(node, np.nan, A_w)
    return a_w, A_w, rho_v, node


def weak_actual_value(A: Observable, psi: WaveFunction, Q,
                      rho_floor_rel: float = DEFAULT_RHO_FLOOR) -> WeakValueRecord:
    a_w, A_w, rho, node = weak_values_many(A, psi, Q, rho_floor_rel=rho_floor_rel)
    if node[0]:
        raise NodeError("weak value at a node: rho(Q) below threshold")
    return WeakValueRecord(
        a_w=float(a_w[0]),
        A_w=complex(A_w[0]),
        rho_at_Q=float(rho[0]),
        observable=observable_id(A),
        spinor_extension=psi.components > 1,
    )


def general_weak_value(A: Observable, psi: WaveFunction, post: WaveFunction) -> complex:
    """<post|A|psi> / <post|psi>, the two-state weak value for an arbitrary
    post-selection state. Unbounded for nearly orthogonal selections, which is
    where anomalous values live."""
    apsi = psi.with_amplitudes(apply(A, psi))
    denom = inner_product(post, psi)
    if abs(denom) < 1e-300:
        raise NodeError("post-selection state is orthogonal to psi")
    return inner_product(post, apsi) / denom


# ---------------------------------------------------------------------------
# Robustness probe: perturb psi by a smooth compactly supported bump that
# carries a prescribed pointwise momentum ratio at Q, then follow the ratio
# of the perturbed states psi_n = psi + phi/n.


def mollifier(r2_over_eps2: np.ndarray) -> np.ndarray:
    """C-infinity bump exp(1 - 1/(1 - s)) for s = r^2/eps^2 < 1, 0 outside."""
    out = np.zeros_like(r2_over_eps2)
    inside = r2_over_eps2 < 1.0
    s = r2_over_eps2[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s))
    return out


@dataclass(frozen=True)
class ProbeResult:
    ratios: np.ndarray          # (n_max,) complex pointwise ratios of psi_n
    base_ratio: complex         # z = (A psi)(Q)/psi(Q) = alpha + i beta
    target: complex             # alpha + i gamma carried by the bump
    carried_measured: complex   # (A phi)(Q)/psi(Q) as realized on the grid
    gamma: float
    support_radius: float


def probe_extrapolate(ratios: np.ndarray) -> tuple[complex, complex]:
    """Fit r_n = (L*n + W)/(n + 1) and return (L, W).

    L is the n -> infinity limit of the ratio sequence; W extrapolates it to
    the perturbation-dominant end n -> 0, i.e. the value the perturbation
    carries into the family. The fit is an exact linear regression of
    r_n*(n+1) on n.
    """
    ratios = np.asarray(ratios)
    n = np.arange(1, ratios.size + 1, dtype=float)
    y = ratios * (n + 1.0)
    coeffs = np.polyfit(n, y, 1)
    return complex(coeffs[0]), complex(coeffs[1])


def robustness_probe(A: Observable, psi: WaveFunction, Q, gamma: float,
                     n_max: int = 1000, support_radius: float | None = None,
                     rho_floor_rel: float = DEFAULT_RHO_FLOOR) -> ProbeResult:
    """Ratio sequence (A psi_n)(Q)/psi_n(Q) for psi_n = psi + phi/n.

    phi = eta(q) psi(Q) exp(i b.(q - Q)) with eta a smooth bump of the given
    support radius (default 10 dx) and b chosen so that
    (A phi)(Q) = (alpha + i gamma) psi(Q), where alpha + i beta is the
    pointwise ratio of psi itself. Restricted to momentum observables, whose
    one-derivative structure the construction relies on.
    """
    if not isinstance(A, MomentumAxis):
        raise ConfigurationError("the robustness probe is constructed for momentum observables")
    grid = psi.grid
    pts = np.atleast_2d(np.asarray(Q, dtype=float))
    dxs = grid.spacing
    eps = support_radius if support_radius is not None else 10.0 * max(dxs)
    for k, (a, b) in enumerate(grid.extents):
        if eps > (b - a) / 2:
            raise ConfigurationError("bump support radius exceeds half the grid extent")

    apsi = apply(A, psi)
    psi_v, apsi_v, rho_v = _values_at(psi, apsi, pts)
    if rho_v[0] <= _rho_floor(psi, rho_floor_rel):
        raise NodeError("probe anchored at a node")
    psi_Q = psi_v[0, 0]
    z = complex(apsi_v[0, 0] / psi_Q)
    alpha = z.real
    target = alpha + 1j * gamma

    # For momentum along `axis`, (P phi)(Q) = hbar * b * psi(Q) with eta(Q)=1
    # and eta'(Q)=0, so b = (alpha + i gamma)/hbar realizes the target ratio.
    b_vec = np.zeros(grid.dims, dtype=complex)
    b_vec[A.axis] = target / psi.hbar

    meshes = grid.meshes()
    r2 = np.zeros(grid.shape)
    phase = np.zeros(grid.shape, dtype=complex)
    for k in range(grid.dims):
        delta = meshes[k] - pts[0, k]
        if grid.boundary is Boundary.PERIODIC:
            a, bb = grid.extents[k]
            L = bb - a
            delta = (delta + L / 2) % L - L / 2
        r2 += delta**2
        phase = phase + 1j * b_vec[k] * delta
    eta = mollifier(r2 / eps**2)
    phi = (eta * psi_Q * np.exp(phase))[np.newaxis]

    carried = None
    ratios = np.empty(n_max, dtype=complex)
    for idx, n in enumerate(range(1, n_max + 1)):
        psi_n = psi.with_amplitudes(psi.amplitudes + phi / n)
        apsi_n = apply(A, psi_n)
        pv, av, _ = _values_at(psi_n, apsi_n, pts)
        ratios[idx] = av[0, 0] / pv[0, 0]
    aphi = apply(A, psi.with_amplitudes(phi))
    aphi_v = cubic_interp(aphi, grid, pts)
    carried = complex(aphi_v[0, 0] / psi_Q)

    return ProbeResult(
        ratios=ratios,
        base_ratio=z,
        target=complex(target),
        carried_measured=carried,
        gamma=float(gamma),
        support_radius=float(eps),
    )


# ---------------------------------------------------------------------------
# JSON descriptors for scenario configs.

_SCHEME_KEY = {s.value: s for s in Scheme}


def observable_to_config(A: Observable) -> dict:
    if isinstance(A, PositionAxis):
        return {"kind": "position", "axis": A.axis}
    if isinstance(A, MomentumAxis):
        cfg = {"kind": "momentum", "axis": A.axis}
        if A.scheme is not None:
            cfg["scheme"] = A.scheme.value
        return cfg
    if isinstance(A, Kinetic):
        cfg = {"kind": "kinetic"}
        if A.scheme is not None:
            cfg["scheme"] = A.scheme.value
        return cfg
    if isinstance(A, PotentialField):
        return {"kind": "potential"}
    if isinstance(A, Hamiltonian):
        cfg = {"kind": "hamiltonian"}
        if A.scheme is not None:
            cfg["scheme"] = A.scheme.value
        return cfg
    if isinstance(A, SpinComponent):
        return {"kind": "spin", "n": list(A.n)}
    if isinstance(A, Scaled):
        return {"kind": "scaled", "c": A.c, "inner": observable_to_config(A.inner)}
    if isinstance(A, Sum):
        return {"kind": "sum", "parts": [observable_to_config(p) for p in A.parts]}
    raise BohmlabError(f"unknown observable {A!r}")


def observable_from_config(cfg: dict, potential: np.ndarray | None = None) -> Observable:
    """Build an observable from its JSON descriptor.

    `potential` supplies the sampled scenario potential for the `potential`
    and `hamiltonian` kinds.
    """
    kind = cfg.get("kind")
    scheme = _SCHEME_KEY[cfg["scheme"]] if "scheme" in cfg else None
    if kind == "position":
        return PositionAxis(axis=int(cfg.get("axis", 0)))
    if kind == "momentum":
        return MomentumAxis(axis=int(cfg.get("axis", 0)), scheme=scheme)
    if kind == "kinetic":
        return Kinetic(scheme=scheme)
    if kind == "potential":
        if potential is None:
            raise ConfigurationError("potential observable needs a scenario potential")
        return PotentialField(values=potential)
    if kind == "hamiltonian":
        return Hamiltonian(potential=potential, scheme=scheme)
    if kind == "spin":
        return SpinComponent(n=tuple(cfg.get("n", (0.0, 0.0, 1.0))))
    if kind == "scaled":
        return Scaled(c=float(cfg["c"]), inner=observable_from_config(cfg["inner"], potential))
    if kind == "sum":
        return Sum(parts=tuple(observable_from_config(p, potential) for p in cfg["parts"]))
    raise ConfigurationError(f"unknown observable kind {kind!r}")

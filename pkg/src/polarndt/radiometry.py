"""Polarization radiometry of heated rough surfaces.

Models the degree of linear polarization (DoLP) of thermal radiation leaving
an opaque surface that both emits and reflects environmental radiation.  The
control variable throughout is ``alpha``, the ratio of environmental incident
intensity to the object's emitted intensity: at ``alpha == 1`` the surface is
in radiative equilibrium with its surroundings and the net DoLP vanishes.

Two surface models are provided:

* ``dolp_simplified`` -- in-plane specular model; closed form in the Fresnel
  magnitudes and the surface roughness ``sigma_m``.
* ``dolp_full`` -- microfacet model integrating a Gaussian slope distribution
  over the reflected hemisphere (numerical quadrature).

Geometry conventions for the full model (documented because the integral
does not fix them on its own):

* The fixed direction (camera/environment axis) sits at zenith ``psi_i`` in
  the ``phi = 0`` meridian plane.  The hemisphere integral runs over
  directions ``(psi_r, phi_r)``.
* The microfacet tilt ``psi_N`` is the angle between the macroscopic normal
  and the half-vector of the two directions.
* ``eta_r`` is the rotation angle between the scattering plane (spanned by
  the two directions) and the ``phi = 0`` viewing meridian, with its sign
  taken from ``sin(phi_r)``; in-plane geometries give ``eta_r = 0``.
* Fresnel magnitudes inside the integrand are evaluated at the local
  incidence angle onto the microfacet (angle between the fixed direction
  and the half-vector).  This keeps the integrand smooth at the specular
  peak and reduces to the macroscopic angle for small roughness.

Complex refractive indices are stored as ``n_real - 1j * n_imag`` and the
refraction cosine uses the principal square root with ``Re >= 0`` (decaying
wave into the material).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

N_AIR = 1.0

# Built-in material table: name -> (n_real, n_imag, sigma_m).
_BUILTIN_TABLE = {
    "aluminum": (4.88, 1.17, 0.63),
    "nickel": (3.84, 0.71, 0.92),
    "paper": (2.65, 0.0, 1.01),
    "cfrp": (2.77, 0.0, 1.11),
    "rubber": (1.93, 0.0, 1.17),
}

_DENOM_FLOOR = 1e-12


class DegenerateDenominatorError(ArithmeticError):
    """The simplified-model denominator is numerically meaningless (<= 1e-12)."""


class QuadratureError(ArithmeticError):
    """A hemisphere integral evaluated to a non-finite value."""


class FitError(RuntimeError):
    """Curve fit rejected: residual norm above the configured ceiling."""


@dataclass(frozen=True)
class Material:
    """Opaque surface material: complex refractive index and roughness.

    ``n_imag`` is stored positive; the complex index used in the Fresnel
    relations is ``n_real - 1j * n_imag``.  ``sigma_m`` is the slope
    parameter of the Gaussian microfacet distribution and enters the
    simplified model directly.
    """

    name: str
    n_real: float
    n_imag: float
    sigma_m: float

    def __post_init__(self):
        if not self.name:
            raise ValueError("material name must be non-empty")
        if not (self.n_real > 0):
            raise ValueError(f"{self.name}: n_real must be > 0, got {self.n_real}")
        if not (self.n_imag >= 0):
            raise ValueError(f"{self.name}: n_imag must be >= 0, got {self.n_imag}")
        if not (self.sigma_m > 0):
            raise ValueError(f"{self.name}: sigma_m must be > 0, got {self.sigma_m}")

    @property
    def n_complex(self) -> complex:
        return complex(self.n_real, -self.n_imag)


@dataclass(frozen=True)
class RadiometricScene:
    """Viewing geometry and radiation balance: alpha = I_env / I_obj."""

    alpha: float
    psi_i: float  # zenith angle, radians, in [0, pi/2)

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be finite and positive, got {self.alpha}")
        if not (0.0 <= self.psi_i < math.pi / 2):
            raise ValueError(
                f"psi_i must lie in [0, pi/2), got {self.psi_i} rad")


@dataclass(frozen=True)
class QuadratureConfig:
    """Node counts for the hemisphere integrals of the full model.

    Gauss-Legendre over zenith on [0, zenith_cap], uniform (periodic
    trapezoid) over azimuth on [0, 2*pi).  The cap keeps the
    ``1/cos^4(psi_N)`` slope weight finite.
    """

    n_zenith: int = 64
    n_azimuth: int = 64
    zenith_cap: float = math.radians(89.5)

    def __post_init__(self):
        if self.n_zenith < 16:
            raise ValueError(f"n_zenith must be >= 16, got {self.n_zenith}")
        if self.n_azimuth < 16:
            raise ValueError(f"n_azimuth must be >= 16, got {self.n_azimuth}")
        if not (0.0 < self.zenith_cap < math.pi / 2):
            raise ValueError(
                f"zenith_cap must lie in (0, pi/2), got {self.zenith_cap}")


def builtin_materials() -> dict[str, Material]:
    """Fresh dict of the five built-in materials."""
    return {
        name: Material(name, nr, ni, sm)
        for name, (nr, ni, sm) in _BUILTIN_TABLE.items()
    }


MATERIALS = builtin_materials()


def get_material(name: str, table: dict[str, Material] | None = None) -> Material:
    table = MATERIALS if table is None else table
    key = name.strip().lower()
    try:
        return table[key]
    except KeyError:
        known = ", ".join(sorted(table))
        raise KeyError(f"unknown material {name!r} (known: {known})") from None


def load_material_table(path) -> dict[str, Material]:
    """Load a material table from a plain-text file.

    One material per row: ``name n_real n_imag sigma_m`` separated by
    whitespace; blank lines and ``#`` comments are skipped.
    """
    table: dict[str, Material] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(
                    f"{path}:{lineno}: expected 'name n_real n_imag sigma_m', "
                    f"got {raw.strip()!r}")
            name = parts[0].lower()
            try:
                nr, ni, sm = (float(p) for p in parts[1:])
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: non-numeric entry in {raw.strip()!r}") from None
            table[name] = Material(name, nr, ni, sm)
    if not table:
        raise ValueError(f"{path}: no material rows found")
    return table


def _check_psi(psi_i: float) -> None:
    if not (0.0 <= psi_i < math.pi / 2):
        raise ValueError(f"psi_i must lie in [0, pi/2), got {psi_i} rad")


def _snell_cos_from_cos(n_m: complex, cos_i: np.ndarray) -> np.ndarray:
    """Vectorized refraction cosine from real incidence cosines."""
    sin2 = 1.0 - np.square(cos_i)
    c = np.sqrt(np.asarray(1.0 - (N_AIR / n_m) ** 2 * sin2, dtype=complex))
    return np.where(c.real < 0, -c, c)


def _fresnel_from_cos(n_m: complex, cos_i: np.ndarray):
    """Vectorized magnitudes of the s/p amplitude coefficients."""
    cos_j = _snell_cos_from_cos(n_m, cos_i)
    r_s = np.abs(N_AIR * cos_i - n_m * cos_j) / np.abs(N_AIR * cos_i + n_m * cos_j)
    r_p = np.abs(n_m * cos_i - N_AIR * cos_j) / np.abs(n_m * cos_i + N_AIR * cos_j)
    return r_s, r_p


def snell_cos(material: Material, psi_i: float) -> complex:
    """Cosine of the (complex) refraction angle for incidence ``psi_i``.

    Principal square root of ``1 - (n_air/n_m)^2 sin^2(psi_i)`` with the
    branch flipped so the real part is non-negative.
    """
    _check_psi(psi_i)
    return complex(_snell_cos_from_cos(material.n_complex, np.cos(psi_i)))


def fresnel_components(material: Material, psi_i: float) -> tuple[float, float]:
    """Magnitudes (R_S, R_P) of the s- and p-amplitude coefficients.

    These are amplitude-coefficient magnitudes, not energy reflectances;
    all downstream DoLP expressions use this consistent form.  Both values
    lie in [0, 1] and coincide at normal incidence.
    """
    _check_psi(psi_i)
    r_s, r_p = _fresnel_from_cos(material.n_complex, np.cos(psi_i))
    return float(r_s), float(r_p)


def _simplified_denominator(material: Material, scene: RadiometricScene,
                            r_s: float, r_p: float) -> float:
    den = (8.0 * material.sigma_m * math.cos(scene.psi_i)
           + abs(scene.alpha - 1.0) * (r_s + r_p))
    if den <= _DENOM_FLOOR:
        raise DegenerateDenominatorError(
            f"simplified-model denominator {den:.3e} <= {_DENOM_FLOOR:.0e} "
            f"(alpha={scene.alpha}, psi_i={scene.psi_i})")
    return den


def dolp_simplified(material: Material, scene: RadiometricScene) -> float:
    """In-plane specular DoLP model.

    ``|alpha - 1| * |R_S - R_P|`` over
    ``8 sigma_m cos(psi_i) + |alpha - 1| (R_S + R_P)``; the sign rule on
    the ``(alpha - 1)`` denominator term makes that contribution positive
    on both sides of equilibrium.  Returns exactly 0 at ``alpha == 1``.
    """
    if scene.alpha == 1.0:
        return 0.0
    r_s, r_p = fresnel_components(material, scene.psi_i)
    den = _simplified_denominator(material, scene, r_s, r_p)
    value = abs(scene.alpha - 1.0) * abs(r_s - r_p) / den
    return min(max(value, 0.0), 1.0)


def dolp_sensitivity(material: Material, scene: RadiometricScene) -> float:
    """Analytic d(DoLP)/d(alpha) of the simplified model.

    Positive for ``alpha > 1``, negative for ``alpha < 1``: the DoLP moves
    away from zero as the radiation balance departs from equilibrium.
    """
    r_s, r_p = fresnel_components(material, scene.psi_i)
    den = _simplified_denominator(material, scene, r_s, r_p)
    sign = 1.0 if scene.alpha > 1.0 else -1.0
    core = 8.0 * material.sigma_m * math.cos(scene.psi_i)
    return sign * core * abs(r_s - r_p) / den ** 2


def dolp_mixture(dolp_surface: float, dolp_subsurface: float,
                 alpha: float) -> float:
    """Blend surface and subsurface DoLP with alpha-dependent weights.

    The surface weight is ``clamp(alpha, 0, 1)``: near equilibrium the
    surface dominates, far below it the subsurface shows through.  The
    result always lies between the two inputs.
    """
    for label, v in (("dolp_surface", dolp_surface),
                     ("dolp_subsurface", dolp_subsurface)):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{label} must lie in [0, 1], got {v}")
    w_surface = min(max(alpha, 0.0), 1.0)
    return (1.0 - w_surface) * dolp_subsurface + w_surface * dolp_surface


def dolp_full(material: Material, i_obj: float, i_e: float, psi_i: float,
              quadrature: QuadratureConfig | None = None) -> float:
    """Microfacet DoLP model evaluated by 2-D quadrature.

    Three hemisphere integrals share the kernel
    ``exp(-tan^2(psi_N) / (2 sigma_m^2)) / cos^4(psi_N) * sin(psi_r) /
    cos(psi_i)``: the polarized numerator pair carries ``cos(2 eta_r)
    (R_S - R_P)`` and ``sin(2 eta_r) (R_P - R_S)``, the denominator carries
    ``(R_S + R_P)``.  ``i_obj`` and ``i_e`` are in arbitrary consistent
    radiometric units; only their difference and ratio matter.

    Returns a value clamped to [0, 1]; exactly 0 when ``i_e == i_obj``.
    Raises ``QuadratureError`` if any integral is non-finite.
    """
    if not (i_obj > 0):
        raise ValueError(f"i_obj must be > 0, got {i_obj}")
    if not (i_e >= 0):
        raise ValueError(f"i_e must be >= 0, got {i_e}")
    _check_psi(psi_i)
    if i_e == i_obj:
        return 0.0
    q = quadrature or QuadratureConfig()

    x, w = np.polynomial.legendre.leggauss(q.n_zenith)
    psi_r = 0.5 * q.zenith_cap * (x + 1.0)
    w_zen = 0.5 * q.zenith_cap * w
    phi_r = 2.0 * np.pi * np.arange(q.n_azimuth) / q.n_azimuth
    w_az = 2.0 * np.pi / q.n_azimuth

    psi_g, phi_g = np.meshgrid(psi_r, phi_r, indexing="ij")
    weights = w_zen[:, None] * w_az

    sin_i, cos_i = math.sin(psi_i), math.cos(psi_i)
    sin_r, cos_r = np.sin(psi_g), np.cos(psi_g)
    # half-vector of the fixed direction (psi_i, 0) and (psi_r, phi_r)
    hx = sin_i + sin_r * np.cos(phi_g)
    hy = sin_r * np.sin(phi_g)
    hz = cos_i + cos_r
    h_norm = np.sqrt(hx * hx + hy * hy + hz * hz)
    cos_n = np.clip(hz / h_norm, 1e-12, 1.0)
    tan2_n = (1.0 - cos_n * cos_n) / (cos_n * cos_n)
    kernel = (np.exp(-tan2_n / (2.0 * material.sigma_m ** 2))
              / cos_n ** 4 * sin_r / cos_i)

    # Fresnel magnitudes at the local incidence angle onto the facet
    cos_loc = np.clip((sin_i * hx + cos_i * hz) / h_norm, 0.0, 1.0)
    r_s, r_p = _fresnel_from_cos(material.n_complex, cos_loc)

    # rotation angle between scattering plane and the phi=0 meridian
    cos_gamma = np.clip(sin_i * sin_r * np.cos(phi_g) + cos_i * cos_r, -1.0, 1.0)
    sin_gamma = np.sqrt(np.clip(1.0 - cos_gamma * cos_gamma, 0.0, None))
    denom = sin_i * sin_gamma
    safe = denom > 1e-9
    cos_eta = np.where(safe, (cos_r - cos_i * cos_gamma) / np.where(safe, denom, 1.0),
                       np.cos(phi_g))
    eta = np.arccos(np.clip(cos_eta, -1.0, 1.0))
    eta = np.where(np.sin(phi_g) < 0.0, -eta, eta)

    int_cos = float(np.sum(weights * kernel * np.cos(2.0 * eta) * (r_s - r_p)))
    int_sin = float(np.sum(weights * kernel * np.sin(2.0 * eta) * (r_p - r_s)))
    int_sum = float(np.sum(weights * kernel * (r_s + r_p)))
    if not all(map(math.isfinite, (int_cos, int_sin, int_sum))):
        raise QuadratureError(
            f"non-finite hemisphere integral for {material.name} at "
            f"psi_i={psi_i:.4f} (cos={int_cos}, sin={int_sin}, sum={int_sum})")

    prefactor = 1.0 / (8.0 * math.pi * material.sigma_m ** 2)
    numerator = prefactor * abs(i_e - i_obj) * math.hypot(int_cos, int_sin)
    denominator = i_obj + (i_e - i_obj) * prefactor * int_sum
    if denominator == 0.0:
        return 1.0
    return min(max(numerator / denominator, 0.0), 1.0)


@dataclass(frozen=True)
class FitResult:
    """Outcome of a DoLP-vs-angle curve fit."""

    alpha: float
    residual_norm: float
    weight_surface: float
    weight_subsurface: float
    n_samples: int
    model: str


def _model_curve(alpha: float, psi: Sequence[float], material: Material,
                 model: str, subsurface: Material | None) -> np.ndarray:
    vals = np.empty(len(psi))
    for i, p in enumerate(psi):
        scene = RadiometricScene(alpha=alpha, psi_i=p)
        surf = dolp_simplified(material, scene)
        if model == "mixture":
            sub = dolp_simplified(subsurface, scene)
            vals[i] = dolp_mixture(surf, sub, alpha)
        else:
            vals[i] = surf
    return vals


def fit_dolp_curve(samples: Sequence[tuple[float, float]], material: Material,
                   model: str = "simplified",
                   subsurface: Material | None = None,
                   max_residual: float | None = None) -> FitResult:
    """Recover alpha from (psi_i, DoLP) samples by least squares.

    Deterministic search: coarse grid with step 0.01 over (0, 2], then
    golden-section refinement of the best cell down to an alpha interval
    of 1e-6.  ``model`` is ``"simplified"`` (surface only) or ``"mixture"``
    (requires ``subsurface``).  Raises ``FitError`` when ``max_residual``
    is set and the best residual norm exceeds it.

    The surface-only model depends on ``|alpha - 1|`` alone, so ``alpha``
    and ``2 - alpha`` fit equally well; the cooling-side representative
    (``alpha <= 1``) is returned for that model.  The mixture model is not
    symmetric and keeps whichever side wins.
    """
    if model not in ("simplified", "mixture"):
        raise ValueError(f"unknown fit model {model!r}")
    if model == "mixture" and subsurface is None:
        raise ValueError("mixture model requires a subsurface material")
    if len(samples) < 3:
        raise ValueError(f"need at least 3 samples, got {len(samples)}")
    psi = [float(p) for p, _ in samples]
    dolp = np.array([float(d) for _, d in samples])
    if len(set(psi)) != len(psi):
        raise ValueError("sample angles must be distinct")
    for p in psi:
        _check_psi(p)
    if np.any((dolp < 0.0) | (dolp > 1.0)):
        raise ValueError("sample DoLP values must lie in [0, 1]")

    def sse(alpha: float) -> float:
        resid = _model_curve(alpha, psi, material, model, subsurface) - dolp
        return float(np.dot(resid, resid))

    grid = np.arange(0.01, 2.0 + 1e-12, 0.01)
    errors = np.array([sse(a) for a in grid])
    best = int(np.argmin(errors))
    lo = max(grid[best] - 0.01, 1e-9)
    hi = min(grid[best] + 0.01, 2.0)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = sse(c), sse(d)
    while b - a > 1e-6:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = sse(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = sse(d)
    alpha_hat = 0.5 * (a + b)
    if model == "simplified" and alpha_hat > 1.0:
        alpha_hat = 2.0 - alpha_hat
    residual = math.sqrt(sse(alpha_hat))
    if max_residual is not None and residual > max_residual:
        raise FitError(
            f"residual norm {residual:.6g} exceeds ceiling {max_residual:.6g} "
            f"(alpha={alpha_hat:.6f})")
    w_surface = min(max(alpha_hat, 0.0), 1.0)
    return FitResult(alpha=alpha_hat, residual_norm=residual,
                     weight_surface=w_surface, weight_subsurface=1.0 - w_surface,
                     n_samples=len(samples), model=model)

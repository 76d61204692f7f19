"""Name resolution for the built-in constitutive, conductivity and thermodynamic models.

Names are ``kind[:parameters]``:

* sigma: ``identity``, ``power:p[:scale]``, ``saturating``,
  ``zrp:linear``, ``zrp:constant``, ``zrp:table:g1/g2/...``
* kappa: ``constant:k0``, ``linear:k1``
* thermo: ``ideal:c``
* lattice rates: ``linear``, ``constant``, ``table:g1/g2/...``
"""
from __future__ import annotations

import numpy as np

from .fields import SigmaModel, sigma_identity, sigma_power, sigma_saturating
from .functionals import IdealGasThermo, ThermoModel
from .transport import kappa_constant, kappa_linear
from .zrp import RATE_FUNCTIONS, SingleSiteMeasure, ZrpModel, sigma_from_rates

# density up to which zrp-derived sigma models are tabulated in the listing
LISTING_DENSITY = 4.0


class UnknownModel(ValueError):
    pass


def _split(name: str) -> list[str]:
    return [x.strip() for x in name.strip().split(":")]


def _floats(parts, what):
    try:
        return [float(x) for x in parts]
    except ValueError:
        raise UnknownModel(f"bad numeric parameter in {what} {':'.join(parts)!r}") from None


def resolve_rate(name: str):
    parts = _split(name)
    if parts[0] in RATE_FUNCTIONS and len(parts) == 1:
        return parts[0]
    if parts[0] == "table" and len(parts) == 2:
        vals = _floats(parts[1].split("/"), "rate table")
        return tuple(vals)
    raise UnknownModel(f"unknown rate {name!r}; expected linear, constant or table:g1/g2/...")


def zrp_reference_model(rate, rho_max: float) -> ZrpModel:
    """Single-site model whose fugacity gives density ``1.25 * rho_max`` (or the largest reachable)."""
    target = 1.25 * rho_max
    z = 1e-3
    best = None
    for _ in range(200):
        try:
            m = ZrpModel(1, rate, z, z)
        except ValueError:
            break
        best = m
        if SingleSiteMeasure(m, z).density >= target:
            return m
        z *= 1.25
    if best is None:
        raise UnknownModel(f"rate {rate!r} has no convergent fugacity range")
    return best


def resolve_sigma(name: str, rho_max: float = LISTING_DENSITY) -> SigmaModel:
    parts = _split(name)
    head = parts[0]
    if head == "identity" and len(parts) == 1:
        return sigma_identity()
    if head == "saturating" and len(parts) == 1:
        return sigma_saturating()
    if head == "power" and len(parts) in (2, 3):
        vals = _floats(parts[1:], "sigma")
        if vals[0] <= 0:
            raise UnknownModel("power exponent must be positive")
        return sigma_power(*vals)
    if head == "zrp" and len(parts) >= 2:
        rate = resolve_rate(":".join(parts[1:]))
        model = zrp_reference_model(rate, rho_max)
        sigma = sigma_from_rates(model)
        if sigma.interval[1] < rho_max:
            raise UnknownModel(f"{name} only reaches density {sigma.interval[1]:.4g} < {rho_max:.4g}")
        return sigma
    raise UnknownModel(f"unknown sigma {name!r}; expected identity, power:p[:scale], saturating or zrp:<rate>")


def resolve_kappa(name: str) -> SigmaModel:
    parts = _split(name)
    if parts[0] in ("constant", "linear") and len(parts) == 2:
        (k,) = _floats(parts[1:], "kappa")
        if k <= 0:
            raise UnknownModel("conductivity prefactor must be positive")
        return kappa_constant(k) if parts[0] == "constant" else kappa_linear(k)
    raise UnknownModel(f"unknown kappa {name!r}; expected constant:k0 or linear:k1")


def resolve_thermo(name: str) -> ThermoModel:
    parts = _split(name)
    if parts[0] == "ideal" and len(parts) == 2:
        (c,) = _floats(parts[1:], "thermo")
        if c <= 0:
            raise UnknownModel("heat capacity must be positive")
        return IdealGasThermo(c)
    raise UnknownModel(f"unknown thermo {name!r}; expected ideal:c")


def _range(lo, hi) -> str:
    return f"[{lo:.6g}, {hi:.6g}]" if np.isfinite(hi) else f"({lo:.6g}, inf)"


def list_models() -> str:
    lines = ["sigma models (drho/dt = lap sigma(rho)):"]
    for name in ("identity", "power:2", "saturating"):
        s = resolve_sigma(name)
        lines.append(f"  {name:<16} {s.name:<20} density range {_range(*s.interval)}")
    for rate in ("linear", "constant"):
        s = resolve_sigma(f"zrp:{rate}", LISTING_DENSITY)
        zlo, zhi = s.meta["z_range"]
        lines.append(f"  zrp:{rate:<12} {s.name:<20} n_max {s.meta['n_max']}  fugacity range [{zlo:.6g}, {zhi:.6g}]"
                     f"  density range [0, {s.interval[1]:.6g}]")
    lines.append("  zrp:table:g1/g2/...  rates g(n) from a table, last entry repeated")
    lines.append("")
    lines.append("kappa models (Kirchhoff potential Phi(T) = int kappa dT):")
    lines.append("  constant:k0      kappa = k0, temperature range (0, inf)")
    lines.append("  linear:k1        kappa = k1 T, temperature range (0, inf)")
    lines.append("")
    lines.append("thermo models (entropy density s(e)):")
    lines.append("  ideal:c          s = c log e, T = e / c, energy range (0, inf)")
    lines.append("")
    lines.append("lattice rates g(n):")
    lines.append("  linear           g(n) = n, sigma(rho) = rho")
    lines.append("  constant         g(n) = 1, sigma(rho) = rho / (1 + rho), fugacities < 1")
    lines.append("  table:g1/g2/...  g(n) = g_n, last entry repeated")
    return "\n".join(lines) + "\n"

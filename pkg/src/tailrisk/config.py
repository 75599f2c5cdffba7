"""Declarative config blocks for laws, copulas, and model specs.

Parsing is strict: unknown keys are rejected by name so a typo in an
experiment file fails loudly instead of silently using a default. Every
parser has a serializer producing the identical block, which is what
the CLI echoes into its output header.
"""

from __future__ import annotations

from typing import Any

from .dependence import (
    AMHCopula,
    Copula,
    FGMCopula,
    FrankCopula,
    IndependenceCopula,
)
from .distributions import Empirical, Pareto, ParetoMixture, TailLaw
from .errors import ConfigurationError
from .mrv import MRVSpec, ProductMRVSpec
from .renewal import (
    DeterministicInterarrival,
    ExponentialInterarrival,
    GammaInterarrival,
    Interarrival,
    RenewalSpec,
    UniformInterarrival,
)
from .risk_measures import (
    BackgroundRiskModel,
    Distortion,
    IdentityDistortion,
    PowerDistortion,
    ProportionalHazardDistortion,
    TableDistortion,
)
from .weighted_sums import (
    BetaWeight,
    BivariateSumSpec,
    PointMass,
    UniformWeight,
    Weight,
)


def _take(block: Any, context: str, required: tuple[str, ...], optional: dict[str, Any] = {}):
    """Destructure a dict block, rejecting unknown keys by name."""
    if not isinstance(block, dict):
        raise ConfigurationError(f"{context}: expected an object, got {type(block).__name__}")
    unknown = set(block) - set(required) - set(optional)
    if unknown:
        raise ConfigurationError(f"{context}: unknown key '{sorted(unknown)[0]}'")
    missing = [k for k in required if k not in block]
    if missing:
        raise ConfigurationError(f"{context}: missing key '{missing[0]}'")
    return [block[k] for k in required] + [block.get(k, v) for k, v in optional.items()]


def law_from_config(block: dict) -> TailLaw:
    family = block.get("family")
    if family == "pareto":
        alpha, xmin, shift = _take(block, "pareto law", ("family", "alpha"), {"xmin": 1.0, "shift": 0.0})[1:]
        return Pareto(alpha=float(alpha), xmin=float(xmin), shift=float(shift))
    if family == "pareto_mixture":
        (components,) = _take(block, "pareto mixture", ("family", "components"))[1:]
        parts = []
        for comp in components:
            w, alpha, xmin, shift = _take(
                comp, "mixture component", ("w", "alpha"), {"xmin": 1.0, "shift": 0.0}
            )
            parts.append((float(w), Pareto(alpha=float(alpha), xmin=float(xmin), shift=float(shift))))
        return ParetoMixture(tuple(parts))
    if family == "empirical":
        (data,) = _take(block, "empirical law", ("family", "data"))[1:]
        return Empirical(tuple(float(v) for v in data))
    raise ConfigurationError(f"unknown law family {family!r}")


def law_to_config(law: TailLaw) -> dict:
    if isinstance(law, Pareto):
        out = {"family": "pareto", "alpha": law.alpha, "xmin": law.xmin}
        if law.shift:
            out["shift"] = law.shift
        return out
    if isinstance(law, ParetoMixture):
        return {
            "family": "pareto_mixture",
            "components": [
                {"w": w, "alpha": c.alpha, "xmin": c.xmin, **({"shift": c.shift} if c.shift else {})}
                for w, c in law.components
            ],
        }
    if isinstance(law, Empirical):
        return {"family": "empirical", "data": list(law.data)}
    raise ConfigurationError(f"cannot serialize law {type(law).__name__}")


_COPULA_FAMILIES = {
    "independence": IndependenceCopula,
    "fgm": FGMCopula,
    "amh": AMHCopula,
    "frank": FrankCopula,
}


def copula_from_config(block: dict) -> Copula:
    name, theta, sai = _take(
        block, "copula", ("copula",), {"theta": None, "sai_constant": None}
    )
    cls = _COPULA_FAMILIES.get(name)
    if cls is None:
        raise ConfigurationError(f"unknown copula family {name!r}")
    if cls is IndependenceCopula:
        if theta is not None:
            raise ConfigurationError("independence copula takes no theta")
        cop = cls()
    else:
        if theta is None:
            raise ConfigurationError(f"{name} copula needs theta")
        cop = cls(theta=float(theta))
    # Resolve the joint-tail constant now so downstream asymptotics can
    # rely on it; the resolved value is echoed back in the output.
    return cop.with_sai_constant(None if sai is None else float(sai))


def copula_to_config(cop: Copula) -> dict:
    for name, cls in _COPULA_FAMILIES.items():
        if isinstance(cop, cls):
            out = {"copula": name}
            if name != "independence":
                out["theta"] = cop.theta
            if cop.sai_constant is not None:
                out["sai_constant"] = cop.sai_constant
            return out
    raise ConfigurationError(f"cannot serialize copula {type(cop).__name__}")


def weight_from_config(block: dict) -> Weight:
    family = block.get("family")
    if family == "point":
        (value,) = _take(block, "point weight", ("family", "value"))[1:]
        return PointMass(float(value))
    if family == "uniform":
        lo, hi = _take(block, "uniform weight", ("family", "lo", "hi"))[1:]
        return UniformWeight(float(lo), float(hi))
    if family == "beta":
        a, b, scale = _take(block, "beta weight", ("family", "a", "b"), {"scale": 1.0})[1:]
        return BetaWeight(float(a), float(b), float(scale))
    raise ConfigurationError(f"unknown weight family {family!r}")


def weight_to_config(w: Weight) -> dict:
    if isinstance(w, PointMass):
        return {"family": "point", "value": w.value}
    if isinstance(w, UniformWeight):
        return {"family": "uniform", "lo": w.lo, "hi": w.hi}
    if isinstance(w, BetaWeight):
        return {"family": "beta", "a": w.a, "b": w.b, "scale": w.scale}
    raise ConfigurationError(f"cannot serialize weight {type(w).__name__}")


def sum_spec_from_config(block: dict) -> BivariateSumSpec:
    x_laws, y_laws, pair_copulas, theta, delta = _take(
        block,
        "weighted-sum system",
        ("x_laws", "y_laws", "pair_copulas", "theta_weights", "delta_weights"),
    )
    return BivariateSumSpec(
        x_laws=tuple(law_from_config(b) for b in x_laws),
        y_laws=tuple(law_from_config(b) for b in y_laws),
        pair_copulas=tuple(copula_from_config(b) for b in pair_copulas),
        theta_weights=tuple(weight_from_config(b) for b in theta),
        delta_weights=tuple(weight_from_config(b) for b in delta),
    )


def sum_spec_to_config(spec: BivariateSumSpec) -> dict:
    return {
        "x_laws": [law_to_config(l) for l in spec.x_laws],
        "y_laws": [law_to_config(l) for l in spec.y_laws],
        "pair_copulas": [copula_to_config(c) for c in spec.pair_copulas],
        "theta_weights": [weight_to_config(w) for w in spec.theta_weights],
        "delta_weights": [weight_to_config(w) for w in spec.delta_weights],
    }


_INTERARRIVAL_FAMILIES = ("exponential", "deterministic", "gamma", "uniform")


def interarrival_from_config(block: dict) -> Interarrival:
    family = block.get("family")
    if family == "exponential":
        (rate,) = _take(block, "exponential interarrival", ("family", "rate"))[1:]
        return ExponentialInterarrival(float(rate))
    if family == "deterministic":
        (spacing,) = _take(block, "deterministic interarrival", ("family", "spacing"))[1:]
        return DeterministicInterarrival(float(spacing))
    if family == "gamma":
        shape, rate = _take(block, "gamma interarrival", ("family", "shape", "rate"))[1:]
        return GammaInterarrival(float(shape), float(rate))
    if family == "uniform":
        lo, hi = _take(block, "uniform interarrival", ("family", "lo", "hi"))[1:]
        return UniformInterarrival(float(lo), float(hi))
    raise ConfigurationError(f"unknown interarrival family {family!r}")


def interarrival_to_config(ia: Interarrival) -> dict:
    if isinstance(ia, ExponentialInterarrival):
        return {"family": "exponential", "rate": ia.rate}
    if isinstance(ia, DeterministicInterarrival):
        return {"family": "deterministic", "spacing": ia.spacing}
    if isinstance(ia, GammaInterarrival):
        return {"family": "gamma", "shape": ia.shape, "rate": ia.rate}
    if isinstance(ia, UniformInterarrival):
        return {"family": "uniform", "lo": ia.lo, "hi": ia.hi}
    raise ConfigurationError(f"cannot serialize interarrival {type(ia).__name__}")


def renewal_spec_from_config(block: dict) -> RenewalSpec:
    ia, cx, cy, cop, prem, interest, horizon = _take(
        block,
        "renewal model",
        ("interarrival", "claim_x", "claim_y", "claim_copula"),
        {"premium_rates": [0.0, 0.0], "interest": 0.0, "horizon": 1.0},
    )
    return RenewalSpec(
        interarrival=interarrival_from_config(ia),
        claim_x=law_from_config(cx),
        claim_y=law_from_config(cy),
        claim_copula=copula_from_config(cop),
        premium_rates=(float(prem[0]), float(prem[1])),
        interest=float(interest),
        horizon=float(horizon),
    )


def renewal_spec_to_config(spec: RenewalSpec) -> dict:
    return {
        "interarrival": interarrival_to_config(spec.interarrival),
        "claim_x": law_to_config(spec.claim_x),
        "claim_y": law_to_config(spec.claim_y),
        "claim_copula": copula_to_config(spec.claim_copula),
        "premium_rates": list(spec.premium_rates),
        "interest": spec.interest,
        "horizon": spec.horizon,
    }


def mrv_spec_from_config(block: dict) -> MRVSpec:
    alpha, atoms, xmin = _take(block, "spectral spec", ("alpha", "atoms"), {"xmin": 1.0})
    parsed = []
    for atom in atoms:
        direction, p = _take(atom, "spectral atom", ("dir", "p"))
        parsed.append((tuple(float(v) for v in direction), float(p)))
    return MRVSpec(alpha=float(alpha), atoms=tuple(parsed), radial_xmin=float(xmin))


def mrv_spec_to_config(spec: MRVSpec) -> dict:
    return {
        "alpha": spec.alpha,
        "xmin": spec.radial_xmin,
        "atoms": [{"dir": list(d), "p": p} for d, p in spec.atoms],
    }


def product_spec_from_config(block: dict) -> ProductMRVSpec:
    base, mode, common, components = _take(
        block,
        "product spec",
        ("base",),
        {"theta_mode": "identity", "theta_common": None, "theta_components": None},
    )
    return ProductMRVSpec(
        base=mrv_spec_from_config(base),
        theta_mode=mode,
        theta_common=None if common is None else weight_from_config(common),
        theta_components=None
        if components is None
        else tuple(weight_from_config(b) for b in components),
    )


def product_spec_to_config(spec: ProductMRVSpec) -> dict:
    out = {"base": mrv_spec_to_config(spec.base), "theta_mode": spec.theta_mode}
    if spec.theta_common is not None:
        out["theta_common"] = weight_to_config(spec.theta_common)
    if spec.theta_components is not None:
        out["theta_components"] = [weight_to_config(w) for w in spec.theta_components]
    return out


def background_model_from_config(block: dict) -> BackgroundRiskModel:
    product, weights = _take(block, "background risk model", ("product", "weights"))
    return BackgroundRiskModel(
        product=product_spec_from_config(product),
        weights=tuple(float(w) for w in weights),
    )


def background_model_to_config(model: BackgroundRiskModel) -> dict:
    return {
        "product": product_spec_to_config(model.product),
        "weights": list(model.weights),
    }


def distortion_from_config(block: dict) -> Distortion:
    family = block.get("family")
    if family == "identity":
        _take(block, "identity distortion", ("family",))
        return IdentityDistortion()
    if family == "power":
        (beta,) = _take(block, "power distortion", ("family", "beta"))[1:]
        return PowerDistortion(float(beta))
    if family == "proportional_hazard":
        (kappa,) = _take(block, "proportional hazard distortion", ("family", "kappa"))[1:]
        return ProportionalHazardDistortion(float(kappa))
    if family == "table":
        xs, gs = _take(block, "table distortion", ("family", "xs", "gs"))[1:]
        return TableDistortion(tuple(float(v) for v in xs), tuple(float(v) for v in gs))
    raise ConfigurationError(f"unknown distortion family {family!r}")


def distortion_to_config(g: Distortion) -> dict:
    if isinstance(g, IdentityDistortion):
        return {"family": "identity"}
    if isinstance(g, PowerDistortion):
        return {"family": "power", "beta": g.beta}
    if isinstance(g, ProportionalHazardDistortion):
        return {"family": "proportional_hazard", "kappa": g.kappa}
    if isinstance(g, TableDistortion):
        return {"family": "table", "xs": list(g.xs), "gs": list(g.gs)}
    raise ConfigurationError(f"cannot serialize distortion {type(g).__name__}")

"""Elastic material adapters"""
from adapters.base import ElasticModel
from adapters.corotational import Corotational
from adapters.neohookean import NeoHookean
from adapters.stvk import StVK

MODELS = {
    NeoHookean.name: NeoHookean,
    StVK.name: StVK,
    Corotational.name: Corotational,
}


def get_model(name) -> ElasticModel:
    """Instantiate the adapter registered under `name` (a string or MaterialModelKind)."""
    key = getattr(name, "value", name)
    if key not in MODELS:
        raise KeyError(f"Unknown material model '{key}'. Available: {sorted(MODELS)}")
    return MODELS[key]()


__all__ = ["ElasticModel", "NeoHookean", "StVK", "Corotational", "MODELS", "get_model"]

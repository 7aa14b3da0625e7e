"""Surrogate registry: declarative specs resolved into live adapters.

A registry file lists {id, kind, locator, params...} entries. Locator
schemes:

  toy:<name>            in-repo desk-scale suite (tests, acceptance)
  python:<module>:<fn>  import a factory; how heavyweight pretrained
                        wrappers (CLIP towers, face detectors, ...) plug in

Factories receive (surrogate_id=..., **params) and must return an adapter
of the declared kind.
"""

from __future__ import annotations

import importlib

import yaml

from ..errors import RegistryError, SurrogateLoadError
from .base import KINDS, SurrogateEnsemble
from . import toy

TOY_FACTORIES = {
    "tiny-encoder": toy.TinyEncoder,
    "identity-encoder": toy.IdentityEncoder,
    "linear-encoder": toy.LinearEncoder,
    "uniform-captioner": toy.UniformCaptioner,
    "tiny-captioner": toy.TinyCaptioner,
    "tiny-detector": toy.TinyDetector,
}


def load_surrogate(spec: dict):
    """Resolve one registry entry into a frozen, evaluation-mode adapter."""
    try:
        surrogate_id = spec["id"]
        kind = spec["kind"]
        locator = spec["locator"]
    except (KeyError, TypeError) as exc:
        raise RegistryError(f"surrogate spec must carry id/kind/locator: {spec!r}") from exc
    if kind not in KINDS:
        raise RegistryError(f"surrogate {surrogate_id!r}: unknown kind {kind!r}, expected one of {KINDS}")
    params = dict(spec.get("params") or {})

    if locator.startswith("toy:"):
        name = locator[len("toy:"):]
        factory = TOY_FACTORIES.get(name)
        if factory is None:
            raise RegistryError(
                f"unknown toy surrogate {name!r}; known: {', '.join(sorted(TOY_FACTORIES))}"
            )
    elif locator.startswith("python:"):
        ref = locator[len("python:"):]
        module_name, _, attr = ref.rpartition(":")
        if not module_name:
            raise RegistryError(f"surrogate {surrogate_id!r}: locator must be python:<module>:<factory>")
        try:
            factory = getattr(importlib.import_module(module_name), attr)
        except (ImportError, AttributeError) as exc:
            raise SurrogateLoadError(f"cannot resolve locator {locator!r}: {exc}") from exc
    else:
        raise RegistryError(
            f"surrogate {surrogate_id!r}: unsupported locator scheme in {locator!r} "
            "(expected 'toy:' or 'python:')"
        )

    try:
        adapter = factory(surrogate_id, **params)
    except Exception as exc:
        raise SurrogateLoadError(f"loading {locator!r} failed: {exc}") from exc
    if adapter.kind != kind:
        raise RegistryError(
            f"surrogate {surrogate_id!r}: registry declares kind {kind!r} "
            f"but the adapter is a {adapter.kind!r}"
        )
    return adapter


class Registry:
    """Id-indexed collection of surrogate specs."""

    def __init__(self, specs):
        self.specs = {}
        for spec in specs:
            sid = spec.get("id")
            if sid in self.specs:
                raise RegistryError(f"duplicate surrogate id {sid!r} in registry")
            self.specs[sid] = spec

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        entries = doc.get("surrogates")
        if not isinstance(entries, list):
            raise RegistryError(f"{path}: expected a top-level 'surrogates' list")
        return cls(entries)

    def __contains__(self, surrogate_id):
        return surrogate_id in self.specs

    def ids(self):
        return sorted(self.specs)

    def load(self, surrogate_id):
        if surrogate_id not in self.specs:
            raise RegistryError(
                f"unknown surrogate id {surrogate_id!r}; registry knows: {', '.join(self.ids())}"
            )
        return load_surrogate(self.specs[surrogate_id])

    def load_ensemble(self, surrogate_ids) -> SurrogateEnsemble:
        return SurrogateEnsemble([self.load(sid) for sid in surrogate_ids])

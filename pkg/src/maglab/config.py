"""Configuration ingestion: JSON specs for fields, systems, and runs.

Top-level schema (all sections optional unless a command needs them):

    {
      "label": "short name",
      "surface": {"genus": 2},
      "metric":   {"constant": 0.0, "bumps": [BUMP, ...]},
      "one_form": {"pairs": [{"u": SCALAR, "v": SCALAR, "coeff": 1.0}, ...],
                   "exact_part": SCALAR},
      "integrator": {"steps": 10000, "h": null, "max_T": 500.0},
      "solver": {"M": 1024, "grad_tol": 1e-8, "max_iter": 5000,
                 "method": "lbfgs"},
      "words": ["ab", "aB", ...] or {"shortest": 20},
      "seed": 0,
      "experiment": {...}
    }

    BUMP   = {"center": [x, y], "radius": r, "amplitude": a}
    SCALAR = {"constant": c, "bumps": [BUMP, ...]}

Disk points serialize as [re, im]; words are plain strings over the
alphabet a-d with uppercase inverses.
"""

from __future__ import annotations

import json
import os
from functools import lru_cache

from .domain import FundamentalDomain
from .dynamics import IntegratorSettings, MagneticSystem, SolverSettings
from .errors import InputError
from .fields import (DEFAULT_EVAL_RADIUS, ConformalMetric, OneFormField,
                     ScalarField, averaged_bump)
from .surface import FuchsianGroup, shortest_words, standard_group


def load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise InputError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path} is not valid JSON: {exc}") from exc


@lru_cache(maxsize=4)
def _shared_domain(order: int) -> FundamentalDomain:
    return FundamentalDomain(standard_group(), order=order)


def build_scalar(spec: dict | None, group: FuchsianGroup,
                 eval_radius: float = DEFAULT_EVAL_RADIUS) -> ScalarField:
    if not spec:
        return ScalarField.zero(group)
    if not isinstance(spec, dict):
        raise InputError("scalar field spec must be an object")
    field = ScalarField(group, (), float(spec.get("constant", 0.0)), eval_radius)
    for bump in spec.get("bumps", ()):
        try:
            center = bump["center"]
            radius = float(bump["radius"])
            amplitude = float(bump["amplitude"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed bump spec {bump!r}") from exc
        field = field + averaged_bump(center, radius, amplitude, group, eval_radius)
    return field


def build_one_form(spec: dict | None, group: FuchsianGroup,
                   eval_radius: float = DEFAULT_EVAL_RADIUS) -> OneFormField:
    if not spec:
        return OneFormField.zero()
    pairs = []
    for item in spec.get("pairs", ()):
        u = build_scalar(item.get("u"), group, eval_radius)
        v = build_scalar(item.get("v"), group, eval_radius)
        pairs.append((u, v, float(item.get("coeff", 1.0))))
    exacts = []
    if spec.get("exact_part"):
        exacts.append((build_scalar(spec["exact_part"], group, eval_radius), 1.0))
    return OneFormField(pairs, exacts)


def build_system(config: dict, quad_order: int = 24) -> MagneticSystem:
    surface = config.get("surface", {})
    if surface.get("genus", 2) != 2:
        raise InputError("only the genus-2 octagon surface is supported")
    group = standard_group()
    if "enumeration" in config:
        group.enum_cap = int(config["enumeration"].get("cap", group.enum_cap))
    domain = _shared_domain(quad_order)

    integ_cfg = config.get("integrator", {})
    integrator = IntegratorSettings(
        n_steps=int(integ_cfg.get("steps", 10_000)),
        h=integ_cfg.get("h"),
        max_T=float(integ_cfg.get("max_T", 500.0)),
    )
    solver_cfg = config.get("solver", {})
    solver = SolverSettings(
        loop_points=int(solver_cfg.get("M", 1024)),
        grad_tol=float(solver_cfg.get("grad_tol", 1e-8)),
        max_iter=int(solver_cfg.get("max_iter", 5000)),
        method=solver_cfg.get("method", "lbfgs"),
    )

    metric = ConformalMetric(build_scalar(config.get("metric"), group))
    alpha = build_one_form(config.get("one_form"), group)
    return MagneticSystem(
        metric=metric, alpha=alpha, group=group, domain=domain,
        integrator=integrator, solver=solver,
        label=str(config.get("label", "")),
    )


def resolve_words(spec, group: FuchsianGroup) -> list[str]:
    """A word list, or {"shortest": N} resolved by geometric length."""
    if spec is None:
        raise InputError("no words given; pass --words or a words config entry")
    if isinstance(spec, dict):
        n = int(spec.get("shortest", 0))
        if n <= 0:
            raise InputError("words spec object needs a positive 'shortest' count")
        return shortest_words(group, n)
    if isinstance(spec, (list, tuple)):
        return [str(w) for w in spec]
    raise InputError(f"cannot interpret words spec {spec!r}")


def load_words_file(path: str) -> list[str]:
    if not os.path.exists(path):
        raise InputError(f"words file not found: {path}")
    words = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                words.append(line)
    if not words:
        raise InputError(f"words file {path} contains no words")
    return words

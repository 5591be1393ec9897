"""Experiment configuration: one YAML schema shared by every subcommand.

Top-level keys (all optional except where a subcommand needs them)::

    measure:   {kind: ping_pong | disjoint_k | henon | words, ...}
    family:    derive | {affines: [syllable...], elementaries: [syllable...]}
    seeds:     [0, 1, 2] | {start: 0, count: 100}
    budgets:   {N_max, K, L, tol, budget, bit_budget, n_conv, samples, stride}
    input:     {map: automorphism} | {henon: {p, jacobian}} | {word: [syllable...]}
    points:    [[x, y], ...] | {count, radius, seed}
    render:    {base, direction, re_range, im_range, resolution}
    outputs:   {dir}
    threads:   int

Rationals are written as strings ("3/5") or integers; complex exact values as
[re, im]; floating complex points as [re, im] pairs of numbers.  Unknown keys
anywhere are errors.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

import yaml

from .errors import ConfigError
from .families import disjoint_k_measure, dirac_measure, henon_word, ping_pong_measure, rotation, symmetric_measure
from .filtration import HFamily
from .polyalg import GaussianRational, PlaneAutomorphism, PlanePolynomial, automorphism_from_json
from .randwalk import MeasureSpec
from .wordgroup import AffineSyllable, AmalgamWord, ElementarySyllable, compose_word

DEFAULT_BUDGETS = {
    "N_max": 10_000,
    "K": 3,
    "L": 6,
    "tol": 1e-9,
    "budget": 10_000,
    "bit_budget": None,
    "n_conv": 6,
    "samples": 100_000,
    "stride": None,
}

_SCHEMA = {
    "measure": {"kind", "p", "jacobian", "rotation", "shift", "atoms", "symmetric", "symmetrize"},
    "family": None,
    "seeds": None,
    "budgets": set(DEFAULT_BUDGETS),
    "input": {"map", "henon", "word"},
    "points": None,
    "render": {"base", "direction", "re_range", "im_range", "resolution"},
    "outputs": {"dir"},
    "threads": None,
}


def _check_keys(section: str, value: Any, allowed: set[str]):
    if not isinstance(value, dict):
        raise ConfigError(f"'{section}' must be a mapping")
    unknown = set(value) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {sorted(unknown)}")


def parse_rational(value, where: str) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ConfigError(f"{where}: rationals must be integers or strings like '3/5', got {value!r}")
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{where}: cannot parse rational {value!r}") from exc


def parse_gaussian(value, where: str) -> GaussianRational:
    if isinstance(value, list):
        if len(value) != 2:
            raise ConfigError(f"{where}: complex values are [re, im]")
        return GaussianRational(parse_rational(value[0], where), parse_rational(value[1], where))
    return GaussianRational(parse_rational(value, where))


def _parse_point(value, where: str) -> tuple[complex, complex]:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"{where}: a point is [x, y]")
    out = []
    for c in value:
        if isinstance(c, list) and len(c) == 2:
            out.append(complex(float(c[0]), float(c[1])))
        elif isinstance(c, (int, float)) and not isinstance(c, bool):
            out.append(complex(c))
        else:
            raise ConfigError(f"{where}: coordinates are numbers or [re, im]")
    return out[0], out[1]


def _parse_syllable(data, where: str):
    if not isinstance(data, dict) or data.get("type") not in ("affine", "elementary"):
        raise ConfigError(f"{where}: syllables need type 'affine' or 'elementary'")
    try:
        if data["type"] == "affine":
            _check_keys(where, data, {"type", "matrix", "translation"})
            m = [[parse_gaussian(v, where) for v in row] for row in data["matrix"]]
            t = [parse_gaussian(v, where) for v in data.get("translation", [0, 0])]
            return AffineSyllable(((m[0][0], m[0][1]), (m[1][0], m[1][1])), (t[0], t[1]))
        _check_keys(where, data, {"type", "alpha", "beta", "delta", "p"})
        p = data["p"]
        if p and isinstance(p[0], list) and len(p[0]) == 4:
            poly = PlanePolynomial.from_json(p)
        else:
            poly = PlanePolynomial.univariate_y([parse_gaussian(c, where) for c in p])
        return ElementarySyllable(parse_gaussian(data.get("alpha", 1), where), parse_gaussian(data.get("beta", 1), where),
                                  parse_gaussian(data.get("delta", 0), where), poly)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: malformed syllable ({exc})") from exc


def _parse_word(data, where: str) -> AmalgamWord:
    if not isinstance(data, list):
        raise ConfigError(f"{where}: a word is a list of syllables")
    return AmalgamWord(tuple(_parse_syllable(s, f"{where}[{i}]") for i, s in enumerate(data)))


@dataclass
class ExperimentConfig:
    raw: dict
    measure: MeasureSpec | None
    family_spec: Any
    seeds: list[int]
    budgets: dict
    input_map: PlaneAutomorphism | None
    input_word: AmalgamWord | None
    points: Any
    render: dict | None
    out_dir: str
    threads: int

    @property
    def config_hash(self) -> str:
        # parallelism and output location never change artifact contents
        hashed = {k: v for k, v in self.raw.items() if k not in ("threads", "outputs")}
        canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def family(self) -> HFamily:
        if self.measure is None and self.family_spec in (None, "derive"):
            raise ConfigError("'family: derive' needs a measure")
        if self.family_spec in (None, "derive"):
            return HFamily.derive_from_measure(self.measure)
        spec = self.family_spec
        _check_keys("family", spec, {"affines", "elementaries"})
        affines = [_parse_syllable(s, f"family.affines[{i}]") for i, s in enumerate(spec.get("affines", []))]
        elementaries = [_parse_syllable(s, f"family.elementaries[{i}]") for i, s in enumerate(spec.get("elementaries", []))]
        if not affines or not elementaries:
            raise ConfigError("an explicit family needs affines and elementaries")
        return HFamily.from_syllables(affines, elementaries)


def _build_measure(spec: dict) -> MeasureSpec:
    _check_keys("measure", spec, _SCHEMA["measure"])
    kind = spec.get("kind")
    p = [parse_rational(c, "measure.p") if not isinstance(c, list) else parse_gaussian(c, "measure.p")
         for c in spec.get("p", [0, 0, 1])]
    rot = spec.get("rotation")
    a = rotation(*(parse_rational(c, "measure.rotation") for c in rot)) if rot else None
    try:
        if kind == "ping_pong":
            return ping_pong_measure(henon_word(p), a)
        if kind == "disjoint_k":
            shift = tuple(parse_gaussian(c, "measure.shift") for c in spec.get("shift", [40, 0]))
            return disjoint_k_measure(shift, henon_word(p), a)
        if kind == "henon":
            h = henon_word(p, parse_gaussian(spec.get("jacobian", 1), "measure.jacobian"))
            return symmetric_measure([h], ["h"]) if spec.get("symmetrize") else dirac_measure(h)
        if kind == "words":
            atoms = spec.get("atoms") or []
            parsed, labels = [], []
            for i, atom in enumerate(atoms):
                _check_keys(f"measure.atoms[{i}]", atom, {"word", "weight", "label"})
                parsed.append((_parse_word(atom["word"], f"measure.atoms[{i}].word"),
                               parse_rational(atom["weight"], f"measure.atoms[{i}].weight")))
                labels.append(str(atom.get("label", f"f{i}")))
            return MeasureSpec(parsed, symmetric=bool(spec.get("symmetric", False)), labels=labels)
    except ValueError as exc:
        raise ConfigError(f"measure: {exc}") from exc
    raise ConfigError(f"measure.kind must be ping_pong, disjoint_k, henon or words, got {kind!r}")


def _parse_seeds(value) -> list[int]:
    if value is None:
        return [0]
    if isinstance(value, list):
        seeds = value
    elif isinstance(value, dict):
        _check_keys("seeds", value, {"start", "count"})
        seeds = list(range(int(value.get("start", 0)), int(value.get("start", 0)) + int(value.get("count", 1))))
    else:
        raise ConfigError("seeds must be a list or {start, count}")
    if not seeds or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        raise ConfigError("seeds must be a nonempty list of non-negative integers")
    return list(seeds)


def _parse_input(spec) -> tuple[PlaneAutomorphism | None, AmalgamWord | None]:
    if spec is None:
        return None, None
    _check_keys("input", spec, _SCHEMA["input"])
    if len(spec) != 1:
        raise ConfigError("input takes exactly one of map, henon, word")
    try:
        if "map" in spec:
            return automorphism_from_json(spec["map"]), None
        if "henon" in spec:
            h = spec["henon"]
            _check_keys("input.henon", h, {"p", "jacobian"})
            w = henon_word([parse_gaussian(c, "input.henon.p") for c in h.get("p", [0, 0, 1])],
                           parse_gaussian(h.get("jacobian", 1), "input.henon.jacobian"))
            return compose_word(w), w
        word = _parse_word(spec["word"], "input.word")
        return compose_word(word), word
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"input: {exc}") from exc


def build_config(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(raw or {})
    _check_keys("config", raw, set(_SCHEMA))
    budgets = dict(DEFAULT_BUDGETS)
    if "budgets" in raw:
        _check_keys("budgets", raw["budgets"], _SCHEMA["budgets"])
        budgets.update(raw["budgets"])
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "seed":
            raw["seeds"] = [value]
        elif key == "threads":
            raw["threads"] = value
        elif key == "out":
            raw.setdefault("outputs", {})["dir"] = value
        else:
            budgets[key] = value
            raw.setdefault("budgets", {})[key] = value
    for key in ("N_max", "K", "L", "budget", "n_conv", "samples"):
        if not isinstance(budgets[key], int) or budgets[key] < 1:
            raise ConfigError(f"budgets.{key} must be a positive integer")
    try:
        budgets["tol"] = float(budgets["tol"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("budgets.tol must be a number") from exc
    if not budgets["tol"] > 0:
        raise ConfigError("budgets.tol must be positive")
    measure = _build_measure(raw["measure"]) if "measure" in raw else None
    input_map, input_word = _parse_input(raw.get("input"))
    points = raw.get("points")
    if isinstance(points, list):
        points = [_parse_point(p, f"points[{i}]") for i, p in enumerate(points)]
    elif isinstance(points, dict):
        _check_keys("points", points, {"count", "radius", "seed"})
    elif points is not None:
        raise ConfigError("points must be a list or {count, radius, seed}")
    render = raw.get("render")
    if render is not None:
        _check_keys("render", render, _SCHEMA["render"])
    outputs = raw.get("outputs", {})
    _check_keys("outputs", outputs, _SCHEMA["outputs"])
    threads = raw.get("threads", os.cpu_count() or 1)
    if not isinstance(threads, int) or threads < 1:
        raise ConfigError("threads must be a positive integer")
    return ExperimentConfig(raw, measure, raw.get("family"), _parse_seeds(raw.get("seeds")), budgets,
                            input_map, input_word, points, render, str(outputs.get("dir", "out")), threads)


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return build_config(raw, overrides)

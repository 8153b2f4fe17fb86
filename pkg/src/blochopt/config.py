"""YAML/JSON configuration blocks -> library objects."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from . import bandlimited as bl
from .cell_spectral import PeriodicCoefficient, PlaneWaveTruncation
from .effective import CompactBox


class ConfigError(ValueError):
    pass


def load(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    data.setdefault("_base", str(Path(path).resolve().parent))
    return data


def _block(value, n):
    arr = np.asarray(value, dtype=float)
    return float(arr) if arr.ndim == 0 else arr.reshape(n, n)


def coefficient(block):
    """Coefficient block: ``type = fourier | laminate | constant``."""
    if block is None:
        raise ConfigError("missing 'coefficient' block")
    kind = block.get("type")
    n = int(block.get("dimension", 1))
    floor = block.get("ellipticity")
    if kind == "constant":
        return PeriodicCoefficient.constant(_block(block.get("value", 1.0), n), n)
    if kind == "fourier":
        terms = {}
        for entry in block.get("terms", []):
            k, re = entry[0], entry[1]
            im = entry[2] if len(entry) > 2 else 0.0
            val = np.asarray(_block(re, n)) + 1j * np.asarray(_block(im, n))
            terms[tuple(np.atleast_1d(k).astype(int).tolist())] = val
        if not terms:
            raise ConfigError("fourier coefficient needs at least one term")
        return PeriodicCoefficient.from_fourier(terms, n, ellipticity=floor)
    if kind == "laminate":
        pieces = sorted(block.get("pieces", []))
        if not pieces:
            raise ConfigError("laminate coefficient needs (breakpoint, value) pieces")
        b, a = zip(*pieces)
        return PeriodicCoefficient.laminate(b, a, ellipticity=floor)
    raise ConfigError(f"unknown coefficient type {kind!r}")


def truncation(block):
    N = (block or {}).get("N_pw")
    return None if N is None else PlaneWaveTruncation(int(N))


def grid(block, eps_list=()):
    if block is None:
        raise ConfigError("missing 'grid' block")
    K = CompactBox(tuple(np.atleast_1d(block["K"]).tolist()))
    return bl.make_grid(K, float(block["d_eta"]), eps_list)


def profile(block, g, rng):
    if block is None or block.get("type", "zero") == "zero":
        return bl.SpectralFunction.zeros(g)
    kind = block["type"]
    amp = float(block.get("amp", 1.0))
    if kind == "gauss":
        return bl.gauss(g, block.get("center", 0.0), float(block.get("width", 1.0)), amp)
    if kind == "mode":
        return bl.mode(g, block.get("eta0", 0.0), amp)
    if kind == "table":
        return bl.table(g, block.get("rows", []))
    if kind == "random":
        return bl.random_hermitian(g, rng, float(block.get("scale", 1.0)))
    raise ConfigError(f"unknown data profile {kind!r}")


def eps_list(data):
    vals = [float(e) for e in data.get("eps", [])]
    if any(v <= 0 for v in vals):
        raise ConfigError("eps values must be positive")
    return sorted(vals, reverse=True)

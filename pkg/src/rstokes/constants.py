"""Frozen constants for the inequality checks.

The file ``data/constants.txt`` holds ``name = value`` lines (``#`` starts a
comment).  It is produced once by ``scripts/calibrate_constants.py`` and then
committed; the checks never refit.
"""
from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, Optional

from .errors import DomainError

FILENAME = "constants.txt"


class Constants(dict):
    """Name -> value; a missing name raises DomainError instead of KeyError."""

    def __missing__(self, key):
        raise DomainError(f"constant {key!r} not in the constants file; "
                          "run scripts/calibrate_constants.py")


def parse(text: str) -> Dict[str, float]:
    out = Constants()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        if not sep:
            raise DomainError(f"constants line {lineno}: expected 'name = value'")
        name = name.strip()
        if name in out:
            raise DomainError(f"constants line {lineno}: duplicate key {name!r}")
        try:
            out[name] = float(value)
        except ValueError as exc:
            raise DomainError(f"constants line {lineno}: bad value {value.strip()!r}") from exc
    return out


def format_constants(values: Dict[str, float], header: str = "") -> str:
    lines = [f"# {ln}" if ln else "#" for ln in header.splitlines()]
    lines += [f"{k} = {values[k]:.17g}" for k in sorted(values)]
    return "\n".join(lines) + "\n"


@lru_cache(maxsize=None)
def _load_default() -> Dict[str, float]:
    text = resources.files("rstokes").joinpath("data", FILENAME).read_text()
    return parse(text)


def load(path: Optional[Path] = None) -> Dict[str, float]:
    """Frozen constants as a fresh dict."""
    if path is None:
        return Constants(_load_default())
    return parse(Path(path).read_text())


def source_key(prefix: str, eps: float, consts: Dict[str, float]) -> str:
    """Key calibrated for the largest smoothness index not above ``eps``.

    Valid whenever lambda_1 >= 1, since ||.||_eps is then nondecreasing in eps.
    """
    avail = []
    for k in consts:
        if k.startswith(prefix + "@"):
            avail.append((float(k.split("@", 1)[1]), k))
    usable = [(e, k) for e, k in avail if e <= eps + 1e-12]
    if not usable:
        raise DomainError(f"no calibrated {prefix} constant for smoothness index {eps}")
    return max(usable)[1]

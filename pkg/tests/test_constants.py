import math

import pytest

from rstokes import constants
from rstokes.errors import DomainError

REQUIRED = [
    "lemma31_C", "lemma34_C", "lemma35_C", "lemma36_C_2", "lemma36_C_4", "lemma36_C_8",
    "coercive_forward_C", "coercive_nonlocal_w_C", "coercive_constant_source_C",
]


def test_parse_and_format_roundtrip():
    vals = {"b": 1 / 3, "a": 2.5e-300, "c@0.5": 7.0}
    text = constants.format_constants(vals, "header line\n\nsecond")
    assert text.splitlines()[0] == "# header line"
    assert constants.parse(text) == vals


@pytest.mark.parametrize("text", ["a = 1\na = 2\n", "novalue\n", "a = x\n"])
def test_parse_rejects(text):
    with pytest.raises(DomainError):
        constants.parse(text)


def test_shipped_file_complete():
    c = constants.load()
    for k in REQUIRED:
        assert k in c and math.isfinite(c[k]) and c[k] > 0
    assert any(k.startswith("coercive_source_C_eps@") for k in c)
    assert any(k.startswith("coercive_nonlocal_C_eps@") for k in c)


def test_load_returns_copy():
    c = constants.load()
    c["lemma31_C"] = -1.0
    assert constants.load()["lemma31_C"] > 0


def test_source_key():
    c = {"x@0.1": 1.0, "x@0.5": 2.0, "y@0.5": 3.0}
    assert constants.source_key("x", 0.5, c) == "x@0.5"
    assert constants.source_key("x", 0.4, c) == "x@0.1"
    assert constants.source_key("x", 9.0, c) == "x@0.5"
    with pytest.raises(DomainError):
        constants.source_key("x", 0.05, c)


def test_missing_key_is_domain_error():
    with pytest.raises(DomainError, match="calibrate"):
        constants.parse("a = 1\n")["lemma31_C"]

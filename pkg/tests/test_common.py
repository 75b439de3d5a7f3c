"""Tests for common utilities."""

import pytest

from pmpcheck.common import format_duration, format_hex, parse_int, parse_int_list


@pytest.mark.parametrize(
    "text,value",
    [("42", 42), ("0x1F", 31), ("0b101", 5), ("0o17", 15), (" 0x10 ", 16), ("1_000", 1000)],
)
def test_parse_int(text, value):
    """Test integer parsing in decimal, hex and binary."""
    assert parse_int(text) == value


@pytest.mark.parametrize("text", ["", "0x", "ten", "08", "1.5"])
def test_parse_int_malformed(text):
    """Test malformed integers."""
    with pytest.raises(ValueError, match="Malformed integer"):
        parse_int(text)


def test_parse_int_list():
    """Test comma-separated integer lists."""
    assert parse_int_list("0x1F, 0x98,0") == [0x1F, 0x98, 0]
    assert parse_int_list("") == []


def test_format_hex():
    """Test hex formatting."""
    assert format_hex(None) == "-"
    assert format_hex(255) == "0xff"
    assert format_hex(0x3F, bits=12) == "0x03f"
    assert format_hex(1, bits=2) == "0x1"


def test_format_duration():
    """Test duration formatting."""
    assert format_duration(30) == "30.0s"
    assert format_duration(90) == "1m 30s"
    assert format_duration(3665) == "1h 1m 5s"

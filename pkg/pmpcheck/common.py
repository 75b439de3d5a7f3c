"""
Common helpers shared by the CLI and scenario scripts.
"""


def parse_int(text: str) -> int:
    """Parse a decimal, 0x hex, 0b binary or 0o octal integer; underscores allowed."""
    try:
        return int(text.strip(), 0)
    except (ValueError, AttributeError):
        raise ValueError(f"Malformed integer: {text!r}") from None


def parse_int_list(text: str) -> list[int]:
    """Parse a comma-separated list of integers."""
    return [parse_int(part) for part in text.split(",") if part.strip()]


def format_hex(value: int | None, bits: int | None = None) -> str:
    """Hex with optional zero padding to the given bit width; None renders as '-'."""
    if value is None:
        return "-"
    if bits is None:
        return f"{value:#x}"
    digits = max(1, (bits + 3) // 4)
    return f"0x{value:0{digits}x}"


def format_duration(seconds: float) -> str:
    """Format duration in human-readable format."""
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes = int(seconds // 60)
    remaining_seconds = seconds % 60
    if minutes < 60:
        return f"{minutes}m {remaining_seconds:.0f}s"
    hours = minutes // 60
    remaining_minutes = minutes % 60
    return f"{hours}h {remaining_minutes}m {remaining_seconds:.0f}s"

"""
Validation of campaign configurations and scenario memory layouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .pmp import MAX_ENTRIES, MAX_PADDR_BITS, MIN_PADDR_BITS

if TYPE_CHECKING:
    from .campaign import CampaignConfig
    from .keystone import MemoryLayout

EXHAUSTIVE_MAX_PADDR_BITS = 8
EXHAUSTIVE_MAX_ENTRIES = 2
LARGE_SPACE_WARNING = 10**8


@dataclass
class ValidationResult:
    """Result of a validation check."""

    valid: bool
    message: str
    warnings: list[str] = field(default_factory=list)


def validate_campaign(cfg: "CampaignConfig") -> ValidationResult:
    """
    Validate a campaign configuration.

    Exhaustive and sampled modes enumerate the full cross-product, so they are
    limited to paddr_bits <= 8 and n_entries <= 2.

    Args:
        cfg: Campaign configuration

    Returns:
        ValidationResult
    """
    warnings = []

    if not MIN_PADDR_BITS <= cfg.paddr_bits <= MAX_PADDR_BITS:
        return ValidationResult(
            valid=False,
            message=f"paddr_bits must be in {MIN_PADDR_BITS}..{MAX_PADDR_BITS}, "
            f"got {cfg.paddr_bits}",
        )
    if not 0 <= cfg.n_entries <= MAX_ENTRIES:
        return ValidationResult(
            valid=False,
            message=f"n_entries must be in 0..{MAX_ENTRIES}, got {cfg.n_entries}",
        )
    if cfg.workers < 1 or cfg.shard_size < 1:
        return ValidationResult(
            valid=False, message="workers and shard_size must be positive"
        )
    if not 0.0 <= cfg.boundary_bias <= 1.0:
        return ValidationResult(
            valid=False,
            message=f"boundary_bias must be in [0, 1], got {cfg.boundary_bias}",
        )

    if cfg.mode.value in ("exhaustive", "sampled"):
        if (
            cfg.paddr_bits > EXHAUSTIVE_MAX_PADDR_BITS
            or cfg.n_entries > EXHAUSTIVE_MAX_ENTRIES
        ):
            return ValidationResult(
                valid=False,
                message=(
                    f"{cfg.mode.value} campaigns need paddr_bits <= "
                    f"{EXHAUSTIVE_MAX_PADDR_BITS} and n_entries <= "
                    f"{EXHAUSTIVE_MAX_ENTRIES} (got {cfg.paddr_bits} bits, "
                    f"{cfg.n_entries} entries); use --random for larger spaces"
                ),
            )
        if cfg.effective_mode.value == "exhaustive" and cfg.space_size > LARGE_SPACE_WARNING:
            warnings.append(
                f"Exhaustive space has {cfg.space_size:,} cases; "
                "consider --cap to sample it"
            )
    if cfg.total_cases < 1:
        return ValidationResult(valid=False, message="Campaign has no cases to run")

    return ValidationResult(
        valid=True,
        message=f"{cfg.effective_mode.value} campaign: {cfg.total_cases:,} cases",
        warnings=warnings,
    )


def validate_layout(layout: "MemoryLayout", paddr_bits: int) -> ValidationResult:
    """
    Validate a scenario memory layout.

    Every region must be NAPOT-encodable (power-of-two size >= 8, naturally
    aligned), lie inside memory, and be disjoint from every other region.

    Args:
        layout: Memory layout
        paddr_bits: Physical address width

    Returns:
        ValidationResult
    """
    total = layout.total_memory
    if total < 8 or total & (total - 1) or total > 1 << paddr_bits:
        return ValidationResult(
            valid=False,
            message=f"total_memory {total:#x} must be a power of two between 8 "
            f"and 2^{paddr_bits}",
        )

    regions = [("SM", layout.sm_region)] + [
        (f"enclave {eid}", region) for eid, region in sorted(layout.enclave_regions.items())
    ]
    for name, region in regions:
        if region.size < 8 or region.size & (region.size - 1):
            return ValidationResult(
                valid=False,
                message=f"{name} region size {region.size:#x} is not a power of two >= 8",
            )
        if region.base % region.size:
            return ValidationResult(
                valid=False,
                message=f"{name} region base {region.base:#x} not aligned to its size",
            )
        if region.end > total:
            return ValidationResult(
                valid=False, message=f"{name} region {region} lies outside memory"
            )

    for n, (name_a, a) in enumerate(regions):
        for name_b, b in regions[n + 1 :]:
            if a.overlaps(b):
                return ValidationResult(
                    valid=False, message=f"{name_a} region {a} overlaps {name_b} region {b}"
                )

    return ValidationResult(valid=True, message=f"Layout valid: {len(regions)} regions")

"""
Configuration for pmpcheck: environment defaults and CLI settings.
"""

import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

from .pmp import DEFAULT_ENTRIES, DEFAULT_PADDR_BITS

# Load environment variables
PROJECT_ROOT = Path(__file__).parent.parent.resolve()
load_dotenv(PROJECT_ROOT / ".env")

# Environment configuration
PADDR_BITS = int(os.getenv("PMPCHECK_PADDR_BITS", str(DEFAULT_PADDR_BITS)))
ENTRIES = int(os.getenv("PMPCHECK_ENTRIES", str(DEFAULT_ENTRIES)))
SEED = int(os.getenv("PMPCHECK_SEED", "0"))
WORKERS = int(os.getenv("PMPCHECK_WORKERS", "1"))
OUTPUT_PATH = os.getenv("PMPCHECK_OUTPUT_PATH", "./output")
SOLVER = os.getenv("PMPCHECK_SOLVER") or None
SOLVER_TIMEOUT = int(os.getenv("PMPCHECK_SOLVER_TIMEOUT", "300"))
LOG_LEVEL = os.getenv("PMPCHECK_LOG_LEVEL", "WARNING").upper()

# Resolve paths
if not Path(OUTPUT_PATH).is_absolute():
    OUTPUT_ROOT = PROJECT_ROOT / OUTPUT_PATH
else:
    OUTPUT_ROOT = Path(OUTPUT_PATH)

OUTPUT_FORMATS = ("human", "json")


@dataclass
class CliConfig:
    """Settings shared by every subcommand; flags override the environment."""

    paddr_bits: int = DEFAULT_PADDR_BITS
    n_entries: int = DEFAULT_ENTRIES
    output_format: str = "human"
    seed: int = 0
    solver: str | None = None
    solver_timeout: int = 300
    workers: int = 1
    output_root: Path = OUTPUT_ROOT

    @classmethod
    def from_env(cls) -> "CliConfig":
        return cls(
            paddr_bits=PADDR_BITS,
            n_entries=ENTRIES,
            seed=SEED,
            solver=SOLVER,
            solver_timeout=SOLVER_TIMEOUT,
            workers=WORKERS,
            output_root=OUTPUT_ROOT,
        )

    @property
    def json_output(self) -> bool:
        return self.output_format == "json"

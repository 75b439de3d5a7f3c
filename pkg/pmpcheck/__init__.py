"""RISC-V PMP checker model with property campaigns, SMT emission and enclave scenarios."""

__version__ = "0.1.0"

"""Life-cycle flutter reliability of long-span bridges from monitoring data."""

__version__ = "0.1.0"

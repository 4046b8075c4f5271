"""Small-signal PLL-synchronization stability of multi-converter networks."""

__version__ = "0.1.0"

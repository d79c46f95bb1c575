"""Rate regions, scheduling and outage analysis for two-way relaying with network coding."""

__version__ = "0.1.0"

"""Windowed representative-token merging with period-based similarity caching."""

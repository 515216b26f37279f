"""Shared helpers: logging, errors, seeded streams and caching."""

"""
Core package: configuration, logging, error types and seeding helpers.
"""

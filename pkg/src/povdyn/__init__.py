"""Coupled income-distribution and consumption-deprivation dynamics."""

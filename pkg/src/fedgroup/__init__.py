"""Federated learning with data-based device grouping (FLDG / FLDG-L)."""

"""Tabular mean-field-game solvers: online QM iteration and fixed-point iteration."""

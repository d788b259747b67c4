"""
Finite element models for the biharmonic plate.
"""

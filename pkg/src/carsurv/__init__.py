"""Exact-enumeration workbench for causal survival curves under coarsening at random."""

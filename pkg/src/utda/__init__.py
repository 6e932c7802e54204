"""Tunable domain adaptation for unrolled inverse-problem networks."""

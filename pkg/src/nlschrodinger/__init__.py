"""Schrodinger-type perturbations of symmetric stable and relativistic stable processes.

Discrete Dirichlet forms on a truncation grid (:mod:`.forms`), path simulation of
the perturbed process (:mod:`.montecarlo`) and cross-checks between the two
(:mod:`.verify`), driven by a config-file CLI (:mod:`.cli`).
"""

__version__ = "0.1.0"

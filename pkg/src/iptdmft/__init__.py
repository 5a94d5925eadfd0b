"""Measure-based IPT-DMFT for finite Hubbard models.

Single-site paramagnetic translation-invariant DMFT with the iterated
perturbation theory impurity solver, formulated as a fixed-point iteration
on discrete probability measures, together with a brute-force
second-quantization oracle for validating the structural identities of
Green's functions, self-energies, and hybridizations at desk scale.
"""

from .measures import (
    CompressResult,
    DiscreteMeasure,
    MeasureError,
    PickRepresentation,
    asymptotic_moments,
    cauchy_transform,
    compress,
    convolve,
    fermi_reweight,
    mixture,
    moment,
    read_measure_file,
    wasserstein2,
    write_measure_file,
)

__all__ = [
    "CompressResult",
    "DiscreteMeasure",
    "MeasureError",
    "PickRepresentation",
    "asymptotic_moments",
    "cauchy_transform",
    "compress",
    "convolve",
    "fermi_reweight",
    "mixture",
    "moment",
    "read_measure_file",
    "wasserstein2",
    "write_measure_file",
]

__version__ = "0.1.0"

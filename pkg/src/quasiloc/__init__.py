"""quasiloc: a numerical laboratory for quasi-periodically driven random
lattice Schrodinger and wave operators.

The package builds finite-volume quasi-energy matrices, verifies their
algebraically exact identities to machine precision, and Monte-Carlo
estimates the measure and probability bounds that control localization:
Wegner estimates in the phase and in the disorder, Melnikov frequency
exclusions, disjoint-resonance censuses, eigenvalue separation, and
dynamical localization contrasts.
"""

__version__ = "0.1.0"

from .errors import (BoundaryLeakError, ConfigError, DenseCapError,
                     NearSingularError, StepTooLargeError, WindowMismatchError)
from .lattice import (BoundarySet, Region, SitePoint, boundaries, disjoint,
                      exhaustion, make_box, make_elementary_region, project)
from .operators import (DisorderSample, FrequencyVector, GDistribution,
                        HamiltonianMatrix, OperatorSpec, assemble,
                        sample_disorder, spectrum_support_check,
                        theta_derivative_check)
from .greens import (AuxiliaryMatrix, GreenReport, auxiliary_matrix, classify,
                     green, poisson_residual, resolvent_expansion_residual,
                     resolvent_identity_residual, sandwich_check)
from .frequency import (CensusResult, DiophantineParams, ExclusionReport,
                        census_bad_boxes, diophantine_check,
                        melnikov_pair_constraints, melnikov_triple_constraints,
                        standard_frequency)
from .msa import (ScaleCensus, ScaleSchedule, double_resonance_probe,
                  initial_scale, msa_run, regularity_probability, schedule)
from .measure import (MeasureEstimate, SeparationSummary, badset_measure_theta,
                      badset_probability_x, counting_shift_check,
                      eigenvalue_separation, wegner_theta, wegner_x)
from .dynamics import (Trajectory, WavePacket, delta_packet, drive_value,
                       evolve_schrodinger, evolve_wave, localization_contrast,
                       quasienergy_consistency)
from .spectral import (EigenPair, decay_profile, eigensolve,
                       localization_census, schnol_bound_check)

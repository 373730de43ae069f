"""Predictive-state coordinates for multivariate heterogeneous time series.

The pipeline: build a library of (past, future) window pairs, compare them
with configurable sequence kernels, estimate each past's predictive state
as a regularized coefficient vector over observed futures, collect state
inner products in a proximity matrix, and embed it with density-normalized
diffusion coordinates. Missing measurements can be reconstructed by a
linear model acting in coordinate space.
"""

from .diffmap import (DiffusionConfig, DiffusionEmbedding, DiffusionOperator,
                      diffusion_distance, diffusion_operator, select_components,
                      spectral_decompose)
from .embed import (CoefficientSolver, EmbeddingConfig, coefficients,
                    coefficients_for, state_gram)
from .errors import (CausalStatesError, ConditioningError, DegenerateFrameError,
                     EmptyLibraryError, NumericalError, ValidationError)
from .gapfill import (GapDescriptor, GapfillConfig, GapfillResult, ObservationMaps,
                      TransitionOperator, blend_forward_backward,
                      constrain_to_observations, fit_observation_maps,
                      fit_transition, interpolate_gap, two_pass_refill)
from .kernels import (DecayProfile, GramPair, KernelSpec, SourceKernelSpec,
                      backend_name, cross_kernel_vector, gram_pair,
                      kernel_algebra_check, resolve_spec, sequence_kernel,
                      sitewise_eval)
from .series import (Block, LibraryConfig, MultiSeries, SequenceLibrary,
                     SeriesSchema, SourceMeta, SourceSchema, build_library,
                     load_csv)
from .systems import (PendulumConfig, PendulumTrajectory, ThreeWellConfig,
                      ThreeWellTrajectory, cycle_phase, local_frame_transform,
                      simulate_pendulum, simulate_three_well)

__version__ = "0.1.0"

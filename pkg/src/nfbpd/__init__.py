"""Near-field wideband XL-MIMO channel estimation toolkit.

Library layout:

- ``channel``      spherical-wave multipath channel model
- ``polar``        joint angle-distance sampling grid and dictionaries
- ``measurement``  pilot combiners, noise, pre-whitening
- ``pattern``      coherence kernel and per-subcarrier support drift tables
- ``estimators``   bilinear pattern detection and the greedy/LS baselines
- ``harness``      Monte Carlo sweeps, aggregation, CSV/JSON reports
- ``plotting``     figures rendered alongside the delimited reports
"""

from .channel import (PathComponent, SystemConfig, WidebandChannel,
                      approx_array_response, array_response, element_distance,
                      far_field_response, generate_channel, sample_paths)
from .errors import ConfigError, NumericalError
from .estimators import (EstimateReport, SupportSet, estimate_angle_omp,
                         estimate_angle_somp, estimate_bpd, estimate_bspd,
                         estimate_ls, estimate_polar_omp, estimate_polar_somp,
                         nmse, nmse_linear)
from .harness import (ExperimentConfig, ResultRow, TrialResult, emit_results,
                      make_workspace, run_sweep, run_trial)
from .measurement import (MeasurementEnsemble, ObservationSet, observe,
                          prewhiten, sample_combiners, sigma_for_snr)
from .pattern import (PatternTables, build_pattern_tables, chirp_coherence,
                      coherence_heatmap, identity_tables, steering_coherence)
from .polar import (PolarDictionary, PolarGrid, build_angle_dictionary,
                    build_dictionary, build_grid, load_dictionary_matrix,
                    locate_on_grid, save_dictionary)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

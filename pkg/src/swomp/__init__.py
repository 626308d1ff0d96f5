"""Compressive wideband channel estimation for hybrid mmWave MIMO-OFDM."""
from .bounds import CrlbReport, crlb, crlb_report, fim, gamma_channel, khatri_rao, ncrlb, path_crlb_report
from .channel import (ChannelConfig, ChannelRealization, DictionaryPair, PathParams, build_dictionary,
                      draw_channel, freq_response, grid_angles, pulse_energy, raised_cosine,
                      sparse_vectors, true_sparse_vector, true_support, ula_steering)
from .config import SimConfig, load_config, parse_config_text
from .estimators import SWOMP, PerSubcarrierOMP, SSSWOMPTh
from .exceptions import (DegenerateSupportError, IllConditionedCombinerError, InvalidConfigurationError,
                         InvalidDimensionError, SingularSupportError, SwompError, UndefinedMetricError,
                         UnsupportedModeError)
from .harness import CSV_HEADER, SweepResult, run_sweep, run_trial
from .metrics import nmse, spectral_efficiency
from .recovery import (OpCounter, RecoveryConfig, SparseEstimate, estimate_sigma2, omp_per_subcarrier,
                       reconstruct_channel, ss_swomp_th, swomp, threshold_support, wls_gains)
from .training import (MeasurementOperator, ReceivedEnsemble, TrainingEnsemble, build_operator,
                       draw_training, synthesize_received, whiten)

__version__ = "0.1.0"

"""Link-level Monte Carlo simulator for generalized receiver spatial
modulation with MQAM over a massive MIMO downlink under oscillator phase
noise: phase-noise-aware symbol pools and bit mapping, energy-based spatial
detection, and symbol-assisted phase compensation."""

__version__ = "0.1.0"

from .channel import (ChannelConfig, ChannelModel, ChannelRealization,
                      estimate_alpha, realize_link, sample_channel,
                      select_antennas, zf_precoder)
from .constellation import (Constellation, Pool, Sensitivity, build_mqam,
                            build_pools, classify_symbols, overlap_probability,
                            overlap_probability_numeric, pn_sensitivity)
from .mapping import (MappingTable, SpatialPattern, build_mapping_table,
                      classical_demap, classical_map, hamming_weight,
                      pn_aware_demap, pn_aware_map, spatial_bit_error_count)
from .phase_noise import (PnConfig, PnMode, PnRealization, build_covariance,
                          combined_pn_term, combined_pn_variance, sample_pn)
from .sim import (BerRecord, MappingMode, SimConfig, run_sweep, run_trial,
                  write_report)
from .transceiver import (Compensation, DetectorConfig, ReceivedVector,
                          combine, detect_spatial, double_stage_compensate,
                          energy_threshold, ml_detect,
                          single_stage_compensate, transmit, wrap_phase)

__all__ = [name for name in dir() if not name.startswith("_")]

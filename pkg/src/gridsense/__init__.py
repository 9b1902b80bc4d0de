"""Grid sensing with power-line modems: simulation, detection, localization.

Core pieces:

* :mod:`gridsense.tlcore`, :mod:`gridsense.network`, :mod:`gridsense.oracle`
  -- frequency-domain line math, tree reduction, and an independent lumped
  benchmark solver.
* :mod:`gridsense.topology`, :mod:`gridsense.netgen`
  -- the grid model, anomaly injection, and random generation.
* :mod:`gridsense.sensing`, :mod:`gridsense.detection`, :mod:`gridsense.locate`
  -- noisy estimates, delta-trace detection/classification, localization.
* :mod:`gridsense.experiment` -- the Monte-Carlo harness.
* :mod:`gridsense.service`, :mod:`gridsense.cli` -- FastAPI service and a
  thin command-line client.
"""

__version__ = "0.1.0"

from .tlcore import (CableSpec, FrequencyGrid, LineParams, NumericError,
                     Spectrum, admittance_from_reflection, propagation_params,
                     reflection_coefficient)
from .topology import (Anomaly, Branch, DistributedFault, InlineShunt,
                       LoadChange, LocalizedFault, Node, Port, Topology,
                       TopologyError, inject_anomaly, node_distances)
from .network import branch_abcd, input_admittance, transfer_function
from .oracle import (nodal_input_admittance, nodal_oracle,
                     nodal_transfer_function)
from .netgen import ConfigError, LoadDistribution, TopologyConfig, \
    generate_topology
from .sensing import (DirectQnr, EstimatedSpectrum, MainsSensing,
                      PhysicalNoise, SymbolSensing, qnr_of,
                      simulate_measurement)
from .detection import (ClassifierConfig, DeltaTrace, DetectionReport,
                        DetectorConfig, Peak, ReferenceState, TimeTrace,
                        classify, delta, detect_step, find_peaks,
                        root_music_delays, to_time_domain)
from .locate import (LocalizationError, LocalizationReport, localize_multi,
                     localize_single)
from .experiment import (ExperimentConfig, TrialRecord, p_failure_overlap,
                         run_experiment, run_monte_carlo, summarize,
                         wilson_interval)

from graphabi.simulators.toy import (
    TOY_PRIOR, toy_prior_sample, toy_simulate, make_toy_simulator,
)
from graphabi.simulators.mice import (
    MICE_PRIOR, MiceConfig, mice_simulate, make_mice_simulator,
)
from graphabi.simulators.rail import (
    RAIL_BOUNDS, RailScenario, sample_scenario, simulate_run, encode_scenario,
    rail_simulate,
)
from graphabi.simulators.conjugate import (
    CONJUGATE_PRIOR, conjugate_simulate, analytic_posterior,
)
from graphabi.simulators.dataset import (
    DatasetRecord, DatasetFormatError, write_dataset, read_dataset,
)

__all__ = [
    "TOY_PRIOR", "toy_prior_sample", "toy_simulate", "make_toy_simulator",
    "MICE_PRIOR", "MiceConfig", "mice_simulate", "make_mice_simulator",
    "RAIL_BOUNDS", "RailScenario", "sample_scenario", "simulate_run",
    "encode_scenario", "rail_simulate",
    "CONJUGATE_PRIOR", "conjugate_simulate", "analytic_posterior",
    "DatasetRecord", "DatasetFormatError", "write_dataset", "read_dataset",
]

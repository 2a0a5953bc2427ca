"""Joint clock synchronization and ranging with the sawtooth RTT model."""
from .model import (GenericParams, Knowns, NoiseParams, PhysicalEstimate,
                    PhysicalParams, Trace, generic_to_physical, mean_vector,
                    mod1, physical_to_generic, prediction_mse, rtt_deterministic,
                    sample_trace, tdc_slave_deterministic)

__version__ = "0.1.0"

__all__ = [
    "GenericParams", "Knowns", "NoiseParams", "PhysicalEstimate", "PhysicalParams",
    "Trace", "generic_to_physical", "mean_vector", "mod1", "physical_to_generic",
    "prediction_mse", "rtt_deterministic", "sample_trace", "tdc_slave_deterministic",
]

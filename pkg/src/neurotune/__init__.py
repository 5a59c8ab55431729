"""Parameter-efficient fine-tuning and benchmarking for EEG classification models."""

__version__ = "0.1.0"

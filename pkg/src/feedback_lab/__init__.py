"""Instantaneous SED feedback coding of streaming bits over discrete memoryless channels."""
from .arrivals import ArrivalModel, ArrivalTrace, bernoulli, block_at_start, buffered, periodic, sample_trace
from .channel import DMC, ChannelInfo, channel_info, check_theorem1_assumptions, make_bsc, sample_output
from .harness import ExperimentConfig, TrialRecord, run_census, run_experiment, run_trial, sweep
from .sed_exact import ExactSED
from .sed_typeset import TypeSetSED

__version__ = "0.1.0"

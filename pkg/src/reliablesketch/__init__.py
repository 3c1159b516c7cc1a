"""Error-sensing frequency sketch with certified per-key intervals."""

from .analytics import EvalReport, evaluate, heavy_changes, topk_no_false, topk_no_miss
from .baselines import ConservativeUpdate, CounterMatrix, CountMin
from .bucket import Bucket, CounterOverflowError
from .datasets import Trace, TraceRecord, exact_oracle, gen_zipf, load_trace, read_trace, save_trace
from .mice_filter import MiceFilter
from .params import derive_lambda, derive_W, derive_W_proof, layer_threshold, layer_width
from .sketch import (
    ConfigMismatchError,
    DisjointIntervalsError,
    EstimateInterval,
    ReliableSketch,
    SketchConfig,
    SnapshotError,
    merge_intervals,
)
from .stash import SpaceSavingStash

__version__ = "0.1.0"

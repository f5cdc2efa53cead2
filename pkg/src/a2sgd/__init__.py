"""Two-level gradient averaging and baseline gradient codecs in a
deterministic simulated data-parallel cluster."""

from .numkit import SummaryStats, l2_norm_sq, make_rng, sample_normal, summarize
from .codecs import (
    CodecState,
    SignMask,
    TwoMeans,
    WirePayload,
    a2sgd_decode,
    a2sgd_encode,
    dense_encode,
    enc,
    gaussian_k_encode,
    gaussian_threshold,
    inverse_normal_cdf,
    qsgd_encode,
    topk_encode,
    traffic_bits,
)
from .cluster import Cluster, CostModel, TrafficLedger, reconstruct_average, scaling_efficiency
from .data import Dataset, load_idx, make_synthetic, read_idx, shard_indices
from .models import build_model
from .train import LrSchedule, RunResult, WorkerState, final_sync, run_training

__version__ = "0.1.0"

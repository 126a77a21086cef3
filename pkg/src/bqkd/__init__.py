"""Simulator and analysis toolkit for boosted QKD and boosted semi-quantum KD on qudits."""

from .adversary import EveStrategy, eve_apply, eve_guess_key
from .analysis import (
    detection_closed_forms,
    kgr_bb84,
    kgr_baselines,
    kgr_bqkd,
    kgr_bsqkd,
    kgr_ratio_curve,
    shannon_entropy,
    summarize,
)
from .engine import RoundRecord, RunConfig, run_baseline, run_bqkd, run_bsqkd, run_protocol, sift
from .qudit import BasisId, StateVector, build_bases, born_probabilities, measure, random_unitary
from .rules import DISCARD, SiftOutcome, Symbol, check_unambiguity, sift_symbol

__version__ = "0.1.0"

__all__ = [
    "BasisId", "DISCARD", "EveStrategy", "RoundRecord", "RunConfig", "SiftOutcome", "StateVector",
    "Symbol", "born_probabilities", "build_bases", "check_unambiguity", "detection_closed_forms",
    "eve_apply", "eve_guess_key", "kgr_baselines", "kgr_bb84", "kgr_bqkd", "kgr_bsqkd",
    "kgr_ratio_curve", "measure", "random_unitary", "run_baseline", "run_bqkd", "run_bsqkd", "run_protocol",
    "run_protocol",
    "shannon_entropy", "sift", "sift_symbol", "summarize",
]

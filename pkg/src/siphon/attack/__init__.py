"""Prefix siphoning: recover stored keys from filter false positives."""
from .classifier import (ClassifierError, IdealizedProber, Prober, TimedProber,
                         TimingClassifier, find_valley, is_positive, is_positive_many,
                         learn_cutoff, random_keys)
from .pbf import Detection, DetectionError, detect_pbf_prefix_len, find_fpk_pbf
from .runner import (IDEALIZED, TIMED, AttackConfig, AttackReport, breadth_first_hits,
                     run_attack)
from .surf import (AbandonedRound, CandidatePrefix, Extension, HashContext, extend_prefix,
                   find_fpk_surf, id_prefix_many, id_prefix_surf)

__all__ = [
    "ClassifierError", "IdealizedProber", "Prober", "TimedProber", "TimingClassifier",
    "find_valley", "is_positive", "is_positive_many", "learn_cutoff", "random_keys",
    "Detection", "DetectionError", "detect_pbf_prefix_len", "find_fpk_pbf",
    "IDEALIZED", "TIMED", "AttackConfig", "AttackReport", "breadth_first_hits", "run_attack",
    "AbandonedRound", "CandidatePrefix", "Extension", "HashContext", "extend_prefix",
    "find_fpk_surf", "id_prefix_many", "id_prefix_surf",
]

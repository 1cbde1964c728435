"""Triplet permutation workbench for single-shot two-view re-identification."""

from .dataset import Dataset, Sample, SplitSpec, View, load_manifest, save_manifest, split_prid_protocol, synth_dataset
from .embedding import EmbeddingModel, embed, init_model, load_model, save_model, sq_dist
from .tripletgen import Formulation, Triplet, TripletSet, enumerate_triplets, expected_count, make_batches
from .trainer import TrainConfig, TrainReport, batch_gradient, grad_check, train, triplet_loss
from .audit import AuditReport, ConstraintId, SituationId, audit, check_constraint, detect_situations, prevention_ledger, verify_complement_theorems
from .cmc import CmcCurve, compare_curves, evaluate_cmc, rank_of_match

__version__ = "0.1.0"

"""Compositional token embeddings via product quantization (ASG)."""
from .analysis import (ErrorStats, FacetReport, ProbeResult, probe_eval,
                       quantization_error, segment_neighbors)
from .core import (AsgConfig, AsgModel, CompressionReport, Mode, concept_ids,
                   load_model, logit, logits_all, mapping_overhead, param_report,
                   reconstruct, reconstruct_all, save_model, train_asg)
from .embed_io import (SyntheticSpec, Vocab, generate_synthetic, import_csv,
                       load_embeddings, load_vocab, save_embeddings)
from .errors import AsgError, FormatError, ShapeError, ValidationError
from .kmeans import (Assignments, KmeansParams, assign, exact_kmeans_small,
                     kmeans_pp_init, lloyd)
from .sg import (SgModel, load_sg, matched_budget_k, save_sg, sg_reconstruct,
                 train_sg)

__version__ = "0.1.0"

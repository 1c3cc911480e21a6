"""TableMark: buyer-traceable watermarks for synthetic tabular data.

The watermark channel is the cluster-size histogram of the table in a
learned latent space: each bit is the partial order between the sizes of
a keyed pair of clusters. Encoding solves a constrained integer program
so the watermark survives modeled perturbation, alteration, deletion,
and insertion attacks with analytic false-positive and false-negative
guarantees.
"""

from .attacks import ATTACK_KINDS, AttackSpec, apply_attack
from .clusterspace import ClusterModel, fit_cluster_model
from .decoder import DecodeResult, IdentifyResult, decode, identify
from .desk import make_desk_table
from .errors import (
    ArtifactIOError,
    CapacityError,
    EncodingInfeasibleError,
    TablemarkError,
    ValidationError,
)
from .evaluation import QueryWorkload, correlation_gap, generate_workload, marginal_gap, raqe
from .optimizer import OptimizerConfig, WatermarkedHistogram, optimize
from .robustness import RobustnessParams
from .synthesizer import fit_sampler, synthesize
from .tableio import Column, Table, TableSchema, infer_schema, load_table, save_table
from .template import SecretKey, WatermarkTemplate, pair_clusters, select_template_clusters
from .watermarkdb import WatermarkDatabase, bind_and_assign, match_watermark
from .workflow import OwnerModel, encode_table, fit_owner, identify_table

__version__ = "0.1.0"

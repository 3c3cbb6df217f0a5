"""Training-free style transfer by heterogeneous attention modulation on a toy latent diffusion stack."""

from .attention import (AttentionProjections, AttentionSiteId, AttentionWeights, SiteKind, project,
                        run_attention_block, scaled_dot_product_attention)
from .data import ConstantDataset, ToyDataset, fixture_pairs
from .denoiser import NULL_CONDITION, Denoiser, DenoiserConfig
from .errors import (ConfigError, ContractError, HamError, NumericError, OrderingError, ShapeError,
                     TraceIncompleteError, TrainingDivergenceError)
from .metrics import (ComponentScores, artfid_form, cc_score, channel_stat_distance, dc_score, read_scores,
                      score_report)
from .modulation import (ModulationConfig, TeacherTrace, gar_blend, gar_fuse, lat_transplant, make_student_hook,
                         sini)
from .pipeline import (ABLATION_ROWS, TransferRequest, TransferResult, ablation_matrix, invert, invert_image,
                       prepare_teachers, reconstruct, sample, save_png, transfer)
from .scheduler import LatentState, NoiseSchedule, build_schedule, ddim_invert_step, ddim_step
from .tensor import ChannelStats, adain, channel_stats, load_hamt, save_hamt
from .train import train

__version__ = "0.1.0"

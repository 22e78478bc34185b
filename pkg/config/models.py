# config/models.py
from __future__ import annotations

from enum import Enum
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import config.settings as settings


class _Block(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


class Direction(str, Enum):
    KG1_TO_KG2 = "kg1->kg2"
    KG2_TO_KG1 = "kg2->kg1"
    BOTH = "both"

    def expand(self) -> list["Direction"]:
        if self is Direction.BOTH:
            return [Direction.KG1_TO_KG2, Direction.KG2_TO_KG1]
        return [self]


class PPRMethod(str, Enum):
    POWER_ITERATION = "power_iteration"
    FORWARD_PUSH = "forward_push"


class VerdictScore(str, Enum):
    # margin: row best minus the strongest competing source for that same target
    MARGIN = "margin"
    BEST = "best"


class EncoderConfig(_Block):
    depth: int = Field(settings.DEPTH, ge=1)
    heads: int = Field(settings.HEADS, ge=1)
    hidden_dim: int = Field(settings.HIDDEN_DIM, ge=1)
    leaky_relu_slope: float = Field(settings.LEAKY_RELU_SLOPE, ge=0.0)
    proxy_count: int = Field(settings.PROXY_COUNT, ge=1)
    dropout: float = Field(settings.DROPOUT, ge=0.0, lt=1.0)


class ContrastiveConfig(_Block):
    tau_plus: float = Field(settings.TAU_PLUS, ge=0.0, lt=1.0)
    beta_hardness: float = Field(settings.BETA_HARDNESS, ge=0.0)
    temperature: float = Field(settings.TEMPERATURE, gt=0.0)
    similarity_clip: float = Field(settings.SIMILARITY_CLIP, gt=0.0)


class OTConfig(_Block):
    epsilon: float = Field(settings.OT_EPSILON, gt=0.0)
    max_sinkhorn_iters: int = Field(settings.OT_MAX_ITERS, ge=1)
    marginal_tolerance: float = Field(settings.OT_TOLERANCE, gt=0.0)
    # epsilon ladder: start at the cost range, multiply by this until epsilon
    scaling_ratio: float = Field(settings.OT_SCALING_RATIO, gt=0.0, lt=1.0)
    # True: every seed pair carries unit mass, so the OT term sums over pairs like L1 sums over anchors
    unit_pair_mass: bool = True
    norm_order: Literal[2] = 2
    lam: float = Field(settings.OT_LAMBDA, ge=0.0, alias="lambda")
    schedule_horizon: int = Field(settings.EPOCHS, ge=1)
    enabled: bool = True


class PPRConfig(_Block):
    alpha: float = Field(settings.PPR_ALPHA, gt=0.0, lt=1.0)
    method: PPRMethod = PPRMethod.POWER_ITERATION
    push_tolerance: float = Field(settings.PPR_PUSH_TOLERANCE, gt=0.0)
    max_power_iters: int = Field(1000, ge=1)
    power_tolerance: float = Field(1e-10, gt=0.0)
    seed_sample_size: int = Field(settings.PPR_SEED_SAMPLE, ge=1)
    rng_seed: int = 0


class TrainSettings(_Block):
    epochs: int = Field(settings.EPOCHS, ge=1)
    turns: int = Field(settings.TURNS, ge=1)
    batch_size: int = Field(settings.BATCH_SIZE, ge=2)
    lr: float = Field(settings.LEARNING_RATE, gt=0.0)
    rmsprop_decay: float = Field(0.9, ge=0.0, lt=1.0)
    rmsprop_eps: float = Field(1e-8, gt=0.0)
    iterative: bool = True
    warm_start: bool = True
    il_threshold: float = settings.IL_THRESHOLD
    il_use_hos: bool = True
    il_csls_k: int = Field(settings.CSLS_K, ge=0)


class InferenceConfig(_Block):
    use_hos: bool = True
    hos_weight: float = Field(1.0, ge=0.0)
    use_csls: bool = True
    csls_k: int = Field(settings.CSLS_K, ge=1)
    dangling_threshold: Optional[float] = None
    verdict_score: VerdictScore = VerdictScore.MARGIN
    top_k: int = Field(10, ge=1)


class SyntheticSpec(_Block):
    core_size: int = Field(500, ge=2)
    dangling_fraction_1: float = Field(0.0, ge=0.0, lt=1.0)
    dangling_fraction_2: float = Field(0.0, ge=0.0, lt=1.0)
    relation_count: int = Field(8, ge=1)
    avg_degree: float = Field(4.0, ge=1.0)
    edge_dropout: float = Field(0.0, ge=0.0, lt=1.0)
    rng_seed: int = 0

    @model_validator(mode="after")
    def _degree_fits_core(self) -> "SyntheticSpec":
        max_edges = self.core_size * (self.core_size - 1) / 2
        if self.core_size * self.avg_degree / 2 > max_edges:
            raise ValueError(
                f"avg_degree {self.avg_degree} needs more edges than a simple graph "
                f"on {self.core_size} nodes can hold"
            )
        return self


# Blocks that decide what a checkpoint is; inference knobs and output_dir stay out.
HASHED_BLOCKS = ("dataset", "synthetic", "direction", "encoder", "contrastive", "ot", "ppr", "train", "rng_seed")


class ExperimentConfig(_Block):
    dataset: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    direction: Direction = Direction.BOTH
    encoder: EncoderConfig = EncoderConfig()
    contrastive: ContrastiveConfig = ContrastiveConfig()
    ot: OTConfig = OTConfig()
    ppr: PPRConfig = PPRConfig()
    train: TrainSettings = TrainSettings()
    inference: InferenceConfig = InferenceConfig()
    output_dir: str = settings.OUTPUT_DIR
    rng_seed: int = 0

    @field_validator("dataset")
    @classmethod
    def _strip_dataset(cls, v: Optional[str]) -> Optional[str]:
        if v is None:
            return None
        v = str(v).strip()
        return v or None

    @model_validator(mode="after")
    def _one_source(self) -> "ExperimentConfig":
        if self.dataset is not None and self.synthetic is not None:
            raise ValueError("set either 'dataset' or 'synthetic', not both")
        return self

    def hashed_view(self) -> Dict[str, Any]:
        full = self.model_dump(mode="json", by_alias=True)
        return {k: full[k] for k in HASHED_BLOCKS}


__all__ = [
    "Direction",
    "PPRMethod",
    "VerdictScore",
    "EncoderConfig",
    "ContrastiveConfig",
    "OTConfig",
    "PPRConfig",
    "TrainSettings",
    "InferenceConfig",
    "SyntheticSpec",
    "ExperimentConfig",
    "HASHED_BLOCKS",
]

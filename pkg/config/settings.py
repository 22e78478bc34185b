# config/settings.py
from __future__ import annotations

import os
from typing import Any, Dict, Optional

from dotenv import load_dotenv
load_dotenv()


def _env_bool(name: str, default: str = "false") -> bool:
    return str(os.getenv(name, default)).strip().lower() in ("1", "true", "yes", "y")


# === Runtime environment ===
OUTPUT_DIR: str = os.getenv("WOGCL_OUTPUT_DIR", "runs")
LOG_LEVEL: str = os.getenv("WOGCL_LOG_LEVEL", "INFO")
LOG_JSON: bool = _env_bool("WOGCL_LOG_JSON")
WORKERS: int = int(os.getenv("WOGCL_WORKERS", "1"))
DBP_ZH_EN_DIR: Optional[str] = os.getenv("WOGCL_DBP_ZH_EN") or None

# === Training recipe (reference hyperparameters) ===
DEPTH: int = 2
HEADS: int = 1
HIDDEN_DIM: int = 32          # 128 for small corpora
DROPOUT: float = 0.3
LEAKY_RELU_SLOPE: float = 0.2
PROXY_COUNT: int = 64

TAU_PLUS: float = 0.1
BETA_HARDNESS: float = 1.0
TEMPERATURE: float = 0.5
SIMILARITY_CLIP: float = 60.0

OT_EPSILON: float = 0.05
OT_MAX_ITERS: int = 200
OT_TOLERANCE: float = 1e-6
OT_LAMBDA: float = 0.3
OT_SCALING_RATIO: float = 0.5

PPR_ALPHA: float = 0.15
PPR_PUSH_TOLERANCE: float = 1e-6
PPR_SEED_SAMPLE: int = 64

LEARNING_RATE: float = 0.005
BATCH_SIZE: int = 512
EPOCHS: int = 20
TURNS: int = 5
IL_THRESHOLD: float = 0.85
CSLS_K: int = 10

# Dataset layout (tab-separated UTF-8)
DATASET_FILES: Dict[str, str] = {
    "triples_1": "rel_triples_1",
    "triples_2": "rel_triples_2",
    "links": "ent_links",
    "ent_ids_1": "ent_ids_1",
    "ent_ids_2": "ent_ids_2",
    "rel_ids_1": "rel_ids_1",
    "rel_ids_2": "rel_ids_2",
    "train_links": "splits/train_links",
    "valid_links": "splits/valid_links",
    "test_links": "splits/test_links",
    "valid_dangling_1": "splits/valid_dangling_1",
    "test_dangling_1": "splits/test_dangling_1",
    "valid_dangling_2": "splits/valid_dangling_2",
    "test_dangling_2": "splits/test_dangling_2",
}

# Split ratios used by the synthetic generator (train / valid / test)
SPLIT_RATIOS = (0.3, 0.2, 0.5)

CHECKPOINT_MAGIC: bytes = b"WOGC"
CHECKPOINT_VERSION: int = 1


def runtime_summary() -> Dict[str, Any]:
    """Environment-derived settings, for stamping into run metadata."""
    return {
        "output_dir": OUTPUT_DIR,
        "log_level": LOG_LEVEL,
        "log_json": LOG_JSON,
        "workers": WORKERS,
    }


__all__ = [
    "OUTPUT_DIR",
    "LOG_LEVEL",
    "LOG_JSON",
    "WORKERS",
    "DBP_ZH_EN_DIR",
    "DATASET_FILES",
    "SPLIT_RATIOS",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "runtime_summary",
]

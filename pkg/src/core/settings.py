"""
全局配置
默认值 <- .env / 环境变量 <- 命令行参数
"""

import hashlib
import logging
import os
from dataclasses import dataclass, replace

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

# 残差容差
DEFAULT_TOLERANCE = 1e-9
# 奇异值相对阈值（秩判定）
RANK_RTOL = 1e-7
# 酉矩阵容差
UNITARY_TOLERANCE = 1e-12
# 立方体/球面维数上限
MAX_CUBE_DIM = 2
# 逼近定理驱动支持的最高胞腔维数
MAX_APPROX_CELL_DIM = 2
DEFAULT_RESOLUTIONS = (2, 4, 8)
DEFAULT_SEED = 20070701
DEFAULT_TRIALS = 5
# 基对穷举检查的维数上限，超过后改用随机元素对
BASIS_PAIR_CAP = 48
RANDOM_PAIR_COUNT = 12

REPORT_SCHEMA = "nccw-report/1"


@dataclass(frozen=True)
class RunConfig:
    """一次运行的配置"""
    resolutions: tuple = DEFAULT_RESOLUTIONS
    seed: int = DEFAULT_SEED
    tolerance: float = DEFAULT_TOLERANCE
    rank_rtol: float = RANK_RTOL
    trials: int = DEFAULT_TRIALS
    max_dim: int = MAX_CUBE_DIM

    def to_dict(self):
        return {
            'resolutions': list(self.resolutions),
            'seed': self.seed,
            'tolerance': self.tolerance,
            'rank_rtol': self.rank_rtol,
            'trials': self.trials,
            'max_dim': self.max_dim,
        }


def _env_resolutions(raw):
    values = tuple(int(x) for x in raw.replace(';', ',').split(',') if x.strip())
    if not values or any(v < 1 for v in values):
        raise ValueError(f"NCCW_RESOLUTIONS 不合法: {raw}")
    return values


def load_config(**overrides):
    """读取 .env 和环境变量，再用显式参数覆盖"""
    load_dotenv()
    config = RunConfig()
    env = {}
    if os.getenv('NCCW_SEED'):
        env['seed'] = int(os.getenv('NCCW_SEED'))
    if os.getenv('NCCW_TOL'):
        env['tolerance'] = float(os.getenv('NCCW_TOL'))
    if os.getenv('NCCW_RESOLUTIONS'):
        env['resolutions'] = _env_resolutions(os.getenv('NCCW_RESOLUTIONS'))
    if os.getenv('NCCW_TRIALS'):
        env['trials'] = int(os.getenv('NCCW_TRIALS'))
    if os.getenv('NCCW_MAX_DIM'):
        env['max_dim'] = int(os.getenv('NCCW_MAX_DIM'))
    if env:
        logger.debug(f"Config from environment: {env}")
        config = replace(config, **env)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if 'resolutions' in overrides:
        overrides['resolutions'] = tuple(overrides['resolutions'])
    return replace(config, **overrides)


def derive_seed(seed, check_id):
    """由全局种子和检查 id 派生出该检查自己的种子"""
    digest = hashlib.sha256(f"{seed}:{check_id}".encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big')

"""Linear-attention neural operator toolkit."""

from lano._core import (
    LanoError,
    Model,
    agent_attention_core,
    agent_pool,
    build_biases,
    flop_count,
    gen_coefficient,
    gradient_check_worst,
    gradient_loss,
    linear_attention,
    relative_l2,
    resample_grid,
    softmax_attention,
    solve_darcy_fd,
)

__all__ = [
    "LanoError",
    "Model",
    "agent_attention_core",
    "agent_pool",
    "build_biases",
    "flop_count",
    "gen_coefficient",
    "gradient_check_worst",
    "gradient_loss",
    "linear_attention",
    "relative_l2",
    "resample_grid",
    "softmax_attention",
    "solve_darcy_fd",
]

"""Safety-aware behavior cloning toolkit.

Synthesizes worst-case adversarial disturbances with sampling-based MPC,
injects them into expert demonstrations to collect safety-critical training
data, trains imitation policies on that data, and verifies the disturbance
synthesis against brute-force dynamic-programming oracles.
"""

__version__ = "0.1.0"

from . import (
    data,
    dynamics,
    evaluation,
    experts,
    guidance,
    mppi,
    observations,
    oracle,
    policy,
    tasks,
    worlds,
)

__all__ = [
    "data",
    "dynamics",
    "evaluation",
    "experts",
    "guidance",
    "mppi",
    "observations",
    "oracle",
    "policy",
    "tasks",
    "worlds",
    "__version__",
]

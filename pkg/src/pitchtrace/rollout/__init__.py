from pitchtrace.rollout.bc import (
    BCConfig,
    BCNet,
    BCParams,
    BCPolicy,
    bc_loss_and_grad,
    bc_train,
    closed_loop_refine,
    load_bc,
    rollout_rmse,
    save_bc,
)
from pitchtrace.rollout.harness import (
    ConstantVelocityPolicy,
    Context,
    Policy,
    RandomWalkPolicy,
    ReplayPolicy,
    RolloutConfig,
    ZeroPolicy,
    constant_velocity_policy,
    evaluate_policy,
    predict_segment,
    rollout,
)

__all__ = [
    "BCConfig",
    "BCNet",
    "BCParams",
    "BCPolicy",
    "ConstantVelocityPolicy",
    "Context",
    "Policy",
    "RandomWalkPolicy",
    "ReplayPolicy",
    "RolloutConfig",
    "ZeroPolicy",
    "bc_loss_and_grad",
    "bc_train",
    "closed_loop_refine",
    "constant_velocity_policy",
    "evaluate_policy",
    "load_bc",
    "predict_segment",
    "rollout",
    "rollout_rmse",
    "save_bc",
]

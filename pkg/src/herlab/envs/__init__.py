from .core import (
    ENV_IDS,
    ActionBox,
    EnvConfig,
    GoalObservation,
    Rect,
    compute_reward,
    scale_observation,
    scaled_dim,
)
from .games import GoalEnv, HandGame, RobotGame, StickyLine, env_reset, make_env
from .physics import (
    BallState,
    HandState,
    ManipulatorState,
    Wall,
    ball_integrate,
    forward_kinematics,
    jacobian,
    release,
    try_grab,
)

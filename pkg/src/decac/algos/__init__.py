from .nac import NacParams, nac_direction_solve, sample_scores
from .runners import (
    AgentParams,
    NoiseSpec,
    RunResult,
    run_dldac,
    run_nac,
    run_sdac_noi,
    run_sdac_re,
)
from .schedule import DoubleLoop, StepSchedule, make_schedule
from .updates import (
    actor_step,
    actor_step_noisy,
    advantage_estimate,
    critic_td_step,
    reward_estimator_step,
    td_error,
)

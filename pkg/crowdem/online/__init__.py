from .schedule import ScheduleKind, StepSchedule, eta, eta_sum_lower_bound, eta_square_sum_bound
from .projection import ProjectionFamily, ProjectionEvent, project, box_epsilon
from .online_em import (
    Sampling,
    OnlineState,
    EpochRecord,
    OnlineResult,
    normalize,
    sa_update,
    init_stats,
    online_fit,
)

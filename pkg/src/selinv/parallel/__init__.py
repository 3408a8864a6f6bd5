"""Grid-distributed selected inversion over in-process workers."""

from .engine import (
    DeadlockError, LocalStore, ParallelRun, distribute_factor, gather_blocks,
    parallel_selected_inversion,
)
from .grid import ProcessorGrid, map_block
from .schedule import PrioritySchedule, assign_priorities, build_schedule, participants, schedule_table
from .trace import Event, Trace

__all__ = [
    "DeadlockError", "Event", "LocalStore", "ParallelRun", "PrioritySchedule", "ProcessorGrid",
    "Trace", "assign_priorities", "build_schedule", "distribute_factor", "gather_blocks",
    "map_block", "parallel_selected_inversion", "participants", "schedule_table",
]

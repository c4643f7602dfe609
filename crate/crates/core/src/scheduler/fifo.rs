use super::{fifo_job_order, BasePolicy, PolicyView, SchedulerDecision};
use crate::engine::SimState;
use crate::ids::{NodeId, TaskId};

/// Jobs in submission order; within a job, tasks in id order.
#[derive(Clone, Copy, Debug, Default)]
pub struct FifoPolicy;

impl BasePolicy for FifoPolicy {
    fn name(&self) -> &'static str {
        "fifo"
    }

    fn pick(&self, view: &PolicyView) -> Option<(TaskId, NodeId)> {
        fifo_job_order(view.state).into_iter().find_map(|j| view.first_placeable(j))
    }
}

pub fn fifo_next(state: &SimState) -> SchedulerDecision {
    match FifoPolicy.pick(&PolicyView::new(state)) {
        Some((task, node)) => SchedulerDecision::Assign { task, node },
        None => SchedulerDecision::Wait,
    }
}

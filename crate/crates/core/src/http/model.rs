use crate::sim::SimTime;

/// Durations of the phases of one coordinated collection on a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HttpEventModel {
    /// Ask the coordinator and receive the grant.
    pub t_schedule: SimTime,
    /// Finish requests already routed to the backend.
    pub t_trailers: SimTime,
    pub t_gc: SimTime,
    /// Tell the coordinator the backend is back.
    pub t_rpc: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HttpModelOutcome {
    pub latency_impact: SimTime,
    /// Servers out of rotation during the event.
    pub capacity_loss: u32,
    pub capacity_downtime: SimTime,
    pub event_time: SimTime,
}

pub fn http_model_eval(m: &HttpEventModel) -> HttpModelOutcome {
    let capacity_downtime = m.t_trailers + m.t_gc + m.t_rpc;
    HttpModelOutcome {
        latency_impact: SimTime::ZERO,
        capacity_loss: 1,
        capacity_downtime,
        event_time: m.t_schedule + capacity_downtime,
    }
}

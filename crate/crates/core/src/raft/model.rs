use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaftRole {
    Follower,
    Leader,
}

/// Inputs for one collection on a Raft server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RaftEventModel {
    pub rtt: SimTime,
    /// Ask the leader and get the grant (followers).
    pub t_schedule: SimTime,
    /// Extra time to hand queued client requests to the successor (leaders).
    pub t_proxy: SimTime,
    pub t_gc: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RaftModelOutcome {
    pub latency_impact: SimTime,
    pub capacity_loss: u32,
    pub event_time: SimTime,
}

pub fn raft_model_eval(role: RaftRole, m: &RaftEventModel) -> RaftModelOutcome {
    match role {
        RaftRole::Follower => RaftModelOutcome {
            latency_impact: SimTime::ZERO,
            capacity_loss: 0,
            event_time: m.t_schedule + m.t_gc,
        },
        RaftRole::Leader => RaftModelOutcome {
            latency_impact: m.rtt,
            capacity_loss: 0,
            event_time: m.rtt.half() + m.t_proxy + m.t_gc,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RTT: SimTime = SimTime::from_micros(48);

    #[test]
    fn follower_pays_nothing() {
        let out = raft_model_eval(
            RaftRole::Follower,
            &RaftEventModel {
                rtt: RTT,
                t_schedule: RTT,
                t_gc: SimTime::from_millis(10),
                ..Default::default()
            },
        );
        assert_eq!(out.event_time, SimTime::from_micros(10_048));
        assert_eq!(out.latency_impact, SimTime::ZERO);
        assert_eq!(out.capacity_loss, 0);
    }

    #[test]
    fn leader_costs_one_round_trip() {
        let out = raft_model_eval(
            RaftRole::Leader,
            &RaftEventModel {
                rtt: RTT,
                t_gc: SimTime::from_millis(10),
                ..Default::default()
            },
        );
        assert_eq!(out.latency_impact, SimTime::from_micros(48));
        assert_eq!(out.event_time, SimTime::from_micros(10_024));
    }

    #[test]
    fn no_pause_leaves_scheduling_only() {
        let m = RaftEventModel {
            rtt: RTT,
            t_schedule: RTT,
            t_proxy: SimTime::from_micros(5),
            t_gc: SimTime::ZERO,
        };
        assert_eq!(raft_model_eval(RaftRole::Follower, &m).event_time, RTT);
        assert_eq!(
            raft_model_eval(RaftRole::Leader, &m).event_time,
            SimTime::from_micros(29)
        );
    }
}

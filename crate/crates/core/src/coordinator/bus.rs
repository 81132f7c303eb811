use std::collections::{BTreeMap, VecDeque};

use crate::ca_solver::DualPairTrajectory;
use crate::dynamics::shift_by;
use crate::geometry::{Polytope, Pose2};

/// Predicted polytopes (and the poses they came from) for `k = 1..N` of the
/// round after `stamp`.
#[derive(Debug, Clone)]
pub struct PolytopeMessage {
    pub stamp: i64,
    pub polytopes: Vec<Polytope>,
    pub poses: Vec<Pose2>,
}

impl PolytopeMessage {
    /// Realigned for consumption in round `t`.
    pub fn aligned(&self, t: i64) -> PolytopeMessage {
        let extra = staleness(self.stamp, t);
        PolytopeMessage {
            stamp: self.stamp,
            polytopes: shift_by(&self.polytopes, extra),
            poses: shift_by(&self.poses, extra),
        }
    }
}

/// Pair duals together with the predictions they were computed from.
#[derive(Debug, Clone)]
pub struct DualMessage {
    pub stamp: i64,
    pub duals: DualPairTrajectory,
    pub polytopes_i: Vec<Polytope>,
    pub polytopes_j: Vec<Polytope>,
    pub poses_i: Vec<Pose2>,
    pub poses_j: Vec<Pose2>,
}

impl DualMessage {
    /// Realigns data published at `stamp` for consumption in round `t`.
    pub fn aligned(&self, t: i64) -> DualMessage {
        let extra = staleness(self.stamp, t);
        DualMessage {
            stamp: self.stamp,
            duals: self.duals.shifted(extra),
            polytopes_i: shift_by(&self.polytopes_i, extra),
            polytopes_j: shift_by(&self.polytopes_j, extra),
            poses_i: shift_by(&self.poses_i, extra),
            poses_j: shift_by(&self.poses_j, extra),
        }
    }
}

/// Rounds by which a message published at `stamp` is older than the
/// expected `t - 1`.
pub fn staleness(stamp: i64, t: i64) -> usize {
    (t - 1 - stamp).max(0) as usize
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BusError {
    DuplicatePublication { topic: &'static str, stamp: i64 },
}

impl std::fmt::Display for BusError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BusError::DuplicatePublication { topic, stamp } => {
                write!(f, "second {topic} publication at round {stamp}")
            }
        }
    }
}

/// Synchronous mailbox. A message published in round `t` becomes readable in
/// round `t + 1 + delay`; until then readers get the newest older message.
#[derive(Debug, Clone)]
pub struct MessageBus {
    delay: usize,
    keep: usize,
    polytopes: Vec<VecDeque<PolytopeMessage>>,
    duals: BTreeMap<(usize, usize), VecDeque<DualMessage>>,
}

impl MessageBus {
    pub fn new(robots: usize, delay: usize) -> Self {
        MessageBus {
            delay,
            keep: delay + 2,
            polytopes: vec![VecDeque::new(); robots],
            duals: BTreeMap::new(),
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn publish_polytopes(&mut self, robot: usize, msg: PolytopeMessage) -> Result<(), BusError> {
        let q = &mut self.polytopes[robot];
        if q.back().is_some_and(|m| m.stamp >= msg.stamp) {
            return Err(BusError::DuplicatePublication {
                topic: "polytope",
                stamp: msg.stamp,
            });
        }
        q.push_back(msg);
        while q.len() > self.keep {
            q.pop_front();
        }
        Ok(())
    }

    pub fn publish_duals(&mut self, pair: (usize, usize), msg: DualMessage) -> Result<(), BusError> {
        let q = self.duals.entry(pair).or_default();
        if q.back().is_some_and(|m| m.stamp >= msg.stamp) {
            return Err(BusError::DuplicatePublication {
                topic: "dual",
                stamp: msg.stamp,
            });
        }
        q.push_back(msg);
        while q.len() > self.keep {
            q.pop_front();
        }
        Ok(())
    }

    fn visible<T, F: Fn(&T) -> i64>(q: &VecDeque<T>, limit: i64, stamp: F) -> Option<&T> {
        q.iter()
            .rev()
            .find(|m| stamp(m) <= limit)
            .or_else(|| q.front())
    }

    /// Newest polytope message of `robot` visible to another robot in round `t`.
    pub fn read_polytopes(&self, robot: usize, t: i64) -> Option<&PolytopeMessage> {
        let limit = t - 1 - self.delay as i64;
        Self::visible(&self.polytopes[robot], limit, |m| m.stamp)
    }

    /// Newest pair duals visible in round `t`. Both members of a pair read
    /// with the same delay so they constrain against the same data.
    pub fn read_duals(&self, pair: (usize, usize), t: i64) -> Option<&DualMessage> {
        let q = self.duals.get(&pair)?;
        Self::visible(q, t - 1 - self.delay as i64, |m| m.stamp)
    }

    /// Newest pair duals regardless of delay, used to warm start the owner.
    pub fn latest_duals(&self, pair: (usize, usize)) -> Option<&DualMessage> {
        self.duals.get(&pair)?.back()
    }

    /// Forgets a pair, e.g. when it leaves communication range.
    pub fn drop_pair(&mut self, pair: (usize, usize)) {
        self.duals.remove(&pair);
    }

    pub fn has_pair(&self, pair: (usize, usize)) -> bool {
        self.duals.contains_key(&pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vehicle_polytope;

    fn msg(stamp: i64) -> PolytopeMessage {
        PolytopeMessage {
            stamp,
            polytopes: vec![vehicle_polytope(&Pose2::new(stamp as f64, 0.0, 0.0), 1.0, 1.0)],
            poses: vec![Pose2::new(stamp as f64, 0.0, 0.0)],
        }
    }

    #[test]
    fn round_visibility_without_delay() {
        let mut bus = MessageBus::new(1, 0);
        bus.publish_polytopes(0, msg(-1)).unwrap();
        bus.publish_polytopes(0, msg(0)).unwrap();
        assert_eq!(bus.read_polytopes(0, 0).unwrap().stamp, -1);
        assert_eq!(bus.read_polytopes(0, 1).unwrap().stamp, 0);
    }

    #[test]
    fn delay_holds_back_messages() {
        let mut bus = MessageBus::new(1, 2);
        for s in -1..=3 {
            bus.publish_polytopes(0, msg(s)).unwrap();
        }
        assert_eq!(bus.read_polytopes(0, 4).unwrap().stamp, 1);
        assert_eq!(staleness(1, 4), 2);
    }

    #[test]
    fn duplicate_publication_rejected() {
        let mut bus = MessageBus::new(1, 0);
        bus.publish_polytopes(0, msg(0)).unwrap();
        assert!(bus.publish_polytopes(0, msg(0)).is_err());
    }
}

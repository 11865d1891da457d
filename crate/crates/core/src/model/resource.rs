use thiserror::Error;

use super::{ResourceId, TaskRef, TypeIdx, UserId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResourceState {
    Down,
    Booting,
    Idle,
    Busy,
}

impl ResourceState {
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceState::Down => "down",
            ResourceState::Booting => "booting",
            ResourceState::Idle => "idle",
            ResourceState::Busy => "busy",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("resource {resource}: illegal transition {from:?} -> {to:?}")]
pub struct TransitionError {
    pub resource: ResourceId,
    pub from: ResourceState,
    pub to: ResourceState,
}

/// A billable machine. Allowed transitions are
/// `Down -> Booting -> Idle <-> Busy` and `Idle -> Down`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resource {
    pub id: ResourceId,
    pub rtype: TypeIdx,
    pub state: ResourceState,
    pub reserved_user: Option<UserId>,
    pub billing_end: u64,
    pub boot_complete: u64,
    pub running_task: Option<TaskRef>,
    /// Instant the resource last became idle.
    pub idle_since: u64,
}

impl Resource {
    pub fn new(id: ResourceId, rtype: TypeIdx) -> Self {
        Resource {
            id,
            rtype,
            state: ResourceState::Down,
            reserved_user: None,
            billing_end: 0,
            boot_complete: 0,
            running_task: None,
            idle_since: 0,
        }
    }

    fn illegal(&self, to: ResourceState) -> TransitionError {
        TransitionError { resource: self.id, from: self.state, to }
    }

    /// Reserves a down machine for `user` and starts booting it.
    pub fn allocate(
        &mut self,
        user: UserId,
        now: u64,
        boot_delay: u64,
        billing_end: u64,
    ) -> Result<(), TransitionError> {
        if self.state != ResourceState::Down {
            return Err(self.illegal(ResourceState::Booting));
        }
        self.state = ResourceState::Booting;
        self.reserved_user = Some(user);
        self.boot_complete = now + boot_delay;
        self.billing_end = billing_end;
        Ok(())
    }

    pub fn finish_boot(&mut self, now: u64) -> Result<(), TransitionError> {
        if self.state != ResourceState::Booting {
            return Err(self.illegal(ResourceState::Idle));
        }
        self.state = ResourceState::Idle;
        self.idle_since = now;
        Ok(())
    }

    pub fn start(&mut self, task: TaskRef) -> Result<(), TransitionError> {
        if self.state != ResourceState::Idle {
            return Err(self.illegal(ResourceState::Busy));
        }
        self.state = ResourceState::Busy;
        self.running_task = Some(task);
        Ok(())
    }

    pub fn finish(&mut self, now: u64) -> Result<TaskRef, TransitionError> {
        match (self.state, self.running_task.take()) {
            (ResourceState::Busy, Some(task)) => {
                self.state = ResourceState::Idle;
                self.idle_since = now;
                Ok(task)
            }
            _ => Err(self.illegal(ResourceState::Idle)),
        }
    }

    /// Releases an idle machine.
    pub fn release(&mut self) -> Result<(), TransitionError> {
        if self.state != ResourceState::Idle {
            return Err(self.illegal(ResourceState::Down));
        }
        self.state = ResourceState::Down;
        self.reserved_user = None;
        Ok(())
    }

    pub fn is_reserved(&self) -> bool {
        self.state != ResourceState::Down
    }

    pub fn is_reserved_by(&self, user: UserId) -> bool {
        self.is_reserved() && self.reserved_user == Some(user)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> TaskRef {
        TaskRef { wf: 0, task: 0 }
    }

    #[test]
    fn full_lifecycle() {
        let mut r = Resource::new(ResourceId(0), TypeIdx(0));
        r.allocate(UserId(1), 0, 5, 60).unwrap();
        assert_eq!(r.boot_complete, 5);
        r.finish_boot(5).unwrap();
        r.start(task()).unwrap();
        assert_eq!(r.state, ResourceState::Busy);
        assert_eq!(r.finish(9).unwrap(), task());
        assert_eq!(r.idle_since, 9);
        r.release().unwrap();
        assert_eq!(r.reserved_user, None);
    }

    #[test]
    fn illegal_edges_rejected() {
        let mut r = Resource::new(ResourceId(0), TypeIdx(0));
        assert!(r.start(task()).is_err());
        assert!(r.release().is_err());
        assert!(r.finish_boot(0).is_err());
        r.allocate(UserId(1), 0, 0, 60).unwrap();
        // booting machines cannot run tasks or be released
        assert!(r.start(task()).is_err());
        assert!(r.release().is_err());
        assert!(r.allocate(UserId(2), 0, 0, 60).is_err());
        r.finish_boot(0).unwrap();
        r.start(task()).unwrap();
        // busy machines must pass through idle before going down
        let err = r.release().unwrap_err();
        assert_eq!((err.from, err.to), (ResourceState::Busy, ResourceState::Down));
    }
}

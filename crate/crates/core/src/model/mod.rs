//! Domain model: workflows, resources, users and the mutable system state.

mod resource;
mod state;
pub(crate) mod workflow;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use resource::{Resource, ResourceState, TransitionError};
pub use state::{
    eligible_tasks, joint_dag, momentary_demand, Dag, StateError, SystemState, TaskRef, TaskStatus, WorkflowRun,
};
pub use workflow::{ideal_makespan, validate_workflow, TaskSpec, ValidationError, Workflow, WorkflowSpec, Workload};

macro_rules! id_newtype {
    ($(#[$m:meta])* $name:ident, $inner:ty) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_newtype!(UserId, u32);
id_newtype!(WorkflowId, u32);
id_newtype!(ResourceId, u32);
id_newtype!(
    /// Position of a resource type in [`SystemConfig::types`].
    TypeIdx,
    usize
);

/// One billable machine flavour.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceType {
    pub name: String,
    /// Currency units charged per billing interval.
    pub cost: u64,
    /// Number of machines of this type the system can supply.
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub id: UserId,
    /// Currency units per autoscaling interval.
    pub budget: u64,
}

/// Static description of the simulated cloud. The billing period always
/// equals the autoscaling interval.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub types: Vec<ResourceType>,
    #[serde(default = "default_interval")]
    pub interval_s: u64,
    #[serde(default)]
    pub boot_delay_s: u64,
}

fn default_interval() -> u64 {
    60
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("system must declare at least one resource type")]
    NoTypes,
    #[error("resource type `{0}` declared twice")]
    DuplicateType(String),
    #[error("resource type `{0}` must cost at least 1")]
    ZeroCost(String),
    #[error("autoscaling interval must be positive")]
    ZeroInterval,
    #[error("user {0} declared twice")]
    DuplicateUser(UserId),
}

impl SystemConfig {
    /// Two types, Small (1/interval) and Large (5/interval), 32 machines each.
    pub fn small_large(interval_s: u64) -> Self {
        SystemConfig {
            types: vec![
                ResourceType { name: "Small".into(), cost: 1, count: 32 },
                ResourceType { name: "Large".into(), cost: 5, count: 32 },
            ],
            interval_s,
            boot_delay_s: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.types.is_empty() {
            return Err(ConfigError::NoTypes);
        }
        for (i, t) in self.types.iter().enumerate() {
            if t.cost == 0 {
                return Err(ConfigError::ZeroCost(t.name.clone()));
            }
            if self.types[..i].iter().any(|o| o.name == t.name) {
                return Err(ConfigError::DuplicateType(t.name.clone()));
            }
        }
        if self.interval_s == 0 {
            return Err(ConfigError::ZeroInterval);
        }
        Ok(())
    }

    pub fn type_names(&self) -> Vec<String> {
        self.types.iter().map(|t| t.name.clone()).collect()
    }

    pub fn costs(&self) -> Vec<u64> {
        self.types.iter().map(|t| t.cost).collect()
    }

    pub fn type_index(&self, name: &str) -> Option<TypeIdx> {
        self.types.iter().position(|t| t.name == name).map(TypeIdx)
    }

    /// Total number of machines (the system size).
    pub fn capacity(&self) -> u32 {
        self.types.iter().map(|t| t.count).sum()
    }

    /// Cost of reserving every machine for one interval.
    pub fn max_spend(&self) -> u64 {
        self.types.iter().map(|t| t.cost * u64::from(t.count)).sum()
    }
}

pub fn validate_users(users: &[UserConfig]) -> Result<(), ConfigError> {
    for (i, u) in users.iter().enumerate() {
        if users[..i].iter().any(|o| o.id == u.id) {
            return Err(ConfigError::DuplicateUser(u.id));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_billing_setup() {
        let sys = SystemConfig::small_large(60);
        assert_eq!(sys.capacity(), 64);
        assert_eq!(sys.max_spend(), 192);
        assert!(sys.validate().is_ok());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut sys = SystemConfig::small_large(60);
        sys.types[1].name = "Small".into();
        assert_eq!(sys.validate(), Err(ConfigError::DuplicateType("Small".into())));
        let mut sys = SystemConfig::small_large(60);
        sys.types[0].cost = 0;
        assert!(matches!(sys.validate(), Err(ConfigError::ZeroCost(_))));
        let users = [UserConfig { id: UserId(1), budget: 1 }, UserConfig { id: UserId(1), budget: 2 }];
        assert_eq!(validate_users(&users), Err(ConfigError::DuplicateUser(UserId(1))));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let bad = r#"{"types":[{"name":"S","cost":1,"count":1,"speed":2}]}"#;
        assert!(serde_json::from_str::<SystemConfig>(bad).is_err());
        let ok = r#"{"types":[{"name":"S","cost":1,"count":1}]}"#;
        let sys: SystemConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(sys.interval_s, 60);
    }
}

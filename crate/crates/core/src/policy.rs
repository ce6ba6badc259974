//! Callee-side burst policy: who may send bursts while waiting, and the
//! burst length `t`, inter-burst gap `G`, and burst budget `N`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ids::{Seconds, SubscriberId};

pub const DEFAULT_BURST_SECONDS: Seconds = 5;
pub const DEFAULT_GAP_SECONDS: Seconds = 30;
pub const DEFAULT_MAX_BURSTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("invalid policy: burst length must be at least 1 second, got {0}")]
    BurstTooShort(i64),
    #[error("invalid policy: gap must be non-negative, got {0}")]
    NegativeGap(i64),
    #[error("invalid policy: burst budget must be at least 1, got {0}")]
    EmptyBudget(i64),
    #[error("invalid policy: callee {0} cannot pre-approve itself")]
    SelfApproval(SubscriberId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BurstPolicy {
    pub callee: SubscriberId,
    /// Maximum length of one burst (`t`).
    pub burst_seconds: Seconds,
    /// Minimum silence between the end of one burst and the next (`G`).
    pub gap_seconds: Seconds,
    /// Bursts allowed per waiting episode (`N`).
    pub max_bursts: u32,
    pub approved_callers: BTreeSet<SubscriberId>,
}

impl BurstPolicy {
    /// Validates and builds a policy. Arguments are signed so that negative
    /// inputs from a scenario surface as policy errors.
    pub fn new(
        callee: SubscriberId,
        burst_seconds: i64,
        gap_seconds: i64,
        max_bursts: i64,
        approved_callers: BTreeSet<SubscriberId>,
    ) -> Result<Self, PolicyError> {
        if burst_seconds < 1 {
            return Err(PolicyError::BurstTooShort(burst_seconds));
        }
        if gap_seconds < 0 {
            return Err(PolicyError::NegativeGap(gap_seconds));
        }
        let max_bursts = u32::try_from(max_bursts)
            .ok()
            .filter(|n| *n >= 1)
            .ok_or(PolicyError::EmptyBudget(max_bursts))?;
        if approved_callers.contains(&callee) {
            return Err(PolicyError::SelfApproval(callee));
        }
        Ok(Self {
            callee,
            burst_seconds: burst_seconds as Seconds,
            gap_seconds: gap_seconds as Seconds,
            max_bursts,
            approved_callers,
        })
    }

    /// Policy used for a callee that never configured one: t=5, G=30, N=3,
    /// nobody pre-approved.
    pub fn default_for(callee: SubscriberId) -> Self {
        Self {
            callee,
            burst_seconds: DEFAULT_BURST_SECONDS,
            gap_seconds: DEFAULT_GAP_SECONDS,
            max_bursts: DEFAULT_MAX_BURSTS,
            approved_callers: BTreeSet::new(),
        }
    }

    pub fn is_approved(&self, caller: &SubscriberId) -> bool {
        self.approved_callers.contains(caller)
    }
}

/// Per-callee policy store. Last writer wins.
#[derive(Debug, Clone, Default)]
pub struct PolicyRegistry {
    policies: BTreeMap<SubscriberId, BurstPolicy>,
}

impl PolicyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_policy(
        &mut self,
        callee: SubscriberId,
        burst_seconds: i64,
        gap_seconds: i64,
        max_bursts: i64,
        approved_callers: BTreeSet<SubscriberId>,
    ) -> Result<BurstPolicy, PolicyError> {
        let policy = BurstPolicy::new(
            callee,
            burst_seconds,
            gap_seconds,
            max_bursts,
            approved_callers,
        )?;
        self.insert(policy.clone());
        Ok(policy)
    }

    pub fn insert(&mut self, policy: BurstPolicy) {
        self.policies.insert(policy.callee.clone(), policy);
    }

    pub fn get_policy(&self, callee: &SubscriberId) -> BurstPolicy {
        self.policies
            .get(callee)
            .cloned()
            .unwrap_or_else(|| BurstPolicy::default_for(callee.clone()))
    }
}

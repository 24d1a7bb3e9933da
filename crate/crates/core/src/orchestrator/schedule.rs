//! Slot scheduling for batches of scenarios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::scenario::AttackKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub scenario_id: String,
    /// Position of the scenario in the submitted batch.
    pub position: usize,
    /// Windows run one after another; assignments sharing a window run
    /// concurrently.
    pub window: usize,
    pub slots: Vec<usize>,
    pub exclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourcePlan {
    pub slots: usize,
    pub assignments: Vec<Assignment>,
}

impl ResourcePlan {
    pub fn window_count(&self) -> usize {
        self.assignments.last().map_or(0, |a| a.window + 1)
    }

    pub fn window(&self, w: usize) -> impl Iterator<Item = &Assignment> {
        self.assignments.iter().filter(move |a| a.window == w)
    }
}

/// FIFO plan. Query attacks fill windows one slot each up to capacity; a
/// side-channel attack closes the open window and takes a window of its own
/// holding every slot.
pub fn schedule(batch: &[(String, AttackKind)], slots: usize) -> Result<ResourcePlan> {
    if slots == 0 {
        return Err(Error::invalid("slots must be at least 1"));
    }
    let mut assignments = Vec::with_capacity(batch.len());
    let mut window = 0;
    let mut used = 0;
    for (position, (id, kind)) in batch.iter().enumerate() {
        if kind.is_exclusive() {
            if used > 0 {
                window += 1;
            }
            assignments.push(Assignment {
                scenario_id: id.clone(),
                position,
                window,
                slots: (0..slots).collect(),
                exclusive: true,
            });
            window += 1;
            used = 0;
        } else {
            if used == slots {
                window += 1;
                used = 0;
            }
            assignments.push(Assignment {
                scenario_id: id.clone(),
                position,
                window,
                slots: vec![used],
                exclusive: false,
            });
            used += 1;
        }
    }
    Ok(ResourcePlan { slots, assignments })
}

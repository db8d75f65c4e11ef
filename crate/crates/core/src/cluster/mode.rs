use serde::{Deserialize, Serialize};

use crate::isa::ModeTarget;

/// Cluster operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Each core drives its own vector unit.
    Split,
    /// `driver` drives both vector units; the other core has none.
    Merge { driver: usize },
}

impl Mode {
    pub fn is_merged(self) -> bool {
        matches!(self, Mode::Merge { .. })
    }
}

impl From<ModeTarget> for Mode {
    fn from(t: ModeTarget) -> Self {
        match t {
            ModeTarget::Split => Mode::Split,
            ModeTarget::Merge { driver } => Mode::Merge { driver: usize::from(driver) },
        }
    }
}

const BOTH: [usize; 2] = [0, 1];

/// Tracks the current mode and which core owns which vector unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeController {
    mode: Mode,
    switches: u64,
}

impl Default for ModeController {
    fn default() -> Self {
        ModeController { mode: Mode::Split, switches: 0 }
    }
}

impl ModeController {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn switches(&self) -> u64 {
        self.switches
    }

    /// Vector units driven by `core` in the current mode.
    pub fn owned_units(&self, core: usize) -> &'static [usize] {
        match self.mode {
            Mode::Split => &BOTH[core..=core],
            Mode::Merge { driver } if driver == core => &BOTH,
            Mode::Merge { .. } => &[],
        }
    }

    /// The core driving `unit`.
    pub fn owner(&self, unit: usize) -> usize {
        match self.mode {
            Mode::Split => unit,
            Mode::Merge { driver } => driver,
        }
    }

    /// Applies a transition. Returns `false` when `target` is already active.
    /// Idle-unit preconditions are checked by the caller.
    pub fn transition(&mut self, target: Mode) -> bool {
        if target == self.mode {
            return false;
        }
        self.mode = target;
        self.switches += 1;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ownership_follows_mode() {
        let mut m = ModeController::default();
        assert_eq!((m.owned_units(0), m.owned_units(1)), (&[0][..], &[1][..]));
        assert!(m.transition(Mode::Merge { driver: 0 }));
        assert_eq!((m.owned_units(0), m.owned_units(1)), (&[0, 1][..], &[][..]));
        assert_eq!((m.owner(0), m.owner(1)), (0, 0));
        assert!(!m.transition(Mode::Merge { driver: 0 }));
        assert!(m.transition(Mode::Merge { driver: 1 }));
        assert_eq!(m.owned_units(1), &[0, 1][..]);
        assert!(m.transition(Mode::Split));
        assert_eq!(m.switches(), 3);
    }
}

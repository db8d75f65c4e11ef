//! Event counters, the abstract energy model and run reports.

mod report;

pub use report::{
    compare_modes, fnv1a64, to_csv, to_json, ComparisonReport, ConfigEcho, CsvRow, EnergyReport, MetricsError, ReportFormat,
    RunStats,
    SCHEMA_VERSION,
};

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

macro_rules! events {
    ($($name:ident),* $(,)?) => {
        /// Countable microarchitectural events.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[allow(non_camel_case_types)]
        pub enum Event {
            $($name,)*
        }

        impl Event {
            pub const ALL: &'static [Event] = &[$(Event::$name,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Event::$name => stringify!($name),)*
                }
            }
        }

        /// One count per [`Event`].
        #[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct EventCounts {
            $(pub $name: u64,)*
        }

        impl EventCounts {
            pub fn get(&self, e: Event) -> u64 {
                match e {
                    $(Event::$name => self.$name,)*
                }
            }

            pub fn get_mut(&mut self, e: Event) -> &mut u64 {
                match e {
                    $(Event::$name => &mut self.$name,)*
                }
            }
        }

        /// Energy weight per [`Event`], in abstract units per event.
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct EnergyWeights {
            $(pub $name: f64,)*
        }

        impl EnergyWeights {
            pub fn get(&self, e: Event) -> f64 {
                match e {
                    $(Event::$name => self.$name,)*
                }
            }

            pub fn get_mut(&mut self, e: Event) -> &mut f64 {
                match e {
                    $(Event::$name => &mut self.$name,)*
                }
            }
        }

        /// Energy per [`Event`] class.
        #[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct EnergyBreakdown {
            $(pub $name: f64,)*
        }

        impl EnergyBreakdown {
            pub fn get(&self, e: Event) -> f64 {
                match e {
                    $(Event::$name => self.$name,)*
                }
            }

            fn get_mut(&mut self, e: Event) -> &mut f64 {
                match e {
                    $(Event::$name => &mut self.$name,)*
                }
            }
        }
    };
}

events! {
    ifetch_scalar,
    ifetch_vector,
    scalar_alu_op,
    scalar_mem_access,
    vector_lane_op,
    vrf_access,
    tcdm_access,
    bank_conflict_stall,
    barrier_stall_cycle,
    offload_stall_cycle,
    modeswitch_count,
    active_cycle,
    idle_cycle,
}

impl EventCounts {
    pub fn ifetch(&self) -> u64 {
        self.ifetch_scalar + self.ifetch_vector
    }

    pub fn scaled(&self, k: u64) -> EventCounts {
        let mut out = *self;
        for &e in Event::ALL {
            *out.get_mut(e) *= k;
        }
        out
    }
}

impl Add for EventCounts {
    type Output = EventCounts;

    fn add(mut self, rhs: EventCounts) -> EventCounts {
        self += rhs;
        self
    }
}

impl AddAssign for EventCounts {
    fn add_assign(&mut self, rhs: EventCounts) {
        for &e in Event::ALL {
            *self.get_mut(e) += rhs.get(e);
        }
    }
}

/// Per-core and per-unit event counts of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerfCounters {
    pub cores: [EventCounts; 2],
    pub units: [EventCounts; 2],
}

impl PerfCounters {
    pub fn total(&self) -> EventCounts {
        self.cores.iter().chain(&self.units).fold(EventCounts::default(), |acc, c| acc + *c)
    }
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            ifetch_scalar: 5.0,
            ifetch_vector: 5.0,
            scalar_alu_op: 1.0,
            scalar_mem_access: 2.0,
            vector_lane_op: 1.0,
            vrf_access: 1.0,
            tcdm_access: 2.0,
            bank_conflict_stall: 0.0,
            barrier_stall_cycle: 0.0,
            offload_stall_cycle: 0.0,
            modeswitch_count: 0.0,
            active_cycle: 0.0,
            idle_cycle: 0.0,
        }
    }
}

/// Weight table mapping events to abstract energy units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyModel {
    pub weights: EnergyWeights,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("energy weight for {event} must be a non-negative finite number, got {value}")]
pub struct InvalidWeight {
    pub event: &'static str,
    pub value: f64,
}

impl EnergyModel {
    pub fn new(weights: EnergyWeights) -> Result<Self, InvalidWeight> {
        for &e in Event::ALL {
            let value = weights.get(e);
            if !value.is_finite() || value < 0.0 {
                return Err(InvalidWeight { event: e.name(), value });
            }
        }
        Ok(EnergyModel { weights })
    }

    /// Weighted sum of `counts` with its per-event breakdown.
    pub fn energy(&self, counts: &EventCounts) -> (f64, EnergyBreakdown) {
        let mut breakdown = EnergyBreakdown::default();
        let mut total = 0.0;
        for &e in Event::ALL {
            let part = counts.get(e) as f64 * self.weights.get(e);
            *breakdown.get_mut(e) = part;
            total += part;
        }
        (total, breakdown)
    }

    /// Instruction-fetch share of the energy.
    pub fn ifetch_energy(&self, counts: &EventCounts) -> f64 {
        counts.ifetch_scalar as f64 * self.weights.ifetch_scalar
            + counts.ifetch_vector as f64 * self.weights.ifetch_vector
    }
}

/// Convenience wrapper: total energy of `counters` under `model`.
pub fn energy(counters: &PerfCounters, model: &EnergyModel) -> f64 {
    model.energy(&counters.total()).0
}

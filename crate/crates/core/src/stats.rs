//! Run statistics as JSON and as a human-readable summary.

use serde::Serialize;

use crate::pipeline::PipelineStats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub cycles: u64,
    pub instret: u64,
    /// Rounded to four decimals; `None` when nothing retired.
    pub cpi: Option<f64>,
    pub stall_cycles_fetch: u64,
    pub stall_cycles_lsu: u64,
    pub flush_count: u64,
    pub fifo_avg_occupancy: f64,
    pub fifo_occupancy_sum: u64,
    pub fill_cycles: u64,
    pub flush_bubbles: u64,
    pub serialize_cycles: u64,
    pub wfi_cycles: u64,
    pub traps: u64,
    pub interrupts: u64,
    pub misaligned_splits: u64,
    /// Value of the last write to the iteration-count register.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations_per_megacycle: Option<f64>,
}

fn round4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

/// Benchmark iterations per million cycles.
pub fn iterations_per_megacycle(iterations: u32, cycles: u64) -> Option<f64> {
    (cycles > 0).then(|| round4(iterations as f64 * 1e6 / cycles as f64))
}

impl StatsReport {
    pub fn new(stats: &PipelineStats, iterations: Option<u32>) -> Self {
        StatsReport {
            cycles: stats.cycles,
            instret: stats.instret,
            cpi: stats.cpi().map(round4),
            stall_cycles_fetch: stats.stall_cycles_fetch,
            stall_cycles_lsu: stats.stall_cycles_lsu,
            flush_count: stats.flush_count,
            fifo_avg_occupancy: round4(stats.fifo_avg_occupancy()),
            fifo_occupancy_sum: stats.fifo_occupancy_sum,
            fill_cycles: stats.fill_cycles,
            flush_bubbles: stats.flush_bubbles,
            serialize_cycles: stats.serialize_cycles,
            wfi_cycles: stats.wfi_cycles,
            traps: stats.traps,
            interrupts: stats.interrupts,
            misaligned_splits: stats.misaligned_splits,
            iterations,
            iterations_per_megacycle: iterations.and_then(|n| iterations_per_megacycle(n, stats.cycles)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    pub fn cpi_text(&self) -> String {
        self.cpi.map_or_else(|| "n/a".to_string(), |c| format!("{c:.4}"))
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "cycles {}  instret {}  cpi {}\n\
             stalls: fetch {}  lsu {}  fill {}  flush {} ({} redirects)  serialize {}  wfi {}\n\
             fifo avg occupancy {:.4}  traps {}  interrupts {}  misaligned splits {}",
            self.cycles,
            self.instret,
            self.cpi_text(),
            self.stall_cycles_fetch,
            self.stall_cycles_lsu,
            self.fill_cycles,
            self.flush_bubbles,
            self.flush_count,
            self.serialize_cycles,
            self.wfi_cycles,
            self.fifo_avg_occupancy,
            self.traps,
            self.interrupts,
            self.misaligned_splits,
        );
        if let (Some(n), Some(rate)) = (self.iterations, self.iterations_per_megacycle) {
            s.push_str(&format!("\niterations {n}  ({rate:.4} per megacycle)"));
        }
        s
    }
}

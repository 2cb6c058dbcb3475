//! Bundled self-checking assembly programs. Each one writes 0 to the exit
//! device on success, or the number of the first failing check.

use crate::arch::ArchState;
use crate::bus::{Bus, DEFAULT_ROM_BASE};
use crate::iss::{Iss, IssError, StopCondition, StopReason};
use crate::pipeline::{Core, CoreConfig, RunOutcome};
use crate::program::{assemble, LoadedImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixture {
    pub name: &'static str,
    pub source: &'static str,
}

macro_rules! fixture {
    ($name:literal) => {
        Fixture {
            name: $name,
            source: include_str!(concat!("../fixtures/", $name, ".s")),
        }
    };
}

pub const FIXTURES: [Fixture; 12] = [
    fixture!("alu"),
    fixture!("branch"),
    fixture!("memory"),
    fixture!("csr"),
    fixture!("trap"),
    fixture!("misaligned_trap"),
    fixture!("misaligned_split"),
    fixture!("bus_error"),
    fixture!("timer_irq"),
    fixture!("software_irq"),
    fixture!("fence"),
    fixture!("hello"),
];

pub fn find(name: &str) -> Option<Fixture> {
    FIXTURES.iter().copied().find(|f| f.name == name)
}

/// Value of `misaligned_trap` requested by a `# config: misaligned_trap=on|off`
/// line, if the source has one.
pub fn misaligned_trap_setting(source: &str) -> Option<bool> {
    source.lines().find_map(|l| {
        let rest = l.trim().strip_prefix('#')?.trim().strip_prefix("config:")?;
        rest.split_whitespace().find_map(|kv| match kv.split_once('=')? {
            ("misaligned_trap", "on") => Some(true),
            ("misaligned_trap", "off") => Some(false),
            _ => None,
        })
    })
}

impl Fixture {
    pub fn misaligned_trap(&self) -> bool {
        misaligned_trap_setting(self.source).unwrap_or(false)
    }

    pub fn image(&self) -> LoadedImage {
        assemble(self.source, DEFAULT_ROM_BASE)
            .unwrap_or_else(|e| panic!("fixture {}: {e}", self.name))
            .to_image()
    }

    /// `config` with the fixture's own misalignment setting applied.
    pub fn config(&self, base: CoreConfig) -> CoreConfig {
        CoreConfig {
            misaligned_trap: self.misaligned_trap(),
            ..base
        }
    }

    pub fn run_core(&self, base: CoreConfig, max_cycles: u64) -> (RunOutcome, Core) {
        let mut core = Core::with_image(self.config(base), &self.image()).expect("fixture loads");
        let outcome = core.run(max_cycles, |_| {});
        (outcome, core)
    }

    /// Run on the interpreter; returns the exit code and final state.
    pub fn run_iss(&self) -> Result<(u32, ArchState, Bus), IssError> {
        let image = self.image();
        let mut bus = Bus::new(Default::default());
        image.write_to(&mut bus).expect("fixture loads");
        let mut iss = Iss::new(image.entry, self.misaligned_trap());
        let run = iss.run_until(
            &mut bus,
            StopCondition {
                max_steps: Some(1_000_000),
                ..Default::default()
            },
        )?;
        let code = match run.reason {
            StopReason::Exit(code) => code,
            other => panic!("fixture {} stopped with {other:?}", self.name),
        };
        Ok((code, iss.state, bus))
    }
}

//! `noxsim`: run programs on the pipeline model, check it against the
//! interpreter, and run the microbenchmark suite.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use noxsim_core::bench::{self, parallel_map};
use noxsim_core::bus::{Latency, MemoryMap, RegionKind};
use noxsim_core::fixtures::{misaligned_trap_setting, FIXTURES};
use noxsim_core::lockstep::lockstep_check;
use noxsim_core::pipeline::{Core, CoreConfig, RetireEvent, RunOutcome};
use noxsim_core::program::{assemble, load_elf, load_flat, LoadedImage};
use noxsim_core::progen::{generate, GenConfig};
use noxsim_core::stats::StatsReport;

const EXIT_MAX_CYCLES: u8 = 124;
const EXIT_WFI_SLEEP: u8 = 125;
const EXIT_LOAD_ERROR: u8 = 126;
const EXIT_DIVERGENCE: u8 = 127;
/// Largest program exit value passed through unchanged.
const EXIT_VALUE_MAX: u32 = 123;

#[derive(Parser)]
#[command(name = "noxsim", version, about = "Cycle-level RV32I pipeline model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and run a program.
    Run(RunArgs),
    /// Run the microbenchmark suite and report CPI per kernel.
    Bench(BenchArgs),
    /// Check the pipeline against the interpreter on fixtures and random programs.
    Verify(VerifyArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ImageArgs {
    /// Raw binary, loaded at the reset pc (default: start of the first rom region).
    #[arg(long, value_name = "PATH")]
    bin: Option<PathBuf>,
    /// Static ELF32 RISC-V executable.
    #[arg(long, value_name = "PATH")]
    elf: Option<PathBuf>,
    /// Assembly source.
    #[arg(long, value_name = "PATH")]
    asm: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Clone)]
struct CoreArgs {
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    fifo_depth: u64,
    /// Instruction port latency in cycles [default: 0].
    #[arg(long, value_name = "N")]
    imem_latency: Option<u32>,
    /// Data port latency in cycles [default: 0].
    #[arg(long, value_name = "N")]
    dmem_latency: Option<u32>,
    /// Trap on misaligned loads/stores instead of splitting them
    /// [default: the source's `# config:` line, else off].
    #[arg(long, value_enum)]
    misaligned_trap: Option<Switch>,
    /// Start address, hex.
    #[arg(long, value_name = "HEX", value_parser = parse_hex)]
    reset_pc: Option<u32>,
    /// Draw every latency not set explicitly from 0..=4 with this seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    image: ImageArgs,
    #[command(flatten)]
    core: CoreArgs,
    #[arg(long, default_value_t = 100_000_000)]
    max_cycles: u64,
    /// Write one line per commit to PATH.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Write the statistics report as JSON to PATH.
    #[arg(long, value_name = "PATH")]
    stats: Option<PathBuf>,
    /// Shadow every commit with the interpreter and stop at the first mismatch.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    core: CoreArgs,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random programs to generate.
    #[arg(long, default_value_t = 100)]
    programs: u64,
    /// Instructions per random program.
    #[arg(long, default_value_t = 1000)]
    length: usize,
    /// First random program seed.
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn parse_hex(s: &str) -> Result<u32, String> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    u32::from_str_radix(&digits.replace('_', ""), 16).map_err(|e| e.to_string())
}

fn memory_map() -> Result<MemoryMap> {
    match std::env::var("NOXSIM_MAP") {
        Ok(text) => MemoryMap::parse(&text).context("NOXSIM_MAP"),
        Err(_) => Ok(MemoryMap::default()),
    }
}

fn rom_base(map: &MemoryMap) -> Result<u32> {
    let region = map
        .first_of(RegionKind::Rom)
        .or_else(|| map.first_of(RegionKind::Ram))
        .context("memory map has no rom or ram region")?;
    Ok(region.base)
}

impl CoreArgs {
    fn config(&self, map: MemoryMap, source: Option<&str>) -> CoreConfig {
        let latency = |explicit: Option<u32>| match (explicit, self.seed) {
            (Some(n), _) => Latency::Fixed(n),
            (None, Some(_)) => Latency::Uniform { min: 0, max: 4 },
            (None, None) => Latency::Fixed(0),
        };
        let misaligned_trap = match self.misaligned_trap {
            Some(s) => matches!(s, Switch::On),
            None => source.and_then(misaligned_trap_setting).unwrap_or(false),
        };
        CoreConfig {
            fifo_depth: self.fifo_depth as usize,
            misaligned_trap,
            imem_latency: latency(self.imem_latency),
            dmem_latency: latency(self.dmem_latency),
            map,
            seed: self.seed.unwrap_or(0),
            ..CoreConfig::default()
        }
    }
}

/// Read and load the selected image; also returns assembly source text.
fn load_image(args: &ImageArgs, map: &MemoryMap, reset_pc: Option<u32>) -> Result<(LoadedImage, Option<String>)> {
    let read = |p: &Path| std::fs::read(p).with_context(|| format!("reading {}", p.display()));
    let base = match reset_pc {
        Some(pc) => pc,
        None => rom_base(map)?,
    };
    let mut image = if let Some(p) = &args.bin {
        (load_flat(&read(p)?, base, map)?, None)
    } else if let Some(p) = &args.elf {
        (load_elf(&read(p)?, map)?, None)
    } else if let Some(p) = &args.asm {
        let source = String::from_utf8(read(p)?).with_context(|| format!("{} is not UTF-8", p.display()))?;
        let program = assemble(&source, base).with_context(|| format!("assembling {}", p.display()))?;
        let image = program.to_image();
        image.validate(map)?;
        (image, Some(source))
    } else {
        bail!("no image given");
    };
    if let Some(pc) = reset_pc {
        image.0.entry = pc;
    }
    Ok(image)
}

fn trace_text(ev: &RetireEvent) -> String {
    match ev.interrupt {
        Some(cause) => format!("C{} {:08x} -------- interrupt {}", ev.cycle, ev.pc, cause.code()),
        None => ev.trace_line(),
    }
}

fn exit_value(code: u32) -> u8 {
    code.min(EXIT_VALUE_MAX) as u8
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let map = memory_map()?;
    let (image, source) = match load_image(&args.image, &map, args.core.reset_pc) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("noxsim: {e:#}");
            return Ok(ExitCode::from(EXIT_LOAD_ERROR));
        }
    };
    let config = args.core.config(map, source.as_deref());
    let mut core = match Core::with_image(config, &image) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("noxsim: {e}");
            return Ok(ExitCode::from(EXIT_LOAD_ERROR));
        }
    };
    let mut trace = match &args.trace {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };
    let stdout = io::stdout();

    let outcome = if args.verify {
        if trace.is_some() {
            eprintln!("noxsim: --trace is ignored with --verify");
        }
        match lockstep_check(&mut core, args.max_cycles) {
            Ok(report) => {
                eprintln!("lockstep: ok, {} commits matched", report.events);
                report.outcome
            }
            Err(d) => {
                stdout.lock().write_all(&core.bus_mut().take_console())?;
                eprintln!("lockstep: {d}");
                return Ok(ExitCode::from(EXIT_DIVERGENCE));
            }
        }
    } else {
        // Run in slices so console output appears while the program runs.
        let mut io_error = None;
        let outcome = loop {
            let limit = (core.cycle() + 100_000).min(args.max_cycles);
            let outcome = core.run(limit, |ev| {
                if let Some(t) = trace.as_mut() {
                    if let Err(e) = writeln!(t, "{}", trace_text(ev)) {
                        io_error.get_or_insert(e);
                    }
                }
            });
            let out = core.bus_mut().take_console();
            if !out.is_empty() {
                let mut lock = stdout.lock();
                lock.write_all(&out)?;
                lock.flush()?;
            }
            if outcome != RunOutcome::MaxCycles || core.cycle() >= args.max_cycles {
                break outcome;
            }
        };
        if let Some(e) = io_error {
            return Err(e).context("writing trace");
        }
        outcome
    };
    stdout.lock().write_all(&core.bus_mut().take_console())?;
    if let Some(t) = trace.as_mut() {
        t.flush()?;
    }

    let report = StatsReport::new(core.stats(), core.bus().iterations());
    if let Some(p) = &args.stats {
        std::fs::write(p, report.to_json() + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    eprintln!("{}", report.summary());
    let code = match outcome {
        RunOutcome::Exit(v) => {
            eprintln!("exit: value {v}");
            exit_value(v)
        }
        RunOutcome::Ebreak => {
            eprintln!("exit: ebreak");
            0
        }
        RunOutcome::MaxCycles => {
            eprintln!("exit: cycle limit {} reached", args.max_cycles);
            EXIT_MAX_CYCLES
        }
        RunOutcome::WfiSleep => {
            eprintln!("exit: asleep in WFI with no interrupt source enabled");
            EXIT_WFI_SLEEP
        }
    };
    Ok(ExitCode::from(code))
}

fn bench_cmd(args: BenchArgs) -> Result<ExitCode> {
    let config = args.core.config(memory_map()?, None);
    println!("{:<18} {:>8} {:>8} {:>8}", "kernel", "cycles", "instret", "cpi");
    for r in bench::run_suite(&config, args.jobs) {
        let cpi = r.stats.cpi().map_or("n/a".into(), |c| format!("{c:.4}"));
        println!("{:<18} {:>8} {:>8} {:>8}", r.name, r.stats.cycles, r.stats.instret, cpi);
    }
    println!();
    let mut ok = true;
    for c in bench::check_claims(args.jobs) {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn verify_cmd(args: VerifyArgs) -> Result<ExitCode> {
    let latencies = [
        Latency::Fixed(0),
        Latency::Fixed(1),
        Latency::Fixed(3),
        Latency::Uniform { min: 0, max: 4 },
    ];
    let configs: Vec<(Latency, usize)> = latencies.iter().flat_map(|&l| [1, 2, 4].map(|d| (l, d))).collect();
    let config = |lat, depth, seed| CoreConfig {
        fifo_depth: depth,
        imem_latency: lat,
        dmem_latency: lat,
        seed,
        ..CoreConfig::default()
    };

    let mut failures = Vec::new();
    let mut runs = 0;
    for f in FIXTURES {
        for (k, &(lat, depth)) in configs.iter().enumerate() {
            let mut core = Core::with_image(f.config(config(lat, depth, k as u64)), &f.image())?;
            runs += 1;
            match lockstep_check(&mut core, 10_000_000) {
                Ok(r) if r.outcome == RunOutcome::Exit(0) => {}
                Ok(r) => failures.push(format!("fixture {} {lat:?} depth {depth}: {:?}", f.name, r.outcome)),
                Err(d) => failures.push(format!("fixture {} {lat:?} depth {depth}: {d}", f.name)),
            }
        }
    }
    let seeds: Vec<u64> = (args.first_seed..args.first_seed + args.programs).collect();
    let gen = GenConfig {
        length: args.length,
        timer_interrupt: true,
    };
    let random = parallel_map(&seeds, args.jobs, |&seed| {
        let image = generate(seed, &gen);
        let mut out = Vec::new();
        for (k, &(lat, depth)) in configs.iter().enumerate() {
            let c = CoreConfig {
                misaligned_trap: seed % 2 == 1,
                ..config(lat, depth, seed * 16 + k as u64)
            };
            let mut core = Core::with_image(c, &image).expect("generated image loads");
            match lockstep_check(&mut core, 10_000_000) {
                Ok(r) if r.outcome == RunOutcome::Exit(0) => {}
                Ok(r) => out.push(format!("seed {seed} {lat:?} depth {depth}: {:?}", r.outcome)),
                Err(d) => out.push(format!("seed {seed} {lat:?} depth {depth}: {d}")),
            }
        }
        out
    });
    runs += seeds.len() * configs.len();
    failures.extend(random.into_iter().flatten());
    for f in &failures {
        eprintln!("{f}");
    }
    println!("verify: {runs} runs, {} divergences", failures.len());
    Ok(if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_DIVERGENCE)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Verify(a) => verify_cmd(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("noxsim: {e:#}");
        ExitCode::from(EXIT_LOAD_ERROR)
    })
}

//! Synthetic microbenchmarks: dependency chains, branches and memory
//! traffic. Each kernel is generated assembly that ends by writing 0 to the
//! exit device.

use std::fmt::Write;
use std::thread;

use crate::bus::{Latency, DEFAULT_EXIT_BASE, DEFAULT_RAM_BASE, DEFAULT_ROM_BASE};
use crate::pipeline::{Core, CoreConfig, PipelineStats, RunOutcome};
use crate::program::assemble;

/// Repetitions of the measured instruction group in every kernel.
pub const KERNEL_LENGTH: usize = 1000;

/// Latencies swept by the monotonicity and load-latency checks.
pub const LATENCY_SWEEP: [u32; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel {
    pub name: &'static str,
    pub source: String,
}

fn kernel(name: &'static str, prelude: &str, body: impl Fn(usize) -> String) -> Kernel {
    let mut source = String::from(prelude);
    for i in 0..KERNEL_LENGTH {
        writeln!(source, "    {}", body(i)).unwrap();
    }
    writeln!(source, "    li x31, {DEFAULT_EXIT_BASE:#x}\n    sw x0, 0(x31)").unwrap();
    Kernel { name, source }
}

fn ram_prelude() -> String {
    format!("    li x1, {DEFAULT_RAM_BASE:#x}\n    li x2, 3\n    sw x2, 0(x1)\n")
}

/// A dependent ADD chain: every instruction reads the previous result.
pub fn add_dependent() -> Kernel {
    kernel("add-dependent", "    li x2, 1\n", |_| "add x1, x1, x2".into())
}

/// The same number of ADDs with no dependencies between neighbours.
pub fn add_independent() -> Kernel {
    kernel("add-independent", "    li x2, 1\n", |i| format!("add x{}, x2, x2", 3 + i % 20))
}

pub fn branch_taken() -> Kernel {
    kernel("branch-taken", "", |_| "beq x0, x0, 4".into())
}

pub fn branch_not_taken() -> Kernel {
    kernel("branch-not-taken", "", |_| "bne x0, x0, 4".into())
}

/// Loads whose result feeds the very next instruction.
pub fn load_use() -> Kernel {
    kernel("load-use", &ram_prelude(), |_| "lw x3, 0(x1)\n    add x4, x3, x3".into())
}

/// The same loads followed by an ALU op that does not use the loaded value.
pub fn load_independent() -> Kernel {
    kernel("load-independent", &ram_prelude(), |_| "lw x3, 0(x1)\n    add x4, x2, x2".into())
}

/// Back-to-back loads.
pub fn load_dense() -> Kernel {
    kernel("load-dense", &ram_prelude(), |i| format!("lw x{}, {}(x1)", 3 + i % 8, 4 * (i % 64)))
}

/// Mixed ALU, load/store and branch traffic.
pub fn mixed() -> Kernel {
    kernel("mixed", &ram_prelude(), |i| match i % 5 {
        0 => format!("addi x{}, x2, {}", 3 + i % 8, i % 100),
        1 => format!("lw x{}, {}(x1)", 3 + i % 8, 4 * (i % 32)),
        2 => format!("sw x{}, {}(x1)", 3 + i % 8, 4 * (i % 32)),
        3 => "bne x2, x0, 4".into(),
        _ => format!("xor x{}, x{}, x2", 3 + i % 8, 3 + (i + 3) % 8),
    })
}

/// Every kernel in the suite, in report order.
pub fn kernels() -> Vec<Kernel> {
    vec![
        add_dependent(),
        add_independent(),
        branch_taken(),
        branch_not_taken(),
        load_use(),
        load_independent(),
        load_dense(),
        mixed(),
    ]
}

/// Run one kernel to completion.
pub fn measure(kernel: &Kernel, config: &CoreConfig) -> PipelineStats {
    let program = assemble(&kernel.source, DEFAULT_ROM_BASE)
        .unwrap_or_else(|e| panic!("kernel {}: {e}", kernel.name));
    let mut core = Core::with_image(config.clone(), &program.to_image()).expect("kernel loads");
    let outcome = core.run(10_000_000, |_| {});
    assert_eq!(outcome, RunOutcome::Exit(0), "kernel {}", kernel.name);
    *core.stats()
}

/// Map `f` over `items` using up to `jobs` threads, preserving order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    let chunk = items.len().div_ceil(jobs).max(1);
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelResult {
    pub name: &'static str,
    pub stats: PipelineStats,
}

/// Run every kernel under `config`.
pub fn run_suite(config: &CoreConfig, jobs: usize) -> Vec<KernelResult> {
    let ks = kernels();
    let stats = parallel_map(&ks, jobs, |k| measure(k, config));
    ks.iter()
        .zip(stats)
        .map(|(k, stats)| KernelResult { name: k.name, stats })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn with_latency(imem: u32, dmem: u32) -> CoreConfig {
    CoreConfig {
        imem_latency: Latency::Fixed(imem),
        dmem_latency: Latency::Fixed(dmem),
        ..CoreConfig::default()
    }
}

/// Exact timing properties checked on the suite.
pub fn check_claims(jobs: usize) -> Vec<Claim> {
    let zero = with_latency(0, 0);
    let n = KERNEL_LENGTH as u64;
    let mut claims = Vec::new();

    let base = parallel_map(
        &[add_dependent(), add_independent(), branch_taken(), branch_not_taken(), load_use(), load_independent()],
        jobs,
        |k| measure(k, &zero),
    );
    let (dep, ind, taken, not_taken, lu, li) = (base[0], base[1], base[2], base[3], base[4], base[5]);
    claims.push(Claim {
        name: "bypass: dependent chain matches independent stream",
        passed: dep.cycles == ind.cycles,
        detail: format!("{} vs {} cycles", dep.cycles, ind.cycles),
    });
    let penalty = taken.cycles.checked_sub(not_taken.cycles);
    claims.push(Claim {
        name: "taken-branch penalty is 2 cycles",
        passed: penalty == Some(2 * n) && taken.flush_count == n,
        detail: format!(
            "{} taken vs {} not-taken cycles over {n} branches",
            taken.cycles, not_taken.cycles
        ),
    });
    claims.push(Claim {
        name: "load-use penalty is 0 at dmem latency 0",
        passed: lu.cycles == li.cycles,
        detail: format!("{} vs {} cycles", lu.cycles, li.cycles),
    });
    let branch_free = [dep, ind, li, lu];
    claims.push(Claim {
        name: "no fetch or lsu stalls at latency 0",
        passed: branch_free.iter().all(|s| s.stall_cycles_fetch == 0 && s.stall_cycles_lsu == 0),
        detail: format!(
            "fetch {:?} lsu {:?}",
            branch_free.map(|s| s.stall_cycles_fetch),
            branch_free.map(|s| s.stall_cycles_lsu)
        ),
    });

    let dense = load_dense();
    let dense_runs = parallel_map(&LATENCY_SWEEP, jobs, |&l| measure(&dense, &with_latency(0, l)));
    // Every memory access in the kernel, the final store included, waits L cycles.
    let accesses = n + 2;
    let mut exact = true;
    let mut detail = String::new();
    for (&l, s) in LATENCY_SWEEP.iter().zip(&dense_runs) {
        let expected = dense_runs[0].cycles + l as u64 * accesses;
        exact &= s.cycles == expected && s.stall_cycles_lsu == l as u64 * accesses && s.accounting_holds();
        write!(detail, "L{l}={} ", s.cycles).unwrap();
    }
    claims.push(Claim {
        name: "dmem latency L adds L cycles per access",
        passed: exact,
        detail: detail.trim_end().to_string(),
    });

    let mix = mixed();
    let imem_runs = parallel_map(&LATENCY_SWEEP, jobs, |&l| measure(&mix, &with_latency(l, 0)));
    let cpis: Vec<f64> = imem_runs.iter().map(|s| s.cpi().unwrap_or(0.0)).collect();
    claims.push(Claim {
        name: "cpi non-decreasing in imem latency",
        passed: imem_runs.windows(2).all(|w| w[0].cycles <= w[1].cycles && w[0].instret == w[1].instret),
        detail: cpis.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>().join(" "),
    });
    claims
}

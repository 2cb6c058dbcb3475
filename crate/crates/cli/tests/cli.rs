use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn noxsim() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_noxsim"));
    c.env_remove("NOXSIM_MAP");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(format!("{name}.s"))
}

/// A scratch file unique to this test process and `name`.
fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("noxsim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const EXIT: &str = "li x31, 0x10000004\n";

#[test]
fn hello_prints_ok() {
    let out = noxsim().args(["run", "--asm"]).arg(fixture("hello")).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(out.stdout, b"OK");
}

#[test]
fn cycle_limit_exit_and_stats() {
    let src = scratch("loop.s", "loop: j loop\n");
    let stats = scratch("loop.json", "");
    let out = noxsim()
        .args(["run", "--max-cycles", "1000", "--stats"])
        .arg(&stats)
        .arg("--asm")
        .arg(&src)
        .output()
        .unwrap();
    assert_eq!(code(&out), 124);
    let json = std::fs::read_to_string(&stats).unwrap();
    assert!(json.contains("\"cycles\": 1000,"), "{json}");
    for key in ["instret", "cpi", "stall_cycles_fetch", "stall_cycles_lsu", "flush_count", "fifo_avg_occupancy"] {
        assert!(json.contains(&format!("\"{key}\"")), "{key} missing from {json}");
    }
}

#[test]
fn verify_flag_on_every_fixture() {
    for entry in std::fs::read_dir(fixture("hello").parent().unwrap()).unwrap() {
        let path = entry.unwrap().path();
        let out = noxsim()
            .args(["run", "--verify", "--imem-latency", "2", "--dmem-latency", "1", "--asm"])
            .arg(&path)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}: {}", path.display(), stderr(&out));
        assert!(stderr(&out).contains("lockstep: ok"), "{}", path.display());
    }
}

#[test]
fn exit_values() {
    let cases = [("7", 7), ("123", 123), ("200", 123), ("0", 0)];
    for (value, expected) in cases {
        let src = scratch(&format!("exit{value}.s"), &format!("{EXIT}li x1, {value}\nsw x1, 0(x31)\n"));
        let out = noxsim().args(["run", "--asm"]).arg(&src).output().unwrap();
        assert_eq!(code(&out), expected, "{value}");
        assert!(stderr(&out).contains(&format!("exit: value {value}")));
    }
    let src = scratch("ebreak.s", "ebreak\n");
    assert_eq!(code(&noxsim().args(["run", "--asm"]).arg(&src).output().unwrap()), 0);
}

#[test]
fn wfi_without_interrupt_source() {
    let src = scratch("sleep.s", "wfi\nloop: j loop\n");
    let out = noxsim().args(["run", "--asm"]).arg(&src).output().unwrap();
    assert_eq!(code(&out), 125, "{}", stderr(&out));
}

#[test]
fn load_errors() {
    let missing = noxsim().args(["run", "--asm", "/nonexistent/x.s"]).output().unwrap();
    assert_eq!(code(&missing), 126);
    let bad = scratch("bad.s", "frobnicate x1\n");
    let out = noxsim().args(["run", "--asm"]).arg(&bad).output().unwrap();
    assert_eq!(code(&out), 126);
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
    let not_elf = scratch("not.elf", "hello");
    assert_eq!(code(&noxsim().args(["run", "--elf"]).arg(&not_elf).output().unwrap()), 126);
}

#[test]
fn usage_errors() {
    assert_eq!(code(&noxsim().args(["run"]).output().unwrap()), 2);
    let both = noxsim().args(["run", "--asm", "a.s", "--bin", "b.bin"]).output().unwrap();
    assert_eq!(code(&both), 2);
    let bad = noxsim().args(["run", "--asm", "a.s", "--misaligned-trap", "maybe"]).output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn trace_format_is_stable() {
    let src = scratch("trace.s", &format!("addi x1, x0, 5\nadd x2, x1, x1\n{EXIT}sw x0, 0(x31)\n"));
    let run = |name: &str| {
        let trace = scratch(name, "");
        let out = noxsim().args(["run", "--seed", "9", "--trace"]).arg(&trace).arg("--asm").arg(&src).output().unwrap();
        assert_eq!(code(&out), 0);
        std::fs::read_to_string(trace).unwrap()
    };
    let a = run("a.trace");
    assert_eq!(a, run("b.trace"));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with('C'));
    assert!(lines[0].ends_with(" 80000000 00500093 addi x1, x0, 5 x1=00000005"), "{}", lines[0]);
    assert!(lines[1].ends_with(" 80000004 00108133 add x2, x1, x1 x2=0000000a"), "{}", lines[1]);
    assert!(lines[4].ends_with("sw x0, 0(x31)"), "{}", lines[4]);
}

#[test]
fn binary_image_and_reset_pc() {
    // addi x1,x0,3 ; lui x31,0x10000 ; sw x1,4(x31)
    let words: [u32; 3] = [0x0030_0093, 0x1000_0fb7, 0x001f_a223];
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
    let dir = std::env::temp_dir().join(format!("noxsim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("prog.bin");
    std::fs::write(&path, bytes).unwrap();
    let out = noxsim().args(["run", "--bin"]).arg(&path).output().unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let out = noxsim().args(["run", "--reset-pc", "80400000", "--bin"]).arg(&path).output().unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn memory_map_from_environment() {
    let map = "rom:0x20000000:0x10000:rom\nram:0x20010000:0x10000:ram\nconsole:0x10000000:4:console\nexit:0x10000004:8:exit\n";
    let src = scratch("mapped.s", &format!("auipc x1, 0\nsrli x1, x1, 28\n{EXIT}sw x1, 0(x31)\n"));
    let out = noxsim().env("NOXSIM_MAP", map).args(["run", "--asm"]).arg(&src).output().unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = noxsim().env("NOXSIM_MAP", "rom:zero:1:rom").args(["run", "--asm"]).arg(&src).output().unwrap();
    assert_eq!(code(&out), 126);
}

#[test]
fn misaligned_trap_flag_and_header() {
    // A misaligned store whose trap handler exits with 9.
    let body = format!(
        "la x1, handler\ncsrw mtvec, x1\nli x2, 0x80400001\nsw x0, 0(x2)\n{EXIT}sw x0, 0(x31)\nhandler:\n{EXIT}li x3, 9\nsw x3, 0(x31)\n"
    );
    let plain = scratch("mis.s", &body);
    let header = scratch("mis_on.s", &format!("# config: misaligned_trap=on\n{body}"));
    let run = |p: &Path, extra: &[&str]| code(&noxsim().arg("run").args(extra).arg("--asm").arg(p).output().unwrap());
    assert_eq!(run(&plain, &[]), 0);
    assert_eq!(run(&plain, &["--misaligned-trap", "on"]), 9);
    assert_eq!(run(&header, &[]), 9);
    assert_eq!(run(&header, &["--misaligned-trap", "off"]), 0);
}

#[test]
fn bench_reports_every_kernel() {
    let out = noxsim().args(["bench", "--jobs", "2"]).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    for k in ["add-dependent", "branch-taken", "load-use", "load-dense", "mixed"] {
        assert!(text.contains(k), "{k} missing:\n{text}");
    }
    assert!(!text.contains("FAIL"), "{text}");
}

#[test]
fn verify_subcommand() {
    let out = noxsim().args(["verify", "--programs", "3", "--length", "200"]).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 divergences"));
}

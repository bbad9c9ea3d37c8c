//! CLI contract tests: exit codes, seed precedence, and the documented
//! stdout of the worked examples.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_contagion")
}

fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(bin())
        .args(args)
        .env_remove("CONTAGION_SEED")
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn chain_files(dir: &Path) -> (PathBuf, PathBuf) {
    let liabilities = dir.join("liabilities.csv");
    write(
        &liabilities,
        "debtor_id,creditor_id,amount\nA,B,10\nB,C,10\n",
    );
    let externals = dir.join("externals.csv");
    write(&externals, "bank_id,external_assets\nA,5\nB,2\nC,1\n");
    (liabilities, externals)
}

#[test]
fn clearing_chain_prints_payment_vector() {
    let dir = tempfile::tempdir().unwrap();
    let (liabilities, externals) = chain_files(dir.path());
    let config = dir.path().join("clearing.cfg");
    write(
        &config,
        &format!(
            "engine = clearing\nnetwork.kind = loaded\n\
             input.liabilities = {}\ninput.externals = {}\n\
             run.seed = 1\noutput.dir = {}\n",
            liabilities.display(),
            externals.display(),
            dir.path().join("out").display()
        ),
    );
    let output = run(["clearing", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("p = (5, 7, 0)"), "stdout was: {stdout}");
    assert!(dir.path().join("out/clearing.csv").exists());
    assert!(dir.path().join("out/config.resolved.cfg").exists());
}

#[test]
fn unknown_subcommand_exits_one() {
    let output = run(["frobnicate"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let output = run(["--help"]);
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8(output.stdout).unwrap();
    for sub in [
        "generate",
        "simulate-interbank",
        "clearing",
        "simulate-firesale",
        "rank",
        "intervene",
        "sweep",
    ] {
        assert!(stdout.contains(sub), "--help must list `{sub}`");
    }
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // Unknown config key.
    let config = dir.path().join("bad.cfg");
    write(
        &config,
        &format!(
            "engine = interbank\nnetwork.kind = generated-interbank\n\
         netgen.n_banks = 10\nnetgen.avg_degree = 2\nnetgen.capital_ratio = 0.04\n\
         netgen.interbank_fraction = 0.2\nnetgen.typo_key = 1\nrun.seed = 1\n\
         sweep.kind = degree\nsweep.values = 1\noutput.dir = {}\n",
            dir.path().join("out_typo").display()
        ),
    );
    let output = run(["sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("typo_key"), "stderr was: {stderr}");

    // Engine mismatch between config and subcommand.
    let mismatched = dir.path().join("mismatch.cfg");
    write(
        &mismatched,
        &format!(
            "engine = firesale\nnetwork.kind = generated-interbank\n\
             netgen.n_banks = 10\nnetgen.avg_degree = 2\nnetgen.capital_ratio = 0.04\n\
             netgen.interbank_fraction = 0.2\nrun.seed = 1\noutput.dir = {}\n",
            dir.path().join("out_mismatch").display()
        ),
    );
    let output = run([
        "simulate-interbank",
        "--config",
        mismatched.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));

    // Missing config file is a validation problem too.
    let output = run(["sweep", "--config", "/nonexistent/x.cfg"]);
    assert_ne!(output.status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gen.cfg");
    write(
        &config,
        "engine = interbank\nnetwork.kind = generated-interbank\n\
         netgen.n_banks = 5\nnetgen.avg_degree = 1\nnetgen.capital_ratio = 0.04\n\
         netgen.interbank_fraction = 0.2\nrun.seed = 1\n",
    );
    let output = run([
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        "/proc/no-such-dir/out",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn seed_precedence_flag_env_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.cfg");
    write(
        &config,
        "engine = interbank\nnetwork.kind = generated-interbank\n\
         netgen.n_banks = 50\nnetgen.avg_degree = 2\nnetgen.capital_ratio = 0.04\n\
         netgen.interbank_fraction = 0.2\nrun.seed = 1\nrun.trials = 10\n\
         sweep.kind = degree\nsweep.values = 2,3\n",
    );
    let sweep_bytes = |out: &Path| std::fs::read(out.join("sweep.csv")).unwrap();

    // Env var overrides the file seed.
    let out_env = dir.path().join("out_env");
    let status = Command::new(bin())
        .args(["sweep", "--config", config.to_str().unwrap(), "--out"])
        .arg(&out_env)
        .env("CONTAGION_SEED", "77")
        .output()
        .unwrap();
    assert!(status.status.success());

    // Flag gives the same bytes as the env var when values agree...
    let out_flag = dir.path().join("out_flag");
    let output = run([
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "77",
        "--out",
        out_flag.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert_eq!(sweep_bytes(&out_env), sweep_bytes(&out_flag));

    // ...and the flag beats the env var.
    let out_both = dir.path().join("out_both");
    let status = Command::new(bin())
        .args([
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "77",
            "--out",
        ])
        .arg(&out_both)
        .env("CONTAGION_SEED", "12345")
        .output()
        .unwrap();
    assert!(status.status.success());
    assert_eq!(sweep_bytes(&out_flag), sweep_bytes(&out_both));

    // File seed alone differs from seed 77.
    let out_file = dir.path().join("out_file");
    let output = run([
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert_ne!(sweep_bytes(&out_file), sweep_bytes(&out_flag));
}

#[test]
fn generate_then_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gen_config = dir.path().join("gen.cfg");
    let net_dir = dir.path().join("net");
    write(
        &gen_config,
        &format!(
            "engine = firesale\nnetwork.kind = generated-bipartite\n\
             netgen.n_banks = 12\nnetgen.n_assets = 4\nnetgen.bank_avg_degree = 2\n\
             netgen.capital_ratio = 0.08\nnetgen.depth_factor = 0.5\n\
             run.seed = 5\noutput.dir = {}\n",
            net_dir.display()
        ),
    );
    let output = run(["generate", "--config", gen_config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0));

    // Run a fire-sale scenario on the files we just wrote.
    let sim_config = dir.path().join("sim.cfg");
    write(
        &sim_config,
        &format!(
            "engine = firesale\nnetwork.kind = loaded\n\
             input.banks = {net}/banks.csv\ninput.holdings = {net}/holdings.csv\n\
             input.assets = {net}/assets.csv\n\
             shock.kind = random-asset\nshock.haircut = 0.5\n\
             run.seed = 5\nrun.trials = 4\noutput.dir = {out}\n",
            net = net_dir.display(),
            out = dir.path().join("sim").display()
        ),
    );
    let output = run([
        "simulate-firesale",
        "--config",
        sim_config.to_str().unwrap(),
    ]);
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let scenarios = std::fs::read_to_string(dir.path().join("sim/scenarios.csv")).unwrap();
    assert_eq!(scenarios.lines().count(), 2 + 4); // version + header + 4 trials
}

#[test]
fn rank_command_writes_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("rank.cfg");
    write(
        &config,
        &format!(
            "engine = intervene\nnetwork.kind = synthetic-eba\nrank.basis = overlap\n\
             run.seed = 2\noutput.dir = {}\n",
            dir.path().join("out").display()
        ),
    );
    let output = run(["rank", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0));
    let ranking = std::fs::read_to_string(dir.path().join("out/ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 2 + 90); // version + header + 90 banks
    assert!(ranking
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("rank,id,score,basis"));
}

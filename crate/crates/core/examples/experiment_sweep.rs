//! Runs the turnpike sweep from a JSON config and writes its CSV/JSON
//! artifacts into a temporary directory.

use mfg_torus::experiments::{parse_config_str, run_turnpike, write_report, CheckStatus};

fn main() -> mfg_torus::Result<()> {
    let cfg = parse_config_str(r#"{"grid": {"n": 64}, "model": "standard", "t_list": [6, 9]}"#)?;
    let report = run_turnpike(&cfg, 2)?;
    for c in &report.checks {
        println!("{:?} {}: {}", c.status, c.name, c.detail);
    }
    let dir = std::env::temp_dir().join("mfg-turnpike-example");
    for f in write_report(&report, &cfg, &dir)? {
        println!("wrote {}", f.display());
    }
    assert!(report.checks.iter().all(|c| c.status != CheckStatus::Fail));
    Ok(())
}

use clap::Args;
use metaseg_core::gradcheck::{run_gradcheck, GradcheckConfig};
use metaseg_core::tensor::Precision;

use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::{parse_precision, Globals};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "f64", value_parser = parse_precision)]
    pub precision: Precision,
    /// Parameter coordinates to sample.
    #[arg(long, default_value_t = 100)]
    pub coords: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Adds this offset to one analytic gradient entry (negative control).
    #[arg(long, hide = true)]
    pub inject_error: Option<f64>,
}

pub fn gradcheck(g: &Globals, args: GradcheckArgs) -> Result<()> {
    if !(args.eps > 0.0 && args.eps.is_finite()) || args.coords == 0 {
        return Err(CliError::Usage("--eps must be positive and --coords at least 1".into()));
    }
    let cfg = GradcheckConfig {
        precision: args.precision,
        coords: args.coords,
        eps: args.eps,
        seed: g.seed_or(0),
        ..GradcheckConfig::default()
    };
    let report = run_gradcheck(&cfg, args.inject_error)?;
    for f in report.failures() {
        println!(
            "FAIL {} [{}]: analytic {:e}, numeric {:e}, rel err {:e}",
            f.param, f.coord, f.analytic, f.numeric, f.rel_err
        );
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "gradcheck {}: {} coordinates, max rel err {:.3e}, tolerance {:e}: {verdict}",
        args.precision,
        report.checks.len(),
        report.max_rel_err,
        report.tolerance
    );
    if let Some(out) = &g.out {
        let mut m = RunManifest::new("gradcheck", &serde_json::json!({ "config": &cfg, "inject_error": args.inject_error }));
        m.seed("master", cfg.seed);
        m.write(out, "gradcheck.json", serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
        m.save(out)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::GradcheckFailed)
    }
}

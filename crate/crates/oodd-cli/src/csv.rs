//! CSV emission with fixed schemas. All files use UTF-8, `\n` newlines and
//! the decimal point; identical results serialize to identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use oodd::error::{Error, Result};

use crate::experiment::ExperimentResult;

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Shortest round-trip decimal form of a float ("NaN" for missing values).
fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes samples.csv, summary.csv, rmse.csv and deviation.csv into `dir`.
/// Empty sections still produce their header line.
pub fn write_csv(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let mut samples = String::from(
        "variant,p,sample,seed,iterations,converged,energy_error,setup_s,solve_s\n",
    );
    for row in &result.samples {
        writeln!(
            samples,
            "{},{},{},{},{},{},{},{:.6},{:.6}",
            row.variant,
            num(row.p),
            row.sample,
            row.seed,
            row.iterations,
            row.converged,
            num(row.energy_error),
            row.setup_s,
            row.solve_s
        )
        .expect("writing to a String cannot fail");
    }
    write_file(dir, "samples.csv", &samples)?;

    let mut summary =
        String::from("variant,p,mean_iters,std_iters,n_outliers,convergence_fraction\n");
    for row in &result.summaries {
        writeln!(
            summary,
            "{},{},{},{},{},{}",
            row.variant,
            num(row.p),
            num(row.mean_iters),
            num(row.std_iters),
            row.n_outliers,
            num(row.convergence_fraction)
        )
        .expect("writing to a String cannot fail");
    }
    write_file(dir, "summary.csv", &summary)?;

    let mut rmse = String::from("variant,p,iteration,rmse\n");
    for row in &result.rmse {
        writeln!(
            rmse,
            "{},{},{},{}",
            row.variant,
            num(row.p),
            row.iteration,
            num(row.rmse)
        )
        .expect("writing to a String cannot fail");
    }
    write_file(dir, "rmse.csv", &rmse)?;

    let mut deviation = String::from("p,variant,rel_deviation_rmse\n");
    for row in &result.deviations {
        writeln!(
            deviation,
            "{},{},{}",
            num(row.p),
            row.variant,
            num(row.rel_deviation_rmse)
        )
        .expect("writing to a String cannot fail");
    }
    write_file(dir, "deviation.csv", &deviation)?;

    Ok(())
}

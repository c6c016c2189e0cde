//! Subcommand dispatch and exit-code policy: 0 on success, 2 on usage or
//! configuration errors, 1 on runtime failures.

use std::path::{Path, PathBuf};

use oodd::analysis::break_even;
use oodd::error::Error;
use oodd::precond::{build_reference_dictionary, variants, ReferenceDictionary};

use crate::config::{parse_flags, ExperimentConfig};
use crate::csv::write_csv;
use crate::experiment::{
    compare_operators, load_cost_model, run_experiment, spectrum_study,
};
use crate::svg::emit_plots;

pub const USAGE: &str = "\
usage: oodd <command> [--flag value ...]

commands:
  run                solve the Monte-Carlo study and write CSV/SVG results
  compare-operators  measure operator deviation of the approximate variants
  spectrum           dense spectral verification of one realization per p
  break-even         evaluate break-even sample counts from a cost file
  cache              build or refresh the offline dictionary cache file

flags (run, compare-operators, spectrum, cache):
  --h F --H F --eps F     mesh widths, fractions allowed (default 1/64 1/8 1/16)
  --model NAME            erasure|lshape|shifted|custom (default erasure)
  --mask-file PATH        cell-mask file for model=custom
  --alpha F --beta F      coefficient bounds (default 1 100)
  --p LIST                comma-separated defect probabilities (default 0.02,0.06,0.10)
  --samples N             Monte-Carlo samples per probability (default 50)
  --seed N                base seed (default 7)
  --tol F                 PCG relative residual tolerance (default 1e-6)
  --maxit N               PCG iteration cap (default 200)
  --variants LIST         subset of direct,nd,oo (default all three)
  --nd-coarse MODE        frozen|exact coarse operator for nd (default frozen)
  --out DIR               output directory (default results)
  --timing MODE           off|measured wall times in samples.csv (default off)
  --cache PATH            dictionary cache file, reused when the key matches
  --deviation-vectors N   random test vectors per sample (default 1)
  --config PATH           key=value file mirroring the flag names

break-even flags:
  --cost PATH             key=value file with t_patch, t_comb, t_pcg, n_ref,
                          n_patches, k_direct, k_nd, k_oo
";

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn parse_or_exit(args: &[String]) -> Result<ExperimentConfig, i32> {
    match parse_flags(args) {
        Ok(cfg) => Ok(cfg),
        Err(err) => {
            eprintln!("error: {err}");
            eprintln!("{USAGE}");
            Err(2)
        }
    }
}

fn run_command(cfg: &ExperimentConfig) -> Result<(), Error> {
    let result = run_experiment(cfg)?;
    write_csv(&result, &cfg.out_dir)?;
    emit_plots(&result, &cfg.out_dir)?;
    println!("offline phase: {:.3} s", result.offline_s);
    println!("variant       p    mean_iters  std_iters  converged");
    for s in &result.summaries {
        println!(
            "{:<8} {:>6}  {:>10.2}  {:>9.2}  {:>8.2}",
            s.variant, s.p, s.mean_iters, s.std_iters, s.convergence_fraction
        );
    }
    println!("results written to {}", cfg.out_dir.display());
    Ok(())
}

fn compare_command(cfg: &ExperimentConfig) -> Result<(), Error> {
    let result = compare_operators(cfg)?;
    write_csv(&result, &cfg.out_dir)?;
    emit_plots(&result, &cfg.out_dir)?;
    println!("p       variant  rel_deviation_rmse");
    for d in &result.deviations {
        println!("{:<7} {:<8} {}", d.p, d.variant, d.rel_deviation_rmse);
    }
    println!("results written to {}", cfg.out_dir.display());
    Ok(())
}

fn spectrum_command(cfg: &ExperimentConfig) -> Result<(), Error> {
    let rows = spectrum_study(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| Error::Io {
        path: cfg.out_dir.display().to_string(),
        source,
    })?;
    let mut csv = String::from(
        "p,seed,c1_hat,c2_hat,lambda_min,lambda_max,eta,kappa,bound_applicable,containment_ok,kappa_bound_ok\n",
    );
    println!("p       C1        C2        lmin(P~)  lmax(P~)  eta       kappa     checks");
    for r in &rows {
        if r.c1_hat.is_nan() {
            println!(
                "{:<7} (beyond the dense guard: power-iteration eta only) eta={:.3e}",
                r.p, r.eta
            );
        } else {
            println!(
                "{:<7} {:<9.4} {:<9.4} {:<9.4} {:<9.4} {:<9.3e} {:<9.4} containment={} kappa_bound={}",
                r.p,
                r.c1_hat,
                r.c2_hat,
                r.lambda_min,
                r.lambda_max,
                r.eta,
                r.kappa,
                r.containment_ok,
                if r.bound_applicable {
                    r.kappa_bound_ok.to_string()
                } else {
                    "n/a".to_string()
                }
            );
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.p,
            r.seed,
            r.c1_hat,
            r.c2_hat,
            r.lambda_min,
            r.lambda_max,
            r.eta,
            r.kappa,
            r.bound_applicable,
            r.containment_ok,
            r.kappa_bound_ok
        ));
    }
    let path = cfg.out_dir.join("spectrum.csv");
    std::fs::write(&path, csv).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    println!("spectrum report written to {}", path.display());
    Ok(())
}

fn break_even_command(args: &[String]) -> i32 {
    let mut cost_path: Option<PathBuf> = None;
    let mut i = 0;
    while i < args.len() {
        match args[i].as_str() {
            "--cost" => {
                if let Some(value) = args.get(i + 1) {
                    cost_path = Some(PathBuf::from(value));
                } else {
                    eprintln!("error: --cost is missing its value");
                    return 2;
                }
                i += 2;
            }
            other => {
                eprintln!("error: unknown break-even flag '{other}'");
                eprintln!("{USAGE}");
                return 2;
            }
        }
    }
    let Some(path) = cost_path else {
        eprintln!("error: break-even requires --cost FILE");
        return 2;
    };
    let model = match load_cost_model(&path) {
        Ok(m) => m,
        Err(err) => {
            eprintln!("error: {err}");
            return exit_code(&err);
        }
    };
    match break_even(&model) {
        Ok(report) => {
            let show = |label: &str, value: Option<f64>| match value {
                Some(v) => println!("break-even vs {label}: {v} samples"),
                None => println!("break-even vs {label}: never"),
            };
            show("direct", report.vs_direct);
            show("nd", report.vs_nd);
            0
        }
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn cache_command(cfg: &ExperimentConfig) -> Result<(), Error> {
    let path: &Path = cfg
        .cache
        .as_deref()
        .ok_or_else(|| Error::Config("cache requires --cache FILE".to_string()))?;
    let hier = cfg.validate()?;
    let model = match cfg.geometry {
        oodd::coefficient::Geometry::Custom => {
            let mask = cfg
                .mask_file
                .as_ref()
                .ok_or_else(|| Error::Config("model=custom requires --mask-file".to_string()))?;
            let (resolution, background, defect) = oodd::coefficient::load_mask_file(mask)?;
            oodd::coefficient::model_from_masks(
                background,
                defect,
                cfg.alpha,
                cfg.beta,
                cfg.eps,
                resolution,
            )?
        }
        geometry => oodd::coefficient::build_model(
            geometry,
            cfg.alpha,
            cfg.beta,
            cfg.eps,
            hier.cell_resolution(),
        )?,
    };
    if path.exists() {
        if let Ok(existing) = ReferenceDictionary::load(path) {
            if existing.matches(&model, &hier) {
                println!(
                    "cache {} is up to date ({} reference factors)",
                    path.display(),
                    existing.n_ref() + 1
                );
                return Ok(());
            }
        }
    }
    let dict = build_reference_dictionary(&model, &hier)?;
    dict.save(path)?;
    println!(
        "cache {} written ({} reference factors of dimension {})",
        path.display(),
        dict.n_ref() + 1,
        dict.patch_dim()
    );
    Ok(())
}

/// Entry point shared by the binary and the test suite. `args` excludes the
/// program name.
pub fn cli_main(args: &[String]) -> i32 {
    let Some(command) = args.first() else {
        eprintln!("{USAGE}");
        return 2;
    };
    let rest = &args[1..];
    match command.as_str() {
        "run" | "compare-operators" | "spectrum" | "cache" => {
            let cfg = match parse_or_exit(rest) {
                Ok(cfg) => cfg,
                Err(code) => return code,
            };
            let outcome = match command.as_str() {
                "run" => run_command(&cfg),
                "compare-operators" => compare_command(&cfg),
                "spectrum" => spectrum_command(&cfg),
                _ => cache_command(&cfg),
            };
            match outcome {
                Ok(()) => 0,
                Err(err) => {
                    eprintln!("error: {err}");
                    exit_code(&err)
                }
            }
        }
        "break-even" => break_even_command(rest),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            println!("registered variants:");
            for (name, summary) in variant_summaries() {
                println!("  {name:<8} {summary}");
            }
            0
        }
        other => {
            eprintln!("error: unknown command '{other}'");
            eprintln!("{USAGE}");
            2
        }
    }
}

/// Lists the registered preconditioner variants for usage messages.
pub fn variant_summaries() -> Vec<(&'static str, &'static str)> {
    variants().iter().map(|v| (v.name(), v.summary())).collect()
}

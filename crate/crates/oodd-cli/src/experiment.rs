//! Monte-Carlo experiment driver: for each defect probability and sample,
//! draw a realization, assemble the fine system, build each requested
//! preconditioner variant, and solve by PCG against a direct reference
//! solution. Samples run concurrently; all outputs are deterministic in the
//! configuration.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use oodd::analysis::{
    check_stability_bounds, estimate_eta, operator_deviation, spectrum, EtaMode, OperatorSpectrum,
};
use oodd::coefficient::{
    build_model, load_mask_file, model_from_masks, rasterize, sample_realization,
    CoefficientModel, Geometry,
};
use oodd::error::{Error, Result};
use oodd::mesh::{assemble_load, assemble_stiffness, MeshHierarchy, MeshLevel};
use oodd::patches::{build_patches, Patch};
use oodd::pcg::{pcg_with_policy, rmse_energy_curves, IndefinitePolicy, PcgReport};
use oodd::precond::{
    build_preconditioner, build_reference_dictionary, BuildContext, ReferenceDictionary,
};
use oodd::rng::mix;
use oodd::sparse::{factorize_spd, solve_spd};

use crate::config::ExperimentConfig;
use crate::stats::iteration_stats;

/// One (variant, p, sample) cell of the experiment.
#[derive(Clone, Debug)]
pub struct SampleRow {
    pub variant: &'static str,
    pub p: f64,
    pub sample: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub energy_error: f64,
    pub setup_s: f64,
    pub solve_s: f64,
    pub failed: bool,
    pub energy_history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub variant: &'static str,
    pub p: f64,
    pub mean_iters: f64,
    pub std_iters: f64,
    pub n_outliers: usize,
    pub convergence_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct RmseRow {
    pub variant: &'static str,
    pub p: f64,
    pub iteration: usize,
    pub rmse: f64,
}

#[derive(Clone, Debug)]
pub struct DeviationRow {
    pub p: f64,
    pub variant: &'static str,
    pub rel_deviation_rmse: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentResult {
    pub samples: Vec<SampleRow>,
    pub summaries: Vec<SummaryRow>,
    pub rmse: Vec<RmseRow>,
    pub deviations: Vec<DeviationRow>,
    pub offline_s: f64,
}

/// Spectral verification record of one realization.
#[derive(Clone, Debug)]
pub struct SpectrumRow {
    pub p: f64,
    pub seed: u64,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub eta: f64,
    pub kappa: f64,
    pub bound_applicable: bool,
    pub containment_ok: bool,
    pub kappa_bound_ok: bool,
}

/// Offline state shared across all samples of one configuration.
pub struct Workbench {
    pub hier: MeshHierarchy,
    pub model: CoefficientModel,
    pub patches: Vec<Patch>,
    pub dict: Arc<ReferenceDictionary>,
    pub load: Vec<f64>,
    pub offline_s: f64,
}

/// Per-sample seeds: splitmix64 of (base_seed + sample index).
pub fn sample_seed(base_seed: u64, sample: usize) -> u64 {
    mix(base_seed.wrapping_add(sample as u64))
}

fn build_configured_model(cfg: &ExperimentConfig, hier: &MeshHierarchy) -> Result<CoefficientModel> {
    match cfg.geometry {
        Geometry::Custom => {
            let path = cfg
                .mask_file
                .as_ref()
                .ok_or_else(|| Error::Config("model=custom requires --mask-file".to_string()))?;
            let (resolution, background, defect) = load_mask_file(path)?;
            if resolution != hier.cell_resolution() {
                return Err(Error::Config(format!(
                    "mask resolution {resolution} does not match eps/h = {}",
                    hier.cell_resolution()
                )));
            }
            model_from_masks(background, defect, cfg.alpha, cfg.beta, cfg.eps, resolution)
        }
        geometry => build_model(geometry, cfg.alpha, cfg.beta, cfg.eps, hier.cell_resolution()),
    }
}

/// Runs the offline phase once: geometry, patches, dictionary (optionally
/// through the cache file), and the load vector.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Workbench> {
    let hier = cfg.validate()?;
    let model = build_configured_model(cfg, &hier)?;
    let patches = build_patches(&hier);

    let offline_start = Instant::now();
    let mut loaded_from_cache = false;
    let dict = match &cfg.cache {
        Some(path) if path.exists() => {
            let loaded = ReferenceDictionary::load(path)?;
            if loaded.matches(&model, &hier) {
                loaded_from_cache = true;
                loaded
            } else {
                let built = build_reference_dictionary(&model, &hier)?;
                built.save(path)?;
                built
            }
        }
        Some(path) => {
            let built = build_reference_dictionary(&model, &hier)?;
            built.save(path)?;
            built
        }
        None => build_reference_dictionary(&model, &hier)?,
    };
    let offline_s = if loaded_from_cache {
        0.0
    } else {
        offline_start.elapsed().as_secs_f64()
    };

    let pi = std::f64::consts::PI;
    let load = assemble_load(|x, y| (pi * x).sin() * (pi * y).sin(), &hier);
    Ok(Workbench {
        hier,
        model,
        patches,
        dict: Arc::new(dict),
        load,
        offline_s,
    })
}

fn failed_row(variant: &'static str, p: f64, sample: usize, seed: u64) -> SampleRow {
    SampleRow {
        variant,
        p,
        sample,
        seed,
        iterations: 0,
        converged: false,
        energy_error: f64::NAN,
        setup_s: 0.0,
        solve_s: 0.0,
        failed: true,
        energy_history: Vec::new(),
    }
}

fn run_sample(
    cfg: &ExperimentConfig,
    bench: &Workbench,
    variants: &[&'static str],
    p: f64,
    sample: usize,
) -> Vec<SampleRow> {
    let seed = sample_seed(cfg.base_seed, sample);
    let prepared = (|| -> Result<_> {
        let realization = sample_realization(&bench.model, &bench.hier, p, seed)?;
        let field = rasterize(&bench.model, &realization, &bench.hier)?;
        let k = assemble_stiffness(MeshLevel::Fine, &field, &bench.hier)?;
        let k_factor = factorize_spd(&k)?;
        let reference = solve_spd(&k_factor, &bench.load)?;
        Ok((realization, field, k, reference))
    })();
    let (realization, field, k, reference) = match prepared {
        Ok(parts) => parts,
        Err(_) => {
            return variants
                .iter()
                .map(|v| failed_row(v, p, sample, seed))
                .collect();
        }
    };

    variants
        .iter()
        .map(|&variant| {
            let ctx = BuildContext {
                model: &bench.model,
                realization: &realization,
                hier: &bench.hier,
                field: &field,
                patches: &bench.patches,
                dictionary: Some(bench.dict.clone()),
                nd_coarse: cfg.nd_coarse,
            };
            let setup_start = Instant::now();
            let precond = match build_preconditioner(variant, &ctx) {
                Ok(p) => p,
                Err(_) => return failed_row(variant, p, sample, seed),
            };
            let setup_s = setup_start.elapsed().as_secs_f64();
            let solve_start = Instant::now();
            // The reference solver this study mirrors runs CG without a
            // positivity check on <z, r>, so the driver opts into the same
            // semantics; the strict default stays available on `pcg`.
            let report = match pcg_with_policy(
                &k,
                &bench.load,
                |r| precond.apply(r).expect("dimensions fixed at build time"),
                cfg.tol,
                cfg.maxit,
                None,
                Some(&reference),
                IndefinitePolicy::Continue,
            ) {
                Ok(report) => report,
                Err(_) => return failed_row(variant, p, sample, seed),
            };
            let solve_s = solve_start.elapsed().as_secs_f64();
            let energy_history = report.energy_error_history.unwrap_or_default();
            SampleRow {
                variant,
                p,
                sample,
                seed,
                iterations: report.iterations,
                converged: report.converged,
                energy_error: energy_history.last().copied().unwrap_or(f64::NAN),
                setup_s: if cfg.timing { setup_s } else { 0.0 },
                solve_s: if cfg.timing { solve_s } else { 0.0 },
                failed: false,
                energy_history,
            }
        })
        .collect()
}

fn resolve_variants(cfg: &ExperimentConfig) -> Result<Vec<&'static str>> {
    cfg.variants
        .iter()
        .map(|name| {
            oodd::precond::lookup(name)
                .map(|v| v.name())
                .ok_or_else(|| Error::Config(format!("unknown variant '{name}'")))
        })
        .collect()
}

fn sort_key(row: &SampleRow) -> (&'static str, u64, usize) {
    (row.variant, row.p.to_bits(), row.sample)
}

/// Runs the full Monte-Carlo study for every (variant, p, sample) cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let bench = prepare(cfg)?;
    let variants = resolve_variants(cfg)?;

    let mut samples: Vec<SampleRow> = Vec::new();
    for &p in &cfg.p_values {
        let mut rows: Vec<SampleRow> = (0..cfg.n_samples)
            .into_par_iter()
            .map(|s| run_sample(cfg, &bench, &variants, p, s))
            .flatten()
            .collect();
        samples.append(&mut rows);
    }
    samples.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));

    let mut summaries = Vec::new();
    let mut rmse = Vec::new();
    for &variant in &variants {
        for &p in &cfg.p_values {
            let cell: Vec<&SampleRow> = samples
                .iter()
                .filter(|r| r.variant == variant && r.p == p)
                .collect();
            let converged: Vec<f64> = cell
                .iter()
                .filter(|r| r.converged)
                .map(|r| r.iterations as f64)
                .collect();
            let fraction = converged.len() as f64 / cell.len() as f64;
            let (mean, std, outliers) = match iteration_stats(&converged) {
                Ok(stats) => (stats.mean, stats.std, stats.n_outliers),
                Err(_) => (f64::NAN, f64::NAN, 0),
            };
            summaries.push(SummaryRow {
                variant,
                p,
                mean_iters: mean,
                std_iters: std,
                n_outliers: outliers,
                convergence_fraction: fraction,
            });

            let reports: Vec<PcgReport> = cell
                .iter()
                .filter(|r| !r.failed && !r.energy_history.is_empty())
                .map(|r| PcgReport {
                    converged: r.converged,
                    iterations: r.iterations,
                    residual_history: Vec::new(),
                    energy_error_history: Some(r.energy_history.clone()),
                    final_x: Vec::new(),
                })
                .collect();
            if let Ok(curve) = rmse_energy_curves(&reports) {
                for (iteration, value) in curve.into_iter().enumerate() {
                    rmse.push(RmseRow {
                        variant,
                        p,
                        iteration,
                        rmse: value,
                    });
                }
            }
        }
    }

    let mut sorted_summaries = summaries;
    sorted_summaries.sort_by(|a, b| (a.variant, a.p.to_bits()).cmp(&(b.variant, b.p.to_bits())));
    let mut sorted_rmse = rmse;
    sorted_rmse.sort_by(|a, b| {
        (a.variant, a.p.to_bits(), a.iteration).cmp(&(b.variant, b.p.to_bits(), b.iteration))
    });

    Ok(ExperimentResult {
        samples,
        summaries: sorted_summaries,
        rmse: sorted_rmse,
        deviations: Vec::new(),
        offline_s: bench.offline_s,
    })
}

/// Operator-deviation study: per sample, the relative deviation of each
/// approximate variant from the exact one on random test vectors, reported
/// as the RMSE across samples.
pub fn compare_operators(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let bench = prepare(cfg)?;
    let variants = resolve_variants(cfg)?;
    let approximations: Vec<&'static str> =
        variants.iter().copied().filter(|v| *v != "direct").collect();
    if approximations.is_empty() {
        return Err(Error::Config(
            "compare-operators needs at least one non-direct variant".to_string(),
        ));
    }

    let mut deviations = Vec::new();
    for &p in &cfg.p_values {
        let per_sample: Vec<Result<Vec<(usize, f64)>>> = (0..cfg.n_samples)
            .into_par_iter()
            .map(|s| -> Result<Vec<(usize, f64)>> {
                let seed = sample_seed(cfg.base_seed, s);
                let realization = sample_realization(&bench.model, &bench.hier, p, seed)?;
                let field = rasterize(&bench.model, &realization, &bench.hier)?;
                let ctx = BuildContext {
                    model: &bench.model,
                    realization: &realization,
                    hier: &bench.hier,
                    field: &field,
                    patches: &bench.patches,
                    dictionary: Some(bench.dict.clone()),
                    nd_coarse: cfg.nd_coarse,
                };
                let exact = build_preconditioner("direct", &ctx)?;
                let mut per_variant = Vec::with_capacity(approximations.len());
                for (idx, name) in approximations.iter().enumerate() {
                    let approx = build_preconditioner(name, &ctx)?;
                    let dev = operator_deviation(
                        |r| exact.apply(r).expect("dimensions fixed"),
                        |r| approx.apply(r).expect("dimensions fixed"),
                        bench.hier.fine_dof_count(),
                        cfg.deviation_vectors,
                        mix(seed ^ 0xd1ff),
                    )?;
                    per_variant.push((idx, dev));
                }
                Ok(per_variant)
            })
            .collect();

        let mut sum_sq = vec![0.0f64; approximations.len()];
        let mut count = 0usize;
        for sample in per_sample {
            let sample = sample?;
            for (idx, dev) in sample {
                sum_sq[idx] += dev * dev;
            }
            count += 1;
        }
        for (idx, &name) in approximations.iter().enumerate() {
            deviations.push(DeviationRow {
                p,
                variant: name,
                rel_deviation_rmse: (sum_sq[idx] / count as f64).sqrt(),
            });
        }
    }
    deviations.sort_by(|a, b| (a.p.to_bits(), a.variant).cmp(&(b.p.to_bits(), b.variant)));

    Ok(ExperimentResult {
        samples: Vec::new(),
        summaries: Vec::new(),
        rmse: Vec::new(),
        deviations,
        offline_s: bench.offline_s,
    })
}

/// Spectral verification on the first realization of each p: dense spectra
/// of the exact and offline-online preconditioned operators with the
/// containment checks at desk scale; beyond the dense guard only the
/// perturbation constant is estimated, by power iteration.
pub fn spectrum_study(cfg: &ExperimentConfig) -> Result<Vec<SpectrumRow>> {
    let bench = prepare(cfg)?;
    let dense = bench.hier.fine_dof_count() <= oodd::sparse::dense::DENSE_EIG_LIMIT;
    let mut rows = Vec::new();
    for &p in &cfg.p_values {
        let seed = sample_seed(cfg.base_seed, 0);
        let realization = sample_realization(&bench.model, &bench.hier, p, seed)?;
        let field = rasterize(&bench.model, &realization, &bench.hier)?;
        let k = assemble_stiffness(MeshLevel::Fine, &field, &bench.hier)?;
        let ctx = BuildContext {
            model: &bench.model,
            realization: &realization,
            hier: &bench.hier,
            field: &field,
            patches: &bench.patches,
            dictionary: Some(bench.dict.clone()),
            nd_coarse: cfg.nd_coarse,
        };
        let exact = build_preconditioner("direct", &ctx)?;
        let approx = build_preconditioner("oo", &ctx)?;
        if !dense {
            let eta = estimate_eta(
                &k,
                |r| exact.apply(r).expect("dims fixed"),
                |r| approx.apply(r).expect("dims fixed"),
                EtaMode::Iterative,
            )?;
            rows.push(SpectrumRow {
                p,
                seed,
                c1_hat: f64::NAN,
                c2_hat: f64::NAN,
                lambda_min: f64::NAN,
                lambda_max: f64::NAN,
                eta,
                kappa: f64::NAN,
                bound_applicable: false,
                containment_ok: true,
                kappa_bound_ok: true,
            });
            continue;
        }
        let exact_spec: OperatorSpectrum = spectrum(&k, |r| exact.apply(r).expect("dims fixed"))?;
        let tilde_spec = spectrum(&k, |r| approx.apply(r).expect("dims fixed"))?;
        let eta = estimate_eta(
            &k,
            |r| exact.apply(r).expect("dims fixed"),
            |r| approx.apply(r).expect("dims fixed"),
            EtaMode::Dense,
        )?;
        let check = check_stability_bounds(&exact_spec, &tilde_spec, eta);
        rows.push(SpectrumRow {
            p,
            seed,
            c1_hat: exact_spec.lambda_min,
            c2_hat: exact_spec.lambda_max,
            lambda_min: tilde_spec.lambda_min,
            lambda_max: tilde_spec.lambda_max,
            eta,
            kappa: tilde_spec.lambda_max / tilde_spec.lambda_min,
            bound_applicable: check.applicable,
            containment_ok: check.lower_ok && check.upper_ok,
            kappa_bound_ok: check.kappa_bound_ok.unwrap_or(true),
        });
    }
    Ok(rows)
}

/// Reads the break-even cost model from a key=value file.
pub fn load_cost_model(path: &Path) -> Result<oodd::analysis::CostModel> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut t_patch = None;
    let mut t_comb = None;
    let mut t_pcg = None;
    let mut n_ref = None;
    let mut n_patches = None;
    let mut k_direct = None;
    let mut k_nd = None;
    let mut k_oo = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{line}'")))?;
        let value = value.trim();
        let parse = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad number '{value}' for {key}")))
        };
        match key.trim() {
            "t_patch" => t_patch = Some(parse()?),
            "t_comb" => t_comb = Some(parse()?),
            "t_pcg" => t_pcg = Some(parse()?),
            "n_ref" => n_ref = Some(parse()? as usize),
            "n_patches" => n_patches = Some(parse()? as usize),
            "k_direct" => k_direct = Some(parse()?),
            "k_nd" => k_nd = Some(parse()?),
            "k_oo" => k_oo = Some(parse()?),
            other => return Err(Error::Config(format!("unknown cost key '{other}'"))),
        }
    }
    let missing = |what: &str| Error::Config(format!("cost file is missing {what}"));
    Ok(oodd::analysis::CostModel {
        t_patch: t_patch.ok_or_else(|| missing("t_patch"))?,
        t_comb: t_comb.ok_or_else(|| missing("t_comb"))?,
        t_pcg: t_pcg.ok_or_else(|| missing("t_pcg"))?,
        n_ref: n_ref.ok_or_else(|| missing("n_ref"))?,
        n_patches: n_patches.ok_or_else(|| missing("n_patches"))?,
        k_direct: k_direct.ok_or_else(|| missing("k_direct"))?,
        k_nd: k_nd.ok_or_else(|| missing("k_nd"))?,
        k_oo: k_oo.ok_or_else(|| missing("k_oo"))?,
    })
}

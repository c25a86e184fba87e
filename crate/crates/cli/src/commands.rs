use anyhow::{Context, Result};
use rand::seq::index::sample as sample_indices;
use serde::Serialize;
use wdam::embeddings::{
    generate_synthetic_vocabulary, load_vocabulary, word_retrieval_experiment, word_rows_table,
    write_vocabulary,
};
use wdam::experiments::{
    beta_sweep_table, convergence_table, energy_grid_table, linspace, patterns_1d_table,
    phi_grid_table, phi_layout_bank, run_beta_sweep, run_convergence, run_energy_grid_1d,
    run_noncommuting_convergence, run_phi_grid_2d, sample_1d_bank, BankSpec,
};
use wdam::io::{load_bank, load_query, read_json, trace_table, BankFile, Manifest, QueryFile, TraceFile};
use wdam::rng::{derive_seed, seeded};
use wdam::sampling::{
    perturb_spectral, perturb_to_distance, sample_commuting_family_with, sample_noncommuting_bank,
    EigenSampler,
};
use wdam::theory::{
    basin_radius, capacity_bound, check_assumptions, iterations_for_eps, kappa, one_step_error_bound,
};
use wdam::{
    retrieve, CapacityInputs, ExperimentConfig, ExperimentKind, MemoryBank, PerturbSpec,
    SpdMatrix, SphereConfig,
};

use crate::args::*;
use crate::output::{emit, usage, Output};

/// Runs the subcommand and returns the process exit code.
pub fn run(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    let (output, code) = match &cli.command {
        Command::Sample(a) => (sample(a, g.seed)?, 0),
        Command::Perturb(a) => (perturb(a, g.seed)?, 0),
        Command::Retrieve(a) => (retrieve_cmd(a, g)?, 0),
        Command::Check(a) => check(a, g)?,
        Command::Bounds { which } => (bounds(which)?, 0),
        Command::EnergyGrid(a) => (energy_grid(a, g.seed)?, 0),
        Command::PhiGrid(a) => (phi_grid(a, g.seed)?, 0),
        Command::Convergence(a) => (convergence(a, g)?, 0),
        Command::BetaSweep(a) => (beta_sweep(a, g)?, 0),
        Command::Embed { which } => (embed(which, g.seed)?, 0),
    };
    emit(g, output)?;
    Ok(code)
}

fn bank_json(bank: &MemoryBank) -> Result<Output> {
    Output::json(&BankFile::from_bank(bank)?)
}

fn sample(a: &SampleArgs, seed: u64) -> Result<Output> {
    let mut rng = seeded(seed);
    let bank = match a.kind {
        BankKind::Commuting => {
            let (Some(lo), Some(hi)) = (a.lambda_min, a.lambda_max) else {
                return Err(usage("commuting banks need --lambda-min and --lambda-max"));
            };
            let mut cfg = SphereConfig::centered(a.dim, a.n, lo, hi, seed);
            if let Some(r) = a.radius {
                cfg.radius_r = r;
            }
            let sampler = match a.sampler {
                SamplerArg::Rejection => EigenSampler::Rejection,
                SamplerArg::HitAndRun => EigenSampler::HitAndRun { burn_in: a.burn_in },
            };
            MemoryBank::from_family(sample_commuting_family_with(&cfg, sampler, &mut rng)?, a.beta)?
        }
        BankKind::Noncommuting => {
            let r = a.radius.unwrap_or((2.0 * a.dim as f64).sqrt());
            MemoryBank::new(sample_noncommuting_bank(a.dim, a.n, r, &mut rng)?, a.beta)?
        }
    };
    bank_json(&bank)
}

fn load(path: &std::path::Path) -> Result<MemoryBank> {
    load_bank(path).with_context(|| format!("reading bank {}", path.display()))
}

fn perturb(a: &PerturbArgs, seed: u64) -> Result<Output> {
    let bank = load(&a.bank)?;
    if a.pattern >= bank.len() {
        return Err(usage(format!("pattern {} out of range (bank has {})", a.pattern, bank.len())));
    }
    let mut spec = PerturbSpec::new(a.radius, seed);
    spec.mean_budget_fraction = a.mean_fraction;
    let mut rng = seeded(seed);
    let q = match bank.family() {
        Some(f) => f.materialize(&perturb_spectral(&f.spectral(a.pattern), &spec, &mut rng)?)?,
        None => perturb_to_distance(&bank.pattern(a.pattern)?, &spec, &mut rng)?,
    };
    Output::json(&QueryFile::from_measure(&q))
}

fn retrieve_cmd(a: &RetrieveArgs, g: &Global) -> Result<Output> {
    let bank = load(&a.bank)?;
    let query = load_query(&a.query).with_context(|| format!("reading query {}", a.query.display()))?;
    let target = match a.target {
        Some(i) if i >= bank.len() => return Err(usage(format!("target {i} out of range"))),
        Some(i) => Some(bank.pattern(i)?),
        None => None,
    };
    let trace = retrieve(&bank, &query, a.max_iters, a.tol, target.as_ref())?;
    match g.format {
        Some(Format::Json) => Output::json(&TraceFile::from(&trace)),
        _ => Ok(Output::table(trace_table(&trace))),
    }
}

/// The report goes out either way; a failed assumption sets exit code 2.
fn check(a: &CheckArgs, g: &Global) -> Result<(Output, u8)> {
    let bank = load(&a.bank)?;
    let report = check_assumptions(&bank)?;
    let code = if report.holds() { 0 } else { 2 };
    let out = match g.format {
        Some(Format::Csv) => {
            let mut t = wdam::io::Table::new(["pattern", "delta", "separation_ok"]);
            for (i, (d, ok)) in report.delta_per_pattern.iter().zip(&report.separation_ok).enumerate() {
                t.push(vec![i.to_string(), wdam::io::fmt_f64(*d), ok.to_string()]);
            }
            Output::table(t)
        }
        _ => Output::json(&report)?,
    };
    Ok((out, code))
}

#[derive(Serialize)]
struct KappaOut {
    beta: f64,
    n: usize,
    m_w: f64,
    kappa: f64,
    contractive: bool,
}

#[derive(Serialize)]
struct ItersOut {
    eps: f64,
    beta: f64,
    n: usize,
    m_w: f64,
    r_basin: f64,
    kappa: f64,
    iterations: u64,
}

#[derive(Serialize)]
struct OneStepOut {
    beta: f64,
    n: usize,
    r_basin: f64,
    bound: f64,
}

fn stats(s: &StatsArgs) -> Result<(f64, usize, f64)> {
    if let Some(p) = &s.bank {
        let b = load(p)?;
        return Ok((b.beta(), b.len(), b.m_w()));
    }
    match (s.beta, s.n, s.m_w) {
        (Some(b), Some(n), Some(m)) => Ok((b, n, m)),
        _ => Err(usage("give --bank or all of --beta, --n, --m-w")),
    }
}

fn bounds(which: &BoundsCommand) -> Result<Output> {
    match which {
        BoundsCommand::Capacity {
            dim,
            p,
            gamma,
            lambda_min,
            lambda_max,
        } => {
            let inputs = match (gamma, lambda_min, lambda_max) {
                (Some(g), None, None) => CapacityInputs::from_gamma(*dim, *p, *g)?,
                (None, Some(lo), Some(hi)) => CapacityInputs::new(*dim, *p, *lo, *hi)?,
                _ => return Err(usage("give --gamma or both --lambda-min and --lambda-max")),
            };
            Output::json(&capacity_bound(&inputs)?)
        }
        BoundsCommand::Kappa(s) => {
            let (beta, n, m_w) = stats(s)?;
            let k = kappa(beta, n, m_w);
            Output::json(&KappaOut {
                beta,
                n,
                m_w,
                kappa: k,
                contractive: k < 1.0,
            })
        }
        BoundsCommand::Iters { eps, stats: s } => {
            let (beta, n, m_w) = stats(s)?;
            Output::json(&ItersOut {
                eps: *eps,
                beta,
                n,
                m_w,
                r_basin: basin_radius(beta, n),
                kappa: kappa(beta, n, m_w),
                iterations: iterations_for_eps(*eps, beta, n, m_w)?,
            })
        }
        BoundsCommand::OneStep { beta, n } => Output::json(&OneStepOut {
            beta: *beta,
            n: *n,
            r_basin: basin_radius(*beta, *n),
            bound: one_step_error_bound(*beta, *n),
        }),
    }
}

fn energy_grid(a: &EnergyGridArgs, seed: u64) -> Result<Output> {
    let bank = match &a.bank {
        Some(p) => {
            let b = load(p)?;
            match a.beta {
                Some(beta) => b.with_beta(beta)?,
                None => b,
            }
        }
        None => sample_1d_bank(a.patterns, a.beta.unwrap_or(10.0), &mut seeded(seed))?,
    };
    let grid = run_energy_grid_1d(
        &bank,
        (a.mu_range[0], a.mu_range[1]),
        (a.sigma_range[0], a.sigma_range[1]),
        (a.grid[0], a.grid[1]),
    )?;
    Ok(Output::Table {
        table: energy_grid_table(&grid),
        sidecars: vec![("patterns", patterns_1d_table(&bank)?)],
        manifest: Some(Manifest::new(ExperimentKind::EnergyGrid1d.name(), seed, a)?),
    })
}

fn phi_grid(a: &PhiGridArgs, seed: u64) -> Result<Output> {
    let beta = a.beta.unwrap_or(1.0);
    let bank = match &a.bank {
        Some(p) => {
            let b = load(p)?;
            match a.beta {
                Some(beta) => b.with_beta(beta)?,
                None => b,
            }
        }
        None => phi_layout_bank(beta)?,
    };
    let axis = linspace(a.range[0], a.range[1], a.grid);
    let cov = SpdMatrix::from_diagonal(&[a.query_var; 2])?;
    let rows = run_phi_grid_2d(&bank, &axis, &axis, &cov)?;
    let mut patterns = wdam::io::Table::new(["pattern", "mu_x", "mu_y", "c_xx", "c_xy", "c_yy"]);
    for (i, p) in bank.patterns()?.iter().enumerate() {
        let c = p.cov().matrix();
        patterns.push(
            std::iter::once(i.to_string())
                .chain([p.mean()[0], p.mean()[1], c[(0, 0)], c[(0, 1)], c[(1, 1)]].map(wdam::io::fmt_f64))
                .collect(),
        );
    }
    Ok(Output::Table {
        table: phi_grid_table(&rows, bank.len()),
        sidecars: vec![("patterns", patterns)],
        manifest: Some(Manifest::new(ExperimentKind::PhiGrid2d.name(), seed, a)?),
    })
}

fn apply_overrides(c: &mut ExperimentConfig, o: &Overrides) -> Result<()> {
    match &mut c.bank {
        BankSpec::Commuting(s) => {
            let dim = o.dim.unwrap_or(s.dim);
            let n = o.n.unwrap_or(s.n);
            if dim != s.dim {
                *s = SphereConfig::centered(dim, n, s.lambda_min, s.lambda_max, s.seed);
            }
            s.n = n;
        }
        BankSpec::Noncommuting { dim, n, radius_r } => {
            if let Some(d) = o.dim {
                *dim = d;
                *radius_r = (2.0 * d as f64).sqrt();
            }
            *n = o.n.unwrap_or(*n);
        }
        BankSpec::SphericalVocabulary { dim, n } => {
            *dim = o.dim.unwrap_or(*dim);
            *n = o.n.unwrap_or(*n);
        }
    }
    if let Some(b) = &o.beta {
        c.beta_values = b.clone();
    }
    if let Some(f) = o.fraction {
        c.fraction_perturbed = f;
    }
    if let Some(m) = o.max_iters {
        c.max_iters = m;
    }
    if let Some(t) = o.tol {
        c.tol = t;
    }
    Ok(())
}

fn base_config(path: &Option<std::path::PathBuf>, default: ExperimentConfig) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(read_json(p).with_context(|| format!("reading config {}", p.display()))?),
        None => Ok(default),
    }
}

fn convergence(a: &ConvergenceArgs, g: &Global) -> Result<Output> {
    let default = if a.noncommuting {
        ExperimentConfig::noncommuting_default(g.seed)
    } else if g.paper_scale {
        ExperimentConfig::convergence_full(g.seed)
    } else {
        ExperimentConfig::convergence_desk(g.seed)
    };
    let mut c = base_config(&a.config, default)?;
    if a.config.is_none() {
        c.seed = g.seed;
    }
    apply_overrides(&mut c, &a.overrides)?;
    if let Some(m) = &a.multipliers {
        c.perturb_radius_multipliers = m.clone();
    }
    let rows = match c.bank {
        BankSpec::Noncommuting { .. } => run_noncommuting_convergence(&c)?,
        _ => run_convergence(&c)?,
    };
    Ok(Output::Table {
        table: convergence_table(&rows),
        sidecars: Vec::new(),
        manifest: Some(Manifest::new(c.kind.name(), c.seed, &c)?),
    })
}

fn beta_sweep(a: &BetaSweepArgs, g: &Global) -> Result<Output> {
    let mut default = ExperimentConfig::beta_sweep_default(g.seed);
    if g.paper_scale {
        default.bank = BankSpec::SphericalVocabulary { dim: 50, n: 10000 };
    }
    let mut c = base_config(&a.config, default)?;
    if a.config.is_none() {
        c.seed = g.seed;
    }
    apply_overrides(&mut c, &a.overrides)?;
    if c.beta_values.len() < 2 {
        return Err(usage("a sweep needs at least two beta values"));
    }
    let rows = run_beta_sweep(&c)?;
    Ok(Output::Table {
        table: beta_sweep_table(&rows),
        sidecars: Vec::new(),
        manifest: Some(Manifest::new(c.kind.name(), c.seed, &c)?),
    })
}

fn embed(which: &EmbedCommand, seed: u64) -> Result<Output> {
    match which {
        EmbedCommand::Generate(a) => {
            let v = generate_synthetic_vocabulary(a.n, a.dim, seed)?;
            let mut buf = Vec::new();
            write_vocabulary(&v, &mut buf)?;
            Ok(Output::Text(String::from_utf8(buf)?))
        }
        EmbedCommand::Import(a) => {
            let v = load_vocabulary(&a.vocab).with_context(|| format!("reading {}", a.vocab.display()))?;
            bank_json(&v.to_bank(a.beta)?)
        }
        EmbedCommand::Retrieve(a) => {
            let v = load_vocabulary(&a.vocab).with_context(|| format!("reading {}", a.vocab.display()))?;
            let ids: Vec<usize> = match &a.words {
                Some(ws) => ws
                    .iter()
                    .map(|w| v.index_of(w).ok_or_else(|| usage(format!("unknown word {w:?}"))))
                    .collect::<Result<_>>()?,
                None => {
                    let k = a.num_words.min(v.len());
                    let mut rng = seeded(derive_seed(seed, 0x6964_7873));
                    let mut ids = sample_indices(&mut rng, v.len(), k).into_vec();
                    ids.sort_unstable();
                    ids
                }
            };
            let rows = word_retrieval_experiment(&v, &ids, a.beta, a.iters, seed)?;
            Ok(Output::Table {
                table: word_rows_table(&rows),
                sidecars: Vec::new(),
                manifest: Some(Manifest::new("word_retrieval", seed, a)?),
            })
        }
    }
}

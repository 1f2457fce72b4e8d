//! Command-line driver: evaluates hypothesis checks, bound curves, the
//! two-plane grid, the violation search, finite-sample simulations and
//! model scans, emitting CSV artifacts with reproducibility metadata.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leggett_core::engine::{
    azimuthal_avg_correlator, check_hypotheses, chsh_value, compute_l, compute_r, leggett_bound,
    max_qm_violation, singles_averages, CorrelatorFn, HypothesisOptions, IntegrationMethod,
    RlForm,
};
use leggett_core::eventsim::{estimate_correlator, run_experiment, singles_average, Arm};
use leggett_core::geometry::{Frame, UnitVector};
use leggett_core::measures::VectorPairMeasure;
use leggett_core::models::{hidden_variable_builtins, Outcome, OutcomeModel};
use leggett_core::modelspec::{parse, ExperimentConfig, JobKind};
use leggett_core::report::{config_hash, CsvArtifact, CsvValue};
use leggett_core::{Error, Resolution};

#[derive(Parser)]
#[command(name = "leggett", version, about = "Hidden-variable bound laboratory for EPR-Bohm correlations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hypothesis checks for the configured model and measure.
    Check(JobArgs),
    /// Sweep the plane-averaged correlator against its margins over phi.
    Curve(JobArgs),
    /// Evaluate the two-plane bound on a (phi, phi') grid.
    Bounds(JobArgs),
    /// Search for the maximal violation in the symmetric configuration.
    #[command(name = "max-violation")]
    MaxViolation(JobArgs),
    /// Generate coincidence counts and estimator summaries.
    Simulate(JobArgs),
    /// Compare CHSH and two-plane verdicts across models.
    Scan(JobArgs),
}

#[derive(Args)]
struct JobArgs {
    /// Experiment description file.
    #[arg(long)]
    config: PathBuf,
    /// Output path; defaults to LEGGETT_OUT_DIR or stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the polar resolution (azimuthal and plane-average grids
    /// scale with it).
    #[arg(long)]
    resolution: Option<usize>,
}

struct Ctx {
    config: ExperimentConfig,
    measure: VectorPairMeasure,
    model: OutcomeModel,
    res: Resolution,
    seed: u64,
    hash: String,
    out: Option<PathBuf>,
}

fn load(args: &JobArgs) -> Result<Ctx, (u8, String)> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| (2, format!("cannot read {}: {e}", args.config.display())))?;
    let outcome = parse(&text).map_err(|e| (2, e.to_string()))?;
    for notice in &outcome.notices {
        eprintln!("notice: {notice}");
    }
    let mut config = outcome.config;
    if let Some(seed) = args.seed {
        config.job.seed = seed;
    }
    if let Some(n) = args.resolution {
        config.job.theta = n.max(2);
        config.job.azimuthal = (4 * n).max(8);
        config.job.xi = (2 * n).max(8);
    }
    let measure = config.build_measure().map_err(|e| (2, e.to_string()))?;
    let model = config.build_model();
    let res = config.resolution();
    let seed = config.job.seed;
    let hash = config_hash(&config.canonical_text());
    let out = args
        .out
        .clone()
        .or_else(|| config.job.out.clone().map(PathBuf::from))
        .or_else(|| {
            std::env::var_os("LEGGETT_OUT_DIR").map(|dir| {
                let mut p = PathBuf::from(dir);
                p.push(format!("{}-{}.csv", config.job.kind.name(), &hash[..8]));
                p
            })
        });
    Ok(Ctx {
        config,
        measure,
        model,
        res,
        seed,
        hash,
        out,
    })
}

fn emit(ctx: &Ctx, artifact: &CsvArtifact) -> Result<(), (u8, String)> {
    match &ctx.out {
        None => {
            let mut stdout = std::io::stdout().lock();
            artifact
                .write_to(&mut stdout)
                .map_err(|e| (2, e.to_string()))?;
        }
        Some(path) => {
            let mut file = fs::File::create(path)
                .map_err(|e| (2, format!("cannot write {}: {e}", path.display())))?;
            artifact
                .write_to(&mut file)
                .map_err(|e| (2, e.to_string()))?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn base_artifact(ctx: &Ctx, header: &[&str]) -> CsvArtifact {
    let mut a = CsvArtifact::new(header);
    a.meta("config_hash", &ctx.hash)
        .meta("seed", ctx.seed)
        .meta(
            "resolution",
            format!(
                "theta={} azimuthal={} xi={}",
                ctx.res.theta, ctx.res.azimuthal, ctx.res.xi
            ),
        )
        .meta("model", ctx.model.name())
        .meta("measure", ctx.measure.name());
    a
}

fn phi_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

fn warn_on_singles(ctx: &Ctx) {
    let frame = Frame::canonical();
    for (pa, pb) in [(0.0, 0.0), (std::f64::consts::FRAC_PI_2, 0.3)] {
        let a = frame.in_plane(pa);
        let b = frame.in_plane(pb);
        let (l, r) = singles_averages(&ctx.model, &ctx.measure, &a, &b, &ctx.res);
        if l.abs() > 1e-6 || r.abs() > 1e-6 {
            eprintln!(
                "warning: single-arm averages are nonzero (<sigma> = {l:.3e}, <tau> = {r:.3e}); \
                 plain expectation values already discriminate this model"
            );
            return;
        }
    }
}

fn cmd_check(args: &JobArgs) -> Result<u8, (u8, String)> {
    let ctx = load(args)?;
    let report = check_hypotheses(
        &ctx.model,
        &ctx.measure,
        &HypothesisOptions {
            samples: 10_000,
            seed: ctx.seed,
        },
    )
    .map_err(|e| (2, e.to_string()))?;
    println!("# config_hash: {}", ctx.hash);
    println!("# model: {}", ctx.model.name());
    println!("# measure: {}", ctx.measure.name());
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let role = if c.required {
            "required"
        } else if c.name == "outcome_independence" {
            "diagnostic; not required for Leggett inequality"
        } else {
            "diagnostic"
        };
        println!(
            "check {:<22} {status}  max_deviation={:.3e}  [{role}] {}",
            c.name, c.max_deviation, c.note
        );
    }
    let ok = report.hypotheses_pass();
    println!("hypotheses: {}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { 0 } else { 1 })
}

fn cmd_curve(args: &JobArgs) -> Result<u8, (u8, String)> {
    let ctx = load(args)?;
    warn_on_singles(&ctx);
    let p = ctx.config.plane_vector().map_err(|e| (2, e.to_string()))?;
    let corr = CorrelatorFn::from_model(
        &ctx.model,
        &ctx.measure,
        IntegrationMethod::Quadrature(ctx.res),
    );
    let (lo, hi) = ctx.config.phi_range();
    let mut artifact = base_artifact(&ctx, &["phi", "C", "R", "L", "lower", "upper"]);
    for phi in phi_grid(lo, hi, ctx.config.job.phi_steps) {
        let c = azimuthal_avg_correlator(&corr, p, phi, ctx.res.xi)
            .map_err(|e| (2, e.to_string()))?;
        let r = compute_r(&ctx.measure, p, phi, RlForm::FourAngle, &ctx.res);
        let l = compute_l(&ctx.measure, p, phi, RlForm::FourAngle, &ctx.res);
        artifact
            .push_row(vec![
                CsvValue::Float(phi),
                CsvValue::Float(c),
                CsvValue::Float(r),
                CsvValue::Float(l),
                CsvValue::Float(-1.0 + l),
                CsvValue::Float(1.0 - r),
            ])
            .map_err(|e| (2, e.to_string()))?;
    }
    emit(&ctx, &artifact)?;
    Ok(0)
}

/// Plane-averaged correlator table over a phi grid with half-resolution
/// error estimates.
fn plane_tables(
    corr: &CorrelatorFn,
    coarse: &CorrelatorFn,
    plane: UnitVector,
    phis: &[f64],
    res: &Resolution,
) -> Result<(Vec<f64>, Vec<f64>), (u8, String)> {
    let mut values = Vec::with_capacity(phis.len());
    let mut errors = Vec::with_capacity(phis.len());
    for &phi in phis {
        let v = azimuthal_avg_correlator(corr, plane, phi, res.xi)
            .map_err(|e| (2, e.to_string()))?;
        let c = azimuthal_avg_correlator(coarse, plane, phi, res.halved().xi)
            .map_err(|e| (2, e.to_string()))?;
        values.push(v);
        errors.push((v - c).abs());
    }
    Ok((values, errors))
}

fn cmd_bounds(args: &JobArgs) -> Result<u8, (u8, String)> {
    let ctx = load(args)?;
    warn_on_singles(&ctx);
    let p = ctx.config.plane_vector().map_err(|e| (2, e.to_string()))?;
    let p2 = ctx.config.plane2_vector().map_err(|e| (2, e.to_string()))?;
    if p.dot(&p2).abs() > 1e-10 {
        return Err((2, Error::PlanesNotOrthogonal(p.dot(&p2).abs()).to_string()));
    }
    let corr = CorrelatorFn::from_model(
        &ctx.model,
        &ctx.measure,
        IntegrationMethod::Quadrature(ctx.res),
    );
    let coarse = CorrelatorFn::from_model(
        &ctx.model,
        &ctx.measure,
        IntegrationMethod::Quadrature(ctx.res.halved()),
    );
    let (lo, hi) = ctx.config.phi_range();
    let phis = phi_grid(lo, hi, ctx.config.job.grid_steps);
    let (c1, e1) = plane_tables(&corr, &coarse, p, &phis, &ctx.res)?;
    let (c2, e2) = plane_tables(&corr, &coarse, p2, &phis, &ctx.res)?;
    let mut artifact = base_artifact(&ctx, &["phi", "phi_prime", "lhs", "rhs", "slack"]);
    for (i, &phi) in phis.iter().enumerate() {
        for (j, &phip) in phis.iter().enumerate() {
            let lhs = (c1[i] + c1[j]).abs() + (c2[i] + c2[j]).abs();
            let rhs = leggett_bound(phi, phip);
            artifact
                .push_row(vec![
                    CsvValue::Float(phi),
                    CsvValue::Float(phip),
                    CsvValue::Float(lhs),
                    CsvValue::Float(rhs),
                    CsvValue::Float(rhs - lhs),
                ])
                .map_err(|e| (2, e.to_string()))?;
            let _ = (&e1, &e2);
        }
    }
    artifact.meta(
        "max_error_estimate",
        leggett_core::report::format_sig(
            e1.iter().chain(&e2).fold(0.0f64, |m, &e| m.max(e)),
        ),
    );
    emit(&ctx, &artifact)?;
    Ok(0)
}

fn cmd_max_violation(args: &JobArgs) -> Result<u8, (u8, String)> {
    let ctx = load(args)?;
    let mut artifact = base_artifact(&ctx, &["phi_star", "violation"]);
    let (phi_star, violation, note) = if ctx.model == OutcomeModel::QmSinglet {
        let v = max_qm_violation(ctx.config.job.scan_resolution).map_err(|e| (2, e.to_string()))?;
        (v.phi_star, v.violation, None)
    } else {
        // Hidden-variable models cannot violate the bound; scan a coarse
        // grid and report the best (clipped) slack deficit.
        let corr = CorrelatorFn::from_model(
            &ctx.model,
            &ctx.measure,
            IntegrationMethod::Quadrature(ctx.res),
        );
        let p = ctx.config.plane_vector().map_err(|e| (2, e.to_string()))?;
        let p2 = ctx.config.plane2_vector().map_err(|e| (2, e.to_string()))?;
        let steps = 256;
        let mut best = f64::NEG_INFINITY;
        let mut best_phi = 0.0;
        for i in 1..=steps {
            let phi = std::f64::consts::FRAC_PI_2 * i as f64 / steps as f64;
            let lhs = leggett_core::engine::leggett_lhs(&corr, p, p2, phi, -phi, ctx.res.xi)
                .map_err(|e| (2, e.to_string()))?;
            let v = lhs - leggett_bound(phi, -phi);
            if v > best {
                best = v;
                best_phi = phi;
            }
        }
        if best <= 0.0 {
            (best_phi, 0.0, Some("no violation"))
        } else {
            (best_phi, best, None)
        }
    };
    if let Some(n) = note {
        artifact.meta("note", n);
    }
    artifact
        .push_row(vec![CsvValue::Float(phi_star), CsvValue::Float(violation)])
        .map_err(|e| (2, e.to_string()))?;
    emit(&ctx, &artifact)?;
    Ok(0)
}

fn cmd_simulate(args: &JobArgs) -> Result<u8, (u8, String)> {
    let ctx = load(args)?;
    let p = ctx.config.plane_vector().map_err(|e| (2, e.to_string()))?;
    let frame = Frame::orthonormal(p);
    let azimuths = ctx.config.settings_radians();
    let settings: Vec<(UnitVector, UnitVector)> = azimuths
        .iter()
        .map(|(pa, pb)| (frame.in_plane(*pa), frame.in_plane(*pb)))
        .collect();
    let table = run_experiment(
        &ctx.model,
        &ctx.measure,
        &settings,
        ctx.config.job.n,
        ctx.seed,
    )
    .map_err(|e| (2, e.to_string()))?;
    let mut artifact = base_artifact(
        &ctx,
        &[
            "setting_index",
            "phi_a",
            "phi_b",
            "n_pp",
            "n_pm",
            "n_mp",
            "n_mm",
            "correlator",
            "correlator_stderr",
            "singles_left",
            "singles_left_stderr",
            "singles_right",
            "singles_right_stderr",
        ],
    );
    artifact.meta("trials_per_setting", table.n);
    for (idx, (pa, pb)) in azimuths.iter().enumerate() {
        let counts = table.counts[idx];
        let (c, cs) = estimate_correlator(&table, idx).map_err(|e| (2, e.to_string()))?;
        let (sl, sls) = singles_average(&table, idx, Arm::Left).map_err(|e| (2, e.to_string()))?;
        let (sr, srs) = singles_average(&table, idx, Arm::Right).map_err(|e| (2, e.to_string()))?;
        for (mean, stderr, arm) in [(sl, sls, "left"), (sr, srs, "right")] {
            if mean.abs() > 4.0 * stderr.max(1e-12) {
                eprintln!(
                    "warning: setting {idx}: {arm} singles average {mean:.4e} exceeds 4 standard errors"
                );
            }
        }
        artifact
            .push_row(vec![
                CsvValue::Int(idx as i64),
                CsvValue::Float(*pa),
                CsvValue::Float(*pb),
                CsvValue::Int(counts[0] as i64),
                CsvValue::Int(counts[1] as i64),
                CsvValue::Int(counts[2] as i64),
                CsvValue::Int(counts[3] as i64),
                CsvValue::Float(c),
                CsvValue::Float(cs),
                CsvValue::Float(sl),
                CsvValue::Float(sls),
                CsvValue::Float(sr),
                CsvValue::Float(srs),
            ])
            .map_err(|e| (2, e.to_string()))?;
    }
    emit(&ctx, &artifact)?;
    Ok(0)
}

/// Factorization deviation probe used by the scan rows.
fn outcome_independence_dev(model: &OutcomeModel) -> f64 {
    let mut worst: f64 = 0.0;
    let grid = 33;
    for i in 0..grid {
        for j in 0..grid {
            let x = -1.0 + 2.0 * i as f64 / (grid - 1) as f64;
            let y = -1.0 + 2.0 * j as f64 / (grid - 1) as f64;
            // For the quantum reference the joint depends on a.b only;
            // reuse x as that angle cosine.
            let ab = x;
            for s in Outcome::BOTH {
                for t in Outcome::BOTH {
                    let joint = model.joint_xy(s, t, x, y, ab);
                    let left: f64 = Outcome::BOTH
                        .iter()
                        .map(|&tt| model.joint_xy(s, tt, x, y, ab))
                        .sum();
                    let right: f64 = Outcome::BOTH
                        .iter()
                        .map(|&ss| model.joint_xy(ss, t, x, y, ab))
                        .sum();
                    worst = worst.max((joint - left * right).abs());
                }
            }
        }
    }
    worst
}

fn cmd_scan(args: &JobArgs) -> Result<u8, (u8, String)> {
    let ctx = load(args)?;
    let p = ctx.config.plane_vector().map_err(|e| (2, e.to_string()))?;
    let p2 = ctx.config.plane2_vector().map_err(|e| (2, e.to_string()))?;
    if p.dot(&p2).abs() > 1e-10 {
        return Err((2, Error::PlanesNotOrthogonal(p.dot(&p2).abs()).to_string()));
    }
    let mut models = hidden_variable_builtins();
    if let OutcomeModel::CorrelatorForm(_) = ctx.model {
        models.push(ctx.model.clone());
    }
    models.push(OutcomeModel::QmSinglet);

    let mut artifact = base_artifact(
        &ctx,
        &[
            "model",
            "chsh_max",
            "chsh_pass",
            "outcome_independence_dev",
            "outcome_independence_pass",
            "leggett_min_slack",
            "leggett_pass",
        ],
    );
    let (lo, hi) = ctx.config.phi_range();
    let phis = phi_grid(lo, hi, ctx.config.job.grid_steps);
    use rand::{Rng, SeedableRng};
    for model in &models {
        let corr = CorrelatorFn::from_model(&model.clone(), &ctx.measure, IntegrationMethod::Quadrature(ctx.res));
        let coarse = CorrelatorFn::from_model(&model.clone(), &ctx.measure, IntegrationMethod::Quadrature(ctx.res.halved()));

        // CHSH: standard singlet-optimal quadruple plus random probes.
        let f = Frame::canonical();
        let mut chsh_max = chsh_value(
            &corr,
            &f.in_plane(std::f64::consts::FRAC_PI_2),
            &f.in_plane(0.0),
            &f.in_plane(std::f64::consts::FRAC_PI_4),
            &f.in_plane(3.0 * std::f64::consts::FRAC_PI_4),
        );
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(ctx.seed);
        for _ in 0..ctx.config.job.chsh_samples {
            let q: Vec<UnitVector> = (0..4)
                .map(|_| {
                    let r1 = rng.random::<f64>();
                    let r2 = rng.random::<f64>();
                    UnitVector::new(
                        (std::f64::consts::PI * r2).sin() * (2.0 * std::f64::consts::PI * r1).cos(),
                        (std::f64::consts::PI * r2).sin() * (2.0 * std::f64::consts::PI * r1).sin(),
                        (std::f64::consts::PI * r2).cos(),
                    )
                    .unwrap()
                })
                .collect();
            chsh_max = chsh_max.max(chsh_value(&corr, &q[0], &q[1], &q[2], &q[3]));
        }

        let oi = outcome_independence_dev(model);

        let (c1, e1) = plane_tables(&corr, &coarse, p, &phis, &ctx.res)?;
        let (c2, e2) = plane_tables(&corr, &coarse, p2, &phis, &ctx.res)?;
        let mut min_slack = f64::INFINITY;
        let mut leggett_ok = true;
        for i in 0..phis.len() {
            for j in 0..phis.len() {
                let lhs = (c1[i] + c1[j]).abs() + (c2[i] + c2[j]).abs();
                let rhs = leggett_bound(phis[i], phis[j]);
                let slack = rhs - lhs;
                min_slack = min_slack.min(slack);
                let tol = 3.0 * (e1[i] + e1[j] + e2[i] + e2[j]).max(1e-9);
                if slack < -tol {
                    leggett_ok = false;
                }
            }
        }

        artifact
            .push_row(vec![
                CsvValue::Str(model.name().to_string()),
                CsvValue::Float(chsh_max),
                CsvValue::Str((chsh_max <= 2.0 + 1e-9).to_string()),
                CsvValue::Float(oi),
                CsvValue::Str((oi < 1e-12).to_string()),
                CsvValue::Float(min_slack),
                CsvValue::Str(leggett_ok.to_string()),
            ])
            .map_err(|e| (2, e.to_string()))?;
    }
    emit(&ctx, &artifact)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::MaxViolation(a) => cmd_max_violation(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Scan(a) => cmd_scan(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

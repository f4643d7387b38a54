//! Batch front end: one pipeline per subcommand, a JSON report on stdout
//! and in the output directory, plot-ready CSV alongside.
//!
//! Exit status is 0 when the run succeeds with a true verdict, 2 when it
//! completes with a false verdict and 1 on any error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cayley::{cluster_components_of_a, solve_resolvent};
use crate::config::{check_tolerances, ExperimentConfig, LoadedConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::operator::{OperatorMatrix, StateVector, C64};
use crate::partition::enumerate_partitions;
use crate::potential::{FormFactorSpec, Interaction};
use crate::scattering::{EquivalenceReport, Observables, Tolerances, TwoBodySystem};
use crate::three_body::{ThreeBodyHamiltonian, ThreeBodySpace};
use crate::transforms::{conjugate, transform_three_body, transformed_two_body, two_body_independence_check};
use crate::variational::{density, functional_direct, minimize, RationalForm};

#[derive(Debug, Parser)]
#[command(name = "scateq", version, about = "Scattering-equivalent Hamiltonians: transforms, softening and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Phase-shift tolerance in radians.
    #[arg(long, global = true)]
    pub tolerance_phase: Option<f64>,
    /// Relative binding-energy tolerance.
    #[arg(long, global = true)]
    pub tolerance_bind: Option<f64>,
    /// Seed for the randomized three-body recoupling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Phase shifts and bound states of the configured potential.
    Baseline,
    /// Apply a rank-one equivalence and certify it.
    Transform,
    /// Minimise the high-momentum functional over the equivalence strength.
    Soften,
    /// Three-body equivalence, cluster decomposition and independence sweep.
    ThreeBody,
    /// Compare two observables files written by an earlier run.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Baseline => "baseline",
            Command::Transform => "transform",
            Command::Soften => "soften",
            Command::ThreeBody => "three-body",
            Command::Verify => "verify",
        }
    }
}

struct Outcome {
    verdict: bool,
    result: Value,
}

struct Context {
    loaded: LoadedConfig,
    out: PathBuf,
    tolerances: Tolerances,
    seed: Option<u64>,
}

impl Context {
    fn cfg(&self) -> &ExperimentConfig {
        &self.loaded.config
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        Ok(())
    }

    fn write_matrix(&self, name: &str, op: &OperatorMatrix, coords: &[f64]) -> Result<()> {
        let mut w = self.create(name)?;
        op.write_csv(coords, &mut w)?;
        w.flush()?;
        Ok(())
    }

    fn two_body(&self) -> Result<TwoBodySystem> {
        let cfg = self.cfg();
        let grid = MomentumGrid::from_spec(&cfg.grid)?;
        TwoBodySystem::new(
            cfg.reduced_mass,
            grid,
            Interaction::from_spec(cfg.potential.clone(), cfg.grid.partial_wave)?,
        )
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            emit_error("usage", &e.to_string());
            return 1;
        }
    };
    match execute(&cli) {
        Ok((report, verdict)) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
            if verdict {
                0
            } else {
                2
            }
        }
        Err(e) => {
            emit_error(e.kind(), &e.to_string());
            1
        }
    }
}

fn emit_error(kind: &str, message: &str) {
    let v = json!({ "error": { "kind": kind, "message": message.trim_end() } });
    eprintln!("{}", serde_json::to_string_pretty(&v).expect("error serialises"));
}

/// Runs the pipeline and writes `report.json`; returns the report and verdict.
pub fn execute(cli: &Cli) -> Result<(Value, bool)> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let loaded = ExperimentConfig::load(path)?;
    let mut tolerances = loaded.config.tolerances();
    if let Some(p) = cli.tolerance_phase {
        tolerances.phase = p;
    }
    if let Some(b) = cli.tolerance_bind {
        tolerances.binding = b;
    }
    check_tolerances(&tolerances)?;
    let out = match (&cli.out, &loaded.config.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => resolve(&loaded.base_dir, o),
        (None, None) => return Err(Error::Config("no output directory: pass --out or set output_dir".into())),
    };
    std::fs::create_dir_all(&out)?;
    let ctx = Context { loaded, out, tolerances, seed: cli.seed };
    let outcome = match cli.command {
        Command::Baseline => baseline(&ctx)?,
        Command::Transform => transform(&ctx)?,
        Command::Soften => soften(&ctx)?,
        Command::ThreeBody => three_body(&ctx)?,
        Command::Verify => verify(&ctx)?,
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": cli.command.name(),
        "config_hash": ctx.loaded.hash,
        "tolerances": ctx.tolerances,
        "verdict": outcome.verdict,
        "result": outcome.result,
    });
    ctx.write_json("report.json", &report)?;
    Ok((report, outcome.verdict))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn form_factor_on(ff: FormFactorSpec, normalize: bool, grid: &MomentumGrid) -> Result<FormFactorSpec> {
    if normalize {
        ff.normalized_on(grid)
    } else {
        ff.validate().map(|_| ff)
    }
}

fn vector_on(ff: FormFactorSpec, grid: &MomentumGrid) -> StateVector {
    let nodes = grid.nodes();
    StateVector::from_fn(grid.space(), |i| ff.eval(nodes[i]))
}

fn baseline(ctx: &Context) -> Result<Outcome> {
    let sys = ctx.two_body()?;
    let energies = ctx.cfg().energies();
    let obs = Observables::of(&sys, &energies)?;
    let mut w = ctx.create("phase_shifts.csv")?;
    writeln!(w, "E,delta,delta_raw")?;
    for ((e, d), r) in obs.energies.iter().zip(&obs.phase_shifts).zip(&obs.raw_phase_shifts) {
        writeln!(w, "{e:.12e},{d:.12e},{r:.12e}")?;
    }
    w.flush()?;
    ctx.write_json("observables.json", &obs)?;
    ctx.write_matrix("potential.csv", sys.potential(), sys.grid().nodes())?;
    Ok(Outcome { verdict: true, result: serde_json::to_value(&obs)? })
}

/// Shared tail of `transform` and `soften`: certify and write the
/// before/after artefacts.
fn certify_and_write(ctx: &Context, sys: &TwoBodySystem, after: &TwoBodySystem) -> Result<EquivalenceReport> {
    let energies = ctx.cfg().energies();
    let before_obs = Observables::of(sys, &energies)?;
    let after_obs = Observables::of(after, &energies)?;
    let rep = EquivalenceReport::compare(&before_obs, &after_obs, ctx.tolerances)?;
    let mut w = ctx.create("phase_shifts.csv")?;
    rep.write_phase_csv(&mut w)?;
    w.flush()?;
    ctx.write_json("observables_before.json", &before_obs)?;
    ctx.write_json("observables_after.json", &after_obs)?;
    let k = sys.grid().nodes();
    ctx.write_matrix("potential_before.csv", sys.potential(), k)?;
    ctx.write_matrix("potential_after.csv", after.potential(), k)?;
    Ok(rep)
}

fn transform(ctx: &Context) -> Result<Outcome> {
    let section = ctx.cfg().transform.ok_or_else(|| Error::Config("config has no `transform` section".into()))?;
    let sys = ctx.two_body()?;
    let ff = form_factor_on(section.form_factor, section.normalize, sys.grid())?;
    let t = transformed_two_body(&sys, section.lambda, ff)?;
    let h = sys.hamiltonian()?;
    let conjugated = conjugate(&h, &t.equivalence)?;
    let residual = t.system.hamiltonian()?.rel_norm_diff(&conjugated)?;
    let rep = certify_and_write(ctx, &sys, &t.system)?;
    Ok(Outcome {
        verdict: rep.verdict,
        result: json!({
            "lambda": t.lambda,
            "f": [t.f.re, t.f.im],
            "unitarity_residual": t.equivalence.unitarity_residual(),
            "conjugation_residual": residual,
            "equivalence": rep,
        }),
    })
}

fn soften(ctx: &Context) -> Result<Outcome> {
    let section = ctx.cfg().soften.ok_or_else(|| Error::Config("config has no `soften` section".into()))?;
    let sys = ctx.two_body()?;
    let grid = sys.grid();
    let ff = form_factor_on(section.form_factor, section.normalize, grid)?;
    let g = vector_on(ff, grid);
    let chi = section.density.chi(grid)?;
    let h = sys.hamiltonian()?;
    let form = RationalForm::new(sys.potential(), &h, &g, &chi)?;
    let m = minimize(|l| form.eval(l), &section.search)?;
    let t = transformed_two_body(&sys, m.lambda, ff)?;
    let rep = certify_and_write(ctx, &sys, &t.system)?;
    let mut w = ctx.create("f_trace.csv")?;
    m.write_trace_csv(&mut w)?;
    w.flush()?;

    let rho = density(&section.density, grid)?;
    let before = functional_direct(sys.potential(), &rho)?;
    let after = functional_direct(t.system.potential(), &rho)?;
    let descended = m.value <= m.value_at_zero;
    Ok(Outcome {
        verdict: rep.verdict && descended,
        result: json!({
            "lambda_c": m.lambda,
            "f": [t.f.re, t.f.im],
            "F_at_lambda_c": m.value,
            "F_at_zero": m.value_at_zero,
            "dF_at_lambda_c": m.derivative,
            "dF_at_zero": m.derivative_at_zero,
            "stationary": m.stationary,
            "evaluations": m.evaluations,
            "warnings": m.warnings,
            "coefficients": form,
            "weight_before": before,
            "weight_after": after,
            "sqrt_weight_before": before.sqrt(),
            "sqrt_weight_after": after.sqrt(),
            "equivalence": rep,
        }),
    })
}

fn three_body(ctx: &Context) -> Result<Outcome> {
    let section =
        ctx.cfg().three_body.clone().ok_or_else(|| Error::Config("config has no `three_body` section".into()))?;
    let seed = ctx.seed.unwrap_or(section.seed);
    let space = ThreeBodySpace::new(&section.grid, seed)?;
    let pair_v = Interaction::from_spec(ctx.cfg().potential.clone(), 0)?.matrix(space.pair_grid())?;
    let ham = ThreeBodyHamiltonian::new(&space, &pair_v, None)?;
    let ff = form_factor_on(section.form_factor, section.normalize, space.pair_grid())?;
    let g = vector_on(ff, space.pair_grid());
    let chi = section.connected.map(|c| {
        let v = space.product_vector(
            |p| (-(p * p) / (c.width_p * c.width_p)).exp(),
            |q| (-(q * q) / (c.width_q * c.width_q)).exp(),
        );
        let n = v.norm();
        (c.lambda, v.scale(C64::new(1.0 / n, 0.0)))
    });
    let spec = space.generator(section.pair_lambdas, &g, chi.as_ref().map(|(l, v)| (*l, v)))?;

    let resolvent = solve_resolvent(&spec)?;
    let a = cluster_components_of_a(&spec)?;
    let t = transform_three_body(&ham, &spec)?;
    let check = two_body_independence_check(&ham, &spec, &section.sweep)?;

    let mut w = ctx.create("component_norms.csv")?;
    writeln!(w, "partition,a_norm,h_norm,h_transformed_norm")?;
    let original = ham.cluster_operator()?;
    let mut norms = Vec::new();
    for p in enumerate_partitions(3)? {
        let an = a.component(&p)?.norm();
        let hn = original.component(&p)?.norm();
        let tn = t.components.component(&p)?.norm();
        writeln!(w, "{p},{an:.12e},{hn:.12e},{tn:.12e}")?;
        norms.push(json!({ "partition": p.to_string(), "a": an, "h": hn, "h_transformed": tn }));
    }
    w.flush()?;
    let mut w = ctx.create("three_body_sweep.csv")?;
    writeln!(w, "strength,v123_norm")?;
    for (s, n) in check.connected_strengths.iter().zip(&check.three_body_norms) {
        writeln!(w, "{s:.12e},{n:.12e}")?;
    }
    w.flush()?;

    Ok(Outcome {
        verdict: check.independent,
        result: json!({
            "dimension": space.dim(),
            "seed": seed,
            "resolvent_system_dim": resolvent.system_dim(),
            "resolvent_condition": resolvent.condition,
            "resolvent_warnings": resolvent.warnings,
            "unitarity_residual": t.equivalence.unitarity_residual(),
            "decomposition_residual": t.decomposition_residual()?,
            "component_norms": norms,
            "induced_three_body_norm": t.three_body_potential()?.norm(),
            "independence": check,
        }),
    })
}

fn verify(ctx: &Context) -> Result<Outcome> {
    let section = ctx.cfg().verify.clone().ok_or_else(|| Error::Config("config has no `verify` section".into()))?;
    let read = |p: &Path| -> Result<Observables> {
        let path = resolve(&ctx.loaded.base_dir, p);
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    };
    let before = read(&section.before)?;
    let after = read(&section.after)?;
    let rep = EquivalenceReport::compare(&before, &after, ctx.tolerances)?;
    let mut w = ctx.create("phase_shifts.csv")?;
    rep.write_phase_csv(&mut w)?;
    w.flush()?;
    Ok(Outcome { verdict: rep.verdict, result: serde_json::to_value(&rep)? })
}

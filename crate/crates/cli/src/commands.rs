//! Subcommand bodies. Each one reads a resolved [`RunConfig`], writes its
//! outputs into the output directory and returns a short summary line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use bifkit::experiments::{
    averaged_empirical, collision_loci, compare_mass, delta_statistics, locus_box, locus_word_pairs, locus_words,
    pair_separation_stats, trace_ld_statistics, trace_loci, type_change_locus,
};
use bifkit::io;
use bifkit::lyapunov::chi_field;
use bifkit::potential::{bif_measure, constant_commutator, constant_trace};
use bifkit::zeros::{collision_locus, trace_locus};
use bifkit::{
    ChiFieldParams, ComparisonReport, DecayTable, Error, FamilySpec, MassField, MassSummary, ParamGrid, PointCloud,
    Settings, Word, WordMeasure,
};
use serde::Serialize;

use crate::config::{Command, ConfigError, RunConfig};

/// Why a command failed, and the exit code that goes with it.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Numeric(Error),
    Output(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Output(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Numeric(e) => write!(f, "numeric failure: {e}"),
            Failure::Output(e) => write!(f, "cannot write output: {e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

/// Core errors: numeric ones keep their identity, the rest blame `field`.
fn core(field: &'static str) -> impl Fn(Error) -> Failure {
    move |e| match e {
        e if e.is_numeric() => Failure::Numeric(e),
        Error::Io(e) => Failure::Output(e.to_string()),
        e => Failure::Config(ConfigError::new(field, e.to_string())),
    }
}

fn output(e: Error) -> Failure {
    Failure::Output(e.to_string())
}

type Outcome = Result<String, Failure>;

/// Everything a command needs, built once from the resolved config.
struct Ctx {
    cfg: RunConfig,
    spec: FamilySpec,
    mu: WordMeasure,
    seed: u64,
}

impl Ctx {
    fn new(cfg: RunConfig) -> Result<Ctx, Failure> {
        let spec = cfg.family_spec()?;
        let mu = cfg.measure_for(&spec)?;
        let seed = cfg.seed.expect("resolved");
        Ok(Ctx { cfg, spec, mu, seed })
    }

    fn out(&self) -> &Path {
        self.cfg.out.as_deref().expect("resolved")
    }

    fn grid(&self) -> Result<ParamGrid, Failure> {
        Ok(self.cfg.grid_value()?)
    }

    fn get(&self, v: Option<usize>) -> usize {
        v.expect("resolved")
    }

    fn word(&self, field: &'static str, s: &str) -> Result<Word, Failure> {
        self.spec.parse_word(s).map_err(|e| ConfigError::new(field, e.to_string()).into())
    }

    fn settings(&self) -> Settings {
        Settings::new(&self.spec, &self.mu, self.seed)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        io::write_json(&self.out().join(name), value).map_err(output)
    }
}

/// Resolves, persists the config, then runs the command.
pub fn run(cmd: Command, cfg: RunConfig) -> Outcome {
    let cfg = cfg.resolve(cmd)?;
    let out = cfg.out_dir()?.to_path_buf();
    fs::create_dir_all(&out).map_err(|e| Failure::Output(format!("{}: {e}", out.display())))?;
    io::write_json(&out.join("config.json"), &cfg).map_err(output)?;
    let ctx = Ctx::new(cfg)?;
    match cmd {
        Command::Lyap => lyap(&ctx),
        Command::Bif => bif(&ctx),
        Command::Zeros => zeros(&ctx),
        Command::Collide => collide(&ctx),
        Command::Stats => stats(&ctx),
        Command::Typechange => typechange(&ctx),
    }
}

fn lyap(ctx: &Ctx) -> Outcome {
    let grid = ctx.grid()?;
    let p = ChiFieldParams::new(ctx.get(ctx.cfg.n), ctx.get(ctx.cfg.m), ctx.seed);
    let field = chi_field(&ctx.spec, &ctx.mu, &grid, &p).map_err(core("n"))?;
    io::write_scalar_field(ctx.out(), "chi", &field).map_err(output)?;
    let (lo, hi) = field.range().unwrap_or((f64::NAN, f64::NAN));
    Ok(format!("chi: {}x{} pixels, range [{lo:.6}, {hi:.6}]", grid.nx, grid.ny))
}

fn summary_line(name: &str, s: &MassSummary) -> String {
    format!(
        "{name}: total {:.6e}, min {:.3e}, max {:.3e}, negative fraction {:.3e}",
        s.total, s.min, s.max, s.negative_fraction
    )
}

fn bif(ctx: &Ctx) -> Outcome {
    let grid = ctx.grid()?;
    let mass = bif_measure(&ctx.spec, &ctx.mu, &grid, ctx.get(ctx.cfg.n), ctx.get(ctx.cfg.m), ctx.seed)
        .map_err(core("n"))?;
    io::write_mass_field(ctx.out(), "bif", &mass).map_err(output)?;
    Ok(summary_line("bif", &mass.summary()))
}

/// The reference bifurcation measure, from the cache directory when given.
fn reference_bif(ctx: &Ctx, grid: &ParamGrid) -> Result<MassField, Failure> {
    if let Some(dir) = &ctx.cfg.bif_cache {
        let cached = io::read_mass_field(dir, "bif")
            .map_err(|e| ConfigError::new("bif_cache", format!("{}: {e}", dir.display())))?;
        if cached.grid != *grid {
            return Err(ConfigError::new("bif_cache", format!("{}: grid differs from `grid`", dir.display())).into());
        }
        return Ok(cached);
    }
    let mass = bif_measure(&ctx.spec, &ctx.mu, grid, ctx.get(ctx.cfg.n_field), ctx.get(ctx.cfg.m_field), ctx.seed)
        .map_err(core("n_field"))?;
    io::write_mass_field(ctx.out(), "bif", &mass).map_err(output)?;
    Ok(mass)
}

#[derive(Serialize)]
struct Locus {
    word: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    with: Option<String>,
    points: PointCloud,
}

fn compare_loci(ctx: &Ctx, grid: &ParamGrid, clouds: &[PointCloud], weight: f64, kind: &str) -> Outcome {
    let mut emp = averaged_empirical(clouds, weight, grid).map_err(core("grid"))?;
    emp.meta.kind = kind.to_string();
    emp.meta.n = ctx.cfg.n;
    emp.meta.seed = Some(ctx.seed);
    io::write_mass_field(ctx.out(), "empirical", &emp).map_err(output)?;
    let bif = reference_bif(ctx, grid)?;
    let settings = ctx
        .settings()
        .with("kind", kind)
        .with("n", ctx.cfg.n)
        .with("words", ctx.cfg.words)
        .with("n_field", bif.meta.n)
        .with("m_field", bif.meta.m)
        .with("grid", grid);
    let report: ComparisonReport =
        compare_mass(&emp, &bif, ctx.get(ctx.cfg.coarsen)).map_err(core("coarsen"))?.with_settings(settings);
    ctx.write_json("comparison.json", &report)?;
    Ok(format!("{kind}: TV {:.6}, correlation {:.6}, empirical total {:.6}", report.tv, report.correlation, emp.total))
}

fn zeros(ctx: &Ctx) -> Outcome {
    let grid = ctx.grid()?;
    let t = ctx.cfg.t_value()?;
    let tol = ctx.cfg.tol.expect("resolved");
    let bx = locus_box(&grid).map_err(core("grid"))?;
    if let Some(ws) = &ctx.cfg.word {
        let w = ctx.word("word", ws)?;
        if let Some(c) = constant_trace(&ctx.spec, &w, &grid.window()) {
            eprintln!("warning: tr^2 of `{ws}` is constant ({}, {}); its locus is empty", c.re, c.im);
        }
        let cloud = trace_locus(&ctx.spec, &w, t, &bx, tol).map_err(core("word"))?;
        ctx.write_json("zeros.json", &cloud)?;
        return Ok(format!("zeros: {} points, multiplicity {}", cloud.len(), cloud.total_multiplicity()));
    }
    let n = ctx.get(ctx.cfg.n);
    let words = locus_words(&ctx.mu, n, ctx.get(ctx.cfg.words), ctx.seed);
    let clouds = trace_loci(&ctx.spec, &words, t, &bx, tol).map_err(core("n"))?;
    let loci: Vec<Locus> = words
        .iter()
        .zip(&clouds)
        .map(|(w, c)| Locus { word: w.display(ctx.spec.names()).to_string(), with: None, points: c.clone() })
        .collect();
    ctx.write_json("loci.json", &loci)?;
    compare_loci(ctx, &grid, &clouds, 1.0 / (2.0 * n as f64), "trace-locus")
}

fn collide(ctx: &Ctx) -> Outcome {
    let grid = ctx.grid()?;
    let tol = ctx.cfg.tol.expect("resolved");
    let bx = locus_box(&grid).map_err(core("grid"))?;
    if let (Some(ws), Some(hs)) = (&ctx.cfg.word, &ctx.cfg.with) {
        let (w, h) = (ctx.word("word", ws)?, ctx.word("with", hs)?);
        if let Some(c) = constant_commutator(&ctx.spec, &w, &h, &grid.window()) {
            eprintln!("warning: tr[{ws}, {hs}] is constant ({}, {}); its locus is empty", c.re + 2.0, c.im);
        }
        let cloud = collision_locus(&ctx.spec, &w, &h, &bx, tol).map_err(core("word"))?;
        ctx.write_json("zeros.json", &cloud)?;
        return Ok(format!("collisions: {} points, multiplicity {}", cloud.len(), cloud.total_multiplicity()));
    }
    let n = ctx.get(ctx.cfg.n);
    let pairs = locus_word_pairs(&ctx.mu, n, ctx.get(ctx.cfg.words), ctx.seed);
    let clouds = collision_loci(&ctx.spec, &pairs, &bx, tol).map_err(core("n"))?;
    let names = ctx.spec.names();
    let loci: Vec<Locus> = pairs
        .iter()
        .zip(&clouds)
        .map(|((w, h), c)| Locus {
            word: w.display(names).to_string(),
            with: Some(h.display(names).to_string()),
            points: c.clone(),
        })
        .collect();
    ctx.write_json("loci.json", &loci)?;
    compare_loci(ctx, &grid, &clouds, 1.0 / (4.0 * n as f64), "collision-locus")
}

#[derive(Serialize)]
struct PairSeparation {
    gamma: f64,
    n: usize,
    m: usize,
    violation_fraction: f64,
}

#[derive(Serialize)]
struct StatsReport {
    settings: Settings,
    delta: DecayTable,
    trace_deviation: DecayTable,
    pair_separation: PairSeparation,
}

fn table_text(out: &mut String, t: &DecayTable) {
    let _ = writeln!(out, "{}", t.statistic);
    let _ = writeln!(out, "{:>8} {:>12} {:>12} {:>10} {:>12} {:>12}", "n", "threshold", "probability", "count", "wilson_lo", "wilson_hi");
    for r in &t.rows {
        let _ = writeln!(
            out,
            "{:>8} {:>12.4e} {:>12.6} {:>10} {:>12.6} {:>12.6}",
            r.n, r.threshold, r.probability, r.count, r.wilson_low, r.wilson_high
        );
    }
}

fn stats(ctx: &Ctx) -> Outcome {
    let lambda = ctx.cfg.lambda_value()?;
    let n_list = ctx.cfg.n_list.clone().expect("resolved");
    let m = ctx.get(ctx.cfg.m);
    let rule = ctx.cfg.eps_rule.expect("resolved");
    let eps = ctx.cfg.epsilon.expect("resolved");
    let gamma = ctx.cfg.gamma.expect("resolved");
    let n = ctx.get(ctx.cfg.n);
    let delta = delta_statistics(&ctx.spec, &ctx.mu, lambda, &n_list, rule, m, ctx.seed).map_err(core("n_list"))?;
    let trace_deviation =
        trace_ld_statistics(&ctx.spec, &ctx.mu, lambda, eps, &n_list, m, ctx.seed).map_err(core("epsilon"))?;
    let violation_fraction =
        pair_separation_stats(&ctx.spec, &ctx.mu, lambda, gamma, n, m, ctx.seed).map_err(core("gamma"))?;
    let report = StatsReport {
        settings: ctx
            .settings()
            .with("lambda", [lambda.re, lambda.im])
            .with("n_list", &n_list)
            .with("m", m)
            .with("eps_rule", rule)
            .with("epsilon", eps)
            .with("gamma", gamma)
            .with("n", n),
        delta,
        trace_deviation,
        pair_separation: PairSeparation { gamma, n, m, violation_fraction },
    };
    ctx.write_json("stats.json", &report)?;
    let mut text = String::new();
    table_text(&mut text, &report.delta);
    let _ = writeln!(text);
    table_text(&mut text, &report.trace_deviation);
    if let Some(chi) = report.trace_deviation.reference_chi {
        let _ = writeln!(text, "reference chi {chi:.6}");
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "pair separation: gamma {gamma}, n {n}, m {m}, violation fraction {violation_fraction:.6}");
    fs::write(ctx.out().join("stats.txt"), &text).map_err(|e| Failure::Output(e.to_string()))?;
    Ok(text.trim_end().to_string())
}

#[derive(Serialize)]
struct MaskSummary {
    grid: ParamGrid,
    n_max: usize,
    m: usize,
    seed: u64,
    pixels: usize,
}

fn typechange(ctx: &Ctx) -> Outcome {
    let grid = ctx.grid()?;
    let (n, m) = (ctx.get(ctx.cfg.n), ctx.get(ctx.cfg.m));
    let mask = type_change_locus(&ctx.spec, &ctx.mu, &grid, n, m, ctx.seed).map_err(core("n"))?;
    let out = ctx.out();
    fs::write(out.join("typechange.csv"), io::mask_csv(&mask)).map_err(|e| Failure::Output(e.to_string()))?;
    fs::write(out.join("typechange.pgm"), io::mask_pgm(&mask)).map_err(|e| Failure::Output(e.to_string()))?;
    let summary = MaskSummary { grid, n_max: n, m, seed: ctx.seed, pixels: mask.count() };
    ctx.write_json("typechange.json", &summary)?;
    Ok(format!("typechange: {} of {} pixels flagged", mask.count(), grid.len()))
}

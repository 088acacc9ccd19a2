//! `dtower`: batch front end to the double-tower toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use double_tower::acceptance::{self, CriterionResult};
use double_tower::config::{ConfigSection, OutputFormat, OutputSection, RunConfig, Tolerances};
use double_tower::constants::{crosscheck_constants, eval_constants};
use double_tower::flow::{flow_confinement, random_starts, FlowOptions};
use double_tower::geometry::make_centers;
use double_tower::integrals::{direct_energy, pair_interaction};
use double_tower::lattice::{sum_asymptotic, sum_exact, RingKind, SumQuery, Weight};
use double_tower::montecarlo::MCSpec;
use double_tower::potentials::{r2v_critical, CriticalKind, PotentialSpec};
use double_tower::quadrature::QuadratureSpec;
use double_tower::reduced::{f_main, f_semi, make_boxes, solve_critical, RemainderModel, SolveMode, WidthMode};
use double_tower::residual::{residual_scaling, ScalingPath};
use double_tower::{Error, Potential};

const SCHEMA: &str = "dtower/1";

#[derive(Parser, Debug)]
#[command(name = "dtower", version, about = "Two-ring bubble ansatz: constants, sums, energies, critical points")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Space dimension.
    #[arg(long = "N", global = true)]
    n: Option<usize>,
    /// Bubbles per ring.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    r: Option<f64>,
    #[arg(long, global = true)]
    h: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// Potential as `family:key=value,...`, e.g. `bump_at:r0=1,v0=1,a=0,w=0.5`.
    #[arg(long, global = true)]
    potential: Option<String>,
    #[arg(long = "rel-tol", global = true)]
    rel_tol: Option<f64>,
    #[arg(long = "mc-samples", global = true)]
    mc_samples: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// TOML run file; its values take precedence over flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "DTOWER_WORKERS")]
    workers: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum RingArg {
    Same,
    Cross,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum WeightArg {
    One,
    OneMinusCos,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Max,
    Minmax,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Closed-form constants and their quadrature cross-check.
    Constants,
    /// Ring centers.
    Geometry,
    /// Exact lattice sums against their leading laws.
    Sums {
        /// Decay exponent; defaults to N-2.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value = "same")]
        ring: RingArg,
        #[arg(long, value_enum, default_value = "one")]
        weight: WeightArg,
        /// Ring sizes to tabulate; defaults to --k.
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
    },
    /// Two-bubble interaction integrals at a list of separations.
    Pairwise {
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,40,80")]
        d: Vec<f64>,
    },
    /// Direct energy of the ansatz next to the semi-discrete and main-term models.
    Energy,
    /// Critical point of the reduced energy in its parameter box.
    Reduce {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Fixed box half-width in scaled units; default is the shrinking box.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Descent-flow confinement study.
    Flow {
        #[arg(long, default_value_t = 10)]
        starts: usize,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Residual norm along the critical scaling path.
    Residual {
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
    },
    /// Acceptance battery.
    Report {
        /// Fast tier only.
        #[arg(long)]
        quick: bool,
        /// Run only these criterion ids.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

/// How a run ended, mapped onto the exit code.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Parameter { .. } | Error::Dimension(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

/// Output payload plus the ids of any criteria whose checks failed.
struct Produced {
    json: Value,
    csv: Option<String>,
    failed: Vec<String>,
}

fn parse_potential(text: &str) -> Outcome<PotentialSpec> {
    let bad = |reason: String| Failure::Config(format!("config error in `potential`: {reason}"));
    let (family, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut table = toml::Table::new();
    table.insert("family".into(), toml::Value::String(family.trim().into()));
    for pair in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, val) = pair.split_once('=').ok_or_else(|| bad(format!("expected key=value, got `{pair}`")))?;
        let val = val.trim();
        let parsed = if let Ok(i) = val.parse::<i64>() {
            if key.trim() == "n" { toml::Value::Integer(i) } else { toml::Value::Float(i as f64) }
        } else if let Ok(x) = val.parse::<f64>() {
            toml::Value::Float(x)
        } else {
            toml::Value::String(val.into())
        };
        table.insert(key.trim().into(), parsed);
    }
    table.try_into().map_err(|e: toml::de::Error| bad(e.message().to_string()))
}

fn flag_config(c: &Common) -> Outcome<RunConfig> {
    Ok(RunConfig {
        seed: c.seed,
        workers: c.workers,
        configuration: ConfigSection { n: c.n, k: c.k, r: c.r, h: c.h, mu: c.mu },
        potential: c.potential.as_deref().map(parse_potential).transpose()?,
        tolerances: Tolerances { rel_tol: c.rel_tol, abs_tol: None, mc_samples: c.mc_samples },
        output: OutputSection {
            path: c.out.as_ref().map(|p| p.display().to_string()),
            format: c.format.map(|f| match f {
                FormatArg::Json => OutputFormat::Json,
                FormatArg::Csv => OutputFormat::Csv,
            }),
        },
    })
}

fn load(common: &Common) -> Outcome<RunConfig> {
    let flags = flag_config(common)?;
    match &common.config {
        Some(path) => Ok(flags.overlaid_with(RunConfig::from_path(path)?)),
        None => Ok(flags),
    }
}

/// Shortest decimal that agrees with `x` to 15 significant digits.
fn sig15(x: f64) -> f64 {
    format!("{x:.14e}").parse().unwrap_or(x)
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("plain data serializes")
}

fn qspec(rc: &RunConfig) -> QuadratureSpec {
    let mut q = QuadratureSpec::default();
    if let Some(t) = rc.tolerances.rel_tol {
        q.rel_tol = t;
    }
    if let Some(t) = rc.tolerances.abs_tol {
        q.abs_tol = t;
    }
    q
}

fn mspec(rc: &RunConfig, default_samples: usize) -> MCSpec {
    MCSpec::with_samples(rc.tolerances.mc_samples.unwrap_or(default_samples), rc.seed())
}

fn csv_text<F>(header: &[&str], rows: F) -> Outcome<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Runtime(e.to_string());
    w.write_record(header).map_err(io)?;
    rows(&mut w).map_err(io)?;
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Runtime(e.to_string()))
}

fn cmd_constants(rc: &RunConfig) -> Outcome<Produced> {
    let dim = rc.dimension()?;
    let c = eval_constants(dim);
    let tol = rc.tolerances.rel_tol.unwrap_or(acceptance::CONSTANTS_TOL);
    let check = crosscheck_constants(dim, tol)?;
    let failed = if check.passed { vec![] } else { vec!["1".to_string()] };
    let json = json!({
        "N": c.n,
        "A1": sig15(c.a1),
        "A2": sig15(c.a2),
        "B0": sig15(c.b0),
        "B1": sig15(c.b1),
        "B2": sig15(c.b2),
        "A3": sig15(c.a3()),
        "h0": sig15(c.h0()),
        "crosscheck": to_value(&check),
    });
    Ok(Produced { json, csv: None, failed })
}

fn cmd_geometry(rc: &RunConfig) -> Outcome<Produced> {
    let cfg = rc.configuration()?;
    let centers = make_centers(&cfg);
    Ok(Produced {
        json: json!({ "configuration": to_value(&cfg), "centers": to_value(&centers) }),
        csv: Some(centers.to_csv()?),
        failed: vec![],
    })
}

#[derive(Serialize)]
struct SumRow {
    k: usize,
    h: f64,
    alpha: f64,
    ring: RingKind,
    weight: Weight,
    exact: f64,
    leading: f64,
    rel_err: f64,
    regime_ok: bool,
}

fn cmd_sums(rc: &RunConfig, alpha: Option<f64>, ring: RingArg, weight: WeightArg, ks: &[usize]) -> Outcome<Produced> {
    let dim = rc.dimension()?;
    let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Failure::Config(format!("config error in `configuration.{key}`: missing")));
    let r = need(rc.configuration.r, "r")?;
    let h = need(rc.configuration.h, "h")?;
    let ks: Vec<usize> = if ks.is_empty() {
        vec![rc.configuration.k.ok_or_else(|| Failure::Config("config error in `configuration.k`: missing".into()))?]
    } else {
        ks.to_vec()
    };
    let ring = match ring {
        RingArg::Same => RingKind::Same,
        RingArg::Cross => RingKind::Cross,
    };
    let weight = match weight {
        WeightArg::One => Weight::One,
        WeightArg::OneMinusCos => Weight::OneMinusCos,
    };
    let alpha = alpha.unwrap_or(dim.nf() - 2.0);
    let mut rows = Vec::with_capacity(ks.len());
    for k in ks {
        let q = SumQuery { dim, k, r, h, alpha, ring, weight };
        let exact = sum_exact(&q)?;
        let asym = sum_asymptotic(&q)?;
        rows.push(SumRow {
            k,
            h,
            alpha,
            ring,
            weight,
            exact,
            leading: asym.leading,
            rel_err: (exact / asym.leading - 1.0).abs(),
            regime_ok: asym.regime_ok,
        });
    }
    let csv = csv_text(&["k", "h", "alpha", "ring", "weight", "exact", "leading", "rel_err"], |w| {
        for s in &rows {
            w.serialize((s.k, s.h, s.alpha, s.ring, s.weight, s.exact, s.leading, s.rel_err))?;
        }
        Ok(())
    })?;
    Ok(Produced { json: json!({ "N": dim.n(), "rows": to_value(&rows) }), csv: Some(csv), failed: vec![] })
}

fn cmd_pairwise(rc: &RunConfig, ds: &[f64]) -> Outcome<Produced> {
    let dim = rc.dimension()?;
    let mu = rc.configuration.mu.unwrap_or(1.0);
    let spec = qspec(rc);
    let b0 = eval_constants(dim).b0;
    let mut rows = Vec::with_capacity(ds.len());
    for &d in ds {
        let x1 = vec![0.0; dim.n()];
        let mut x2 = x1.clone();
        x2[0] = d;
        let p = pair_interaction(dim, &x1, &x2, mu, &spec)?;
        let scaled = (mu * d).powf(dim.nf() - 2.0);
        rows.push(json!({
            "d": d,
            "int_pow": p.int_pow,
            "int_l2": p.int_l2,
            "int_grad": p.int_grad,
            "rel_err": p.rel_err,
            "int_pow_over_law": p.int_pow * scaled / b0,
        }));
    }
    let csv = csv_text(&["d", "int_pow", "int_l2", "int_grad", "rel_err", "int_pow_over_law"], |w| {
        for r in &rows {
            let f = |k: &str| r[k].as_f64().unwrap_or(f64::NAN);
            w.serialize((f("d"), f("int_pow"), f("int_l2"), f("int_grad"), f("rel_err"), f("int_pow_over_law")))?;
        }
        Ok(())
    })?;
    Ok(Produced {
        json: json!({ "N": dim.n(), "mu": mu, "quad_rel_tol": spec.rel_tol, "rows": rows }),
        csv: Some(csv),
        failed: vec![],
    })
}

fn cmd_energy(rc: &RunConfig) -> Outcome<Produced> {
    let cfg = rc.configuration()?;
    let v = rc.potential()?;
    let model = RemainderModel::default();
    let direct = direct_energy(&cfg, &v, &qspec(rc), &mspec(rc, 1_000_000))?;
    let semi = f_semi(&cfg, &v, &model)?;
    let main = f_main(cfg.dim, cfg.k, cfg.r, cfg.h, cfg.mu, &v, &model)?;
    Ok(Produced {
        json: json!({
            "configuration": to_value(&cfg),
            "direct": to_value(&direct),
            "semi": to_value(&semi),
            "main": to_value(&main),
            "direct_minus_semi": direct.total - semi.value,
            "direct_minus_main": direct.total - main.value,
        }),
        csv: None,
        failed: vec![],
    })
}

/// Box centre radius: `--r` if given, otherwise the matching critical point of `s²V`.
fn box_radius(rc: &RunConfig, v: &Potential, mode: SolveMode) -> Outcome<f64> {
    if let Some(r) = rc.configuration.r {
        return Ok(r);
    }
    let want = match mode {
        SolveMode::Max => CriticalKind::Max,
        SolveMode::Minmax => CriticalKind::Min,
    };
    r2v_critical(v, (0.05, 20.0), 1e-12)?
        .into_iter()
        .find(|p| p.kind == want)
        .map(|p| p.r0)
        .ok_or_else(|| Failure::Config("config error in `configuration.r`: no matching critical point of s^2 V in [0.05, 20]".into()))
}

fn width_mode(sigma: Option<f64>) -> WidthMode {
    match sigma {
        Some(s) => WidthMode::Fixed { sigma: s },
        None => WidthMode::Shrinking { fallback: acceptance::n5_widths() },
    }
}

fn require_k(rc: &RunConfig) -> Outcome<usize> {
    rc.configuration.k.ok_or_else(|| Failure::Config("config error in `configuration.k`: missing".into()))
}

fn cmd_reduce(rc: &RunConfig, mode: Option<ModeArg>, sigma: Option<f64>) -> Outcome<Produced> {
    let dim = rc.dimension()?;
    let k = require_k(rc)?;
    let v = rc.potential()?;
    let mode = match mode {
        Some(ModeArg::Minmax) => SolveMode::Minmax,
        _ => SolveMode::Max,
    };
    let r0 = box_radius(rc, &v, mode)?;
    let bx = make_boxes(dim, k, r0, &v, width_mode(sigma))?;
    let tol = rc.tolerances.rel_tol.unwrap_or(acceptance::SCALING_TOL);
    match solve_critical(&bx, &v, mode) {
        Ok(cp) => {
            let ok = cp.h_rel_residual < tol && cp.mu_rel_residual < tol;
            Ok(Produced {
                json: json!({ "box": to_value(&bx), "critical_point": to_value(&cp), "scaling_tol": tol }),
                csv: None,
                failed: if ok { vec![] } else { vec!["6".into()] },
            })
        }
        Err(e @ Error::BoundaryExtremum { .. }) => Ok(Produced {
            json: json!({ "box": to_value(&bx), "error": e.to_string() }),
            csv: None,
            failed: vec!["6".into()],
        }),
        Err(e) => Err(e.into()),
    }
}

fn cmd_flow(rc: &RunConfig, starts: usize, sigma: Option<f64>) -> Outcome<Produced> {
    let dim = rc.dimension()?;
    let k = require_k(rc)?;
    let v = rc.potential()?;
    let r0 = box_radius(rc, &v, SolveMode::Minmax)?;
    let bx = make_boxes(dim, k, r0, &v, width_mode(sigma))?;
    let mut opts = FlowOptions::default();
    if let Some(t) = rc.tolerances.rel_tol {
        opts.rel_tol = t;
    }
    let rep = flow_confinement(&bx, &v, &random_starts(&bx, starts, rc.seed()), &opts)?;
    let csv = csv_text(&["trajectory", "t", "r", "h", "mu", "F"], |w| {
        for (i, tr) in rep.trajectories.iter().enumerate() {
            for p in &tr.points {
                w.serialize((i, p.t, p.r, p.h, p.mu, p.f_bar))?;
            }
        }
        Ok(())
    })?;
    let failed = if rep.escapes == 0 { vec![] } else { vec!["8".into()] };
    Ok(Produced {
        json: json!({ "box": to_value(&bx), "options": to_value(&opts), "report": to_value(&rep) }),
        csv: Some(csv),
        failed,
    })
}

fn cmd_residual(rc: &RunConfig, ks: &[usize], tau: f64) -> Outcome<Produced> {
    let dim = rc.dimension()?;
    let v = rc.potential()?;
    let r0 = box_radius(rc, &v, SolveMode::Max)?;
    let path = ScalingPath::critical(dim, r0, &v);
    let s = residual_scaling(dim, &v, &path, ks, &mspec(rc, acceptance::RESIDUAL_SAMPLES), tau)?;
    let failed = if s.spread <= acceptance::RESIDUAL_SPREAD { vec![] } else { vec!["9".into()] };
    Ok(Produced {
        json: json!({ "path": to_value(&path), "scaling": to_value(&s), "spread_tol": acceptance::RESIDUAL_SPREAD }),
        csv: Some(s.to_csv()?),
        failed,
    })
}

fn cmd_report(quick: bool, only: &[u32]) -> Outcome<Produced> {
    let ids = if only.is_empty() { acceptance::criterion_ids(quick) } else { only.to_vec() };
    let mut results: Vec<CriterionResult> = Vec::with_capacity(ids.len());
    for id in ids {
        let res = acceptance::run_criterion(id)
            .ok_or_else(|| Failure::Config(format!("config error in `only`: unknown criterion id {id}")))?;
        eprintln!("{}", res.line());
        results.push(res);
    }
    let failed = results.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    Ok(Produced {
        json: json!({ "quick": quick, "passed": results.iter().all(|r| r.passed), "criteria": to_value(&results) }),
        csv: None,
        failed,
    })
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Constants => "constants",
        Cmd::Geometry => "geometry",
        Cmd::Sums { .. } => "sums",
        Cmd::Pairwise { .. } => "pairwise",
        Cmd::Energy => "energy",
        Cmd::Reduce { .. } => "reduce",
        Cmd::Flow { .. } => "flow",
        Cmd::Residual { .. } => "residual",
        Cmd::Report { .. } => "report",
    }
}

fn run(cli: &Cli) -> Outcome<Vec<String>> {
    let rc = load(&cli.common)?;
    if let Some(n) = rc.workers {
        if n == 0 {
            return Err(Failure::Config("config error in `workers`: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let produced = match &cli.cmd {
        Cmd::Constants => cmd_constants(&rc),
        Cmd::Geometry => cmd_geometry(&rc),
        Cmd::Sums { alpha, ring, weight, ks } => cmd_sums(&rc, *alpha, *ring, *weight, ks),
        Cmd::Pairwise { d } => cmd_pairwise(&rc, d),
        Cmd::Energy => cmd_energy(&rc),
        Cmd::Reduce { mode, sigma } => cmd_reduce(&rc, *mode, *sigma),
        Cmd::Flow { starts, sigma } => cmd_flow(&rc, *starts, *sigma),
        Cmd::Residual { ks, tau } => cmd_residual(&rc, ks, *tau),
        Cmd::Report { quick, only } => cmd_report(*quick, only),
    }?;
    let text = match (rc.format(), produced.csv) {
        (OutputFormat::Csv, Some(csv)) => csv,
        (OutputFormat::Csv, None) => {
            return Err(Failure::Config(format!(
                "config error in `output.format`: `{}` has no CSV form",
                command_name(&cli.cmd)
            )))
        }
        (OutputFormat::Json, _) => {
            let doc = json!({
                "schema": SCHEMA,
                "command": command_name(&cli.cmd),
                "seed": rc.seed(),
                "result": produced.json,
            });
            serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n"
        }
    };
    match &rc.output.path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Runtime(format!("{p}: {e}")))?,
        None => print!("{text}"),
    }
    Ok(produced.failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(failed) if failed.is_empty() => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("failed criteria: {}", failed.join(", "));
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

//! Command-line front end: group loading, spectral classification, the
//! Plancherel integral, kernel grids, multiplier recovery, coarea
//! pushforwards and the verification suite.
//!
//! Exit codes: 0 success, 2 configuration error, 3 out-of-scope group
//! (MW+ or unsupported dimensions for the transforms), 4 numerical
//! divergence.

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use nilspectral::disintegration::{pushforward_density, ConeSpec, FiberQuad, LinearMapSpec};
use nilspectral::error::Error;
use nilspectral::group::load_definition;
use nilspectral::multiplier::PolyTerm;
use nilspectral::plancherel::{integrate_beta, kernel_eval, kernel_grid, multiplier_ground};
use nilspectral::spectral::classify_group;
use nilspectral::verify;
use nilspectral::{MetricForm, MultiplierSpec, QuadratureScheme, StratifiedAlgebra};

#[derive(Parser)]
#[command(
    name = "nilspectral",
    about = "Spectral multipliers on 2-step stratified groups",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GroupArgs {
    /// Builtin name (free2step:N, heisenberg, h1xr, abelian:N,
    /// product:[a,b]) or a path to a JSON group definition.
    #[arg(long)]
    group: String,

    /// RNG seed for sampling-based steps.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Quadrature overrides, repeatable: key=value with keys
    /// omega_points, lambda_order, lambda_cut, gamma_epsilon,
    /// omega_half, group_half_x, group_half_t, group_points_x,
    /// group_points_t.
    #[arg(long = "quad", value_name = "KEY=VALUE")]
    quad: Vec<String>,

    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct MultiplierArg {
    /// Multiplier spec: heat:A | gauss:A,B | polygauss:A,B:c,pl,pz...[;...]
    /// | grid:FILE.json
    #[arg(long, default_value = "heat:1")]
    multiplier: String,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the group: generic kernel dimension, eigenvalue count,
    /// MW+ status.
    Classify(GroupArgs),
    /// Integrate a multiplier against the Plancherel measure.
    Plancherel {
        #[command(flatten)]
        group: GroupArgs,
        #[command(flatten)]
        multiplier: MultiplierArg,
    },
    /// Evaluate the convolution kernel at a point or over the grid.
    Kernel {
        #[command(flatten)]
        group: GroupArgs,
        #[command(flatten)]
        multiplier: MultiplierArg,
        /// Group point "x1,..,xn;t1,..,tm"; omit for the whole grid.
        #[arg(long)]
        point: Option<String>,
    },
    /// Recover the multiplier from its kernel at ground-state spectral
    /// points (round trip harness).
    Multiplier {
        #[command(flatten)]
        group: GroupArgs,
        #[command(flatten)]
        multiplier: MultiplierArg,
        /// Specific covector "z1,..,zm" (default: seeded samples).
        #[arg(long)]
        omega: Option<String>,
        /// Excess over the ground-state norm (with --omega).
        #[arg(long)]
        lambda: Option<f64>,
        /// Number of seeded spectral points without --omega.
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Coarea pushforward density of a cone under a linear map.
    Pushforward {
        /// Builtin cone: orthant:N (unit density on [0, side]^N).
        #[arg(long, default_value = "orthant:2")]
        cone: String,
        /// Box side for the density restriction.
        #[arg(long, default_value_t = 1.0)]
        side: f64,
        /// Number of output grid points over the image interval.
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the verification suite (TAP output).
    Verify {
        /// all | fast (fast skips the two long transform checks)
        #[arg(long, default_value = "all")]
        suite: String,
        /// A group argument is accepted for config validation.
        #[arg(long)]
        group: Option<String>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::MwPlusGroup(_) | Error::Unsupported(_) => 3,
        Error::Divergence(_) | Error::ResourceLimit(_) => 4,
        _ => 2,
    }
}

fn load_group(spec: &str) -> Result<(StratifiedAlgebra, MetricForm), Error> {
    if spec.contains('/') || spec.ends_with(".json") {
        load_definition(spec)
    } else {
        let alg = StratifiedAlgebra::parse_builtin(spec)?;
        let metric = MetricForm::identity(alg.dim_g1());
        Ok((alg, metric))
    }
}

fn parse_multiplier(spec: &str) -> Result<MultiplierSpec, Error> {
    let bad = |msg: &str| Error::InvalidArgument(format!("multiplier {spec:?}: {msg}"));
    let (kind, rest) = spec.split_once(':').ok_or_else(|| bad("missing parameters"))?;
    let m = match kind {
        "heat" => MultiplierSpec::heat(rest.parse().map_err(|_| bad("bad heat rate"))?),
        "gauss" => {
            let (a, b) = rest.split_once(',').ok_or_else(|| bad("gauss needs a,b"))?;
            MultiplierSpec::gauss(
                a.parse().map_err(|_| bad("bad a"))?,
                b.parse().map_err(|_| bad("bad b"))?,
            )
        }
        "polygauss" => {
            let (ab, terms_str) = rest.split_once(':').ok_or_else(|| bad("polygauss:A,B:terms"))?;
            let (a, b) = ab.split_once(',').ok_or_else(|| bad("polygauss needs a,b"))?;
            let mut terms = Vec::new();
            for t in terms_str.split(';') {
                let fields: Vec<&str> = t.split(',').collect();
                if fields.len() < 2 {
                    return Err(bad("term needs coef,lambda_pow[,zeta_pows...]"));
                }
                terms.push(PolyTerm {
                    coef: fields[0].parse().map_err(|_| bad("bad coef"))?,
                    lambda_pow: fields[1].parse().map_err(|_| bad("bad lambda power"))?,
                    zeta_pows: fields[2..]
                        .iter()
                        .map(|f| f.parse().map_err(|_| bad("bad zeta power")))
                        .collect::<Result<_, _>>()?,
                });
            }
            MultiplierSpec::PolyGauss {
                a: a.parse().map_err(|_| bad("bad a"))?,
                b: b.parse().map_err(|_| bad("bad b"))?,
                terms,
            }
        }
        "grid" => {
            let text = std::fs::read_to_string(rest)?;
            let g: nilspectral::multiplier::GridMultiplier = serde_json::from_str(&text)?;
            MultiplierSpec::Grid(g)
        }
        _ => return Err(bad("unknown kind")),
    };
    m.validate()?;
    Ok(m)
}

fn parse_vector(s: &str) -> Result<Vec<f64>, Error> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad number {p:?}")))
        })
        .collect()
}

fn apply_quad_overrides(
    scheme: &mut QuadratureScheme,
    alg: &StratifiedAlgebra,
    overrides: &[String],
) -> Result<(), Error> {
    for kv in overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("quad override {kv:?} needs key=value")))?;
        let fval: f64 = value
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad quad value {value:?}")))?;
        let uval = fval as usize;
        match key {
            "omega_points" => scheme.omega_points.iter_mut().for_each(|n| *n = uval),
            "lambda_order" => scheme.lambda_order = uval,
            "lambda_cut" => scheme.lambda_cut = fval,
            "gamma_epsilon" => scheme.gamma_epsilon = fval,
            "omega_half" => scheme
                .omega_box
                .iter_mut()
                .for_each(|b| *b = (-fval, fval)),
            "group_half_x" => {
                for k in 0..alg.dim_g1() {
                    scheme.group_box[k] = (-fval, fval);
                }
            }
            "group_half_t" => {
                for k in 0..alg.dim_g2() {
                    scheme.group_box[alg.dim_g1() + k] = (-fval, fval);
                }
            }
            "group_points_x" => {
                for k in 0..alg.dim_g1() {
                    scheme.group_points[k] = uval;
                }
            }
            "group_points_t" => {
                for k in 0..alg.dim_g2() {
                    scheme.group_points[alg.dim_g1() + k] = uval;
                }
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown quad override key {key:?}"
                )))
            }
        }
    }
    Ok(())
}

struct Output {
    sink: Box<dyn Write>,
}

impl Output {
    fn new(path: &Option<PathBuf>) -> Result<Self, Error> {
        let sink: Box<dyn Write> = match path {
            Some(p) => Box::new(std::fs::File::create(p)?),
            None => Box::new(std::io::stdout()),
        };
        Ok(Output { sink })
    }

    fn line(&mut self, s: &str) -> Result<(), Error> {
        writeln!(self.sink, "{s}")?;
        Ok(())
    }
}

fn fmt_floats(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn run() -> Result<(), Error> {
    nilspectral::init_thread_pool_from_env();
    let cli = Cli::parse();
    match cli.command {
        Command::Classify(args) => {
            let (alg, metric) = load_group(&args.group)?;
            let class = classify_group(&alg, &metric, 64, args.seed)?;
            if class.is_mw_plus {
                eprintln!(
                    "warning: {} is an MW+ group; transform commands will refuse it",
                    alg.name()
                );
            }
            let mut out = Output::new(&args.out)?;
            out.line(&serde_json::to_string_pretty(&serde_json::json!({
                "group": alg.name(),
                "d": class.d,
                "h_bar": class.h_bar,
                "n1": class.n1,
                "is_mw_plus": class.is_mw_plus,
                "hom_dim": alg.hom_dim(),
                "seed": class.seed,
            }))?)?;
        }
        Command::Plancherel { group, multiplier } => {
            let (alg, metric) = load_group(&group.group)?;
            let class = classify_group(&alg, &metric, 64, group.seed)?;
            let m = parse_multiplier(&multiplier.multiplier)?;
            let mut scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m)?;
            apply_quad_overrides(&mut scheme, &alg, &group.quad)?;
            let value = integrate_beta(&alg, &metric, &class, &m, &scheme)?;
            let mut out = Output::new(&group.out)?;
            out.line("group,multiplier,value_re,value_im")?;
            out.line(&format!("{},{},{},0", alg.name(), m.describe(), value))?;
        }
        Command::Kernel {
            group,
            multiplier,
            point,
        } => {
            let (alg, metric) = load_group(&group.group)?;
            let class = classify_group(&alg, &metric, 64, group.seed)?;
            let m = parse_multiplier(&multiplier.multiplier)?;
            let mut scheme = QuadratureScheme::kernel_default(&alg, &metric, &class, &m)?;
            apply_quad_overrides(&mut scheme, &alg, &group.quad)?;
            let mut out = Output::new(&group.out)?;
            let xs_header: Vec<String> = (1..=alg.dim_g1()).map(|i| format!("x{i}")).collect();
            let ts_header: Vec<String> = (1..=alg.dim_g2()).map(|i| format!("t{i}")).collect();
            out.line(&format!(
                "{},{},value_re,value_im",
                xs_header.join(","),
                ts_header.join(",")
            ))?;
            if let Some(pt) = point {
                let (xs, ts) = pt
                    .split_once(';')
                    .ok_or_else(|| Error::InvalidArgument("point needs 'x...;t...'".into()))?;
                let x = parse_vector(xs)?;
                let t = parse_vector(ts)?;
                let v = kernel_eval(
                    &alg,
                    &metric,
                    &class,
                    &m,
                    &DVector::from_column_slice(&x),
                    &DVector::from_column_slice(&t),
                    &scheme,
                )?;
                out.line(&format!(
                    "{},{},{},{}",
                    fmt_floats(&x),
                    fmt_floats(&t),
                    v.re,
                    v.im
                ))?;
            } else {
                let grid = kernel_grid(&alg, &metric, &class, &m, &scheme)?;
                let total: usize = grid.dims.iter().product();
                let mut idx = vec![0usize; grid.dims.len()];
                for flat in 0..total {
                    let mut rem = flat;
                    for k in (0..grid.dims.len()).rev() {
                        idx[k] = rem % grid.dims[k];
                        rem /= grid.dims[k];
                    }
                    let p = grid.point_at(&idx);
                    let v = grid.values[flat];
                    out.line(&format!("{},{},{}", fmt_floats(&p), v.re, v.im))?;
                }
            }
        }
        Command::Multiplier {
            group,
            multiplier,
            omega,
            lambda,
            points,
        } => {
            let (alg, metric) = load_group(&group.group)?;
            let class = classify_group(&alg, &metric, 64, group.seed)?;
            let m = parse_multiplier(&multiplier.multiplier)?;
            let mut scheme = QuadratureScheme::kernel_default(&alg, &metric, &class, &m)?;
            apply_quad_overrides(&mut scheme, &alg, &group.quad)?;
            let grid = kernel_grid(&alg, &metric, &class, &m, &scheme)?;
            let mut out = Output::new(&group.out)?;
            let zs_header: Vec<String> = (1..=alg.dim_g2()).map(|i| format!("zeta{i}")).collect();
            out.line(&format!(
                "lambda,{},m_recovered_re,m_recovered_im,m_true,rel_err",
                zs_header.join(",")
            ))?;
            let mut emit = |omega: &DVector<f64>, lam: f64| -> Result<(), Error> {
                let rec = multiplier_ground(&alg, &metric, &class, &grid, lam, omega)?;
                let n = nilspectral::spectral::ground_norm_extended(&alg, &metric, omega)?;
                let zeta: Vec<f64> = omega.iter().copied().collect();
                let truth = m.eval(n + lam, &zeta);
                let rel = (rec.re - truth).abs() / truth.abs().max(1e-300);
                out.line(&format!(
                    "{},{},{},{},{},{}",
                    n + lam,
                    fmt_floats(&zeta),
                    rec.re,
                    rec.im,
                    truth,
                    rel
                ))
            };
            if let Some(oz) = omega {
                let z = parse_vector(&oz)?;
                if z.len() != alg.dim_g2() {
                    return Err(Error::DimensionMismatch(
                        "omega length must equal dim_g2".into(),
                    ));
                }
                emit(&DVector::from_column_slice(&z), lambda.unwrap_or(0.0))?;
            } else {
                // seeded spectral points, deterministic in --seed
                use nilspectral::quad::linspace;
                let n2 = alg.dim_g2();
                let dirs = linspace(0.35, 1.5, points);
                for (i, &r) in dirs.iter().enumerate() {
                    let mut z = vec![0.0; n2];
                    for (k, zk) in z.iter_mut().enumerate() {
                        let phase = (group.seed as f64 + i as f64 * 0.7 + k as f64) * 2.399963;
                        *zk = r * phase.cos();
                    }
                    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        z.iter_mut().for_each(|v| *v *= r / norm);
                    } else {
                        z[0] = r;
                    }
                    let lam = 0.1 + 1.4 * (i as f64 / points.max(1) as f64);
                    emit(&DVector::from_column_slice(&z), lam)?;
                }
            }
        }
        Command::Pushforward {
            cone,
            side,
            points,
            out,
        } => {
            let dim: usize = cone
                .strip_prefix("orthant:")
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("unknown cone {cone:?}; use orthant:N"))
                })?;
            let cone = ConeSpec::orthant(dim, side);
            let map = LinearMapSpec::new(DMatrix::from_fn(1, dim, |_, _| 1.0))?;
            let mut output = Output::new(&out)?;
            output.line("y,g")?;
            let y_max = side * dim as f64;
            for i in 0..points {
                let y = y_max * i as f64 / (points.max(2) - 1) as f64;
                let g = pushforward_density(&cone, &map, &[y], FiberQuad::default())?;
                output.line(&format!("{y},{g}"))?;
            }
        }
        Command::Verify { suite, group } => {
            if let Some(g) = group {
                load_group(&g)?; // config validation only
            }
            let results = match suite.as_str() {
                "all" => verify::run_all(false),
                "fast" => verify::run_all(true),
                other => match other.parse::<usize>().ok().and_then(verify::run_one) {
                    Some(r) => vec![r],
                    None => {
                        return Err(Error::InvalidArgument(format!(
                            "unknown suite {other:?} (use all|fast|criterion number)"
                        )))
                    }
                },
            };
            println!("1..{}", results.len());
            let mut ok = true;
            for r in &results {
                println!("{}", r.tap_line());
                ok &= r.passed;
            }
            if !ok {
                return Err(Error::Divergence("verification criteria failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

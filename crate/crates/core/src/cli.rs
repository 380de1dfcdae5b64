//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 validation failure, 2 solver failure, 3 bad config or usage.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use serde::Serialize;

use crate::cell::{sample_coefficients, solve_cell, CellResolution, CoefficientCache, EffectiveCoefficients};
use crate::error::{Error, Result};
use crate::experiments::{load_config, run_study, ExperimentConfig, Study, StudyReport};
use crate::homog1d::{solve_homogenized, FHat};
use crate::mesh::write_mesh;
use crate::plap::{inequality_suite, SolveConfig};
use crate::profiles::{validate_hypothesis, Expr, Profile, ProfileSpec, Side, ValidationGrid, Var};
use crate::thin2d::{solve_epsilon_problem, EpsilonProblem, ThinResolution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "thinhomog", version, about = "Homogenized p-Laplacian on thin rough domains")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalArgs {
    /// Study config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Profile spec (JSON).
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Output directory; THINHOMOG_OUT takes precedence.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One cell solve; prints q and r.
    Cell {
        /// Slow variable at which the section is taken.
        #[arg(long, default_value_t = 0.5)]
        x: f64,
        #[arg(long, default_value_t = 64)]
        n1: usize,
        #[arg(long, default_value_t = 64)]
        n2: usize,
    },
    /// q(x), r(x) on a uniform x-grid, written as CSV.
    Coeffs {
        #[arg(long, default_value_t = 33)]
        samples: usize,
        #[arg(long, default_value_t = 32)]
        n1: usize,
        #[arg(long, default_value_t = 16)]
        n2: usize,
    },
    /// Limit problem with q, r, f̂ given as expressions in x (or --coeffs CSV).
    Solve1d {
        #[arg(long)]
        q: Option<String>,
        #[arg(long)]
        r: Option<String>,
        /// x,q,r CSV as written by `coeffs`.
        #[arg(long, conflicts_with_all = ["q", "r"])]
        coeffs: Option<PathBuf>,
        #[arg(long)]
        fhat: String,
        #[arg(long, default_value_t = 256)]
        n: usize,
    },
    /// Thin-domain solve; writes the mesh and nodal values.
    Solve2d {
        /// Load f(x, y).
        #[arg(long, default_value = "cos(pi*x)")]
        f: String,
        #[arg(long, default_value_t = 32)]
        points_per_period: usize,
        #[arg(long, default_value_t = 8)]
        layers: usize,
    },
    /// Homogenization convergence study.
    Converge,
    /// Piecewise consistency study.
    Piecewise,
    /// Domain dependence study.
    Domaindep,
    /// Coefficient continuity study.
    Appendix,
    /// Checks a profile against hypothesis (H).
    Validate {
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Fast invariant suites.
    Selftest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Cell { .. } => "cell",
            Command::Coeffs { .. } => "coeffs",
            Command::Solve1d { .. } => "solve1d",
            Command::Solve2d { .. } => "solve2d",
            Command::Converge => "converge",
            Command::Piecewise => "piecewise",
            Command::Domaindep => "domaindep",
            Command::Appendix => "appendix",
            Command::Validate { .. } => "validate",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub subcommand: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// What a subcommand did: files written, a hash of its inputs and the exit code.
struct Outcome {
    hash: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    code: i32,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Profile(_)
        | Error::Syntax { .. }
        | Error::Eval(_)
        | Error::Io(_)
        | Error::Format { .. }
        | Error::Resolution(_) => EXIT_CONFIG,
        Error::Hypothesis(_) => EXIT_VALIDATION,
        Error::CellAt { source, .. } => exit_code(source),
        _ => EXIT_SOLVER,
    }
}

/// Parses `args` (program name first) and runs; never exits the process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    let out = std::env::var_os("THINHOMOG_OUT")
        .map(PathBuf::from)
        .or_else(|| cli.global.out.clone())
        .unwrap_or_else(|| PathBuf::from("thinhomog-out"));
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_CONFIG;
        }
        #[cfg(feature = "parallel")]
        {
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
        }
    }
    let started = now();
    let name = cli.command.name();
    match dispatch(&cli, &out) {
        Ok(o) => {
            let manifest = RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").into(),
                config_hash: o.hash,
                subcommand: name.into(),
                inputs: o.inputs,
                outputs: o.outputs,
                started,
                finished: now(),
            };
            let path = out.join(format!("{name}.manifest.json"));
            let written = std::fs::create_dir_all(&out)
                .map_err(Error::from)
                .and_then(|_| {
                    let text = serde_json::to_string_pretty(&manifest)
                        .map_err(|e| Error::Io(e.to_string()))?;
                    std::fs::write(&path, text + "\n").map_err(Error::from)
                });
            if let Err(e) = written {
                eprintln!("error: cannot write manifest: {e}");
                return EXIT_CONFIG;
            }
            o.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn need<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("missing required flag --{flag}")))
}

fn read_profile(path: &Path) -> Result<(Profile, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let spec: ProfileSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        Error::Config(format!("{}: at '{at}': {}", path.display(), e.into_inner()))
    })?;
    Ok((Profile::from_spec(&spec)?, text))
}

fn check_p(p: f64) -> Result<f64> {
    if p > 1.0 && p.is_finite() {
        Ok(p)
    } else {
        Err(Error::Config(format!("p must exceed 1, got {p}")))
    }
}

fn x_expr(src: &str, what: &str) -> Result<Expr> {
    let e = Expr::parse(src)?;
    if e.uses(Var::Y) {
        return Err(Error::Config(format!("--{what} must depend on x only")));
    }
    Ok(e)
}

fn write_file(path: PathBuf, bytes: Vec<u8>) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, bytes)?;
    Ok(path)
}

fn dispatch(cli: &Cli, out: &Path) -> Result<Outcome> {
    let g = &cli.global;
    let solver = SolveConfig::default();
    match &cli.command {
        Command::Cell { x, n1, n2 } => {
            let path = need(&g.profile, "profile")?;
            let (profile, text) = read_profile(path)?;
            let p = check_p(*need(&g.p, "p")?)?;
            let res = CellResolution { n1: *n1, n2: *n2 };
            let sol = solve_cell(&profile, *x, Side::Right, p, res, &solver)?;
            println!("q={:.12} r={:.12}", sol.q_flux, sol.r);
            Ok(Outcome {
                hash: sha256_hex(format!("cell {text} {p} {x} {n1} {n2}").as_bytes()),
                inputs: vec![path.clone()],
                outputs: vec![],
                code: EXIT_OK,
            })
        }
        Command::Coeffs { samples, n1, n2 } => {
            let path = need(&g.profile, "profile")?;
            let (profile, text) = read_profile(path)?;
            let p = check_p(*need(&g.p, "p")?)?;
            if *samples < 2 {
                return Err(Error::Config("--samples must be at least 2".into()));
            }
            let xs: Vec<f64> = (0..*samples)
                .map(|k| k as f64 / (*samples - 1) as f64)
                .collect();
            let res = CellResolution { n1: *n1, n2: *n2 };
            let c = sample_coefficients(&profile, &xs, p, res, &solver, &CoefficientCache::new())?;
            let mut buf = Vec::new();
            c.write_csv(&mut buf)?;
            let file = write_file(out.join("coeffs.csv"), buf)?;
            Ok(Outcome {
                hash: sha256_hex(format!("coeffs {text} {p} {samples} {n1} {n2}").as_bytes()),
                inputs: vec![path.clone()],
                outputs: vec![file],
                code: EXIT_OK,
            })
        }
        Command::Solve1d {
            q,
            r,
            coeffs,
            fhat,
            n,
        } => {
            let p = check_p(*need(&g.p, "p")?)?;
            let mut inputs = Vec::new();
            let c = match coeffs {
                Some(path) => {
                    let f = std::fs::File::open(path).map_err(|e| {
                        Error::Config(format!("cannot read {}: {e}", path.display()))
                    })?;
                    inputs.push(path.clone());
                    EffectiveCoefficients::read_csv(std::io::BufReader::new(f))?
                }
                None => {
                    let qe = x_expr(need(q, "q")?, "q")?;
                    let re = x_expr(need(r, "r")?, "r")?;
                    // nodal samples; the solver takes element midpoints
                    let xs: Vec<f64> = (0..=*n).map(|k| k as f64 / *n as f64).collect();
                    let qs = xs.iter().map(|&x| qe.eval(x, 0.0)).collect::<Result<_>>()?;
                    let rs = xs.iter().map(|&x| re.eval(x, 0.0)).collect::<Result<_>>()?;
                    EffectiveCoefficients::from_samples(xs, qs, rs)?
                }
            };
            let fe = x_expr(fhat, "fhat")?;
            fe.eval(0.5, 0.0)?;
            let f = FHat::function(move |x| fe.eval(x, 0.0).unwrap_or(f64::NAN));
            let (u, _) = solve_homogenized(&c, &f, p, *n, &solver)?;
            let mut buf = Vec::new();
            u.write_csv(&mut buf)?;
            let file = write_file(out.join("solve1d.csv"), buf)?;
            Ok(Outcome {
                hash: sha256_hex(
                    format!("solve1d {:?} {:?} {:?} {fhat} {p} {n}", q, r, coeffs).as_bytes(),
                ),
                inputs,
                outputs: vec![file],
                code: EXIT_OK,
            })
        }
        Command::Solve2d {
            f,
            points_per_period,
            layers,
        } => {
            let path = need(&g.profile, "profile")?;
            let (profile, text) = read_profile(path)?;
            let p = check_p(*need(&g.p, "p")?)?;
            let eps = *need(&g.eps, "eps")?;
            let fe = Expr::parse(f)?;
            fe.eval(0.5, 0.5)?;
            let res = ThinResolution {
                points_per_period: *points_per_period,
                layers: *layers,
                ..ThinResolution::default()
            };
            let prob = EpsilonProblem::new(
                profile,
                eps,
                move |x, y| fe.eval(x, y).unwrap_or(f64::NAN),
                p,
                res,
            )?;
            let sol = solve_epsilon_problem(&prob, &solver)?;
            let mut mesh = Vec::new();
            write_mesh(sol.u.mesh(), &mut mesh)?;
            let mut field = String::from("x,y,u\n");
            for (k, q) in sol.u.mesh().nodes().iter().enumerate() {
                field.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e}\n",
                    q[0],
                    q[1],
                    sol.u.at_node(k)
                ));
            }
            let (lhs, rhs) = sol.apriori_bound();
            println!(
                "dofs={} iterations={} |||u|||^(p-1)={lhs:.12} |||f|||={rhs:.12}",
                sol.u.mesh().dofs(),
                sol.report.iterations
            );
            let outputs = vec![
                write_file(out.join("solve2d.mesh"), mesh)?,
                write_file(out.join("solve2d.csv"), field.into_bytes())?,
            ];
            Ok(Outcome {
                hash: sha256_hex(
                    format!("solve2d {text} {p} {eps} {f} {points_per_period} {layers}").as_bytes(),
                ),
                inputs: vec![path.clone()],
                outputs,
                code: EXIT_OK,
            })
        }
        Command::Converge => study(g, Study::Convergence, out, &solver),
        Command::Piecewise => study(g, Study::Piecewise, out, &solver),
        Command::Domaindep => study(g, Study::DomainDependence, out, &solver),
        Command::Appendix => study(g, Study::Appendix, out, &solver),
        Command::Validate { tol } => {
            let path = need(&g.profile, "profile")?;
            let (profile, text) = read_profile(path)?;
            let (report, code) = match validate_hypothesis(&profile, ValidationGrid::default(), *tol) {
                Ok(r) => {
                    let code = if r.pass { EXIT_OK } else { EXIT_VALIDATION };
                    (serde_json::to_value(&r).map_err(|e| Error::Io(e.to_string()))?, code)
                }
                Err(Error::Hypothesis(m)) => {
                    (serde_json::json!({ "pass": false, "failures": [m] }), EXIT_VALIDATION)
                }
                Err(e) => return Err(e),
            };
            let text_out = serde_json::to_string_pretty(&report).unwrap_or_default();
            println!("{text_out}");
            let file = write_file(out.join("validate.json"), (text_out + "\n").into_bytes())?;
            Ok(Outcome {
                hash: sha256_hex(format!("validate {text} {tol}").as_bytes()),
                inputs: vec![path.clone()],
                outputs: vec![file],
                code,
            })
        }
        Command::Selftest => {
            let seed = g.seed.unwrap_or(0);
            let (lines, pass) = selftest(seed, &solver);
            let mut text = String::new();
            for l in &lines {
                println!("{l}");
                text.push_str(l);
                text.push('\n');
            }
            let file = write_file(out.join("selftest.txt"), text.into_bytes())?;
            Ok(Outcome {
                hash: sha256_hex(format!("selftest {seed}").as_bytes()),
                inputs: vec![],
                outputs: vec![file],
                code: if pass { EXIT_OK } else { EXIT_VALIDATION },
            })
        }
    }
}

fn study(g: &GlobalArgs, kind: Study, out: &Path, solver: &SolveConfig) -> Result<Outcome> {
    let path = need(&g.config, "config")?;
    let mut cfg: ExperimentConfig = load_config(path)?;
    if cfg.study != kind {
        return Err(Error::Config(format!(
            "{} describes a '{}' study",
            path.display(),
            cfg.study.name()
        )));
    }
    if let Some(p) = g.p {
        cfg.p = p;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let dir = std::env::var_os("THINHOMOG_OUT")
        .map(PathBuf::from)
        .or_else(|| g.out.clone())
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| out.to_path_buf());
    let (report, code, err): (StudyReport, i32, Option<Error>) = match run_study(&cfg, solver) {
        Ok(r) => {
            let code = if r.pass { EXIT_OK } else { EXIT_VALIDATION };
            (r, code, None)
        }
        Err(e) => {
            let code = exit_code(&e.error);
            (*e.partial, code, Some(e.error))
        }
    };
    let outputs = report.write_outputs(&dir)?;
    for c in &report.criteria {
        println!("{} {} {}", c.id, if c.pass { "PASS" } else { "FAIL" }, c.description);
    }
    println!("{}", serde_json::json!({"study": report.study, "config_hash": report.config_hash, "pass": report.pass}));
    if let Some(e) = err {
        eprintln!("error: {e}");
    }
    Ok(Outcome {
        hash: report.config_hash.clone(),
        inputs: vec![path.clone()],
        outputs,
        code,
    })
}

/// Quick invariant checks; one line per check.
pub fn selftest(seed: u64, solver: &SolveConfig) -> (Vec<String>, bool) {
    let mut lines = Vec::new();
    let mut all = true;
    let mut check = |name: &str, r: Result<(bool, String)>| {
        let (ok, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        all &= ok;
        lines.push(format!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" }));
    };

    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    for p in [1.2, 1.5, 2.0, 3.0, 4.0] {
        let r = inequality_suite(p, 2000, 1e-12, &mut rng);
        check(
            &format!("inequalities p={p}"),
            Ok((r.pass(), format!("c_p={:.3e}", r.monotonicity_constant))),
        );
    }
    check("flat cell", (|| {
        let g = Profile::constant(2.0, 1.0)?;
        let s = solve_cell(&g, 0.5, Side::Right, 3.0, CellResolution { n1: 16, n2: 16 }, solver)?;
        let ok = s.max_abs_corrector() <= 1e-10 && (s.q_flux - 2.0).abs() <= 2e-10;
        Ok((ok, format!("q={:.12} max|psi|={:.1e}", s.q_flux, s.max_abs_corrector())))
    })());
    check("sine cell", (|| {
        let g = Profile::expression("1 + 0.5*sin(2*pi*y)", 1.0, 0.5, 1.5)?;
        let s = solve_cell(&g, 0.5, Side::Right, 2.0, CellResolution { n1: 16, n2: 8 }, solver)?;
        let ok = s.q_flux > 0.0 && s.q_flux < s.r && s.dual_defect() <= 1e-8;
        Ok((ok, format!("q={:.12} r={:.12}", s.q_flux, s.r)))
    })());
    check("1D constants", (|| {
        let c = EffectiveCoefficients::constant(1.0, 1.0);
        let (u, _) = solve_homogenized(&c, &FHat::function(|_| 1.0), 2.5, 64, solver)?;
        let e = u.values.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
        Ok((e <= 1e-10, format!("max|u-1|={e:.1e}")))
    })());
    check("2D constants", (|| {
        let g = Profile::constant(1.0, 1.0)?;
        let prob = EpsilonProblem::new(g, 0.25, |_, _| 1.0, 3.0, ThinResolution::default())?;
        let u = solve_epsilon_problem(&prob, solver)?.u;
        let e = u.values().iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
        Ok((e <= 1e-9, format!("max|u-1|={e:.1e}")))
    })());
    (lines, all)
}

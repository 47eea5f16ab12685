use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ndarray::{s, Array2};
use serde_json::{json, Value};
use tailflow::synthdata::{
    gen_bivariate_iid_t, gen_gaussian, gen_iid_t, gen_neals_funnel_with, load_csv, standardize, write_csv,
    ColumnStats, DataError, Dataset, Provenance,
};
use tailflow::tailquant::{
    classify_tail, estimate_gamma, norm_reduce, FitWindow, GammaMethod, Rearrangement1D, SortedSample, TailError,
    DEFAULT_POINTS,
};
use tailflow::trainer::{derive_seed, train, TrainError};

use crate::spec::{parse_law, ExperimentSpec, FitOptions, FunnelScaleArg, Target, OUT_ENV};
use crate::CliError;

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidParameter(m) => CliError::Usage(m),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<TailError> for CliError {
    fn from(e: TailError) -> Self {
        match e {
            TailError::Domain { .. } => CliError::Usage(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Stream tag of the seed that draws synthetic `fit` targets.
const DATA_STREAM: u64 = 4;

pub fn fit(config: Option<&Path>, flags: FitOptions) -> Result<(), CliError> {
    let file = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            FitOptions::from_config(&text)?
        }
        None => FitOptions::default(),
    };
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let spec = ExperimentSpec::resolve(flags, file, env_out)?;
    let cfg = &spec.train;

    let data_seed = derive_seed(cfg.seed, DATA_STREAM);
    let data = match &spec.target {
        Target::T2 => gen_bivariate_iid_t(2.0, spec.n, data_seed)?,
        Target::Funnel => gen_neals_funnel_with(spec.n, data_seed, spec.funnel_scale)?,
        Target::Csv(path) => {
            let raw = load_csv(path, spec.header)?;
            let split = cfg.split(raw.values.view()).map_err(|e| CliError::Data(e.to_string()))?;
            let stats = ColumnStats::from_values(&split.train)?;
            standardize(&stats, &raw)?
        }
    };

    let out = &spec.out;
    fs::create_dir_all(out).map_err(|source| CliError::Io { path: out.clone(), source })?;
    let report_path = out.join("report.json");

    let (model, report) = match train(cfg, &data.values) {
        Ok(r) => r,
        Err(TrainError::Diverged { epoch, reason, partial }) => {
            let partial = json!({
                "status": "diverged",
                "epoch": epoch,
                "reason": reason,
                "config": cfg,
                "provenance": data.provenance,
                "history": partial,
            });
            write_file(&report_path, &pretty(&partial))?;
            return Err(CliError::Numeric(format!(
                "training diverged in epoch {epoch}: {reason}; partial report in {}",
                report_path.display()
            )));
        }
        Err(TrainError::Config(m)) => return Err(CliError::Usage(m)),
        Err(TrainError::Tail(e)) => return Err(e.into()),
        Err(e) => return Err(CliError::Numeric(e.to_string())),
    };

    let mut doc = serde_json::to_value(&report).expect("reports serialise");
    let obj = doc.as_object_mut().expect("report is an object");
    obj.insert("status".into(), json!("ok"));
    obj.insert("provenance".into(), json!(data.provenance));
    write_file(&report_path, &pretty(&doc))?;
    write_file(&out.join("model.json"), &model.to_json())?;

    let m = cfg.gamma_samples;
    let source = model.source.sample(derive_seed(cfg.seed, 2), m);
    let rows = data.nrows().min(m);
    let target = data.values.slice(s![..rows, ..]).to_owned();
    let samples = model.sample(derive_seed(cfg.seed, 3), m).map_err(|e| CliError::Numeric(e.to_string()))?;
    let csv = quantile_table(&source, &target, &samples)?;
    write_file(&out.join("quantiles.csv"), &csv)?;

    println!(
        "test NLL {:.4}  gamma source {:.3} target {:.3} model {:.3}{}  -> {}",
        report.test_nll,
        report.gamma_source.gamma,
        report.gamma_target.gamma,
        report.gamma_model.gamma,
        report.nu.map(|nu| format!("  nu {nu:.3}")).unwrap_or_default(),
        out.display()
    );
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialise");
    s.push('\n');
    s
}

/// Probability levels of `quantiles.csv`: a uniform grid plus a dense tail.
pub fn quantile_levels() -> Vec<f64> {
    let body = (1..200).map(|i| i as f64 / 200.0);
    let tail = (1..=9).map(|i| 0.995 + i as f64 * 5e-4);
    body.chain(tail).collect()
}

fn quantile_table(source: &Array2<f64>, target: &Array2<f64>, model: &Array2<f64>) -> Result<String, CliError> {
    let sorted = [source, target, model]
        .map(|x| SortedSample::new(&norm_reduce(x)).map_err(|e| CliError::Numeric(e.to_string())));
    let [src, tgt, mdl] = sorted;
    let (src, tgt, mdl) = (src?, tgt?, mdl?);
    let mut out = String::from("u,Q_source,Q_target,Q_model,logQ_source,logQ_target,logQ_model\n");
    for u in quantile_levels() {
        let q = [&src, &tgt, &mdl].map(|s| s.quantile(u).expect("u in (0, 1)"));
        out.push_str(&format!("{u},{},{},{},{},{},{}\n", q[0], q[1], q[2], q[0].ln(), q[1].ln(), q[2].ln()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Quantile,
    Hill,
}

#[derive(Debug, Args)]
pub struct GammaArgs {
    /// CSV file of samples, one row per point
    pub input: PathBuf,
    /// The file has a header row
    #[arg(long)]
    pub header: bool,
    #[arg(long, default_value_t = FitWindow::default().lo)]
    pub window_lo: f64,
    #[arg(long, default_value_t = FitWindow::default().hi)]
    pub window_hi: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Quantile)]
    pub method: MethodArg,
    /// Regression grid size of the quantile method
    #[arg(long, default_value_t = DEFAULT_POINTS)]
    pub points: usize,
}

pub fn gamma(a: &GammaArgs) -> Result<(), CliError> {
    let window = FitWindow::new(a.window_lo, a.window_hi)?;
    if a.points < 2 {
        return Err(CliError::Usage("points must be at least 2".into()));
    }
    let method = match a.method {
        MethodArg::Quantile => GammaMethod::QuantileRegression { points: a.points },
        MethodArg::Hill => GammaMethod::Hill,
    };
    let data = load_csv(&a.input, a.header)?;
    let (values, reduced) = if data.ncols() == 1 {
        (data.values.column(0).to_vec(), "raw")
    } else {
        (norm_reduce(&data.values), "norm")
    };
    let profile = estimate_gamma(&values, window, method)?;
    let doc = json!({
        "n": data.nrows(),
        "dim": data.ncols(),
        "reduced": reduced,
        "gamma": profile.gamma,
        "alpha": profile.alpha,
        "beta": profile.beta,
        "r_squared": profile.r_squared,
        "window": profile.fit_window,
        "class": classify_tail(&profile),
        "profile": profile,
    });
    print!("{}", pretty(&doc));
    Ok(())
}

#[derive(Debug, Args)]
pub struct RearrangeArgs {
    /// Source law, e.g. gaussian or t(3)
    #[arg(long, default_value = "gaussian")]
    pub source: String,
    /// Target law, e.g. cauchy or uniform(0, 1)
    #[arg(long, default_value = "cauchy")]
    pub target: String,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    pub from: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub to: f64,
    #[arg(long, default_value_t = 61)]
    pub points: usize,
    /// Output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn rearrange(a: &RearrangeArgs) -> Result<(), CliError> {
    let source = parse_law(&a.source)?;
    let target = parse_law(&a.target)?;
    if a.points < 2 {
        return Err(CliError::Usage("points must be at least 2".into()));
    }
    if !(a.from < a.to && a.from.is_finite() && a.to.is_finite()) {
        return Err(CliError::Usage(format!("empty grid [{}, {}]", a.from, a.to)));
    }
    let t = Rearrangement1D::new(source, target);
    let mut out = String::from("z,T,T_prime,u\n");
    let span = a.to - a.from;
    for i in 0..a.points {
        let z = a.from + span * i as f64 / (a.points - 1) as f64;
        let p = t.evaluate_detailed(z);
        out.push_str(&format!("{z},{},{},{}\n", p.value, t.slope(z), p.u));
    }
    emit(a.out.as_deref(), &out)
}

fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, contents),
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            w.write_all(contents.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|source| CliError::Io { path: PathBuf::from("<stdout>"), source })
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// t2, t, t(NU), funnel or gaussian
    pub kind: String,
    /// Number of rows
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dimension of the t and gaussian kinds
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Degrees of freedom of the t kind
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, value_enum, default_value_t = FunnelScaleArg::Variance)]
    pub funnel_scale: FunnelScaleArg,
}

fn parse_t_kind(kind: &str) -> Option<Result<f64, CliError>> {
    if kind == "t" {
        return Some(Ok(2.0));
    }
    let inner = kind.strip_prefix("t(")?.strip_suffix(')')?;
    Some(inner.trim().parse().map_err(|e| CliError::Usage(format!("kind {kind:?}: {e}"))))
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::Usage("n must be at least one".into()));
    }
    let kind = a.kind.trim().to_ascii_lowercase();
    let data: Dataset = match kind.as_str() {
        "t2" => gen_bivariate_iid_t(2.0, a.n, a.seed)?,
        "funnel" => gen_neals_funnel_with(a.n, a.seed, a.funnel_scale.into())?,
        "gaussian" => gen_gaussian(a.dim, a.n, a.seed)?,
        _ => match parse_t_kind(&kind) {
            Some(nu) => {
                let nu = match (a.nu, nu?) {
                    (Some(flag), _) if kind != "t" => {
                        return Err(CliError::Usage(format!("--nu {flag} conflicts with kind {kind}")));
                    }
                    (Some(flag), _) => flag,
                    (None, nu) => nu,
                };
                gen_iid_t(nu, a.dim, a.n, a.seed)?
            }
            None => return Err(CliError::Usage(format!("unknown kind {:?}; expected t2, t, t(NU), funnel or gaussian", a.kind))),
        },
    };
    match &a.out {
        Some(p) => write_csv(p, &data).map_err(|e| match e {
            DataError::Io { path, source } => CliError::Io { path, source },
            e => e.into(),
        })?,
        None => {
            let mut s = String::new();
            for row in data.values.rows() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                s.push_str(&line.join(","));
                s.push('\n');
            }
            emit(None, &s)?;
        }
    }
    if let Provenance::Synthetic { generator, seed } = &data.provenance {
        log::info!("wrote {} rows of {generator} with seed {seed}", data.nrows());
    }
    Ok(())
}

//! Experiment specifications assembled from flags and config files.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use tailflow::dists::Distribution1D;
use tailflow::flow::{LayerKind, ScaleHead, ShiftHead};
use tailflow::synthdata::FunnelScale;
use tailflow::tailquant::FitWindow;
use tailflow::trainer::{SourceMode, TrainConfig};

use crate::CliError;

/// Environment variable naming the output directory of `fit`.
pub const OUT_ENV: &str = "TAILFLOW_OUT";

pub const DEFAULT_OUT: &str = "tailflow-out";

/// Training data of a `fit` run.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    T2,
    Funnel,
    Csv(PathBuf),
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "t2" => Ok(Self::T2),
            "funnel" => Ok(Self::Funnel),
            _ => match s.strip_prefix("csv:") {
                Some(p) if !p.is_empty() => Ok(Self::Csv(PathBuf::from(p))),
                _ => Err(format!("unknown target {s:?}; expected t2, funnel or csv:PATH")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Gaussian,
    Taf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleHeadArg {
    TanhExp,
    Sigmoid,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShiftHeadArg {
    Linear,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayerArg {
    Additive,
    Affine,
    Maf,
    Iaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FunnelScaleArg {
    Variance,
    Std,
}

impl From<FunnelScaleArg> for FunnelScale {
    fn from(a: FunnelScaleArg) -> Self {
        match a {
            FunnelScaleArg::Variance => FunnelScale::Variance,
            FunnelScaleArg::Std => FunnelScale::Std,
        }
    }
}

/// Options of `fit`. Every field is optional so that flags can be layered
/// over a config file.
#[derive(Debug, Clone, Default, Args)]
pub struct FitOptions {
    /// t2, funnel or csv:PATH
    #[arg(long)]
    pub target: Option<Target>,
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate of the tail-adaptive source parameter
    #[arg(long)]
    pub source_lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub scale_head: Option<ScaleHeadArg>,
    /// Offset added to the sigmoid scale head
    #[arg(long)]
    pub sigmoid_eps: Option<f64>,
    #[arg(long, value_enum)]
    pub shift_head: Option<ShiftHeadArg>,
    #[arg(long, value_enum)]
    pub layer: Option<LayerArg>,
    /// Hidden widths of the conditioner, comma separated
    #[arg(long)]
    pub hidden: Option<Hidden>,
    #[arg(long)]
    pub initial_nu: Option<f64>,
    #[arg(long)]
    pub window_lo: Option<f64>,
    #[arg(long)]
    pub window_hi: Option<f64>,
    /// Sample size of synthetic targets
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub funnel_scale: Option<FunnelScaleArg>,
    /// The CSV target has a header row
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub header: Option<bool>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Comma-separated layer widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hidden(pub Vec<usize>);

impl FromStr for Hidden {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self(Vec::new()));
        }
        s.split(',')
            .map(|w| w.trim().parse::<usize>().map_err(|e| format!("bad width {w:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
}

fn parse_enum<T: ValueEnum>(key: &str, v: &str) -> Result<T, CliError> {
    T::from_str(v, true).map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
}

/// Splits flat `key = value` lines; `#` starts a comment.
pub fn parse_config_lines(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

impl FitOptions {
    pub fn from_config(text: &str) -> Result<Self, CliError> {
        let mut o = Self::default();
        for (key, v) in parse_config_lines(text)? {
            let k = key.as_str();
            match k {
                "target" => o.target = Some(parse_value(k, &v)?),
                "source" => o.source = Some(parse_enum(k, &v)?),
                "blocks" => o.blocks = Some(parse_value(k, &v)?),
                "epochs" => o.epochs = Some(parse_value(k, &v)?),
                "batch_size" => o.batch_size = Some(parse_value(k, &v)?),
                "lr" => o.lr = Some(parse_value(k, &v)?),
                "source_lr" => o.source_lr = Some(parse_value(k, &v)?),
                "seed" => o.seed = Some(parse_value(k, &v)?),
                "scale_head" => o.scale_head = Some(parse_enum(k, &v)?),
                "sigmoid_eps" => o.sigmoid_eps = Some(parse_value(k, &v)?),
                "shift_head" => o.shift_head = Some(parse_enum(k, &v)?),
                "layer" => o.layer = Some(parse_enum(k, &v)?),
                "hidden" => o.hidden = Some(parse_value(k, &v)?),
                "initial_nu" => o.initial_nu = Some(parse_value(k, &v)?),
                "window_lo" => o.window_lo = Some(parse_value(k, &v)?),
                "window_hi" => o.window_hi = Some(parse_value(k, &v)?),
                "n" => o.n = Some(parse_value(k, &v)?),
                "funnel_scale" => o.funnel_scale = Some(parse_enum(k, &v)?),
                "header" => o.header = Some(parse_value(k, &v)?),
                "out" => o.out = Some(PathBuf::from(v)),
                _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
            }
        }
        Ok(o)
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: Self) -> Self {
        Self {
            target: self.target.or(base.target),
            source: self.source.or(base.source),
            blocks: self.blocks.or(base.blocks),
            epochs: self.epochs.or(base.epochs),
            batch_size: self.batch_size.or(base.batch_size),
            lr: self.lr.or(base.lr),
            source_lr: self.source_lr.or(base.source_lr),
            seed: self.seed.or(base.seed),
            scale_head: self.scale_head.or(base.scale_head),
            sigmoid_eps: self.sigmoid_eps.or(base.sigmoid_eps),
            shift_head: self.shift_head.or(base.shift_head),
            layer: self.layer.or(base.layer),
            hidden: self.hidden.or(base.hidden),
            initial_nu: self.initial_nu.or(base.initial_nu),
            window_lo: self.window_lo.or(base.window_lo),
            window_hi: self.window_hi.or(base.window_hi),
            n: self.n.or(base.n),
            funnel_scale: self.funnel_scale.or(base.funnel_scale),
            header: self.header.or(base.header),
            out: self.out.or(base.out),
        }
    }
}

/// A fully resolved `fit` run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub target: Target,
    pub n: usize,
    pub funnel_scale: FunnelScale,
    pub header: bool,
    pub out: PathBuf,
    pub train: TrainConfig,
}

impl ExperimentSpec {
    /// Fills defaults and validates. `env_out` is the value of
    /// [`OUT_ENV`]; it ranks below the flag and above the config file.
    pub fn resolve(flags: FitOptions, file: FitOptions, env_out: Option<PathBuf>) -> Result<Self, CliError> {
        let file_out = file.out.clone();
        let o = flags.clone().over(file);
        let out = flags.out.or(env_out).or(file_out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

        let mut train = TrainConfig::default();
        if let Some(v) = o.source {
            train.source_mode = match v {
                SourceArg::Gaussian => SourceMode::Gaussian,
                SourceArg::Taf => SourceMode::Taf,
            };
        }
        if let Some(v) = o.blocks {
            train.blocks = v;
        }
        if let Some(v) = o.epochs {
            train.epochs = v;
        }
        if let Some(v) = o.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = o.lr {
            train.learning_rate = v;
        }
        if let Some(v) = o.source_lr {
            train.source_learning_rate = Some(v);
        }
        if let Some(v) = o.seed {
            train.seed = v;
        }
        if let Some(v) = o.initial_nu {
            train.initial_nu = v;
        }
        if let Some(v) = o.layer {
            train.layer_kind = match v {
                LayerArg::Additive => LayerKind::AdditiveCoupling,
                LayerArg::Affine => LayerKind::AffineCoupling,
                LayerArg::Maf => LayerKind::MaskedAutoregressive,
                LayerArg::Iaf => LayerKind::InverseAutoregressive,
            };
        }
        if o.sigmoid_eps.is_some() && o.scale_head != Some(ScaleHeadArg::Sigmoid) {
            return Err(CliError::Usage("sigmoid_eps needs scale_head = sigmoid".into()));
        }
        if let Some(v) = o.scale_head {
            train.conditioner.scale_head = match v {
                ScaleHeadArg::TanhExp => ScaleHead::TanhExp,
                ScaleHeadArg::Sigmoid => {
                    let eps = o.sigmoid_eps.unwrap_or(0.5);
                    if !(eps > 0.0 && eps.is_finite()) {
                        return Err(CliError::Usage(format!("sigmoid_eps must be positive, got {eps}")));
                    }
                    ScaleHead::Sigmoid { eps }
                }
                ScaleHeadArg::Exp => ScaleHead::Exp,
            };
        }
        if let Some(v) = o.shift_head {
            train.conditioner.shift_head = match v {
                ShiftHeadArg::Linear => ShiftHead::Linear,
                ShiftHeadArg::Relu => ShiftHead::Relu,
            };
        }
        if let Some(Hidden(h)) = o.hidden {
            if h.contains(&0) {
                return Err(CliError::Usage("hidden widths must be positive".into()));
            }
            train.conditioner.hidden = h;
        }
        let defaults = FitWindow::default();
        let lo = o.window_lo.unwrap_or(defaults.lo);
        let hi = o.window_hi.unwrap_or(defaults.hi);
        train.gamma_window = FitWindow::new(lo, hi).map_err(|e| CliError::Usage(e.to_string()))?;
        train.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let n = o.n.unwrap_or(10_000);
        if n == 0 {
            return Err(CliError::Usage("n must be at least one".into()));
        }
        Ok(Self {
            target: o.target.unwrap_or(Target::T2),
            n,
            funnel_scale: o.funnel_scale.map(Into::into).unwrap_or_default(),
            header: o.header.unwrap_or(false),
            out,
            train,
        })
    }
}

/// Parses a law such as `gaussian`, `gaussian(0, 2)`, `t(3)`, `cauchy`,
/// `uniform(0, 1)` or `exponential(2)`.
pub fn parse_law(s: &str) -> Result<Distribution1D, CliError> {
    let bad = |m: String| CliError::Usage(format!("law {s:?}: {m}"));
    let s_trim = s.trim();
    let (name, args) = match s_trim.split_once('(') {
        Some((name, rest)) => {
            let inner = rest.strip_suffix(')').ok_or_else(|| bad("missing ')'".into()))?;
            let args = inner
                .split(',')
                .map(|a| a.trim().parse::<f64>().map_err(|e| bad(format!("{a:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            (name.trim().to_ascii_lowercase(), args)
        }
        None => (s_trim.to_ascii_lowercase(), Vec::new()),
    };
    let arg = |i: usize, default: f64| args.get(i).copied().unwrap_or(default);
    let arity = |max: usize| {
        if args.len() > max {
            Err(bad(format!("takes at most {max} arguments")))
        } else {
            Ok(())
        }
    };
    let law = match name.as_str() {
        "gaussian" | "normal" => {
            arity(2)?;
            Distribution1D::gaussian(arg(0, 0.0), arg(1, 1.0))
        }
        "cauchy" => {
            arity(2)?;
            Distribution1D::cauchy(arg(0, 0.0), arg(1, 1.0))
        }
        "t" | "student_t" => {
            if args.is_empty() {
                return Err(bad("needs degrees of freedom, as in t(3)".into()));
            }
            arity(3)?;
            Distribution1D::student_t(arg(0, 1.0), arg(1, 0.0), arg(2, 1.0))
        }
        "t2" => {
            arity(0)?;
            Distribution1D::student_t(2.0, 0.0, 1.0)
        }
        "uniform" => {
            arity(2)?;
            Distribution1D::uniform(arg(0, 0.0), arg(1, 1.0))
        }
        "exponential" => {
            arity(1)?;
            Distribution1D::exponential(arg(0, 1.0))
        }
        _ => return Err(bad("unknown law".into())),
    };
    law.map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let m = parse_config_lines("# run\nblocks = 3  # three\n\nbatch-size=64\n").unwrap();
        assert_eq!(m["blocks"], "3");
        assert_eq!(m["batch_size"], "64");
        assert!(parse_config_lines("blocks 3").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = FitOptions::from_config("blocks = 3\nepochs = 7\nsource = taf\nout = from-file").unwrap();
        let flags = FitOptions { blocks: Some(2), ..Default::default() };
        let spec = ExperimentSpec::resolve(flags, file, None).unwrap();
        assert_eq!(spec.train.blocks, 2);
        assert_eq!(spec.train.epochs, 7);
        assert_eq!(spec.train.source_mode, SourceMode::Taf);
        assert_eq!(spec.out, PathBuf::from("from-file"));
    }

    #[test]
    fn output_directory_precedence() {
        let file = FitOptions { out: Some("file".into()), ..Default::default() };
        let flag = FitOptions { out: Some("flag".into()), ..Default::default() };
        let env = Some(PathBuf::from("env"));
        let r = |f: &FitOptions, e: Option<PathBuf>| ExperimentSpec::resolve(f.clone(), file.clone(), e).unwrap().out;
        assert_eq!(r(&flag, env.clone()), PathBuf::from("flag"));
        assert_eq!(r(&FitOptions::default(), env), PathBuf::from("env"));
        assert_eq!(r(&FitOptions::default(), None), PathBuf::from("file"));
        let bare = ExperimentSpec::resolve(FitOptions::default(), FitOptions::default(), None).unwrap();
        assert_eq!(bare.out, PathBuf::from(DEFAULT_OUT));
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        assert!(matches!(FitOptions::from_config("colour = red"), Err(CliError::Usage(_))));
        assert!(matches!(FitOptions::from_config("blocks = many"), Err(CliError::Usage(_))));
        assert!(matches!(FitOptions::from_config("source = laplace"), Err(CliError::Usage(_))));
        let bad_batch = FitOptions { batch_size: Some(0), ..Default::default() };
        assert!(ExperimentSpec::resolve(bad_batch, FitOptions::default(), None).is_err());
        let bad_window = FitOptions { window_lo: Some(0.99), window_hi: Some(0.9), ..Default::default() };
        assert!(ExperimentSpec::resolve(bad_window, FitOptions::default(), None).is_err());
    }

    #[test]
    fn targets() {
        assert_eq!("t2".parse::<Target>().unwrap(), Target::T2);
        assert_eq!("csv:a/b.csv".parse::<Target>().unwrap(), Target::Csv("a/b.csv".into()));
        assert!("csv:".parse::<Target>().is_err());
        assert!("t3".parse::<Target>().is_err());
    }

    #[test]
    fn laws() {
        assert_eq!(parse_law("gaussian").unwrap(), Distribution1D::standard_gaussian());
        assert_eq!(parse_law("t(3)").unwrap(), Distribution1D::student_t(3.0, 0.0, 1.0).unwrap());
        assert_eq!(parse_law(" Uniform(0, 2) ").unwrap(), Distribution1D::uniform(0.0, 2.0).unwrap());
        for bad in ["laplace", "t", "gaussian(0, -1)", "cauchy(1", "uniform(0,1,2)", "exponential(x)"] {
            assert!(matches!(parse_law(bad), Err(CliError::Usage(_))), "{bad}");
        }
    }
}

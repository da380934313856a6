//! Run configurations. Every subcommand's flags deserialize into one of these,
//! and the sidecar of each run embeds the config it was produced from.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub threads: Option<usize>,
    pub command: CommandConfig,
}

impl RunConfig {
    /// The part of the config that determines results: output path and
    /// thread count are dropped so sidecars do not depend on them.
    pub fn canonical(&self) -> RunConfig {
        RunConfig {
            output: None,
            threads: None,
            ..self.clone()
        }
    }

    /// Accepts a bare config or a whole sidecar, whose `config` field is used.
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let mut v: serde_json::Value = serde_json::from_str(s)?;
        if v.get("command").is_none() {
            if let Some(inner) = v.get_mut("config") {
                v = inner.take();
            }
        }
        serde_json::from_value(v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum CommandConfig {
    Spinboson(SpinbosonConfig),
    OracleCheck(OracleConfig),
    Rmt(RmtConfig),
    Meanfield(MeanfieldConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CutoffArg {
    Hard,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    Log,
    Lin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    /// Closed form where one exists, quadrature otherwise.
    Auto,
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct SpinbosonConfig {
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: f64,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega_c: f64,
    #[arg(long, value_enum, default_value_t = CutoffArg::Hard)]
    pub cutoff: CutoffArg,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0.0)]
    pub t_min: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 200)]
    pub t_points: usize,
    /// Grid spacing. A log grid with t-min = 0 starts with t = 0 followed by
    /// geometric points from t-max·1e-4.
    #[arg(long, value_enum, default_value_t = GridScale::Log)]
    pub t_grid: GridScale,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Midpoint,
    Gauss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct OracleConfig {
    #[arg(long, default_value_t = 2)]
    pub modes: usize,
    /// Occupation cutoff per mode; chosen from the coupling strength if omitted.
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: f64,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega_c: f64,
    #[arg(long, value_enum, default_value_t = CutoffArg::Hard)]
    pub cutoff: CutoffArg,
    #[arg(long, value_enum, default_value_t = SchemeArg::Midpoint)]
    pub scheme: SchemeArg,
    /// Amplitude of ψ₊ as `re` or `re,im`.
    #[arg(long, value_parser = parse_complex, default_value = "0.7071067811865476")]
    pub alpha_plus: [f64; 2],
    /// Amplitude of ψ₋ as `re` or `re,im`.
    #[arg(long, value_parser = parse_complex, default_value = "0.7071067811865476", allow_hyphen_values = true)]
    pub alpha_minus: [f64; 2],
    #[arg(long, default_value_t = 50.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 50)]
    pub t_points: usize,
    /// Explicit comma-separated times; overrides t-max/t-points.
    #[arg(long, value_delimiter = ',')]
    pub t_grid: Option<Vec<f64>>,
}

fn parse_complex(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"));
    match parts.as_slice() {
        [re] => Ok([num(re)?, 0.0]),
        [re, im] => Ok([num(re)?, num(im)?]),
        _ => Err(format!("expected `re` or `re,im`, got '{s}'")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RmtMode {
    Spacings,
    Spectral,
    Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PairsArg {
    All,
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct RmtArgs {
    /// poisson, goe, gue, surmise-b1, surmise-b2 or surmise-b4.
    #[arg(long)]
    pub ensemble: String,
    #[arg(long = "M", visible_alias = "m", default_value_t = 200)]
    pub m: usize,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub qbar2: f64,
    #[arg(long, default_value_t = 200)]
    pub realizations: usize,
    /// Kernel width; defaults to 0.05·delta.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Largest |ω| of the estimation grid; defaults to 2·delta.
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[arg(long, default_value_t = 401)]
    pub omega_points: usize,
    #[arg(long, value_enum, default_value_t = PairsArg::All)]
    pub pairs: PairsArg,
    /// Histogram bins for `spacings`.
    #[arg(long, default_value_t = 60)]
    pub bins: usize,
    /// Histogram range for `spacings`, in units of delta.
    #[arg(long, default_value_t = 4.0)]
    pub s_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmtConfig {
    pub mode: RmtMode,
    #[serde(flatten)]
    pub args: RmtArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct MeanfieldConfig {
    #[arg(long = "N", visible_alias = "n", default_value_t = 32)]
    pub n: usize,
    #[arg(long = "M", visible_alias = "m", default_value_t = 64)]
    pub m: usize,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub qbar2: f64,
    #[arg(long, value_delimiter = ',', default_value = "poisson,goe")]
    pub ensembles: Vec<String>,
    #[arg(long, default_value_t = 32)]
    pub realizations: usize,
    /// Smallest nonzero time of the geometric grid (t = 0 is always included).
    #[arg(long, default_value_t = 0.01)]
    pub t_min: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 100)]
    pub t_points: usize,
    #[arg(long, default_value_t = false)]
    pub identical_copies: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rmt() -> RunConfig {
        RunConfig {
            seed: Some(3),
            output: Some("out.csv".into()),
            tolerance: None,
            threads: Some(4),
            command: CommandConfig::Rmt(RmtConfig {
                mode: RmtMode::Rate,
                args: RmtArgs {
                    ensemble: "goe".into(),
                    m: 120,
                    delta: 0.5,
                    qbar2: 2.0,
                    realizations: 30,
                    bandwidth: Some(0.01),
                    omega_max: None,
                    omega_points: 101,
                    pairs: PairsArg::Nearest,
                    bins: 10,
                    s_max: 3.0,
                },
            }),
        }
    }

    #[test]
    fn round_trip() {
        let cfg = rmt();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn canonical_drops_output_and_threads() {
        let c = rmt().canonical();
        assert_eq!(c.output, None);
        assert_eq!(c.threads, None);
        assert_eq!(c.seed, Some(3));
    }

    #[test]
    fn sidecar_wrapper_is_unwrapped() {
        let cfg = rmt().canonical();
        let wrapped = format!(
            "{{\"version\": \"0\", \"config\": {}, \"gamma\": 1.0}}",
            cfg.to_json()
        );
        assert_eq!(RunConfig::from_json(&wrapped).unwrap(), cfg);
    }

    #[test]
    fn complex_amplitudes() {
        assert_eq!(parse_complex("0.5").unwrap(), [0.5, 0.0]);
        assert_eq!(parse_complex("0.5, -0.25").unwrap(), [0.5, -0.25]);
        assert!(parse_complex("1,2,3").is_err());
        assert!(parse_complex("x").is_err());
    }
}

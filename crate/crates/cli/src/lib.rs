//! Configuration and command bodies for the `ddiqkd` binary.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ddiqkd_core::bsm::{theory_table, DetectorParams, THEORY_CSV_HEADER};
use ddiqkd_core::encoding::LonNetwork;
use ddiqkd_core::rates::{
    dark_count_from_background, keyrate_curve, keyrate_curve_at_mu, optimize_mu, yield_table, RateParams,
    YieldTable, REFERENCE_BACKGROUND,
};
use ddiqkd_core::session::{run_session, SessionConfig, SessionReport};
use ddiqkd_core::verify::{IdentityChecks, CheckResult};
use serde::{Deserialize, Serialize};

/// Detectors of the reference receiver that `dark_background` describes.
const BACKGROUND_DETECTORS: u32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration. Exit code 2.
    Usage(String),
    /// A check ran and failed. Exit code 1.
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::CheckFailed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ddiqkd_core::Error> for CliError {
    fn from(e: ddiqkd_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

pub type CliResult<T> = Result<T, CliError>;

/// Flat key-value run configuration. Every key is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub alpha_db_per_km: f64,
    pub eta_det: f64,
    /// Probability of a background click per gate summed over a two-detector
    /// receiver. Ignored when `p_dark` is set.
    pub dark_background: f64,
    /// Dark-count probability of each single detector per gate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_dark: Option<f64>,
    pub e_mis: f64,
    pub f_ec: f64,
    pub q: f64,
    /// Fixed intensity; optimised per distance when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub n_pulses: u64,
    pub seed: u64,
    pub distances: Vec<f64>,
    pub visibility: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            alpha_db_per_km: 0.2,
            eta_det: 0.145,
            dark_background: REFERENCE_BACKGROUND,
            p_dark: None,
            e_mis: 0.015,
            f_ec: 1.16,
            q: 1.0,
            mu: None,
            n_pulses: 1_000_000,
            seed: 42,
            distances: (0..=40).map(|k| 5.0 * k as f64).collect(),
            visibility: 0.884,
        }
    }
}

/// Command-line values that override the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub distances: Option<Vec<f64>>,
    pub mu: Option<f64>,
    pub pulses: Option<u64>,
    pub visibility: Option<f64>,
}

impl Config {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => Self::from_toml(&fs::read_to_string(p).map_err(|e| io_error(p, e))?),
            None => Ok(Self::default()),
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(d) = &o.distances {
            self.distances = d.clone();
        }
        if let Some(mu) = o.mu {
            self.mu = Some(mu);
        }
        if let Some(n) = o.pulses {
            self.n_pulses = n;
        }
        if let Some(v) = o.visibility {
            self.visibility = v;
        }
    }

    pub fn p_dark(&self) -> CliResult<f64> {
        match self.p_dark {
            Some(p) => Ok(p),
            None => Ok(dark_count_from_background(self.dark_background, BACKGROUND_DETECTORS)?),
        }
    }

    pub fn rate_params(&self) -> CliResult<RateParams> {
        let detector = DetectorParams::new(self.eta_det, self.p_dark()?)?;
        Ok(RateParams::new(self.q, self.f_ec, detector, self.alpha_db_per_km, self.e_mis)?)
    }

    fn distances(&self) -> CliResult<&[f64]> {
        if self.distances.is_empty() {
            return Err(CliError::Usage("distances must not be empty".into()));
        }
        if let Some(bad) = self.distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(CliError::Usage(format!("invalid distance {bad}")));
        }
        if self.distances.windows(2).any(|w| w[1] < w[0]) {
            return Err(CliError::Usage("distances must be ascending".into()));
        }
        Ok(&self.distances)
    }
}

/// Parses `0,50,100`.
pub fn parse_distances(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_error(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Usage(format!("stdout: {e}"))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSummary {
    pub cutoff_proposal_km: f64,
    pub cutoff_bb84_km: f64,
    pub mu: Option<f64>,
    pub points: usize,
}

/// Writes the rate curve as CSV and returns the cutoff summary.
pub fn cmd_keyrate_curve(cfg: &Config, out: Option<&Path>) -> CliResult<CurveSummary> {
    let params = cfg.rate_params()?;
    let lengths = cfg.distances()?;
    let curve = match cfg.mu {
        Some(mu) => keyrate_curve_at_mu(&params, lengths, mu)?,
        None => keyrate_curve(&params, lengths)?,
    };
    emit(out, &curve.to_csv())?;
    Ok(CurveSummary {
        cutoff_proposal_km: curve.cutoff_proposal_km,
        cutoff_bb84_km: curve.cutoff_bb84_km,
        mu: cfg.mu,
        points: curve.points.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionOutput {
    pub report: SessionReport,
    /// Analytic values for the same distance and intensity.
    pub analytic: YieldTable,
}

/// Runs one Monte Carlo session at the first configured distance.
pub fn cmd_session(cfg: &Config, out: Option<&Path>) -> CliResult<SessionOutput> {
    let params = cfg.rate_params()?;
    let length = cfg.distances()?[0];
    let mu = match cfg.mu {
        Some(mu) => mu,
        None => optimize_mu(&params, length)?.mu,
    };
    let session = SessionConfig::new(params, length, mu, cfg.n_pulses, cfg.seed)?;
    let output = SessionOutput {
        report: run_session(&session)?,
        analytic: yield_table(&params, length, mu)?,
    };
    let mut json = serde_json::to_string_pretty(&output).expect("report serialises");
    json.push('\n');
    emit(out, &json)?;
    Ok(output)
}

/// Runs the register-state and BSM checks. `inject_fault` swaps in a network
/// with a sign error on path c, which the checks must catch.
pub fn cmd_verify_appendix(cfg: &Config, inject_fault: bool, out: Option<&Path>) -> CliResult<Vec<CheckResult>> {
    let checks = IdentityChecks {
        seed: cfg.seed,
        network: if inject_fault {
            LonNetwork::with_faulty_c_path()
        } else {
            LonNetwork::standard()
        },
        ..Default::default()
    };
    let results = checks.run()?;
    if let Some(p) = out {
        let json = serde_json::to_string_pretty(&results).expect("results serialise");
        fs::write(p, json + "\n").map_err(|e| io_error(p, e))?;
    }
    Ok(results)
}

/// Theory table at the configured visibility followed by the ideal table.
pub fn cmd_theory_table(cfg: &Config, out: Option<&Path>) -> CliResult<()> {
    let table = theory_table(cfg.visibility)?;
    let ideal = theory_table(1.0)?;
    emit(out, &format!("{THEORY_CSV_HEADER}\n{}{}", table.csv_rows(), ideal.csv_rows()))
}

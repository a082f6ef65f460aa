use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use phasekit::{PhaseTypeParams, SymmetricMoments};

use crate::output::Run;

/// A phase-type input given as `(λ, A)`, as moments, or as a JSON file.
#[derive(Args, Debug)]
pub struct PhaseInput {
    /// Comma-separated eigenvalues, e.g. `-1,-2,-3`
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', requires = "a")]
    pub lambda: Option<Vec<f64>>,
    /// Comma-separated amplitudes matching --lambda
    #[arg(long = "A", id = "a", allow_hyphen_values = true, value_delimiter = ',', requires = "lambda")]
    pub a: Option<Vec<f64>>,
    /// Symmetric moments `L1,..,LN,S1,..,S_{N-1}`
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', conflicts_with_all = ["lambda", "params"])]
    pub moments: Option<Vec<f64>>,
    /// PhaseTypeParams JSON file (`{"lambda": [...], "A": [...]}`), e.g. the output of `direct`
    #[arg(long, conflicts_with = "lambda")]
    pub params: Option<PathBuf>,
}

pub enum Phase {
    Params(PhaseTypeParams),
    Moments(SymmetricMoments),
}

impl PhaseInput {
    pub fn resolve(&self, run: &mut Run) -> Result<Phase> {
        if let (Some(l), Some(a)) = (&self.lambda, &self.a) {
            return Ok(Phase::Params(PhaseTypeParams::new(l.clone(), a.clone())?));
        }
        if let Some(m) = &self.moments {
            return Ok(Phase::Moments(SymmetricMoments::from_slice(m)?));
        }
        if let Some(path) = &self.params {
            let text = run.read(path)?;
            let p: PhaseTypeParams =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            return Ok(Phase::Params(PhaseTypeParams::new(p.lambda, p.a)?));
        }
        bail!("give --lambda and --A, --moments, or --params")
    }
}

impl Phase {
    pub fn moments(&self) -> SymmetricMoments {
        match self {
            Phase::Params(p) => phasekit::symmetric_inputs(p),
            Phase::Moments(m) => m.clone(),
        }
    }
}

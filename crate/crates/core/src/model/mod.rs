//! The probability model: principal strata, second-period assignment,
//! final-outcome regressions, average treatment effects and the observed-data
//! likelihood under each assignment assumption.

pub(crate) mod likelihood;
mod probs;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use likelihood::{log_likelihood, log_likelihood_si_grouped, unit_log_likelihood};
pub use probs::{
    assign_prob_lsi, assign_prob_si, ate_from_params, latent_pair, log_strata_probs, outcome_mean,
    strata_probs, StrataProbs,
};

/// Joint value of the intermediate potential outcomes `(Y1(0), Y1(1))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrincipalStratum {
    S00,
    S01,
    S10,
    S11,
}

impl PrincipalStratum {
    /// Canonical order 00, 01, 10, 11; `index()` follows it.
    pub const ALL: [PrincipalStratum; 4] = [Self::S00, Self::S01, Self::S10, Self::S11];

    pub fn from_pair(y1_under_0: bool, y1_under_1: bool) -> Self {
        match (y1_under_0, y1_under_1) {
            (false, false) => Self::S00,
            (false, true) => Self::S01,
            (true, false) => Self::S10,
            (true, true) => Self::S11,
        }
    }

    /// `Y1(0)` for members of this stratum.
    pub fn y1_under_control(self) -> bool {
        matches!(self, Self::S10 | Self::S11)
    }

    /// `Y1(1)` for members of this stratum.
    pub fn y1_under_treatment(self) -> bool {
        matches!(self, Self::S01 | Self::S11)
    }

    /// The intermediate outcome observed when the first treatment is `w1`.
    pub fn y1_under(self, w1: bool) -> bool {
        if w1 {
            self.y1_under_treatment()
        } else {
            self.y1_under_control()
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::S00 => "00",
            Self::S01 => "01",
            Self::S10 => "10",
            Self::S11 => "11",
        }
    }

    /// Regression row `[1, Y1(0), Y1(1), Y1(0)Y1(1)]` shared by the
    /// assignment and outcome models.
    pub fn design_row(self) -> [f64; 4] {
        let y0 = f64::from(u8::from(self.y1_under_control()));
        let y1 = f64::from(u8::from(self.y1_under_treatment()));
        [1.0, y0, y1, y0 * y1]
    }
}

impl fmt::Display for PrincipalStratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PrincipalStratum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "00" => Ok(Self::S00),
            "01" => Ok(Self::S01),
            "10" => Ok(Self::S10),
            "11" => Ok(Self::S11),
            other => Err(Error::domain(format!(
                "unknown principal stratum `{other}`"
            ))),
        }
    }
}

/// Treatment received in each of the two periods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreatmentSequence {
    pub w1: bool,
    pub w2: bool,
}

impl TreatmentSequence {
    pub const fn new(w1: bool, w2: bool) -> Self {
        Self { w1, w2 }
    }

    /// Indexed by `2 * w1 + w2`: 00, 01, 10, 11.
    pub const ALL: [TreatmentSequence; 4] = [
        Self::new(false, false),
        Self::new(false, true),
        Self::new(true, false),
        Self::new(true, true),
    ];

    pub fn index(self) -> usize {
        2 * usize::from(self.w1) + usize::from(self.w2)
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> String {
        format!("{}{}", u8::from(self.w1), u8::from(self.w2))
    }
}

impl fmt::Display for TreatmentSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", u8::from(self.w1), u8::from(self.w2))
    }
}

impl FromStr for TreatmentSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "00" => Ok(Self::new(false, false)),
            "01" => Ok(Self::new(false, true)),
            "10" => Ok(Self::new(true, false)),
            "11" => Ok(Self::new(true, true)),
            other => Err(Error::domain(format!(
                "unknown treatment sequence `{other}`"
            ))),
        }
    }
}

/// The six contrasts reported throughout: (1,1) versus (0,0), (0,1), (1,0);
/// (1,0) versus (0,0); (0,1) versus (1,0) and (0,0).
pub const ATE_CONTRASTS: [(TreatmentSequence, TreatmentSequence); 6] = [
    (
        TreatmentSequence::new(true, true),
        TreatmentSequence::new(false, false),
    ),
    (
        TreatmentSequence::new(true, true),
        TreatmentSequence::new(false, true),
    ),
    (
        TreatmentSequence::new(true, true),
        TreatmentSequence::new(true, false),
    ),
    (
        TreatmentSequence::new(true, false),
        TreatmentSequence::new(false, false),
    ),
    (
        TreatmentSequence::new(false, true),
        TreatmentSequence::new(true, false),
    ),
    (
        TreatmentSequence::new(false, true),
        TreatmentSequence::new(false, false),
    ),
];

/// `ATE_11.00`-style label.
pub fn contrast_label(pair: (TreatmentSequence, TreatmentSequence)) -> String {
    format!("ATE_{}.{}", pair.0, pair.1)
}

/// Which factorization of the observed-data likelihood is in force.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecKind {
    /// Second-period assignment depends on the principal stratum.
    Lsi,
    /// Assignment depends on the observed intermediate outcome only; outcomes
    /// are still modelled within principal strata.
    Si1,
    /// As `Si1`, but every model conditions on the observed intermediate
    /// outcome and no strata appear.
    Si2,
}

impl SpecKind {
    pub const ALL: [SpecKind; 3] = [SpecKind::Lsi, SpecKind::Si1, SpecKind::Si2];

    pub fn label(self) -> &'static str {
        match self {
            SpecKind::Lsi => "LSI",
            SpecKind::Si1 => "SI-1",
            SpecKind::Si2 => "SI-2",
        }
    }

    pub fn has_strata(self) -> bool {
        !matches!(self, SpecKind::Si2)
    }
}

impl fmt::Display for SpecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SpecKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "lsi" => Ok(SpecKind::Lsi),
            "si1" => Ok(SpecKind::Si1),
            "si2" => Ok(SpecKind::Si2),
            other => Err(Error::domain(format!(
                "unknown spec `{other}` (expected lsi, si1 or si2)"
            ))),
        }
    }
}

/// Column positions inside a 4-coefficient block.
pub const INTERCEPT: usize = 0;
pub const SLOPE_Y1_0: usize = 1;
pub const SLOPE_Y1_1: usize = 2;
pub const INTERACTION: usize = 3;

/// Slot holding the coefficient of the observed `Y1(w1)`.
pub fn observed_slope_slot(w1: bool) -> usize {
    if w1 {
        SLOPE_Y1_1
    } else {
        SLOPE_Y1_0
    }
}

/// The full parameter vector `(alpha, gamma, beta, sigma2)`, 31 scalars.
///
/// Under [`SpecKind::Si2`] no strata exist and the layout is reinterpreted:
/// `alpha[0]` and `alpha[1]` are the probit intercepts of `Y1(0)` and `Y1(1)`
/// (with `alpha[2] = 0`), and each beta block uses only its intercept and the
/// slot of the observed `Y1(w1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    /// Nested stratum probit intercepts `(a11, a00, a10)`.
    pub alpha: [f64; 3],
    /// Second-period assignment probit per first treatment `w1`.
    pub gamma: [[f64; 4]; 2],
    /// Outcome regression per treatment sequence (see [`TreatmentSequence::index`]).
    pub beta: [[f64; 4]; 4],
    /// Outcome variance per treatment sequence, common to all strata.
    pub sigma2: [f64; 4],
}

/// `(w1, slot)` of the gammas that vanish under sequential ignorability.
pub const SI_ZERO_GAMMAS: [(usize, usize); 4] = [
    (1, SLOPE_Y1_0),
    (0, SLOPE_Y1_1),
    (0, INTERACTION),
    (1, INTERACTION),
];

impl ParameterVector {
    pub const LEN: usize = 31;

    pub fn zeros() -> Self {
        Self {
            alpha: [0.0; 3],
            gamma: [[0.0; 4]; 2],
            beta: [[0.0; 4]; 4],
            sigma2: [1.0; 4],
        }
    }

    pub fn gamma_block(&self, w1: bool) -> &[f64; 4] {
        &self.gamma[usize::from(w1)]
    }

    pub fn beta_block(&self, seq: TreatmentSequence) -> &[f64; 4] {
        &self.beta[seq.index()]
    }

    /// Zero the four gammas that the sequential-ignorability constraint removes.
    pub fn with_si_constraint(mut self) -> Self {
        for (w, k) in SI_ZERO_GAMMAS {
            self.gamma[w][k] = 0.0;
        }
        self
    }

    pub fn satisfies_si_constraint(&self) -> bool {
        SI_ZERO_GAMMAS.iter().all(|&(w, k)| self.gamma[w][k] == 0.0)
    }

    /// Check finiteness, positivity of the variances and the structural zeros
    /// implied by `spec`.
    pub fn validate(&self, spec: SpecKind) -> Result<()> {
        let flat = self.to_vec();
        if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "parameter `{}` is not finite",
                parameter_names(spec)[i]
            )));
        }
        if let Some(i) = self.sigma2.iter().position(|&s| s <= 0.0) {
            return Err(Error::domain(format!(
                "sigma2 for sequence {} must be positive",
                TreatmentSequence::ALL[i]
            )));
        }
        match spec {
            SpecKind::Lsi => Ok(()),
            SpecKind::Si1 | SpecKind::Si2 => {
                if !self.satisfies_si_constraint() {
                    return Err(Error::contract(format!(
                        "{spec} requires gamma1_y10, gamma0_y11, gamma0_y10y11, gamma1_y10y11 = 0"
                    )));
                }
                if spec == SpecKind::Si2 {
                    if self.alpha[2] != 0.0 {
                        return Err(Error::contract(
                            "SI-2 uses only alpha[0..2]; alpha[2] must be 0",
                        ));
                    }
                    for seq in TreatmentSequence::ALL {
                        let b = self.beta_block(seq);
                        let unused = if seq.w1 { SLOPE_Y1_0 } else { SLOPE_Y1_1 };
                        if b[unused] != 0.0 || b[INTERACTION] != 0.0 {
                            return Err(Error::contract(format!(
                                "SI-2 beta block {seq} may only use the intercept and the Y1({}) slope",
                                u8::from(seq.w1)
                            )));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Flatten in the canonical column order of [`parameter_names`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::LEN);
        v.extend_from_slice(&self.alpha);
        for g in &self.gamma {
            v.extend_from_slice(g);
        }
        for b in &self.beta {
            v.extend_from_slice(b);
        }
        v.extend_from_slice(&self.sigma2);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != Self::LEN {
            return Err(Error::domain(format!(
                "expected {} parameters, got {}",
                Self::LEN,
                v.len()
            )));
        }
        let mut p = Self::zeros();
        p.alpha.copy_from_slice(&v[0..3]);
        for (w, g) in p.gamma.iter_mut().enumerate() {
            g.copy_from_slice(&v[3 + 4 * w..7 + 4 * w]);
        }
        for (s, b) in p.beta.iter_mut().enumerate() {
            b.copy_from_slice(&v[11 + 4 * s..15 + 4 * s]);
        }
        p.sigma2.copy_from_slice(&v[27..31]);
        Ok(p)
    }
}

/// Column names for a flattened [`ParameterVector`].
pub fn parameter_names(spec: SpecKind) -> Vec<String> {
    let mut names = Vec::with_capacity(ParameterVector::LEN);
    match spec {
        SpecKind::Si2 => {
            names.extend(["alpha_y1w0", "alpha_y1w1", "alpha_unused"].map(String::from))
        }
        _ => names.extend(["alpha_11", "alpha_00", "alpha_10"].map(String::from)),
    }
    let suffixes = ["", "_y10", "_y11", "_y10y11"];
    for w1 in 0..2 {
        for s in suffixes {
            names.push(format!("gamma{w1}{s}"));
        }
    }
    for seq in TreatmentSequence::ALL {
        for s in suffixes {
            names.push(format!("beta{seq}{s}"));
        }
    }
    for seq in TreatmentSequence::ALL {
        names.push(format!("sigma2_{seq}"));
    }
    names
}

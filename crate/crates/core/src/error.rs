use thiserror::Error;

#[derive(Debug, Error)]
pub enum MfhError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("degenerate equilibrium at x = {x}: b + alpha and b' vanish together")]
    DegenerateEquilibrium { x: f64 },
    #[error("flow integration exceeded its step budget ({steps} steps)")]
    FlowDivergence { steps: usize },
    #[error("kernel tail cannot be certified: {0}")]
    TailNotConvergent(String),
    #[error("mass identity residual {residual:e} exceeds {limit:e}")]
    GridTooCoarse { residual: f64, limit: f64 },
    #[error("centered rate reached the noise floor before the fit window")]
    TailBelowFloor,
    #[error("no root of alpha = J gamma(alpha) found on the scan for J = {j}")]
    NoRootInScan { j: f64 },
    #[error("Re z = {re} lies outside the transform domain (Re z > {bound})")]
    DomainViolation { re: f64, bound: f64 },
    #[error("|1 - K^(z)| < 1e-10 at z = {re} + {im}i")]
    PoleProximity { re: f64, im: f64 },
    #[error("winding count {expected} disagrees with {found} polished roots")]
    WindingInconsistent { expected: i64, found: usize },
    #[error("curve denominator vanishes at y = {y}")]
    DenominatorVanishes { y: f64 },
    #[error("off-axis self-intersection of the imaginary-root curve at (beta, delta) = ({beta}, {delta})")]
    SpuriousIntersection { beta: f64, delta: f64 },
    #[error("transversality fails: Re Z0'(alpha0) = {re}")]
    TransversalityFailed { re: f64 },
    #[error("resonance at mode {n}: |1 - J Theta^(i n / tau)| = {modulus:e}")]
    ResonanceDetected { n: i64, modulus: f64 },
    #[error("phase kernel is not uniformly positive (min = {min:e})")]
    DoeblinFailure { min: f64 },
    #[error("inverse flow bisection failed to bracket x = {x} at t = {t}")]
    InverseFlowFailure { t: f64, x: f64 },
    #[error("Newton iteration diverged (residual {residual:e})")]
    NewtonDiverged { residual: f64 },
    #[error("Jacobian is singular or nearly so")]
    DegenerateJacobian,
    #[error("rate explosion: max f(X) * dt = {hazard}")]
    RateExplosion { hazard: f64 },
    #[error("series too short: {len} samples, need {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MfhError {
    /// Configuration problems map to exit code 1, everything numeric to 2.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            MfhError::Config(_) | MfhError::InvalidParameter(_) | MfhError::Json(_) | MfhError::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, MfhError>;

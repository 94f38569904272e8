use thiserror::Error;

/// Everything that can go wrong in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too small: n = {n} (need at least 5 samples per axis)")]
    GridTooSmall { n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fields live on different node layouts")]
    GridMismatch,

    #[error("degenerate Jacobian at node {node} ({x:.4}, {y:.4})")]
    DegenerateJacobian { node: usize, x: f64, y: f64 },

    #[error("metric not positive definite at node {node} ({x:.4}, {y:.4})")]
    NotSpd { node: usize, x: f64, y: f64 },

    #[error("mollifier under-resolved: ell = {ell:.3e} < 2 * spacing = {:.3e}", 2.0 * spacing)]
    KernelUnderResolved { ell: f64, spacing: f64 },

    #[error("domain vanishes: radius {radius} <= ell {ell}")]
    DomainVanishes { radius: f64, ell: f64 },

    #[error("corrugation amplitude s = {s:.6} outside [0, {s_max:.6}]")]
    AmplitudeOutOfRange { s: f64, s_max: f64 },

    #[error("frequency {freq:.4} unresolvable: {:.4} rad per cell exceeds guard {guard:.4}", freq * spacing)]
    ResolutionGuard { freq: f64, spacing: f64, guard: f64 },

    #[error("evaluation node {node} lies outside the integration disk")]
    NodeOutsideDomain { node: usize },

    #[error("Beltrami fixed point not contracting at iteration {iteration}: residual ratio {ratio:.4}")]
    NonContraction { iteration: usize, ratio: f64 },

    #[error("Beltrami fixed point did not converge in {iterations} iterations (residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("Beltrami coefficient not elliptic: sup |mu| = {sup:.4}")]
    NotElliptic { sup: f64 },

    #[error("smallness violated: measured {measured:.4e} > bound {bound:.4e}")]
    SmallnessViolated { measured: f64, bound: f64 },

    #[error("orientation lost: Jacobian determinant {det:.3e} at node {node}")]
    OrientationLoss { node: usize, det: f64 },

    #[error("defect outside the primitive cone at node {node}: A = {a:.4e}, B = {b:.4e}, C = {c:.4e}")]
    OutsideCone { node: usize, a: f64, b: f64, c: f64 },

    #[error("initial map is not strictly short (min defect eigenvalue {min_eig:.4e})")]
    NotStrictlyShort { min_eig: f64 },

    #[error("parameter chain violated: {0}")]
    ChainViolated(String),

    #[error("bound violated in strict mode: {what} measured {measured:.4e} > {bound:.4e}")]
    BoundViolated { what: String, measured: f64, bound: f64 },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at_stage(self, stage: usize) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("alpha has {got} entries, expected {expected}")]
    AlphaLength { expected: usize, got: usize },
    #[error("alpha entry {index} = {value} lies outside [1/2, 1]")]
    AlphaRange { index: usize, value: f64 },
    #[error("scale {0} is not a power of two at least 4")]
    Scale(u64),
    #[error("point {0:?} is outside the paraboloid neighborhood")]
    OutsideNeighborhood(Vec<f64>),
    #[error("point {0:?} does not lie on the paraboloid")]
    NotOnParaboloid(Vec<f64>),
    #[error("expected {expected} points, got {got}")]
    PointCount { expected: usize, got: usize },
    #[error("coordinate length {got} does not match dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cap is not canonical at this scale")]
    NotCanonical,
    #[error("atom {0:?} lies outside the cap")]
    AtomOutsideCap(Vec<f64>),
    #[error("cap holds {count} atoms, at most {limit} allowed")]
    CapOverfull { count: usize, limit: usize },
    #[error("signal has no atoms")]
    EmptySignal,
    #[error("invalid quadrature: {0}")]
    Quadrature(String),
    #[error("quadrature needs {points} points, above the budget {budget}")]
    QuadratureTooLarge { points: u128, budget: u128 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("need at least 3 samples with distinct abscissae, got {0}")]
    TooFewSamples(usize),
    #[error("value {value} at R = {r} is not positive")]
    NonPositive { r: f64, value: f64 },
    #[error("signals {first} and {second} are {measured} transverse, below the required {required}")]
    Transversality { first: usize, second: usize, measured: f64, required: f64 },
    #[error("atom {0:?} lies outside the decoupling box")]
    AtomOutsideBox(Vec<f64>),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("weight |alpha| = {0} makes the incidence exponent singular")]
    SingularExponent(f64),
    #[error("{fraction:.3e} of the sampled energy lies above the ladder, threshold {threshold:.1e}")]
    Aliasing { fraction: f64, threshold: f64 },
    #[error("sample {index} has K = {value} but lies in no level set")]
    Containment { index: usize, value: f64 },
}

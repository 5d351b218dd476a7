//! Exponential-sum statistics: the averaged `L^p` norm of a whole family
//! against `R^{|alpha|/2}`, and the three-variable mean value integral over
//! a thin lattice of frequencies `(n1, n2, n1^2 + n2^2)`.

use num_complex::Complex64;
use rand::Rng;

use crate::caps::{AlphaVector, Scale};
use crate::decoupling::critical_p;
use crate::quadrature::{lp_norm, mean_powers, QuadratureFlags, QuadratureMode, QuadratureSpec, Region, Samples};
use crate::rng::stream;
use crate::signal::{synth_family, unit_phase, Family, FrequencyAtom, Grid, GridAxis, Spectrum};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Corollary1Record {
    pub alpha: AlphaVector,
    pub scale: Scale,
    pub p: f64,
    pub family: Family,
    pub seed: u64,
    pub lhs: f64,
    /// `R^{|alpha|/2}`.
    pub prediction: f64,
    pub ratio: f64,
    pub out_of_range: bool,
    pub mode: QuadratureMode,
    pub region: String,
    pub samples: usize,
    pub flags: QuadratureFlags,
}

pub fn corollary1_statistic(
    alpha: &AlphaVector,
    scale: Scale,
    p: f64,
    family: Family,
    seed: u64,
    quad: &QuadratureSpec,
) -> Result<Corollary1Record> {
    let signal = synth_family(alpha, scale, family, seed)?;
    let norm = lp_norm(&signal, p, quad)?;
    let prediction = scale.pow(alpha.weight() / 2.0);
    let out_of_range = !(p >= 2.0 && p <= critical_p(alpha) + 1e-12) || !alpha.is_admissible();
    Ok(Corollary1Record {
        alpha: alpha.clone(),
        scale,
        p,
        family,
        seed,
        lhs: norm.value,
        prediction,
        ratio: norm.value / prediction,
        out_of_range,
        mode: norm.mode,
        region: norm.region,
        samples: norm.samples,
        flags: norm.flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficients {
    AllOnes,
    RandomPhases { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corollary2Params {
    pub alpha: f64,
    pub beta: f64,
    pub scale: Scale,
    pub p: f64,
    pub coefficients: Coefficients,
    /// Left ends of the intervals `H1`, `H2`.
    pub offsets: [f64; 2],
    pub oversampling: f64,
}

impl Corollary2Params {
    pub fn new(alpha: f64, beta: f64, scale: Scale, p: f64) -> Self {
        Self { alpha, beta, scale, p, coefficients: Coefficients::AllOnes, offsets: [0.0, 0.0], oversampling: 4.0 }
    }

    /// `N^{alpha - beta}`, the spacing of the second frequency.
    pub fn step(&self) -> f64 {
        self.scale.pow(self.alpha - self.beta)
    }

    /// `N^{1 - (3 - p/2) alpha + (p/2 + 1) beta}`.
    pub fn prediction(&self) -> f64 {
        let p = self.p;
        self.scale.pow(1.0 - (3.0 - p / 2.0) * self.alpha + (p / 2.0 + 1.0) * self.beta)
    }

    pub fn in_range(&self) -> bool {
        let unit = 0.5..=1.0;
        unit.contains(&self.alpha)
            && unit.contains(&self.beta)
            && self.alpha + self.beta <= 1.5 + 1e-12
            && self.p >= 2.0
            && self.p <= 2.0 + 2.0 / (self.alpha + self.beta) + 1e-12
    }
}

/// Frequencies `(n1, n2, n1^2 + n2^2)` with `n1` in `[0, N^alpha]` integer and
/// `n2` in `[0, N^alpha]` on the lattice `N^{alpha - beta} Z`.
pub fn corollary2_atoms(params: &Corollary2Params) -> Vec<FrequencyAtom> {
    let top = params.scale.pow(params.alpha);
    let s = params.step();
    let n1_max = (top + 1e-9).floor() as i64;
    let k_max = (top / s + 1e-9).floor() as i64;
    let mut rng = match params.coefficients {
        Coefficients::RandomPhases { seed } => Some(stream(seed, "corollary2", 0)),
        Coefficients::AllOnes => None,
    };
    let mut atoms = Vec::with_capacity(((n1_max + 1) * (k_max + 1)) as usize);
    for n1 in 0..=n1_max {
        for k in 0..=k_max {
            let a = n1 as f64;
            let b = k as f64 * s;
            let amplitude = match rng.as_mut() {
                Some(r) => unit_phase(r.random::<f64>()),
                None => Complex64::new(1.0, 0.0),
            };
            atoms.push(FrequencyAtom { xi: vec![a, b, a * a + b * b], amplitude });
        }
    }
    atoms
}

pub fn corollary2_spectrum(params: &Corollary2Params) -> Spectrum {
    Spectrum::new(3, &corollary2_atoms(params), None).expect("three coordinates per atom").with_axis0_period(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corollary2Record {
    pub alpha: f64,
    pub beta: f64,
    pub scale: Scale,
    pub p: f64,
    pub atoms: usize,
    pub step: f64,
    /// Un-normalised integral of `|sum|^p` over `[0,1] x H1 x H2`.
    pub lhs: f64,
    pub prediction: f64,
    pub ratio: f64,
    /// The lattice step `N^{alpha - beta}` is not an integer.
    pub nonintegral_step: bool,
    pub out_of_range: bool,
    pub samples: usize,
}

/// Integrates over `[0,1] x H1 x H2`, periodic trapezoid rule in `x1` and
/// midpoint rules in `x2`, `x3` resolving each axis's own frequency span.
pub fn corollary2_statistic(params: &Corollary2Params) -> Result<Corollary2Record> {
    if !(params.p >= 1.0) {
        return Err(Error::Parameter(format!("p = {} is below 1", params.p)));
    }
    if !(params.oversampling >= 2.0) {
        return Err(Error::Quadrature(format!("oversampling {} below 2", params.oversampling)));
    }
    let spectrum = corollary2_spectrum(params);
    let n = params.scale;
    let lengths = [1.0, n.pow(params.beta - params.alpha), n.pow(1.0 - 2.0 * params.alpha)];
    let over = params.oversampling;
    let span0 = spectrum.extent(0).1 + 1.0;
    let count0 = ((over * span0).ceil() as usize).next_power_of_two();
    let mut axes = vec![GridAxis { origin: 0.0, step: 1.0 / count0 as f64, count: count0 }];
    for axis in 1..3 {
        let band = spectrum.extent(axis).1 + 1.0;
        let count = (over * band * lengths[axis]).ceil() as usize + 1;
        let step = lengths[axis] / count as f64;
        axes.push(GridAxis { origin: params.offsets[axis - 1] + 0.5 * step, step, count });
    }
    let grid = Grid { axes };
    let region = Region::Box {
        lo: vec![0.0, params.offsets[0], params.offsets[1]],
        hi: vec![1.0, params.offsets[0] + lengths[1], params.offsets[1] + lengths[2]],
    };
    let samples = Samples::Grid(grid);
    let mean = mean_powers(&[&spectrum], &samples, &region, None, params.p)[0];
    let lhs = mean * lengths.iter().product::<f64>();
    let prediction = params.prediction();
    let step = params.step();
    Ok(Corollary2Record {
        alpha: params.alpha,
        beta: params.beta,
        scale: n,
        p: params.p,
        atoms: spectrum.len(),
        step,
        lhs,
        prediction,
        ratio: lhs / prediction,
        nonintegral_step: (step - step.round()).abs() > 1e-9,
        out_of_range: !params.in_range(),
        samples: samples.len(),
    })
}

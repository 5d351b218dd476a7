//! JSON documents for caps, signals, tube families and packet tubes.

use serde::Serialize;
use smallcap::incidence::SyntheticTubeFamily;
use smallcap::tubes::Tube;
use smallcap::{AtomicSignal, CapFamily};

#[derive(Debug, Serialize)]
pub struct CapsDoc {
    pub n: usize,
    #[serde(rename = "R")]
    pub scale: u64,
    pub alpha: Vec<f64>,
    pub kind: &'static str,
    pub cells: Vec<usize>,
    pub count_factor: f64,
    pub corners: Vec<Vec<i64>>,
}

impl CapsDoc {
    pub fn new(f: &CapFamily) -> Self {
        Self {
            n: f.dimension(),
            scale: f.scale().value(),
            alpha: f.alpha().entries().to_vec(),
            kind: f.kind().as_str(),
            cells: f.cells().to_vec(),
            count_factor: f.count_factor(),
            corners: f.caps().into_iter().map(|c| c.corner).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AtomDoc {
    pub xi: Vec<f64>,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Serialize)]
pub struct SignalDoc {
    pub n: usize,
    #[serde(rename = "R")]
    pub scale: u64,
    pub alpha: Vec<f64>,
    pub lattice_period: Option<f64>,
    pub per_cap: usize,
    pub atoms: Vec<AtomDoc>,
}

impl SignalDoc {
    pub fn new(s: &AtomicSignal) -> Self {
        Self {
            n: s.dimension(),
            scale: s.scale().value(),
            alpha: s.alpha().entries().to_vec(),
            lattice_period: s.lattice_period(),
            per_cap: s.per_cap(),
            atoms: s
                .atoms()
                .iter()
                .map(|a| AtomDoc { xi: a.xi.clone(), re: a.amplitude.re, im: a.amplitude.im })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TubeDoc {
    pub theta: Vec<i64>,
    pub translate: Vec<i64>,
    pub re: f64,
    pub im: f64,
    pub direction: Vec<f64>,
    pub center: Vec<f64>,
}

impl TubeDoc {
    pub fn new(t: &Tube) -> Self {
        Self {
            theta: t.theta.clone(),
            translate: t.translate.clone(),
            re: t.weight.re,
            im: t.weight.im,
            direction: t.direction.clone(),
            center: t.center.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FamilyDoc {
    pub n: usize,
    #[serde(rename = "R")]
    pub scale: u64,
    pub alpha: Vec<f64>,
    pub placement: &'static str,
    pub seed: u64,
    pub n_i: usize,
    pub tubes: Vec<TubeDoc>,
}

impl FamilyDoc {
    pub fn new(f: &SyntheticTubeFamily) -> Self {
        Self {
            n: f.dimension(),
            scale: f.scale.value(),
            alpha: f.alpha.entries().to_vec(),
            placement: f.placement.as_str(),
            seed: f.seed,
            n_i: f.n_i,
            tubes: f.tubes.iter().map(TubeDoc::new).collect(),
        }
    }
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("document serializes");
    s.push('\n');
    s
}

/// Compact serialization used for hashing.
pub fn to_compact_json<T: Serialize>(doc: &T) -> String {
    serde_json::to_string(doc).expect("document serializes")
}

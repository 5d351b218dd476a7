//! Spatial tubes: labelled wave-packet footprints and their oriented-box
//! geometry, with an exact box intersection test in two and three
//! dimensions.

use num_complex::Complex64;

use crate::caps::tangent_frame;

/// A wave packet footprint `R^{1/2} x ... x R^{1/2} x R` attached to a
/// canonical cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    /// Corner of the canonical cap.
    pub theta: Vec<i64>,
    pub translate: Vec<i64>,
    pub weight: Complex64,
    /// Unit normal at the cap center: the long axis.
    pub direction: Vec<f64>,
    pub center: Vec<f64>,
    /// Center in the cap's lattice frame (tangential coordinates first,
    /// the long coordinate last); slab membership is read off from it.
    pub local: Vec<f64>,
}

impl Tube {
    /// Horizontal center of the tube's cap, recovered from the direction.
    pub fn cap_center(&self) -> Vec<f64> {
        let n = self.direction.len();
        let dn = self.direction[n - 1];
        self.direction[..n - 1].iter().map(|d| -d / (2.0 * dn)).collect()
    }

    /// Footprint at scale `r`, every side multiplied by `fatten`.
    pub fn shape(&self, r: f64, fatten: f64) -> TubeShape {
        let n = self.center.len();
        let mut half = vec![0.5 * fatten * r.sqrt(); n];
        half[n - 1] = 0.5 * fatten * r;
        TubeShape { center: self.center.clone(), axes: tangent_frame(&self.cap_center()), half }
    }
}

/// A box with orthonormal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeShape {
    pub center: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
    pub half: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl TubeShape {
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        out.center.iter_mut().zip(shift).for_each(|(c, s)| *c += s);
        out
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.axes.iter().zip(&self.half).all(|(e, h)| dot(e, &d).abs() <= *h)
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn bounding_half(&self) -> Vec<f64> {
        (0..self.center.len()).map(|i| self.axes.iter().zip(&self.half).map(|(e, h)| e[i].abs() * h).sum()).collect()
    }

    fn separated_along(&self, axis: &[f64], d: &[f64], box_half: &[f64]) -> bool {
        let norm = dot(axis, axis).sqrt();
        if norm < 1e-12 {
            return false;
        }
        let rb: f64 = axis.iter().zip(box_half).map(|(a, h)| a.abs() * h).sum();
        let rt: f64 = self.axes.iter().zip(&self.half).map(|(e, h)| dot(axis, e).abs() * h).sum();
        dot(axis, d).abs() > (rb + rt) * (1.0 + 1e-12)
    }

    /// Whether the closed shape meets the closed axis-aligned box with the
    /// given center and half sides. Exact for `n <= 3`; in higher
    /// dimensions only face axes are tried, which may report a touch that
    /// is not there.
    pub fn intersects_box(&self, box_center: &[f64], box_half: &[f64]) -> bool {
        let n = self.center.len();
        let d: Vec<f64> = self.center.iter().zip(box_center).map(|(a, b)| a - b).collect();
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            if self.separated_along(&e, &d, box_half) {
                return false;
            }
        }
        for a in &self.axes {
            if self.separated_along(a, &d, box_half) {
                return false;
            }
        }
        if n == 3 {
            for i in 0..3 {
                let mut e = [0.0; 3];
                e[i] = 1.0;
                for a in &self.axes {
                    if self.separated_along(&cross(&e, a), &d, box_half) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tilted() -> TubeShape {
        let s = 0.5f64.sqrt();
        TubeShape { center: vec![0.0, 0.0], axes: vec![vec![s, -s], vec![s, s]], half: vec![0.5, 10.0] }
    }

    #[test]
    fn containment_and_bounds() {
        let t = tilted();
        assert!(t.contains(&[5.0, 5.0]));
        assert!(!t.contains(&[5.0, -5.0]));
        let b = t.bounding_half();
        assert!((b[0] - 10.5 * 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn box_intersection_needs_the_tube_axes() {
        let t = tilted();
        assert!(t.intersects_box(&[6.0, 6.0], &[0.5, 0.5]));
        // inside the bounding box but off the diagonal strip
        assert!(!t.intersects_box(&[5.0, -4.0], &[0.5, 0.5]));
    }

    #[test]
    fn three_dimensional_edge_axes() {
        let c = tangent_frame(&[0.3, -0.2]);
        let t = TubeShape { center: vec![0.0; 3], axes: c, half: vec![1.0, 1.0, 20.0] };
        let mut hits = 0;
        for i in -20..=20 {
            for j in -20..=20 {
                let center = [i as f64, j as f64, 0.0];
                let sat = t.intersects_box(&center, &[0.5, 0.5, 0.5]);
                // any sampled interior point of the cube inside the tube forces a hit
                let mut sampled = false;
                for a in 0..5 {
                    for b in 0..5 {
                        for z in 0..5 {
                            let x = [
                                center[0] - 0.5 + a as f64 / 4.0,
                                center[1] - 0.5 + b as f64 / 4.0,
                                -0.5 + z as f64 / 4.0,
                            ];
                            sampled |= t.contains(&x);
                        }
                    }
                }
                assert!(!sampled || sat);
                hits += sat as usize;
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn cap_center_round_trip() {
        let c = [0.25, -0.5];
        let tube = Tube {
            theta: vec![0, 0],
            translate: vec![0, 0, 0],
            weight: Complex64::new(1.0, 0.0),
            direction: crate::caps::normal_at(&c),
            center: vec![0.0; 3],
            local: vec![0.0; 3],
        };
        let back = tube.cap_center();
        assert!((back[0] - 0.25).abs() < 1e-12 && (back[1] + 0.5).abs() < 1e-12);
    }
}

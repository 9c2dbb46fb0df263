use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

/// Optimal rigid superposition of `mobile` onto `target`:
/// `x -> rotation * (x - mobile_centroid) + target_centroid`.
#[derive(Clone, Debug)]
pub struct Superposition {
    pub rotation: Matrix3<f64>,
    pub mobile_centroid: Vector3<f64>,
    pub target_centroid: Vector3<f64>,
    pub rmsd: f64,
}

impl Superposition {
    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let v = self.rotation * (Vector3::from(x) - self.mobile_centroid) + self.target_centroid;
        [v.x, v.y, v.z]
    }
}

fn centroid(points: &[[f64; 3]]) -> Vector3<f64> {
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p));
    sum / points.len() as f64
}

/// Kabsch superposition via SVD of the covariance, with the determinant
/// sign correction that excludes reflections.
pub fn superpose(mobile: &[[f64; 3]], target: &[[f64; 3]]) -> Result<Superposition> {
    if mobile.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            found: mobile.len(),
        });
    }
    if mobile.len() < 3 {
        return Err(Error::TooFewPoints(mobile.len()));
    }
    let (ca, cb) = (centroid(mobile), centroid(target));
    let mut h = Matrix3::zeros();
    for (a, b) in mobile.iter().zip(target) {
        h += (Vector3::from(*a) - ca) * (Vector3::from(*b) - cb).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, if d == 0.0 { 1.0 } else { d }));
    let rotation = v * correction * u.transpose();

    let sq: f64 = mobile
        .iter()
        .zip(target)
        .map(|(a, b)| {
            let moved = rotation * (Vector3::from(*a) - ca);
            (moved - (Vector3::from(*b) - cb)).norm_squared()
        })
        .sum();
    Ok(Superposition {
        rotation,
        mobile_centroid: ca,
        target_centroid: cb,
        rmsd: (sq / mobile.len() as f64).sqrt(),
    })
}

/// Minimal RMSD over rigid motions, in the units of the input.
pub fn kabsch_rmsd(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    superpose(a, b).map(|s| s.rmsd)
}

/// RNA TM-score distance scale `max(0.3, 0.6 sqrt(n - 0.5) - 2.5)`.
pub fn tm_d0(n: usize) -> f64 {
    (0.6 * (n as f64 - 0.5).max(0.0).sqrt() - 2.5).max(0.3)
}

/// `(1/n) sum 1 / (1 + (d_i / d0)^2)` for per-residue distances.
pub fn tm_score_from_distances(distances: &[f64], n: usize) -> f64 {
    let d0 = tm_d0(n);
    distances
        .iter()
        .map(|d| 1.0 / (1.0 + (d / d0) * (d / d0)))
        .sum::<f64>()
        / n as f64
}

/// TM-score of equal-length chains under their Kabsch superposition.
pub fn tm_score(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    let sup = superpose(a, b)?;
    let distances: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let m = sup.apply(*x);
            ((m[0] - y[0]).powi(2) + (m[1] - y[1]).powi(2) + (m[2] - y[2]).powi(2)).sqrt()
        })
        .collect();
    Ok(tm_score_from_distances(&distances, a.len()))
}

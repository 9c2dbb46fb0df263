//! Synthetic structures with known answers: random coils, ideal hairpins
//! with exact pairing geometry, and small corpora built from them.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::featurizer::noisy_structure;
use crate::rna_io::{write_pdb, Ensemble, RnaStructure, BASES};
use crate::Result;

/// Distance between paired glycosidic nitrogens in the ideal helix.
pub const PAIR_DISTANCE: f64 = 8.9;

pub fn random_sequence<R: Rng + ?Sized>(n: usize, rng: &mut R) -> String {
    (0..n).map(|_| *BASES.choose(rng).expect("nonempty")).collect()
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    ]
}

fn unit3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-12);
    [v[0] / n, v[1] / n, v[2] / n]
}

fn offset(a: [f64; 3], d: [f64; 3], len: f64) -> [f64; 3] {
    [a[0] + d[0] * len, a[1] + d[1] * len, a[2] + d[2] * len]
}

/// Self-avoiding-ish random walk of C4' atoms (6 Å steps) with P and N
/// beads hung off at typical bond-scale offsets.
pub fn random_coil<R: Rng + ?Sized>(id: &str, sequence: &str, rng: &mut R) -> RnaStructure {
    let n = sequence.chars().count();
    let mut c4: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut dir = unit3(gaussian3(rng));
    for i in 0..n {
        if i == 0 {
            c4.push([0.0; 3]);
            continue;
        }
        let prev = c4[i - 1];
        let mut best = None;
        for _ in 0..32 {
            let g = gaussian3(rng);
            let cand_dir = unit3([dir[0] + 0.8 * g[0], dir[1] + 0.8 * g[1], dir[2] + 0.8 * g[2]]);
            let cand = offset(prev, cand_dir, 6.0);
            let clash = c4.iter().any(|p| {
                let d = [p[0] - cand[0], p[1] - cand[1], p[2] - cand[2]];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() < 4.5
            });
            best = Some((cand, cand_dir));
            if !clash {
                break;
            }
        }
        let (p, d) = best.expect("at least one candidate");
        c4.push(p);
        dir = d;
    }
    let beads = c4
        .iter()
        .map(|&c| {
            let p = offset(c, unit3(gaussian3(rng)), 3.9);
            let nb = offset(c, unit3(gaussian3(rng)), 3.4);
            [p, c, nb]
        })
        .collect();
    RnaStructure::new(id, sequence, beads).expect("consistent lengths")
}

/// Ideal antiparallel stem parameters. Paired nitrogens sit on a cylinder of
/// radius `n_radius` separated by `pair_angle`, so their chord is exactly
/// [`PAIR_DISTANCE`] whatever the rise and twist.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HelixGeometry {
    pub rise: f64,
    /// Degrees per base step.
    pub twist: f64,
    pub n_radius: f64,
    pub backbone_radius: f64,
}

impl Default for HelixGeometry {
    fn default() -> Self {
        Self {
            rise: 2.81,
            twist: 32.7,
            n_radius: 5.0,
            backbone_radius: 9.0,
        }
    }
}

impl HelixGeometry {
    /// Angular separation of paired nitrogens, radians.
    pub fn pair_angle(&self) -> f64 {
        2.0 * (PAIR_DISTANCE / (2.0 * self.n_radius)).asin()
    }
}

fn cyl(r: f64, angle: f64, z: f64) -> [f64; 3] {
    [r * angle.cos(), r * angle.sin(), z]
}

pub fn complement(c: char) -> char {
    match c {
        'A' => 'U',
        'U' => 'A',
        'G' => 'C',
        'C' => 'G',
        other => other,
    }
}

/// Stem-loop: `stem` is the 5' strand, the 3' strand is its Watson-Crick
/// complement. Returns the structure and its base pairs `(i, j)`, `i < j`.
pub fn hairpin(id: &str, stem: &str, loop_seq: &str, geom: &HelixGeometry) -> (RnaStructure, Vec<(usize, usize)>) {
    let s: Vec<char> = stem.chars().collect();
    let l = loop_seq.chars().count();
    let n = 2 * s.len() + l;
    let twist = geom.twist.to_radians();
    let delta = geom.pair_angle();
    let rb = geom.backbone_radius;
    let mut beads = vec![[[0.0; 3]; 3]; n];
    let mut pairs = Vec::new();
    for t in 0..s.len() {
        let phi = t as f64 * twist;
        let z = t as f64 * geom.rise;
        beads[t] = [
            cyl(rb + 0.5, phi - 0.6, z - 1.0),
            cyl(rb, phi - 0.35, z),
            cyl(geom.n_radius, phi, z),
        ];
        let u = n - 1 - t;
        let psi = phi + delta;
        beads[u] = [
            cyl(rb + 0.5, psi + 0.6, z + 1.0),
            cyl(rb, psi + 0.35, z),
            cyl(geom.n_radius, psi, z),
        ];
        pairs.push((t, u));
    }
    let top = s.len().saturating_sub(1) as f64;
    let (phi_top, z_top) = (top * twist, top * geom.rise);
    for q in 0..l {
        let a = (q + 1) as f64 / (l + 1) as f64;
        let phi = phi_top + a * delta;
        let z = z_top + 2.0 + 4.0 * (std::f64::consts::PI * a).sin();
        beads[s.len() + q] = [
            cyl(rb + 1.5, phi, z - 0.8),
            cyl(rb + 1.0, phi, z),
            cyl(rb + 4.0, phi, z + 0.5),
        ];
    }
    let sequence: String = s
        .iter()
        .copied()
        .chain(loop_seq.chars())
        .chain(s.iter().rev().map(|&c| complement(c)))
        .collect();
    let structure = RnaStructure::new(id, sequence, beads).expect("consistent lengths");
    (structure, pairs)
}

/// Hairpin with a random G/C stem and an all-A loop.
pub fn random_hairpin<R: Rng + ?Sized>(
    id: &str,
    stem_len: usize,
    loop_len: usize,
    geom: &HelixGeometry,
    rng: &mut R,
) -> (RnaStructure, Vec<(usize, usize)>) {
    let stem: String = (0..stem_len).map(|_| if rng.random_bool(0.5) { 'G' } else { 'C' }).collect();
    hairpin(id, &stem, &"A".repeat(loop_len), geom)
}

/// Uniformly random rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    let q = Quaternion::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    let m = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
    let m = m.matrix();
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, x) in row.iter_mut().enumerate() {
            *x = m[(r, c)];
        }
    }
    out
}

/// `x -> R x + t`.
pub fn rigid_motion(rotation: &[[f64; 3]; 3], translation: [f64; 3]) -> impl Fn([f64; 3]) -> [f64; 3] + '_ {
    move |x| {
        let v = Vector3::from(x);
        let mut out = [0.0; 3];
        for r in 0..3 {
            out[r] = rotation[r][0] * v[0] + rotation[r][1] * v[1] + rotation[r][2] * v[2] + translation[r];
        }
        out
    }
}

/// Random coil ensemble: one coil plus `k - 1` Gaussian perturbations of it.
pub fn random_ensemble<R: Rng + ?Sized>(id: &str, n: usize, k: usize, sigma: f64, rng: &mut R) -> Ensemble {
    let seq = random_sequence(n, rng);
    let base = random_coil(&format!("{id}_0"), &seq, rng);
    let mut states = vec![base.clone()];
    for c in 1..k {
        let mut s = noisy_structure(&base, sigma, rng);
        s.id = format!("{id}_{c}");
        states.push(s);
    }
    Ensemble::new(id, states).expect("shared sequence")
}

/// One synthetic corpus entry with the pairing used to build it.
#[derive(Clone, Debug)]
pub struct SyntheticEnsemble {
    pub ensemble: Ensemble,
    pub pairs: Vec<(usize, usize)>,
}

/// `count` hairpin ensembles (stems 4-8, loops 3-6, 1 to `max_states`
/// states differing in twist and rise), each randomly posed.
pub fn hairpin_corpus<R: Rng + ?Sized>(count: usize, max_states: usize, rng: &mut R) -> Vec<SyntheticEnsemble> {
    (0..count)
        .map(|e| {
            let id = format!("hp{e:03}");
            let stem_len = rng.random_range(4..=8);
            let loop_len = rng.random_range(3..=6);
            let k = rng.random_range(1..=max_states.max(1));
            let stem: String = (0..stem_len).map(|_| if rng.random_bool(0.5) { 'G' } else { 'C' }).collect();
            let loop_seq = "A".repeat(loop_len);
            let mut pairs = Vec::new();
            let states = (0..k)
                .map(|c| {
                    let geom = HelixGeometry {
                        twist: 32.7 + rng.random_range(-4.0..4.0),
                        rise: 2.81 + rng.random_range(-0.3..0.3),
                        ..HelixGeometry::default()
                    };
                    let (s, p) = hairpin(&format!("{id}_{c}"), &stem, &loop_seq, &geom);
                    pairs = p;
                    let rot = random_rotation(rng);
                    let shift = [
                        rng.random_range(-20.0..20.0),
                        rng.random_range(-20.0..20.0),
                        rng.random_range(-20.0..20.0),
                    ];
                    s.map_coords(rigid_motion(&rot, shift))
                })
                .collect();
            SyntheticEnsemble {
                ensemble: Ensemble::new(id, states).expect("shared sequence"),
                pairs,
            }
        })
        .collect()
}

/// Writes one `<id>.pdb` per ensemble (one chain per state) into `dir`.
pub fn write_corpus(dir: &Path, ensembles: &[Ensemble]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for e in ensembles {
        fs::write(dir.join(format!("{}.pdb", e.id)), write_pdb(&e.states))?;
    }
    Ok(())
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Unit vector along `a`, or exactly zero for a zero-length input.
pub fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    if n < 1e-12 {
        [0.0; 3]
    } else {
        [a[0] / n, a[1] / n, a[2] / n]
    }
}

/// Signed torsion angle (radians, IUPAC sign) about the `b -> c` bond.
pub fn dihedral(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> f64 {
    let b1 = sub(b, a);
    let b2 = sub(c, b);
    let b3 = sub(d, c);
    let n1 = cross(b1, b2);
    let n2 = cross(b2, b3);
    let y = norm(b2) * dot(b1, n2);
    let x = dot(n1, n2);
    y.atan2(x)
}

/// `(sin, cos)` of the angle between two vectors; zeros if either vanishes.
pub(crate) fn angle_sin_cos(u: [f64; 3], v: [f64; 3]) -> (f64, f64) {
    let d = norm(u) * norm(v);
    if d < 1e-12 {
        return (0.0, 0.0);
    }
    (norm(cross(u, v)) / d, dot(u, v) / d)
}

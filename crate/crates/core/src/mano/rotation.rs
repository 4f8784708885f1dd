pub type Mat3 = [[f64; 3]; 3];

pub(crate) const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// `sin θ / θ` and `(1 - cos θ) / θ²`.
fn coefficients(theta: f64) -> (f64, f64) {
    if theta < 1e-8 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let half = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * half * half / (theta * theta))
    }
}

/// Derivatives of the coefficients above, divided by θ.
fn coefficient_slopes(theta: f64) -> (f64, f64) {
    let t2 = theta * theta;
    if theta < 0.05 {
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        (
            -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0 + t6 / 45360.0,
            -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0 + t6 / 453600.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        (
            (theta * c - s) / (t2 * theta),
            (theta * s - 2.0 * (1.0 - c)) / (t2 * t2),
        )
    }
}

fn skew(a: [f64; 3]) -> Mat3 {
    [[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]]
}

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn mat_t_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

fn frobenius(a: &Mat3, b: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

/// Axis-angle to rotation matrix.
pub fn rodrigues(a: [f64; 3]) -> Mat3 {
    let theta = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let (ca, cb) = coefficients(theta);
    let k = skew(a);
    let k2 = mat_mul(&k, &k);
    let mut r = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += ca * k[i][j] + cb * k2[i][j];
        }
    }
    r
}

/// Gradient with respect to the axis-angle, given the gradient `g` with
/// respect to the matrix.
pub fn rodrigues_vjp(a: [f64; 3], g: &Mat3) -> [f64; 3] {
    let theta = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let (ca, cb) = coefficients(theta);
    let (da, db) = coefficient_slopes(theta);
    let k = skew(a);
    let k2 = mat_mul(&k, &k);
    let gk = frobenius(g, &k);
    let gk2 = frobenius(g, &k2);
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let ei = skew(e);
        let mut sym = mat_mul(&ei, &k);
        let ke = mat_mul(&k, &ei);
        for r in 0..3 {
            for c in 0..3 {
                sym[r][c] += ke[r][c];
            }
        }
        *o = da * a[i] * gk + ca * frobenius(g, &ei) + db * a[i] * gk2 + cb * frobenius(g, &sym);
    }
    out
}

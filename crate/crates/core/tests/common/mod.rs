//! Dense-matrix reference implementations shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64 as C;

pub type Mat = Vec<Vec<C>>;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn identity(n: usize) -> Mat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect())
        .collect()
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0, 0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = vec![vec![c(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == c(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(a: &Mat, v: &[C]) -> Vec<C> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn ry(t: f64) -> Mat {
    let (s, co) = (t / 2.0).sin_cos();
    vec![vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]]
}

pub fn rz(t: f64) -> Mat {
    vec![
        vec![C::from_polar(1.0, -t / 2.0), c(0.0, 0.0)],
        vec![c(0.0, 0.0), C::from_polar(1.0, t / 2.0)],
    ]
}

pub fn h() -> Mat {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    vec![vec![c(r, 0.0), c(r, 0.0)], vec![c(r, 0.0), c(-r, 0.0)]]
}

/// `RZ(ω) RY(θ) RZ(φ)`.
pub fn rot(phi: f64, theta: f64, omega: f64) -> Mat {
    matmul(&rz(omega), &matmul(&ry(theta), &rz(phi)))
}

/// `I ⊗ … ⊗ g ⊗ … ⊗ I` with qubit 0 as the leftmost factor.
pub fn lift(g: &Mat, q: usize, n: usize) -> Mat {
    let id = identity(2);
    let mut out = identity(1);
    for i in 0..n {
        out = kron(&out, if i == q { g } else { &id });
    }
    out
}

/// `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ X` placed on (control, target).
pub fn cnot(control: usize, target: usize, n: usize) -> Mat {
    let p0 = vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]];
    let p1 = vec![vec![c(0.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]];
    let x = vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]];
    let mut a = identity(1);
    let mut b = identity(1);
    for i in 0..n {
        let (fa, fb) = if i == control {
            (p0.clone(), p1.clone())
        } else if i == target {
            (identity(2), x.clone())
        } else {
            (identity(2), identity(2))
        };
        a = kron(&a, &fa);
        b = kron(&b, &fb);
    }
    a.iter()
        .zip(&b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

/// Dense unitary of strongly entangling layers over `targets` in an `n`-qubit register.
pub fn entangling_unitary(targets: &[usize], n_layers: usize, angles: &[f64], n: usize) -> Mat {
    let mut u = identity(1 << n);
    let m = targets.len();
    for l in 0..n_layers {
        for (s, &q) in targets.iter().enumerate() {
            let b = (l * m + s) * 3;
            u = matmul(&lift(&rot(angles[b], angles[b + 1], angles[b + 2]), q, n), &u);
        }
        if m > 1 {
            for i in 0..m {
                u = matmul(&cnot(targets[i], targets[(i + 1) % m], n), &u);
            }
        }
    }
    u
}

pub fn basis(n: usize, idx: usize) -> Vec<C> {
    let mut v = vec![c(0.0, 0.0); 1 << n];
    v[idx] = c(1.0, 0.0);
    v
}

pub fn max_diff(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

//! Log-barrier interior point method for the linearized penalty subproblem.
//!
//! Variables per eligible client are the relaxed selection `a`, the
//! reciprocal bandwidth `z` and the envelope product `u`, plus one shared
//! epigraph value. The Newton system is block diagonal (3x3 per client) with
//! an arrow border for the epigraph variable and two rank-one terms (data
//! budget and bandwidth sum), so each step costs O(n).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::RoundProblem;
use crate::error::{Error, Result};
use crate::math;

/// Relaxed iterate in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedPoint {
    pub a: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub upsilon: f64,
}

impl RelaxedPoint {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `w * self + (1 - w) * other`.
    pub fn blend(&self, other: &RelaxedPoint, w: f64) -> RelaxedPoint {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| w * p + (1.0 - w) * q).collect();
        RelaxedPoint {
            a: mix(&self.a, &other.a),
            z: mix(&self.z, &other.z),
            u: mix(&self.u, &other.u),
            upsilon: w * self.upsilon + (1.0 - w) * other.upsilon,
        }
    }
}

/// Convex subproblem with the concave penalty part linearized at `anchor`.
#[derive(Debug, Clone, Copy)]
pub struct Subproblem<'a> {
    pub problem: &'a RoundProblem,
    pub rho: f64,
    pub anchor: &'a [f64],
    pub b_min: f64,
    /// Positive magnitude of the objective used to normalize iterations.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub point: RelaxedPoint,
    /// Linearized objective at `point`.
    pub objective: f64,
    /// Duality gap bound `m / t`, original units.
    pub gap: f64,
    /// Infinity norm of the Lagrangian gradient, original units.
    pub stationarity: f64,
    pub newton_steps: usize,
}

struct Coeffs {
    n: usize,
    z_max: f64,
    ca: Vec<f64>,
    cu: Vec<f64>,
    la: Vec<f64>,
    lu: Vec<f64>,
    /// `d_i / e2`; empty when the budget is vacuous.
    dd: Vec<f64>,
}

impl Coeffs {
    fn new(sub: &Subproblem<'_>) -> Self {
        let p = sub.problem;
        let s = sub.scale;
        let budget = p.data_budget > 0.0;
        Coeffs {
            n: p.len(),
            z_max: 1.0 / sub.b_min,
            ca: p
                .clients
                .iter()
                .zip(sub.anchor)
                .map(|(c, &a0)| (p.alpha2 * c.compute_energy + sub.rho * (1.0 - 2.0 * a0)) / s)
                .collect(),
            cu: p.clients.iter().map(|c| p.alpha2 * c.power * c.upload / s).collect(),
            la: p.clients.iter().map(|c| p.alpha1 * c.compute_latency / s).collect(),
            lu: p.clients.iter().map(|c| p.alpha1 * c.upload / s).collect(),
            dd: if budget {
                p.clients.iter().map(|c| c.data / p.data_budget).collect()
            } else {
                Vec::new()
            },
        }
    }

    fn constraints(&self) -> usize {
        7 * self.n + 1 + usize::from(!self.dd.is_empty())
    }

    /// Gradient of each linear per-client slack with respect to (a, z, u).
    fn rows(&self, i: usize) -> [[f64; 3]; 7] {
        let zm = self.z_max;
        [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [-1.0, 0.0, 1.0],
            [zm, 0.0, -1.0],
            [1.0, 1.0, -1.0],
            [-zm, -1.0, 1.0],
            [-self.la[i], 0.0, -self.lu[i]],
        ]
    }

    fn slacks(&self, x: &Iterate, i: usize) -> [f64; 7] {
        let (a, z, u) = (x.v[i][0], x.v[i][1], x.v[i][2]);
        let zm = self.z_max;
        [
            a,
            1.0 - a,
            u - a,
            zm * a - u,
            z + a - 1.0 - u,
            u - z + zm * (1.0 - a),
            x.y - self.la[i] * a - self.lu[i] * u,
        ]
    }

    fn budget_slack(&self, x: &Iterate) -> f64 {
        self.dd.iter().zip(&x.v).map(|(d, v)| d * v[0]).sum::<f64>() - 1.0
    }

    fn band_slack(&self, x: &Iterate) -> f64 {
        1.0 - x.v.iter().map(|v| 1.0 / v[1]).sum::<f64>()
    }

    fn linear_objective(&self, x: &Iterate) -> f64 {
        x.v.iter()
            .enumerate()
            .map(|(i, v)| self.ca[i] * v[0] + self.cu[i] * v[2])
            .sum::<f64>()
            + x.y
    }

    /// `t * objective - sum log slack`, or `None` outside the interior.
    fn merit(&self, x: &Iterate, t: f64) -> Option<f64> {
        let mut phi = 0.0;
        for i in 0..self.n {
            for s in self.slacks(x, i) {
                if !(s > 0.0) {
                    return None;
                }
                phi -= math::ln(s);
            }
        }
        if !self.dd.is_empty() {
            let s = self.budget_slack(x);
            if !(s > 0.0) {
                return None;
            }
            phi -= math::ln(s);
        }
        let s = self.band_slack(x);
        if !(s > 0.0) {
            return None;
        }
        phi -= math::ln(s);
        Some(t * self.linear_objective(x) + phi)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Iterate {
    v: Vec<[f64; 3]>,
    y: f64,
}

/// Block-diagonal plus arrow plus rank-two system.
pub(crate) struct ArrowSystem {
    pub blocks: Vec<[[f64; 3]; 3]>,
    pub coupling: Vec<[f64; 3]>,
    pub corner: f64,
    pub p: Vec<[f64; 3]>,
    pub q: Vec<[f64; 3]>,
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn dot(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dot3(x, y)).sum()
}

/// Cholesky factor of a symmetric 3x3 matrix, with diagonal jitter on failure.
fn cholesky3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let scale = m[0][0].abs().max(m[1][1].abs()).max(m[2][2].abs()).max(1e-300);
    let mut jitter = 0.0;
    loop {
        let mut l = [[0.0; 3]; 3];
        let mut ok = true;
        for i in 0..3 {
            for j in 0..=i {
                let mut s = m[i][j] + if i == j { jitter } else { 0.0 };
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if !(s > 0.0) {
                        ok = false;
                        break;
                    }
                    l[i][i] = math::sqrt(s);
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
            if !ok {
                break;
            }
        }
        if ok {
            return l;
        }
        jitter = if jitter == 0.0 { 1e-14 * scale } else { jitter * 100.0 };
    }
}

fn solve_chol(l: &[[f64; 3]; 3], b: &[f64; 3]) -> [f64; 3] {
    let mut y = [0.0; 3];
    for i in 0..3 {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let mut s = y[i];
        for k in i + 1..3 {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

impl ArrowSystem {
    /// Solves `[D + p p' + q q', m; m', h] [x; y] = [r; r_y]`.
    pub fn solve(&self, r: &[[f64; 3]], r_y: f64) -> (Vec<[f64; 3]>, f64) {
        let factors: Vec<[[f64; 3]; 3]> = self.blocks.iter().map(cholesky3).collect();
        let dinv = |v: &[[f64; 3]]| -> Vec<[f64; 3]> {
            factors.iter().zip(v).map(|(l, b)| solve_chol(l, b)).collect()
        };
        let dp = dinv(&self.p);
        let dq = dinv(&self.q);
        // Capacitance matrix of the rank-two update.
        let s00 = 1.0 + dot(&self.p, &dp);
        let s01 = dot(&self.p, &dq);
        let s11 = 1.0 + dot(&self.q, &dq);
        let det = s00 * s11 - s01 * s01;
        let minv = |v: &[[f64; 3]]| -> Vec<[f64; 3]> {
            let dv = dinv(v);
            let (bp, bq) = (dot(&self.p, &dv), dot(&self.q, &dv));
            let cp = (s11 * bp - s01 * bq) / det;
            let cq = (s00 * bq - s01 * bp) / det;
            dv.iter()
                .zip(dp.iter().zip(&dq))
                .map(|(x, (p, q))| {
                    [
                        x[0] - cp * p[0] - cq * q[0],
                        x[1] - cp * p[1] - cq * q[1],
                        x[2] - cp * p[2] - cq * q[2],
                    ]
                })
                .collect()
        };
        let xr = minv(r);
        let xm = minv(&self.coupling);
        let schur = self.corner - dot(&self.coupling, &xm);
        let y = (r_y - dot(&self.coupling, &xr)) / schur;
        let x = xr
            .iter()
            .zip(&xm)
            .map(|(a, b)| [a[0] - y * b[0], a[1] - y * b[1], a[2] - y * b[2]])
            .collect();
        (x, y)
    }
}

fn to_iterate(x: &RelaxedPoint, scale: f64) -> Iterate {
    Iterate {
        v: (0..x.len()).map(|i| [x.a[i], x.z[i], x.u[i]]).collect(),
        y: x.upsilon / scale,
    }
}

fn from_iterate(x: &Iterate, scale: f64) -> RelaxedPoint {
    RelaxedPoint {
        a: x.v.iter().map(|v| v[0]).collect(),
        z: x.v.iter().map(|v| v[1]).collect(),
        u: x.v.iter().map(|v| v[2]).collect(),
        upsilon: x.y * scale,
    }
}

fn dump(x: &Iterate) -> alloc::string::String {
    format!("a={:?} z={:?} u={:?} y={}", x.v.iter().map(|v| v[0]).collect::<Vec<_>>(), x.v.iter().map(|v| v[1]).collect::<Vec<_>>(), x.v.iter().map(|v| v[2]).collect::<Vec<_>>(), x.y)
}

impl Subproblem<'_> {
    /// Linearized objective in original units, constants included.
    pub fn objective(&self, x: &RelaxedPoint) -> f64 {
        let c = Coeffs::new(self);
        let it = to_iterate(x, self.scale);
        let constant: f64 = self.rho * self.anchor.iter().map(|a| a * a).sum::<f64>();
        c.linear_objective(&it) * self.scale + constant
    }

    /// Whether `x` lies strictly inside the feasible set.
    pub fn is_interior(&self, x: &RelaxedPoint) -> bool {
        Coeffs::new(self).merit(&to_iterate(x, self.scale), 0.0).is_some()
    }
}

const MU: f64 = 20.0;
const CENTERING_STEPS: usize = 200;

/// Solves the subproblem from a strictly feasible start.
pub fn solve_subproblem(sub: &Subproblem<'_>, start: &RelaxedPoint, tolerance: f64) -> Result<SubproblemSolution> {
    let n = sub.problem.len();
    if start.len() != n || sub.anchor.len() != n {
        return Err(Error::shape("subproblem start and anchor must cover every eligible client"));
    }
    if !(sub.scale > 0.0) || !sub.scale.is_finite() {
        return Err(Error::domain("subproblem scale must be finite and > 0"));
    }
    let c = Coeffs::new(sub);
    let mut x = to_iterate(start, sub.scale);
    if c.merit(&x, 1.0).is_none() {
        return Err(Error::Solver {
            reason: "start point is not strictly feasible",
            dump: dump(&x),
        });
    }
    let m = c.constraints() as f64;
    let mut t = 1.0f64;
    let mut steps = 0usize;
    let last_grad_norm = loop {
        let grad_norm = center(&c, &mut x, t, &mut steps)?;
        if m / t <= tolerance {
            break grad_norm;
        }
        t *= MU;
    };
    let point = from_iterate(&x, sub.scale);
    Ok(SubproblemSolution {
        objective: sub.objective(&point),
        point,
        gap: m / t * sub.scale,
        stationarity: last_grad_norm / t * sub.scale,
        newton_steps: steps,
    })
}

/// Damped Newton centering at barrier weight `t`; returns the final
/// gradient infinity norm.
fn center(c: &Coeffs, x: &mut Iterate, t: f64, steps: &mut usize) -> Result<f64> {
    let n = c.n;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..CENTERING_STEPS {
        let mut sys = ArrowSystem {
            blocks: vec![[[0.0; 3]; 3]; n],
            coupling: vec![[0.0; 3]; n],
            corner: 0.0,
            p: vec![[0.0; 3]; n],
            q: vec![[0.0; 3]; n],
        };
        let mut g = vec![[0.0; 3]; n];
        let mut gy = t;
        let s9 = c.band_slack(x);
        let s8 = if c.dd.is_empty() { 1.0 } else { c.budget_slack(x) };
        for i in 0..n {
            let rows = c.rows(i);
            let s = c.slacks(x, i);
            let blk = &mut sys.blocks[i];
            for (j, row) in rows.iter().enumerate() {
                let inv = 1.0 / s[j];
                let inv2 = inv * inv;
                for r in 0..3 {
                    g[i][r] -= row[r] * inv;
                    for q in 0..3 {
                        blk[r][q] += row[r] * row[q] * inv2;
                    }
                }
            }
            let inv7 = 1.0 / s[6];
            gy -= inv7;
            sys.corner += inv7 * inv7;
            for r in 0..3 {
                sys.coupling[i][r] = rows[6][r] * inv7 * inv7;
            }
            if !c.dd.is_empty() {
                g[i][0] -= c.dd[i] / s8;
                sys.p[i][0] = c.dd[i] / s8;
            }
            let z = x.v[i][1];
            let v = 1.0 / (z * z);
            g[i][1] -= v / s9;
            sys.q[i][1] = v / s9;
            blk[1][1] += 2.0 / (z * z * z * s9);
            g[i][0] += t * c.ca[i];
            g[i][2] += t * c.cu[i];
        }
        grad_norm = g
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| math::abs(*v))
            .fold(math::abs(gy), f64::max);
        let rhs: Vec<[f64; 3]> = g.iter().map(|r| [-r[0], -r[1], -r[2]]).collect();
        let (dx, dy) = sys.solve(&rhs, -gy);
        let decrement = -(dot(&g, &dx) + gy * dy);
        if !decrement.is_finite() {
            return Err(Error::Solver {
                reason: "non-finite Newton step",
                dump: dump(x),
            });
        }
        if decrement <= 2e-12 {
            break;
        }
        *steps += 1;

        // Largest step keeping the linear slacks positive.
        let mut alpha = 1.0f64;
        for i in 0..n {
            let rows = c.rows(i);
            let s = c.slacks(x, i);
            for (j, row) in rows.iter().enumerate() {
                let mut ds = dot3(row, &dx[i]);
                if j == 6 {
                    ds += dy;
                }
                if ds < 0.0 {
                    alpha = alpha.min(-0.99 * s[j] / ds);
                }
            }
        }
        if !c.dd.is_empty() {
            let ds: f64 = c.dd.iter().zip(&dx).map(|(d, v)| d * v[0]).sum();
            if ds < 0.0 {
                alpha = alpha.min(-0.99 * s8 / ds);
            }
        }
        let f0 = c.merit(x, t).expect("iterate stays interior");
        let slope = -decrement;
        let mut accepted = false;
        while alpha > 1e-16 {
            let trial = Iterate {
                v: x
                    .v
                    .iter()
                    .zip(&dx)
                    .map(|(v, d)| [v[0] + alpha * d[0], v[1] + alpha * d[1], v[2] + alpha * d[2]])
                    .collect(),
                y: x.y + alpha * dy,
            };
            if let Some(f1) = c.merit(&trial, t) {
                if f1 <= f0 + 0.25 * alpha * slope {
                    *x = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(grad_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    #[test]
    fn arrow_solve_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for n in [1usize, 2, 5, 9] {
            let mut blocks = Vec::new();
            for _ in 0..n {
                let g: [[f64; 3]; 3] = core::array::from_fn(|_| core::array::from_fn(|_| rng.random_range(-1.0..1.0)));
                let mut b = [[0.0; 3]; 3];
                for r in 0..3 {
                    for c in 0..3 {
                        b[r][c] = (0..3).map(|k| g[r][k] * g[c][k]).sum::<f64>() + if r == c { 0.5 } else { 0.0 };
                    }
                }
                blocks.push(b);
            }
            let rand3 = |rng: &mut rand_chacha::ChaCha8Rng| -> [f64; 3] { core::array::from_fn(|_| rng.random_range(-1.0..1.0)) };
            let coupling: Vec<_> = (0..n).map(|_| rand3(&mut rng)).collect();
            let p: Vec<_> = (0..n).map(|_| rand3(&mut rng)).collect();
            let q: Vec<_> = (0..n).map(|_| rand3(&mut rng)).collect();
            let r: Vec<_> = (0..n).map(|_| rand3(&mut rng)).collect();
            let corner = 5.0 * n as f64;
            let sys = ArrowSystem { blocks: blocks.clone(), coupling: coupling.clone(), corner, p: p.clone(), q: q.clone() };
            let (x, y) = sys.solve(&r, 0.7);

            let dim = 3 * n + 1;
            let mut m = DMatrix::<f64>::zeros(dim, dim);
            let flat = |v: &[[f64; 3]]| DVector::from_iterator(3 * n, v.iter().flat_map(|a| a.iter().copied()));
            let (pv, qv) = (flat(&p), flat(&q));
            for i in 0..n {
                for a in 0..3 {
                    for b in 0..3 {
                        m[(3 * i + a, 3 * i + b)] = blocks[i][a][b];
                    }
                    m[(3 * i + a, dim - 1)] = coupling[i][a];
                    m[(dim - 1, 3 * i + a)] = coupling[i][a];
                }
            }
            for a in 0..3 * n {
                for b in 0..3 * n {
                    m[(a, b)] += pv[a] * pv[b] + qv[a] * qv[b];
                }
            }
            m[(dim - 1, dim - 1)] = corner;
            let mut rhs = DVector::zeros(dim);
            for i in 0..3 * n {
                rhs[i] = r[i / 3][i % 3];
            }
            rhs[dim - 1] = 0.7;
            let dense = m.lu().solve(&rhs).unwrap();
            for i in 0..3 * n {
                assert!((dense[i] - x[i / 3][i % 3]).abs() < 1e-9 * (1.0 + dense[i].abs()));
            }
            assert!((dense[dim - 1] - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
    }
}

//! Initial state correction: Newton iteration displacing particles so that
//! the raw kernel density equals rho0 everywhere.
//!
//! Each Newton step solves the saddle-point system
//!
//! ```text
//! [ I        (1/rho) G1 ] [ dx  ]   [ 0          ]
//! [ -rho D1  0          ] [ phi ] = [ rho0 - rho ]
//! ```
//!
//! with a matrix-free GMRES iteration; the Schur product would densify the
//! matrix, so the block system is applied operator-by-operator instead.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernel::Kernel;
use crate::math::Vec2;
use crate::neighbors::CellGrid;

#[derive(Debug, Error)]
pub enum IscError {
    #[error("ISC diverged: density error grew for 3 consecutive iterations")]
    Diverged(IscReport),
    #[error("ISC did not converge within {max_iterations} iterations")]
    MaxIterations {
        max_iterations: usize,
        report: IscReport,
    },
    #[error("linear solver stalled at relative residual {residual} (target {target})")]
    LinearSolver { residual: f64, target: f64 },
    #[error("ISC needs at least 2 particles, got {0}")]
    TooFewParticles(usize),
}

#[derive(Debug, Clone)]
pub struct IscProblem {
    pub positions: Vec<Vec2>,
    pub masses: Vec<f64>,
    pub kernel: Kernel,
    pub rho0: f64,
    /// Initial random displacement bound; the algorithm prescribes dr/10.
    pub noise_amplitude: f64,
    pub max_iterations: usize,
    /// Convergence threshold on max_a |rho_a - rho0| / rho0.
    pub density_tolerance: f64,
    /// Relative residual target for the inner linear solves.
    pub linear_tolerance: f64,
    pub seed: u64,
}

impl IscProblem {
    pub fn new(positions: Vec<Vec2>, masses: Vec<f64>, kernel: Kernel, rho0: f64, dr: f64) -> Self {
        IscProblem {
            positions,
            masses,
            kernel,
            rho0,
            noise_amplitude: dr / 10.0,
            max_iterations: 30,
            density_tolerance: 1e-10,
            linear_tolerance: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IscReport {
    pub iterations: usize,
    /// Max relative density error recorded at the start of every iteration.
    pub errors: Vec<f64>,
    pub converged: bool,
    /// Total displacement of each particle relative to the input positions.
    pub displacements: Vec<Vec2>,
}

/// Discrete divergence: D1_a dx = -(1/rho_a) sum_b m_b (dx_a - dx_b) . w'(r_ab) e_ab.
pub fn apply_div(
    positions: &[Vec2],
    rho: &[f64],
    masses: &[f64],
    kernel: &Kernel,
    lists: &[Vec<usize>],
    field: &[Vec2],
) -> Vec<f64> {
    (0..positions.len())
        .map(|a| {
            let mut sum = 0.0;
            for &b in &lists[a] {
                let dr = positions[a] - positions[b];
                let r = dr.norm();
                if r == 0.0 {
                    continue;
                }
                sum += masses[b] * (field[a] - field[b]).dot(dr / r) * kernel.dw(r);
            }
            -sum / rho[a]
        })
        .collect()
}

/// Discrete gradient: G1_a phi = rho_a sum_b m_b (phi_a/rho_a^2 + phi_b/rho_b^2) w'(r_ab) e_ab.
pub fn apply_grad(
    positions: &[Vec2],
    rho: &[f64],
    masses: &[f64],
    kernel: &Kernel,
    lists: &[Vec<usize>],
    phi: &[f64],
) -> Vec<Vec2> {
    (0..positions.len())
        .map(|a| {
            let mut sum = Vec2::default();
            let pa = phi[a] / (rho[a] * rho[a]);
            for &b in &lists[a] {
                let dr = positions[a] - positions[b];
                let r = dr.norm();
                if r == 0.0 {
                    continue;
                }
                let sym = pa + phi[b] / (rho[b] * rho[b]);
                sum += (dr / r) * (masses[b] * sym * kernel.dw(r));
            }
            sum * rho[a]
        })
        .collect()
}

fn raw_density(
    positions: &[Vec2],
    masses: &[f64],
    kernel: &Kernel,
    lists: &[Vec<usize>],
) -> Vec<f64> {
    (0..positions.len())
        .map(|a| {
            let mut rho = masses[a] * kernel.w(0.0);
            for &b in &lists[a] {
                let r = (positions[a] - positions[b]).norm();
                rho += masses[b] * kernel.w(r);
            }
            rho
        })
        .collect()
}

/// Run the ISC Newton loop. Returns the corrected positions and a report of
/// the recorded error sequence.
pub fn solve_isc(problem: &IscProblem) -> Result<(Vec<Vec2>, IscReport), IscError> {
    let n = problem.positions.len();
    if n < 2 {
        return Err(IscError::TooFewParticles(n));
    }
    let h = problem.kernel.support_radius();
    let mut positions = problem.positions.clone();

    // Random initial displacement |dx| < noise_amplitude, applied once.
    if problem.noise_amplitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
        for p in positions.iter_mut() {
            let radius = problem.noise_amplitude * rng.gen::<f64>().sqrt();
            let angle = rng.gen::<f64>() * std::f64::consts::TAU;
            *p += Vec2::new(radius * angle.cos(), radius * angle.sin());
        }
    }

    let mut report = IscReport::default();
    let mut grew = 0usize;
    for _iter in 0..problem.max_iterations {
        let grid = CellGrid::build(&positions, h).expect("finite positions");
        let lists = grid.neighbor_lists(h);
        let rho = raw_density(&positions, &problem.masses, &problem.kernel, &lists);
        let err = rho
            .iter()
            .map(|&r| (r - problem.rho0).abs() / problem.rho0)
            .fold(0.0f64, f64::max);
        if let Some(&prev) = report.errors.last() {
            grew = if err > prev { grew + 1 } else { 0 };
        }
        report.errors.push(err);
        report.iterations = report.errors.len() - 1;
        if err <= problem.density_tolerance {
            report.converged = true;
            report.displacements = positions
                .iter()
                .zip(&problem.positions)
                .map(|(p, p0)| *p - *p0)
                .collect();
            return Ok((positions, report));
        }
        if grew >= 3 {
            return Err(IscError::Diverged(report));
        }

        // Matrix-free GMRES on the (d+1)N x (d+1)N block system.
        let rhs: Vec<f64> = {
            let mut v = vec![0.0; 3 * n];
            for (a, r) in rho.iter().enumerate() {
                v[2 * n + a] = problem.rho0 - r;
            }
            v
        };
        let apply = |z: &[f64]| -> Vec<f64> {
            let dx: Vec<Vec2> = (0..n).map(|a| Vec2::new(z[2 * a], z[2 * a + 1])).collect();
            let phi = &z[2 * n..];
            let grad = apply_grad(&positions, &rho, &problem.masses, &problem.kernel, &lists, phi);
            let div = apply_div(&positions, &rho, &problem.masses, &problem.kernel, &lists, &dx);
            let mut out = vec![0.0; 3 * n];
            for a in 0..n {
                let top = dx[a] + grad[a] / rho[a];
                out[2 * a] = top.x;
                out[2 * a + 1] = top.y;
                out[2 * n + a] = -rho[a] * div[a];
            }
            out
        };
        let solution = gmres(apply, &rhs, problem.linear_tolerance, 3 * n)?;
        for a in 0..n {
            positions[a] += Vec2::new(solution[2 * a], solution[2 * a + 1]);
        }
    }
    Err(IscError::MaxIterations {
        max_iterations: problem.max_iterations,
        report,
    })
}

/// Full (unrestarted) GMRES with modified Gram-Schmidt and Givens rotations.
pub fn gmres<F>(apply: F, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>, IscError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = rel_tol * b_norm;
    let max_iter = max_iter.min(n);

    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|x| x / b_norm).collect()];
    let mut hessenberg: Vec<Vec<f64>> = Vec::new(); // column-major, col k has k+2 entries
    let mut cos = Vec::new();
    let mut sin = Vec::new();
    let mut g = vec![b_norm];
    let mut residual = b_norm;
    let mut k_final = 0;

    for k in 0..max_iter {
        let mut w = apply(&basis[k]);
        let mut hcol = Vec::with_capacity(k + 2);
        for basis_vec in basis.iter().take(k + 1) {
            let hik = dot(&w, basis_vec);
            for (wi, vi) in w.iter_mut().zip(basis_vec) {
                *wi -= hik * vi;
            }
            hcol.push(hik);
        }
        let w_norm = norm(&w);
        hcol.push(w_norm);
        // Apply previous Givens rotations to the new column.
        for i in 0..k {
            let (c, s): (f64, f64) = (cos[i], sin[i]);
            let t = c * hcol[i] + s * hcol[i + 1];
            hcol[i + 1] = -s * hcol[i] + c * hcol[i + 1];
            hcol[i] = t;
        }
        // New rotation to eliminate the subdiagonal entry.
        let denom = (hcol[k] * hcol[k] + hcol[k + 1] * hcol[k + 1]).sqrt();
        let (c, s) = if denom == 0.0 {
            (1.0, 0.0)
        } else {
            (hcol[k] / denom, hcol[k + 1] / denom)
        };
        hcol[k] = denom;
        hcol[k + 1] = 0.0;
        cos.push(c);
        sin.push(s);
        g.push(-s * g[k]);
        g[k] *= c;
        hessenberg.push(hcol);
        residual = g[k + 1].abs();
        k_final = k + 1;
        if residual <= target || w_norm == 0.0 {
            break;
        }
        basis.push(w.iter().map(|x| x / w_norm).collect());
    }

    if residual > target {
        return Err(IscError::LinearSolver {
            residual: residual / b_norm,
            target: rel_tol,
        });
    }

    // Back-substitution for the least-squares coefficients.
    let k = k_final;
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for (j, yj) in y.iter().enumerate().take(k).skip(i + 1) {
            s -= hessenberg[j][i] * yj;
        }
        y[i] = s / hessenberg[i][i];
    }
    let mut x = vec![0.0; n];
    for (j, yj) in y.iter().enumerate() {
        for (xi, vi) in x.iter_mut().zip(&basis[j]) {
            *xi += yj * vi;
        }
    }
    Ok(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

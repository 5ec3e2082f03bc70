//! Small numerical toolbox shared by the physics modules: compensated
//! summation, bracketed root finding, adaptive Gauss-Kronrod quadrature and
//! a Levenberg-Marquardt least-squares driver.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Table of `ln(k!)` for `k = 0..=n_max`.
#[derive(Debug, Clone)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    pub fn new(n_max: usize) -> Self {
        let mut table = Vec::with_capacity(n_max + 1);
        let mut acc = CompensatedSum::new();
        table.push(0.0);
        for k in 1..=n_max {
            acc.add((k as f64).ln());
            table.push(acc.value());
        }
        Self { table }
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.table[k]
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Bisection on `[lo, hi]` until the bracket is narrower than `x_tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(Error::RootBracket { lo, hi });
    }
    // 200 halvings exhaust any f64 bracket.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) <= x_tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Subdivides until the summed error estimate is below
/// `max(rel_tol * |I|, abs_tol)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    let (i0, e0) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, i0, e0)];
    loop {
        let total: f64 = intervals.iter().map(|s| s.2).collect::<CompensatedSum>().value();
        let err: f64 = intervals.iter().map(|s| s.3).sum();
        if err <= (rel_tol * total.abs()).max(abs_tol) {
            return Ok(total);
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureNonConvergence { a, b, error: err });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty interval list");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::QuadratureNonConvergence { a, b, error: err });
        }
        let (il, el) = gk15(&f, lo, mid);
        let (ir, er) = gk15(&f, mid, hi);
        intervals.push((lo, mid, il, el));
        intervals.push((mid, hi, ir, er));
    }
}

/// Options for [`levenberg_marquardt`].
#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Convergence when the gradient norm falls below this fraction of its
    /// initial value.
    pub gradient_tol: f64,
    /// Relative finite-difference step for the numeric Jacobian.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tol: 1e-8,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `JᵀJ` at the solution.
    pub normal_matrix: DMatrix<f64>,
    pub iterations: usize,
}

fn numeric_jacobian<F>(residual: &F, p: &[f64], r0_len: usize, rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut jac = DMatrix::zeros(r0_len, p.len());
    let mut work = p.to_vec();
    for k in 0..p.len() {
        let h = rel_step * p[k].abs().max(1e-3);
        work[k] = p[k] + h;
        let rp = residual(&work);
        work[k] = p[k] - h;
        let rm = residual(&work);
        work[k] = p[k];
        for i in 0..r0_len {
            jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).collect::<CompensatedSum>().value()
}

/// Damped Gauss-Newton with Levenberg-style diagonal regularisation and a
/// central-difference Jacobian.
pub fn levenberg_marquardt<F>(residual: F, initial: &[f64], opts: &LmOptions) -> Result<LmSolution>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n_params = initial.len();
    let mut p = initial.to_vec();
    let mut r = residual(&p);
    let n_res = r.len();
    if n_res < n_params {
        return Err(Error::invalid(format!(
            "{n_res} residuals cannot determine {n_params} parameters"
        )));
    }
    let mut c = cost(&r);
    if !c.is_finite() {
        return Err(Error::invalid("non-finite residuals at the initial point"));
    }
    let mut lambda = 1e-3;
    let mut grad0 = None;
    for iteration in 0..opts.max_iterations {
        let jac = numeric_jacobian(&residual, &p, n_res, opts.fd_step);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        let gnorm = grad.norm();
        let g0 = *grad0.get_or_insert(gnorm);
        if gnorm <= opts.gradient_tol * g0 || gnorm == 0.0 {
            return finish(p, r, jtj, iteration);
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for k in 0..n_params {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let step = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let r_trial = residual(&trial);
            let c_trial = cost(&r_trial);
            if c_trial.is_finite() && c_trial < c {
                let rel_drop = (c - c_trial) / c.max(1e-300);
                p = trial;
                r = r_trial;
                c = c_trial;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel_drop < 1e-15 {
                    let jac = numeric_jacobian(&residual, &p, n_res, opts.fd_step);
                    let jtj = jac.transpose() * &jac;
                    return finish(p, r, jtj, iteration + 1);
                }
                break;
            }
            let step_small = step
                .iter()
                .zip(p.iter())
                .all(|(s, x)| s.abs() <= 1e-13 * x.abs().max(1e-300));
            if step_small {
                // No representable improvement left: stationary point.
                return finish(p, r, jtj, iteration);
            }
            lambda *= 10.0;
        }
        if !improved {
            return finish(p, r, jtj, iteration);
        }
    }
    Err(Error::NonConvergence(format!(
        "least squares did not converge in {} iterations",
        opts.max_iterations
    )))
}

fn finish(p: Vec<f64>, r: Vec<f64>, jtj: DMatrix<f64>, iterations: usize) -> Result<LmSolution> {
    // Rank test on the column-scaled normal matrix.
    let n = jtj.nrows();
    let mut scaled = jtj.clone();
    for i in 0..n {
        for j in 0..n {
            let d = (jtj[(i, i)] * jtj[(j, j)]).sqrt();
            scaled[(i, j)] = if d > 0.0 { jtj[(i, j)] / d } else { 0.0 };
        }
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min <= 1e-14 * max || (0..n).any(|i| jtj[(i, i)] <= 0.0) {
        return Err(Error::RankDeficient(format!(
            "normal-matrix condition {:.3e}",
            if min > 0.0 { max / min } else { f64::INFINITY }
        )));
    }
    Ok(LmSolution {
        params: p,
        residuals: r,
        normal_matrix: jtj,
        iterations,
    })
}

//! Exact finite-ring computations: sparse generator assembly, uniformized
//! semigroup application and resolvent linear solves.
//!
//! Configurations of a ring of `L <= 14` sites are encoded as bitmasks, so
//! the full configuration space has dimension `2^L`. These exact results
//! serve as ground truth for the Monte Carlo estimators and as a numerical
//! probe of the generator-comparison bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Density, JumpLaw};

/// Hard cap on the ring size for exact computations.
pub const MAX_RING: usize = 14;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("ring size {l} exceeds the exact-computation cap {max}")]
    DimensionTooLarge { l: usize, max: usize },
    #[error("time {t} too large for ring {l}: light cone R(t + 3 sqrt t) = {cone:.2} must stay below L/2")]
    TimeTooLarge { t: f64, l: usize, cone: f64 },
    #[error("iterative solver failed: residual {residual} after {iters} iterations")]
    SolverFailure { residual: f64, iters: usize },
    #[error("test function support diameter {diameter} must be below L/4 (L = {limit})")]
    SupportTooWide { diameter: i64, limit: i64 },
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
}

/// Which generator to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    /// The full asymmetric generator with law `p`.
    Full,
    /// Its symmetric part: the exclusion generator with `(p(z) + p(-z))/2`.
    Symmetric,
}

/// Sparse rate matrix of the exclusion process on a small ring, stored in
/// compressed sparse row form. Row sums vanish (conservativeness) and the
/// Bernoulli product weights are a left null vector.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub l: usize,
    pub dim: usize,
    pub flavor: Flavor,
    row_ptr: Vec<u32>,
    col: Vec<u32>,
    val: Vec<f64>,
    /// Uniformization rate: max total outflow over configurations.
    max_rate: f64,
}

impl GeneratorMatrix {
    /// `y = G x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize {
                acc += self.val[k] * x[self.col[k] as usize];
            }
            y[i] = acc;
        }
    }

    /// `y = G^T x`.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.dim {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize {
                y[self.col[k] as usize] += self.val[k] * xi;
            }
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize {
            if self.col[k] as usize == j {
                return self.val[k];
            }
        }
        0.0
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        (self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize).map(|k| self.val[k]).sum()
    }

    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }
}

/// Assembles the generator on ring `l` for the given law and flavor: each
/// occupied site `x` exchanges with an empty `x + z` at rate `p(z)`.
pub fn build_generator(l: usize, law: &JumpLaw, flavor: Flavor) -> Result<GeneratorMatrix, OracleError> {
    if l > MAX_RING {
        return Err(OracleError::DimensionTooLarge { l, max: MAX_RING });
    }
    let dim = 1usize << l;
    let rates: Vec<(i64, f64)> = match flavor {
        Flavor::Full => law.entries().collect(),
        Flavor::Symmetric => {
            let sym = law.symmetrize();
            sym.entries().collect()
        }
    };
    // Triplet assembly, then CSR. Row = source configuration.
    let mut row_ptr = vec![0u32; dim + 1];
    let mut entries: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
    let mut max_rate: f64 = 0.0;
    for eta in 0..dim {
        let mut diag = 0.0;
        for x in 0..l {
            if eta >> x & 1 == 0 {
                continue;
            }
            for &(z, p) in &rates {
                let y = (x as i64 + z).rem_euclid(l as i64) as usize;
                if eta >> y & 1 == 1 {
                    continue;
                }
                let target = eta ^ (1 << x) ^ (1 << y);
                entries[eta].push((target as u32, p));
                diag += p;
            }
        }
        if diag > 0.0 {
            entries[eta].push((eta as u32, -diag));
        }
        max_rate = max_rate.max(diag);
    }
    let mut col = Vec::new();
    let mut val = Vec::new();
    for (i, row) in entries.iter_mut().enumerate() {
        row.sort_by_key(|e| e.0);
        // Merge duplicate targets (possible when two jump sizes connect the
        // same pair of configurations on a small ring).
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
        for &(c, v) in row.iter() {
            if let Some(last) = merged.last_mut() {
                if last.0 == c {
                    last.1 += v;
                    continue;
                }
            }
            merged.push((c, v));
        }
        for (c, v) in merged {
            col.push(c);
            val.push(v);
        }
        row_ptr[i + 1] = col.len() as u32;
    }
    Ok(GeneratorMatrix { l, dim, flavor, row_ptr, col, val, max_rate })
}

/// Bernoulli product weights `rho^{N(eta)} (1-rho)^{L-N(eta)}` over all
/// configurations.
pub fn stationary_weights(l: usize, rho: f64) -> Vec<f64> {
    let dim = 1usize << l;
    let mut pi = Vec::with_capacity(dim);
    for eta in 0..dim {
        let n = (eta as u64).count_ones() as i32;
        pi.push(rho.powi(n) * (1.0 - rho).powi(l as i32 - n));
    }
    pi
}

/// Max-norm truncation error target for uniformization.
pub const UNIFORMIZATION_TOL: f64 = 1e-13;

/// `e^{tG} v` by uniformization: with `q >= max outflow`, `P = I + G/q` is
/// substochastic-safe and `e^{tG} v = sum_k pois(k; qt) P^k v`, truncated
/// when the Poisson tail falls below [`UNIFORMIZATION_TOL`].
pub fn semigroup_apply(gen: &GeneratorMatrix, t: f64, v: &[f64], transpose: bool) -> Vec<f64> {
    assert!(t >= 0.0, "time must be nonnegative");
    assert_eq!(v.len(), gen.dim);
    if t == 0.0 || gen.max_rate == 0.0 {
        return v.to_vec();
    }
    let q = gen.max_rate * 1.0000001;
    let qt = q * t;
    let mut result = vec![0.0; gen.dim];
    let mut w = v.to_vec();
    let mut scratch = vec![0.0; gen.dim];
    // Poisson(qt) pmf, accumulated until the tail is negligible.
    let mut log_pmf = -qt; // ln pmf(0)
    let mut cumulative = 0.0;
    let mut k = 0usize;
    let k_cap = (qt + 12.0 * qt.sqrt() + 60.0) as usize;
    loop {
        let pmf = log_pmf.exp();
        cumulative += pmf;
        if pmf > 0.0 {
            for i in 0..gen.dim {
                result[i] += pmf * w[i];
            }
        }
        if 1.0 - cumulative < UNIFORMIZATION_TOL && k as f64 > qt {
            break;
        }
        if k >= k_cap {
            break;
        }
        // w <- P w = w + G w / q
        if transpose {
            gen.matvec_transpose(&w, &mut scratch);
        } else {
            gen.matvec(&w, &mut scratch);
        }
        for i in 0..gen.dim {
            w[i] += scratch[i] / q;
        }
        k += 1;
        log_pmf += (qt).ln() - (k as f64).ln();
    }
    result
}

/// Exact two-point function on the ring at one time, indexed by site
/// displacement `x in {0, .., L-1}` from the reference site.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoPointExact {
    pub l: usize,
    pub t: f64,
    pub rho: f64,
    pub chi: f64,
    /// `S(x, t)` for `x = 0..L-1`.
    pub values: Vec<f64>,
}

impl TwoPointExact {
    /// Wrapped signed coordinate of site index `x`, in `(-L/2, L/2]`.
    pub fn wrapped_coord(&self, x: usize) -> i64 {
        let l = self.l as i64;
        let x = x as i64;
        if 2 * x <= l {
            x
        } else {
            x - l
        }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `sum_x x_w S(x, t)` with the antipodal site's mass split evenly
    /// between the two signed representatives `+-L/2`, preserving the ring's
    /// reflection symmetry (the split cancels the linear weight there).
    pub fn first_moment(&self) -> f64 {
        let mut acc = 0.0;
        for x in 0..self.l {
            let xw = self.wrapped_coord(x);
            if 2 * (x as i64) == self.l as i64 {
                // weight (+L/2 - L/2)/2 = 0
                continue;
            }
            acc += xw as f64 * self.values[x];
        }
        acc
    }

    /// `sum_x (x_w - center)^2 S(x, t)`, antipode split across `+-L/2`.
    pub fn second_moment_about(&self, center: f64) -> f64 {
        let mut acc = 0.0;
        for x in 0..self.l {
            let xw = self.wrapped_coord(x) as f64;
            if 2 * (x as i64) == self.l as i64 {
                let a = xw - center;
                let b = -xw - center;
                acc += 0.5 * (a * a + b * b) * self.values[x];
            } else {
                let d = xw - center;
                acc += d * d * self.values[x];
            }
        }
        acc
    }

    /// The exact law of the displacement of a single discrepancy particle,
    /// `chi^{-1} S(x, t)` per site.
    pub fn second_class_law(&self) -> Vec<f64> {
        self.values.iter().map(|s| s / self.chi).collect()
    }
}

/// `S(x,t) = sum_eta pi(eta) (eta_0 - rho) (e^{tL} [eta_x - rho])(eta)`,
/// computed with a single transposed semigroup application.
pub fn exact_two_point(
    l: usize,
    rho: f64,
    law: &JumpLaw,
    t: f64,
) -> Result<TwoPointExact, OracleError> {
    if l > 12 {
        return Err(OracleError::DimensionTooLarge { l, max: 12 });
    }
    let gen = build_generator(l, law, Flavor::Full)?;
    let pi = stationary_weights(l, rho);
    let dim = gen.dim;
    let mut v0 = vec![0.0; dim];
    for eta in 0..dim {
        let occ = (eta & 1) as f64;
        v0[eta] = pi[eta] * (occ - rho);
    }
    let u = semigroup_apply(&gen, t, &v0, true);
    let mut values = vec![0.0; l];
    for (x, value) in values.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (eta, ue) in u.iter().enumerate() {
            let occ = (eta >> x & 1) as f64;
            acc += ue * (occ - rho);
        }
        *value = acc;
    }
    let chi = rho * (1.0 - rho);
    Ok(TwoPointExact { l, t, rho, chi, values })
}

/// Light-cone admissibility for moment computations on the ring.
pub fn light_cone_fits(l: usize, law: &JumpLaw, t: f64) -> bool {
    let cone = law.range() as f64 * (t + 3.0 * t.sqrt());
    cone < l as f64 / 2.0
}

/// `D(t) = (chi t)^{-1} sum_x (x_w - (1-2 rho) b t)^2 S(x, t)` from the exact
/// two-point function, valid while the light cone fits inside the ring.
pub fn exact_diffusivity(l: usize, rho: f64, law: &JumpLaw, t: f64) -> Result<f64, OracleError> {
    if !light_cone_fits(l, law, t) {
        let cone = law.range() as f64 * (t + 3.0 * t.sqrt());
        return Err(OracleError::TimeTooLarge { t, l, cone });
    }
    let tp = exact_two_point(l, rho, law, t)?;
    let center = (1.0 - 2.0 * rho) * law.drift() * t;
    Ok(tp.second_moment_about(center) / (tp.chi * t))
}

/// A local function given as coefficients over the centered-occupancy
/// product basis: each term is a set of distinct site offsets with a weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFunction {
    pub terms: Vec<(Vec<i64>, f64)>,
}

impl LocalFunction {
    pub fn new(terms: Vec<(Vec<i64>, f64)>) -> Self {
        for (offsets, _) in &terms {
            let mut sorted = offsets.clone();
            sorted.dedup();
            assert_eq!(sorted.len(), offsets.len(), "offsets within a term must be distinct");
        }
        LocalFunction { terms }
    }

    /// `eta^_{0,1} - eta^_{0,k+1}`, the pair-difference test function.
    pub fn pair_difference(k: usize) -> Self {
        LocalFunction::new(vec![(vec![0, 1], 1.0), (vec![0, k as i64 + 1], -1.0)])
    }

    /// The current `w = sum_z z p(z) eta^_{0, z}`.
    pub fn current(law: &JumpLaw) -> Self {
        let terms = law
            .entries()
            .map(|(z, p)| (vec![0, z], z as f64 * p))
            .collect();
        LocalFunction::new(terms)
    }

    pub fn diameter(&self) -> i64 {
        self.terms
            .iter()
            .map(|(offsets, _)| {
                let lo = offsets.iter().min().copied().unwrap_or(0);
                let hi = offsets.iter().max().copied().unwrap_or(0);
                hi - lo
            })
            .max()
            .unwrap_or(0)
    }
}

/// Residual target for the resolvent linear solves.
pub const SOLVE_TOL: f64 = 1e-12;
/// Dimension threshold below which failed iterative solves fall back to a
/// dense factorization.
pub const DENSE_FALLBACK_DIM: usize = 4096;

/// Evaluates `sum_x tau_x phi` on every configuration, in the centered
/// normalized basis `eta^_a = (eta_a - rho) / sqrt(chi)`.
fn translation_sum_vector(phi: &LocalFunction, l: usize, rho: Density) -> Vec<f64> {
    let dim = 1usize << l;
    let inv_sqrt_chi = 1.0 / rho.chi().sqrt();
    let mut out = vec![0.0; dim];
    for (eta, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for x in 0..l as i64 {
            for (offsets, coeff) in &phi.terms {
                let mut prod = *coeff;
                for &a in offsets {
                    let site = (a + x).rem_euclid(l as i64) as usize;
                    let occ = (eta >> site & 1) as f64;
                    prod *= (occ - rho.rho()) * inv_sqrt_chi;
                }
                acc += prod;
            }
        }
        *slot = acc;
    }
    out
}

/// `(1/L) < sum_x tau_x phi, (lambda - G)^{-1} sum_x tau_x phi >_pi`:
/// the finite-ring resolvent seminorm (squared) of a local function.
///
/// The solve runs diagonally preconditioned BiCGStab to residual
/// [`SOLVE_TOL`], falling back to a dense factorization below
/// [`DENSE_FALLBACK_DIM`]; exclusion conserves particle number, so the
/// product weights make the Euclidean transpose coincide with the
/// stationary adjoint and `lambda - G` has symmetric part `>= lambda`.
pub fn resolvent_norm_sq(
    phi: &LocalFunction,
    lambda: f64,
    l: usize,
    rho: Density,
    law: &JumpLaw,
    flavor: Flavor,
) -> Result<f64, OracleError> {
    if lambda <= 0.0 {
        return Err(OracleError::NonPositiveLambda(lambda));
    }
    let limit = l as i64;
    let diameter = phi.diameter();
    if (diameter * 4) as f64 >= l as f64 {
        return Err(OracleError::SupportTooWide { diameter, limit });
    }
    let gen = build_generator(l, law, flavor)?;
    let rhs = translation_sum_vector(phi, l, rho);
    let u = solve_shifted(&gen, lambda, &rhs)?;
    let pi = stationary_weights(l, rho.rho());
    let mut acc = 0.0;
    for i in 0..gen.dim {
        acc += pi[i] * rhs[i] * u[i];
    }
    Ok(acc / l as f64)
}

/// Solves `(lambda - G) u = b`.
pub fn solve_shifted(gen: &GeneratorMatrix, lambda: f64, b: &[f64]) -> Result<Vec<f64>, OracleError> {
    let apply = |x: &[f64], y: &mut [f64]| {
        gen.matvec(x, y);
        for i in 0..x.len() {
            y[i] = lambda * x[i] - y[i];
        }
    };
    let mut inv_diag = vec![0.0; gen.dim];
    for (i, d) in inv_diag.iter_mut().enumerate() {
        *d = 1.0 / (lambda - gen.entry(i, i));
    }
    match bicgstab(&apply, b, &inv_diag, SOLVE_TOL, 50_000) {
        Ok(u) => Ok(u),
        Err((residual, iters)) => {
            if gen.dim <= DENSE_FALLBACK_DIM {
                dense_solve_shifted(gen, lambda, b)
                    .ok_or(OracleError::SolverFailure { residual, iters })
            } else {
                Err(OracleError::SolverFailure { residual, iters })
            }
        }
    }
}

/// Right-preconditioned BiCGStab with a Jacobi preconditioner.
fn bicgstab<F>(
    apply: &F,
    b: &[f64],
    inv_diag: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>, (f64, usize)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = tol * norm_b;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut rho_prev = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iters {
        let rho: f64 = r_hat.iter().zip(&r).map(|(a, b)| a * b).sum();
        if rho == 0.0 {
            let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            return Err((res, it));
        }
        let beta = (rho / rho_prev) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            p_hat[i] = inv_diag[i] * p[i];
        }
        apply(&p_hat, &mut v);
        let denom: f64 = r_hat.iter().zip(&v).map(|(a, b)| a * b).sum();
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if s_norm <= target {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(x);
        }
        for i in 0..n {
            s_hat[i] = inv_diag[i] * s[i];
        }
        apply(&s_hat, &mut t);
        let tt: f64 = t.iter().map(|v| v * v).sum();
        let ts: f64 = t.iter().zip(&s).map(|(a, b)| a * b).sum();
        omega = ts / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm <= target {
            return Ok(x);
        }
        rho_prev = rho;
    }
    let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err((res, max_iters))
}

/// Dense partial-pivot factorization fallback for small dimensions.
fn dense_solve_shifted(gen: &GeneratorMatrix, lambda: f64, b: &[f64]) -> Option<Vec<f64>> {
    let n = gen.dim;
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        a[i * n + i] = lambda;
    }
    for i in 0..n {
        for k in gen.row_ptr[i] as usize..gen.row_ptr[i + 1] as usize {
            a[i * n + gen.col[k] as usize] -= gen.val[k];
        }
    }
    let mut x = b.to_vec();
    // LU with partial pivoting, in place.
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[perm[col] * n + col].abs();
        for row in col + 1..n {
            let cand = a[perm[row] * n + col].abs();
            if cand > best {
                best = cand;
                pivot = row;
            }
        }
        if best == 0.0 {
            return None;
        }
        perm.swap(col, pivot);
        let prow = perm[col];
        let inv = 1.0 / a[prow * n + col];
        for row in col + 1..n {
            let r = perm[row];
            let factor = a[r * n + col] * inv;
            if factor == 0.0 {
                continue;
            }
            a[r * n + col] = factor;
            for j in col + 1..n {
                a[r * n + j] -= factor * a[prow * n + j];
            }
        }
    }
    // Forward/back substitution on the permuted system.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = x[perm[i]];
        for j in 0..i {
            acc -= a[perm[i] * n + j] * y[j];
        }
        y[i] = acc;
    }
    for i in (0..n).rev() {
        let mut acc = y[i];
        for j in i + 1..n {
            acc -= a[perm[i] * n + j] * x[j];
        }
        x[i] = acc / a[perm[i] * n + i];
    }
    Some(x)
}

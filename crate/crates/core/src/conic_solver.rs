//! First-order solver for Hermitian semidefinite programs of the form
//!
//! ```text
//! maximize    Re Tr(C X)
//! subject to  Tr(A_i X) ≤ b_i  or  ≥ b_i
//!             sqrt(Σ_d |Tr(G_d X)|²) ≤ ρ
//!             X ⪰ 0
//! ```
//!
//! The iteration is ADMM on `z = M x ∈ K` with `x = svec(X)` and
//! `M = [I; A]`, stacking the PSD cone, the trace halfspaces and the ball
//! produced by the second-order cone with a fixed radius. The `x`-update
//! solves `(σ + ρ) I + ρ AᵀA` through the Woodbury identity with a cached
//! Cholesky factor of the small `(σ+ρ)/ρ I + AAᵀ` matrix; the PSD projection
//! clips the eigenvalues of the Hermitian matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eig, hermitian_part, CMatrix, C64};

/// Direction of a trace inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
}

/// `Tr(A X) ≤ rhs` or `Tr(A X) ≥ rhs` with Hermitian `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConstraint {
    pub a: CMatrix,
    pub sense: Sense,
    pub rhs: f64,
}

/// `sqrt(Σ_d |Tr(G_d X)|²) ≤ bound` with arbitrary complex `G_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocConstraint {
    pub operators: Vec<CMatrix>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    /// Hermitian `C`; the solver maximizes `Re Tr(C X)`.
    pub objective: CMatrix,
    pub constraints: Vec<TraceConstraint>,
    pub soc: Option<SocConstraint>,
}

const HERMITIAN_TOL: f64 = 1e-12;

fn check_hermitian(m: &CMatrix) -> Result<()> {
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL * m.norm().max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

impl ConicProgram {
    pub fn dim(&self) -> usize {
        self.objective.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let check_shape = |m: &CMatrix, context: &'static str| {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    actual: m.nrows().max(m.ncols()),
                });
            }
            Ok(())
        };
        if n == 0 || !self.objective.is_square() {
            return Err(invalid("objective", "must be a nonempty square matrix"));
        }
        check_hermitian(&self.objective)?;
        for c in &self.constraints {
            check_shape(&c.a, "constraint operator")?;
            check_hermitian(&c.a)?;
            if !c.rhs.is_finite() {
                return Err(invalid("rhs", "must be finite"));
            }
        }
        if let Some(soc) = &self.soc {
            for g in &soc.operators {
                check_shape(g, "cone operator")?;
            }
            if !(soc.bound >= 0.0 && soc.bound.is_finite()) {
                return Err(invalid("bound", "cone radius must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &CMatrix) -> f64 {
        trace_product(&self.objective, x).re
    }

    /// `Tr(A_i X)` for every trace constraint.
    pub fn constraint_values(&self, x: &CMatrix) -> Vec<f64> {
        self.constraints.iter().map(|c| trace_product(&c.a, x).re).collect()
    }

    /// `sqrt(Σ_d |Tr(G_d X)|²)`, zero without a cone constraint.
    pub fn soc_value(&self, x: &CMatrix) -> f64 {
        self.soc.as_ref().map_or(0.0, |s| {
            s.operators.iter().map(|g| trace_product(g, x).norm_sqr()).sum::<f64>().sqrt()
        })
    }

    /// Largest constraint violation of `X` (inequalities and cone, absolute).
    pub fn max_violation(&self, x: &CMatrix) -> f64 {
        let mut worst = 0.0f64;
        for (c, v) in self.constraints.iter().zip(self.constraint_values(x)) {
            let viol = match c.sense {
                Sense::Le => v - c.rhs,
                Sense::Ge => c.rhs - v,
            };
            worst = worst.max(viol);
        }
        if let Some(s) = &self.soc {
            worst = worst.max(self.soc_value(x) - s.bound);
        }
        worst
    }

    /// Pretty-printed JSON with every matrix entry at full precision.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| invalid("program", e.to_string()))
    }
}

/// `Tr(A X)`.
pub fn trace_product(a: &CMatrix, x: &CMatrix) -> C64 {
    a.iter()
        .zip(x.transpose().iter())
        .map(|(p, q)| p * q)
        .sum()
}

/// `[[Re H, -Im H], [Im H, Re H]]`.
pub fn real_embed(h: &CMatrix) -> Result<DMatrix<f64>> {
    check_hermitian(h)?;
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = h[(i, j)];
            out[(i, j)] = v.re;
            out[(i + n, j + n)] = v.re;
            out[(i, j + n)] = -v.im;
            out[(i + n, j)] = v.im;
        }
    }
    Ok(out)
}

/// Isometry from Hermitian `n x n` matrices to `R^{n²}`: the diagonal, then
/// `√2 Re h_ij` and `√2 Im h_ij` for `i < j`. For Hermitian `A`, `X`,
/// `Tr(A X) = svec(A) · svec(X)`.
pub fn svec(h: &CMatrix) -> DVector<f64> {
    let n = h.nrows();
    let mut v = DVector::zeros(n * n);
    let s = std::f64::consts::SQRT_2;
    for i in 0..n {
        v[i] = h[(i, i)].re;
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            v[k] = s * h[(i, j)].re;
            v[k + 1] = s * h[(i, j)].im;
            k += 2;
        }
    }
    v
}

/// Inverse of [`svec`].
pub fn smat(v: &DVector<f64>, n: usize) -> CMatrix {
    let mut h = CMatrix::zeros(n, n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        h[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = C64::new(s * v[k], s * v[k + 1]);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
            k += 2;
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Absolute and relative tolerance on the residuals and the gap.
    pub tol: f64,
    pub max_iters: usize,
    /// Relative threshold for the infeasibility certificates.
    pub infeasibility_tol: f64,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub check_every: usize,
    /// Record the residual history in the solution.
    pub trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 50_000,
            infeasibility_tol: 1e-5,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            check_every: 10,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
}

/// Residuals of the scaled problem at the returned iterate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub residuals: Residuals,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    /// PSD iterate, projected onto the cone.
    pub x: CMatrix,
    pub status: SolveStatus,
    pub objective_value: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub history: Vec<TraceEntry>,
}

/// Scaled problem data in `svec` coordinates.
struct Scaled {
    n: usize,
    c: DVector<f64>,
    a: DMatrix<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    m_lin: usize,
    radius: f64,
}

impl Scaled {
    fn m(&self) -> usize {
        self.a.nrows()
    }

    /// Support function of the linear and ball parts, `None` when infinite.
    fn support(&self, y: &DVector<f64>, slack: f64) -> Option<f64> {
        let mut s = 0.0;
        for i in 0..self.m_lin {
            let v = y[i];
            let bound = if v > 0.0 { self.hi[i] } else { self.lo[i] };
            if bound.is_infinite() {
                if v.abs() > slack {
                    return None;
                }
            } else {
                s += bound * v;
            }
        }
        let soc = y.rows(self.m_lin, self.m() - self.m_lin).norm();
        Some(s + self.radius * soc)
    }

    fn project(&self, z: &mut DVector<f64>) {
        for i in 0..self.m_lin {
            z[i] = z[i].clamp(self.lo[i], self.hi[i]);
        }
        let mut ball = z.rows_mut(self.m_lin, self.m() - self.m_lin);
        let norm = ball.norm();
        if norm > self.radius
            && norm > 0.0 {
                ball *= self.radius / norm;
            }
    }
}

fn project_psd(v: &DVector<f64>, n: usize) -> DVector<f64> {
    let h = smat(v, n);
    let (vals, vecs) = hermitian_eig(&h);
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= 0.0 {
            break;
        }
        let u = vecs.column(k);
        out += (u * u.adjoint()).scale(lam);
    }
    svec(&out)
}

fn extreme_eigs(v: &DVector<f64>, n: usize) -> (f64, f64) {
    let (vals, _) = hermitian_eig(&smat(v, n));
    (vals[0], vals[n - 1])
}

/// Real rows of the cone operators. `Tr(G X) = Tr(G₁X) + i Tr(G₂X)` with
/// `G₁ = (G+G^H)/2` and `G₂ = (G-G^H)/(2i)`; an operator whose conjugate
/// transpose also appears contributes once with weight √2.
fn cone_rows(ops: &[CMatrix]) -> Vec<DVector<f64>> {
    let mut used = vec![false; ops.len()];
    let mut rows = Vec::new();
    for i in 0..ops.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let gh = ops[i].adjoint();
        let scale = ops[i].norm().max(f64::MIN_POSITIVE);
        let mut weight = 1.0;
        if let Some(j) = (i + 1..ops.len()).find(|&j| !used[j] && (&ops[j] - &gh).norm() <= 1e-12 * scale) {
            used[j] = true;
            weight = std::f64::consts::SQRT_2;
        }
        let g1 = hermitian_part(&ops[i]);
        let g2 = (&ops[i] - &gh) * C64::new(0.0, -0.5);
        for g in [g1, g2] {
            let r = svec(&g) * weight;
            if r.norm() > 1e-14 * scale {
                rows.push(r);
            }
        }
    }
    rows
}

fn scale_problem(prog: &ConicProgram) -> std::result::Result<Scaled, ()> {
    let n = prog.dim();
    let mut c = -svec(&prog.objective);
    let cmax = c.amax();
    if cmax > 0.0 {
        c /= cmax;
    }
    let mut rows = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for con in &prog.constraints {
        let a = svec(&con.a);
        let norm = a.norm();
        let (l, h) = match con.sense {
            Sense::Le => (f64::NEG_INFINITY, con.rhs),
            Sense::Ge => (con.rhs, f64::INFINITY),
        };
        if norm == 0.0 {
            if l > 0.0 || h < 0.0 {
                return Err(());
            }
            continue;
        }
        rows.push(a / norm);
        lo.push(l / norm);
        hi.push(h / norm);
    }
    let m_lin = rows.len();
    let mut radius = 0.0;
    if let Some(soc) = &prog.soc {
        let soc_rows = cone_rows(&soc.operators);
        let smax = soc_rows.iter().map(|r| r.norm()).fold(0.0, f64::max);
        if smax > 0.0 {
            radius = soc.bound / smax;
            rows.extend(soc_rows.into_iter().map(|r| r / smax));
        }
    }
    let nv = n * n;
    let a = DMatrix::from_fn(rows.len(), nv, |i, j| rows[i][j]);
    Ok(Scaled {
        n,
        c,
        a,
        lo,
        hi,
        m_lin,
        radius,
    })
}

struct Kkt {
    chol: Option<Cholesky<f64, Dyn>>,
    s: f64,
}

impl Kkt {
    fn new(a: &DMatrix<f64>, rho: f64, sigma: f64) -> Self {
        let s = sigma + rho;
        let m = a.nrows();
        let chol = (m > 0).then(|| {
            let mut small = a * a.transpose();
            for i in 0..m {
                small[(i, i)] += s / rho;
            }
            Cholesky::new(small).expect("shifted Gram matrix is positive definite")
        });
        Self { chol, s }
    }

    /// `((σ+ρ) I + ρ AᵀA)⁻¹ r`.
    fn solve(&self, a: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            None => r / self.s,
            Some(ch) => {
                let w = ch.solve(&(a * r));
                (r - a.transpose() * w) / self.s
            }
        }
    }
}

pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
    prog.validate()?;
    if !(settings.alpha > 0.0 && settings.alpha < 2.0) {
        return Err(invalid("alpha", "over-relaxation must lie in (0, 2)"));
    }
    if !(settings.rho > 0.0 && settings.sigma > 0.0 && settings.tol > 0.0) {
        return Err(invalid("settings", "rho, sigma and tol must be positive"));
    }
    let n = prog.dim();
    let Ok(sc) = scale_problem(prog) else {
        return Ok(finish(prog, CMatrix::zeros(n, n), SolveStatus::Infeasible, Residuals::default(), 0, vec![]));
    };
    let nv = n * n;
    let m = sc.m();
    let a = &sc.a;
    let at = a.transpose();
    let check_every = settings.check_every.max(1);

    let mut rho = settings.rho;
    let sigma = settings.sigma;
    let alpha = settings.alpha;
    let mut kkt = Kkt::new(a, rho, sigma);

    let mut x = DVector::<f64>::zeros(nv);
    let mut zp = DVector::<f64>::zeros(nv);
    let mut za = DVector::<f64>::zeros(m);
    let mut yp = DVector::<f64>::zeros(nv);
    let mut ya = DVector::<f64>::zeros(m);
    let mut history = Vec::new();
    let mut residuals = Residuals::default();

    for iter in 1..=settings.max_iters {
        let x_prev = x.clone();
        let yp_prev = yp.clone();
        let ya_prev = ya.clone();

        let rhs = &x * sigma - &sc.c + (&zp * rho - &yp) + &at * (&za * rho - &ya);
        let xt = kkt.solve(a, &rhs);
        let zt_a = a * &xt;

        x = &xt * alpha + &x_prev * (1.0 - alpha);
        let zh_p = &xt * alpha + &zp * (1.0 - alpha);
        let zh_a = &zt_a * alpha + &za * (1.0 - alpha);

        let zp_new = project_psd(&(&zh_p + &yp / rho), n);
        let mut za_new = &zh_a + &ya / rho;
        sc.project(&mut za_new);

        yp += (&zh_p - &zp_new) * rho;
        ya += (&zh_a - &za_new) * rho;
        zp = zp_new;
        za = za_new;

        if iter % check_every != 0 && iter != settings.max_iters {
            continue;
        }

        let ax = a * &x;
        let r_prim = (&x - &zp).amax().max((&ax - &za).amax());
        let mty = &yp + &at * &ya;
        let r_dual = (&sc.c + &mty).amax();
        let primal_obj = sc.c.dot(&x);
        let support = sc.support(&ya, 1e-9 * ya.amax().max(1.0)).unwrap_or(f64::INFINITY);
        let gap = (primal_obj + support).abs();
        residuals = Residuals {
            primal: r_prim,
            dual: r_dual,
            gap,
        };
        let tol = settings.tol;
        let eps_prim = tol + tol * x.amax().max(ax.amax()).max(zp.amax()).max(za.amax());
        let eps_dual = tol + tol * mty.amax().max(sc.c.amax());
        let eps_gap = tol * (1.0 + primal_obj.abs() + support.abs());
        if settings.trace {
            history.push(TraceEntry {
                iteration: iter,
                residuals,
                rho,
            });
        }
        if r_prim <= eps_prim && r_dual <= eps_dual && gap <= eps_gap {
            return Ok(finish(prog, smat(&zp, n), SolveStatus::Optimal, residuals, iter, history));
        }

        let dyp = &yp - &yp_prev;
        let dya = &ya - &ya_prev;
        if primal_infeasible(&sc, &at, &dyp, &dya, settings.infeasibility_tol) {
            return Ok(finish(prog, smat(&zp, n), SolveStatus::Infeasible, residuals, iter, history));
        }
        let dx = &x - &x_prev;
        if dual_infeasible(&sc, &dx, settings.infeasibility_tol) {
            return Ok(finish(prog, smat(&zp, n), SolveStatus::Unbounded, residuals, iter, history));
        }

        if settings.adaptive_rho && iter % (5 * check_every) == 0 {
            let p_norm = r_prim / x.amax().max(ax.amax()).max(zp.amax()).max(za.amax()).max(1e-30);
            let d_norm = r_dual / mty.amax().max(sc.c.amax()).max(1e-30);
            let factor = (p_norm / d_norm.max(1e-30)).sqrt();
            if !(0.2..=5.0).contains(&factor) && factor.is_finite() {
                rho = (rho * factor).clamp(1e-6, 1e6);
                kkt = Kkt::new(a, rho, sigma);
            }
        }
    }
    Ok(finish(prog, smat(&zp, n), SolveStatus::MaxIters, residuals, settings.max_iters, history))
}

fn primal_infeasible(sc: &Scaled, at: &DMatrix<f64>, dyp: &DVector<f64>, dya: &DVector<f64>, eps: f64) -> bool {
    let norm = dyp.amax().max(dya.amax());
    if norm < 1e-12 {
        return false;
    }
    let mt = dyp + at * dya;
    if mt.amax() > eps * norm {
        return false;
    }
    // the PSD part of the certificate must lie in the polar cone
    let (lmax, _) = extreme_eigs(dyp, sc.n);
    if lmax > eps * norm {
        return false;
    }
    matches!(sc.support(dya, eps * norm), Some(s) if s < -eps * norm)
}

fn dual_infeasible(sc: &Scaled, dx: &DVector<f64>, eps: f64) -> bool {
    let norm = dx.amax();
    if norm < 1e-12 || sc.c.dot(dx) > -eps * norm {
        return false;
    }
    let (_, lmin) = extreme_eigs(dx, sc.n);
    if lmin < -eps * norm {
        return false;
    }
    let adx = &sc.a * dx;
    for i in 0..sc.m() {
        let v = adx[i];
        let ok = if i < sc.m_lin {
            (sc.hi[i].is_infinite() || v <= eps * norm) && (sc.lo[i].is_infinite() || v >= -eps * norm)
        } else {
            v.abs() <= eps * norm
        };
        if !ok {
            return false;
        }
    }
    true
}

fn finish(
    prog: &ConicProgram,
    x: CMatrix,
    status: SolveStatus,
    residuals: Residuals,
    iterations: usize,
    history: Vec<TraceEntry>,
) -> ConicSolution {
    ConicSolution {
        objective_value: prog.objective_value(&x),
        x,
        status,
        residuals,
        iterations,
        history,
    }
}

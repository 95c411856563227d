//! Zero-forcing path beamforming for DAM-ISAC: lifting, semidefinite
//! relaxation, rank-one recovery and closed-form baselines.
//!
//! The beamformers are stacked as `vec(F) = [f_1; ...; f_L]` and written as
//! `vec(F) = Q̄ b̄` with `Q̄ = diag(Q_1, ..., Q_L)`, so the zero-forcing
//! conditions hold by construction.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{MultipathChannel, UlaGeometry};
use crate::conic_solver::{self, ConicProgram, Residuals, Sense, SocConstraint, SolveStatus, SolverSettings, TraceConstraint};
use crate::error::{invalid, Error, Result};
use crate::linalg::{block_diag, complex_gaussian, hermitian_eig, quad_form, CMatrix, CVector, C64, ZERO};
use crate::rng::trial_rng;
use crate::sensing::{asymptotic_ddcm, delay_diff_sets, isr, sensing_snr};
use crate::units::db_to_lin;
use crate::waveform::{kappas_from_delays, BeamformerSet};

/// Rank tolerance relative to the largest singular value.
pub const RANK_TOL: f64 = 1e-10;

/// Orthogonal projectors onto the complement of the other paths' channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfProjectors {
    pub q: Vec<CMatrix>,
}

impl ZfProjectors {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `Q̄ = diag(Q_1, ..., Q_L)`.
    pub fn stacked(&self) -> CMatrix {
        block_diag(&self.q)
    }
}

/// `Q_l = I - H_l (H_l^H H_l)⁻¹ H_l^H`, `H_l` the channel without path `l`.
/// Rank-deficient `H_l` is an error.
pub fn zf_projectors(channel: &MultipathChannel) -> Result<ZfProjectors> {
    build_projectors(channel, false)
}

/// Like [`zf_projectors`] but projects out only the numerically significant
/// range of a rank-deficient `H_l` (pseudo-inverse).
pub fn zf_projectors_pinv(channel: &MultipathChannel) -> Result<ZfProjectors> {
    build_projectors(channel, true)
}

fn build_projectors(channel: &MultipathChannel, allow_deficient: bool) -> Result<ZfProjectors> {
    let m = channel.num_antennas();
    let l = channel.num_paths();
    if l > 1 && m < l {
        return Err(invalid("num_tx_antennas", format!("{m} antennas cannot null {} paths", l - 1)));
    }
    let paths = channel.paths();
    let q = (0..l)
        .map(|p| {
            if l == 1 {
                return Ok(CMatrix::identity(m, m));
            }
            let cols: Vec<CVector> = paths.iter().enumerate().filter(|(i, _)| *i != p).map(|(_, x)| x.gain.clone()).collect();
            let hl = CMatrix::from_columns(&cols);
            let svd = hl.svd(true, false);
            let u = svd.u.expect("left singular vectors requested");
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if (smax == 0.0 || smin < RANK_TOL * smax)
                && !allow_deficient {
                    let condition = if smin == 0.0 { f64::INFINITY } else { smax / smin };
                    return Err(Error::RankDeficient { path: p, condition });
                }
            let mut proj = CMatrix::identity(m, m);
            for (k, &s) in svd.singular_values.iter().enumerate() {
                if s > RANK_TOL * smax {
                    let uk = u.column(k);
                    proj -= uk * uk.adjoint();
                }
            }
            Ok(proj)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ZfProjectors { q })
}

/// Sensing and ISR thresholds, linear scale. `None` removes the constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsacThresholds {
    /// Output sensing SNR threshold `γ_th`.
    pub gamma_th: Option<f64>,
    /// ISR threshold `φ_th`.
    pub phi_th: Option<f64>,
}

impl IsacThresholds {
    pub fn from_db(gamma_db: Option<f64>, phi_db: Option<f64>) -> Self {
        Self {
            gamma_th: gamma_db.map(db_to_lin),
            phi_th: phi_db.map(db_to_lin),
        }
    }

    pub fn comm_only() -> Self {
        Self {
            gamma_th: None,
            phi_th: None,
        }
    }
}

/// Physical quantities that convert the thresholds into lifted form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkBudget {
    /// `|α|²`.
    pub alpha_sq: f64,
    /// CPI length `N`.
    pub cpi_len: usize,
    pub noise_power: f64,
    pub tx_power: f64,
}

impl LinkBudget {
    /// `γ̃ = γ σ² / (|α|² N)`.
    pub fn gamma_tilde(&self, gamma: f64) -> f64 {
        gamma * self.noise_power / (self.alpha_sq * self.cpi_len as f64)
    }
}

/// The lifted problem in `ML x ML` form.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedProblem {
    /// `Q̄^H vec(H) vec(H)^H Q̄`.
    pub hbar: CMatrix,
    pub qbar: CMatrix,
    /// `Q̄^H (I_L ⊗ A(θ)) Q̄`.
    pub abar: CMatrix,
    /// `(d_τ, Q̄^H (Λᵀ(d_τ,0) ⊗ A(θ)) Q̄)` for every nonzero difference that
    /// occurs among the delay pre-compensations, ascending in `d_τ`.
    pub abar_q: Vec<(i64, CMatrix)>,
    /// `γ̃_th`, absent without a sensing constraint.
    pub gamma_tilde: Option<f64>,
    /// `φ̃_th = φ_th γ̃_th²`, absent without an ISR constraint.
    pub phi_tilde: Option<f64>,
    pub tx_power: f64,
    pub num_antennas: usize,
    pub kappas: Vec<usize>,
    projectors: ZfProjectors,
    /// `Q_l h_l` per path.
    qh: Vec<CVector>,
    /// `Q_l a(θ)` per path.
    qa: Vec<CVector>,
    steering: CVector,
}

/// Builds the lifted operators. The sensing and ISR constraints are kept
/// only when `γ_th` is given; the ISR constraint additionally needs `φ_th`
/// and at least two paths.
pub fn build_lifted(
    channel: &MultipathChannel,
    zf: &ZfProjectors,
    geom: &UlaGeometry,
    theta_rad: f64,
    thresholds: &IsacThresholds,
    budget: &LinkBudget,
) -> Result<LiftedProblem> {
    let m = channel.num_antennas();
    let l = channel.num_paths();
    if zf.len() != l {
        return Err(Error::DimensionMismatch {
            context: "projectors",
            expected: l,
            actual: zf.len(),
        });
    }
    if geom.num_antennas != m {
        return Err(Error::DimensionMismatch {
            context: "array size",
            expected: m,
            actual: geom.num_antennas,
        });
    }
    if !(budget.tx_power > 0.0 && budget.noise_power > 0.0 && budget.alpha_sq > 0.0 && budget.cpi_len > 0) {
        return Err(invalid("budget", "power, noise, gain and CPI length must be positive"));
    }
    let kappas = kappas_from_delays(&channel.delays())?;
    let a = geom.steering_vector(theta_rad);
    let qh: Vec<CVector> = zf.q.iter().zip(channel.paths()).map(|(q, p)| q * &p.gain).collect();
    let qa: Vec<CVector> = zf.q.iter().map(|q| q * &a).collect();

    let stack = |v: &[CVector]| CVector::from_iterator(m * l, v.iter().flat_map(|x| x.iter().copied()));
    let w = stack(&qh);
    let hbar = &w * w.adjoint();
    let qbar = zf.stacked();

    // Q̄(X ⊗ A)Q̄ has blocks x_ij (Q_i a)(Q_j a)^H
    let lift = |x: &CMatrix| {
        let mut out = CMatrix::zeros(m * l, m * l);
        for i in 0..l {
            for j in 0..l {
                let c = x[(i, j)];
                if c != ZERO {
                    let blk = (&qa[i] * qa[j].adjoint()) * c;
                    out.view_mut((i * m, j * m), (m, m)).copy_from(&blk);
                }
            }
        }
        out
    };
    let abar = lift(&CMatrix::identity(l, l));

    let gamma_tilde = thresholds.gamma_th.map(|g| budget.gamma_tilde(g));
    let phi_tilde = match (gamma_tilde, thresholds.phi_th) {
        (Some(gt), Some(phi)) if l > 1 => Some(phi * gt * gt),
        _ => None,
    };
    let abar_q = if phi_tilde.is_some() {
        delay_diff_sets(&kappas)
            .nonzero_diffs()
            .into_iter()
            .map(|d| (d, lift(&asymptotic_ddcm(&kappas, d, 0.0, 1, 1.0).transpose())))
            .collect()
    } else {
        Vec::new()
    };

    Ok(LiftedProblem {
        hbar,
        qbar,
        abar,
        abar_q,
        gamma_tilde,
        phi_tilde,
        tx_power: budget.tx_power,
        num_antennas: m,
        kappas,
        projectors: zf.clone(),
        qh,
        qa,
        steering: a,
    })
}

impl LiftedProblem {
    pub fn num_paths(&self) -> usize {
        self.kappas.len()
    }

    pub fn steering(&self) -> &CVector {
        &self.steering
    }

    pub fn projectors(&self) -> &ZfProjectors {
        &self.projectors
    }

    /// `P · max_l ‖Q_l a‖²`, the largest `a^H F F^H a` reachable under the
    /// zero-forcing and power constraints.
    pub fn max_beam_gain(&self) -> f64 {
        self.tx_power * self.qa.iter().map(|v| v.norm_squared()).fold(0.0, f64::max)
    }

    /// Orthonormal basis, block by block, of `span{Q_l h_l, Q_l a}`. Every
    /// lifted operator has its range inside it, so restricting `B̄` to this
    /// subspace loses nothing.
    pub fn reduced_basis(&self) -> CMatrix {
        let m = self.num_antennas;
        let l = self.num_paths();
        let mut cols: Vec<CVector> = Vec::new();
        for p in 0..l {
            let mut local: Vec<CVector> = Vec::new();
            for v in [&self.qh[p], &self.qa[p]] {
                let mut r = v.clone();
                for u in &local {
                    let c = u.dotc(&r);
                    r -= u * c;
                }
                // second pass for numerical orthogonality
                for u in &local {
                    let c = u.dotc(&r);
                    r -= u * c;
                }
                let nr = r.norm();
                if nr > 1e-10 * v.norm().max(f64::MIN_POSITIVE) && nr > 0.0 {
                    local.push(r.unscale(nr));
                }
            }
            for u in local {
                let mut full = CVector::zeros(m * l);
                full.rows_mut(p * m, m).copy_from(&u);
                cols.push(full);
            }
        }
        CMatrix::from_columns(&cols)
    }

    /// True objective `|Σ_l h_l^H f_l|²` via `b̄^H H̄ b̄`.
    pub fn objective(&self, b: &CVector) -> f64 {
        quad_form(b, &self.hbar, b).re
    }

    /// Splits `vec(F) = Q̄ b̄` into beamformers with the channel's κ.
    pub fn beamformers(&self, b: &CVector) -> Result<BeamformerSet> {
        let m = self.num_antennas;
        let vectors = self
            .projectors
            .q
            .iter()
            .enumerate()
            .map(|(p, q)| q * b.rows(p * m, m))
            .collect();
        BeamformerSet::new(vectors, self.kappas.clone())
    }

    /// Conic program in the basis `v`, power normalized to one.
    fn conic_program(&self, v: &CMatrix) -> ConicProgram {
        let r = v.ncols();
        let vh = v.adjoint();
        let compress = |op: &CMatrix| &vh * op * v;
        let p = self.tx_power;
        // Tr(Q̄ B̄) would leave B̄ unbounded on null(Q̄); every operator obeys
        // Q̄ X Q̄ = X, so B̄ can be taken inside range(Q̄) where Q̄ acts as I
        let mut constraints = vec![TraceConstraint {
            a: &vh * v,
            sense: Sense::Le,
            rhs: 1.0,
        }];
        if let Some(gt) = self.gamma_tilde {
            constraints.push(TraceConstraint {
                a: compress(&self.abar),
                sense: Sense::Ge,
                rhs: gt / p,
            });
        }
        let soc = self.phi_tilde.map(|pt| SocConstraint {
            operators: self.abar_q.iter().map(|(_, op)| compress(op)).collect(),
            bound: pt.sqrt() / p,
        });
        let mut objective = compress(&self.hbar);
        if r > 0 {
            objective = crate::linalg::hermitian_part(&objective);
        }
        for c in &mut constraints {
            c.a = crate::linalg::hermitian_part(&c.a);
        }
        ConicProgram {
            objective,
            constraints,
            soc,
        }
    }
}

/// Relaxed solution `B̄*` and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SdrSolution {
    pub bstar: CMatrix,
    /// Orthonormal basis `V` of the variable, `B̄* = V Y V^H`.
    pub basis: CMatrix,
    /// `Y`, the solution in basis coordinates.
    pub reduced: CMatrix,
    pub status: SolveStatus,
    /// `Tr(H̄ B̄*)`, an upper bound on `|Σ h_l^H f_l|²`.
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

/// How [`solve_sdr`] parameterizes `B̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SdrBasis {
    /// Restrict to `span{Q_l h_l, Q_l a}` per path (at most `2L` dimensions).
    #[default]
    Reduced,
    /// Full `ML`-dimensional variable.
    Full,
}

/// Solver settings for the relaxation. Candidates are accepted with a
/// relative sensing slack of [`FEASIBILITY_RTOL`], so the relaxed solution
/// has to meet its constraints well inside that.
pub fn sdr_settings() -> SolverSettings {
    SolverSettings {
        tol: 1e-9,
        ..SolverSettings::default()
    }
}

/// Relative shortfall of the sensing constraint tolerated in a candidate.
pub const FEASIBILITY_RTOL: f64 = 1e-7;

pub fn solve_sdr(lp: &LiftedProblem, settings: &SolverSettings) -> Result<SdrSolution> {
    solve_sdr_with(lp, settings, SdrBasis::Reduced)
}

pub fn solve_sdr_with(lp: &LiftedProblem, settings: &SolverSettings, basis: SdrBasis) -> Result<SdrSolution> {
    let m = lp.num_antennas;
    if let Some(gt) = lp.gamma_tilde {
        let single_path = m as f64 * lp.tx_power;
        if gt > single_path {
            return Err(Error::Infeasible {
                gamma_tilde: gt,
                gamma_max: single_path,
            });
        }
    }
    let v = match basis {
        SdrBasis::Reduced => lp.reduced_basis(),
        SdrBasis::Full => CMatrix::identity(m * lp.num_paths(), m * lp.num_paths()),
    };
    if v.ncols() == 0 {
        return Err(Error::NoZfSubspace);
    }
    let prog = lp.conic_program(&v);
    let sol = conic_solver::solve(&prog, settings)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible {
            gamma_tilde: lp.gamma_tilde.unwrap_or(0.0),
            gamma_max: lp.max_beam_gain(),
        });
    }
    let reduced = &sol.x * C64::new(lp.tx_power, 0.0);
    let bstar = &v * &reduced * v.adjoint();
    let objective = crate::conic_solver::trace_product(&lp.hbar, &bstar).re;
    Ok(SdrSolution {
        bstar,
        basis: v,
        reduced,
        status: sol.status,
        objective,
        residuals: sol.residuals,
        iterations: sol.iterations,
    })
}

/// Which candidate produced the returned beamformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    LeadingEigvec,
    Randomized,
    /// Sensing carried by one path with `a(θ)` nulled on the others.
    SensingPath,
    /// A caller-supplied beamformer (e.g. a solution at a stricter threshold).
    WarmStart,
    /// Leading eigenvector blended toward a single-path sensing beam.
    Blended,
    Failed,
}

/// Beamformer with every metric recomputed from the vectors themselves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsacBeamformingResult {
    pub bf: BeamformerSet,
    /// `γ_c = |Σ h_l^H f_l|² / σ²`.
    pub comm_snr: f64,
    pub sensing_snr: f64,
    pub isr: f64,
    /// `Tr(H̄ B̄*)`.
    pub sdr_objective: f64,
    /// `1 - λ₁ / Σλ` of `B̄*`.
    pub rank_gap: f64,
    pub recovery: Recovery,
    /// Index of the winning candidate: 0 is the leading eigenvector,
    /// `1..=R` the random draws, then one sensing-path candidate per path,
    /// then the warm starts in order.
    pub candidate: usize,
}

impl IsacBeamformingResult {
    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Gaussian randomization around `B̄*`.
///
/// Candidate 0 is `√λ₁ u₁`; candidates `1..=num_samples` are drawn from
/// `CN(0, B̄*)` using stream `i` of `seed`. Each candidate is scaled as far as
/// the power and ISR constraints allow, kept when the sensing constraint
/// then holds, and the feasible candidate with the largest objective wins
/// (lowest index on ties).
pub fn rank_reduce(
    lp: &LiftedProblem,
    sdr: &SdrSolution,
    budget: &LinkBudget,
    num_samples: usize,
    seed: u64,
) -> Result<IsacBeamformingResult> {
    rank_reduce_with(lp, sdr, budget, num_samples, seed, &[])
}

/// [`rank_reduce`] with extra candidates appended after the random draws:
/// when the ISR constraint is present, the closed-form
/// [`sensing_path_candidate`] for every path, then `warm`.
///
/// When no candidate is feasible, the leading eigenvector is blended toward
/// the beam `Q_l a(θ)` on a single path `l`, which carries no ISR, and the
/// smallest feasible blend is kept. That beam meets the sensing constraint
/// whenever the problem is feasible, so the fallback fails only for an
/// infeasible threshold pair.
pub fn rank_reduce_with(
    lp: &LiftedProblem,
    sdr: &SdrSolution,
    budget: &LinkBudget,
    num_samples: usize,
    seed: u64,
    warm: &[BeamformerSet],
) -> Result<IsacBeamformingResult> {
    let (vals, vecs) = hermitian_eig(&sdr.reduced);
    let total: f64 = vals.iter().filter(|&&v| v > 0.0).sum();
    if total <= 0.0 {
        return Err(Error::RecoveryFailed("relaxed solution is zero".into()));
    }
    let rank_gap = 1.0 - vals[0] / total;
    // square root factor of Y restricted to its positive eigenvalues
    let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > total * 1e-12).collect();
    let root = CMatrix::from_fn(vecs.nrows(), keep.len(), |i, j| vecs[(i, keep[j])] * vals[keep[j]].sqrt());
    let leading = root.column(0).into_owned();

    // every operator has its range in span(V), so candidates are handled in
    // V coordinates; projecting onto span(V) keeps all quadratic values and
    // can only lower the power
    let ev = Evaluator::new(lp, &sdr.basis);
    let m = lp.num_antennas;
    let warm_y = warm
        .iter()
        .map(|bf| {
            if bf.num_paths() != lp.num_paths() || bf.num_antennas() != m {
                return Err(Error::DimensionMismatch {
                    context: "warm start",
                    expected: lp.num_paths() * m,
                    actual: bf.num_paths() * bf.num_antennas(),
                });
            }
            Ok(ev.coords(&CVector::from_iterator(m * lp.num_paths(), bf.vectors().iter().flat_map(|f| f.iter().copied()))))
        })
        .collect::<Result<Vec<_>>>()?;

    let structured = if lp.phi_tilde.is_some() { lp.num_paths() } else { 0 };
    let evaluate = |idx: usize| -> Option<(f64, CVector)> {
        let y = if idx == 0 {
            leading.clone()
        } else if idx <= num_samples {
            let mut rng = trial_rng(seed, idx as u64);
            let g = CVector::from_fn(keep.len(), |_, _| complex_gaussian(&mut rng, 1.0));
            &root * g
        } else if idx <= num_samples + structured {
            ev.coords(&sensing_path_candidate(lp, idx - num_samples - 1)?)
        } else {
            warm_y[idx - num_samples - structured - 1].clone()
        };
        ev.scale(y)
    };
    let feasible: Vec<(usize, f64, CVector)> = (0..=num_samples + structured + warm_y.len())
        .into_par_iter()
        .filter_map(|i| evaluate(i).map(|(obj, y)| (i, obj, y)))
        .collect();
    // ordered scan: a later candidate must win by more than rounding noise
    let best = feasible.into_iter().reduce(|x, y| if y.1 > x.1 * (1.0 + 1e-9) { y } else { x });

    let (idx, y, recovery) = match best {
        Some((0, _, y)) => (0, y, Recovery::LeadingEigvec),
        Some((i, _, y)) if i <= num_samples => (i, y, Recovery::Randomized),
        Some((i, _, y)) if i <= num_samples + structured => (i, y, Recovery::SensingPath),
        Some((i, _, y)) => (i, y, Recovery::WarmStart),
        None => match blend_toward_sensing(lp, &ev, &leading) {
            Some(y) => (0, y, Recovery::Blended),
            None => return Err(Error::RecoveryFailed(slack_report(lp, &sdr.bstar))),
        },
    };
    let bf = lp.beamformers(&(&sdr.basis * y))?;
    let mut result = evaluate_beamformer(lp, &bf, budget)?;
    result.sdr_objective = sdr.objective;
    result.rank_gap = rank_gap;
    result.recovery = recovery;
    result.candidate = idx;
    Ok(result)
}

/// Lifted operators compressed to a basis `V` with orthonormal columns
/// inside `range(Q̄)`.
struct Evaluator<'a> {
    lp: &'a LiftedProblem,
    basis: &'a CMatrix,
    objective: CMatrix,
    sensing: CMatrix,
    isr: Vec<CMatrix>,
}

impl<'a> Evaluator<'a> {
    fn new(lp: &'a LiftedProblem, basis: &'a CMatrix) -> Self {
        let vh = basis.adjoint();
        let compress = |op: &CMatrix| &vh * op * basis;
        Self {
            lp,
            basis,
            objective: compress(&lp.hbar),
            sensing: compress(&lp.abar),
            isr: lp.abar_q.iter().map(|(_, op)| compress(op)).collect(),
        }
    }

    fn coords(&self, b: &CVector) -> CVector {
        self.basis.ad_mul(b)
    }

    /// Largest feasible rescaling of `y`; `None` when the sensing
    /// constraint cannot be met without breaking the others.
    fn scale(&self, y: CVector) -> Option<(f64, CVector)> {
        let power = y.norm_squared();
        if !(power > 0.0) {
            return None;
        }
        let mut t2 = self.lp.tx_power / power;
        if let Some(pt) = self.lp.phi_tilde {
            let num: f64 = self.isr.iter().map(|op| quad_form(&y, op, &y).norm_sqr()).sum();
            if num > 0.0 {
                t2 = t2.min((pt / num).sqrt());
            }
        }
        if let Some(gt) = self.lp.gamma_tilde {
            let s = quad_form(&y, &self.sensing, &y).re;
            if t2 * s < gt * (1.0 - FEASIBILITY_RTOL) {
                return None;
            }
        }
        let scaled = y * C64::new(t2.sqrt(), 0.0);
        Some((quad_form(&scaled, &self.objective, &scaled).re, scaled))
    }
}

/// Best beamformer whose sensing response comes from path `l` alone.
///
/// Every other path is restricted to `a(θ)^⊥`, so all cross terms of the
/// Doppler-cut vanish and the ISR is zero. What remains is
/// `max |w^H b|²` s.t. `‖b‖² ≤ P`, `|c^H b|² ≥ γ̃`, solved exactly in
/// `span{c, w}`. `None` when path `l` cannot meet `γ̃` on its own.
pub fn sensing_path_candidate(lp: &LiftedProblem, l: usize) -> Option<CVector> {
    let m = lp.num_antennas;
    let nl = lp.num_paths();
    if l >= nl {
        return None;
    }
    let p = lp.tx_power;
    let mut w = CVector::zeros(m * nl);
    let mut c = CVector::zeros(m * nl);
    for j in 0..nl {
        let mut hj = lp.qh[j].clone();
        if j == l {
            c.rows_mut(j * m, m).copy_from(&lp.qa[j]);
        } else {
            // Q_j a spans the part of a(θ) that block j can radiate
            let qa = &lp.qa[j];
            let n2 = qa.norm_squared();
            if n2 > 0.0 {
                let coef = qa.dotc(&hj) / n2;
                hj -= qa * coef;
            }
        }
        w.rows_mut(j * m, m).copy_from(&hj);
    }
    let nc = c.norm();
    let gt = lp.gamma_tilde.unwrap_or(0.0);
    if nc == 0.0 || p * nc * nc < gt {
        return None;
    }
    let e1 = c.unscale(nc);
    let w1 = e1.dotc(&w);
    let mut r = &w - &e1 * w1;
    let w2 = r.norm();
    let e2 = if w2 > 1e-300 {
        r.unscale_mut(w2);
        r
    } else {
        return Some(e1 * C64::new(p.sqrt(), 0.0));
    };
    // b = √P (cos φ e1 + sin φ e^{jψ} e2), ψ aligning the two terms
    let phi_free = w2.atan2(w1.norm());
    let phi_max = (gt / (p * nc * nc)).sqrt().min(1.0).acos();
    let phi = phi_free.min(phi_max);
    let align1 = if w1.norm() > 0.0 { w1 / w1.norm() } else { C64::new(1.0, 0.0) };
    Some((e1 * align1 * C64::new(phi.cos(), 0.0) + e2 * C64::new(phi.sin(), 0.0)) * C64::new(p.sqrt(), 0.0))
}

const BLEND_GRID: usize = 64;
const BLEND_BISECTIONS: usize = 40;

/// Smallest `t` on `y(t) = (1 - t) y + t s` that is feasible after
/// rescaling, trying each single-path beam `s`; best objective wins.
fn blend_toward_sensing(lp: &LiftedProblem, ev: &Evaluator, y: &CVector) -> Option<CVector> {
    let m = lp.num_antennas;
    let b = ev.basis * y;
    let nb = y.norm();
    if nb == 0.0 {
        return None;
    }
    let mut best: Option<(f64, CVector)> = None;
    for l in 0..lp.num_paths() {
        let qa = &lp.qa[l];
        let nqa = qa.norm();
        if nqa == 0.0 {
            continue;
        }
        // phase chosen so the added beam reinforces the sensing response
        let g = qa.dotc(&b.rows(l * m, m));
        let phase = if g.norm() > 0.0 { g / g.norm() } else { C64::new(1.0, 0.0) };
        let mut s = CVector::zeros(b.len());
        s.rows_mut(l * m, m).copy_from(&(qa * (phase * nb / nqa)));
        let s = ev.coords(&s);
        let at = |t: f64| y * C64::new(1.0 - t, 0.0) + &s * C64::new(t, 0.0);
        let Some(k) = (1..=BLEND_GRID).find(|&k| ev.scale(at(k as f64 / BLEND_GRID as f64)).is_some()) else {
            continue;
        };
        let (mut lo, mut hi) = ((k - 1) as f64 / BLEND_GRID as f64, k as f64 / BLEND_GRID as f64);
        for _ in 0..BLEND_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if ev.scale(at(mid)).is_some() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let cand = ev.scale(at(hi)).expect("upper end stays feasible");
        if best.as_ref().is_none_or(|(obj, _)| cand.0 > *obj) {
            best = Some(cand);
        }
    }
    best.map(|(_, y)| y)
}

fn slack_report(lp: &LiftedProblem, bstar: &CMatrix) -> String {
    let tr = |op: &CMatrix| crate::conic_solver::trace_product(op, bstar);
    let mut parts = vec![format!("power slack {:e}", lp.tx_power - tr(&lp.qbar).re)];
    if let Some(gt) = lp.gamma_tilde {
        parts.push(format!("sensing slack {:e}", tr(&lp.abar).re - gt));
    }
    if let Some(pt) = lp.phi_tilde {
        let num: f64 = lp.abar_q.iter().map(|(_, op)| tr(op).norm_sqr()).sum();
        parts.push(format!("ISR slack {:e}", pt.sqrt() - num.sqrt()));
    }
    parts.join(", ")
}

/// Metrics of a beamformer from first principles.
pub fn evaluate_beamformer(lp: &LiftedProblem, bf: &BeamformerSet, budget: &LinkBudget) -> Result<IsacBeamformingResult> {
    let a = lp.steering();
    let n_d = lp.kappas.iter().max().copied().unwrap_or(0) - lp.kappas.iter().min().copied().unwrap_or(0);
    let sens = sensing_snr(bf, a, budget.alpha_sq, budget.cpi_len, budget.noise_power);
    let isr_value = if bf.beam_gain(a) > 0.0 { isr(bf, a, n_d)? } else { 0.0 };
    let gain: C64 = lp
        .qh
        .iter()
        .enumerate()
        .map(|(p, _)| lp_channel_gain(lp, p, bf))
        .sum();
    Ok(IsacBeamformingResult {
        bf: bf.clone(),
        comm_snr: gain.norm_sqr() / budget.noise_power,
        sensing_snr: sens,
        isr: isr_value,
        sdr_objective: f64::NAN,
        rank_gap: f64::NAN,
        recovery: Recovery::Failed,
        candidate: 0,
    })
}

fn lp_channel_gain(lp: &LiftedProblem, p: usize, bf: &BeamformerSet) -> C64 {
    // h_l^H f_l; the stored Q_l h_l equals h_l projected, and because f_l
    // lies in the range of Q_l, (Q_l h_l)^H f_l = h_l^H f_l
    lp.qh[p].dotc(&bf.vectors()[p])
}

/// End-to-end design: projectors, lifting, relaxation and recovery.
pub fn design_isac_beamformer(
    channel: &MultipathChannel,
    geom: &UlaGeometry,
    theta_rad: f64,
    thresholds: &IsacThresholds,
    budget: &LinkBudget,
    settings: &SolverSettings,
    num_samples: usize,
    seed: u64,
    warm: &[BeamformerSet],
) -> Result<IsacBeamformingResult> {
    let zf = zf_projectors(channel)?;
    let lp = build_lifted(channel, &zf, geom, theta_rad, thresholds, budget)?;
    let sdr = solve_sdr(&lp, settings)?;
    rank_reduce_with(&lp, &sdr, budget, num_samples, seed, warm)
}

/// `f_l = c Q_l h_l` with `c = sqrt(P / Σ_l ‖Q_l h_l‖²)`.
pub fn comm_only_beamformer(channel: &MultipathChannel, zf: &ZfProjectors, p_t: f64) -> Result<BeamformerSet> {
    let qh: Vec<CVector> = zf.q.iter().zip(channel.paths()).map(|(q, p)| q * &p.gain).collect();
    let total: f64 = qh.iter().map(|v| v.norm_squared()).sum();
    if total == 0.0 {
        return Err(Error::NoZfSubspace);
    }
    let c = C64::new((p_t / total).sqrt(), 0.0);
    BeamformerSet::new(qh.into_iter().map(|v| v * c).collect(), kappas_from_delays(&channel.delays())?)
}

/// `|Σ_l h_l^H f_l|² / σ²`; valid for beamformers satisfying zero-forcing.
pub fn comm_snr(channel: &MultipathChannel, bf: &BeamformerSet, sigma2: f64) -> f64 {
    let g: C64 = channel.paths().iter().zip(bf.vectors()).map(|(p, f)| p.gain.dotc(f)).sum();
    g.norm_sqr() / sigma2
}

/// `f_1 = sqrt(P/M) a(θ)`, remaining paths silent.
pub fn single_path_beamformer(geom: &UlaGeometry, theta_rad: f64, p_t: f64, kappas: Vec<usize>) -> Result<BeamformerSet> {
    let m = geom.num_antennas;
    let mut vectors = vec![CVector::zeros(m); kappas.len()];
    if let Some(first) = vectors.first_mut() {
        *first = geom.steering_vector(theta_rad) * C64::new((p_t / m as f64).sqrt(), 0.0);
    }
    BeamformerSet::new(vectors, kappas)
}

/// `C = (N / N_c) log₂(1 + γ_c)` in bit/s/Hz.
pub fn spectral_efficiency(gamma_c: f64, n: usize, n_c: usize) -> f64 {
    n as f64 / n_c as f64 * (1.0 + gamma_c).log2()
}

/// Transmit beampattern normalized to its peak, with per-path patterns
/// normalized to their own peaks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Beampattern {
    pub theta_rad: Vec<f64>,
    pub total: Vec<f64>,
    pub per_path: Vec<Vec<f64>>,
}

pub fn beampattern(bf: &BeamformerSet, geom: &UlaGeometry, theta_grid: &[f64]) -> Result<Beampattern> {
    if theta_grid.is_empty() {
        return Err(invalid("theta_grid", "must not be empty"));
    }
    let mut per_path = vec![Vec::with_capacity(theta_grid.len()); bf.num_paths()];
    let mut total = Vec::with_capacity(theta_grid.len());
    for &t in theta_grid {
        let a = geom.steering_vector(t);
        let g = bf.projected(&a);
        total.push(g.iter().map(|v| v.norm_sqr()).sum::<f64>());
        for (dst, v) in per_path.iter_mut().zip(&g) {
            dst.push(v.norm_sqr());
        }
    }
    let normalize = |v: &mut Vec<f64>| {
        let peak = v.iter().copied().fold(0.0, f64::max);
        if peak > 0.0 {
            v.iter_mut().for_each(|x| *x /= peak);
        }
        peak
    };
    if normalize(&mut total) == 0.0 {
        return Err(invalid("beamformers", "all-zero beamformer has no pattern"));
    }
    per_path.iter_mut().for_each(|p| {
        normalize(p);
    });
    Ok(Beampattern {
        theta_rad: theta_grid.to_vec(),
        total,
        per_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_comm_channel, ChannelPath, CommChannelParams, PathSpec, ScenarioConfig};
    use crate::rng::trial_rng;
    use crate::rng::seeded;
    use crate::units::lin_to_db;

    fn small_channel(m: usize, delays: &[usize], seed: u64) -> MultipathChannel {
        let mut rng = seeded(seed);
        let paths = delays
            .iter()
            .map(|&d| ChannelPath {
                delay_taps: d,
                gain: CVector::from_fn(m, |_, _| complex_gaussian(&mut rng, 1.0)),
                subpath_aods_rad: vec![],
            })
            .collect();
        MultipathChannel::new(paths).unwrap()
    }

    fn unit_budget(p: f64) -> LinkBudget {
        LinkBudget {
            alpha_sq: 1.0,
            cpi_len: 1,
            noise_power: 1.0,
            tx_power: p,
        }
    }

    fn random_bf_matrix(m: usize, l: usize, seed: u64) -> CMatrix {
        let mut rng = seeded(seed);
        CMatrix::from_fn(m, l, |_, _| complex_gaussian(&mut rng, 1.0))
    }

    fn vec_of(f: &CMatrix) -> CVector {
        CVector::from_iterator(f.len(), f.iter().copied())
    }

    #[test]
    fn single_path_projector_is_identity() {
        let ch = small_channel(4, &[3], 1);
        assert_eq!(zf_projectors(&ch).unwrap().q[0], CMatrix::identity(4, 4));
    }

    #[test]
    fn orthogonal_two_path_projector() {
        let h1 = CVector::from_vec(vec![C64::new(1.0, 0.0), ZERO, ZERO]);
        let h2 = CVector::from_vec(vec![ZERO, C64::new(0.0, 2.0), C64::new(1.0, 0.0)]);
        let ch = MultipathChannel::new(vec![
            ChannelPath { delay_taps: 0, gain: h1.clone(), subpath_aods_rad: vec![] },
            ChannelPath { delay_taps: 2, gain: h2.clone(), subpath_aods_rad: vec![] },
        ])
        .unwrap();
        let zf = zf_projectors(&ch).unwrap();
        let expected = CMatrix::identity(3, 3) - (&h2 * h2.adjoint()).unscale(h2.norm_squared());
        assert!((&zf.q[0] - expected).norm() < 1e-12);
        // comm-only power splits in proportion to ‖Q_l h_l‖² = ‖h_l‖²
        let bf = comm_only_beamformer(&ch, &zf, 2.0).unwrap();
        let p1 = bf.vectors()[0].norm_squared();
        let p2 = bf.vectors()[1].norm_squared();
        assert!((p1 / p2 - 1.0 / 5.0).abs() < 1e-12);
        assert!((p1 + p2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projectors_null_other_paths() {
        for seed in 0..100 {
            let ch = small_channel(6, &[0, 4, 9], seed);
            let zf = zf_projectors(&ch).unwrap();
            for (l, q) in zf.q.iter().enumerate() {
                assert!((q * q - q).norm() < 1e-10);
                assert!((q - q.adjoint()).norm() < 1e-10);
                let (vals, _) = hermitian_eig(q);
                assert_eq!(vals.iter().filter(|&&v| v > 0.5).count(), 6 - 2);
                for (lp, p) in ch.paths().iter().enumerate() {
                    if lp != l {
                        assert!((q * &p.gain).norm() < 1e-10 * p.gain.norm());
                    }
                }
            }
        }
    }

    #[test]
    fn rank_deficient_channel_detected() {
        let h = CVector::from_element(3, C64::new(1.0, 0.0));
        let ch = MultipathChannel::new(vec![
            ChannelPath { delay_taps: 0, gain: h.clone(), subpath_aods_rad: vec![] },
            ChannelPath { delay_taps: 1, gain: h.clone(), subpath_aods_rad: vec![] },
            ChannelPath { delay_taps: 2, gain: h * C64::new(0.0, 2.0), subpath_aods_rad: vec![] },
        ])
        .unwrap();
        assert!(matches!(zf_projectors(&ch), Err(Error::RankDeficient { path: 0, .. })));
        let zf = zf_projectors_pinv(&ch).unwrap();
        assert!((&zf.q[0] * &ch.paths()[1].gain).norm() < 1e-10);
    }

    #[test]
    fn lifted_values_match_direct_forms() {
        let m = 4;
        let geom = UlaGeometry::half_wavelength(m);
        let theta = 0.4;
        let a = geom.steering_vector(theta);
        let big_a = &a * a.adjoint();
        for seed in 0..200 {
            let ch = small_channel(m, &[seed as usize % 4, 4], seed);
            let zf = zf_projectors(&ch).unwrap();
            let lp = build_lifted(&ch, &zf, &geom, theta, &IsacThresholds::from_db(Some(0.0), Some(0.0)), &unit_budget(1.0)).unwrap();
            let f = random_bf_matrix(m, 2, seed + 1000);
            let v = vec_of(&f);
            let h = ch.gain_matrix();
            // objective with Q̄ dropped: vec(F)^H vec(H) vec(H)^H vec(F)
            let vh = vec_of(&h);
            let direct: C64 = (0..2).map(|l| h.column(l).dotc(&f.column(l))).sum();
            let lifted = quad_form(&v, &(&vh * vh.adjoint()), &v).re;
            assert!((direct.norm_sqr() - lifted).abs() <= 1e-10 * lifted.abs().max(1e-300));
            // ISR term via the Kronecker identity, against Tr(Λ F^H A F)
            for d in [-4i64, -2, 1, 3, 4] {
                let lam = asymptotic_ddcm(&lp.kappas, d, 0.0, 1, 1.0);
                let direct = (&lam * f.adjoint() * &big_a * &f).trace();
                let kron = lam.transpose().kronecker(&big_a);
                let lifted = quad_form(&v, &kron, &v);
                assert!((direct - lifted).norm() <= 1e-10 * direct.norm().max(1.0));
            }
            // lifted operators against the literal Kronecker definitions
            let qbar = zf.stacked();
            let abar = &qbar * CMatrix::identity(2, 2).kronecker(&big_a) * &qbar;
            assert!((&lp.abar - abar).norm() < 1e-10 * lp.abar.norm());
            for (d, op) in &lp.abar_q {
                let lam = asymptotic_ddcm(&lp.kappas, *d, 0.0, 1, 1.0);
                let lit = &qbar * lam.transpose().kronecker(&big_a) * &qbar;
                assert!((op - lit).norm() < 1e-10 * op.norm().max(1.0));
            }
        }
    }

    #[test]
    fn abar_q_conjugate_pairs() {
        let geom = UlaGeometry::half_wavelength(5);
        let ch = small_channel(5, &[1, 3, 8], 3);
        let zf = zf_projectors(&ch).unwrap();
        let lp = build_lifted(&ch, &zf, &geom, 0.2, &IsacThresholds::from_db(Some(0.0), Some(0.0)), &unit_budget(1.0)).unwrap();
        let get = |d: i64| lp.abar_q.iter().find(|(x, _)| *x == d).map(|(_, m)| m.clone()).unwrap();
        for (d, op) in &lp.abar_q {
            assert!((get(-d) - op.adjoint()).norm() < 1e-12);
        }
        let b = CVector::from_fn(15, |i, _| C64::new(i as f64, 1.0 - i as f64));
        let bb = &b * b.adjoint();
        let t = |m: &CMatrix| crate::conic_solver::trace_product(m, &bb);
        assert!((t(&get(-2)) - t(&get(2)).conj()).norm() < 1e-9);
    }

    #[test]
    fn single_path_lifting_has_no_isr_terms() {
        let geom = UlaGeometry::half_wavelength(4);
        let ch = small_channel(4, &[2], 5);
        let zf = zf_projectors(&ch).unwrap();
        let lp = build_lifted(&ch, &zf, &geom, 0.0, &IsacThresholds::from_db(Some(0.0), Some(-10.0)), &unit_budget(1.0)).unwrap();
        assert!(lp.abar_q.is_empty());
        assert!(lp.phi_tilde.is_none());
    }

    #[test]
    fn sdr_without_sensing_matches_comm_only() {
        let geom = UlaGeometry::half_wavelength(6);
        for seed in 0..5 {
            let ch = small_channel(6, &[0, 5, 2], seed);
            let zf = zf_projectors(&ch).unwrap();
            let budget = unit_budget(2.0);
            let lp = build_lifted(&ch, &zf, &geom, 0.3, &IsacThresholds::comm_only(), &budget).unwrap();
            let closed = comm_snr(&ch, &comm_only_beamformer(&ch, &zf, 2.0).unwrap(), 1.0);
            for basis in [SdrBasis::Reduced, SdrBasis::Full] {
                let sdr = solve_sdr_with(&lp, &SolverSettings::default(), basis).unwrap();
                assert_eq!(sdr.status, SolveStatus::Optimal, "{basis:?} {:?} {}", sdr.residuals, sdr.iterations);
                assert!((sdr.objective / closed - 1.0).abs() < 1e-3, "{basis:?}");
            }
            let res = rank_reduce(&lp, &solve_sdr(&lp, &SolverSettings::default()).unwrap(), &budget, 50, 1).unwrap();
            assert!((res.comm_snr / closed - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn reduced_and_full_relaxations_agree() {
        let geom = UlaGeometry::half_wavelength(4);
        let ch = small_channel(4, &[0, 3], 9);
        let zf = zf_projectors(&ch).unwrap();
        let budget = unit_budget(1.0);
        let lp0 = build_lifted(&ch, &zf, &geom, 0.5, &IsacThresholds::comm_only(), &budget).unwrap();
        let gmax = lp0.max_beam_gain();
        let th = IsacThresholds {
            gamma_th: Some(0.6 * gmax),
            phi_th: Some(0.05),
        };
        let lp = build_lifted(&ch, &zf, &geom, 0.5, &th, &budget).unwrap();
        let r = solve_sdr_with(&lp, &SolverSettings::default(), SdrBasis::Reduced).unwrap();
        let f = solve_sdr_with(&lp, &SolverSettings::default(), SdrBasis::Full).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(f.status, SolveStatus::Optimal);
        assert!((r.objective / f.objective - 1.0).abs() < 1e-4, "{} vs {}", r.objective, f.objective);
    }

    #[test]
    fn threshold_above_single_path_bound_is_infeasible() {
        let cfg = ScenarioConfig::paper_v1();
        let ch = gen_comm_channel(&cfg, &CommChannelParams::paper_v1()).unwrap();
        let zf = zf_projectors(&ch).unwrap();
        let alpha_sq = crate::channel::sensing_gain_magnitude(28e9, 225.0, 1.0).unwrap();
        let budget = LinkBudget {
            alpha_sq,
            cpi_len: cfg.cpi_len(),
            noise_power: cfg.noise_power_w,
            tx_power: cfg.tx_power_w,
        };
        let gmax = alpha_sq * cfg.cpi_len() as f64 * 64.0 * cfg.tx_power_w / cfg.noise_power_w;
        let th = IsacThresholds {
            gamma_th: Some(gmax * 2.0),
            phi_th: None,
        };
        let lp = build_lifted(&ch, &zf, &cfg.geometry(), 60f64.to_radians(), &th, &budget).unwrap();
        assert!(matches!(solve_sdr(&lp, &SolverSettings::default()), Err(Error::Infeasible { .. })));
    }

    fn paper_budget(cfg: &ScenarioConfig) -> LinkBudget {
        LinkBudget {
            alpha_sq: crate::channel::sensing_gain_magnitude(cfg.carrier_freq_hz, 225.0, 1.0).unwrap(),
            cpi_len: cfg.cpi_len(),
            noise_power: cfg.noise_power_w,
            tx_power: cfg.tx_power_w,
        }
    }

    fn single_subpath_channel(cfg: &ScenarioConfig, delays: &[usize], aods_deg: &[f64]) -> MultipathChannel {
        let amp = (crate::channel::free_space_pathloss(cfg.wavelength(), 100.0) / delays.len() as f64).sqrt();
        let specs: Vec<PathSpec> = delays
            .iter()
            .zip(aods_deg)
            .map(|(&d, &aod)| PathSpec {
                delay_taps: d,
                beta: C64::from_polar(amp, 0.3 * d as f64),
                aods_rad: vec![aod.to_radians()],
                phases_rad: vec![0.0],
            })
            .collect();
        MultipathChannel::from_subpaths(&cfg.geometry(), &specs).unwrap()
    }

    fn assert_closure(ch: &MultipathChannel, res: &IsacBeamformingResult, cfg: &ScenarioConfig, th: &IsacThresholds) {
        assert!(res.bf.total_power() <= cfg.tx_power_w * (1.0 + 1e-8));
        if let Some(g) = th.gamma_th {
            assert!(res.sensing_snr >= g * (1.0 - 1e-6), "{} < {}", res.sensing_snr, g);
            if let Some(phi) = th.phi_th {
                // the ISR constraint in lifted form implies the ratio form
                assert!(res.isr <= phi * (1.0 + 1e-6), "{} dB", lin_to_db(res.isr));
            }
        }
        assert!(res.comm_snr * cfg.noise_power_w <= res.sdr_objective * (1.0 + 1e-6));
        for (l, f) in res.bf.vectors().iter().enumerate() {
            for (lp, p) in ch.paths().iter().enumerate() {
                if lp != l {
                    assert!(p.gain.dotc(f).norm() <= 1e-6 * p.gain.norm() * f.norm().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn isac_design_on_paper_scenario() {
        let cfg = ScenarioConfig::paper_v1();
        let budget = paper_budget(&cfg);
        let ch = single_subpath_channel(&cfg, &[7, 18, 11], &[-35.0, 15.0, 27.0]);
        let mut prev = f64::INFINITY;
        for phi in [-5.0, -20.0, -40.0] {
            let th = IsacThresholds::from_db(Some(15.0), Some(phi));
            let res = design_isac_beamformer(&ch, &cfg.geometry(), 60f64.to_radians(), &th, &budget, &sdr_settings(), 200, 3, &[]).unwrap();
            assert_closure(&ch, &res, &cfg, &th);
            assert_ne!(res.recovery, Recovery::Failed);
            assert!(res.comm_snr <= prev * (1.0 + 1e-6));
            prev = res.comm_snr;
            let json: serde_json::Value = serde_json::from_str(&res.report_json()).unwrap();
            assert!(json["comm_snr"].as_f64().unwrap() > 0.0);
            assert!(json["recovery"].is_string());
        }
    }

    #[test]
    fn random_channels_stay_feasible() {
        let cfg = ScenarioConfig::paper_v1();
        let budget = paper_budget(&cfg);
        for seed in 0..8 {
            let ch = crate::channel::gen_comm_channel_with(&cfg, &CommChannelParams::paper_v1(), &mut trial_rng(11, seed)).unwrap();
            for (g, phi) in [(5.0, -40.0), (15.0, -20.0), (20.0, -40.0)] {
                let th = IsacThresholds::from_db(Some(g), Some(phi));
                let res = design_isac_beamformer(&ch, &cfg.geometry(), 60f64.to_radians(), &th, &budget, &sdr_settings(), 200, seed, &[]).unwrap();
                assert_closure(&ch, &res, &cfg, &th);
                assert!(res.comm_snr * cfg.noise_power_w >= 0.5 * res.sdr_objective);
            }
        }
    }

    #[test]
    fn sensing_path_candidate_has_no_isr() {
        let cfg = ScenarioConfig::paper_v1();
        let budget = paper_budget(&cfg);
        let ch = single_subpath_channel(&cfg, &[35, 39, 37], &[-20.0, 5.0, 40.0]);
        let zf = zf_projectors(&ch).unwrap();
        let th = IsacThresholds::from_db(Some(10.0), Some(-40.0));
        let lp = build_lifted(&ch, &zf, &cfg.geometry(), 60f64.to_radians(), &th, &budget).unwrap();
        let gt = lp.gamma_tilde.unwrap();
        for l in 0..3 {
            let b = sensing_path_candidate(&lp, l).unwrap();
            assert!((b.norm_squared() / cfg.tx_power_w - 1.0).abs() < 1e-12);
            let bf = lp.beamformers(&b).unwrap();
            let a = lp.steering();
            assert!((bf.beam_gain(a) / gt - 1.0).abs() < 1e-9 || bf.beam_gain(a) > gt);
            assert!(isr(&bf, a, 4).unwrap() < 1e-20);
            // brute force over unit vectors in span{Q_l a, w} on a (φ, ψ) grid
            let m = lp.num_antennas;
            let mut c = CVector::zeros(3 * m);
            c.rows_mut(l * m, m).copy_from(&lp.qa[l]);
            let mut w = CVector::zeros(3 * m);
            for j in 0..3 {
                let mut hj = lp.qh[j].clone();
                if j != l {
                    let qa = &lp.qa[j];
                    hj -= qa * (qa.dotc(&hj) / qa.norm_squared());
                }
                w.rows_mut(j * m, m).copy_from(&hj);
            }
            let e1 = c.unscale(c.norm());
            let r = &w - &e1 * e1.dotc(&w);
            let e2 = r.unscale(r.norm());
            let mut grid_best: f64 = 0.0;
            for i in 0..=400 {
                let phi = i as f64 / 400.0 * std::f64::consts::FRAC_PI_2;
                for k in 0..64 {
                    let psi = k as f64 / 64.0 * std::f64::consts::TAU;
                    let trial = (&e1 * C64::new(phi.cos(), 0.0) + &e2 * C64::from_polar(phi.sin(), psi)) * C64::new(cfg.tx_power_w.sqrt(), 0.0);
                    let blocks = || (0..3).map(|j| trial.rows(j * m, m));
                    let sens: f64 = blocks().map(|t| a.dotc(&t).norm_sqr()).sum();
                    if sens >= gt {
                        let g: C64 = blocks().zip(ch.paths()).map(|(t, p)| p.gain.dotc(&t)).sum();
                        grid_best = grid_best.max(g.norm_sqr());
                    }
                }
            }
            let best = lp.objective(&b);
            assert!(best >= grid_best * (1.0 - 1e-9));
            assert!(best <= grid_best * (1.0 + 1e-2));
        }
        assert!(sensing_path_candidate(&lp, 3).is_none());
    }

    #[test]
    fn warm_start_is_used_when_better() {
        let cfg = ScenarioConfig::paper_v1();
        let budget = paper_budget(&cfg);
        let ch = single_subpath_channel(&cfg, &[7, 18, 11], &[-35.0, 15.0, 27.0]);
        let geom = cfg.geometry();
        let theta = 60f64.to_radians();
        let strict = IsacThresholds::from_db(Some(15.0), Some(-40.0));
        let first = design_isac_beamformer(&ch, &geom, theta, &strict, &budget, &sdr_settings(), 20, 1, &[]).unwrap();
        // with no random draws the relaxed candidates are the eigenvector and
        // the sensing-path beams; a solution of a stricter problem is also
        // feasible for a looser one
        let loose = IsacThresholds::from_db(Some(10.0), Some(-40.0));
        let res = design_isac_beamformer(&ch, &geom, theta, &loose, &budget, &sdr_settings(), 0, 1, std::slice::from_ref(&first.bf)).unwrap();
        assert!(res.comm_snr >= first.comm_snr * (1.0 - 1e-9));
        let wrong = BeamformerSet::new(vec![CVector::zeros(4)], vec![0]).unwrap();
        let zf = zf_projectors(&ch).unwrap();
        let lp = build_lifted(&ch, &zf, &geom, theta, &loose, &budget).unwrap();
        let sdr = solve_sdr(&lp, &sdr_settings()).unwrap();
        assert!(matches!(rank_reduce_with(&lp, &sdr, &budget, 0, 1, &[wrong]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rank_one_relaxation_uses_leading_eigvec() {
        let cfg = ScenarioConfig::paper_v1();
        let budget = paper_budget(&cfg);
        let ch = single_subpath_channel(&cfg, &[7, 18, 11], &[-35.0, 15.0, 27.0]);
        let zf = zf_projectors(&ch).unwrap();
        let th = IsacThresholds::from_db(Some(10.0), None);
        let lp = build_lifted(&ch, &zf, &cfg.geometry(), 60f64.to_radians(), &th, &budget).unwrap();
        let sdr = solve_sdr(&lp, &sdr_settings()).unwrap();
        let res = rank_reduce(&lp, &sdr, &budget, 200, 5).unwrap();
        assert!(res.rank_gap < 1e-6);
        assert_eq!(res.recovery, Recovery::LeadingEigvec);
        assert!((res.comm_snr * cfg.noise_power_w / sdr.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rank_reduce_is_deterministic() {
        let cfg = ScenarioConfig::paper_v1();
        let budget = paper_budget(&cfg);
        let ch = single_subpath_channel(&cfg, &[35, 39, 37], &[-20.0, 5.0, 40.0]);
        let th = IsacThresholds::from_db(Some(15.0), Some(-20.0));
        let run = || design_isac_beamformer(&ch, &cfg.geometry(), 1.0, &th, &budget, &sdr_settings(), 50, 9, &[]).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn first_path_pattern_nulls_other_paths() {
        let cfg = ScenarioConfig::paper_v1();
        let budget = paper_budget(&cfg);
        let geom = cfg.geometry();
        let mut rng = seeded(4);
        for _ in 0..10 {
            let aods: Vec<f64> = (0..3).map(|_| rand::Rng::random_range(&mut rng, -50.0..50.0)).collect();
            let ch = single_subpath_channel(&cfg, &[7, 18, 11], &aods);
            let th = IsacThresholds::from_db(Some(15.0), Some(-40.0));
            let res = design_isac_beamformer(&ch, &geom, 60f64.to_radians(), &th, &budget, &sdr_settings(), 50, 2, &[]).unwrap();
            let grid: Vec<f64> = aods.iter().map(|d| d.to_radians()).collect();
            let bp = beampattern(&res.bf, &geom, &grid).unwrap();
            let f1 = &res.bf.vectors()[0];
            let peak = (-900..=900)
                .map(|k| geom.steering_vector((k as f64 / 10.0).to_radians()).dotc(f1).norm_sqr())
                .fold(0.0, f64::max);
            for l in 1..3 {
                let v = geom.steering_vector(grid[l]).dotc(f1).norm_sqr();
                assert!(lin_to_db(v / peak) <= -30.0, "{}", lin_to_db(v / peak));
            }
            assert_eq!(bp.per_path.len(), 3);
        }
    }

    #[test]
    fn single_path_beamformer_properties() {
        let geom = UlaGeometry::half_wavelength(16);
        let bf = single_path_beamformer(&geom, 0.7, 2.0, vec![0, 3, 5]).unwrap();
        assert!((bf.total_power() - 2.0).abs() < 1e-12);
        let a = geom.steering_vector(0.7);
        assert_eq!(isr(&bf, &a, 5).unwrap(), 0.0);
        let grid: Vec<f64> = (-90..=90).map(|d| (d as f64).to_radians()).collect();
        let bp = beampattern(&bf, &geom, &grid).unwrap();
        let peak = bp.total.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((grid[peak] - 0.7).abs() < 0.6f64.to_radians());
        assert!(beampattern(&BeamformerSet::new(vec![CVector::zeros(16)], vec![0]).unwrap(), &geom, &grid).is_err());
    }

    #[test]
    fn spectral_efficiency_values() {
        assert_eq!(spectral_efficiency(0.0, 10, 10), 0.0);
        assert!((spectral_efficiency(1.0, 10, 10) - 1.0).abs() < 1e-15);
        assert!((spectral_efficiency(1e3, 99_600, 100_000) - 0.996 * 1001f64.log2()).abs() < 1e-12);
        assert!((spectral_efficiency(1e3, 99_600, 100_000) - 9.93).abs() < 0.01);
    }

    #[test]
    fn mrt_for_single_path() {
        let ch = small_channel(5, &[0], 4);
        let zf = zf_projectors(&ch).unwrap();
        let bf = comm_only_beamformer(&ch, &zf, 3.0).unwrap();
        let h = &ch.paths()[0].gain;
        let expect = h * C64::new((3.0 / h.norm_squared()).sqrt(), 0.0);
        assert!((&bf.vectors()[0] - expect).norm() < 1e-12);
        assert!((comm_snr(&ch, &bf, 0.5) - 3.0 * h.norm_squared() / 0.5).abs() < 1e-9);
    }
}

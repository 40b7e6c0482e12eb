//! Brute-force reference dynamics in a truncated Fock basis.
//!
//! Everything the covariance pipeline computes can be cross-checked here
//! without any Gaussian assumption: the full state is propagated in a
//! D-dimensional number basis, either as an amplitude vector (closed,
//! pure runs) or as a density matrix under the thermal Lindblad generator.
//! The Hamiltonian H = w a†a - g² w/4 (a + a†)² couples |n> only to
//! |n ± 2>, and the dissipators shift both indices by one, so the
//! right-hand side is evaluated band by band in O(D²) rather than through
//! dense D³ matrix products.
//!
//! The same fixed-step fourth-order scheme as the covariance propagator is
//! used, with substeps aligned to the ramp kinks. Convergence in the
//! truncation is policed by a tail test: if the top 10% of levels ever hold
//! more than 1e-8 of the population, the run is rejected with a suggestion
//! to double D.
//!
//! Fidelities between two reference states use
//! F = Tr sqrt(sqrt(rho) sigma sqrt(rho)), with the Hermitian square roots
//! obtained from the real symmetric doubling [[A, -B], [B, A]] of
//! rho = A + iB, so only a real symmetric eigensolver is needed. The
//! doubled spectrum repeats each eigenvalue twice; trace functionals carry
//! a compensating factor 1/2.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::CovarianceState;
use crate::propagator::NoiseParams;
use crate::protocol::ProtocolSchedule;

/// Smallest accepted truncation.
pub const MIN_DIM: usize = 16;
/// Population allowed in the top 10% of levels before a run counts as
/// non-converged.
pub const TAIL_TOL: f64 = 1e-8;

/// Default integration step for reference runs, tau/20000: the generator is
/// stiffer than the 2x2 covariance flow (its spectral radius grows with D).
pub fn default_step(tau: f64) -> f64 {
    tau / 20_000.0
}

#[derive(Debug, Clone)]
enum FockData {
    Pure(DVector<Complex64>),
    Mixed(DMatrix<Complex64>),
}

/// State of the mode in a truncated number basis.
#[derive(Debug, Clone)]
pub struct FockState {
    data: FockData,
}

impl FockState {
    /// |0> in a D-level truncation.
    pub fn vacuum(dim: usize) -> Result<Self> {
        Self::number_state(dim, 0)
    }

    /// Number state |n>.
    pub fn number_state(dim: usize, n: usize) -> Result<Self> {
        check_dim(dim)?;
        if n >= dim {
            return Err(Error::InvalidParameter(format!(
                "number state |{n}> does not fit a {dim}-level truncation"
            )));
        }
        let mut amps = DVector::zeros(dim);
        amps[n] = Complex64::new(1.0, 0.0);
        Ok(Self { data: FockData::Pure(amps) })
    }

    /// Thermal state with mean occupation `n_beta`, renormalized over the
    /// truncation; rejected if the truncated tail is not negligible.
    pub fn thermal(dim: usize, n_beta: f64) -> Result<Self> {
        check_dim(dim)?;
        if !n_beta.is_finite() || n_beta < 0.0 {
            return Err(Error::NegativeOccupation(n_beta));
        }
        if n_beta == 0.0 {
            return Self::vacuum(dim);
        }
        let ratio = n_beta / (n_beta + 1.0);
        let mut rho = DMatrix::zeros(dim, dim);
        let mut p = 1.0 / (n_beta + 1.0);
        let mut trace = 0.0;
        for n in 0..dim {
            rho[(n, n)] = Complex64::new(p, 0.0);
            trace += p;
            p *= ratio;
        }
        rho /= Complex64::new(trace, 0.0);
        let state = Self { data: FockData::Mixed(rho) };
        state.check_tail()?;
        Ok(state)
    }

    /// Pure state from amplitudes; the norm must already be 1 to 1e-9.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        check_dim(amps.len())?;
        let v = DVector::from_vec(amps);
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "amplitude norm {norm} is not 1 within 1e-9"
            )));
        }
        Ok(Self { data: FockData::Pure(v / Complex64::new(norm, 0.0)) })
    }

    /// Density matrix; trace must be 1 to 1e-9 and Hermiticity holds to
    /// 1e-12 per entry.
    pub fn from_density(rho: DMatrix<Complex64>) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::DimensionMismatch(rho.nrows(), rho.ncols()));
        }
        check_dim(rho.nrows())?;
        let trace_err = (trace_of(&rho) - Complex64::new(1.0, 0.0)).norm();
        if trace_err > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "density trace off by {trace_err:.3e}"
            )));
        }
        let herm = hermiticity_defect(&rho);
        if herm > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "density Hermiticity defect {herm:.3e}"
            )));
        }
        Ok(Self { data: FockData::Mixed(rho) })
    }

    pub fn dim(&self) -> usize {
        match &self.data {
            FockData::Pure(v) => v.len(),
            FockData::Mixed(m) => m.nrows(),
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, FockData::Pure(_))
    }

    /// Level populations <n|rho|n>.
    pub fn populations(&self) -> Vec<f64> {
        match &self.data {
            FockData::Pure(v) => v.iter().map(|a| a.norm_sqr()).collect(),
            FockData::Mixed(m) => (0..m.nrows()).map(|n| m[(n, n)].re).collect(),
        }
    }

    /// Mean occupation <a†a>.
    pub fn occupation(&self) -> f64 {
        self.populations()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Population of the top 10% of levels.
    pub fn tail_occupation(&self) -> f64 {
        let pops = self.populations();
        let tail = pops.len().div_ceil(10);
        pops[pops.len() - tail..].iter().sum()
    }

    fn check_tail(&self) -> Result<()> {
        let tail = self.tail_occupation();
        if tail >= TAIL_TOL {
            return Err(Error::NotConverged { tail, suggested: 2 * self.dim() });
        }
        Ok(())
    }

    /// Density-matrix view (outer product for pure states).
    pub fn density(&self) -> DMatrix<Complex64> {
        match &self.data {
            FockData::Pure(v) => v * v.adjoint(),
            FockData::Mixed(m) => m.clone(),
        }
    }

    /// First and second quadrature moments assembled into a covariance
    /// state, from <a>, <a²> and <a†a> of the ladder structure.
    pub fn covariance(&self) -> Result<CovarianceState> {
        let dim = self.dim();
        let mut e1 = Complex64::default();
        let mut e2 = Complex64::default();
        let mut nbar = 0.0;
        match &self.data {
            FockData::Pure(v) => {
                for n in 0..dim {
                    nbar += n as f64 * v[n].norm_sqr();
                    if n + 1 < dim {
                        e1 += v[n].conj() * ((n as f64 + 1.0).sqrt() * v[n + 1]);
                    }
                    if n + 2 < dim {
                        e2 += v[n].conj() * (lower2(n) * v[n + 2]);
                    }
                }
            }
            FockData::Mixed(m) => {
                for n in 0..dim {
                    nbar += n as f64 * m[(n, n)].re;
                    if n + 1 < dim {
                        e1 += (n as f64 + 1.0).sqrt() * m[(n + 1, n)];
                    }
                    if n + 2 < dim {
                        e2 += lower2(n) * m[(n + 2, n)];
                    }
                }
            }
        }
        let mx = 2.0 * e1.re;
        let mp = 2.0 * e1.im;
        let r00 = 2.0 * e2.re + 2.0 * nbar + 1.0 - mx * mx;
        let r11 = -2.0 * e2.re + 2.0 * nbar + 1.0 - mp * mp;
        let r01 = 2.0 * e2.im - mx * mp;
        CovarianceState::new(
            Matrix2::new(r00, r01, r01, r11),
            Vector2::new(mx, mp),
        )
    }

    /// <x²> for x = a + a†.
    pub fn x_moment2(&self) -> f64 {
        self.x_moments().0
    }

    /// <x⁴>.
    pub fn x_moment4(&self) -> f64 {
        self.x_moments().1
    }

    /// Wick-factorization defect <x⁴> - 3 <x²>²; zero for any zero-mean
    /// Gaussian state, so it witnesses non-Gaussianity.
    pub fn wick_defect(&self) -> f64 {
        let (m2, m4) = self.x_moments();
        m4 - 3.0 * m2 * m2
    }

    fn x_moments(&self) -> (f64, f64) {
        match &self.data {
            FockData::Pure(v) => {
                let xv = apply_x(v.as_slice());
                let xxv = apply_x(&xv);
                let m2: f64 = xv.iter().map(|z| z.norm_sqr()).sum();
                let m4: f64 = xxv.iter().map(|z| z.norm_sqr()).sum();
                (m2, m4)
            }
            FockData::Mixed(m) => {
                let z1 = x_times(m);
                let z3 = x_times(&x_times(&z1));
                (trace_x_times(&z1), trace_x_times(&z3))
            }
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < MIN_DIM {
        return Err(Error::DimensionTooSmall(dim, MIN_DIM));
    }
    Ok(())
}

/// Matrix element <n| a² |n+2> = sqrt((n+1)(n+2)).
fn lower2(n: usize) -> f64 {
    ((n as f64 + 1.0) * (n as f64 + 2.0)).sqrt()
}

fn trace_of(m: &DMatrix<Complex64>) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

fn hermiticity_defect(m: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// (x psi)_n = sqrt(n) psi_{n-1} + sqrt(n+1) psi_{n+1}.
fn apply_x(psi: &[Complex64]) -> Vec<Complex64> {
    let dim = psi.len();
    (0..dim)
        .map(|n| {
            let mut acc = Complex64::default();
            if n >= 1 {
                acc += (n as f64).sqrt() * psi[n - 1];
            }
            if n + 1 < dim {
                acc += (n as f64 + 1.0).sqrt() * psi[n + 1];
            }
            acc
        })
        .collect()
}

/// Left product x·M through the two bands of x.
fn x_times(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let dim = m.nrows();
    let mut out = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            let mut acc = Complex64::default();
            if i >= 1 {
                acc += (i as f64).sqrt() * m[(i - 1, j)];
            }
            if i + 1 < dim {
                acc += (i as f64 + 1.0).sqrt() * m[(i + 1, j)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Tr[x · M].
fn trace_x_times(m: &DMatrix<Complex64>) -> f64 {
    let dim = m.nrows();
    let mut acc = Complex64::default();
    for n in 0..dim {
        if n >= 1 {
            acc += (n as f64).sqrt() * m[(n - 1, n)];
        }
        if n + 1 < dim {
            acc += (n as f64 + 1.0).sqrt() * m[(n + 1, n)];
        }
    }
    acc.re
}

struct Generator {
    dim: usize,
    omega: f64,
    kappa: f64,
    n_th: f64,
    /// s2[n] = sqrt((n+1)(n+2)), the a² band.
    s2: Vec<f64>,
    /// sq[n] = sqrt(n).
    sq: Vec<f64>,
    /// Stand-in column for out-of-range neighbours; paired with a zero
    /// coefficient, it keeps the hot loops branch-free.
    zero_plane: Vec<f64>,
}

impl Generator {
    fn new(dim: usize, omega: f64, noise: &NoiseParams) -> Self {
        Self {
            dim,
            omega,
            kappa: noise.kappa(),
            n_th: noise.n_th(),
            s2: (0..dim).map(lower2).collect(),
            sq: (0..=dim).map(|n| (n as f64).sqrt()).collect(),
            zero_plane: vec![0.0; dim],
        }
    }

    /// -i H psi for the pure path, including the scalar -g²w/4 of the
    /// normally-ordered expansion (a global phase, kept for faithfulness).
    fn schroedinger_rhs(&self, g: f64, psi: &[Complex64], out: &mut [Complex64]) {
        let number = self.omega * (1.0 - 0.5 * g * g);
        let band = -0.25 * g * g * self.omega;
        let shift = -0.25 * g * g * self.omega;
        for n in 0..self.dim {
            let mut acc = (number * n as f64 + shift) * psi[n];
            if n + 2 < self.dim {
                acc += (band * self.s2[n]) * psi[n + 2];
            }
            if n >= 2 {
                acc += (band * self.s2[n - 2]) * psi[n - 2];
            }
            out[n] = Complex64::new(acc.im, -acc.re);
        }
    }

    /// Lindblad right-hand side on a column-major density matrix held as
    /// separate real and imaginary planes, one column per parallel task.
    ///
    /// All generator coefficients are real, so each output plane is a
    /// real-linear combination of input planes: the commutator contributes
    /// with a -i rotation (re <- im, im <- -re) and the dissipator acts
    /// plane by plane. Out-of-range neighbour columns are replaced by a
    /// zero column with a zero coefficient and the first/last two rows are
    /// peeled off, keeping the interior loops branch-free and unit-stride
    /// for vectorization.
    fn lindblad_rhs(&self, g: f64, rho: &Planes, out: &mut Planes) {
        let dim = self.dim;
        let number = self.omega * (1.0 - 0.5 * g * g);
        let band = -0.25 * g * g * self.omega;
        let down = 0.5 * self.kappa * (self.n_th + 1.0);
        let up = 0.5 * self.kappa * self.n_th;
        let dissipative = self.kappa > 0.0;
        out.re
            .par_chunks_mut(dim)
            .zip(out.im.par_chunks_mut(dim))
            .enumerate()
            .for_each(|(j, (out_re, out_im))| {
                let jf = j as f64;
                let zero = self.zero_plane.as_slice();
                fn grab_impl<'a>(
                    plane: &'a [f64],
                    zero: &'a [f64],
                    dim: usize,
                    j: usize,
                    offset: isize,
                ) -> &'a [f64] {
                    let jj = j as isize + offset;
                    if (0..dim as isize).contains(&jj) {
                        let jj = jj as usize;
                        &plane[jj * dim..(jj + 1) * dim]
                    } else {
                        zero
                    }
                }
                let col = [
                    grab_impl(&rho.re, zero, dim, j, 0),
                    grab_impl(&rho.im, zero, dim, j, 0),
                ];
                let cm1 = [
                    grab_impl(&rho.re, zero, dim, j, -1),
                    grab_impl(&rho.im, zero, dim, j, -1),
                ];
                let cp1 = [
                    grab_impl(&rho.re, zero, dim, j, 1),
                    grab_impl(&rho.im, zero, dim, j, 1),
                ];
                let cm2 = [
                    grab_impl(&rho.re, zero, dim, j, -2),
                    grab_impl(&rho.im, zero, dim, j, -2),
                ];
                let cp2 = [
                    grab_impl(&rho.re, zero, dim, j, 2),
                    grab_impl(&rho.im, zero, dim, j, 2),
                ];
                let cp2_coef = if j + 2 < dim { band * self.s2[j] } else { 0.0 };
                let cm2_coef = if j >= 2 { band * self.s2[j - 2] } else { 0.0 };
                let cp1_coef = if j + 1 < dim { 2.0 * down * self.sq[j + 1] } else { 0.0 };
                let cm1_coef = 2.0 * up * self.sq[j];
                // Decay is linear in the row index: down(i+j) + up(i+j+2).
                let decay_0 = (down + up) * jf + 2.0 * up;
                let decay_slope = down + up;

                // Commutator part of one plane at row i.
                let comm = |p: usize, i: usize| -> f64 {
                    let mut acc = number * (i as f64 - jf) * col[p][i];
                    if i + 2 < dim {
                        acc += band * self.s2[i] * col[p][i + 2];
                    }
                    if i >= 2 {
                        acc += band * self.s2[i - 2] * col[p][i - 2];
                    }
                    acc - cp2_coef * cp2[p][i] - cm2_coef * cm2[p][i]
                };
                let diss = |p: usize, i: usize| -> f64 {
                    let mut acc = -(decay_0 + decay_slope * i as f64) * col[p][i];
                    if i + 1 < dim {
                        acc += cp1_coef * self.sq[i + 1] * cp1[p][i + 1];
                    }
                    if i >= 1 {
                        acc += cm1_coef * self.sq[i] * cm1[p][i - 1];
                    }
                    acc
                };
                let edge = |i: usize, out_re: &mut [f64], out_im: &mut [f64]| {
                    let (cre, cim) = (comm(0, i), comm(1, i));
                    let (mut vre, mut vim) = (cim, -cre);
                    if dissipative {
                        vre += diss(0, i);
                        vim += diss(1, i);
                    }
                    out_re[i] = vre;
                    out_im[i] = vim;
                };

                if dim < 5 {
                    for i in 0..dim {
                        edge(i, out_re, out_im);
                    }
                    return;
                }
                for i in [0, 1, dim - 2, dim - 1] {
                    edge(i, out_re, out_im);
                }

                let (rre, rim) = (col[0], col[1]);
                // Interior rows, free of bounds checks so the loop
                // vectorizes: every index is within [0, dim) by the loop
                // range and the peeled edges.
                if dissipative {
                    let (p1re, p1im) = (cp1[0], cp1[1]);
                    let (m1re, m1im) = (cm1[0], cm1[1]);
                    let (p2re, p2im) = (cp2[0], cp2[1]);
                    let (m2re, m2im) = (cm2[0], cm2[1]);
                    let (s2, sq) = (self.s2.as_slice(), self.sq.as_slice());
                    for i in 2..dim - 2 {
                        unsafe {
                            let diag = number * (i as f64 - jf);
                            let b_i = band * *s2.get_unchecked(i);
                            let b_m = band * *s2.get_unchecked(i - 2);
                            let cre = diag * *rre.get_unchecked(i)
                                + b_i * *rre.get_unchecked(i + 2)
                                + b_m * *rre.get_unchecked(i - 2)
                                - cp2_coef * *p2re.get_unchecked(i)
                                - cm2_coef * *m2re.get_unchecked(i);
                            let cim = diag * *rim.get_unchecked(i)
                                + b_i * *rim.get_unchecked(i + 2)
                                + b_m * *rim.get_unchecked(i - 2)
                                - cp2_coef * *p2im.get_unchecked(i)
                                - cm2_coef * *m2im.get_unchecked(i);
                            let decay = decay_0 + decay_slope * i as f64;
                            let dn = cp1_coef * *sq.get_unchecked(i + 1);
                            let u = cm1_coef * *sq.get_unchecked(i);
                            let dre = dn * *p1re.get_unchecked(i + 1)
                                + u * *m1re.get_unchecked(i - 1)
                                - decay * *rre.get_unchecked(i);
                            let dim_ = dn * *p1im.get_unchecked(i + 1)
                                + u * *m1im.get_unchecked(i - 1)
                                - decay * *rim.get_unchecked(i);
                            *out_re.get_unchecked_mut(i) = cim + dre;
                            *out_im.get_unchecked_mut(i) = -cre + dim_;
                        }
                    }
                } else {
                    let (p2re, p2im) = (cp2[0], cp2[1]);
                    let (m2re, m2im) = (cm2[0], cm2[1]);
                    let s2 = self.s2.as_slice();
                    for i in 2..dim - 2 {
                        unsafe {
                            let diag = number * (i as f64 - jf);
                            let b_i = band * *s2.get_unchecked(i);
                            let b_m = band * *s2.get_unchecked(i - 2);
                            let cre = diag * *rre.get_unchecked(i)
                                + b_i * *rre.get_unchecked(i + 2)
                                + b_m * *rre.get_unchecked(i - 2)
                                - cp2_coef * *p2re.get_unchecked(i)
                                - cm2_coef * *m2re.get_unchecked(i);
                            let cim = diag * *rim.get_unchecked(i)
                                + b_i * *rim.get_unchecked(i + 2)
                                + b_m * *rim.get_unchecked(i - 2)
                                - cp2_coef * *p2im.get_unchecked(i)
                                - cm2_coef * *m2im.get_unchecked(i);
                            *out_re.get_unchecked_mut(i) = cim;
                            *out_im.get_unchecked_mut(i) = -cre;
                        }
                    }
                }
            });
    }
}

/// Substep schedule shared by both paths: integer steps per half-cycle so
/// ramp kinks land on grid points, coupling from exact step fractions.
struct Substeps {
    nsub: usize,
    h: f64,
    g_tau: f64,
    ramp: crate::protocol::RampShape,
}

impl Substeps {
    fn plan(
        schedule: &ProtocolSchedule,
        omega: f64,
        noise: &NoiseParams,
        dim: usize,
        max_step: f64,
    ) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!("omega = {omega} must be positive")));
        }
        // Explicit fourth-order stability needs h * radius <~ 2.8. The
        // commutator spectrum reaches ~w D and the thermal decay rates
        // ~kappa (2 N_th + 1) D at the top of the truncation.
        let radius = dim as f64 * (omega + noise.kappa() * (2.0 * noise.n_th() + 1.0));
        let cap = 2.0 / radius;
        if !(max_step.is_finite() && max_step > 0.0) || max_step > cap * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { step: max_step, max: cap });
        }
        let nsub = (schedule.tau() / max_step).ceil() as usize;
        Ok(Self {
            nsub,
            h: schedule.tau() / nsub as f64,
            g_tau: schedule.g_tau(),
            ramp: schedule.ramp(),
        })
    }

    fn coupling(&self, rising: bool, k: usize, frac: f64) -> f64 {
        let u = (k as f64 + frac) / self.nsub as f64;
        let phase = if rising { u } else { 1.0 - u };
        self.g_tau * self.ramp.profile(phase)
    }
}

/// Density matrix split into real and imaginary planes, column-major.
struct Planes {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Planes {
    fn from_density(rho: &DMatrix<Complex64>) -> Self {
        Self {
            re: rho.iter().map(|z| z.re).collect(),
            im: rho.iter().map(|z| z.im).collect(),
        }
    }

    fn to_density(&self, dim: usize) -> DMatrix<Complex64> {
        DMatrix::from_iterator(
            dim,
            dim,
            self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)),
        )
    }

    fn zeros(len: usize) -> Self {
        Self { re: vec![0.0; len], im: vec![0.0; len] }
    }
}

fn plane_stage(dst: &mut [f64], y: &[f64], c: f64, k: &[f64]) {
    for ((d, &yv), &kv) in dst.iter_mut().zip(y).zip(k) {
        *d = yv + c * kv;
    }
}

fn plane_combine(y: &mut [f64], h: f64, k: &[&[f64]; 4]) {
    let sixth = h / 6.0;
    for ((((v, &a), &b), &c), &d) in y.iter_mut().zip(k[0]).zip(k[1]).zip(k[2]).zip(k[3]) {
        *v += sixth * (a + 2.0 * (b + c) + d);
    }
}

fn stage_planes(dst: &mut Planes, y: &Planes, c: f64, k: &Planes) {
    plane_stage(&mut dst.re, &y.re, c, &k.re);
    plane_stage(&mut dst.im, &y.im, c, &k.im);
}

fn combine_planes(y: &mut Planes, h: f64, k1: &Planes, k2: &Planes, k3: &Planes, k4: &Planes) {
    plane_combine(&mut y.re, h, &[&k1.re, &k2.re, &k3.re, &k4.re]);
    plane_combine(&mut y.im, h, &[&k1.im, &k2.im, &k3.im, &k4.im]);
}

fn rk4_combine(y: &mut [Complex64], h: f64, k: &[&[Complex64]; 4]) {
    let sixth = h / 6.0;
    for i in 0..y.len() {
        y[i] += sixth * (k[0][i] + 2.0 * (k[1][i] + k[2][i]) + k[3][i]);
    }
}

fn stage(dst: &mut [Complex64], y: &[Complex64], c: f64, k: &[Complex64]) {
    for i in 0..y.len() {
        dst[i] = y[i] + c * k[i];
    }
}

/// Propagate a reference state through the full protocol and return the
/// state at every half-cycle boundary tau, 2 tau, ..., 2 m tau.
///
/// Closed pure runs use the Schrödinger equation on the amplitude vector;
/// everything else uses the Lindblad generator on the density matrix.
/// Each returned state has passed the truncation tail test and (for
/// density matrices) trace and Hermiticity drift checks.
pub fn evolve_sampled(
    initial: &FockState,
    schedule: &ProtocolSchedule,
    omega: f64,
    noise: &NoiseParams,
    max_step: f64,
) -> Result<Vec<(f64, FockState)>> {
    let dim = initial.dim();
    let plan = Substeps::plan(schedule, omega, noise, dim, max_step)?;
    let gen = Generator::new(dim, omega, noise);
    let halves = 2 * schedule.cycles() as usize;
    let tau = schedule.tau();

    let use_pure = noise.is_noiseless() && initial.is_pure();
    let mut snapshots = Vec::with_capacity(halves);

    if use_pure {
        let FockData::Pure(start) = &initial.data else { unreachable!() };
        let mut y: Vec<Complex64> = start.as_slice().to_vec();
        let mut k1 = vec![Complex64::default(); dim];
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let mut tmp = k1.clone();
        for half in 0..halves {
            let rising = half % 2 == 0;
            for k in 0..plan.nsub {
                let g0 = plan.coupling(rising, k, 0.0);
                let g1 = plan.coupling(rising, k, 0.5);
                let g2 = plan.coupling(rising, k, 1.0);
                gen.schroedinger_rhs(g0, &y, &mut k1);
                stage(&mut tmp, &y, 0.5 * plan.h, &k1);
                gen.schroedinger_rhs(g1, &tmp, &mut k2);
                stage(&mut tmp, &y, 0.5 * plan.h, &k2);
                gen.schroedinger_rhs(g1, &tmp, &mut k3);
                stage(&mut tmp, &y, plan.h, &k3);
                gen.schroedinger_rhs(g2, &tmp, &mut k4);
                rk4_combine(&mut y, plan.h, &[&k1, &k2, &k3, &k4]);
            }
            let t = tau * (half + 1) as f64;
            let norm_drift = (y.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs();
            if norm_drift > 1e-6 {
                return Err(Error::ConservationViolated { quantity: "norm", drift: norm_drift });
            }
            let state = FockState { data: FockData::Pure(DVector::from_vec(y.clone())) };
            state.check_tail()?;
            snapshots.push((t, state));
        }
    } else {
        let mut y = Planes::from_density(&initial.density());
        let len = dim * dim;
        let mut k1 = Planes::zeros(len);
        let mut k2 = Planes::zeros(len);
        let mut k3 = Planes::zeros(len);
        let mut k4 = Planes::zeros(len);
        let mut tmp = Planes::zeros(len);
        for half in 0..halves {
            let rising = half % 2 == 0;
            for k in 0..plan.nsub {
                let g0 = plan.coupling(rising, k, 0.0);
                let g1 = plan.coupling(rising, k, 0.5);
                let g2 = plan.coupling(rising, k, 1.0);
                gen.lindblad_rhs(g0, &y, &mut k1);
                stage_planes(&mut tmp, &y, 0.5 * plan.h, &k1);
                gen.lindblad_rhs(g1, &tmp, &mut k2);
                stage_planes(&mut tmp, &y, 0.5 * plan.h, &k2);
                gen.lindblad_rhs(g1, &tmp, &mut k3);
                stage_planes(&mut tmp, &y, plan.h, &k3);
                gen.lindblad_rhs(g2, &tmp, &mut k4);
                combine_planes(&mut y, plan.h, &k1, &k2, &k3, &k4);
            }
            let t = tau * (half + 1) as f64;
            let rho = y.to_density(dim);
            let trace_drift = (trace_of(&rho).re - 1.0).abs();
            if trace_drift > 1e-6 {
                return Err(Error::ConservationViolated { quantity: "trace", drift: trace_drift });
            }
            let herm = hermiticity_defect(&rho);
            if herm > 1e-6 {
                return Err(Error::ConservationViolated { quantity: "Hermiticity", drift: herm });
            }
            let state = FockState { data: FockData::Mixed(rho) };
            state.check_tail()?;
            snapshots.push((t, state));
        }
    }
    Ok(snapshots)
}

/// Final state of the reference propagation, at T = 2 m tau.
pub fn evolve_fock(
    initial: &FockState,
    schedule: &ProtocolSchedule,
    omega: f64,
    noise: &NoiseParams,
    max_step: f64,
) -> Result<FockState> {
    Ok(evolve_sampled(initial, schedule, omega, noise, max_step)?
        .pop()
        .expect("schedule has at least one half-cycle")
        .1)
}

/// Fisher information from the Bures distance between states prepared at
/// w - eps and w + eps: I = 4 (d_B / (2 eps))² with
/// d_B² = 2 (1 - F(rho_-, rho_+)).
pub fn bures_qfi(minus: &FockState, plus: &FockState, eps: f64) -> Result<f64> {
    if minus.dim() != plus.dim() {
        return Err(Error::DimensionMismatch(minus.dim(), plus.dim()));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    let fidelity = match (&minus.data, &plus.data) {
        (FockData::Pure(a), FockData::Pure(b)) => a.dotc(b).norm(),
        _ => uhlmann_fidelity(&minus.density(), &plus.density())?,
    }
    .min(1.0);
    Ok(2.0 * (1.0 - fidelity) / (eps * eps))
}

/// Eigen-decomposition of a Hermitian complex matrix through its real
/// symmetric doubling [[A, -B], [B, A]]. Every eigenvalue of the input
/// appears twice; columns (u; v) correspond to complex eigenvectors u + iv.
fn doubled_eigen(m: &DMatrix<Complex64>) -> (DVector<f64>, DMatrix<f64>) {
    let d = m.nrows();
    let mut big = DMatrix::<f64>::zeros(2 * d, 2 * d);
    for j in 0..d {
        for i in 0..d {
            let z = m[(i, j)];
            big[(i, j)] = z.re;
            big[(i + d, j + d)] = z.re;
            big[(i, j + d)] = -z.im;
            big[(i + d, j)] = z.im;
        }
    }
    let eigen = nalgebra::linalg::SymmetricEigen::new(big);
    (eigen.eigenvalues, eigen.eigenvectors)
}

/// Uhlmann fidelity Tr sqrt(sqrt(a) b sqrt(a)) = sum sqrt(eig(a b)).
///
/// Worked in the eigenbasis of `a` truncated to eigenvalues above ~1e-13:
/// with W the kept (doubled, weight-1/2) eigencolumns, the nonzero spectrum
/// of a·b equals that of the small Hermitian L^(1/2) Wᴴ b W L^(1/2). Taking
/// square roots only in the small problem avoids the sqrt(eps) noise a
/// full-size matrix square root injects through its null space.
fn uhlmann_fidelity(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<f64> {
    let d = a.nrows();
    let (vals, vecs) = doubled_eigen(a);
    if vals.min() < -1e-9 {
        return Err(Error::NegativeEigenvalue(vals.min()));
    }
    let cutoff = vals.max().max(0.0) * 1e-13;
    let kept: Vec<usize> = (0..2 * d).filter(|&k| vals[k] > cutoff).collect();
    if kept.is_empty() {
        return Ok(0.0);
    }
    // Columns scaled by sqrt(lambda_k / 2): the doubled spectrum carries
    // each eigenvector twice, and the half-weights make W W^H = a exactly.
    let mut w = DMatrix::<Complex64>::zeros(d, kept.len());
    for (col, &k) in kept.iter().enumerate() {
        let scale = (0.5 * vals[k]).sqrt();
        for i in 0..d {
            w[(i, col)] = Complex64::new(scale * vecs[(i, k)], scale * vecs[(i + d, k)]);
        }
    }
    let small = w.adjoint() * b * &w;
    let (svals, _) = doubled_eigen(&small);
    if svals.min() < -1e-9 {
        return Err(Error::NegativeEigenvalue(svals.min()));
    }
    Ok(0.5 * svals.iter().map(|&l| l.max(0.0).sqrt()).sum::<f64>())
}

//! Mean-field ODE for the site densities `u = (u0, u1, u2, u3)`.
//!
//! ```text
//! u0' = u2 + gamma u3 - lambda1 u0 u1 - lambda2 u0 u2
//! u1' = lambda1 u0 u1 + lambda1 u1 u3 - u1
//! u2' = lambda2 u0 u2 - u2
//! u3' = u1 - lambda1 u1 u3 - gamma u3
//! ```
//!
//! The 3 -> 1 flow is `lambda1 u1 u3`, the mass leaving state 3 in `u3'`.
//! [`Form::Literal`] instead uses `lambda1 u0 u3` in `u1'`, which does not
//! conserve total mass; its defect is `lambda1 u3 (u0 - u1)`.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    #[default]
    Corrected,
    Literal,
}

/// Rates entering the ODE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
}

impl Rates {
    pub fn new(lambda1: f64, lambda2: f64, gamma: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            gamma,
        }
    }
}

impl From<&crate::Params> for Rates {
    fn from(p: &crate::Params) -> Self {
        Self::new(p.lambda1, p.lambda2, p.gamma)
    }
}

/// Densities of free, blue, red and frozen sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState(pub [f64; 4]);

impl MeanFieldState {
    pub const EMPTY: Self = Self([1.0, 0.0, 0.0, 0.0]);
    pub const CENTRE: Self = Self([0.25; 4]);

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn in_simplex(&self, eps: f64) -> bool {
        self.0.iter().all(|&x| x >= -eps) && (self.sum() - 1.0).abs() <= 1e-10
    }

    fn vec(&self) -> Vector4<f64> {
        Vector4::from(self.0)
    }
}

pub fn rhs(u: &MeanFieldState, p: &Rates, form: Form) -> [f64; 4] {
    let [u0, u1, u2, u3] = u.0;
    let Rates {
        lambda1: l1,
        lambda2: l2,
        gamma: g,
    } = *p;
    let thaw_to_blue = match form {
        Form::Corrected => l1 * u1 * u3,
        Form::Literal => l1 * u0 * u3,
    };
    [
        u2 + g * u3 - l1 * u0 * u1 - l2 * u0 * u2,
        l1 * u0 * u1 + thaw_to_blue - u1,
        l2 * u0 * u2 - u2,
        u1 - l1 * u1 * u3 - g * u3,
    ]
}

fn norm(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Analytic Jacobian, `J[i][j] = d u_i' / d u_j`.
pub fn jacobian(u: &MeanFieldState, p: &Rates, form: Form) -> Matrix4<f64> {
    let [u0, u1, u2, u3] = u.0;
    let Rates {
        lambda1: l1,
        lambda2: l2,
        gamma: g,
    } = *p;
    let row1 = match form {
        Form::Corrected => [l1 * u1, l1 * u0 + l1 * u3 - 1.0, 0.0, l1 * u1],
        Form::Literal => [l1 * u1 + l1 * u3, l1 * u0 - 1.0, 0.0, l1 * u0],
    };
    Matrix4::new(
        -l1 * u1 - l2 * u2,
        -l1 * u0,
        1.0 - l2 * u0,
        g,
        row1[0],
        row1[1],
        row1[2],
        row1[3],
        l2 * u2,
        0.0,
        l2 * u0 - 1.0,
        0.0,
        0.0,
        1.0 - l1 * u3,
        0.0,
        -l1 * u1 - g,
    )
}

/// Jacobian of `(u1, u2, u3)` with `u0 = 1 - u1 - u2 - u3` substituted.
pub fn reduced_jacobian(u: &MeanFieldState, p: &Rates, form: Form) -> Matrix3<f64> {
    let j = jacobian(u, p, form);
    Matrix3::from_fn(|i, k| j[(i + 1, k + 1)] - j[(i + 1, 0)])
}

pub fn boundary_fixed_point_blue(p: &Rates) -> Option<MeanFieldState> {
    if !(p.lambda1 > 1.0) {
        return None;
    }
    let u1 = 1.0 - 1.0 / p.lambda1;
    let u3 = if p.gamma.is_infinite() {
        0.0
    } else {
        u1 / (p.lambda1 * u1 + p.gamma)
    };
    let u = MeanFieldState([1.0 / p.lambda1 - u3, u1, 0.0, u3]);
    debug_assert!(p.gamma.is_infinite() || norm(&rhs(&u, p, Form::Corrected)) < 1e-12);
    Some(u)
}

pub fn boundary_fixed_point_red(p: &Rates) -> Option<MeanFieldState> {
    (p.lambda2 > 1.0).then(|| MeanFieldState([1.0 / p.lambda2, 0.0, 1.0 - 1.0 / p.lambda2, 0.0]))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub in_w1: bool,
    pub in_w2: bool,
    pub coexist: bool,
}

pub fn classify_region(lambda1: f64, lambda2: f64, gamma: f64) -> Region {
    let upper = lambda1 * (lambda1 + gamma - 1.0);
    Region {
        in_w1: lambda1 > 1.0 && gamma * lambda2 < upper,
        in_w2: lambda2 > 1.0 && lambda2 > lambda1,
        coexist: lambda1 < lambda2 && lambda2 < upper / gamma,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Attracting,
    Unstable,
    Marginal,
}

pub const STABILITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub point: MeanFieldState,
    /// Real parts of the four eigenvalues of the full Jacobian, ascending.
    pub real_parts: [f64; 4],
    /// Real parts within the simplex (the full Jacobian adds an eigenvalue 0
    /// along the conserved total for the corrected form).
    pub simplex_real_parts: Vec<f64>,
    pub classification: Stability,
    pub region: Region,
}

fn sorted_real_parts<I: IntoIterator<Item = f64>>(it: I) -> Vec<f64> {
    let mut v: Vec<f64> = it.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn stability(u: &MeanFieldState, p: &Rates, form: Form) -> StabilityReport {
    let full = sorted_real_parts(
        jacobian(u, p, form)
            .complex_eigenvalues()
            .iter()
            .map(|c| c.re),
    );
    let relevant = match form {
        Form::Corrected => sorted_real_parts(
            reduced_jacobian(u, p, form)
                .complex_eigenvalues()
                .iter()
                .map(|c| c.re),
        ),
        Form::Literal => full.clone(),
    };
    let classification = if relevant.iter().any(|r| r.abs() <= STABILITY_TOL) {
        Stability::Marginal
    } else if relevant.iter().all(|&r| r < -STABILITY_TOL) {
        Stability::Attracting
    } else {
        Stability::Unstable
    };
    StabilityReport {
        point: *u,
        real_parts: [full[0], full[1], full[2], full[3]],
        simplex_real_parts: relevant,
        classification,
        region: classify_region(p.lambda1, p.lambda2, p.gamma),
    }
}

/// Growth rate of red invading the blue equilibrium: the `u2` row of the
/// Jacobian at `ubar` has only its diagonal entry, so this is an eigenvalue
/// whose eigenvector leaves the face `u2 = 0`.
pub fn red_invasion_rate(ubar: &MeanFieldState, p: &Rates) -> f64 {
    p.lambda2 * ubar.0[0] - 1.0
}

/// Growth rate of blue invading the red equilibrium.
pub fn blue_invasion_rate(vbar: &MeanFieldState, p: &Rates) -> f64 {
    p.lambda1 * (vbar.0[0] + vbar.0[3]) - 1.0
}

const NEWTON_ITERS: usize = 200;
const INTERIOR_RESIDUAL: f64 = 1e-10;

fn lift(x: &Vector3<f64>) -> MeanFieldState {
    MeanFieldState([1.0 - x.sum(), x[0], x[1], x[2]])
}

fn reduced_rhs(x: &Vector3<f64>, p: &Rates) -> Vector3<f64> {
    let f = rhs(&lift(x), p, Form::Corrected);
    Vector3::new(f[1], f[2], f[3])
}

/// Damped Newton on `g`; returns the root if the residual drops below tolerance.
fn damped_newton(
    mut x: Vector3<f64>,
    g: impl Fn(&Vector3<f64>) -> Vector3<f64>,
    jac: impl Fn(&Vector3<f64>) -> Matrix3<f64>,
) -> Option<Vector3<f64>> {
    let mut fx = g(&x);
    for _ in 0..NEWTON_ITERS {
        if fx.norm() < 1e-14 {
            break;
        }
        let dx = jac(&x).lu().solve(&(-fx))?;
        let mut step = 1.0;
        loop {
            let trial = x + dx * step;
            let ft = g(&trial);
            if ft.norm() < fx.norm() * (1.0 - 1e-4 * step) || step < 1e-6 {
                x = trial;
                fx = ft;
                break;
            }
            step *= 0.5;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    Some(x)
}

/// Interior equilibrium of the corrected system, if one exists.
///
/// `u2 > 0` forces `lambda2 u0 = 1` and `u1 > 0` forces
/// `lambda1 (u0 + u3) = 1`; the frozen balance then fixes `u1`. This
/// candidate is the only possible interior root. Its coordinates are
/// written with the sign-deciding factors explicit, so points exactly on
/// the region boundary come out as zero rather than as rounding noise. The
/// candidate is then polished by damped Newton on the reduced system and
/// verified by substitution.
pub fn interior_fixed_point(p: &Rates) -> Result<Option<MeanFieldState>> {
    let Rates {
        lambda1: l1,
        lambda2: l2,
        gamma: gm,
    } = *p;
    if l1 <= 0.0 || l2 <= 0.0 {
        return Ok(None);
    }
    let u = MeanFieldState([
        1.0 / l2,
        gm * (l2 - l1) / (l1 * l1),
        (l1 * (l1 + gm - 1.0) - gm * l2) / (l1 * l1),
        (l2 - l1) / (l1 * l2),
    ]);
    if u.0.iter().any(|&v| !(v > 0.0)) {
        return Ok(None);
    }
    let jac = |x: &Vector3<f64>| reduced_jacobian(&lift(x), p, Form::Corrected);
    let g = |x: &Vector3<f64>| reduced_rhs(x, p);
    match damped_newton(Vector3::new(u.0[1], u.0[2], u.0[3]), g, jac) {
        Some(x) => {
            let w = lift(&x);
            let ok = w.0.iter().all(|&v| v > 0.0)
                && norm(&rhs(&w, p, Form::Corrected)) < INTERIOR_RESIDUAL;
            if ok {
                Ok(Some(w))
            } else {
                Err(Error::NoConvergence)
            }
        }
        None => Err(Error::NoConvergence),
    }
}

/// Output of [`integrate`].
#[derive(Clone, Debug)]
pub struct Integration {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    /// Max-norm difference at the final time between step `dt` and `dt / 2`.
    pub error_estimate: f64,
}

impl Integration {
    pub fn last(&self) -> MeanFieldState {
        *self
            .states
            .last()
            .expect("integration stores the initial state")
    }
}

fn rk4_step(u: &Vector4<f64>, p: &Rates, form: Form, dt: f64) -> Vector4<f64> {
    let f =
        |v: &Vector4<f64>| Vector4::from(rhs(&MeanFieldState([v[0], v[1], v[2], v[3]]), p, form));
    let k1 = f(u);
    let k2 = f(&(u + k1 * (dt / 2.0)));
    let k3 = f(&(u + k2 * (dt / 2.0)));
    let k4 = f(&(u + k3 * dt));
    u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn rk4_path(
    start: &MeanFieldState,
    p: &Rates,
    form: Form,
    dt: f64,
    steps: usize,
    mut visit: impl FnMut(usize, &Vector4<f64>),
) -> Result<Vector4<f64>> {
    let mut u = start.vec();
    visit(0, &u);
    for i in 1..=steps {
        u = rk4_step(&u, p, form, dt);
        if u.iter().any(|x| !(x.abs() <= 10.0)) {
            return Err(Error::Divergence(i as f64 * dt));
        }
        visit(i, &u);
    }
    Ok(u)
}

/// Fixed-step RK4 from `start` to `t_end`, storing every `record_every`-th step.
pub fn integrate(
    start: &MeanFieldState,
    p: &Rates,
    form: Form,
    dt: f64,
    t_end: f64,
    record_every: usize,
) -> Result<Integration> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::param("dt", "dt must be > 0 and the end time >= 0"));
    }
    let steps = (t_end / dt).round() as usize;
    let every = record_every.max(1);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let end = rk4_path(start, p, form, dt, steps, |i, u| {
        if i % every == 0 || i == steps {
            times.push(i as f64 * dt);
            states.push(MeanFieldState([u[0], u[1], u[2], u[3]]));
        }
    })?;
    let half = rk4_path(start, p, form, dt / 2.0, 2 * steps, |_, _| {})?;
    Ok(Integration {
        times,
        states,
        error_estimate: (end - half).amax(),
    })
}

/// One row of a phase map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhasePoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub region: Region,
    pub ubar_exists: bool,
    pub vbar_exists: bool,
    pub interior_exists: bool,
}

pub fn phase_point(lambda1: f64, lambda2: f64, gamma: f64) -> Result<PhasePoint> {
    let r = Rates::new(lambda1, lambda2, gamma);
    Ok(PhasePoint {
        lambda1,
        lambda2,
        gamma,
        region: classify_region(lambda1, lambda2, gamma),
        ubar_exists: boundary_fixed_point_blue(&r).is_some(),
        vbar_exists: boundary_fixed_point_red(&r).is_some(),
        interior_exists: interior_fixed_point(&r)?.is_some(),
    })
}

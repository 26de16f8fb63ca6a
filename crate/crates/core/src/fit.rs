//! Least-squares fits of unicity against population size.
//!
//! Every form is `a·f(x; γ) + b`, linear in `a` and `b`. For each starting
//! γ on a small grid, `a` and `b` are solved in closed form and the triple
//! is then refined with a Levenberg-Marquardt iteration. The best converged
//! start wins.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 500;
const MAX_DAMPING: f64 = 1e16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitForm {
    /// a·x^γ + b
    PowerLaw,
    /// a·exp(x^γ) + b
    StretchedExp,
    /// a·exp(γ·x) + b
    Exponential,
    /// a·x + b
    Linear,
}

impl FitForm {
    pub const ALL: [FitForm; 4] = [
        FitForm::PowerLaw,
        FitForm::StretchedExp,
        FitForm::Exponential,
        FitForm::Linear,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FitForm::PowerLaw => "power_law",
            FitForm::StretchedExp => "stretched_exp",
            FitForm::Exponential => "exponential",
            FitForm::Linear => "linear",
        }
    }

    pub fn formula(&self) -> &'static str {
        match self {
            FitForm::PowerLaw => "a*x^gamma + b",
            FitForm::StretchedExp => "a*exp(x^gamma) + b",
            FitForm::Exponential => "a*exp(gamma*x) + b",
            FitForm::Linear => "a*x + b",
        }
    }

    pub fn has_gamma(&self) -> bool {
        !matches!(self, FitForm::Linear)
    }

    fn min_points(&self) -> usize {
        if self.has_gamma() {
            4
        } else {
            3
        }
    }

    fn needs_positive_x(&self) -> bool {
        matches!(self, FitForm::PowerLaw | FitForm::StretchedExp)
    }

    fn gamma_grid(&self) -> &'static [f64] {
        match self {
            FitForm::PowerLaw | FitForm::StretchedExp => &[0.25, 0.5, 1.0, 2.0],
            FitForm::Exponential => &[-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0],
            FitForm::Linear => &[1.0],
        }
    }

    /// f(x; γ)
    pub fn basis(&self, x: f64, gamma: f64) -> f64 {
        match self {
            FitForm::PowerLaw => x.powf(gamma),
            FitForm::StretchedExp => x.powf(gamma).exp(),
            FitForm::Exponential => (gamma * x).exp(),
            FitForm::Linear => x,
        }
    }

    /// ∂f/∂γ
    fn basis_dgamma(&self, x: f64, gamma: f64) -> f64 {
        match self {
            FitForm::PowerLaw => x.powf(gamma) * x.ln(),
            FitForm::StretchedExp => {
                let p = x.powf(gamma);
                p.exp() * p * x.ln()
            }
            FitForm::Exponential => x * (gamma * x).exp(),
            FitForm::Linear => 0.0,
        }
    }
}

impl fmt::Display for FitForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitForm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "power_law" | "power" | "powerlaw" => Ok(FitForm::PowerLaw),
            "stretched_exp" | "stretched" | "stretched_exponential" => Ok(FitForm::StretchedExp),
            "exponential" | "exp" => Ok(FitForm::Exponential),
            "linear" => Ok(FitForm::Linear),
            other => Err(format!(
                "unknown fit form {other:?} (expected power_law, stretched_exp, exponential or linear)"
            )),
        }
    }
}

/// Fitted parameters of one functional form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub form: FitForm,
    pub a: f64,
    pub b: f64,
    /// `None` for [`FitForm::Linear`].
    pub gamma: Option<f64>,
    /// 1 − SS_res/SS_tot. When SS_tot = 0 this is 1 for an exact fit and
    /// −∞ otherwise; −∞ serializes as `null` and marks a non-fit.
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_as_neg_inf")]
    pub pseudo_r2: f64,
    pub ss_res: f64,
    pub ss_tot: f64,
    pub points: usize,
    pub weighted: bool,
    pub iterations: usize,
    /// What one unit of x means, e.g. "millions of users".
    pub x_unit: String,
    /// Raw population size per unit of x.
    pub x_scale: f64,
}

impl FitResult {
    pub fn evaluate(&self, x: f64) -> f64 {
        if self.a == 0.0 {
            return self.b;
        }
        self.a * self.form.basis(x, self.gamma.unwrap_or(1.0)) + self.b
    }

    pub fn is_fit(&self) -> bool {
        self.pseudo_r2.is_finite()
    }
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn null_as_neg_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// A fitted value at `x`, clamped to the unit interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub form: FitForm,
    pub x: f64,
    /// Unclamped value; infinite when the basis overflows, which
    /// serializes as `null` and reads back as NaN.
    #[serde(deserialize_with = "null_as_nan")]
    pub raw: f64,
    pub value: f64,
    pub clamped: bool,
}

/// Evaluates `fit` at `x` (in the fit's x units) and clamps to [0, 1].
pub fn extrapolate(fit: &FitResult, x: f64) -> Extrapolation {
    let raw = fit.evaluate(x);
    let value = raw.clamp(0.0, 1.0);
    Extrapolation {
        form: fit.form,
        x,
        raw,
        value,
        clamped: value != raw,
    }
}

/// Fits `form` to the points `(xs[i], ys[i])`, optionally weighting each
/// squared residual by `weights[i]`.
pub fn fit_points(xs: &[f64], ys: &[f64], weights: Option<&[f64]>, form: FitForm) -> Result<FitResult> {
    assert_eq!(xs.len(), ys.len(), "x and y lengths differ");
    if let Some(w) = weights {
        assert_eq!(w.len(), xs.len(), "weight length differs");
    }
    let mut distinct: Vec<f64> = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < form.min_points() {
        return Err(Error::InsufficientPoints {
            form,
            needed: form.min_points(),
            found: distinct.len(),
        });
    }
    if form.needs_positive_x() && xs.iter().any(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::NonPositiveX { form });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("fit data must be finite".into()));
    }
    let ones = vec![1.0; xs.len()];
    let problem = Problem {
        xs,
        ys,
        w: weights.unwrap_or(&ones),
        form,
    };
    let ss_tot = problem.ss_tot();

    let mut best: Option<(Start, bool)> = None;
    for &g0 in form.gamma_grid() {
        let (a0, b0) = problem.linear_solve(g0);
        let start = if form.has_gamma() {
            problem.levenberg_marquardt(a0, b0, g0)
        } else {
            let ss = problem.ss_res(a0, b0, g0);
            Start {
                a: a0,
                b: b0,
                gamma: g0,
                ss,
                iterations: 0,
                converged: true,
            }
        };
        if !start.ss.is_finite() {
            continue;
        }
        let converged = start.converged;
        let better = match &best {
            None => true,
            Some((b, b_conv)) => (converged && !b_conv) || (converged == *b_conv && start.ss < b.ss),
        };
        if better {
            best = Some((start, converged));
        }
    }
    let Some((s, converged)) = best else {
        return Err(Error::InvalidParameter(format!(
            "{form} fit produced no finite candidate"
        )));
    };

    let pseudo_r2 = if ss_tot == 0.0 {
        if s.ss == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - s.ss / ss_tot
    };
    let result = FitResult {
        form,
        a: s.a,
        b: s.b,
        gamma: form.has_gamma().then_some(s.gamma),
        pseudo_r2,
        ss_res: s.ss,
        ss_tot,
        points: xs.len(),
        weighted: weights.is_some(),
        iterations: s.iterations,
        x_unit: "x".into(),
        x_scale: 1.0,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::NonConvergence {
            form,
            residual: s.ss,
            best: Box::new(result),
        })
    }
}

struct Start {
    a: f64,
    b: f64,
    gamma: f64,
    ss: f64,
    iterations: usize,
    converged: bool,
}

struct Problem<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    w: &'a [f64],
    form: FitForm,
}

impl Problem<'_> {
    fn weighted_mean(&self, v: impl Iterator<Item = f64>) -> f64 {
        let sw: f64 = self.w.iter().sum();
        v.zip(self.w).map(|(v, w)| v * w).sum::<f64>() / sw
    }

    fn y_constant(&self) -> bool {
        self.ys.iter().all(|&y| y == self.ys[0])
    }

    fn ss_tot(&self) -> f64 {
        if self.y_constant() {
            return 0.0;
        }
        let my = self.weighted_mean(self.ys.iter().copied());
        self.ys.iter().zip(self.w).map(|(y, w)| w * (y - my).powi(2)).sum()
    }

    fn ss_res(&self, a: f64, b: f64, gamma: f64) -> f64 {
        self.xs
            .iter()
            .zip(self.ys)
            .zip(self.w)
            .map(|((&x, &y), &w)| w * (y - a * self.form.basis(x, gamma) - b).powi(2))
            .sum()
    }

    /// Best (a, b) for fixed γ by weighted simple regression on f(x; γ).
    fn linear_solve(&self, gamma: f64) -> (f64, f64) {
        if self.y_constant() {
            return (0.0, self.ys[0]);
        }
        let f: Vec<f64> = self.xs.iter().map(|&x| self.form.basis(x, gamma)).collect();
        let mf = self.weighted_mean(f.iter().copied());
        let my = self.weighted_mean(self.ys.iter().copied());
        let (mut sff, mut sfy) = (0.0, 0.0);
        for ((fi, yi), wi) in f.iter().zip(self.ys).zip(self.w) {
            sff += wi * (fi - mf) * (fi - mf);
            sfy += wi * (fi - mf) * (yi - my);
        }
        if sff == 0.0 || !sff.is_finite() {
            return (0.0, my);
        }
        let a = sfy / sff;
        (a, my - a * mf)
    }

    fn levenberg_marquardt(&self, a: f64, b: f64, gamma: f64) -> Start {
        let mut p = [a, b, gamma];
        let mut ss = self.ss_res(p[0], p[1], p[2]);
        let scale: f64 = self
            .ys
            .iter()
            .zip(self.w)
            .map(|(y, w)| w * y * y)
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        let mut lambda = 1e-3;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < MAX_ITERATIONS {
            if ss <= 1e-30 * scale {
                converged = true;
                break;
            }
            iterations += 1;
            // Normal equations JᵀWJ δ = JᵀW r for residual r = y − model.
            let mut jtj = [[0.0f64; 3]; 3];
            let mut jtr = [0.0f64; 3];
            for ((&x, &y), &w) in self.xs.iter().zip(self.ys).zip(self.w) {
                let f = self.form.basis(x, p[2]);
                let row = [f, 1.0, p[0] * self.form.basis_dgamma(x, p[2])];
                let r = y - p[0] * f - p[1];
                for i in 0..3 {
                    jtr[i] += w * row[i] * r;
                    for j in 0..3 {
                        jtj[i][j] += w * row[i] * row[j];
                    }
                }
            }
            let gradient = jtr.iter().map(|g| g.abs()).fold(0.0, f64::max);
            if gradient == 0.0 {
                converged = true;
                break;
            }
            let mut accepted = false;
            while lambda <= MAX_DAMPING {
                let mut m = jtj;
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] += lambda * jtj[i][i].max(1e-300);
                }
                let Some(delta) = solve3(m, jtr) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]];
                let trial_ss = self.ss_res(trial[0], trial[1], trial[2]);
                if trial_ss.is_finite() && trial_ss <= ss {
                    let reduction = ss - trial_ss;
                    let step = (0..3)
                        .map(|i| delta[i].abs() / (p[i].abs() + 1e-12))
                        .fold(0.0, f64::max);
                    p = trial;
                    ss = trial_ss;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if reduction <= 1e-15 * ss.max(1e-300) && step < 1e-12 {
                        converged = true;
                    }
                    break;
                }
                lambda *= 10.0;
            }
            // No damped step lowers the residual: a minimum at working precision.
            if !accepted || converged {
                converged = true;
                break;
            }
        }
        if converged {
            // Re-solve (a, b) exactly at the final γ.
            let (a, b) = self.linear_solve(p[2]);
            let polished = self.ss_res(a, b, p[2]);
            if polished <= ss {
                p[0] = a;
                p[1] = b;
                ss = polished;
            }
        }
        Start {
            a: p[0],
            b: p[1],
            gamma: p[2],
            ss,
            iterations,
            converged,
        }
    }
}

/// Solves a 3×3 system by Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 || !m[pivot][col].is_finite() {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let factor = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (cell, p) in m[row].iter_mut().zip(pivot_row).skip(col) {
                *cell -= factor * p;
            }
            v[row] -= factor * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - tail) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (1..=35).map(|i| i as f64 / 10.0).collect()
    }

    #[test]
    fn table_row_one_at_unit_x() {
        let fit = FitResult {
            form: FitForm::PowerLaw,
            a: -0.031,
            b: 0.989,
            gamma: Some(0.504),
            pseudo_r2: 0.939,
            ss_res: 0.0,
            ss_tot: 0.0,
            points: 0,
            weighted: false,
            iterations: 0,
            x_unit: "millions of users".into(),
            x_scale: 1e6,
        };
        assert!((extrapolate(&fit, 1.0).value - 0.958).abs() < 1e-12);
        let linear = FitResult {
            form: FitForm::Linear,
            a: -0.014,
            b: 0.975,
            gamma: None,
            ..fit
        };
        assert!((extrapolate(&linear, 0.0).value - 0.975).abs() < 1e-15);
    }

    #[test]
    fn exact_linear() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let fit = fit_points(&xs, &ys, None, FitForm::Linear).unwrap();
        assert!((fit.a - 2.0).abs() < 1e-12 && (fit.b - 1.0).abs() < 1e-12);
        assert!((fit.pseudo_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_data() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [0.3; 4];
        let fit = fit_points(&xs, &ys, None, FitForm::Linear).unwrap();
        assert_eq!((fit.a, fit.b, fit.pseudo_r2), (0.0, 0.3, 1.0));
        for form in FitForm::ALL {
            let fit = fit_points(&xs, &ys, None, form).unwrap();
            assert_eq!(fit.pseudo_r2, 1.0, "{form}");
        }
    }

    #[test]
    fn power_law_recovery() {
        let xs = grid();
        let ys: Vec<f64> = xs.iter().map(|x| -0.031 * x.powf(0.504) + 0.989).collect();
        let fit = fit_points(&xs, &ys, None, FitForm::PowerLaw).unwrap();
        assert!((fit.a + 0.031).abs() < 1e-4 * 0.031, "{fit:?}");
        assert!((fit.b - 0.989).abs() < 1e-4 * 0.989);
        assert!((fit.gamma.unwrap() - 0.504).abs() < 1e-4 * 0.504);
        assert!(fit.pseudo_r2 > 1.0 - 1e-9);
    }

    #[test]
    fn too_few_points_and_bad_x() {
        assert!(matches!(
            fit_points(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], None, FitForm::PowerLaw),
            Err(Error::InsufficientPoints { needed: 4, .. })
        ));
        assert!(matches!(
            fit_points(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0], None, FitForm::Linear),
            Err(Error::InsufficientPoints {
                needed: 3,
                found: 2,
                ..
            })
        ));
        assert!(matches!(
            fit_points(&[0.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0], None, FitForm::PowerLaw),
            Err(Error::NonPositiveX { .. })
        ));
    }

    #[test]
    fn clamping_is_reported() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [0.9, 0.8, 0.7];
        let fit = fit_points(&xs, &ys, None, FitForm::Linear).unwrap();
        let e = extrapolate(&fit, 20.0);
        assert!(e.clamped && e.value == 0.0 && e.raw < 0.0);
        assert!(!extrapolate(&fit, 2.0).clamped);
    }

    #[test]
    fn non_fit_serializes_as_null() {
        let xs = [1.0, 2.0, 3.0];
        let fit = fit_points(&xs, &[0.5, 0.6, 0.7], None, FitForm::Linear).unwrap();
        let mut broken = fit.clone();
        broken.pseudo_r2 = f64::NEG_INFINITY;
        let json = serde_json::to_value(&broken).unwrap();
        assert!(json["pseudo_r2"].is_null());
        let back: FitResult = serde_json::from_value(json).unwrap();
        assert!(!back.is_fit());
    }

    #[test]
    fn form_parsing() {
        assert_eq!("power".parse::<FitForm>().unwrap(), FitForm::PowerLaw);
        assert_eq!("stretched-exp".parse::<FitForm>().unwrap(), FitForm::StretchedExp);
        assert!("cubic".parse::<FitForm>().is_err());
    }
}

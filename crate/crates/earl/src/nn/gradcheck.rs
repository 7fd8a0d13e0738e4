//! Central-difference gradient verification.

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Relative error above which a gradient coordinate counts as wrong.
pub const GRAD_REL_TOL: f64 = 1e-3;
/// Absolute differences below this floor are ignored; protects coordinates
/// whose true gradient is (near) zero.
pub const GRAD_ABS_FLOOR: f64 = 1e-6;

/// Relative disagreement between an analytic and a numeric derivative,
/// zero when the absolute difference is under [`GRAD_ABS_FLOOR`].
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let d = (analytic - numeric).abs();
    if d <= GRAD_ABS_FLOOR {
        0.0
    } else {
        d / analytic.abs().max(numeric.abs()).max(GRAD_ABS_FLOOR)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    /// How many coordinates were compared.
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < GRAD_REL_TOL
    }
}

/// Compares `analytic` against central differences of `f` at `x`.
///
/// `coords` restricts the check to a subset of coordinates (used for
/// production-width networks where the full sweep would be wasteful);
/// `None` checks every coordinate.
pub fn check_grads(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    coords: Option<&[usize]>,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len(), "gradient length must match input length");
    let mut xs = x.to_vec();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst_index: 0, checked: 0 };
    let all: Vec<usize>;
    let indices: &[usize] = match coords {
        Some(c) => c,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    for &i in indices {
        xs[i] = x[i] + h;
        let fp = f(&xs);
        xs[i] = x[i] - h;
        let fm = f(&xs);
        xs[i] = x[i];
        let numeric = (fp - fm) / (2.0 * h);
        let e = rel_err(analytic[i], numeric);
        if e > report.max_rel_err {
            report.max_rel_err = e;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    report
}

//! Stepsize-dependent coefficients: backward divided differences, variable
//! coefficient BDF weights, order-raising filter scalars, and the equivalent
//! closed forms in stepsize ratios.
//!
//! Everything here is recomputed from the current time window each step.
//! Windows are short (at most 6 points), so plain 64-bit arithmetic is used
//! throughout; no coefficient caching or history rescaling.

use crate::{Error, Result, State};

/// Expansion coefficients `c^(j)_i` of backward divided differences over a
/// time window `t_0 < t_1 < ... < t_m`:
///
/// `delta^j phi = sum_{i=m-j}^{m} c^(j)_i phi_i`
///
/// where `delta^j phi` is the Newton divided difference over the most recent
/// `j + 1` points. Row `j` of the table has exactly `j + 1` trailing nonzeros.
#[derive(Debug, Clone)]
pub struct DividedDifferenceTable {
    m: usize,
    coeffs: Vec<Vec<f64>>,
}

impl DividedDifferenceTable {
    /// Highest difference order `m` (window length minus one).
    pub fn order(&self) -> usize {
        self.m
    }

    /// Coefficient `c^(j)_i`.
    pub fn coeff(&self, j: usize, i: usize) -> f64 {
        self.coeffs[j][i]
    }

    /// Full coefficient row for `delta^j`, indexed by window position.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.coeffs[j]
    }

    /// Leading coefficient `c^(j)_m` multiplying the newest value.
    pub fn leading(&self, j: usize) -> f64 {
        self.coeffs[j][self.m]
    }

    /// Applies `delta^j` to a full window of `m + 1` values.
    pub fn apply(&self, j: usize, values: &[State]) -> State {
        assert_eq!(values.len(), self.m + 1);
        weighted_sum(&self.coeffs[j], values)
    }

    /// Applies `delta^j` with `past` in slots `0..m` and `top` in slot `m`,
    /// as needed when the newest value is an intermediate approximation.
    pub fn apply_with_top(&self, j: usize, past: &[State], top: &State) -> State {
        assert_eq!(past.len(), self.m);
        let row = &self.coeffs[j];
        let mut out = top * row[self.m];
        for i in self.m.saturating_sub(j)..self.m {
            out.axpy(row[i], &past[i], 1.0);
        }
        out
    }
}

fn weighted_sum(weights: &[f64], values: &[State]) -> State {
    let mut out = State::zeros(values[0].len());
    for (w, v) in weights.iter().zip(values) {
        if *w != 0.0 {
            out.axpy(*w, v, 1.0);
        }
    }
    out
}

fn check_times(times: &[f64], need: usize) -> Result<()> {
    if times.len() < need {
        return Err(Error::WindowTooShort {
            need,
            got: times.len(),
        });
    }
    for w in times.windows(2) {
        if !(w[1] - w[0] > 0.0) || !w[1].is_finite() || !w[0].is_finite() {
            return Err(Error::NonIncreasingTimes);
        }
    }
    Ok(())
}

/// Generates the divided-difference coefficient table for a time window.
///
/// Rows are built by the nested-loop recursion on coefficient vectors: start
/// from standard basis vectors (row 0 selects the newest value) and apply the
/// first-difference quotient `(d_j - d_{j+1}) / (t_{m-j} - t_{m-q-j})` once
/// per order.
pub fn backward_differences(times: &[f64]) -> Result<DividedDifferenceTable> {
    check_times(times, 2)?;
    let n = times.len();
    let m = n - 1;
    // d[j] carries the coefficient vector of the difference rooted at t_{m-j}.
    let mut d = vec![vec![0.0; n]; n];
    for (j, row) in d.iter_mut().enumerate() {
        row[m - j] = 1.0;
    }
    let mut coeffs = vec![vec![0.0; n]; n];
    coeffs[0] = d[0].clone();
    for q in 1..n {
        for j in 0..n - q {
            let denom = times[m - j] - times[m - q - j];
            let (head, tail) = d.split_at_mut(j + 1);
            for (x, y) in head[j].iter_mut().zip(&tail[0]) {
                *x = (*x - *y) / denom;
            }
        }
        coeffs[q] = d[0].clone();
    }
    Ok(DividedDifferenceTable { m, coeffs })
}

/// BDF weights and filter scalar for one time window.
///
/// `alpha_bar` are the weights of the variable-coefficient BDFp left-hand
/// side, aligned with the window (entries below `m - p` are zero). `eta` is
/// the scalar multiplying `delta^(p+1)` in the order-raising filter; it is
/// present whenever the window is long enough (`m >= p + 1`).
#[derive(Debug, Clone)]
pub struct StepCoefficients {
    p: usize,
    alpha_bar: Vec<f64>,
    eta: Option<f64>,
    table: DividedDifferenceTable,
}

impl StepCoefficients {
    pub fn order(&self) -> usize {
        self.p
    }

    /// BDF weights over the full window, `sum_i alpha_bar_i y_i ~ y'(t_m)`.
    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Weight on the newest (implicit) value.
    pub fn leading(&self) -> f64 {
        self.alpha_bar[self.table.m]
    }

    /// Filter scalar `eta^(p+1)`; `None` when the window has no room for the
    /// order `p + 1` difference.
    pub fn eta(&self) -> Option<f64> {
        self.eta
    }

    /// The divided-difference table of the same window.
    pub fn table(&self) -> &DividedDifferenceTable {
        &self.table
    }

    /// Scaling `mu / c^(3)_m` that turns `delta^3` into the stabilizing
    /// filter increment.
    pub fn stab_scale(&self, mu: f64) -> Result<f64> {
        if self.table.m < 3 {
            return Err(Error::WindowTooShort {
                need: 4,
                got: self.table.m + 1,
            });
        }
        Ok(mu / self.table.leading(3))
    }

    /// `sum_{i < m} alpha_bar_i y_i`, the explicit part of the implicit stage.
    pub fn history_term(&self, past: &[State]) -> State {
        assert_eq!(past.len(), self.table.m);
        weighted_sum(&self.alpha_bar[..self.table.m], past)
    }
}

/// Computes BDFp weights, the filter scalar `eta^(p+1)` and the underlying
/// divided-difference table for the window `times`.
///
/// The weights follow the product form
/// `alpha_bar_k = sum_{j=1..p} [prod_{i=1..j-1} (t_m - t_{m-i})] c^(j)_k`
/// and the filter scalar is
/// `eta^(p+1) = prod_{i=1..p} (t_m - t_{m-i}) / sum_{j=1..p+1} (t_m - t_{m-j})^-1`.
pub fn bdf_and_filter_coefficients(times: &[f64], p: usize) -> Result<StepCoefficients> {
    if p == 0 || p > 5 {
        return Err(Error::UnsupportedOrder(p));
    }
    check_times(times, p + 1)?;
    let table = backward_differences(times)?;
    let m = table.m;
    let mut alpha_bar = vec![0.0; m + 1];
    for (k, a) in alpha_bar.iter_mut().enumerate().skip(m - p) {
        let mut sum = 0.0;
        let mut prod = 1.0;
        for j in 1..=p {
            // prod = prod_{i=1..j-1} (t_m - t_{m-i})
            sum += prod * table.coeff(j, k);
            prod *= times[m] - times[m - j];
        }
        *a = sum;
    }
    let eta = if m > p {
        let mut num = 1.0;
        for i in 1..=p {
            num *= times[m] - times[m - i];
        }
        let den: f64 = (1..=p + 1).map(|j| 1.0 / (times[m] - times[m - j])).sum();
        Some(num / den)
    } else {
        None
    };
    Ok(StepCoefficients {
        p,
        alpha_bar,
        eta,
        table,
    })
}

/// The closed-form coefficient sets in stepsize ratios for the embedded
/// order-2/3/4 step, scaled so that the BDF weights carry a factor of the
/// current stepsize (`alpha_i = k_last * alpha_bar_i`).
///
/// Index convention matches a five-point window `y_0 .. y_4`: `alpha3` is
/// padded with a leading zero.
#[derive(Debug, Clone)]
pub struct RatioCoefficients {
    /// BDF3 weights (times `k_last`), `alpha3[0] = 0`.
    pub alpha3: [f64; 5],
    /// BDF4 weights (times `k_last`).
    pub alpha4: [f64; 5],
    /// Stabilizing filter weights; `c[4]` applies to the stage solution.
    pub c: [f64; 5],
    /// Order-raising filter weights; `d[4]` applies to the stage solution.
    pub d: [f64; 5],
    /// Intermediate ratios `gamma_i = (alpha3_i - alpha4_i) / alpha3_4`.
    pub gammas: [f64; 5],
}

/// Evaluates the ratio-form coefficients for ratios
/// `tau = (k_1/k_0, k_2/k_1, k_3/k_2)` of a four-step window and filter
/// parameter `mu`.
///
/// This is an independent path to the same coefficients as
/// [`bdf_and_filter_coefficients`]; the two are cross-validated in tests.
pub fn ratio_coefficients(tau: [f64; 3], mu: f64) -> Result<RatioCoefficients> {
    for &t in &tau {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NonPositiveRatio(t));
        }
    }
    let [t1, t2, t3] = tau;

    let alpha3 = [
        0.0,
        -t2.powi(3) * t3 * t3 * (1.0 + t3) / ((1.0 + t2) * (1.0 + t2 * (1.0 + t3))),
        t2 * t3 * t3 + t3 * t3 / (1.0 + t3),
        -1.0 - t3 - t2 * t3 * (1.0 + t3) / (1.0 + t2),
        1.0 + t3 / (1.0 + t3) + t2 * t3 / (1.0 + t2 * (1.0 + t3)),
    ];
    let alpha4 = [
        t1.powi(4) * t2.powi(3) * t3 * t3 * (1.0 + t3) * (1.0 + t2 * (1.0 + t3))
            / ((1.0 + t1) * (1.0 + t1 * (1.0 + t2)) * (1.0 + t1 * (1.0 + t2 * (1.0 + t3)))),
        -t1 * t2.powi(3) * t3 * t3 * (1.0 + t3) / (1.0 + t2)
            - t2.powi(3) * t3 * t3 * (1.0 + t3) / ((1.0 + t2) * (1.0 + t2 * (1.0 + t3))),
        t2 * t3 * t3
            + t3 * t3 / (1.0 + t3)
            + t1 * t2 * t3 * t3 * (1.0 + t2 * (1.0 + t3)) / (1.0 + t1),
        -1.0 - t3
            - t2 * t3 * (1.0 + t3) / (1.0 + t2)
            - t1 * t2 * t3 * (1.0 + t3) * (1.0 + t2 * (1.0 + t3))
                / ((1.0 + t2) * (1.0 + t1 * (1.0 + t2))),
        1.0 + t3 * (1.0 / (1.0 + t3) + t2 / (1.0 + t2 * (1.0 + t3)))
            + t1 * t2 * t3 / (1.0 + t1 * (1.0 + t2 * (1.0 + t3))),
    ];
    let c = [
        0.0,
        -mu * t2 * t2 * t3 * (1.0 + t3) / (1.0 + t2),
        mu * t3 * (1.0 + t2 * (1.0 + t3)),
        -mu * (1.0 + t3) * (1.0 + t2 * (1.0 + t3)) / (1.0 + t2),
        mu,
    ];

    let mut gammas = [0.0; 5];
    for i in 0..5 {
        gammas[i] = (alpha3[i] - alpha4[i]) / alpha3[4];
    }
    let mut d = [0.0; 5];
    d[4] = gammas[4] / (1.0 - gammas[4]);
    for i in 0..4 {
        d[i] = gammas[i] * (1.0 + d[4]);
    }

    Ok(RatioCoefficients {
        alpha3,
        alpha4,
        c,
        d,
        gammas,
    })
}

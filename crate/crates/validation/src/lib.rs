//! Reference values for the acceptance suite.
//!
//! Both tables are indexed `[f3][rho]` with `F_3 ∈ {1, 1.5, 2}` and
//! `ρ ∈ {0.1, 0.5, 1}`, and hold `(IFE, DID, LT)` for each statistic.

pub const F3_VALUES: [f64; 3] = [1.0, 1.5, 2.0];
pub const RHO_VALUES: [f64; 3] = [0.1, 0.5, 1.0];

#[derive(Debug, Clone, Copy)]
pub struct TableCell {
    pub bias: [f64; 3],
    pub rmse: [f64; 3],
    pub mad: [f64; 3],
}

const fn cell(bias: [f64; 3], rmse: [f64; 3], mad: [f64; 3]) -> TableCell {
    TableCell { bias, rmse, mad }
}

/// Published results, 1000 replications of `n = 1000`.
pub const TABLE_N1000: [[TableCell; 3]; 3] = [
    [
        cell([0.015, 0.003, -0.992], [4.285, 0.090, 1.007], [0.421, 0.064, 1.000]),
        cell([-0.006, 0.001, -0.999], [0.189, 0.088, 1.012], [0.131, 0.060, 0.994]),
        cell([0.005, 0.002, -0.993], [0.156, 0.089, 1.007], [0.108, 0.059, 0.990]),
    ],
    [
        cell([-0.513, 0.500, -0.494], [33.892, 0.509, 0.519], [0.553, 0.499, 0.503]),
        cell([-0.016, 0.498, -0.500], [0.265, 0.507, 0.524], [0.174, 0.497, 0.496]),
        cell([0.001, 0.503, -0.500], [0.208, 0.512, 0.523], [0.140, 0.504, 0.500]),
    ],
    [
        cell([-0.458, 0.996, -0.006], [15.595, 1.002, 0.157], [0.752, 0.990, 0.102]),
        cell([-0.042, 1.001, 0.001], [0.358, 1.007, 0.158], [0.220, 0.996, 0.108]),
        cell([-0.020, 1.000, -0.009], [0.280, 1.006, 0.158], [0.182, 1.000, 0.104]),
    ],
];

/// Published results, 1000 replications of `n = 250`.
pub const TABLE_N250: [[TableCell; 3]; 3] = [
    [
        cell([0.931, 0.013, -0.984], [18.016, 0.177, 1.038], [0.721, 0.118, 0.984]),
        cell([-0.040, -0.009, -1.011], [0.437, 0.182, 1.064], [0.276, 0.127, 1.002]),
        cell([-0.016, -0.006, -1.005], [0.318, 0.179, 1.056], [0.206, 0.119, 0.999]),
    ],
    [
        cell([1.657, 0.509, -0.484], [57.604, 0.545, 0.580], [0.911, 0.517, 0.488]),
        cell([-0.081, 0.503, -0.507], [0.614, 0.536, 0.590], [0.325, 0.507, 0.505]),
        cell([0.005, 0.504, -0.485], [0.417, 0.538, 0.573], [0.276, 0.505, 0.478]),
    ],
    [
        cell([0.178, 1.012, 0.015], [26.497, 1.034, 0.298], [1.156, 1.011, 0.191]),
        cell([-0.106, 1.006, 0.011], [1.498, 1.029, 0.307], [0.463, 1.013, 0.205]),
        cell([-0.013, 1.004, 0.011], [0.547, 1.027, 0.305], [0.360, 1.007, 0.205]),
    ],
];

/// `|a - b| <= tol · |b|`.
pub fn within_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs()
}

/// `|a - b| <= tol`.
pub fn within_abs(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

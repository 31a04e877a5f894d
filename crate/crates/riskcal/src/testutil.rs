//! Shared fixtures and proptest strategies for the crate's test modules.

use proptest::prelude::*;

use crate::model::{Forecast, UtilityMatrix};

pub fn matrix(table: Vec<Vec<f64>>) -> UtilityMatrix {
    let actions = (0..table.len()).map(|i| format!("a{i}")).collect();
    let labels = (0..table[0].len()).map(|i| format!("y{i}")).collect();
    UtilityMatrix::new(actions, labels, table).unwrap()
}

pub fn identity2() -> UtilityMatrix {
    matrix(vec![vec![1.0, 0.0], vec![0.0, 1.0]])
}

/// Action-major chest-x-ray-style table. Labels: Normal, Pneumonia,
/// COVID-19, Lung Opacity. Actions: No Action, Antibiotics, Quarantine,
/// Additional Testing.
pub fn clinical4() -> UtilityMatrix {
    UtilityMatrix::new(
        vec![
            "No Action".into(),
            "Antibiotics".into(),
            "Quarantine".into(),
            "Additional Testing".into(),
        ],
        vec![
            "Normal".into(),
            "Pneumonia".into(),
            "COVID-19".into(),
            "Lung Opacity".into(),
        ],
        vec![
            vec![10.0, 0.0, 0.0, 1.0],
            vec![2.0, 10.0, 3.0, 4.0],
            vec![2.0, 3.0, 10.0, 4.0],
            vec![4.0, 7.0, 8.0, 10.0],
        ],
    )
    .unwrap()
}

/// Recommendation-style table with negative entries (abstain vs graded
/// recommend over five rating labels).
pub fn recommend2x5() -> UtilityMatrix {
    UtilityMatrix::new(
        vec!["Not Rec".into(), "Rec".into()],
        vec!["1".into(), "2".into(), "3".into(), "4".into(), "5".into()],
        vec![
            vec![0.0, 0.0, 0.0, 0.0, 0.0],
            vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        ],
    )
    .unwrap()
}

prop_compose! {
    pub fn arb_forecast_fixed(k: usize)
        (weights in prop::collection::vec(0.01f64..1.0, k)) -> Forecast {
        let sum: f64 = weights.iter().sum();
        Forecast::new(weights.iter().map(|w| w / sum).collect()).unwrap()
    }
}

prop_compose! {
    pub fn arb_forecast(max_k: usize)
        (k in 1..=max_k)
        (f in arb_forecast_fixed(k)) -> Forecast {
        f
    }
}

prop_compose! {
    /// Utility tables on a coarse lattice: user-declared constants, no
    /// fuzzy near-equal levels.
    pub fn arb_matrix(max_m: usize, k: usize)
        (m in 1..=max_m)
        (cells in prop::collection::vec(0u8..=40, m * k), m in Just(m)) -> UtilityMatrix {
        let table: Vec<Vec<f64>> = (0..m)
            .map(|a| (0..k).map(|y| f64::from(cells[a * k + y]) * 0.25).collect())
            .collect();
        matrix(table)
    }
}

prop_compose! {
    pub fn arb_instance(max_m: usize, max_k: usize)
        (k in 1..=max_k)
        (m in arb_matrix(max_m, k), f in arb_forecast_fixed(k)) -> (UtilityMatrix, Forecast) {
        (m, f)
    }
}

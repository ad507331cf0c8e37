#![allow(dead_code)]

use optstop_core::{Curve, CurveDataset, DiscretizedRun, Token};
use proptest::prelude::*;

/// Up to `max_runs` runs of length 1..=`max_len` over buckets 1..=3; each
/// run may end in a success token. Costs are unit or drawn from {0.5, 1, 2}.
pub fn runs_strategy(
    max_runs: usize,
    max_len: usize,
) -> impl Strategy<Value = Vec<DiscretizedRun>> {
    let run = (
        prop::collection::vec(1u16..=3, 1..=max_len),
        any::<bool>(),
        prop::collection::vec(prop::sample::select(vec![0.5, 1.0, 2.0]), max_len),
        any::<bool>(),
    )
        .prop_map(|(buckets, success, costs, unit)| {
            let mut tokens: Vec<Token> = buckets.into_iter().map(Token::Bucket).collect();
            if success {
                *tokens.last_mut().unwrap() = Token::Success;
            }
            let costs = if unit {
                vec![1.0; tokens.len()]
            } else {
                costs[..tokens.len()].to_vec()
            };
            DiscretizedRun::new(tokens, costs, "").unwrap()
        });
    prop::collection::vec(run, 1..=max_runs)
}

pub fn with_success(max_runs: usize, max_len: usize) -> impl Strategy<Value = Vec<DiscretizedRun>> {
    runs_strategy(max_runs, max_len)
        .prop_filter("needs a success", |runs| runs.iter().any(|r| r.succeeded()))
}

/// Raw curves with values on a coarse grid so ties occur.
pub fn curves_strategy(max_curves: usize, max_len: usize) -> impl Strategy<Value = CurveDataset> {
    prop::collection::vec(prop::collection::vec(0u8..=10, 1..=max_len), 1..=max_curves).prop_map(
        |rows| {
            let curves = rows
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    Curve::unit(
                        format!("r{i:02}"),
                        r.into_iter().map(|v| v as f64 / 10.0).collect(),
                    )
                    .unwrap()
                })
                .collect();
            CurveDataset::new(curves).unwrap()
        },
    )
}

pub fn dataset(rows: &[&[f64]]) -> CurveDataset {
    CurveDataset::new(
        rows.iter()
            .enumerate()
            .map(|(i, v)| Curve::unit(format!("c{i}"), v.to_vec()).unwrap())
            .collect(),
    )
    .unwrap()
}

//! Sequential root identification: for every remaining variable, fit a
//! conditional flow of it given all others, score how strongly the fitted map
//! depends on its conditioners, and peel off the least dependent variable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::CausalOrder;
use crate::flow::{input_jacobian_with_step, train_flow, ConditionalFlow, FlowData, TrainConfig, JACOBIAN_STEP};
use crate::num::RngStream;
use crate::scm::Dataset;

/// How per-sample absolute Jacobian entries are reduced to one value per conditioner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JacAggregation {
    #[default]
    Max,
    Mean,
    P95,
}

impl std::str::FromStr for JacAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            "p95" => Ok(Self::P95),
            other => Err(Error::Argument(format!("unknown jacobian aggregation {other:?}"))),
        }
    }
}

impl JacAggregation {
    fn reduce(self, values: &mut [f64]) -> f64 {
        match self {
            Self::Max => values.iter().copied().fold(0.0, f64::max),
            Self::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Self::P95 => {
                values.sort_by(f64::total_cmp);
                // nearest-rank
                let rank = ((0.95 * values.len() as f64).ceil() as usize).clamp(1, values.len());
                values[rank - 1]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqConfig {
    pub train: TrainConfig,
    pub jac_agg: JacAggregation,
    pub jac_step: f64,
}

impl Default for SeqConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            jac_agg: JacAggregation::Max,
            jac_step: JACOBIAN_STEP,
        }
    }
}

/// Root score of one variable in one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootScore {
    pub variable: usize,
    pub max_jac: f64,
    /// Aggregated `|∂T/∂x_j|` per conditioning variable, aligned with `conditioners`.
    pub jac_row: Vec<f64>,
    pub conditioners: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub remaining: Vec<usize>,
    pub scores: Vec<RootScore>,
    pub chosen: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderResult {
    pub order: CausalOrder,
    pub rounds: Vec<Round>,
}

/// Aggregated absolute input-Jacobian of a trained flow over every row of `data`.
pub fn jacobian_profile(flow: &ConditionalFlow, data: &FlowData, agg: JacAggregation, step: f64) -> Result<Vec<f64>> {
    let m = data.cond.cols();
    let mut per_cond: Vec<Vec<f64>> = vec![Vec::with_capacity(data.len()); m];
    for r in 0..data.len() {
        let jac = input_jacobian_with_step(flow, data.x[r], data.cond.row(r), step)?;
        for (col, v) in per_cond.iter_mut().zip(jac) {
            col.push(v.abs());
        }
    }
    Ok(per_cond.iter_mut().map(|v| agg.reduce(v)).collect())
}

fn check_input(ds: &Dataset) -> Result<()> {
    if !ds.is_standardized() {
        return Err(Error::Argument("root scoring expects standardized data".into()));
    }
    if ds.d() < 2 {
        return Err(Error::Argument(format!("need at least 2 variables, got {}", ds.d())));
    }
    Ok(())
}

fn score_column(ds: &Dataset, column: usize, labels: &[usize], cfg: &SeqConfig, rng: &RngStream) -> Result<RootScore> {
    let data = FlowData::from_columns(ds.values(), column)?;
    let flow = train_flow(&data, &cfg.train, rng)?;
    let jac_row = jacobian_profile(&flow, &data, cfg.jac_agg, cfg.jac_step)?;
    let max_jac = jac_row.iter().copied().fold(0.0, f64::max);
    Ok(RootScore {
        variable: labels[column],
        max_jac,
        jac_row,
        conditioners: labels
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != column)
            .map(|(_, &l)| l)
            .collect(),
    })
}

/// Trains the flow of column `column` given all other columns and scores it.
pub fn root_score(column: usize, ds: &Dataset, cfg: &SeqConfig, rng: &RngStream) -> Result<RootScore> {
    check_input(ds)?;
    if column >= ds.d() {
        return Err(Error::Argument(format!("column {column} out of range")));
    }
    let labels: Vec<usize> = (0..ds.d()).collect();
    score_column(ds, column, &labels, cfg, rng).map_err(|e| Error::Variable {
        variable: column,
        source: Box::new(e),
    })
}

/// Index of the smallest `max_jac`, ties to the first (lowest-label) entry.
pub fn argmin_score(scores: &[RootScore]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b].max_jac < s.max_jac => {}
            Some(b) if scores[b].max_jac == s.max_jac && scores[b].variable <= s.variable => {}
            _ => best = Some(k),
        }
    }
    best
}

/// Scores every column (label `labels[c]`) on substream `labels[c]` of `rng`.
fn score_round(ds: &Dataset, labels: &[usize], cfg: &SeqConfig, rng: &RngStream) -> Result<Vec<RootScore>> {
    (0..ds.d())
        .into_par_iter()
        .map(|c| {
            score_column(ds, c, labels, cfg, &rng.substream(labels[c] as u64)).map_err(|e| Error::Variable {
                variable: labels[c],
                source: Box::new(e),
            })
        })
        .collect()
}

/// Root of the current dataset: argmin over columns of the root score.
pub fn find_root(ds: &Dataset, cfg: &SeqConfig, rng: &RngStream) -> Result<RootScore> {
    check_input(ds)?;
    let labels: Vec<usize> = (0..ds.d()).collect();
    let scores = score_round(ds, &labels, cfg, rng)?;
    let k = argmin_score(&scores).expect("at least two scores");
    Ok(scores[k].clone())
}

/// Peels roots one at a time until a single variable remains.
///
/// Round `k` uses substream `k` of `rng`, and within it substream `v` for variable `v`.
pub fn discover_order(ds: &Dataset, cfg: &SeqConfig, rng: &RngStream) -> Result<OrderResult> {
    check_input(ds)?;
    cfg.train.validate()?;
    let mut remaining: Vec<usize> = (0..ds.d()).collect();
    let mut order = Vec::with_capacity(ds.d());
    let mut rounds = Vec::with_capacity(ds.d() - 1);
    while remaining.len() > 1 {
        let round = rounds.len();
        let current = ds.select_columns(&remaining);
        let scores =
            score_round(&current, &remaining, cfg, &rng.substream(round as u64)).map_err(|e| Error::Round {
                round,
                found: order.iter().map(|v| v + 1).collect(),
                source: Box::new(e),
            })?;
        let k = argmin_score(&scores).expect("at least two scores");
        let chosen = scores[k].variable;
        rounds.push(Round {
            remaining: remaining.clone(),
            scores,
            chosen,
        });
        order.push(chosen);
        remaining.retain(|&v| v != chosen);
    }
    order.extend(remaining);
    Ok(OrderResult {
        order: CausalOrder::new(order)?,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowSpec;
    use crate::num::Matrix;
    use crate::scm::standardize;

    fn score(variable: usize, max_jac: f64) -> RootScore {
        RootScore {
            variable,
            max_jac,
            jac_row: vec![max_jac],
            conditioners: vec![],
        }
    }

    fn tiny_cfg() -> SeqConfig {
        SeqConfig {
            train: TrainConfig {
                epochs: 1,
                flow: FlowSpec {
                    hidden_units: 8,
                    ..FlowSpec::default()
                },
                ..TrainConfig::default()
            },
            ..SeqConfig::default()
        }
    }

    fn random_standardized(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed);
        let m = Matrix::from_fn(n, d, |_, _| rng.normal());
        standardize(&Dataset::with_default_names(m).unwrap()).unwrap()
    }

    #[test]
    fn argmin_ties_go_to_lowest_label() {
        let s = vec![score(3, 0.5), score(1, 0.5), score(2, 0.7)];
        assert_eq!(s[argmin_score(&s).unwrap()].variable, 1);
        let s = vec![score(0, 0.2), score(1, 0.2)];
        assert_eq!(argmin_score(&s), Some(0));
        assert_eq!(argmin_score(&[]), None);
    }

    #[test]
    fn argmin_invariant_to_positive_scaling() {
        let mut rng = RngStream::new(0);
        for _ in 0..100 {
            let s: Vec<RootScore> = (0..5).map(|v| score(v, rng.uniform())).collect();
            let c = rng.uniform_range(0.01, 100.0);
            let scaled: Vec<RootScore> = s.iter().map(|r| score(r.variable, r.max_jac * c)).collect();
            assert_eq!(argmin_score(&s), argmin_score(&scaled));
        }
    }

    #[test]
    fn aggregation_rules() {
        let mut v = vec![0.1, 0.5, 0.2, 0.4];
        assert_eq!(JacAggregation::Max.reduce(&mut v.clone()), 0.5);
        assert!((JacAggregation::Mean.reduce(&mut v.clone()) - 0.3).abs() < 1e-15);
        assert_eq!(JacAggregation::P95.reduce(&mut v), 0.5);
        let mut w: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(JacAggregation::P95.reduce(&mut w), 95.0);
        assert_eq!("p95".parse::<JacAggregation>().unwrap(), JacAggregation::P95);
        assert!("median".parse::<JacAggregation>().is_err());
    }

    #[test]
    fn untrained_flow_scores_exactly_zero() {
        let ds = random_standardized(50, 3, 1);
        let data = FlowData::from_columns(ds.values(), 0).unwrap();
        let flow = ConditionalFlow::near_identity(2, &FlowSpec::default(), &mut RngStream::new(0)).unwrap();
        let row = jacobian_profile(&flow, &data, JacAggregation::Max, JACOBIAN_STEP).unwrap();
        assert_eq!(row, vec![0.0, 0.0]);
    }

    #[test]
    fn structural_properties_of_discovery() {
        let ds = random_standardized(40, 4, 2);
        let cfg = tiny_cfg();
        let res = discover_order(&ds, &cfg, &RngStream::new(3)).unwrap();
        assert_eq!(res.rounds.len(), 3);
        for (k, round) in res.rounds.iter().enumerate() {
            assert_eq!(round.remaining.len(), 4 - k);
            assert_eq!(round.chosen, res.order.as_slice()[k]);
            let min = round.scores.iter().map(|s| s.max_jac).fold(f64::INFINITY, f64::min);
            let chosen = round.scores.iter().find(|s| s.variable == round.chosen).unwrap();
            assert_eq!(chosen.max_jac, min);
            for s in &round.scores {
                assert_eq!(s.jac_row.len(), 3 - k);
                assert!(s.jac_row.iter().all(|&v| v >= 0.0));
                assert_eq!(s.max_jac, s.jac_row.iter().copied().fold(0.0, f64::max));
            }
        }
        // pure function of (data, config, seed)
        let again = discover_order(&ds, &cfg, &RngStream::new(3)).unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn two_variables_order_is_winner_then_other() {
        let ds = random_standardized(30, 2, 4);
        let res = discover_order(&ds, &tiny_cfg(), &RngStream::new(5)).unwrap();
        let chosen = res.rounds[0].chosen;
        assert_eq!(res.order.as_slice(), &[chosen, 1 - chosen]);
    }

    #[test]
    fn find_root_agrees_with_root_score() {
        let ds = random_standardized(30, 3, 6);
        let cfg = tiny_cfg();
        let rng = RngStream::new(7);
        let root = find_root(&ds, &cfg, &rng).unwrap();
        let direct = root_score(root.variable, &ds, &cfg, &rng.substream(root.variable as u64)).unwrap();
        assert_eq!(root, direct);
    }

    #[test]
    fn rejects_unstandardized_or_tiny_input() {
        let raw = Dataset::with_default_names(Matrix::from_fn(10, 2, |r, c| (r * (c + 1)) as f64)).unwrap();
        assert!(discover_order(&raw, &tiny_cfg(), &RngStream::new(0)).is_err());
        let one = random_standardized(10, 1, 0);
        assert!(find_root(&one, &tiny_cfg(), &RngStream::new(0)).is_err());
    }
}

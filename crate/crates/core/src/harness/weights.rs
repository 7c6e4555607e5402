use crate::bls::BlsClassifier;
use crate::dataio::Dataset;
use crate::er_fusion::{argmax, EvidenceWeights};
use crate::error::{Error, Result};

/// Per-class evidence weights from validation recall.
///
/// `w[k][n]` is classifier `k`'s recall on class `n` divided by the best
/// recall any classifier reaches on that class. A class no classifier ever
/// recalls gets weight 1 everywhere.
pub fn estimate_weights(
    classifiers: &[BlsClassifier],
    validation: &Dataset,
) -> Result<Vec<EvidenceWeights>> {
    let n_classes = validation.n_classes();
    let mut support = vec![0usize; n_classes];
    for &l in &validation.fault_labels {
        support[l] += 1;
    }
    let missing: Vec<String> = support
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 0)
        .map(|(c, _)| validation.class_names[c].clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::WeightEstimation { missing });
    }

    let recalls = classifiers
        .iter()
        .map(|c| {
            let scores = c.predict(&validation.features)?;
            let mut hits = vec![0usize; n_classes];
            for (row, &l) in scores.row_iter().zip(&validation.fault_labels) {
                if argmax(row) == l {
                    hits[l] += 1;
                }
            }
            Ok(hits
                .iter()
                .zip(&support)
                .map(|(&h, &s)| h as f64 / s as f64)
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;

    weights_from_recalls(&recalls)
}

/// Max-normalize `recalls[k][n]` over `k`.
pub(crate) fn weights_from_recalls(recalls: &[Vec<f64>]) -> Result<Vec<EvidenceWeights>> {
    let n_classes = recalls.first().map_or(0, Vec::len);
    let best: Vec<f64> = (0..n_classes)
        .map(|n| recalls.iter().fold(0.0_f64, |m, r| m.max(r[n])))
        .collect();
    recalls
        .iter()
        .map(|r| {
            let w = r
                .iter()
                .zip(&best)
                .map(|(&v, &b)| {
                    if b > 0.0 {
                        (v / b).clamp(0.0, 1.0)
                    } else {
                        1.0
                    }
                })
                .collect();
            EvidenceWeights::new(w)
        })
        .collect()
}

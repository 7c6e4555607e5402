use serde::{Deserialize, Serialize};

use super::{CompareReport, Scheme};

/// Published test accuracies (percent) on the four-mode TEP benchmark:
/// `(scheme, disturbance number, [mode 1, mode 2, mode 3, mode 4])`.
pub const REFERENCE_TABLE: [(Scheme, u32, [f64; 4]); 21] = [
    (Scheme::Ours, 0, [100.0, 99.9, 95.2, 99.9]),
    (Scheme::Ours, 1, [100.0, 99.8, 86.7, 99.9]),
    (Scheme::Ours, 2, [100.0, 100.0, 96.6, 99.7]),
    (Scheme::Ours, 4, [100.0, 100.0, 99.7, 100.0]),
    (Scheme::Ours, 7, [100.0, 100.0, 99.6, 100.0]),
    (Scheme::Ours, 13, [100.0, 99.7, 90.6, 100.0]),
    (Scheme::Ours, 20, [100.0, 100.0, 94.8, 99.7]),
    (Scheme::Scheme1, 0, [100.0; 4]),
    (Scheme::Scheme1, 1, [100.0; 4]),
    (Scheme::Scheme1, 2, [100.0; 4]),
    (Scheme::Scheme1, 4, [100.0, 85.7, 0.0, 98.4]),
    (Scheme::Scheme1, 7, [100.0; 4]),
    (Scheme::Scheme1, 13, [92.9, 82.1, 0.0, 100.0]),
    (Scheme::Scheme1, 20, [84.3, 69.1, 38.3, 64.6]),
    (Scheme::Scheme2, 0, [100.0; 4]),
    (Scheme::Scheme2, 1, [100.0; 4]),
    (Scheme::Scheme2, 2, [100.0; 4]),
    (Scheme::Scheme2, 4, [100.0; 4]),
    (Scheme::Scheme2, 7, [100.0; 4]),
    (Scheme::Scheme2, 13, [100.0, 100.0, 35.4, 100.0]),
    (Scheme::Scheme2, 20, [98.0, 91.5, 39.3, 85.4]),
];

/// Reference accuracy for disturbance `fault` in mode `mode` (1-based).
pub fn reference_accuracy(scheme: Scheme, fault: u32, mode: u32) -> Option<f64> {
    if !(1..=4).contains(&mode) {
        return None;
    }
    REFERENCE_TABLE
        .iter()
        .find(|(s, f, _)| *s == scheme && *f == fault)
        .map(|(_, _, v)| v[mode as usize - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCell {
    pub scheme: Scheme,
    pub fault: String,
    pub mode: String,
    pub reference: f64,
    pub measured: f64,
}

/// The number embedded in a label such as `IDV(13)`, `M3` or `13`.
fn label_number(s: &str) -> Option<u32> {
    let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Measured cells that have a published counterpart.
pub fn reference_comparison(report: &CompareReport) -> Vec<ReferenceCell> {
    let mut out = Vec::new();
    for r in &report.reports {
        for c in &r.cells {
            let (Some(f), Some(m)) = (label_number(&c.fault), label_number(&c.mode)) else {
                continue;
            };
            if let Some(reference) = reference_accuracy(r.scheme, f, m) {
                out.push(ReferenceCell {
                    scheme: r.scheme,
                    fault: c.fault.clone(),
                    mode: c.mode.clone(),
                    reference,
                    measured: c.accuracy,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        assert_eq!(reference_accuracy(Scheme::Scheme1, 13, 3), Some(0.0));
        assert_eq!(reference_accuracy(Scheme::Ours, 1, 3), Some(86.7));
        assert_eq!(reference_accuracy(Scheme::Scheme2, 20, 4), Some(85.4));
        assert_eq!(reference_accuracy(Scheme::Ours, 3, 1), None);
        assert_eq!(reference_accuracy(Scheme::Ours, 0, 5), None);
    }

    #[test]
    fn labels_parse() {
        assert_eq!(label_number("IDV(13)"), Some(13));
        assert_eq!(label_number("M2"), Some(2));
        assert_eq!(label_number("normal"), None);
    }
}

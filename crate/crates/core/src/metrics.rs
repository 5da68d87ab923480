//! ACC and AUC, per-hypothesis score export and sweep grids.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Scores produced for one sample, aligned with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_id: String,
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
}

/// Index of the highest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &s)| match best {
            Some((_, b)) if b >= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
}

/// Fraction of samples whose top-scored hypothesis is any correct one.
/// An empty slice scores 0.
pub fn accuracy(samples: &[ScoredSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples
        .iter()
        .filter(|s| argmax(&s.scores).is_some_and(|i| s.labels.get(i) == Some(&1)))
        .count();
    hits as f64 / samples.len() as f64
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half.
///
/// Sort-based, `O(n log n)`. The numerator is accumulated as an integer count
/// of half-wins, so the result equals the pairwise statistic exactly.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            what: "scores vs labels",
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count() as u64;
    let negatives = scores.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // 2 * (wins + ties / 2)
    let mut half_wins: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        half_wins += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        i = j;
    }
    Ok(half_wins as f64 / (2 * positives * negatives) as f64)
}

/// AUC over every hypothesis of every sample pooled together.
pub fn pooled_auc(samples: &[ScoredSample]) -> Result<f64> {
    let scores: Vec<f64> = samples.iter().flat_map(|s| s.scores.iter().copied()).collect();
    let labels: Vec<u8> = samples.iter().flat_map(|s| s.labels.iter().copied()).collect();
    auc(&scores, &labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub auc: f64,
    pub n_samples: usize,
    pub n_hypotheses: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_sample_scores: Option<Vec<ScoredSample>>,
}

impl EvalReport {
    pub fn from_scored(scored: Vec<ScoredSample>, keep_scores: bool) -> Result<Self> {
        Ok(EvalReport {
            acc: accuracy(&scored),
            auc: pooled_auc(&scored)?,
            n_samples: scored.len(),
            n_hypotheses: scored.iter().map(|s| s.scores.len()).sum(),
            per_sample_scores: keep_scores.then_some(scored),
        })
    }
}

/// Arithmetic mean of ACC and AUC over several reports (e.g. one per seed).
pub fn mean_report(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::invalid("reports", "need at least one report"))?;
    let n = reports.len() as f64;
    Ok(EvalReport {
        acc: reports.iter().map(|r| r.acc).sum::<f64>() / n,
        auc: reports.iter().map(|r| r.auc).sum::<f64>() / n,
        n_samples: first.n_samples,
        n_hypotheses: first.n_hypotheses,
        per_sample_scores: None,
    })
}

pub const SCORE_HEADER: &str = "sample_id\thyp_index\tlabel\tscore";

/// One row per hypothesis: `sample_id, hyp_index, label, score`.
pub fn scores_to_tsv(samples: &[ScoredSample]) -> Result<String> {
    let mut out = String::from(SCORE_HEADER);
    out.push('\n');
    for s in samples {
        if s.sample_id.contains(['\t', '\n', '\r']) {
            return Err(Error::invalid(
                "sample_id",
                format!("{:?} contains a tab or newline", s.sample_id),
            ));
        }
        for (j, (y, score)) in s.labels.iter().zip(&s.scores).enumerate() {
            writeln!(out, "{}\t{j}\t{y}\t{score:?}", s.sample_id).unwrap();
        }
    }
    Ok(out)
}

pub fn export_scores(samples: &[ScoredSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scores_to_tsv(samples)?).map_err(|e| Error::io(path, e))
}

/// Reads a score table back, regrouping rows by sample in first-appearance order.
pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoredSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(path, &text)
}

pub fn parse_scores(path: &Path, text: &str) -> Result<Vec<ScoredSample>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SCORE_HEADER => {}
        other => return Err(err(1, format!("expected header {SCORE_HEADER:?}, got {other:?}"))),
    }
    let mut out: Vec<ScoredSample> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, j, y, score] = cols[..] else {
            return Err(err(i + 1, format!("expected 4 columns, got {}", cols.len())));
        };
        let j: usize = j.parse().map_err(|_| err(i + 1, format!("bad hyp_index {j:?}")))?;
        let y: u8 = match y {
            "0" => 0,
            "1" => 1,
            _ => return Err(err(i + 1, format!("bad label {y:?}"))),
        };
        let score: f64 = score.parse().map_err(|_| err(i + 1, format!("bad score {score:?}")))?;
        let slot = *index.entry(id.to_owned()).or_insert_with(|| {
            out.push(ScoredSample {
                sample_id: id.to_owned(),
                labels: Vec::new(),
                scores: Vec::new(),
            });
            out.len() - 1
        });
        let s = &mut out[slot];
        if j != s.scores.len() {
            return Err(err(i + 1, format!("hyp_index {j} out of order for {id:?}")));
        }
        s.labels.push(y);
        s.scores.push(score);
    }
    Ok(out)
}

pub const DEFAULT_GAMMAS: [f64; 3] = [1.0, 2.0, 3.0];
pub const DEFAULT_ALPHAS: [f64; 3] = [0.45, 0.5, 0.55];

/// ACC of one `(gamma, alpha)` sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub gamma: f64,
    pub alpha: f64,
    pub acc: f64,
}

/// Renders a rectangular sweep as CSV: one row per gamma, one column per
/// alpha, both ascending.
pub fn sweep_report(cells: &[SweepCell]) -> Result<String> {
    if cells.is_empty() {
        return Err(Error::invalid("sweep", "empty grid"));
    }
    let key = |c: &SweepCell| (c.gamma.to_bits(), c.alpha.to_bits());
    let mut grid: HashMap<(u64, u64), f64> = HashMap::new();
    for c in cells {
        if grid.insert(key(c), c.acc).is_some() {
            return Err(Error::invalid(
                "sweep",
                format!("duplicate cell gamma={} alpha={}", c.gamma, c.alpha),
            ));
        }
    }
    let axis = |f: fn(&SweepCell) -> f64| {
        let mut v: Vec<f64> = cells.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| a.to_bits() == b.to_bits());
        v
    };
    let gammas = axis(|c| c.gamma);
    let alphas = axis(|c| c.alpha);

    let mut out = String::from("gamma\\alpha");
    for a in &alphas {
        write!(out, ",{a}").unwrap();
    }
    out.push('\n');
    for g in &gammas {
        write!(out, "{g}").unwrap();
        for a in &alphas {
            let acc = grid
                .get(&(g.to_bits(), a.to_bits()))
                .ok_or_else(|| Error::invalid("sweep", format!("missing cell gamma={g} alpha={a}")))?;
            write!(out, ",{acc}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_sweep_report(cells: &[SweepCell], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, sweep_report(cells)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scored(id: &str, labels: &[u8], scores: &[f64]) -> ScoredSample {
        ScoredSample {
            sample_id: id.into(),
            labels: labels.to_vec(),
            scores: scores.to_vec(),
        }
    }

    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut num, mut den) = (0u64, 0u64);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 2;
                    num += if si > sj {
                        2
                    } else if si == sj {
                        1
                    } else {
                        0
                    };
                }
            }
        }
        num as f64 / den as f64
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let both = [
            scored("a", &[1, 0], &[2.0, 1.0]),
            scored("b", &[0, 1, 1], &[0.0, 1.0, 3.0]),
        ];
        assert_eq!(accuracy(&both), 1.0);
        let half = [scored("a", &[0, 1], &[1.0, 2.0]), scored("b", &[1, 0], &[1.0, 2.0])];
        assert_eq!(accuracy(&half), 0.5);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(accuracy(&[scored("a", &[1, 0], &[0.0, 0.0])]), 1.0);
        assert_eq!(accuracy(&[scored("a", &[0, 1], &[0.0, 0.0])]), 0.0);
    }

    #[test]
    fn auc_basic_cases() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.3, 0.4], &[1, 1]), Err(Error::SingleClass)));
        assert!(matches!(auc(&[0.3, 0.4], &[0, 0]), Err(Error::SingleClass)));
    }

    #[test]
    fn auc_matches_pairwise_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..50 {
            // coarse scores so ties are common
            let scores: Vec<f64> = (0..50).map(|_| f64::from(rng.random_range(0..8u8))).collect();
            let mut labels: Vec<u8> = (0..50).map(|_| rng.random_range(0..=1u8)).collect();
            labels[0] = 1;
            labels[1] = 0;
            assert_eq!(auc(&scores, &labels).unwrap(), pairwise_auc(&scores, &labels));
        }
    }

    #[test]
    fn inverted_scores_complement_auc() {
        let scores = [0.2, 0.5, 0.5, 0.9, -1.0];
        let labels = [1, 0, 1, 0, 1];
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = auc(&scores, &labels).unwrap();
        assert_eq!(auc(&neg, &labels).unwrap(), 1.0 - a);
    }

    #[test]
    fn mean_of_reports() {
        let r = |acc, auc| EvalReport {
            acc,
            auc,
            n_samples: 4,
            n_hypotheses: 8,
            per_sample_scores: None,
        };
        let reports: Vec<_> = (0..5)
            .map(|i| r(0.1 * f64::from(i), 0.5 + 0.1 * f64::from(i)))
            .collect();
        let m = mean_report(&reports).unwrap();
        assert!((m.acc - 0.2).abs() < 1e-15);
        assert!((m.auc - 0.7).abs() < 1e-15);
        assert!(mean_report(&[]).is_err());
    }

    #[test]
    fn score_export_round_trip() {
        let samples = vec![
            scored("s1", &[1, 0], &[0.1, -1.0 / 3.0]),
            scored("s2", &[0, 1, 0], &[1e-300, 12345.678, -0.0]),
        ];
        let tsv = scores_to_tsv(&samples).unwrap();
        assert!(tsv.starts_with("sample_id\thyp_index\tlabel\tscore\n"));
        assert_eq!(tsv.lines().count(), 1 + 5);
        let back = parse_scores(Path::new("s.tsv"), &tsv).unwrap();
        assert_eq!(back, samples);

        let one = scores_to_tsv(&[scored("x", &[1, 0], &[1.0, 2.0])]).unwrap();
        assert_eq!(one.lines().count(), 3);
    }

    #[test]
    fn sweep_grid_layout() {
        let mut cells = Vec::new();
        for g in [3.0, 1.0, 2.0] {
            for a in [0.55, 0.45, 0.5] {
                cells.push(SweepCell {
                    gamma: g,
                    alpha: a,
                    acc: g * 0.1 + a,
                });
            }
        }
        let csv = sweep_report(&cells).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "gamma\\alpha,0.45,0.5,0.55");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));

        let single = sweep_report(&[SweepCell {
            gamma: 2.0,
            alpha: 0.55,
            acc: 0.75,
        }])
        .unwrap();
        assert_eq!(single, "gamma\\alpha,0.55\n2,0.75\n");
    }

    #[test]
    fn sweep_rejects_duplicates_and_holes() {
        let c = |gamma, alpha| SweepCell { gamma, alpha, acc: 0.5 };
        assert!(sweep_report(&[c(1.0, 0.5), c(1.0, 0.5)]).is_err());
        let err = sweep_report(&[c(1.0, 0.5), c(2.0, 0.5), c(1.0, 0.45)]).unwrap_err();
        assert!(err.to_string().contains("gamma=2 alpha=0.45"), "{err}");
        assert!(sweep_report(&[]).is_err());
    }

    proptest! {
        #[test]
        fn metrics_invariant_under_monotone_maps(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<ScoredSample> = (0..10).map(|i| {
                let n = rng.random_range(2..5);
                let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1u8)).collect();
                labels[0] = 1;
                labels[1] = 0;
                let scores = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                ScoredSample { sample_id: i.to_string(), labels, scores }
            }).collect();
            let mapped: Vec<ScoredSample> = samples.iter().map(|s| ScoredSample {
                scores: s.scores.iter().map(|x| (scale * x + shift).exp()).collect(),
                ..s.clone()
            }).collect();
            prop_assert_eq!(accuracy(&samples), accuracy(&mapped));
            prop_assert_eq!(pooled_auc(&samples).unwrap(), pooled_auc(&mapped).unwrap());
        }
    }
}

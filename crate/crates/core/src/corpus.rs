//! Narrative records, per-context hypothesis groups, triads and subsampling.
//!
//! Records arrive in the two-choice layout (one JSON object per line plus a
//! parallel label file). Records that share an observation pair are merged
//! into one [`ReasoningSample`] holding every distinct hypothesis seen for
//! that pair, labelled 1 if any record picked it as the correct choice.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One line of the record file together with its label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrativeRecord {
    pub story_id: String,
    pub obs1: String,
    pub obs2: String,
    pub hyp1: String,
    pub hyp2: String,
    /// 1 or 2: which hypothesis is the plausible one.
    pub label: u8,
}

impl NarrativeRecord {
    fn correct_and_wrong(&self) -> (&str, &str) {
        if self.label == 1 {
            (&self.hyp1, &self.hyp2)
        } else {
            (&self.hyp2, &self.hyp1)
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    story_id: String,
    obs1: String,
    obs2: String,
    hyp1: String,
    hyp2: String,
}

/// An observation pair with `N` candidate hypotheses and binary labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningSample {
    pub sample_id: String,
    pub obs1: String,
    pub obs2: String,
    pub hypotheses: Vec<String>,
    pub labels: Vec<u8>,
}

impl ReasoningSample {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn correct_count(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    /// Whether the sample can enter the loss: `N >= 2` with both a correct and
    /// a wrong hypothesis.
    pub fn is_trainable(&self) -> bool {
        let k = self.correct_count();
        self.labels.len() == self.hypotheses.len() && self.len() >= 2 && k >= 1 && k < self.len()
    }

    /// Expands the sample back into two-choice records, one per
    /// (correct, wrong) pair.
    pub fn to_records(&self) -> Vec<NarrativeRecord> {
        let correct = self.labels.iter().zip(&self.hypotheses).filter(|(y, _)| **y == 1);
        let mut out = Vec::new();
        for (_, c) in correct {
            for (_, w) in self.labels.iter().zip(&self.hypotheses).filter(|(y, _)| **y == 0) {
                // alternate slot so both label values occur
                let (hyp1, hyp2, label) = if out.len() % 2 == 0 {
                    (c.clone(), w.clone(), 1)
                } else {
                    (w.clone(), c.clone(), 2)
                };
                out.push(NarrativeRecord {
                    story_id: self.sample_id.clone(),
                    obs1: self.obs1.clone(),
                    obs2: self.obs2.clone(),
                    hyp1,
                    hyp2,
                    label,
                });
            }
        }
        out
    }

    pub fn triads(&self) -> Vec<Triad> {
        make_triads(self)
    }
}

/// Reads the record file and its parallel label file.
pub fn load_records(records: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Vec<NarrativeRecord>> {
    let records = records.as_ref();
    let labels = labels.as_ref();
    let record_text = fs::read_to_string(records).map_err(|e| Error::io(records, e))?;
    let label_text = fs::read_to_string(labels).map_err(|e| Error::io(labels, e))?;
    parse_records(records, &record_text, labels, &label_text)
}

/// Parses already-loaded record and label text; paths are only used in errors.
pub fn parse_records(
    records_path: &Path,
    records: &str,
    labels_path: &Path,
    labels: &str,
) -> Result<Vec<NarrativeRecord>> {
    let raw = records
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str::<RawRecord>(line).map_err(|e| Error::Parse {
                path: records_path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let labels = labels
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| match line.trim().parse::<u8>() {
            Ok(v @ (1 | 2)) => Ok(v),
            _ => Err(Error::Parse {
                path: labels_path.to_path_buf(),
                line: i + 1,
                message: format!("expected label 1 or 2, got {line:?}"),
            }),
        })
        .collect::<Result<Vec<_>>>()?;

    if raw.len() != labels.len() {
        return Err(Error::CountMismatch {
            records: raw.len(),
            labels: labels.len(),
        });
    }

    raw.into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (r, label))| {
            if r.obs1.trim().is_empty() || r.obs2.trim().is_empty() {
                return Err(Error::Parse {
                    path: records_path.to_path_buf(),
                    line: i + 1,
                    message: "empty observation".into(),
                });
            }
            if r.hyp1 == r.hyp2 {
                log::warn!("{}: record {} has identical hypotheses", r.story_id, i + 1);
            }
            Ok(NarrativeRecord {
                story_id: r.story_id,
                obs1: r.obs1,
                obs2: r.obs2,
                hyp1: r.hyp1,
                hyp2: r.hyp2,
                label,
            })
        })
        .collect()
}

/// Merges records sharing an identical `(obs1, obs2)` pair.
///
/// Samples come out in first-appearance order of their observation pair and
/// hypotheses in first-appearance order within the sample. The sample id is
/// the first contributing `story_id`, suffixed if another pair already took it.
pub fn group_by_context(records: &[NarrativeRecord]) -> Vec<ReasoningSample> {
    let mut by_context: HashMap<(&str, &str), usize> = HashMap::new();
    let mut hyp_index: Vec<HashMap<String, usize>> = Vec::new();
    let mut samples: Vec<ReasoningSample> = Vec::new();
    let mut used_ids: HashMap<String, usize> = HashMap::new();

    for record in records {
        let key = (record.obs1.as_str(), record.obs2.as_str());
        let slot = *by_context.entry(key).or_insert_with(|| {
            let seen = used_ids.entry(record.story_id.clone()).or_insert(0);
            *seen += 1;
            let sample_id = if *seen == 1 {
                record.story_id.clone()
            } else {
                format!("{}#{}", record.story_id, seen)
            };
            samples.push(ReasoningSample {
                sample_id,
                obs1: record.obs1.clone(),
                obs2: record.obs2.clone(),
                hypotheses: Vec::new(),
                labels: Vec::new(),
            });
            hyp_index.push(HashMap::new());
            samples.len() - 1
        });

        let (correct, wrong) = record.correct_and_wrong();
        for (text, is_correct) in [(correct, true), (wrong, false)] {
            let sample = &mut samples[slot];
            let idx = *hyp_index[slot].entry(text.to_owned()).or_insert_with(|| {
                sample.hypotheses.push(text.to_owned());
                sample.labels.push(0);
                sample.hypotheses.len() - 1
            });
            if is_correct {
                sample.labels[idx] = 1;
            }
        }
    }
    samples
}

/// Splits samples into those the loss can consume and those it cannot
/// (all-correct or all-wrong after grouping).
pub fn partition_trainable(samples: Vec<ReasoningSample>) -> (Vec<ReasoningSample>, Vec<ReasoningSample>) {
    samples.into_iter().partition(ReasoningSample::is_trainable)
}

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// The encoder input for one hypothesis: `[CLS] O1 [SEP] H [SEP] O2 [SEP]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triad {
    pub sample_id: String,
    pub hypothesis_index: usize,
    pub text: String,
}

impl Triad {
    pub fn new(sample_id: &str, hypothesis_index: usize, obs1: &str, hyp: &str, obs2: &str) -> Self {
        let text = format!(
            "{CLS} {} {SEP} {} {SEP} {} {SEP}",
            escape(obs1),
            escape(hyp),
            escape(obs2)
        );
        Triad {
            sample_id: sample_id.to_owned(),
            hypothesis_index,
            text,
        }
    }

    /// Recovers `(obs1, hyp, obs2)` from the triad text.
    pub fn parts(&self) -> Result<(String, String, String)> {
        let bad = |reason: &str| Error::invalid("triad", reason.to_owned());
        let body = self
            .text
            .strip_prefix(CLS)
            .and_then(|s| s.strip_prefix(' '))
            .ok_or_else(|| bad("missing leading marker"))?;

        let mut fields = Vec::with_capacity(3);
        let mut current = String::new();
        let mut i = 0;
        while let Some(c) = body[i..].chars().next() {
            match c {
                '\\' => {
                    let escaped = body[i + 1..].chars().next().ok_or_else(|| bad("dangling escape"))?;
                    current.push(escaped);
                    i += 1 + escaped.len_utf8();
                }
                '[' => {
                    if !body[i..].starts_with(SEP) {
                        return Err(bad("unescaped '['"));
                    }
                    let field = current
                        .strip_suffix(' ')
                        .ok_or_else(|| bad("missing space before marker"))?;
                    fields.push(field.to_owned());
                    current.clear();
                    i += SEP.len();
                    if body[i..].starts_with(' ') {
                        i += 1;
                    }
                }
                _ => {
                    current.push(c);
                    i += c.len_utf8();
                }
            }
        }
        if fields.len() != 3 || !current.is_empty() {
            return Err(bad("expected three marker-terminated fields"));
        }
        let mut it = fields.into_iter();
        Ok((it.next().unwrap(), it.next().unwrap(), it.next().unwrap()))
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c == '\\' || c == '[' {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// One triad per hypothesis, in hypothesis order.
pub fn make_triads(sample: &ReasoningSample) -> Vec<Triad> {
    sample
        .hypotheses
        .iter()
        .enumerate()
        .map(|(j, h)| Triad::new(&sample.sample_id, j, &sample.obs1, h, &sample.obs2))
        .collect()
}

/// Number of items `fraction` of `n` selects: `ceil(fraction * n)`, with
/// products that are integral up to rounding noise taken as integral.
pub fn subsample_size(n: usize, fraction: f64) -> usize {
    let exact = fraction * n as f64;
    let nearest = exact.round();
    let k = if (exact - nearest).abs() <= 1e-9 * exact.max(1.0) {
        nearest
    } else {
        exact.ceil()
    };
    (k as usize).min(n)
}

/// Draws `ceil(fraction * n)` samples without replacement, deterministically
/// in `seed`. The chosen samples keep their corpus order.
pub fn subsample(samples: &[ReasoningSample], fraction: f64, seed: u64) -> Result<Vec<ReasoningSample>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("fraction", format!("{fraction} not in (0, 1]")));
    }
    let k = subsample_size(samples.len(), fraction);
    if k == samples.len() {
        return Ok(samples.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, samples.len(), k).into_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| samples[i].clone()).collect())
}

//! Cosine-similarity verification and identification metrics.
//!
//! Verification thresholds the cosine score of a feature pair; identification
//! retrieves the nearest gallery entry for each probe. A pair or probe is
//! accepted when its score is strictly greater than the threshold.

use std::cmp::Ordering;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{dot, l2_norm, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("vector has zero norm")]
    DegenerateVector,
    #[error("vectors differ in length ({0} vs {1})")]
    Dimension(usize, usize),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("parse error on line {line}: {detail}")]
    Parse { line: u64, detail: String },
}

/// Cosine of the angle between `a` and `b`, in `[-1, 1]`.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Dimension(a.len(), b.len()));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(EvalError::DegenerateVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub same_identity: bool,
}

/// Non-empty list of feature pairs with same/different labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pairs: Vec<Pair>,
}

impl PairSet {
    pub fn new(pairs: Vec<Pair>) -> Result<Self, EvalError> {
        if pairs.is_empty() {
            return Err(EvalError::Protocol("pair set is empty".into()));
        }
        for p in &pairs {
            if p.a.len() != p.b.len() {
                return Err(EvalError::Dimension(p.a.len(), p.b.len()));
            }
            if l2_norm(&p.a) == 0.0 || l2_norm(&p.b) == 0.0 {
                return Err(EvalError::DegenerateVector);
            }
        }
        Ok(Self { pairs })
    }

    /// Pairs `(i, j)` of rows of `features`; same identity when the labels match.
    pub fn from_indices(
        features: &Matrix,
        labels: &[usize],
        pairs: &[(usize, usize)],
    ) -> Result<Self, EvalError> {
        let n = features.rows();
        let mut out = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            if i >= n || j >= n || i >= labels.len() || j >= labels.len() {
                return Err(EvalError::Protocol(format!(
                    "pair ({i}, {j}) indexes past {n} features"
                )));
            }
            out.push(Pair {
                a: features.row(i).to_vec(),
                b: features.row(j).to_vec(),
                same_identity: labels[i] == labels[j],
            });
        }
        Self::new(out)
    }

    /// Reads `id_a,id_b,a_0..a_{K-1},b_0..b_{K-1}` rows after a header line.
    /// Pairs with equal ids are positives.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, EvalError> {
        let mut pairs = Vec::new();
        for (line, record) in csv_records(reader)? {
            if record.len() < 4 || record.len() % 2 != 0 {
                return Err(EvalError::Parse {
                    line,
                    detail: format!(
                        "expected id_a,id_b and two equal-width feature blocks, got {} fields",
                        record.len()
                    ),
                });
            }
            let k = (record.len() - 2) / 2;
            let values = parse_floats(&record[2..], line)?;
            pairs.push(Pair {
                a: values[..k].to_vec(),
                b: values[k..].to_vec(),
                same_identity: record[0] == record[1],
            });
        }
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(score, same_identity)` for every pair.
    pub fn scores(&self) -> Vec<(f64, bool)> {
        self.pairs
            .iter()
            .map(|p| {
                (
                    cosine_score(&p.a, &p.b).expect("validated at construction"),
                    p.same_identity,
                )
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub threshold: f64,
    pub accuracy: f64,
}

/// Best accuracy over all thresholds; see [`best_threshold`].
pub fn verification_accuracy(pairs: &PairSet) -> Result<Verification, EvalError> {
    best_threshold(&pairs.scores())
}

/// Exhaustive sweep over the midpoints between consecutive distinct sorted
/// scores, plus one threshold below and one above every score. Ties in
/// accuracy go to the lowest threshold.
pub fn best_threshold(scores: &[(f64, bool)]) -> Result<Verification, EvalError> {
    let positives = scores.iter().filter(|s| s.1).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::Protocol(format!(
            "verification needs both positive and negative pairs (got {positives} positive, {negatives} negative)"
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // threshold below everything: all positives accepted, all negatives too
    let n = sorted.len() as f64;
    let mut correct = positives;
    let mut best = Verification {
        threshold: sorted[0].0 - 1.0,
        accuracy: correct as f64 / n,
    };
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        // move every pair with this score to the rejected side
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                correct -= 1;
            } else {
                correct += 1;
            }
            i += 1;
        }
        let threshold = if i < sorted.len() {
            (score + sorted[i].0) / 2.0
        } else {
            score + 1.0
        };
        let acc = correct as f64 / n;
        if acc > best.accuracy {
            best = Verification {
                threshold,
                accuracy: acc,
            };
        }
    }
    Ok(best)
}

/// True accept rate at the lowest threshold whose false accept rate is at
/// most `far`.
///
/// With `k = floor(far * negatives)` the threshold is the `(k+1)`-th largest
/// negative score, so at most `k` negatives score strictly above it. Needs
/// `far * negatives >= 1`.
pub fn tar_at_far(pairs: &PairSet, far: f64) -> Result<f64, EvalError> {
    tar_at_far_scores(&pairs.scores(), far)
}

pub fn tar_at_far_scores(scores: &[(f64, bool)], far: f64) -> Result<f64, EvalError> {
    if !(far > 0.0 && far <= 1.0) {
        return Err(EvalError::Protocol(format!(
            "FAR must lie in (0, 1], got {far}"
        )));
    }
    let mut neg: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
    let pos: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    if pos.is_empty() {
        return Err(EvalError::Protocol(
            "TAR needs at least one positive pair".into(),
        ));
    }
    let allowed = (far * neg.len() as f64 + 1e-9).floor() as usize;
    if allowed < 1 {
        let needed = (1.0 / far).ceil();
        return Err(EvalError::Protocol(format!(
            "FAR {far} needs at least {needed} negative pairs, got {}",
            neg.len()
        )));
    }
    if allowed >= neg.len() {
        // every negative may be accepted
        return Ok(1.0);
    }
    neg.sort_by(|a, b| b.total_cmp(a));
    let threshold = neg[allowed];
    Ok(pos.iter().filter(|&&s| s > threshold).count() as f64 / pos.len() as f64)
}

/// Gallery and probe features with identities.
#[derive(Clone, Debug, PartialEq)]
pub struct GalleryProbe {
    gallery: Vec<(Vec<f64>, String)>,
    probes: Vec<(Vec<f64>, String)>,
}

impl GalleryProbe {
    pub fn new(
        gallery: Vec<(Vec<f64>, String)>,
        probes: Vec<(Vec<f64>, String)>,
    ) -> Result<Self, EvalError> {
        if gallery.is_empty() || probes.is_empty() {
            return Err(EvalError::Protocol(format!(
                "identification needs a non-empty gallery and probe set (got {} gallery, {} probes)",
                gallery.len(),
                probes.len()
            )));
        }
        let dim = gallery[0].0.len();
        for (v, _) in gallery.iter().chain(&probes) {
            if v.len() != dim {
                return Err(EvalError::Dimension(dim, v.len()));
            }
            if l2_norm(v) == 0.0 {
                return Err(EvalError::DegenerateVector);
            }
        }
        if let Some((_, id)) = probes
            .iter()
            .find(|(_, id)| !gallery.iter().any(|(_, g)| g == id))
        {
            return Err(EvalError::Protocol(format!(
                "probe identity {id:?} is missing from the gallery"
            )));
        }
        Ok(Self { gallery, probes })
    }

    /// Reads `role,id,f_0..f_{K-1}` rows after a header line, `role` being
    /// `gallery` or `probe`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, EvalError> {
        let mut gallery = Vec::new();
        let mut probes = Vec::new();
        for (line, record) in csv_records(reader)? {
            if record.len() < 3 {
                return Err(EvalError::Parse {
                    line,
                    detail: "expected role,id,features...".into(),
                });
            }
            let v = parse_floats(&record[2..], line)?;
            let entry = (v, record[1].clone());
            match record[0].as_str() {
                "gallery" => gallery.push(entry),
                "probe" => probes.push(entry),
                other => {
                    return Err(EvalError::Parse {
                        line,
                        detail: format!("unknown role {other:?}"),
                    });
                }
            }
        }
        Self::new(gallery, probes)
    }

    pub fn gallery(&self) -> &[(Vec<f64>, String)] {
        &self.gallery
    }

    pub fn probes(&self) -> &[(Vec<f64>, String)] {
        &self.probes
    }
}

/// Fraction of probes whose most similar gallery entry has the probe's
/// identity. Equal scores resolve to the lowest gallery index.
pub fn rank1_identification(gp: &GalleryProbe) -> Result<f64, EvalError> {
    let mut hits = 0usize;
    for (probe, id) in &gp.probes {
        let mut best: Option<(f64, usize)> = None;
        for (i, (g, _)) in gp.gallery.iter().enumerate() {
            let s = cosine_score(probe, g)?;
            if best.is_none_or(|(b, _)| s.total_cmp(&b) == Ordering::Greater) {
                best = Some((s, i));
            }
        }
        let (_, idx) = best.expect("gallery is non-empty");
        if &gp.gallery[idx].1 == id {
            hits += 1;
        }
    }
    Ok(hits as f64 / gp.probes.len() as f64)
}

/// Rows of a feature file: `label,f0,f1,...` with a header line. A column
/// named `angle` is skipped, so angular-view scatter files load as well.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatures {
    pub labels: Vec<String>,
    pub features: Vec<Vec<f64>>,
}

impl LabeledFeatures {
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| EvalError::Parse {
                line: 1,
                detail: e.to_string(),
            })?
            .clone();
        if header.len() < 2 {
            return Err(EvalError::Parse {
                line: 1,
                detail: "expected label and at least one feature column".into(),
            });
        }
        let keep: Vec<usize> = (1..header.len())
            .filter(|&i| &header[i] != "angle")
            .collect();
        let mut labels = Vec::new();
        let mut features = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| EvalError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                detail: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let fields: Vec<String> = keep.iter().map(|&i| rec[i].to_owned()).collect();
            features.push(parse_floats(&fields, line)?);
            labels.push(rec[0].to_owned());
        }
        Ok(Self { labels, features })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn row(&self, i: usize, line: u64) -> Result<(&[f64], &str), EvalError> {
        if i >= self.len() {
            return Err(EvalError::Parse {
                line,
                detail: format!("row index {i} out of range for {} features", self.len()),
            });
        }
        Ok((&self.features[i], &self.labels[i]))
    }

    /// Pairs listed as `index_a,index_b` rows (0-based, header line first);
    /// same identity when the labels match.
    pub fn pairs_from_csv<R: Read>(&self, reader: R) -> Result<PairSet, EvalError> {
        let mut pairs = Vec::new();
        for (line, record) in csv_records(reader)? {
            let [a, b] = parse_indices::<2>(&record, line)?;
            let (fa, la) = self.row(a, line)?;
            let (fb, lb) = self.row(b, line)?;
            pairs.push(Pair {
                a: fa.to_vec(),
                b: fb.to_vec(),
                same_identity: la == lb,
            });
        }
        PairSet::new(pairs)
    }

    /// Gallery and probe rows listed as `index,role` (header line first).
    pub fn gallery_from_csv<R: Read>(&self, reader: R) -> Result<GalleryProbe, EvalError> {
        let mut gallery = Vec::new();
        let mut probes = Vec::new();
        for (line, record) in csv_records(reader)? {
            if record.len() != 2 {
                return Err(EvalError::Parse {
                    line,
                    detail: "expected index,role".into(),
                });
            }
            let [i] = parse_indices::<1>(&record[..1], line)?;
            let (f, l) = self.row(i, line)?;
            let entry = (f.to_vec(), l.to_owned());
            match record[1].as_str() {
                "gallery" => gallery.push(entry),
                "probe" => probes.push(entry),
                other => {
                    return Err(EvalError::Parse {
                        line,
                        detail: format!("unknown role {other:?}"),
                    })
                }
            }
        }
        GalleryProbe::new(gallery, probes)
    }
}

fn parse_indices<const N: usize>(record: &[String], line: u64) -> Result<[usize; N], EvalError> {
    if record.len() != N {
        return Err(EvalError::Parse {
            line,
            detail: format!("expected {N} index columns, got {}", record.len()),
        });
    }
    let mut out = [0usize; N];
    for (o, f) in out.iter_mut().zip(record) {
        *o = f.parse().map_err(|_| EvalError::Parse {
            line,
            detail: format!("not a row index: {f:?}"),
        })?;
    }
    Ok(out)
}

fn csv_records<R: Read>(reader: R) -> Result<Vec<(u64, Vec<String>)>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| EvalError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            detail: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

pub(crate) fn parse_floats(fields: &[String], line: u64) -> Result<Vec<f64>, EvalError> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| EvalError::Parse {
                    line,
                    detail: format!("not a finite number: {f:?}"),
                })
        })
        .collect()
}

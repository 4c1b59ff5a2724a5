//! WAV + manifest ingestion.
//!
//! A manifest is a CSV file with columns `path,label,speaker` (header row
//! optional). Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub label: u8,
    pub speaker: String,
    pub id: String,
}

impl Utterance {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: u8,
    pub speaker: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: expected path,label,speaker", line + 1),
            });
        }
        if line == 0 && rec[1].parse::<u8>().is_err() {
            continue; // header
        }
        let label: u8 = rec[1].parse().ok().filter(|&d| d <= 9).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: label must be a digit 0-9, got {:?}", line + 1, &rec[1]),
        })?;
        let p = PathBuf::from(&rec[0]);
        out.push(ManifestEntry {
            path: if p.is_absolute() { p } else { base.join(p) },
            label,
            speaker: rec[2].to_string(),
        });
    }
    Ok(out)
}

/// Reads a mono WAV file (integer PCM of any width, or 32-bit float) into
/// samples scaled to [-1, 1].
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, f64)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected mono audio, found {} channels", spec.channels),
        });
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(i32::from(spec.bits_per_sample) - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
    };
    Ok((samples, f64::from(spec.sample_rate)))
}

pub fn load_utterance(entry: &ManifestEntry) -> Result<Utterance> {
    let (samples, sample_rate) = read_wav(&entry.path)?;
    Ok(Utterance {
        samples,
        sample_rate,
        label: entry.label,
        speaker: entry.speaker.clone(),
        id: entry.path.display().to_string(),
    })
}

pub fn load_corpus(manifest: &Path) -> Result<Vec<Utterance>> {
    read_manifest(manifest)?.iter().map(load_utterance).collect()
}

/// How the corpus is divided into training and test utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SplitStrategy {
    /// Random split with `train_count` utterances spread over the digits in
    /// proportion to their frequency.
    Stratified,
    /// Every utterance of `speaker` goes to the test set.
    HoldOutSpeaker { speaker: String },
}

/// Returns `(train, test)` index lists into `labels`, each in ascending
/// order after shuffling-based selection.
pub fn split_indices(
    labels: &[u8],
    speakers: &[String],
    train_count: usize,
    strategy: &SplitStrategy,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng_from_seed(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    match strategy {
        SplitStrategy::Stratified => {
            let total = labels.len().max(1);
            let want = train_count.min(labels.len());
            let mut by_digit: Vec<Vec<usize>> = vec![Vec::new(); 10];
            for (i, &l) in labels.iter().enumerate() {
                by_digit[l as usize].push(i);
            }
            // largest-remainder apportionment of `want` over digits
            let quotas: Vec<f64> = by_digit.iter().map(|v| want as f64 * v.len() as f64 / total as f64).collect();
            let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
            let mut order: Vec<usize> = (0..10).collect();
            order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
            let mut left = want - take.iter().sum::<usize>();
            for d in order {
                if left == 0 {
                    break;
                }
                if take[d] < by_digit[d].len() {
                    take[d] += 1;
                    left -= 1;
                }
            }
            for (d, idx) in by_digit.iter_mut().enumerate() {
                idx.shuffle(&mut rng);
                train.extend_from_slice(&idx[..take[d]]);
                test.extend_from_slice(&idx[take[d]..]);
            }
        }
        SplitStrategy::HoldOutSpeaker { speaker } => {
            let mut pool: Vec<usize> = Vec::new();
            for (i, s) in speakers.iter().enumerate() {
                if s == speaker {
                    test.push(i);
                } else {
                    pool.push(i);
                }
            }
            pool.shuffle(&mut rng);
            pool.truncate(train_count);
            train = pool;
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.csv");
        std::fs::write(&m, "path,label,speaker\na.wav,3,jo\n/abs/b.wav, 7 ,lu\n").unwrap();
        let e = read_manifest(&m).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].path, dir.path().join("a.wav"));
        assert_eq!(e[1].path, PathBuf::from("/abs/b.wav"));
        assert_eq!(e[1].label, 7);
        std::fs::write(&m, "a.wav,3,jo\n").unwrap();
        assert_eq!(read_manifest(&m).unwrap().len(), 1);
        std::fs::write(&m, "a.wav,12,jo\n").unwrap();
        assert!(read_manifest(&m).is_err());
    }

    #[test]
    fn wav_roundtrip_int_and_float() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for s in [0i16, 16384, -32768] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        let (s, r) = read_wav(&p).unwrap();
        assert_eq!(r, 8000.0);
        assert_eq!(s, vec![0.0, 0.5, -1.0]);

        let spec = hound::WavSpec {
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
            ..spec
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(0.25f32).unwrap();
        w.finalize().unwrap();
        assert_eq!(read_wav(&p).unwrap().0, vec![0.25]);
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn stratified_split_is_proportional_and_disjoint() {
        let labels: Vec<u8> = (0..300).map(|i| (i % 10) as u8).collect();
        let speakers = vec![String::from("s"); 300];
        let (tr, te) = split_indices(&labels, &speakers, 100, &SplitStrategy::Stratified, 1);
        assert_eq!(tr.len(), 100);
        assert_eq!(te.len(), 200);
        for d in 0..10u8 {
            assert_eq!(tr.iter().filter(|&&i| labels[i] == d).count(), 10);
        }
        assert!(tr.iter().all(|i| !te.contains(i)));
        let again = split_indices(&labels, &speakers, 100, &SplitStrategy::Stratified, 1);
        assert_eq!(again.0, tr);
    }

    #[test]
    fn speaker_holdout() {
        let labels = vec![0u8, 1, 2, 3];
        let speakers: Vec<String> = ["a", "b", "a", "c"].iter().map(|s| s.to_string()).collect();
        let (tr, te) = split_indices(
            &labels,
            &speakers,
            10,
            &SplitStrategy::HoldOutSpeaker { speaker: "a".into() },
            0,
        );
        assert_eq!(te, vec![0, 2]);
        assert_eq!(tr, vec![1, 3]);
    }
}

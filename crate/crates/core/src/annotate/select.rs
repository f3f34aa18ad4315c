use std::io::BufRead;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::word_count;
use super::AnnotateError;

/// One function-level unit of the base corpus: `{"id", "code"}` per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeUnit {
    pub id: String,
    pub code: String,
}

pub fn load_code_units(path: &Path) -> Result<Vec<CodeUnit>, AnnotateError> {
    let io = |e| AnnotateError::Io(path.display().to_string(), e);
    let file = std::fs::File::open(path).map_err(io)?;
    let mut units = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let unit = serde_json::from_str(&line).map_err(|e| AnnotateError::Schema {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        units.push(unit);
    }
    Ok(units)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub samples: Vec<CodeUnit>,
    pub eligible: usize,
    pub diagnostic: Option<String>,
}

/// Uniform sample without replacement among units whose whitespace word
/// count lies in `min_len..=max_len`. Output keeps corpus order.
pub fn select_base_samples(
    corpus: &[CodeUnit],
    min_len: usize,
    max_len: usize,
    sample_n: usize,
    seed: u64,
) -> Result<Selection, AnnotateError> {
    if min_len >= max_len {
        return Err(AnnotateError::InvalidArgument(format!(
            "min_len {min_len} must be below max_len {max_len}"
        )));
    }
    let eligible: Vec<&CodeUnit> = corpus
        .iter()
        .filter(|u| (min_len..=max_len).contains(&word_count(&u.code)))
        .collect();
    if eligible.len() <= sample_n {
        let diagnostic = (eligible.len() < sample_n).then(|| {
            format!(
                "only {} eligible units for a requested sample of {sample_n}; returning all",
                eligible.len()
            )
        });
        return Ok(Selection {
            samples: eligible.iter().map(|u| (*u).clone()).collect(),
            eligible: eligible.len(),
            diagnostic,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, eligible.len(), sample_n).into_vec();
    picked.sort_unstable();
    Ok(Selection {
        samples: picked.into_iter().map(|i| eligible[i].clone()).collect(),
        eligible: eligible.len(),
        diagnostic: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<CodeUnit> {
        (0..100)
            .map(|i| CodeUnit {
                id: format!("u{i}"),
                code: "w ".repeat(if i % 5 < 2 { 10 } else { 100 }),
            })
            .collect()
    }

    #[test]
    fn samples_within_bounds_and_reproducible() {
        let units = corpus();
        let a = select_base_samples(&units, 5, 20, 10, 7).unwrap();
        assert_eq!(a.eligible, 40);
        assert_eq!(a.samples.len(), 10);
        assert!(a.samples.iter().all(|u| word_count(&u.code) == 10));
        assert_eq!(a, select_base_samples(&units, 5, 20, 10, 7).unwrap());
        let b = select_base_samples(&units, 5, 20, 10, 8).unwrap();
        assert_ne!(a.samples, b.samples);
    }

    #[test]
    fn short_corpus_returns_everything() {
        let units = corpus();
        let sel = select_base_samples(&units, 5, 20, 50, 1).unwrap();
        assert_eq!(sel.samples.len(), 40);
        assert!(sel.diagnostic.is_some());
    }

    #[test]
    fn bounds_must_be_ordered() {
        assert!(select_base_samples(&corpus(), 20, 20, 1, 0).is_err());
    }
}

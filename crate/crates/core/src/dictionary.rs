//! Shared kernel centers built with the coherence criterion.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::kernels::KernelBank;

/// The `r` kernel centers shared by every kernel and every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    centers: Vec<Vec<f64>>,
    dim: usize,
    /// Coherence threshold used to build the dictionary, if it was built greedily.
    tau: Option<f64>,
}

impl Dictionary {
    /// Greedy coherence pass: a candidate is admitted iff
    /// `max_q max_ℓ κ_q(x, x̄_ℓ) ≤ τ` against every retained center.
    /// The first candidate is always admitted.
    pub fn build_coherence(bank: &KernelBank, candidates: &[Vec<f64>], tau: f64) -> Result<Self> {
        let first = candidates.first().ok_or(Error::EmptyCandidates)?;
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "coherence threshold must lie in (0, 1], got {tau}"
            )));
        }
        let dim = first.len();
        let mut centers: Vec<Vec<f64>> = Vec::new();
        for x in candidates {
            check_len(dim, x.len())?;
            if centers.iter().all(|c| bank.coherence(x, c) <= tau) {
                centers.push(x.clone());
            }
        }
        Ok(Self {
            centers,
            dim,
            tau: Some(tau),
        })
    }

    pub fn from_centers(centers: Vec<Vec<f64>>) -> Result<Self> {
        let dim = centers.first().ok_or(Error::EmptyDictionary)?.len();
        for c in &centers {
            check_len(dim, c.len())?;
        }
        Ok(Self {
            centers,
            dim,
            tau: None,
        })
    }

    #[cfg(test)]
    pub(crate) fn empty(dim: usize) -> Self {
        Self {
            centers: Vec::new(),
            dim,
            tau: None,
        }
    }

    /// Number of centers `r`.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Input dimension `L`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Indices of the `s` centers most coherent with `x` (largest
    /// `max_q κ_q(x, x̄_ℓ)` first, ties to the lower index).
    pub fn select_top_s(&self, bank: &KernelBank, x: &[f64], s: usize) -> Result<Vec<usize>> {
        if s == 0 {
            return Err(Error::InvalidParameter(
                "selection size s must be ≥ 1".into(),
            ));
        }
        check_len(self.dim, x.len())?;
        let mut scored: Vec<(usize, f64)> = self
            .centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, bank.coherence(x, c)))
            .collect();
        // Stable sort keeps lower indices first among ties.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(s.min(self.len()));
        Ok(scored.into_iter().map(|(i, _)| i).collect())
    }

    /// One center per line, `L` comma-separated columns, no header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for c in &self.centers {
            let line: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, path: &Path) -> Result<Self> {
        let mut centers = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            centers.push(row);
        }
        Self::from_centers(centers).map_err(|e| match e {
            Error::DimensionMismatch { expected, found } => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("rows must all have {expected} columns, found {found}"),
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bank() -> KernelBank {
        KernelBank::from_bandwidths(&[0.1, 0.3]).unwrap()
    }

    #[test]
    fn tau_one_admits_all_distinct() {
        let cands: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.01, 0.5]).collect();
        let d = Dictionary::build_coherence(&bank(), &cands, 1.0).unwrap();
        assert_eq!(d.len(), 20);
        assert_eq!(d.tau(), Some(1.0));
    }

    #[test]
    fn duplicates_collapse() {
        let cands = vec![vec![0.3, 0.3], vec![0.3, 0.3]];
        let d = Dictionary::build_coherence(&bank(), &cands, 0.999).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn first_candidate_always_admitted() {
        let cands = vec![vec![0.7, 0.1], vec![0.71, 0.1]];
        let d = Dictionary::build_coherence(&bank(), &cands, 0.01).unwrap();
        assert_eq!(d.centers(), &[vec![0.7, 0.1]]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            Dictionary::build_coherence(&bank(), &[], 0.9),
            Err(Error::EmptyCandidates)
        ));
        assert!(Dictionary::build_coherence(&bank(), &[vec![0.0]], 0.0).is_err());
        assert!(Dictionary::build_coherence(&bank(), &[vec![0.0], vec![0.0, 1.0]], 0.9).is_err());
    }

    #[test]
    fn top_s_selection() {
        let cands: Vec<Vec<f64>> = vec![
            vec![0.1, 0.1],
            vec![0.9, 0.9],
            vec![0.5, 0.5],
            vec![0.2, 0.8],
            vec![0.8, 0.2],
        ];
        let d = Dictionary::from_centers(cands).unwrap();
        assert_eq!(d.select_top_s(&bank(), &[0.2, 0.8], 1).unwrap(), vec![3]);
        let all = d.select_top_s(&bank(), &[0.0, 0.0], 9).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        assert!(d.select_top_s(&bank(), &[0.0, 0.0], 0).is_err());
    }

    #[test]
    fn top_s_ties_prefer_lower_index() {
        let d =
            Dictionary::from_centers(vec![vec![0.4, 0.5], vec![0.6, 0.5], vec![0.5, 0.9]]).unwrap();
        assert_eq!(d.select_top_s(&bank(), &[0.5, 0.5], 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn top_s_matches_exhaustive_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let cands: Vec<Vec<f64>> = (0..30)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let d = Dictionary::build_coherence(&bank(), &cands, 0.95).unwrap();
            let x = vec![rng.random::<f64>(), rng.random::<f64>()];
            let s = rng.random_range(1..=8);
            // Oracle: rank every center by how many centers beat it.
            let coh: Vec<f64> = d
                .centers()
                .iter()
                .map(|c| {
                    bank()
                        .kernels()
                        .iter()
                        .map(|k| k.eval(&x, c).unwrap())
                        .fold(0.0, f64::max)
                })
                .collect();
            let mut oracle: Vec<usize> = (0..d.len()).collect();
            oracle.sort_by(|&a, &b| coh[b].partial_cmp(&coh[a]).unwrap().then(a.cmp(&b)));
            oracle.truncate(s);
            assert_eq!(d.select_top_s(&bank(), &x, s).unwrap(), oracle);
        }
    }

    #[test]
    fn csv_round_trip() {
        let d =
            Dictionary::from_centers(vec![vec![0.1, 1.0 / 3.0], vec![0.987654321, 2e-9]]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dictionary::read_csv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back.centers(), d.centers());
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let text = "0.1,0.2\n0.3\n";
        assert!(Dictionary::read_csv(text.as_bytes(), Path::new("mem")).is_err());
        let text = "0.1,abc\n";
        assert!(Dictionary::read_csv(text.as_bytes(), Path::new("mem")).is_err());
    }

    #[test]
    fn greedy_size_is_not_monotone_in_tau() {
        // a and two points q1, q2 flank p: the loose threshold admits p, which
        // then shadows both q's; the strict threshold rejects p and keeps both.
        let b = KernelBank::from_bandwidths(&[0.1]).unwrap();
        let cands = vec![
            vec![0.3, 0.3],
            vec![0.42, 0.3],
            vec![0.465, 0.378],
            vec![0.465, 0.222],
        ];
        let strict = Dictionary::build_coherence(&b, &cands, (-1.125f64).exp()).unwrap();
        let loose = Dictionary::build_coherence(&b, &cands, (-0.5f64).exp()).unwrap();
        assert_eq!(strict.len(), 3);
        assert_eq!(loose.len(), 2);
    }

    #[test]
    fn mean_size_grows_with_tau() {
        let b = bank();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let taus = [0.5, 0.8, 0.9, 0.95, 0.99];
        let mut sums = [0usize; 5];
        for _ in 0..100 {
            let cands: Vec<Vec<f64>> = (0..60)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            for (t, tau) in taus.iter().enumerate() {
                sums[t] += Dictionary::build_coherence(&b, &cands, *tau).unwrap().len();
            }
        }
        assert!(sums.windows(2).all(|w| w[0] < w[1]), "{sums:?}");
    }

    proptest! {
        #[test]
        fn criterion_holds_and_is_deterministic(
            cands in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 1..60),
            tau in 0.05f64..1.0,
        ) {
            let b = bank();
            let d = Dictionary::build_coherence(&b, &cands, tau).unwrap();
            prop_assert!(!d.is_empty());
            for i in 0..d.len() {
                for j in 0..i {
                    for k in b.kernels() {
                        prop_assert!(k.eval(&d.centers()[i], &d.centers()[j]).unwrap() <= tau);
                    }
                }
            }
            prop_assert_eq!(&d, &Dictionary::build_coherence(&b, &cands, tau).unwrap());
        }
    }
}

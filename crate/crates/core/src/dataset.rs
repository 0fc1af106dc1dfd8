//! Instance family generation, labeling, persistence and splitting.
//!
//! Instances are uniform points in the unit square. Labels come from the
//! exact Held-Karp solver up to the policy threshold and from the 2-opt
//! refined insertion labeler above it; the labeler is recorded with every
//! sample so heuristic "ground truth" is never mistaken for exact optima.
//!
//! Each instance draws from its own generator stream derived from
//! `(seed, size, index)`, so generation is byte-identical no matter how the
//! work is distributed over threads.
//!
//! On disk a dataset is UTF-8 JSON lines
//! `{"n":…, "coords":[[x,y],…], "tour":[…], "len":…, "labeler":"…"}`
//! with reals rounded to 9 significant digits, one file per size, plus a
//! single-object `manifest.json`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    canonicalize, distance_matrix, tour_length, tour_to_adjacency, GraphError, SymmetricAdjacency,
    Tour, TspInstance,
};
use crate::seeding::stream_rng;
use crate::solver::{heuristic_label_tour, solve_held_karp, SolverError, SolverKind};

const SPLIT_STREAM_TAG: u64 = 0x73706c69_74000000; // "split"

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: sample violates invariant: {reason}")]
    InvariantViolation {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One training or evaluation record: an instance with its reference tour,
/// length, and target adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub instance: TspInstance,
    pub ref_tour: Tour,
    pub ref_length: f64,
    pub target_adjacency: SymmetricAdjacency,
    pub labeler: SolverKind,
}

impl LabeledSample {
    /// Re-check the structural invariants; `tol` bounds the allowed gap
    /// between the stored length and a recomputation from the coordinates.
    pub fn verify(&self, tol: f64) -> Result<(), String> {
        let d = distance_matrix(&self.instance);
        let recomputed = tour_length(&self.ref_tour, &d).map_err(|e| e.to_string())?;
        if (recomputed - self.ref_length).abs() > tol {
            return Err(format!(
                "stored length {} differs from recomputed {} by more than {tol}",
                self.ref_length, recomputed
            ));
        }
        if self.target_adjacency != tour_to_adjacency(&self.ref_tour) {
            return Err("target adjacency does not match reference tour".into());
        }
        Ok(())
    }
}

/// Which solver labels an instance of a given size.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LabelPolicy {
    /// Exact DP labeling up to and including this size.
    pub exact_max_n: usize,
    /// Insertion starts tried by the heuristic labeler above it.
    pub heuristic_starts: usize,
}

impl Default for LabelPolicy {
    fn default() -> Self {
        Self {
            exact_max_n: 22,
            heuristic_starts: 10,
        }
    }
}

/// Train/validation/test fractions; must sum to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for DatasetSplit {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(DatasetError::BadConfig(
                "split fractions must lie in [0, 1]".into(),
            ));
        }
        if ((self.train + self.validation + self.test) - 1.0).abs() > 1e-12 {
            return Err(DatasetError::BadConfig(
                "split fractions must sum to 1".into(),
            ));
        }
        Ok(())
    }
}

/// Full generation request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub sizes: Vec<usize>,
    pub count_per_size: usize,
    pub seed: u64,
    pub policy: LabelPolicy,
    pub split: DatasetSplit,
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.sizes.is_empty() {
            return Err(DatasetError::BadConfig("no sizes requested".into()));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| !(3..=1024).contains(&n)) {
            return Err(DatasetError::BadConfig(format!(
                "size {n} outside supported range 3..=1024"
            )));
        }
        if self.count_per_size == 0 {
            return Err(DatasetError::BadConfig("count_per_size must be >= 1".into()));
        }
        self.split.validate()
    }
}

/// Sidecar written next to the dataset files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub count_per_size: usize,
    pub split: DatasetSplit,
    pub format_version: u32,
}

impl Manifest {
    pub fn total(&self) -> usize {
        self.sizes.len() * self.count_per_size
    }
}

/// Draw `n` i.i.d. uniform points in the unit square.
pub fn generate_instance(n: usize, rng: &mut impl Rng) -> Result<TspInstance, DatasetError> {
    if n < 3 {
        return Err(DatasetError::Graph(GraphError::TooFewNodes(n)));
    }
    let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
    Ok(TspInstance::new(coords)?)
}

/// Label one instance per the policy: exact DP when it fits, 2-opt refined
/// insertion otherwise.
pub fn label_instance(
    instance: &TspInstance,
    policy: &LabelPolicy,
) -> Result<LabeledSample, DatasetError> {
    let d = distance_matrix(instance);
    let (tour, labeler) = if instance.n() <= policy.exact_max_n {
        (solve_held_karp(&d)?, SolverKind::HeldKarp)
    } else {
        (
            heuristic_label_tour(&d, policy.heuristic_starts)?,
            SolverKind::TwoOptRefined,
        )
    };
    let ref_length = tour_length(&tour, &d)?;
    let target_adjacency = tour_to_adjacency(&tour);
    Ok(LabeledSample {
        instance: instance.clone(),
        ref_tour: tour,
        ref_length,
        target_adjacency,
        labeler,
    })
}

/// Generate and label one sample from its dedicated `(seed, size, index)`
/// stream.
pub fn generate_sample(
    seed: u64,
    n: usize,
    index: usize,
    policy: &LabelPolicy,
) -> Result<LabeledSample, DatasetError> {
    let mut rng = stream_rng(seed, &[n as u64, index as u64]);
    let instance = generate_instance(n, &mut rng)?;
    label_instance(&instance, policy)
}

/// File name for one size within a dataset directory.
pub fn size_file_name(n: usize) -> String {
    format!("tsp_n{n}.jsonl")
}

/// Generate, label and persist the whole family; one JSONL file per size
/// plus `manifest.json`. Output is byte-identical for a given config.
pub fn generate_dataset(config: &GenConfig, out_dir: &Path) -> Result<Manifest, DatasetError> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| DatasetError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;

    for &n in &config.sizes {
        let samples: Vec<LabeledSample> = (0..config.count_per_size)
            .into_par_iter()
            .map(|i| generate_sample(config.seed, n, i, &config.policy))
            .collect::<Result<_, _>>()?;
        let path = out_dir.join(size_file_name(n));
        save_samples(&samples, &path)?;
    }

    let manifest = Manifest {
        seed: config.seed,
        sizes: config.sizes.clone(),
        count_per_size: config.count_per_size,
        split: config.split,
        format_version: 1,
    };
    let path = out_dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body + "\n").map_err(|e| DatasetError::Io {
        path,
        source: e,
    })?;
    Ok(manifest)
}

/// On-disk record layout; field order is part of the format.
#[derive(Serialize, Deserialize)]
struct SampleRecord {
    n: usize,
    coords: Vec<[f64; 2]>,
    tour: Vec<usize>,
    len: f64,
    labeler: SolverKind,
}

/// Round to 9 significant digits for serialization.
fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(8 - exp);
    (x * scale).round() / scale
}

/// Write samples as JSON lines.
pub fn save_samples(samples: &[LabeledSample], path: &Path) -> Result<(), DatasetError> {
    let io_err = |e| DatasetError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for sample in samples {
        let record = SampleRecord {
            n: sample.instance.n(),
            coords: sample
                .instance
                .coords()
                .iter()
                .map(|c| [round_sig9(c[0]), round_sig9(c[1])])
                .collect(),
            tour: sample.ref_tour.order().to_vec(),
            len: round_sig9(sample.ref_length),
            labeler: sample.labeler,
        };
        let line = serde_json::to_string(&record).expect("record serializes");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

/// Tolerance used when re-checking a stored length against coordinates that
/// were themselves rounded for serialization.
const LOAD_LENGTH_TOL: f64 = 1e-6;

/// Read a JSONL dataset file back; every sample is invariant-checked.
pub fn load_dataset(path: &Path) -> Result<Vec<LabeledSample>, DatasetError> {
    let file = fs::File::open(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                reason: e.to_string(),
            })?;
        let sample = sample_from_record(record).map_err(|reason| DatasetError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        })?;
        sample
            .verify(LOAD_LENGTH_TOL)
            .map_err(|reason| DatasetError::InvariantViolation {
                path: path.to_path_buf(),
                line: line_no,
                reason,
            })?;
        samples.push(sample);
    }
    Ok(samples)
}

fn sample_from_record(record: SampleRecord) -> Result<LabeledSample, String> {
    if record.coords.len() != record.n {
        return Err(format!(
            "n={} but {} coordinate pairs",
            record.n,
            record.coords.len()
        ));
    }
    let instance = TspInstance::new(record.coords).map_err(|e| e.to_string())?;
    let ref_tour = canonicalize(&record.tour).map_err(|e| e.to_string())?;
    if ref_tour.n() != record.n {
        return Err(format!(
            "tour has {} nodes, expected {}",
            ref_tour.n(),
            record.n
        ));
    }
    let target_adjacency = tour_to_adjacency(&ref_tour);
    Ok(LabeledSample {
        instance,
        ref_tour,
        ref_length: record.len,
        target_adjacency,
        labeler: record.labeler,
    })
}

/// Seeded shuffle followed by contiguous partition into train/validation/
/// test. Same seed, same membership.
pub fn split_samples(
    samples: Vec<LabeledSample>,
    split: &DatasetSplit,
    seed: u64,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>, Vec<LabeledSample>), DatasetError> {
    split.validate()?;
    let total = samples.len();
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = stream_rng(seed, &[SPLIT_STREAM_TAG]);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    let n_train = (split.train * total as f64 + 1e-9).floor() as usize;
    let n_train_val = ((split.train + split.validation) * total as f64 + 1e-9).floor() as usize;

    let mut shuffled: Vec<Option<LabeledSample>> = samples.into_iter().map(Some).collect();
    let mut take = |ids: &[usize]| -> Vec<LabeledSample> {
        ids.iter()
            .map(|&i| shuffled[i].take().expect("each index used once"))
            .collect()
    };
    let train = take(&order[..n_train]);
    let val = take(&order[n_train..n_train_val]);
    let test = take(&order[n_train_val..]);
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::distance_matrix;
    use crate::solver::solve_brute_force;

    fn small_config() -> GenConfig {
        GenConfig {
            sizes: vec![10],
            count_per_size: 20,
            seed: 7,
            policy: LabelPolicy::default(),
            split: DatasetSplit::default(),
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mut a = stream_rng(9, &[12, 0]);
        let mut b = stream_rng(9, &[12, 0]);
        let x = generate_instance(12, &mut a).unwrap();
        let y = generate_instance(12, &mut b).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn generated_points_cover_unit_square_uniformly() {
        let mut rng = stream_rng(17, &[0]);
        let mut sum = [0.0, 0.0];
        let total = 10_000;
        let inst = generate_instance(total, &mut rng).unwrap();
        for c in inst.coords() {
            assert!((0.0..=1.0).contains(&c[0]) && (0.0..=1.0).contains(&c[1]));
            sum[0] += c[0];
            sum[1] += c[1];
        }
        for s in sum {
            let mean = s / total as f64;
            assert!((0.49..=0.51).contains(&mean), "mean {mean}");
        }
    }

    #[test]
    fn generate_instance_rejects_tiny() {
        let mut rng = stream_rng(1, &[]);
        assert!(generate_instance(2, &mut rng).is_err());
    }

    #[test]
    fn labeling_unit_square() {
        let inst =
            TspInstance::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let sample = label_instance(&inst, &LabelPolicy::default()).unwrap();
        assert!((sample.ref_length - 4.0).abs() < 1e-9);
        assert_eq!(sample.ref_tour.order(), &[0, 1, 2, 3]);
        assert_eq!(sample.labeler, SolverKind::HeldKarp);
        for i in 0..4 {
            assert_eq!(sample.target_adjacency.degree(i), 2);
        }
    }

    #[test]
    fn exact_labels_match_brute_force() {
        for i in 0..5 {
            let mut rng = stream_rng(23, &[8, i]);
            let inst = generate_instance(8, &mut rng).unwrap();
            let sample = label_instance(&inst, &LabelPolicy::default()).unwrap();
            let d = distance_matrix(&inst);
            let bf = tour_length(&solve_brute_force(&d).unwrap(), &d).unwrap();
            assert!((sample.ref_length - bf).abs() < 1e-9);
        }
    }

    #[test]
    fn large_instances_get_heuristic_labeler() {
        let mut rng = stream_rng(3, &[50, 0]);
        let inst = generate_instance(50, &mut rng).unwrap();
        let sample = label_instance(&inst, &LabelPolicy::default()).unwrap();
        assert_eq!(sample.labeler, SolverKind::TwoOptRefined);
        sample.verify(1e-9).unwrap();
    }

    #[test]
    fn dataset_files_are_byte_identical_across_runs() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let config = small_config();
        generate_dataset(&config, dir_a.path()).unwrap();
        generate_dataset(&config, dir_b.path()).unwrap();
        for name in [size_file_name(10), "manifest.json".to_string()] {
            let a = fs::read(dir_a.path().join(&name)).unwrap();
            let b = fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }

    #[test]
    fn manifest_reports_totals() {
        let dir = tempfile::tempdir().unwrap();
        let config = GenConfig {
            sizes: vec![10, 20],
            count_per_size: 5,
            seed: 4,
            policy: LabelPolicy::default(),
            split: DatasetSplit::default(),
        };
        let manifest = generate_dataset(&config, dir.path()).unwrap();
        assert_eq!(manifest.total(), 10);
        let reload: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(reload.total(), 10);
        assert_eq!(reload.format_version, 1);
    }

    #[test]
    fn round_trip_preserves_fields() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config();
        generate_dataset(&config, dir.path()).unwrap();
        let originals: Vec<LabeledSample> = (0..config.count_per_size)
            .map(|i| generate_sample(config.seed, 10, i, &config.policy).unwrap())
            .collect();
        let loaded = load_dataset(&dir.path().join(size_file_name(10))).unwrap();
        assert_eq!(loaded.len(), originals.len());
        for (a, b) in loaded.iter().zip(&originals) {
            assert_eq!(a.ref_tour, b.ref_tour);
            assert_eq!(a.labeler, b.labeler);
            assert_eq!(a.target_adjacency, b.target_adjacency);
            assert!((a.ref_length - b.ref_length).abs() < 1e-8);
            for (ca, cb) in a.instance.coords().iter().zip(b.instance.coords()) {
                assert!((ca[0] - cb[0]).abs() < 1e-8 && (ca[1] - cb[1]).abs() < 1e-8);
            }
            a.verify(LOAD_LENGTH_TOL).unwrap();
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(
            &path,
            "{\"n\":3,\"coords\":[[0,0],[0.5,0],[1,0]],\"tour\":[0,1,2],\"len\":2.0,\"labeler\":\"held_karp\"}\nnot json\n",
        )
        .unwrap();
        match load_dataset(&path) {
            Err(DatasetError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-line error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_length_reports_invariant_violation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(
            &path,
            "{\"n\":3,\"coords\":[[0,0],[0.5,0],[1,0]],\"tour\":[0,1,2],\"len\":9.0,\"labeler\":\"held_karp\"}\n",
        )
        .unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(DatasetError::InvariantViolation { line: 1, .. })
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let samples: Vec<LabeledSample> = (0..100)
            .map(|i| generate_sample(5, 5, i, &LabelPolicy::default()).unwrap())
            .collect();
        let split = DatasetSplit::default();
        let (tr, va, te) = split_samples(samples.clone(), &split, 11).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (80, 10, 10));
        let (tr2, va2, te2) = split_samples(samples.clone(), &split, 11).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(va, va2);
        assert_eq!(te, te2);

        // Disjoint cover: every original sample lands in exactly one part.
        let mut seen: Vec<&LabeledSample> = tr.iter().chain(&va).chain(&te).collect();
        assert_eq!(seen.len(), 100);
        seen.sort_by(|a, b| {
            a.instance.coords()[0][0]
                .partial_cmp(&b.instance.coords()[0][0])
                .unwrap()
        });
        let mut originals: Vec<&LabeledSample> = samples.iter().collect();
        originals.sort_by(|a, b| {
            a.instance.coords()[0][0]
                .partial_cmp(&b.instance.coords()[0][0])
                .unwrap()
        });
        for (a, b) in seen.iter().zip(&originals) {
            assert_eq!(a.ref_tour, b.ref_tour);
        }
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let split = DatasetSplit {
            train: 0.5,
            validation: 0.2,
            test: 0.2,
        };
        assert!(split.validate().is_err());
    }
}

//! Dataset ingestion (IDX binary pairs and a synthetic Gaussian-blob
//! generator) and the three data-similarity partitioners: IID, two classes
//! per worker via sorted chunks, and single class per worker.

use crate::error::{Error, Result};
use crate::numerics::{gaussian_vector, Purpose, RngStream, StreamId};
use std::fs;
use std::path::Path;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub samples: Vec<(Vec<f64>, usize)>,
    pub n_classes: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map(|(f, _)| f.len()).unwrap_or(0)
    }

    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut h = vec![0usize; self.n_classes];
        for &i in indices {
            h[self.samples[i].1] += 1;
        }
        h
    }
}

/// Per-worker index lists into a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignment: Vec<Vec<usize>>,
    /// Samples left unassigned to keep shards equal (logged, not an error).
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    Iid,
    NonIid2,
    NonIid1,
}

fn read_u32_be(bytes: &[u8], offset: usize, field: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::ingest(field, "file truncated before field"));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an IDX image/label file pair. Pixels are scaled to [0, 1] and each
/// image flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let img_bytes = fs::read(images_path)
        .map_err(|e| Error::ingest("images file", format!("{}: {e}", images_path.display())))?;
    let lab_bytes = fs::read(labels_path)
        .map_err(|e| Error::ingest("labels file", format!("{}: {e}", labels_path.display())))?;

    let img_magic = read_u32_be(&img_bytes, 0, "images magic")?;
    if img_magic != IDX_IMAGES_MAGIC {
        return Err(Error::ingest(
            "images magic",
            format!("expected 0x{IDX_IMAGES_MAGIC:08x}, got 0x{img_magic:08x}"),
        ));
    }
    let lab_magic = read_u32_be(&lab_bytes, 0, "labels magic")?;
    if lab_magic != IDX_LABELS_MAGIC {
        return Err(Error::ingest(
            "labels magic",
            format!("expected 0x{IDX_LABELS_MAGIC:08x}, got 0x{lab_magic:08x}"),
        ));
    }

    let n_images = read_u32_be(&img_bytes, 4, "image count")? as usize;
    let rows = read_u32_be(&img_bytes, 8, "image rows")? as usize;
    let cols = read_u32_be(&img_bytes, 12, "image cols")? as usize;
    let n_labels = read_u32_be(&lab_bytes, 4, "label count")? as usize;

    if n_images != n_labels {
        return Err(Error::ingest(
            "sample count",
            format!("{n_images} images vs {n_labels} labels"),
        ));
    }
    let pixels = rows * cols;
    let expected = 16 + n_images * pixels;
    if img_bytes.len() < expected {
        return Err(Error::ingest(
            "images payload",
            format!("need {expected} bytes, file has {}", img_bytes.len()),
        ));
    }
    if lab_bytes.len() < 8 + n_labels {
        return Err(Error::ingest(
            "labels payload",
            format!("need {} bytes, file has {}", 8 + n_labels, lab_bytes.len()),
        ));
    }

    let mut samples = Vec::with_capacity(n_images);
    let mut max_label = 0usize;
    for i in 0..n_images {
        let start = 16 + i * pixels;
        let feats: Vec<f64> = img_bytes[start..start + pixels]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        let label = lab_bytes[8 + i] as usize;
        max_label = max_label.max(label);
        samples.push((feats, label));
    }
    Ok(LabeledDataset {
        samples,
        n_classes: max_label + 1,
    })
}

/// Gaussian clusters with distinct seeded means; deterministic given the seed.
pub fn synth_blobs(
    seed: u64,
    n_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
) -> Result<LabeledDataset> {
    if n_classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::config("synth_blobs: all counts must be positive"));
    }
    if spread < 0.0 {
        return Err(Error::config("synth_blobs: spread must be non-negative"));
    }
    let mut samples = Vec::with_capacity(n_classes * per_class);
    for c in 0..n_classes {
        let mut rng = RngStream::new(seed, StreamId::new(c as u32, 0, Purpose::DataGen));
        // Class mean: a scaled Gaussian direction, distinct per class stream.
        let mean = gaussian_vector(&mut rng, dim, 3.0 * (dim as f64).sqrt());
        for _ in 0..per_class {
            let noise = gaussian_vector(&mut rng, dim, spread * (dim as f64).sqrt());
            let feats = mean.add(&noise);
            samples.push((feats.as_slice().to_vec(), c));
        }
    }
    Ok(LabeledDataset {
        samples,
        n_classes,
    })
}

/// Splits a dataset among `n` workers. See the README for the exact
/// semantics of each mode; shapes follow the experiment protocol:
/// IID shuffles then deals equal shards (remainder dropped and logged),
/// NonIID2 sorts by label, cuts 2n chunks, and deals two random chunks to
/// each worker without replacement, NonIID1 gives each worker exactly one
/// class.
pub fn partition(
    ds: &LabeledDataset,
    n: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<Partition> {
    if n == 0 {
        return Err(Error::config("partition: worker count must be positive"));
    }
    if ds.is_empty() {
        return Err(Error::config("partition: empty dataset"));
    }
    let mut rng = RngStream::new(seed, StreamId::new(0, 0, Purpose::Partition));
    match mode {
        PartitionMode::Iid => {
            let shard = ds.len() / n;
            if shard == 0 {
                return Err(Error::config(format!(
                    "partition: {} samples cannot feed {} workers",
                    ds.len(),
                    n
                )));
            }
            let order = rng.shuffled_indices(ds.len());
            let assignment: Vec<Vec<usize>> = (0..n)
                .map(|w| order[w * shard..(w + 1) * shard].to_vec())
                .collect();
            let dropped = ds.len() - shard * n;
            if dropped > 0 {
                log::info!("partition: dropped {dropped} remainder samples to keep shards equal");
            }
            Ok(Partition {
                assignment,
                dropped,
            })
        }
        PartitionMode::NonIid2 => {
            let chunks = 2 * n;
            if ds.len() < chunks {
                return Err(Error::config(format!(
                    "partition: {} samples cannot form {chunks} chunks",
                    ds.len()
                )));
            }
            // Sort by label (stable on index), cut into 2n near-equal chunks.
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.sort_by_key(|&i| (ds.samples[i].1, i));
            let base = ds.len() / chunks;
            let extra = ds.len() % chunks;
            let mut chunk_list = Vec::with_capacity(chunks);
            let mut cursor = 0;
            for c in 0..chunks {
                let size = base + usize::from(c < extra);
                chunk_list.push(order[cursor..cursor + size].to_vec());
                cursor += size;
            }
            // Deal two random chunks per worker, without replacement.
            let deal = rng.shuffled_indices(chunks);
            let assignment: Vec<Vec<usize>> = (0..n)
                .map(|w| {
                    let mut shard = chunk_list[deal[2 * w]].clone();
                    shard.extend_from_slice(&chunk_list[deal[2 * w + 1]]);
                    shard
                })
                .collect();
            Ok(Partition {
                assignment,
                dropped: 0,
            })
        }
        PartitionMode::NonIid1 => {
            let c = ds.n_classes;
            // Indices per class.
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
            for (i, (_, y)) in ds.samples.iter().enumerate() {
                by_class[*y].push(i);
            }
            if by_class.iter().any(|v| v.is_empty()) {
                return Err(Error::config(
                    "partition: NonIID1 needs at least one sample of every class",
                ));
            }
            let perm = rng.shuffled_indices(c);
            let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); n];
            if n <= c {
                for (w, shard) in assignment.iter_mut().enumerate() {
                    *shard = by_class[perm[w]].clone();
                }
                if n < c {
                    log::info!(
                        "partition: NonIID1 with n={n} < C={c}: {} classes unused",
                        c - n
                    );
                }
            } else {
                // Classes reused round-robin with disjoint sample splits.
                let mut takers: Vec<Vec<usize>> = vec![Vec::new(); c];
                for w in 0..n {
                    takers[perm[w % c]].push(w);
                }
                for (class, workers) in takers.iter().enumerate() {
                    if workers.is_empty() {
                        continue;
                    }
                    let pool = &by_class[class];
                    let share = pool.len() / workers.len();
                    if share == 0 {
                        return Err(Error::config(format!(
                            "partition: class {class} has too few samples for {} workers",
                            workers.len()
                        )));
                    }
                    for (slot, &w) in workers.iter().enumerate() {
                        assignment[w] = pool[slot * share..(slot + 1) * share].to_vec();
                    }
                }
            }
            Ok(Partition {
                assignment,
                dropped: 0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_idx_pair(dir: &Path, imgs: &[[u8; 4]], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let mut ib: Vec<u8> = Vec::new();
        ib.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        ib.extend_from_slice(&(imgs.len() as u32).to_be_bytes());
        ib.extend_from_slice(&2u32.to_be_bytes());
        ib.extend_from_slice(&2u32.to_be_bytes());
        for img in imgs {
            ib.extend_from_slice(img);
        }
        let mut lb: Vec<u8> = Vec::new();
        lb.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lb.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lb.extend_from_slice(labels);
        let ip = dir.join("imgs.idx");
        let lp = dir.join("labs.idx");
        fs::write(&ip, ib).unwrap();
        fs::write(&lp, lb).unwrap();
        (ip, lp)
    }

    #[test]
    fn idx_round_trip_hand_crafted() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[[0, 51, 102, 255], [255, 0, 255, 0]], &[3, 7]);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_dim(), 4);
        assert_eq!(ds.samples[0].0, vec![0.0, 0.2, 0.4, 1.0]);
        assert_eq!(ds.samples[0].1, 3);
        assert_eq!(ds.samples[1].0, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(ds.n_classes, 8);
    }

    #[test]
    fn idx_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[[0; 4]], &[0]);
        // Swap the files: the labels path now carries the images magic.
        let err = load_idx(&lp, &ip).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("magic"), "{msg}");
    }

    #[test]
    fn idx_rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut ib: Vec<u8> = Vec::new();
        ib.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        ib.extend_from_slice(&3u32.to_be_bytes());
        ib.extend_from_slice(&1u32.to_be_bytes());
        ib.extend_from_slice(&1u32.to_be_bytes());
        ib.extend_from_slice(&[0, 0, 0]);
        let mut lb: Vec<u8> = Vec::new();
        lb.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lb.extend_from_slice(&2u32.to_be_bytes());
        lb.extend_from_slice(&[0, 1]);
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("labs.idx");
        fs::write(&ip, ib).unwrap();
        fs::write(&lp, lb).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("sample count"), "{err}");
    }

    #[test]
    fn idx_rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[[1, 2, 3, 4]], &[0]);
        let mut bytes = fs::read(&ip).unwrap();
        bytes.truncate(bytes.len() - 2);
        fs::write(&ip, bytes).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("payload"), "{err}");
    }

    #[test]
    fn blobs_single_class_all_zero_labels() {
        let ds = synth_blobs(1, 1, 10, 3, 0.5).unwrap();
        assert!(ds.samples.iter().all(|(_, y)| *y == 0));
    }

    #[test]
    fn blobs_zero_spread_collapses_to_means() {
        let ds = synth_blobs(2, 3, 5, 4, 0.0).unwrap();
        for c in 0..3 {
            let class: Vec<&Vec<f64>> = ds
                .samples
                .iter()
                .filter(|(_, y)| *y == c)
                .map(|(f, _)| f)
                .collect();
            for f in &class {
                assert_eq!(*f, class[0]);
            }
        }
    }

    #[test]
    fn blobs_deterministic_given_seed() {
        let a = synth_blobs(9, 4, 6, 5, 1.0).unwrap();
        let b = synth_blobs(9, 4, 6, 5, 1.0).unwrap();
        assert_eq!(a.samples.len(), b.samples.len());
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa, sb);
        }
    }

    fn check_disjoint(p: &Partition, total: usize) {
        let mut seen = vec![false; total];
        for shard in &p.assignment {
            for &i in shard {
                assert!(!seen[i], "index {i} assigned twice");
                seen[i] = true;
            }
        }
    }

    #[test]
    fn iid_single_worker_gets_everything() {
        let ds = synth_blobs(3, 2, 8, 3, 1.0).unwrap();
        let p = partition(&ds, 1, PartitionMode::Iid, 0).unwrap();
        assert_eq!(p.assignment.len(), 1);
        assert_eq!(p.assignment[0].len(), ds.len());
        assert_eq!(p.dropped, 0);
    }

    #[test]
    fn iid_equal_shards_disjoint_with_logged_remainder() {
        let ds = synth_blobs(5, 2, 11, 3, 1.0).unwrap(); // 22 samples
        let p = partition(&ds, 4, PartitionMode::Iid, 1).unwrap();
        assert!(p.assignment.iter().all(|s| s.len() == 5));
        assert_eq!(p.dropped, 2);
        check_disjoint(&p, ds.len());
    }

    #[test]
    fn non_iid2_at_most_two_classes_per_worker() {
        let ds = synth_blobs(4, 10, 30, 3, 1.0).unwrap();
        let p = partition(&ds, 10, PartitionMode::NonIid2, 7).unwrap();
        check_disjoint(&p, ds.len());
        let covered: usize = p.assignment.iter().map(|s| s.len()).sum();
        assert_eq!(covered, ds.len());
        for shard in &p.assignment {
            let classes: std::collections::BTreeSet<usize> =
                shard.iter().map(|&i| ds.samples[i].1).collect();
            assert!(classes.len() <= 2, "classes {classes:?}");
        }
    }

    #[test]
    fn non_iid1_exactly_one_class_per_worker() {
        let ds = synth_blobs(6, 10, 20, 3, 1.0).unwrap();
        let p = partition(&ds, 10, PartitionMode::NonIid1, 5).unwrap();
        check_disjoint(&p, ds.len());
        for shard in &p.assignment {
            let classes: std::collections::BTreeSet<usize> =
                shard.iter().map(|&i| ds.samples[i].1).collect();
            assert_eq!(classes.len(), 1);
        }
        // With n == C every class appears exactly once.
        let first_classes: std::collections::BTreeSet<usize> = p
            .assignment
            .iter()
            .map(|s| ds.samples[s[0]].1)
            .collect();
        assert_eq!(first_classes.len(), 10);
    }

    #[test]
    fn non_iid1_reuses_classes_when_workers_exceed_them() {
        let ds = synth_blobs(8, 3, 20, 3, 1.0).unwrap();
        let p = partition(&ds, 5, PartitionMode::NonIid1, 2).unwrap();
        check_disjoint(&p, ds.len());
        for shard in &p.assignment {
            assert!(!shard.is_empty());
            let classes: std::collections::BTreeSet<usize> =
                shard.iter().map(|&i| ds.samples[i].1).collect();
            assert_eq!(classes.len(), 1);
        }
    }

    #[test]
    fn partitions_deterministic_given_seed() {
        let ds = synth_blobs(11, 10, 25, 3, 1.0).unwrap();
        for mode in [PartitionMode::Iid, PartitionMode::NonIid2, PartitionMode::NonIid1] {
            let a = partition(&ds, 10, mode, 42).unwrap();
            let b = partition(&ds, 10, mode, 42).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn infeasible_combinations_rejected() {
        let ds = synth_blobs(1, 2, 2, 3, 1.0).unwrap(); // 4 samples
        assert!(partition(&ds, 5, PartitionMode::Iid, 0).is_err());
        assert!(partition(&ds, 3, PartitionMode::NonIid2, 0).is_err());
    }
}

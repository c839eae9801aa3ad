//! On-disk dataset format and loader.
//!
//! A dataset directory holds `manifest.json` plus, per frame, three raw map
//! files `<id>_{ra,rd,ad}.f32` — little-endian 32-bit floats, row-major, no
//! header; shapes come from the manifest geometry. Labeling appends target
//! map files (`<id>_{hm,off,offmask,hd,hdmask}.f32`) and records them in the
//! manifest.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::labeling::{build_targets, Annotation, LabelConfig, LabelMode, TargetMaps, NUM_CLASSES};
use crate::sim::{DatasetSpec, GeneratedSequence, RadarFrame};
use crate::{CoreError, Map2d, RadarGeometry, Result};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(CoreError::Config(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetFiles {
    pub heatmap: String,
    pub offset: String,
    pub offset_mask: String,
    pub heading: String,
    pub heading_mask: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub id: String,
    pub index: usize,
    pub ra: String,
    pub rd: String,
    pub ad: String,
    pub annotations: Vec<Annotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<TargetFiles>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitLists {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub geometry: RadarGeometry,
    pub frame_dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_mode: Option<LabelMode>,
    pub splits: SplitLists,
    pub sequences: Vec<SequenceRecord>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.splits.train,
            Split::Val => &self.splits.val,
            Split::Test => &self.splits.test,
        }
    }

    pub fn sequence(&self, id: &str) -> Result<&SequenceRecord> {
        self.sequences
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| CoreError::Dataset(format!("sequence '{id}' not in manifest")))
    }

    pub fn frame_count(&self) -> usize {
        self.sequences.iter().map(|s| s.frames.len()).sum()
    }
}

/// Writes `data` as little-endian f32, row-major, no header.
pub fn write_f32(path: &Path, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| CoreError::io(path, e))
}

/// Reads a raw f32 file, validating the element count against the shape the
/// manifest implies.
pub fn read_f32(path: &Path, expected: usize, frame_id: &str) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| {
        CoreError::Dataset(format!("frame {frame_id}: cannot read {}: {e}", path.display()))
    })?;
    if bytes.len() != expected * 4 {
        return Err(CoreError::MapLength {
            frame: frame_id.to_string(),
            file: path.display().to_string(),
            expected,
            got: bytes.len() / 4,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn seq_id(i: usize) -> String {
    format!("s{i:03}")
}

/// Writes generated sequences plus the manifest into `out_dir`.
pub fn write_dataset(
    out_dir: &Path,
    spec: &DatasetSpec,
    sequences: &[GeneratedSequence],
) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
    let (train, val, test) = crate::sim::split_indices(sequences.len(), spec.seed);
    let to_ids = |v: &[usize]| v.iter().map(|&i| seq_id(i)).collect::<Vec<_>>();

    let mut records = Vec::with_capacity(sequences.len());
    for (si, seq) in sequences.iter().enumerate() {
        let sid = seq_id(si);
        let mut frames = Vec::with_capacity(seq.frames.len());
        for (fi, (frame, anns)) in seq.frames.iter().enumerate() {
            let fid = format!("{sid}_f{fi}");
            let names = (
                format!("{fid}_ra.f32"),
                format!("{fid}_rd.f32"),
                format!("{fid}_ad.f32"),
            );
            write_f32(&out_dir.join(&names.0), &frame.ra.data)?;
            write_f32(&out_dir.join(&names.1), &frame.rd.data)?;
            write_f32(&out_dir.join(&names.2), &frame.ad.data)?;
            frames.push(FrameRecord {
                id: fid,
                index: fi,
                ra: names.0,
                rd: names.1,
                ad: names.2,
                annotations: anns.clone(),
                targets: None,
            });
        }
        records.push(SequenceRecord { id: sid, frames });
    }

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        geometry: spec.geometry,
        frame_dt: spec.frame_dt,
        label_mode: None,
        splits: SplitLists {
            train: to_ids(&train),
            val: to_ids(&val),
            test: to_ids(&test),
        },
        sequences: records,
    };
    save_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

pub fn save_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    let path = root.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(manifest).map_err(|e| CoreError::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    fs::write(&path, json.as_bytes()).map_err(|e| CoreError::io(&path, e))
}

/// Handle to an on-disk dataset; maps are loaded lazily per frame.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let path = root.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CoreError::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(CoreError::Dataset(format!(
                "manifest version {} unsupported",
                manifest.version
            )));
        }
        manifest.geometry.validate()?;
        Ok(Dataset { root, manifest })
    }

    pub fn geometry(&self) -> &RadarGeometry {
        &self.manifest.geometry
    }

    /// Frame records of a split, in manifest order.
    pub fn split_frames(&self, split: Split) -> Vec<(&SequenceRecord, &FrameRecord)> {
        let mut out = Vec::new();
        for sid in self.manifest.split(split) {
            if let Ok(seq) = self.manifest.sequence(sid) {
                for f in &seq.frames {
                    out.push((seq, f));
                }
            }
        }
        out
    }

    pub fn load_frame(&self, rec: &FrameRecord) -> Result<(RadarFrame, Vec<Annotation>)> {
        let g = self.manifest.geometry;
        let ra = read_f32(&self.root.join(&rec.ra), g.r_bins * g.a_bins, &rec.id)?;
        let rd = read_f32(&self.root.join(&rec.rd), g.r_bins * g.d_bins, &rec.id)?;
        let ad = read_f32(&self.root.join(&rec.ad), g.a_bins * g.d_bins, &rec.id)?;
        Ok((
            RadarFrame {
                ra: Map2d::from_vec(g.r_bins, g.a_bins, ra),
                rd: Map2d::from_vec(g.r_bins, g.d_bins, rd),
                ad: Map2d::from_vec(g.a_bins, g.d_bins, ad),
                geometry: g,
                frame_index: rec.index,
            },
            rec.annotations.clone(),
        ))
    }

    /// Loads cached target maps; errors when the frame has not been labeled.
    pub fn load_targets(&self, rec: &FrameRecord) -> Result<TargetMaps> {
        let files = rec.targets.as_ref().ok_or_else(|| {
            CoreError::Dataset(format!("frame {} has no targets; run labeling first", rec.id))
        })?;
        let g = self.manifest.geometry;
        let (r, a) = (g.r_bins, g.a_bins);
        let (qr, qa) = (r / 4, a / 4);
        let hm = read_f32(&self.root.join(&files.heatmap), NUM_CLASSES * r * a, &rec.id)?;
        let off = read_f32(&self.root.join(&files.offset), 2 * r * a, &rec.id)?;
        let offm = read_f32(&self.root.join(&files.offset_mask), r * a, &rec.id)?;
        let hd = read_f32(&self.root.join(&files.heading), 2 * qr * qa, &rec.id)?;
        let hdm = read_f32(&self.root.join(&files.heading_mask), qr * qa, &rec.id)?;
        Ok(TargetMaps {
            heatmap: hm
                .chunks_exact(r * a)
                .map(|c| Map2d::from_vec(r, a, c.to_vec()))
                .collect(),
            offset: [
                Map2d::from_vec(r, a, off[..r * a].to_vec()),
                Map2d::from_vec(r, a, off[r * a..].to_vec()),
            ],
            offset_mask: Map2d::from_vec(r, a, offm),
            heading: [
                Map2d::from_vec(qr, qa, hd[..qr * qa].to_vec()),
                Map2d::from_vec(qr, qa, hd[qr * qa..].to_vec()),
            ],
            heading_mask: Map2d::from_vec(qr, qa, hdm),
        })
    }
}

/// Builds and caches target maps for every frame, updating the manifest's
/// label mode and per-frame target file references. Returns the number of
/// frames labeled.
pub fn label_dataset(root: &Path, cfg: &LabelConfig) -> Result<usize> {
    let mut ds = Dataset::open(root)?;
    let mut count = 0usize;
    let mut sequences = ds.manifest.sequences.clone();
    for seq in &mut sequences {
        for rec in &mut seq.frames {
            let (frame, anns) = ds.load_frame(rec)?;
            let targets = build_targets(&frame.ra, &anns, cfg)?;
            let files = write_target_files(root, &rec.id, &targets)?;
            rec.targets = Some(files);
            count += 1;
        }
    }
    ds.manifest.sequences = sequences;
    ds.manifest.label_mode = Some(cfg.mode);
    save_manifest(root, &ds.manifest)?;
    Ok(count)
}

pub fn write_target_files(root: &Path, frame_id: &str, t: &TargetMaps) -> Result<TargetFiles> {
    let files = TargetFiles {
        heatmap: format!("{frame_id}_hm.f32"),
        offset: format!("{frame_id}_off.f32"),
        offset_mask: format!("{frame_id}_offmask.f32"),
        heading: format!("{frame_id}_hd.f32"),
        heading_mask: format!("{frame_id}_hdmask.f32"),
    };
    let mut hm = Vec::new();
    for m in &t.heatmap {
        hm.extend_from_slice(&m.data);
    }
    write_f32(&root.join(&files.heatmap), &hm)?;
    let mut off = t.offset[0].data.clone();
    off.extend_from_slice(&t.offset[1].data);
    write_f32(&root.join(&files.offset), &off)?;
    write_f32(&root.join(&files.offset_mask), &t.offset_mask.data)?;
    let mut hd = t.heading[0].data.clone();
    hd.extend_from_slice(&t.heading[1].data);
    write_f32(&root.join(&files.heading), &hd)?;
    write_f32(&root.join(&files.heading_mask), &t.heading_mask.data)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::generate_sequences;

    fn tiny_spec() -> DatasetSpec {
        DatasetSpec {
            n_sequences: 3,
            frames_per_sequence: 2,
            seed: 5,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn roundtrip_write_load_bit_identical_as_f32() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec();
        let seqs = generate_sequences(&spec).unwrap();
        write_dataset(dir.path(), &spec, &seqs).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.manifest.frame_count(), 6);

        let rec = &ds.manifest.sequences[0].frames[0];
        let (frame, anns) = ds.load_frame(rec).unwrap();
        // Values survive the f32 round trip exactly when re-quantized.
        for (loaded, orig) in frame.ra.data.iter().zip(&seqs[0].frames[0].0.ra.data) {
            assert_eq!(*loaded, *orig as f32 as f64);
        }
        assert_eq!(anns, seqs[0].frames[0].1);
    }

    #[test]
    fn missing_map_file_names_frame() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec();
        let seqs = generate_sequences(&spec).unwrap();
        write_dataset(dir.path(), &spec, &seqs).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        let rec = &ds.manifest.sequences[1].frames[0];
        std::fs::remove_file(dir.path().join(&rec.ra)).unwrap();
        let err = ds.load_frame(rec).unwrap_err().to_string();
        assert!(err.contains(&rec.id), "{err}");
    }

    #[test]
    fn truncated_map_file_reports_length() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec();
        let seqs = generate_sequences(&spec).unwrap();
        write_dataset(dir.path(), &spec, &seqs).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        let rec = &ds.manifest.sequences[0].frames[1];
        let path = dir.path().join(&rec.ra);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        let err = ds.load_frame(rec).unwrap_err();
        assert!(matches!(err, CoreError::MapLength { .. }), "{err}");
    }

    #[test]
    fn labeling_adds_targets_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec();
        let seqs = generate_sequences(&spec).unwrap();
        write_dataset(dir.path(), &spec, &seqs).unwrap();
        let n = label_dataset(dir.path(), &LabelConfig::default()).unwrap();
        assert_eq!(n, 6);

        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.manifest.label_mode, Some(LabelMode::Bivariate));
        let rec = &ds.manifest.sequences[0].frames[0];
        let t = ds.load_targets(rec).unwrap();
        assert_eq!(t.heatmap.len(), NUM_CLASSES);
        // Peak value 1 per annotation survives the f32 cast.
        for ann in &rec.annotations {
            let m = &t.heatmap[ann.class_id as usize];
            let (r, c) = m.argmax();
            assert_eq!(m.at(r, c), 1.0);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let spec = tiny_spec();
        for d in [&d1, &d2] {
            let seqs = generate_sequences(&spec).unwrap();
            write_dataset(d.path(), &spec, &seqs).unwrap();
        }
        for entry in std::fs::read_dir(d1.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(d1.path().join(&name)).unwrap();
            let b = std::fs::read(d2.path().join(&name)).unwrap();
            assert_eq!(a, b, "file {name:?} differs");
        }
    }
}

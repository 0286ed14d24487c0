//! Single-file model container.
//!
//! Layout: 8-byte magic `VOXTRIAG`, `u32` format version, `u32` section count,
//! a section table of (`u16` name length, name, `u64` payload length), the
//! payloads in table order, and a trailing SHA-256 over everything before it.
//! Section `meta` is UTF-8 JSON (structure, scalers, biases, trees,
//! provenance); section `f32` holds every weight and support-vector array as
//! little-endian 32-bit floats, addressed by element offsets recorded in the
//! metadata. All integers are little-endian.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifiers::{ClassifierError, GridPoint, KernelSpec, OvoOutput, OvoSvm, Scaler, SvmBinary, SvmFamily, TreeEnsemble};
use crate::cnn::{CnnConfig, CnnModel};
use crate::dataset::{DiagnosisLabel, EtiologyGroup};

use super::train::{PipelineConfig, STAGE1_FAMILY, STAGE2_FAMILY, STAGE3_FAMILY};
use super::vectors::{check_dim, V1_DIM, V2_DIM, V3_DIM};
use super::{hex, PipelineError};

pub const BUNDLE_MAGIC: &[u8; 8] = b"VOXTRIAG";
pub const BUNDLE_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum BundleError {
    #[error("not a model bundle (bad magic)")]
    BadMagic,
    #[error("bundle format version {found}, this reader supports {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("bundle checksum mismatch")]
    Checksum,
    #[error("bundle is truncated")]
    Truncated,
    #[error("malformed bundle: {0}")]
    Malformed(String),
}

/// One SVM stage: its scaler, the fitted one-vs-one ensemble and the chosen
/// hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct StageModel {
    pub name: String,
    pub family: SvmFamily,
    pub point: GridPoint,
    pub scaler: Scaler,
    pub svm: OvoSvm,
}

impl StageModel {
    pub fn predict(&self, raw: &[f64], dim: usize) -> Result<OvoOutput, PipelineError> {
        check_dim("stage input", raw, dim)?;
        Ok(self.svm.predict_scores(&self.scaler.apply(raw)?)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatModel {
    /// Only the imputation means are used; trees see unscaled features.
    pub scaler: Scaler,
    pub trees: TreeEnsemble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTable {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub family: SvmFamily,
    pub best: GridPoint,
    pub best_cv_accuracy: f64,
    pub grid_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_digest: String,
    pub data_digest: String,
    pub crate_version: String,
    pub n_train: usize,
    pub n_val: usize,
    pub cnn_epochs: usize,
    pub cnn_best_epoch: usize,
    pub stages: Vec<StageSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub format_version: u32,
    pub config: PipelineConfig,
    pub cnn: CnnModel<f32>,
    pub stage1: StageModel,
    pub stage2: StageModel,
    pub stage3: StageModel,
    pub flat: FlatModel,
    pub labels: Vec<String>,
    pub groups: Vec<GroupTable>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct MachineMeta {
    a: usize,
    b: usize,
    kernel: KernelSpec,
    bias: f64,
    c: f64,
    converged: bool,
    n_sv: usize,
    dim: usize,
    sv_offset: usize,
    coef_offset: usize,
}

#[derive(Serialize, Deserialize)]
struct StageMeta {
    name: String,
    family: SvmFamily,
    point: GridPoint,
    scaler: Scaler,
    n_classes: usize,
    machines: Vec<MachineMeta>,
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    config: PipelineConfig,
    cnn_config: CnnConfig,
    provenance: Provenance,
    labels: Vec<String>,
    groups: Vec<GroupTable>,
    cnn: Vec<TensorEntry>,
    stages: Vec<StageMeta>,
    flat: FlatModel,
}

fn push_f32(buf: &mut Vec<f32>, values: impl IntoIterator<Item = f64>) -> usize {
    let offset = buf.len();
    buf.extend(values.into_iter().map(|v| v as f32));
    offset
}

fn stage_meta(stage: &StageModel, tensors: &mut Vec<f32>) -> StageMeta {
    let machines = stage
        .svm
        .machines
        .iter()
        .map(|&((a, b), ref m)| {
            let dim = m.dim().unwrap_or(0);
            MachineMeta {
                a,
                b,
                kernel: m.kernel,
                bias: m.bias,
                c: m.c,
                converged: m.converged,
                n_sv: m.support_vectors.len(),
                dim,
                sv_offset: push_f32(tensors, m.support_vectors.iter().flatten().copied()),
                coef_offset: push_f32(tensors, m.coefs.iter().copied()),
            }
        })
        .collect();
    StageMeta {
        name: stage.name.clone(),
        family: stage.family,
        point: stage.point,
        scaler: stage.scaler.clone(),
        n_classes: stage.svm.n_classes,
        machines,
    }
}

fn slice(tensors: &[f32], offset: usize, len: usize) -> Result<&[f32], BundleError> {
    tensors
        .get(offset..offset.checked_add(len).ok_or(BundleError::Truncated)?)
        .ok_or_else(|| BundleError::Malformed(format!("tensor range {offset}+{len} out of bounds")))
}

fn stage_from_meta(meta: StageMeta, tensors: &[f32]) -> Result<StageModel, BundleError> {
    let machines = meta
        .machines
        .into_iter()
        .map(|m| {
            let sv = slice(tensors, m.sv_offset, m.n_sv * m.dim)?;
            let coefs = slice(tensors, m.coef_offset, m.n_sv)?;
            let support_vectors = if m.dim == 0 {
                vec![Vec::new(); m.n_sv]
            } else {
                sv.chunks(m.dim).map(|r| r.iter().map(|&v| v as f64).collect()).collect()
            };
            let svm = SvmBinary {
                support_vectors,
                coefs: coefs.iter().map(|&v| v as f64).collect(),
                bias: m.bias,
                kernel: m.kernel,
                c: m.c,
                converged: m.converged,
            };
            Ok(((m.a, m.b), svm))
        })
        .collect::<Result<Vec<_>, BundleError>>()?;
    Ok(StageModel {
        name: meta.name,
        family: meta.family,
        point: meta.point,
        scaler: meta.scaler,
        svm: OvoSvm { n_classes: meta.n_classes, machines },
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BundleError> {
        let end = self.pos.checked_add(n).ok_or(BundleError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(BundleError::Truncated)?;
        self.pos = end;
        Ok(out)
    }
    fn u16(&mut self) -> Result<u16, BundleError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, BundleError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl ModelBundle {
    /// Structural invariants: label tables, class counts, machine counts and
    /// the stage input widths.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Bundle(BundleError::Malformed(m)));
        if self.format_version != BUNDLE_VERSION {
            return Err(BundleError::VersionMismatch { found: self.format_version, supported: BUNDLE_VERSION }.into());
        }
        let names: Vec<&str> = DiagnosisLabel::ALL.iter().map(|d| d.name()).collect();
        if self.labels != names {
            return bad("label table does not list the nine diagnoses in order".into());
        }
        let groups_ok = self.groups.len() == 3
            && EtiologyGroup::ALL.iter().zip(&self.groups).all(|(g, t)| {
                t.name == g.name() && t.members.iter().map(String::as_str).eq(g.members().iter().map(|d| d.name()))
            });
        if !groups_ok {
            return bad("group table does not match the three etiological groups".into());
        }
        let stages = [
            (&self.stage1, 2, V1_DIM, STAGE1_FAMILY),
            (&self.stage2, 3, V2_DIM, STAGE2_FAMILY),
            (&self.stage3, 9, V3_DIM, STAGE3_FAMILY),
        ];
        for (s, k, dim, family) in stages {
            if s.svm.n_classes != k || s.svm.machines.len() != k * (k - 1) / 2 || s.family != family {
                return bad(format!("{} should be a {k}-class {family:?} ensemble", s.name));
            }
            check_dim("scaler", &s.scaler.mean, dim)?;
            for (_, m) in &s.svm.machines {
                if m.dim().is_some_and(|d| d != dim) {
                    return Err(PipelineError::Dimension { stage: "support vector", expected: dim, found: m.dim().unwrap() });
                }
            }
        }
        if self.flat.trees.n_classes != 9 {
            return bad("flat ensemble must cover nine classes".into());
        }
        let unseeded = |c: &CnnConfig| CnnConfig { seed: 0, ..c.clone() };
        if unseeded(&self.config.cnn) != unseeded(&self.cnn.config) {
            return bad("CNN configuration differs from the pipeline configuration".into());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors: Vec<f32> = Vec::new();
        let cnn = self
            .cnn
            .tensors()
            .into_iter()
            .map(|(name, shape, values)| {
                let offset = tensors.len();
                tensors.extend_from_slice(values);
                TensorEntry { name, shape, offset }
            })
            .collect();
        let stages = [&self.stage1, &self.stage2, &self.stage3].iter().map(|s| stage_meta(s, &mut tensors)).collect();
        let meta = BundleMeta {
            config: self.config.clone(),
            cnn_config: self.cnn.config.clone(),
            provenance: self.provenance.clone(),
            labels: self.labels.clone(),
            groups: self.groups.clone(),
            cnn,
            stages,
            flat: self.flat.clone(),
        };
        let meta_json = serde_json::to_vec(&meta).expect("metadata serializes");
        let tensor_bytes: Vec<u8> = tensors.iter().flat_map(|v| v.to_le_bytes()).collect();

        let mut out = Vec::with_capacity(meta_json.len() + tensor_bytes.len() + 128);
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        let sections: [(&str, &[u8]); 2] = [("meta", &meta_json), ("f32", &tensor_bytes)];
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        for (name, payload) in &sections {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        }
        for (_, payload) in &sections {
            out.extend_from_slice(payload);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PipelineError> {
        if bytes.len() < BUNDLE_MAGIC.len() + 8 + DIGEST_LEN {
            return Err(BundleError::Truncated.into());
        }
        if &bytes[..8] != BUNDLE_MAGIC {
            return Err(BundleError::BadMagic.into());
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != BUNDLE_VERSION {
            return Err(BundleError::VersionMismatch { found: version, supported: BUNDLE_VERSION }.into());
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(BundleError::Checksum.into());
        }

        let mut r = Reader { bytes: body, pos: 12 };
        let n = r.u32()? as usize;
        let mut table = Vec::new();
        for _ in 0..n.min(64) {
            let len = r.u16()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| BundleError::Malformed("section name".into()))?;
            table.push((name, r.u64()? as usize));
        }
        let mut meta_bytes = None;
        let mut f32_bytes = None;
        for (name, len) in table {
            let payload = r.take(len)?;
            match name.as_str() {
                "meta" => meta_bytes = Some(payload),
                "f32" => f32_bytes = Some(payload),
                _ => {}
            }
        }
        if r.pos != body.len() {
            return Err(BundleError::Malformed("trailing bytes after sections".into()).into());
        }
        let missing = |s: &str| BundleError::Malformed(format!("missing section {s}"));
        let meta: BundleMeta =
            serde_json::from_slice(meta_bytes.ok_or_else(|| missing("meta"))?).map_err(|e| BundleError::Malformed(e.to_string()))?;
        let raw = f32_bytes.ok_or_else(|| missing("f32"))?;
        if raw.len() % 4 != 0 {
            return Err(BundleError::Malformed("f32 section length".into()).into());
        }
        let tensors: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();

        let cnn_tensors = meta
            .cnn
            .into_iter()
            .map(|t| {
                let len = t.shape.iter().product();
                Ok((t.name, t.shape, slice(&tensors, t.offset, len)?.to_vec()))
            })
            .collect::<Result<Vec<_>, BundleError>>()?;
        let cnn = CnnModel::from_tensors(&meta.cnn_config, cnn_tensors)?;
        let mut stages = meta.stages.into_iter();
        let mut next = || -> Result<StageModel, BundleError> {
            stage_from_meta(stages.next().ok_or_else(|| BundleError::Malformed("missing stage".into()))?, &tensors)
        };
        let bundle = ModelBundle {
            format_version: version,
            config: meta.config,
            cnn,
            stage1: next()?,
            stage2: next()?,
            stage3: next()?,
            flat: meta.flat,
            labels: meta.labels,
            groups: meta.groups,
            provenance: meta.provenance,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// SHA-256 of the serialized bundle.
    pub fn digest(&self) -> String {
        hex(&Sha256::digest(self.to_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let bytes = self.to_bytes();
        let tmp = path.with_extension("partial");
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl From<ClassifierError> for BundleError {
    fn from(e: ClassifierError) -> Self {
        BundleError::Malformed(e.to_string())
    }
}

impl From<crate::cnn::CnnError> for BundleError {
    fn from(e: crate::cnn::CnnError) -> Self {
        BundleError::Malformed(e.to_string())
    }
}

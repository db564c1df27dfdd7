//! Checkpoint container.
//!
//! ```text
//! "SSMPNET1"
//! u32 manifest length, manifest (UTF-8 `key=value` lines)
//! u32 tensor count
//! per tensor: u32 name length, name, u32 rank, u32 dims.., f32 values
//! ```
//!
//! All integers and floats are little-endian. Parameters are stored as
//! `param.<name>` and momentum buffers as `velocity.<name>`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::net::Network;
use super::spec::NetworkSpec;
use super::ssmp::SsmpStrategy;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SSMPNET1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained network plus everything needed to resume training.
///
/// Random streams are keyed by `(seed, epoch, ...)`, so the seed and the
/// epoch counter are the whole generator state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub velocities: Vec<Tensor<f32>>,
    /// Category names; position is the class index.
    pub categories: Vec<String>,
    /// Number of completed epochs.
    pub epoch: usize,
    pub seed: u64,
    pub schedule_stage: usize,
    /// Free-form single-line entries, such as the training configuration.
    pub notes: BTreeMap<String, String>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::checkpoint(field, "file is truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.shape().len());
    for &d in t.shape() {
        put_u32(out, d);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn field<'m>(manifest: &'m BTreeMap<String, String>, key: &str) -> Result<&'m str> {
    manifest.get(key).map(String::as_str).ok_or_else(|| Error::checkpoint(key, "missing"))
}

fn parse_field<T: std::str::FromStr>(manifest: &BTreeMap<String, String>, key: &str) -> Result<T> {
    field(manifest, key)?.parse().map_err(|_| Error::checkpoint(key, "unparsable value"))
}

impl Checkpoint {
    /// Fresh checkpoint with zero velocities.
    pub fn new(network: Network<f32>, categories: Vec<String>, seed: u64) -> Result<Self> {
        if categories.len() != network.spec().categories() {
            return Err(Error::checkpoint(
                "categories",
                format!("{} names for {} outputs", categories.len(), network.spec().categories()),
            ));
        }
        let velocities = network.zero_grads();
        Ok(Self { network, velocities, categories, epoch: 0, seed, schedule_stage: 0, notes: BTreeMap::new() })
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.network.spec()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let spec = self.spec();
        let mut manifest = BTreeMap::new();
        manifest.insert("format_version".to_string(), CHECKPOINT_VERSION.to_string());
        manifest.insert("spec".into(), spec.notation());
        manifest.insert("input_channels".into(), spec.input_channels.to_string());
        manifest.insert("grid".into(), spec.grid.to_string());
        manifest.insert("ssmp_strategy".into(), spec.ssmp_strategy.to_string());
        manifest.insert(
            "categories".into(),
            serde_json::to_string(&self.categories).map_err(|e| Error::checkpoint("categories", e.to_string()))?,
        );
        manifest.insert("epoch".into(), self.epoch.to_string());
        manifest.insert("seed".into(), self.seed.to_string());
        manifest.insert("schedule_stage".into(), self.schedule_stage.to_string());
        for (k, v) in &self.notes {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::checkpoint(format!("note.{k}"), "notes must be single-line key=value pairs"));
            }
            manifest.insert(format!("note.{k}"), v.clone());
        }
        let text: String = manifest.iter().map(|(k, v)| format!("{k}={v}\n")).collect();

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, text.len());
        out.extend_from_slice(text.as_bytes());
        let names = self.network.param_names();
        put_u32(&mut out, 2 * names.len());
        for (name, t) in names.iter().zip(self.network.params()) {
            put_tensor(&mut out, &format!("param.{name}"), t);
        }
        for (name, t) in names.iter().zip(&self.velocities) {
            put_tensor(&mut out, &format!("velocity.{name}"), t);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::checkpoint("magic", "not a checkpoint file"));
        }
        let len = r.u32("manifest")? as usize;
        let text = std::str::from_utf8(r.take(len, "manifest")?)
            .map_err(|_| Error::checkpoint("manifest", "not valid UTF-8"))?;
        let mut manifest = BTreeMap::new();
        for line in text.lines() {
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::checkpoint("manifest", format!("bad line `{line}`")))?;
            manifest.insert(k.to_string(), v.to_string());
        }
        let version: u32 = parse_field(&manifest, "format_version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::checkpoint("format_version", format!("unsupported version {version}")));
        }
        let categories: Vec<String> = serde_json::from_str(field(&manifest, "categories")?)
            .map_err(|e| Error::checkpoint("categories", e.to_string()))?;
        let strategy: SsmpStrategy = parse_field(&manifest, "ssmp_strategy")?;
        let spec = NetworkSpec::parse(
            field(&manifest, "spec")?,
            parse_field(&manifest, "input_channels")?,
            parse_field(&manifest, "grid")?,
            categories.len(),
        )
        .map_err(|e| Error::checkpoint("spec", e.to_string()))?
        .with_strategy(strategy);

        let expected = spec.param_shapes().map_err(|e| Error::checkpoint("spec", e.to_string()))?;
        let count = r.u32("tensor count")? as usize;
        if count != 2 * expected.len() {
            return Err(Error::checkpoint("tensor count", format!("expected {}, found {count}", 2 * expected.len())));
        }
        let mut tensors = Vec::with_capacity(count);
        for (prefix, (layer, kind, shape)) in
            ["param", "velocity"].iter().flat_map(|p| expected.iter().map(move |e| (*p, e)))
        {
            let want = format!("{prefix}.layer{layer}.{kind}");
            let n = r.u32(&want)? as usize;
            let name = r.take(n, &want)?;
            if name != want.as_bytes() {
                return Err(Error::checkpoint(&want, format!("found tensor `{}`", String::from_utf8_lossy(name))));
            }
            let rank = r.u32(&want)? as usize;
            let dims = (0..rank).map(|_| r.u32(&want).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if &dims != shape {
                return Err(Error::checkpoint(&want, format!("shape {dims:?} does not match the spec's {shape:?}")));
            }
            let numel: usize = dims.iter().product();
            let raw = r.take(numel * 4, &want)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            tensors.push(Tensor::new(dims, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::checkpoint("trailer", "unexpected bytes after the last tensor"));
        }
        let velocities = tensors.split_off(expected.len());
        let network = Network::from_params(spec, tensors)?;
        let notes =
            manifest.iter().filter_map(|(k, v)| k.strip_prefix("note.").map(|k| (k.to_string(), v.clone()))).collect();
        Ok(Self {
            network,
            velocities,
            categories,
            epoch: parse_field(&manifest, "epoch")?,
            seed: parse_field(&manifest, "seed")?,
            schedule_stage: parse_field(&manifest, "schedule_stage")?,
            notes,
        })
    }

    /// Writes to a sibling temporary file first, so a crash never leaves a
    /// half-written checkpoint under `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let file_err = |source| Error::File { path: path.to_path_buf(), source };
        fs::write(&tmp, bytes).map_err(file_err)?;
        fs::rename(&tmp, path).map_err(file_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let spec = NetworkSpec::parse("8C3-lrelu0.2-MP2-12C3-SSMP1.5-drop0.1-Output", 2, 12, 3)
            .unwrap()
            .with_strategy(SsmpStrategy::Ssmp3 { switch_epoch: 4 });
        let mut ck =
            Checkpoint::new(Network::new(spec, 9).unwrap(), vec!["a".into(), "b".into(), "c=\"x\"".into()], 9).unwrap();
        ck.velocities[0].data_mut()[3] = -1.5e-7;
        ck.epoch = 3;
        ck.schedule_stage = 1;
        ck.notes.insert("loss_history".into(), "[1.5,0.25]".into());
        ck
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [0, 5, 12, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn errors_name_the_field() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).unwrap_err().to_string().contains("magic"));

        let original = sample().to_bytes().unwrap();
        let patch = |from: &str, to: &str| {
            let at = original.windows(from.len()).position(|w| w == from.as_bytes()).unwrap();
            let mut b = original.clone();
            b[at..at + to.len()].copy_from_slice(to.as_bytes());
            b
        };
        let err = Checkpoint::from_bytes(&patch("format_version=1", "format_version=7")).unwrap_err().to_string();
        assert!(err.contains("format_version"), "{err}");

        // same manifest length, different grid: the stored shapes no longer fit
        let err = Checkpoint::from_bytes(&patch("grid=12", "grid=14")).unwrap_err().to_string();
        assert!(err.contains("layer"), "{err}");
    }
}

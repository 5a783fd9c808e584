//! Binary checkpoint container.
//!
//! ```text
//! "SDESR1" | version u32 | metadata length u32 | metadata (UTF-8 key=value lines)
//! then per array: name length u32 | name | rank u32 | dims u32×rank | f32 LE payload
//! ```
//!
//! All integers are little-endian. Floating-point metadata is written with
//! the shortest representation that parses back to the same value.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::score::{ArchDescriptor, DenoiserNet};
use crate::sde::{NoiseSchedule, SdeKind, SdeModel};
use crate::training::{DegradationSpec, TrainState};

const MAGIC: &[u8; 6] = b"SDESR1";
pub const CHECKPOINT_VERSION: u32 = 1;
const OPT_M: &str = "opt.m/";
const OPT_V: &str = "opt.v/";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: SdeKind,
    pub schedule: NoiseSchedule,
    pub t_min: f64,
    pub arch: ArchDescriptor,
    pub degradation: DegradationSpec,
    pub step: usize,
    pub seed: u64,
    /// Adam update count; 0 when no optimizer state is stored.
    pub optimizer_step: u64,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, model: &SdeModel, degradation: DegradationSpec, seed: u64) -> Self {
        let mut arrays: Vec<NamedArray> = state
            .net
            .params()
            .into_iter()
            .map(|(name, dims, data)| NamedArray {
                name,
                dims,
                data: data.to_vec(),
            })
            .collect();
        let names: Vec<(String, Vec<usize>)> = arrays.iter().map(|a| (a.name.clone(), a.dims.clone())).collect();
        for (prefix, moments) in [(OPT_M, &state.adam.m), (OPT_V, &state.adam.v)] {
            for ((name, dims), data) in names.iter().zip(moments.iter()) {
                arrays.push(NamedArray {
                    name: format!("{prefix}{name}"),
                    dims: dims.clone(),
                    data: data.clone(),
                });
            }
        }
        Self {
            kind: model.kind,
            schedule: model.schedule,
            t_min: model.t_min,
            arch: state.net.arch.clone(),
            degradation,
            step: state.step,
            seed,
            optimizer_step: state.adam.t,
            arrays,
        }
    }

    pub fn model(&self) -> Result<SdeModel> {
        SdeModel::new(self.kind, self.schedule).with_t_min(self.t_min)
    }

    fn array(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    /// Rebuild the network; every parameter must be present with matching dims.
    pub fn net(&self) -> Result<DenoiserNet<f32>> {
        let mut net = DenoiserNet::<f32>::new(self.arch.clone(), 0)?;
        let layout: Vec<(String, Vec<usize>)> = net.params().into_iter().map(|(n, d, _)| (n, d)).collect();
        for ((name, dims), dst) in layout.iter().zip(net.params_mut()) {
            let a = self
                .array(name)
                .ok_or_else(|| Error::Malformed(format!("checkpoint lacks array {name}")))?;
            if &a.dims != dims {
                return Err(Error::Malformed(format!("array {name} has dims {:?}, expected {dims:?}", a.dims)));
            }
            *dst = a.data.clone();
        }
        Ok(net)
    }

    /// Network plus optimizer state; missing moments restart the optimizer.
    pub fn train_state(&self) -> Result<TrainState> {
        let net = self.net()?;
        let mut state = TrainState::new(net);
        state.step = self.step;
        if self.optimizer_step > 0 {
            let names: Vec<String> = state.net.params().into_iter().map(|(n, _, _)| n).collect();
            for (i, name) in names.iter().enumerate() {
                for (prefix, dst) in [(OPT_M, &mut state.adam.m[i]), (OPT_V, &mut state.adam.v[i])] {
                    let a = self
                        .array(&format!("{prefix}{name}"))
                        .ok_or_else(|| Error::Malformed(format!("checkpoint lacks optimizer array for {name}")))?;
                    if a.data.len() != dst.len() {
                        return Err(Error::Malformed(format!("optimizer array for {name} has wrong size")));
                    }
                    dst.clone_from(&a.data);
                }
            }
            state.adam.t = self.optimizer_step;
        }
        Ok(state)
    }

    fn metadata(&self) -> String {
        let s = &self.schedule;
        let widths: Vec<String> = self.arch.widths.iter().map(ToString::to_string).collect();
        let entries = [
            ("kind", self.kind.to_string()),
            ("sigma_min", s.sigma_min.to_string()),
            ("sigma_max", s.sigma_max.to_string()),
            ("beta_min", s.beta_min.to_string()),
            ("beta_max", s.beta_max.to_string()),
            ("t_min", self.t_min.to_string()),
            ("arch.image_channels", self.arch.image_channels.to_string()),
            ("arch.widths", widths.join(",")),
            ("arch.time_dim", self.arch.time_dim.to_string()),
            ("arch.time_hidden", self.arch.time_hidden.to_string()),
            ("degradation.factor", self.degradation.factor.to_string()),
            ("degradation.down", self.degradation.down_method.to_string()),
            ("degradation.up", self.degradation.up_method.to_string()),
            ("step", self.step.to_string()),
            ("seed", self.seed.to_string()),
            ("optimizer_step", self.optimizer_step.to_string()),
            ("arrays", self.arrays.len().to_string()),
        ];
        entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

fn parse<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = meta
        .get(key)
        .ok_or_else(|| Error::Malformed(format!("metadata lacks {key}")))?;
    raw.parse()
        .map_err(|_| Error::Malformed(format!("metadata {key}={raw} does not parse")))
}

/// Write to a temporary sibling, then rename over `path`.
pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    let meta = c.metadata();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta.as_bytes());
    for a in &c.arrays {
        let expected: usize = a.dims.iter().product();
        if expected != a.data.len() {
            return Err(Error::Shape(format!("array {} has dims {:?} but {} values", a.name, a.dims, a.data.len())));
        }
        buf.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(a.name.as_bytes());
        buf.extend_from_slice(&(a.dims.len() as u32).to_le_bytes());
        for &d in &a.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &a.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!("{what} at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    let magic = r.take(MAGIC.len(), "magic").map_err(|_| Error::BadMagic { expected: "SDESR1" })?;
    if magic != MAGIC {
        return Err(Error::BadMagic { expected: "SDESR1" });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let meta_len = r.u32("metadata length")? as usize;
    let meta_bytes = r.take(meta_len, "metadata")?;
    let text = std::str::from_utf8(meta_bytes).map_err(|_| Error::Malformed("metadata is not UTF-8".into()))?;
    let mut meta = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Malformed(format!("metadata line {line:?}")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    let n_arrays: usize = parse(&meta, "arrays")?;
    let mut arrays = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let name_len = r.u32("array name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "array name")?)
            .map_err(|_| Error::Malformed("array name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("array rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("array dims")? as usize);
        }
        let count: usize = dims.iter().product();
        let payload = r.take(count * 4, &format!("payload of {name}"))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        arrays.push(NamedArray { name, dims, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let widths = meta
        .get("arch.widths")
        .ok_or_else(|| Error::Malformed("metadata lacks arch.widths".into()))?
        .split(',')
        .map(|w| w.parse::<usize>().map_err(|_| Error::Malformed(format!("width {w:?}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Checkpoint {
        kind: parse(&meta, "kind")?,
        schedule: NoiseSchedule {
            sigma_min: parse(&meta, "sigma_min")?,
            sigma_max: parse(&meta, "sigma_max")?,
            beta_min: parse(&meta, "beta_min")?,
            beta_max: parse(&meta, "beta_max")?,
        },
        t_min: parse(&meta, "t_min")?,
        arch: ArchDescriptor {
            image_channels: parse(&meta, "arch.image_channels")?,
            widths,
            time_dim: parse(&meta, "arch.time_dim")?,
            time_hidden: parse(&meta, "arch.time_hidden")?,
        },
        degradation: DegradationSpec {
            factor: parse(&meta, "degradation.factor")?,
            down_method: parse(&meta, "degradation.down")?,
            up_method: parse(&meta, "degradation.up")?,
        },
        step: parse(&meta, "step")?,
        seed: parse(&meta, "seed")?,
        optimizer_step: parse(&meta, "optimizer_step")?,
        arrays,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    fn sample_checkpoint() -> Checkpoint {
        let arch = ArchDescriptor {
            image_channels: 1,
            widths: vec![4, 8],
            time_dim: 4,
            time_hidden: 6,
        };
        let mut state = TrainState::new(DenoiserNet::new(arch, 5).unwrap());
        let mut rng = RandomSource::new(1);
        for m in state.adam.m.iter_mut().chain(state.adam.v.iter_mut()) {
            for v in m.iter_mut() {
                *v = rng.normal() as f32;
            }
        }
        state.adam.t = 17;
        state.step = 17;
        let model = SdeModel::new(SdeKind::SubVp, NoiseSchedule::default())
            .with_t_min(1.0 / 3.0 * 1e-4)
            .unwrap();
        Checkpoint::from_state(&state, &model, DegradationSpec::default(), 99)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ckpt");
        let c = sample_checkpoint();
        save_checkpoint(&c, &p).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.t_min.to_bits(), c.t_min.to_bits());
        let s = back.train_state().unwrap();
        assert_eq!(s.adam.t, 17);
        assert_eq!(s.net, c.net().unwrap());
        assert!(!dir.path().join(".c.ckpt.tmp").exists());
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ckpt");
        save_checkpoint(&sample_checkpoint(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();

        let q = dir.path().join("t.ckpt");
        fs::write(&q, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&q), Err(Error::Truncated(_))));

        let mut bumped = bytes.clone();
        bumped[6..10].copy_from_slice(&2u32.to_le_bytes());
        fs::write(&q, &bumped).unwrap();
        assert!(matches!(load_checkpoint(&q), Err(Error::Version { found: 2, .. })));

        let mut bad = bytes;
        bad[0] = b'X';
        fs::write(&q, &bad).unwrap();
        assert!(matches!(load_checkpoint(&q), Err(Error::BadMagic { .. })));
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::img16::write_img16;
use crate::io::manifest::{PairRecord, SyntheticManifest};
use crate::rng::derive_seed;
use crate::sim::phantom::{phantom_image, PhantomSpec};
use crate::sim::psf::{apply_defocus, gaussian_psf, PsfSpec};
use crate::tensor::Tensor4;

pub const MANIFEST_NAME: &str = "manifest.tsv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub phantom: PhantomSpec,
    /// `z` is ignored; each entry of `z_list` is used instead.
    pub psf: PsfSpec,
    pub z_list: Vec<f64>,
    pub noise_sigma: f64,
    pub count: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            phantom: PhantomSpec::default(),
            psf: PsfSpec {
                sigma_per_um: 0.2,
                ..PsfSpec::default()
            },
            z_list: vec![10.0],
            noise_sigma: 0.005,
            count: 200,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.psf.validate()?;
        if self.z_list.is_empty() {
            return Err(Error::Config("z_list is empty".into()));
        }
        if let Some(z) = self.z_list.iter().find(|z| !z.is_finite()) {
            return Err(Error::Config(format!("z value {z} is not finite")));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma must be non-negative, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

fn noise_seed(phantom_seed: u64, z: f64) -> u64 {
    derive_seed(phantom_seed, z.to_bits())
}

/// Rebuilds the (sharp, blurred) pair described by one manifest record.
pub fn regenerate_pair(spec: &DatasetSpec, record: &PairRecord) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
    let sharp: Tensor4<f32> = phantom_image(&spec.phantom, record.seed)?;
    let kernel = gaussian_psf(&spec.psf.at(record.z))?;
    let blurred = apply_defocus(&sharp, &kernel, spec.noise_sigma, noise_seed(record.seed, record.z))?;
    Ok((sharp, blurred))
}

/// Writes `count` phantoms and one blurred version per `z`, then `manifest.tsv`.
/// Phantom `i` uses seed `derive_seed(seed, i)`; the manifest is written last.
pub fn gen_dataset(spec: &DatasetSpec, out_dir: &Path, seed: u64) -> Result<SyntheticManifest> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let kernels = spec
        .z_list
        .iter()
        .map(|&z| gaussian_psf(&spec.psf.at(z)))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(spec.count * spec.z_list.len());
    for i in 0..spec.count {
        let phantom_seed = derive_seed(seed, i as u64);
        let sharp: Tensor4<f32> = phantom_image(&spec.phantom, phantom_seed)?;
        let sharp_name = PathBuf::from(format!("phantom_{i:05}_sharp.im16"));
        write_img16(&sharp, &out_dir.join(&sharp_name))?;
        for (zi, (&z, kernel)) in spec.z_list.iter().zip(&kernels).enumerate() {
            let blurred = apply_defocus(&sharp, kernel, spec.noise_sigma, noise_seed(phantom_seed, z))?;
            let blurred_name = PathBuf::from(format!("phantom_{i:05}_z{zi}_blurred.im16"));
            write_img16(&blurred, &out_dir.join(&blurred_name))?;
            records.push(PairRecord {
                sharp: sharp_name.clone(),
                blurred: blurred_name,
                z,
                seed: phantom_seed,
            });
        }
    }
    let z_text: Vec<String> = spec.z_list.iter().map(f64::to_string).collect();
    let manifest = SyntheticManifest {
        params: vec![
            ("seed".into(), seed.to_string()),
            ("count".into(), spec.count.to_string()),
            ("z_list".into(), z_text.join(",")),
            ("sigma_per_um".into(), spec.psf.sigma_per_um.to_string()),
            ("min_sigma".into(), spec.psf.min_sigma.to_string()),
            (
                "radius".into(),
                spec.psf.radius.map_or_else(|| "auto".into(), |r| r.to_string()),
            ),
            ("noise_sigma".into(), spec.noise_sigma.to_string()),
            ("height".into(), spec.phantom.height.to_string()),
            ("width".into(), spec.phantom.width.to_string()),
        ],
        records,
    };
    let tmp = out_dir.join(format!("{MANIFEST_NAME}.partial"));
    manifest.write(&tmp)?;
    let path = out_dir.join(MANIFEST_NAME);
    fs::rename(&tmp, &path).map_err(|e| Error::io(format!("finalising {}", path.display()), e))?;
    Ok(manifest)
}

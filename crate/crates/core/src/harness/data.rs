use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_img16, split_manifest, Split, SyntheticManifest};
use crate::tensor::Tensor4;

#[derive(Clone, Debug)]
pub struct Pair {
    pub input: Tensor4<f32>,
    pub target: Tensor4<f32>,
    pub tag: String,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Pair>,
    pub test: Vec<Pair>,
}

/// Reads a pair manifest and every image it lists, split positionally after sorting.
pub fn load_dataset(manifest: &Path, train_count: usize) -> Result<Dataset> {
    let m = SyntheticManifest::read(manifest)?;
    let root = manifest.parent().unwrap_or(Path::new("."));
    let split = split_manifest(m.dataset_records(root), train_count)?;
    let mut ds = Dataset {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (rec, which) in &split.records {
        let input: Tensor4<f32> = read_img16(&rec.input)?;
        let target: Tensor4<f32> = read_img16(&rec.target)?;
        if input.shape() != target.shape() {
            return Err(Error::Shape(format!(
                "{} is {:?} but its target is {:?}",
                rec.input.display(),
                input.shape(),
                target.shape()
            )));
        }
        let pair = Pair {
            input,
            target,
            tag: rec.tag.clone(),
        };
        match which {
            Split::Train => ds.train.push(pair),
            Split::Test => ds.test.push(pair),
        }
    }
    Ok(ds)
}

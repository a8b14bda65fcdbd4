//! Synthetic defocus: Gaussian PSF surrogate, two-channel fluorescence-like phantoms,
//! and on-disk sharp/blurred pair generation.

pub mod dataset;
pub mod phantom;
pub mod psf;

pub use dataset::{gen_dataset, regenerate_pair, DatasetSpec, MANIFEST_NAME};
pub use phantom::{layout_phantom, phantom_image, render_phantom, Filament, PhantomLayout, PhantomSpec, Spot};
pub use psf::{apply_defocus, gaussian_psf, Kernel, PsfSpec};

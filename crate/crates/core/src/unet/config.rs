use sha2::{Digest, Sha256};

use crate::lm::KernelSpec;
use crate::{Error, Result};

/// Architecture of the segmentation network. The seed is not part of the
/// architecture and does not enter the digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub classes: usize,
    /// Spatial input extents, 2 or 3 axes.
    pub extents: Vec<usize>,
    pub stem_channels: usize,
    /// One kernel per encoder stage; its length is the stage count.
    pub kernel_schedule: Vec<KernelSpec>,
    pub use_pim: bool,
    pub use_pam: bool,
    pub use_bim: bool,
    pub state_dim: usize,
    pub share_directions: bool,
}

impl Default for ModelConfig {
    /// Desk-scale 2D model: 64×64 input, 3 stages, kernels 8, 4, 4.
    fn default() -> Self {
        Self {
            in_channels: 1,
            classes: 4,
            extents: vec![64, 64],
            stem_channels: 16,
            kernel_schedule: [8, 4, 4].iter().map(|&k| KernelSpec::cube(k, 2).unwrap()).collect(),
            use_pim: true,
            use_pam: true,
            use_bim: true,
            state_dim: 8,
            share_directions: false,
        }
    }
}

/// `ceil(n / 2)`: the extent after a stride-2, padding-1, 3-tap convolution.
pub fn halve(n: usize) -> usize {
    n.div_ceil(2)
}

impl ModelConfig {
    pub fn stages(&self) -> usize {
        self.kernel_schedule.len()
    }

    pub fn spatial_rank(&self) -> usize {
        self.extents.len()
    }

    /// Channels entering encoder stage `l`.
    pub fn stage_channels(&self, l: usize) -> usize {
        self.stem_channels << l
    }

    /// Spatial extents entering encoder stage `l` (`l = S` is the bottleneck).
    pub fn stage_extents(&self, l: usize) -> Vec<usize> {
        let mut e: Vec<usize> = self.extents.iter().map(|&n| halve(n)).collect();
        for _ in 0..l {
            e.iter_mut().for_each(|n| *n = halve(*n));
        }
        e
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(2..=3).contains(&self.spatial_rank()) {
            return fail(format!("input must have 2 or 3 spatial axes, got {:?}", self.extents));
        }
        if self.extents.iter().any(|&n| n < 2) {
            return fail(format!("every input extent must be at least 2, got {:?}", self.extents));
        }
        if self.in_channels == 0 || !(2..=256).contains(&self.classes) || self.state_dim == 0 {
            return fail("need at least one input channel, 2 to 256 classes and one state".into());
        }
        if self.stem_channels == 0 || self.stem_channels % self.in_channels != 0 {
            return fail(format!(
                "stem channels {} must be a positive multiple of the {} input channels",
                self.stem_channels, self.in_channels
            ));
        }
        if self.kernel_schedule.is_empty() {
            return fail("kernel schedule is empty".into());
        }
        if let Some(k) = self.kernel_schedule.iter().find(|k| k.rank() != self.spatial_rank()) {
            return fail(format!("kernel {k} does not match {}-d input", self.spatial_rank()));
        }
        if self.stages() > 12 {
            return fail(format!("{} stages is more than the channel doubling supports", self.stages()));
        }
        Ok(())
    }

    /// Canonical text form; the digest is its SHA-256.
    pub fn canonical(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let schedule: Vec<String> = self.kernel_schedule.iter().map(KernelSpec::to_string).collect();
        format!(
            "in_channels={}\nclasses={}\nextents={}\nstem_channels={}\nkernel_schedule={}\nuse_pim={}\nuse_pam={}\nuse_bim={}\nstate_dim={}\nshare_directions={}\n",
            self.in_channels,
            self.classes,
            list(&self.extents),
            self.stem_channels,
            schedule.join(","),
            self.use_pim,
            self.use_pam,
            self.use_bim,
            self.state_dim,
            self.share_directions
        )
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

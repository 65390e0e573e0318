use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a miniature Vision Transformer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViTConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch: usize,
    pub hidden: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub classes: usize,
}

impl Default for ViTConfig {
    /// 32×32 grayscale, 8×8 patches (N = 16, L = 64), D = 32, two blocks of four heads.
    fn default() -> Self {
        ViTConfig {
            height: 32,
            width: 32,
            channels: 1,
            patch: 8,
            hidden: 32,
            depth: 2,
            heads: 4,
            mlp_ratio: 2,
            classes: 3,
        }
    }
}

impl ViTConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return bad("image dimensions must be positive".into());
        }
        if self.patch == 0
            || !self.height.is_multiple_of(self.patch)
            || !self.width.is_multiple_of(self.patch)
        {
            return bad(format!(
                "patch size {} must divide image {}x{}",
                self.patch, self.height, self.width
            ));
        }
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad(format!(
                "hidden dim {} must be a positive multiple of heads {}",
                self.hidden, self.heads
            ));
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio must be positive".into());
        }
        if self.classes < 2 {
            return bad("need at least 2 classes".into());
        }
        Ok(())
    }

    /// Number of patches, `hw / p²`.
    pub fn num_patches(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }

    /// Flattened patch length, `p²c`.
    pub fn patch_len(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    /// Sequence length including the class token.
    pub fn tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        self.hidden * self.mlp_ratio
    }
}

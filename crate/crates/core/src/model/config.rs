use crate::error::{Error, Result};

/// Architecture hyperparameters of the cascading U-Net.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub num_cascading_blocks: usize,
    pub rcabs_per_block: usize,
    pub attention_reduction: usize,
    /// Add the network input to the tail output.
    pub global_skip: bool,
    /// Add encoder features to the decoder at matching resolutions.
    pub encoder_skips: bool,
}

/// Total downsampling of the main branch (two stride-2 stages).
pub const INTERNAL_SCALE: usize = 4;

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            num_cascading_blocks: 4,
            rcabs_per_block: 4,
            attention_reduction: 16,
            global_skip: true,
            encoder_skips: true,
        }
    }
}

impl ModelConfig {
    /// Small preset used for desk-scale experiments.
    pub fn tiny() -> Self {
        Self {
            base_channels: 16,
            num_cascading_blocks: 2,
            rcabs_per_block: 2,
            attention_reduction: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.attention_reduction == 0 {
            return Err(Error::InvalidConfig("channel counts must be positive".into()));
        }
        if self.base_channels % self.attention_reduction != 0 {
            return Err(Error::InvalidConfig(format!(
                "base_channels {} not divisible by attention_reduction {}",
                self.base_channels, self.attention_reduction
            )));
        }
        if self.num_cascading_blocks == 0 || self.rcabs_per_block == 0 {
            return Err(Error::InvalidConfig("need at least one block and one RCAB".into()));
        }
        Ok(())
    }
}

fn conv(cin: usize, cout: usize, k: usize) -> u64 {
    (cout * cin * k * k + cout) as u64
}

/// Closed-form parameter total.
pub fn count_parameters(config: &ModelConfig) -> Result<u64> {
    config.validate()?;
    let c = config.base_channels;
    let squeeze = c / config.attention_reduction;
    let attention = conv(c, squeeze, 1) + conv(squeeze, c, 1);
    let rcab = 2 * conv(c, c, 3) + attention;
    let fusion = |units: usize| -> u64 { (1..=units).map(|k| conv((k + 1) * c, c, 1)).sum() };
    let block = config.rcabs_per_block as u64 * rcab + fusion(config.rcabs_per_block);
    let body = config.num_cascading_blocks as u64 * block + fusion(config.num_cascading_blocks);
    let encoder = conv(3, c, 3) + 2 * conv(c, c, 3);
    let decoder = 2 * conv(c, 4 * c, 3) + conv(c, 3, 3);
    Ok(encoder + body + decoder)
}

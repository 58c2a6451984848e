use crate::error::{Error, Result};

/// Side length of the seed feature map the coordinate MLP is reshaped into.
pub const SEED_SIDE: usize = 3;

/// Which head the network carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetKind {
    /// Coordinate MLP followed by an upsampling convolutional head that emits
    /// a whole `A × A × 3` micro-image per coordinate.
    MicroImage,
    /// Dense-only stack mapping one mosaic pixel coordinate to one RGB triple.
    Pixel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub kind: NetKind,
    /// Positional-encoding levels `L`; the network input has `4·L` features.
    pub levels: usize,
    pub mlp_widths: Vec<usize>,
    /// Channels of the `3 × 3` seed map (`C0`).
    pub seed_channels: usize,
    /// Output channels of the first upsampling stage and of every later one.
    pub conv_channels: (usize, usize),
    pub omega: f32,
    /// Micro-image side `A`.
    pub output_side: usize,
}

/// One parameterized layer as the engine sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        fan_in: usize,
        fan_out: usize,
        sine: bool,
    },
    /// `3 × 3` same-padded convolution. With `upsample` the input is first
    /// nearest-neighbour upsampled by 2, so the output side is `2·in_side`.
    Conv {
        in_ch: usize,
        out_ch: usize,
        in_side: usize,
        upsample: bool,
        sine: bool,
    },
}

impl LayerSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LayerSpec::Dense {
                fan_in, fan_out, ..
            } => vec![fan_out, fan_in],
            LayerSpec::Conv { in_ch, out_ch, .. } => vec![out_ch, in_ch, 3, 3],
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_out, .. } => fan_out,
            LayerSpec::Conv { out_ch, .. } => out_ch,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_in, .. } => fan_in,
            LayerSpec::Conv { in_ch, .. } => in_ch * 9,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + self.bias_len()
    }
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::micro_image(40, 64, 16, 11)
    }
}

impl ArchConfig {
    /// Two hidden layers of `width`, seed/conv channels all `channels`.
    pub fn micro_image(levels: usize, width: usize, channels: usize, side: usize) -> Self {
        Self {
            kind: NetKind::MicroImage,
            levels,
            mlp_widths: vec![width, width],
            seed_channels: channels,
            conv_channels: (channels, channels),
            omega: 30.0,
            output_side: side,
        }
    }

    /// Dense-only pixel-wise baseline with two hidden layers of `width`.
    pub fn pixel(levels: usize, width: usize) -> Self {
        Self {
            kind: NetKind::Pixel,
            levels,
            mlp_widths: vec![width, width],
            seed_channels: 0,
            conv_channels: (0, 0),
            omega: 30.0,
            output_side: 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        4 * self.levels
    }

    /// Number of ×2 upsampling stages: smallest `k` with `3·2^k >= A`.
    pub fn upsample_stages(&self) -> usize {
        let mut k = 0;
        while SEED_SIDE << k < self.output_side {
            k += 1;
        }
        k
    }

    /// Side of the final feature map before the centre crop.
    pub fn crop_from(&self) -> usize {
        SEED_SIDE << self.upsample_stages()
    }

    pub fn crop_offset(&self) -> usize {
        (self.crop_from() - self.output_side) / 2
    }

    /// Values produced per network evaluation.
    pub fn output_len(&self) -> usize {
        match self.kind {
            NetKind::MicroImage => self.output_side * self.output_side * 3,
            NetKind::Pixel => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("architecture: {m}")));
        if self.levels == 0 {
            return bad("L must be at least 1");
        }
        if self.mlp_widths.is_empty() || self.mlp_widths.contains(&0) {
            return bad("hidden widths must be non-empty and >= 1");
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return bad("omega must be positive");
        }
        if self.kind == NetKind::MicroImage {
            if self.output_side == 0 {
                return bad("output side must be at least 1");
            }
            if self.seed_channels == 0 || self.conv_channels.0 == 0 || self.conv_channels.1 == 0
            {
                return bad("channel counts must be at least 1");
            }
        }
        Ok(())
    }

    /// Layer list in parameter order.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        let mut fan_in = self.input_dim();
        for &w in &self.mlp_widths {
            out.push(LayerSpec::Dense {
                fan_in,
                fan_out: w,
                sine: true,
            });
            fan_in = w;
        }
        match self.kind {
            NetKind::Pixel => out.push(LayerSpec::Dense {
                fan_in,
                fan_out: 3,
                sine: false,
            }),
            NetKind::MicroImage => {
                let seed = SEED_SIDE * SEED_SIDE * self.seed_channels;
                out.push(LayerSpec::Dense {
                    fan_in,
                    fan_out: seed,
                    sine: true,
                });
                let mut ch = self.seed_channels;
                let mut side = SEED_SIDE;
                for stage in 0..self.upsample_stages() {
                    let out_ch = if stage == 0 {
                        self.conv_channels.0
                    } else {
                        self.conv_channels.1
                    };
                    out.push(LayerSpec::Conv {
                        in_ch: ch,
                        out_ch,
                        in_side: side,
                        upsample: true,
                        sine: true,
                    });
                    ch = out_ch;
                    side *= 2;
                }
                out.push(LayerSpec::Conv {
                    in_ch: ch,
                    out_ch: 3,
                    in_side: side,
                    upsample: false,
                    sine: false,
                });
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(LayerSpec::param_count).sum()
    }

    /// Copy with every hidden width set to `width`; for micro-image nets the
    /// channel counts follow as `max(width / 4, 8)`.
    pub fn with_width(&self, width: usize) -> Self {
        let mut arch = self.clone();
        for w in &mut arch.mlp_widths {
            *w = width;
        }
        if arch.kind == NetKind::MicroImage {
            let ch = (width / 4).max(8);
            arch.seed_channels = ch;
            arch.conv_channels = (ch, ch);
        }
        arch
    }
}

/// Largest width `W` whose parameters fit `budget_bytes` at 4 bytes each.
pub fn solve_width_for_budget(budget_bytes: usize, template: &ArchConfig) -> Result<ArchConfig> {
    template.validate()?;
    let fits = |w: usize| 4 * template.with_width(w).param_count() <= budget_bytes;
    if !fits(1) {
        return Err(Error::InvalidArgument(format!(
            "budget of {budget_bytes} bytes is below the smallest model ({} bytes)",
            4 * template.with_width(1).param_count()
        )));
    }
    // param_count is strictly increasing in W, so bracket then bisect.
    let (mut lo, mut hi) = (1usize, 2usize);
    while fits(hi) {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(template.with_width(lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_geometry() {
        let a = ArchConfig::micro_image(40, 64, 16, 11);
        assert_eq!(a.upsample_stages(), 2);
        assert_eq!(a.crop_from(), 12);
        assert_eq!(a.crop_offset(), 0);
        assert_eq!(ArchConfig::micro_image(2, 4, 2, 3).upsample_stages(), 0);
        assert_eq!(ArchConfig::micro_image(2, 4, 2, 5).crop_from(), 6);
        assert_eq!(ArchConfig::micro_image(2, 4, 2, 13).crop_from(), 24);
        assert_eq!(ArchConfig::micro_image(2, 4, 2, 13).crop_offset(), 5);
    }

    #[test]
    fn dense_layer_param_count() {
        let spec = LayerSpec::Dense {
            fan_in: 160,
            fan_out: 64,
            sine: true,
        };
        assert_eq!(spec.param_count(), 10_304);
    }

    #[test]
    fn closed_form_param_count() {
        let a = ArchConfig::micro_image(40, 37, 9, 11);
        let (w, c) = (37, 9);
        let expected = (160 * w + w)
            + (w * w + w)
            + (w * 9 * c + 9 * c)
            + 2 * (c * c * 9 + c)
            + (3 * c * 9 + 3);
        assert_eq!(a.param_count(), expected);
        let p = ArchConfig::pixel(40, 58);
        assert_eq!(p.param_count(), 160 * 58 + 58 + 58 * 58 + 58 + 58 * 3 + 3);
    }

    #[test]
    fn budget_solver() {
        let template = ArchConfig::default();
        let arch = solve_width_for_budget(185 * 1024, &template).unwrap();
        assert!(4 * arch.param_count() <= 185 * 1024);
        assert!(4 * arch.with_width(arch.mlp_widths[0] + 1).param_count() > 185 * 1024);
        assert_eq!(185 * 1024 / 4, 47_360);

        let mut last = 0;
        for kb in [20, 50, 100, 185, 270, 357] {
            let a = solve_width_for_budget(kb * 1024, &template).unwrap();
            assert!(a.param_count() >= last);
            last = a.param_count();
        }
        assert!(solve_width_for_budget(1000, &template).is_err());
    }

    #[test]
    fn channels_follow_width() {
        let a = ArchConfig::default().with_width(100);
        assert_eq!(a.seed_channels, 25);
        assert_eq!(a.conv_channels, (25, 25));
        let b = ArchConfig::default().with_width(12);
        assert_eq!(b.seed_channels, 8);
    }
}

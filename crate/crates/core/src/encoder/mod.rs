//! Residual convolutional encoder over the `[batch, 1, filters, frames]`
//! filterbank map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::nn::{max_pool2d, BatchNorm, Conv2d};
use crate::numerics::{Ctx, ParamStore, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Output channels of each residual block.
    pub channels: Vec<usize>,
    /// Convolution kernel `(spectral, temporal)`, odd extents.
    pub kernel: [usize; 2],
    /// Max-pool window applied before normalization, ahead of the blocks.
    pub pre_pool: [usize; 2],
    /// Max-pool window closing every block.
    pub block_pool: [usize; 2],
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: vec![32, 32, 64, 64, 64, 64],
            kernel: [3, 3],
            pre_pool: [1, 3],
            block_pool: [1, 2],
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::invalid("encoder needs at least one block with positive channels"));
        }
        if self.kernel.iter().any(|k| k % 2 == 0) {
            return Err(Error::invalid("encoder kernels must have odd extents"));
        }
        if self.pre_pool.contains(&0) || self.block_pool.contains(&0) {
            return Err(Error::invalid("pool windows must be positive"));
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        *self.channels.last().expect("validated")
    }

    /// Smallest `(filters, frames)` input that survives every pooling stage.
    pub fn min_input(&self) -> (usize, usize) {
        let blocks = self.channels.len() as u32;
        (
            self.pre_pool[0] * self.block_pool[0].pow(blocks),
            self.pre_pool[1] * self.block_pool[1].pow(blocks),
        )
    }

    /// `(channels, filters', frames')` produced for a `(filters, frames)` map.
    pub fn output_shape(&self, filters: usize, frames: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let (min_f, min_t) = self.min_input();
        if frames < min_t {
            return Err(Error::InputTooSmall { axis: "encoder frames", got: frames, min: min_t });
        }
        if filters < min_f {
            return Err(Error::InputTooSmall { axis: "encoder filters", got: filters, min: min_f });
        }
        let (mut f, mut t) = (filters / self.pre_pool[0], frames / self.pre_pool[1]);
        for _ in &self.channels {
            f /= self.block_pool[0];
            t /= self.block_pool[1];
        }
        Ok((self.out_channels(), f, t))
    }
}

/// `Conv(SELU(BatchNorm(x)))`.
#[derive(Clone, Debug)]
pub struct ConvUnit {
    bn: BatchNorm,
    conv: Conv2d,
}

impl ConvUnit {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: [usize; 2],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(ConvUnit {
            bn: BatchNorm::new(store, &format!("{name}.bn"), c_in, 1),
            conv: Conv2d::new(store, &format!("{name}.conv"), c_in, c_out, (kernel[0], kernel[1]), rng)?,
        })
    }

    pub fn conv(&self) -> &Conv2d {
        &self.conv
    }

    pub fn forward(&self, ctx: &mut Ctx, x: &Var) -> Result<Var> {
        let h = self.bn.forward(ctx, x)?;
        let h = ctx.tape.selu(&h)?;
        self.conv.forward(ctx, &h)
    }
}

#[derive(Clone, Debug)]
enum BlockHead {
    Plain(Conv2d),
    Unit(ConvUnit),
}

/// Two convolutions with an additive skip path, then max pooling. The first
/// block opens with a plain convolution instead of a normalized unit.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    head: BlockHead,
    tail: ConvUnit,
    skip: Option<Conv2d>,
    pool: [usize; 2],
}

impl ResidualBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        first: bool,
        kernel: [usize; 2],
        pool: [usize; 2],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let head = if first {
            BlockHead::Plain(Conv2d::new(store, &format!("{name}.conv1"), c_in, c_out, (kernel[0], kernel[1]), rng)?)
        } else {
            BlockHead::Unit(ConvUnit::new(store, &format!("{name}.unit1"), c_in, c_out, kernel, rng)?)
        };
        let tail = ConvUnit::new(store, &format!("{name}.unit2"), c_out, c_out, kernel, rng)?;
        let skip = (c_in != c_out)
            .then(|| Conv2d::new(store, &format!("{name}.skip"), c_in, c_out, (1, 1), rng))
            .transpose()?;
        Ok(ResidualBlock { head, tail, skip, pool })
    }

    /// Convolutions whose weights form the residual branch.
    pub fn branch_convs(&self) -> Vec<&Conv2d> {
        let head = match &self.head {
            BlockHead::Plain(c) => c,
            BlockHead::Unit(u) => u.conv(),
        };
        vec![head, self.tail.conv()]
    }

    pub fn skip(&self) -> Option<&Conv2d> {
        self.skip.as_ref()
    }

    pub fn forward(&self, ctx: &mut Ctx, x: &Var) -> Result<Var> {
        let h = match &self.head {
            BlockHead::Plain(conv) => conv.forward(ctx, x)?,
            BlockHead::Unit(unit) => unit.forward(ctx, x)?,
        };
        let h = self.tail.forward(ctx, &h)?;
        let skip = match &self.skip {
            Some(conv) => conv.forward(ctx, x)?,
            None => x.clone(),
        };
        let sum = ctx.tape.add(&h, &skip)?;
        max_pool2d(&ctx.tape, &sum, (self.pool[0], self.pool[1]))
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    pre_bn: BatchNorm,
    blocks: Vec<ResidualBlock>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, name: &str, config: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.channels.len());
        let mut c_in = 1;
        for (i, &c_out) in config.channels.iter().enumerate() {
            blocks.push(ResidualBlock::new(
                store,
                &format!("{name}.block{i}"),
                c_in,
                c_out,
                i == 0,
                config.kernel,
                config.block_pool,
                rng,
            )?);
            c_in = c_out;
        }
        Ok(Encoder {
            config: config.clone(),
            pre_bn: BatchNorm::new(store, &format!("{name}.pre_bn"), 1, 1),
            blocks,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[ResidualBlock] {
        &self.blocks
    }

    /// `[batch, 1, filters, frames]` → `[batch, channels, filters', frames']`.
    pub fn forward(&self, ctx: &mut Ctx, x: &Var) -> Result<Var> {
        let [_, 1, filters, frames] = *x.shape() else {
            return Err(Error::shape("encoder", format!("expected [batch, 1, F, T], got {:?}", x.shape())));
        };
        self.config.output_shape(filters, frames)?;
        let pool = self.config.pre_pool;
        let h = max_pool2d(&ctx.tape, x, (pool[0], pool[1]))?;
        let h = self.pre_bn.forward(ctx, &h)?;
        let mut h = ctx.tape.selu(&h)?;
        for block in &self.blocks {
            h = block.forward(ctx, &h)?;
        }
        Ok(h)
    }
}

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::kan::KanConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub n_filters: usize,
    pub kernel_len: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub stride: usize,
    pub pre_emphasis: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            n_filters: 70,
            kernel_len: 129,
            f_min: 200.0,
            f_max: 8000.0,
            stride: 1,
            pre_emphasis: 0.97,
        }
    }
}

/// How the stack nodes of the pre-branch and branch stages are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StackCombine {
    Max,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    /// Node dimension of every graph after the encoder.
    pub dim: usize,
    pub temperature: f64,
    pub dropout: f64,
    pub pool_temporal: f64,
    pub pool_spatial: f64,
    pub branch_pool: f64,
    pub branches: usize,
    pub stack_combine: StackCombine,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            dim: 32,
            temperature: 100.0,
            dropout: 0.2,
            pool_temporal: 0.7,
            pool_spatial: 0.5,
            branch_pool: 0.5,
            branches: 4,
            stack_combine: StackCombine::Max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutConfig {
    /// Dropout on the aggregated graphs and stack node.
    pub graph_dropout: f64,
    /// Dropout on the pooled vectors before concatenation.
    pub vector_dropout: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        ReadoutConfig {
            graph_dropout: 0.2,
            vector_dropout: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub chunk_secs: f64,
    pub hop_secs: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            chunk_secs: 4.0,
            hop_secs: 2.0,
        }
    }
}

impl InferenceConfig {
    pub fn chunk_samples(&self) -> usize {
        (self.chunk_secs * crate::dsp::SAMPLE_RATE as f64).round() as usize
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Seeds parameter initialization.
    pub seed: u64,
    pub frontend: FrontendConfig,
    pub encoder: EncoderConfig,
    pub kan: KanConfig,
    pub graph: GraphConfig,
    pub readout: ReadoutConfig,
    pub inference: InferenceConfig,
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be in [0, 1), got {p}")))
    }
}

fn check_ratio(name: &str, r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be in (0, 1], got {r}")))
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let f = &self.frontend;
        if f.n_filters == 0 || f.kernel_len % 2 == 0 || f.stride == 0 {
            return Err(Error::invalid("frontend needs filters, an odd kernel and a positive stride"));
        }
        if !(0.0..1.0).contains(&f.pre_emphasis) {
            return Err(Error::invalid("pre-emphasis coefficient must be in [0, 1)"));
        }
        self.encoder.validate()?;
        let g = &self.graph;
        if g.dim == 0 || g.branches == 0 {
            return Err(Error::invalid("graph dim and branch count must be positive"));
        }
        if g.temperature <= 0.0 {
            return Err(Error::invalid("temperature must be positive"));
        }
        check_prob("graph.dropout", g.dropout)?;
        check_prob("readout.graph_dropout", self.readout.graph_dropout)?;
        check_prob("readout.vector_dropout", self.readout.vector_dropout)?;
        check_ratio("graph.pool_temporal", g.pool_temporal)?;
        check_ratio("graph.pool_spatial", g.pool_spatial)?;
        check_ratio("graph.branch_pool", g.branch_pool)?;
        let inf = &self.inference;
        if !(inf.hop_secs > 0.0 && inf.chunk_secs > inf.hop_secs) {
            return Err(Error::invalid("inference needs chunk > hop > 0"));
        }
        self.feature_shape()?;
        Ok(())
    }

    /// Filterbank frames for one chunk.
    pub fn frames_per_chunk(&self) -> Result<usize> {
        let len = self.inference.chunk_samples();
        let k = self.frontend.kernel_len;
        if len < k {
            return Err(Error::InputTooSmall { axis: "chunk samples", got: len, min: k });
        }
        Ok((len - k) / self.frontend.stride + 1)
    }

    /// Encoder output `(channels, filters', frames')` for one chunk.
    pub fn feature_shape(&self) -> Result<(usize, usize, usize)> {
        self.encoder
            .output_shape(self.frontend.n_filters, self.frames_per_chunk()?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
            path: String::new(),
            msg: e.to_string(),
        })?;
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })
    }

    /// The deliberately tiny configuration used for gradient checks and
    /// toy-scale training.
    pub fn pocket() -> Self {
        ModelConfig {
            seed: 0,
            frontend: FrontendConfig {
                n_filters: 8,
                kernel_len: 17,
                f_min: 500.0,
                f_max: 8000.0,
                stride: 4,
                pre_emphasis: 0.97,
            },
            encoder: EncoderConfig {
                channels: vec![8, 8],
                kernel: [3, 3],
                pre_pool: [1, 4],
                block_pool: [1, 8],
            },
            kan: KanConfig::default(),
            graph: GraphConfig {
                dim: 8,
                branches: 2,
                ..GraphConfig::default()
            },
            readout: ReadoutConfig::default(),
            inference: InferenceConfig::default(),
        }
    }
}

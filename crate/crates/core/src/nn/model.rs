use candle_core::{Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{repeat_rows, ConvBlock, DecoderLayer, EncoderLayer, FeedForward};
use super::params::{Init, ParamStore};
use super::rowops::add_row;
use super::PredictorConfig;
use crate::canvas::CanvasImage;
use crate::error::{Error, Result};
use crate::prediction::{PredictionOutput, StrokePredictor};
use crate::stroke::{sigmoid, PARAM_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderRole {
    Canvas,
    Target,
}

/// Raw network outputs: `params (B, N, 8)` before the sigmoid and
/// `confidences (B, N)`.
pub struct NetOutput {
    pub params: Tensor,
    pub confidences: Tensor,
}

pub struct StrokeNet {
    cfg: PredictorConfig,
    store: ParamStore,
    canvas_encoder: Vec<ConvBlock>,
    target_encoder: Vec<ConvBlock>,
    pos_embed: Var,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    queries: Var,
    param_head: FeedForward,
    conf_head: FeedForward,
}

fn conv_encoder(init: &mut Init, name: &str, channels: usize) -> Result<Vec<ConvBlock>> {
    Ok(vec![
        ConvBlock::new(init, &format!("{name}.0"), 3, channels, 1)?,
        ConvBlock::new(init, &format!("{name}.1"), channels, channels, 2)?,
        ConvBlock::new(init, &format!("{name}.2"), channels, channels, 2)?,
    ])
}

impl StrokeNet {
    /// Freshly initialized network; identical seeds give identical weights.
    pub fn new(cfg: PredictorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = Init::new(ChaCha8Rng::seed_from_u64(seed));
        let c = cfg.feature_channels;
        let d = cfg.model_dim;
        let canvas_encoder = conv_encoder(&mut init, "canvas_encoder", c)?;
        let target_encoder = conv_encoder(&mut init, "target_encoder", c)?;
        let pos_embed = init.normal("pos_embed", &[cfg.token_count(), d], 0.02)?;
        let encoder = (0..cfg.encoder_layers)
            .map(|i| {
                EncoderLayer::new(
                    &mut init,
                    &format!("encoder.{i}"),
                    d,
                    cfg.head_count,
                    cfg.ffn_dim,
                )
            })
            .collect::<Result<_>>()?;
        let decoder = (0..cfg.decoder_layers)
            .map(|i| {
                DecoderLayer::new(
                    &mut init,
                    &format!("decoder.{i}"),
                    d,
                    cfg.head_count,
                    cfg.ffn_dim,
                )
            })
            .collect::<Result<_>>()?;
        let queries = init.normal("queries", &[cfg.query_count, d], 0.02)?;
        let param_head = FeedForward::new(&mut init, "param_head", d, d, PARAM_COUNT)?;
        let conf_head = FeedForward::new(&mut init, "conf_head", d, d, 1)?;
        Ok(StrokeNet {
            cfg,
            store: init.finish(),
            canvas_encoder,
            target_encoder,
            pos_embed,
            encoder,
            decoder,
            queries,
            param_head,
            conf_head,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn device(&self) -> &Device {
        self.pos_embed.device()
    }

    /// Stacks `P x P` images into a `(B, 3, P, P)` tensor.
    pub fn images_to_tensor(&self, images: &[CanvasImage]) -> Result<Tensor> {
        let p = self.cfg.patch_size;
        let mut data = Vec::with_capacity(images.len() * p * p * 3);
        for img in images {
            if img.dims() != (p, p) {
                return Err(Error::dims(
                    format!("{p}x{p} patch"),
                    format!("{}x{}", img.width(), img.height()),
                ));
            }
            data.extend(img.data().iter().map(|&v| v as f32));
        }
        let t = Tensor::from_vec(data, (images.len(), p, p, 3), self.device())?;
        Ok(t.permute((0, 3, 1, 2))?.contiguous()?)
    }

    /// `(B, 3, P, P) -> (B, C, P/4, P/4)`.
    pub fn extract_features(&self, img: &Tensor, role: EncoderRole, train: bool) -> Result<Tensor> {
        Ok(self
            .encode(img, role, train)?
            .transpose(0, 1)?
            .contiguous()?)
    }

    /// Channel-first features `(C, B, P/4, P/4)`.
    fn encode(&self, img: &Tensor, role: EncoderRole, train: bool) -> Result<Tensor> {
        let (_, ch, h, w) = img.dims4()?;
        let p = self.cfg.patch_size;
        if ch != 3 || h != p || w != p {
            return Err(Error::dims(
                format!("(B, 3, {p}, {p})"),
                format!("{:?}", img.dims()),
            ));
        }
        let blocks = match role {
            EncoderRole::Canvas => &self.canvas_encoder,
            EncoderRole::Target => &self.target_encoder,
        };
        let mut x = img.transpose(0, 1)?.contiguous()?;
        for b in blocks {
            x = b.forward(&x, train)?;
        }
        Ok(x)
    }

    /// Full forward pass on `(B, 3, P, P)` inputs. `train` selects batch
    /// statistics in the normalization layers and updates their running
    /// averages.
    pub fn forward(&self, canvas: &Tensor, target: &Tensor, train: bool) -> Result<NetOutput> {
        let fc = self.encode(canvas, EncoderRole::Canvas, train)?;
        let ft = self.encode(target, EncoderRole::Target, train)?;
        let (_, b, h, w) = fc.dims4()?;
        let d = self.cfg.model_dim;
        let t = h * w;
        let tokens = Tensor::cat(&[&fc, &ft], 0)?
            .reshape((d, b, t))?
            .permute((1, 2, 0))?
            .contiguous()?
            .reshape((b, t * d))?;
        let tokens = add_row(&tokens, self.pos_embed.as_tensor())?;
        let mut memory = tokens.reshape((b, t, d))?;
        for layer in &self.encoder {
            memory = layer.forward(&memory)?;
        }
        let n = self.cfg.query_count;
        let mut x = repeat_rows(self.queries.as_tensor(), b)?.reshape((b, n, d))?;
        for layer in &self.decoder {
            x = layer.forward(&x, &memory)?;
        }
        let params = self.param_head.forward(&x)?;
        let confidences = self.conf_head.forward(&x)?.squeeze(2)?;
        Ok(NetOutput {
            params,
            confidences,
        })
    }

    /// Converts raw outputs into per-patch predictions (sigmoid applied in f64).
    pub fn to_predictions(&self, out: &NetOutput) -> Result<Vec<PredictionOutput>> {
        let raw: Vec<Vec<Vec<f32>>> = out.params.to_vec3()?;
        let conf: Vec<Vec<f32>> = out.confidences.to_vec2()?;
        raw.into_iter()
            .zip(conf)
            .map(|(rows, c)| {
                let raw: Vec<[f64; PARAM_COUNT]> = rows
                    .iter()
                    .map(|r| std::array::from_fn(|i| r[i] as f64))
                    .collect();
                let params = raw.iter().map(|r| r.map(sigmoid)).collect();
                PredictionOutput::new(raw, params, c.into_iter().map(f64::from).collect())
            })
            .collect()
    }
}

impl StrokePredictor for StrokeNet {
    fn patch_size(&self) -> usize {
        self.cfg.patch_size
    }

    fn predict(
        &self,
        canvases: &[CanvasImage],
        targets: &[CanvasImage],
    ) -> Result<Vec<PredictionOutput>> {
        if canvases.len() != targets.len() {
            return Err(Error::dims(
                format!("{} targets", canvases.len()),
                targets.len(),
            ));
        }
        if canvases.is_empty() {
            return Ok(Vec::new());
        }
        let c = self.images_to_tensor(canvases)?;
        let t = self.images_to_tensor(targets)?;
        let out = self.forward(&c, &t, false)?;
        self.to_predictions(&out)
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{AutoEncoder, ModelConfig, OutputScaling};
use crate::nnet::{serialize, Module};
use crate::schedule::NoiseSchedule;
use crate::{Error, Result};

const PARAMS_FILE: &str = "params.bin";
const MANIFEST_FILE: &str = "manifest.txt";
const FORMAT: &str = "gradfield-checkpoint-1";

/// A trained model with the schedule it was trained on.
///
/// On disk a checkpoint is a directory holding `params.bin` (the tensor
/// container) and `manifest.txt` (one `key=value` per line).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: AutoEncoder,
    pub schedule: NoiseSchedule,
    pub seed: u64,
    pub iterations: usize,
}

fn join<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tensors = self.model.encoder.named_tensors("encoder");
        tensors.extend(self.model.decoder.named_tensors("decoder"));
        serialize::save_file(&dir.join(PARAMS_FILE), &tensors)?;

        let c = &self.model.config;
        let manifest = [
            ("format", FORMAT.to_string()),
            ("dim", c.dim.to_string()),
            ("latent_dim", c.latent_dim.to_string()),
            ("encoder_hidden", join(&c.encoder_hidden)),
            ("decoder_hidden", c.decoder_hidden.to_string()),
            ("decoder_blocks", c.decoder_blocks.to_string()),
            ("output_scaling", c.scaling.name().to_string()),
            ("sigmas", join(self.schedule.sigmas())),
            ("weights", join(self.schedule.weights())),
            ("seed", self.seed.to_string()),
            ("iterations", self.iterations.to_string()),
            ("parameters", self.model.num_params().to_string()),
        ];
        let text: String = manifest.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.clone(),
                line: i + 1,
                detail: "expected key=value".into(),
            })?;
            kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |key: &str| -> Result<(usize, &str)> {
            kv.get(key)
                .map(|(l, v)| (*l, v.as_str()))
                .ok_or_else(|| Error::invalid(format!("{}: missing key '{key}'", path.display())))
        };
        let bad = |line: usize, key: &str| Error::Parse {
            path: path.clone(),
            line,
            detail: format!("invalid value for '{key}'"),
        };
        let int = |key: &str| -> Result<usize> {
            let (l, v) = get(key)?;
            v.parse().map_err(|_| bad(l, key))
        };
        let list = |key: &str| -> Result<Vec<f64>> {
            let (l, v) = get(key)?;
            v.split(',')
                .map(|s| s.parse::<f64>().map_err(|_| bad(l, key)))
                .collect()
        };

        let (l, format) = get("format")?;
        if format != FORMAT {
            return Err(bad(l, "format"));
        }
        let (l, hidden) = get("encoder_hidden")?;
        let encoder_hidden = if hidden.is_empty() {
            Vec::new()
        } else {
            hidden
                .split(',')
                .map(|s| s.parse().map_err(|_| bad(l, "encoder_hidden")))
                .collect::<Result<_>>()?
        };
        let (l, scaling) = get("output_scaling")?;
        let config = ModelConfig {
            dim: int("dim")?,
            latent_dim: int("latent_dim")?,
            encoder_hidden,
            decoder_hidden: int("decoder_hidden")?,
            decoder_blocks: int("decoder_blocks")?,
            scaling: OutputScaling::parse(scaling).ok_or_else(|| bad(l, "output_scaling"))?,
        };
        let schedule = NoiseSchedule::new(list("sigmas")?, list("weights")?)?;
        let (l, seed) = get("seed")?;
        let seed = seed.parse().map_err(|_| bad(l, "seed"))?;

        let mut model = AutoEncoder::new(config, 0)?;
        let tensors = serialize::load_file(&dir.join(PARAMS_FILE))?;
        serialize::load_into(&mut model.encoder, "encoder", &tensors)?;
        serialize::load_into(&mut model.decoder, "decoder", &tensors)?;
        Ok(Self {
            model,
            schedule,
            seed,
            iterations: int("iterations")?,
        })
    }
}

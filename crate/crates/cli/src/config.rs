//! Flat `key=value` run configuration.
//!
//! Values come from, in increasing priority: the schema defaults, a
//! `--config` file, `--set key=value` flags and the dedicated `--seed` /
//! `--out` flags. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// One documented configuration key.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
    }
}

pub const COMMON: &[Key] = &[
    key("seed", "0", "random seed"),
    key("out", "out", "output directory"),
];

const FIELD_SOURCE: &[Key] = &[
    key("checkpoint", "", "checkpoint directory; empty uses the analytic field of `cloud`"),
    key("cloud", "", "point cloud file: oracle support, or the shape to encode"),
];

const SCHEDULE: &[Key] = &[
    key("sigma_max", "1.0", "largest noise level"),
    key("sigma_min", "0.01", "smallest noise level"),
    key("levels", "10", "number of geometric noise levels"),
];

pub const GEN_DATA: &[&[Key]] = &[&[
    key("shape", "circle", "circle | square | star | glyph | sphere | two-spheres"),
    key("count", "1", "number of shapes"),
    key("n_points", "0", "points per shape; 0 means 800 in 2D and 2048 in 3D"),
    key("noise", "0.0", "std of Gaussian jitter added to every coordinate"),
    key("radius", "0.5", "circle / sphere radius"),
    key("side", "1.0", "square side length"),
    key("tips", "5", "star tips"),
    key("outer", "0.9", "star outer radius"),
    key("inner", "0.4", "star inner radius"),
    key("digit", "7", "glyph digit 0-9"),
    key("separation", "1.0", "two-spheres centre distance"),
    key("size_jitter", "0.0", "relative uniform jitter of size parameters across shapes"),
    key("normalize", "false", "fit each shape into [-1, 1]^D"),
    key("format", "xyz", "xyz | csv | ply_ascii"),
]];

pub const TRAIN: &[&[Key]] = &[
    &[
        key("data", "", "cloud file or directory of clouds (required)"),
        key("latent_dim", "32", "latent code width"),
        key("encoder_hidden", "64,128", "encoder point-MLP widths"),
        key("decoder_hidden", "64", "decoder hidden width"),
        key("decoder_blocks", "4", "decoder residual blocks"),
        key("output_scaling", "inverse_sigma", "inverse_sigma | identity"),
    ],
    SCHEDULE,
    &[
        key("epochs", "2000", "training epochs"),
        key("batch_shapes", "64", "shapes per step"),
        key("encoder_lr", "1e-3", "initial encoder learning rate"),
        key("decoder_lr", "1e-4", "initial decoder learning rate"),
        key("lr_floor_factor", "0.1", "final rate as a fraction of the initial one"),
        key("decay_start", "1000", "epoch at which linear decay begins"),
        key("points_per_level", "0", "points drawn per shape and level; 0 uses all"),
    ],
];

pub const SAMPLE: &[&[Key]] = &[
    FIELD_SOURCE,
    &[
        key("latent", "encode", "encode (latent of `cloud`) | gaussian (fit on `data`)"),
        key("data", "", "training clouds for latent=gaussian"),
    ],
    SCHEDULE,
    &[
        key("n", "500", "number of chains"),
        key("alpha", "2e-4", "Langevin step size"),
        key("steps_per_level", "10", "updates per noise level"),
        key("prior", "uniform", "uniform | gaussian | fixed"),
        key("prior_std", "0.5", "std of the gaussian prior (centred at the origin)"),
        key("prior_point", "0,0", "start point of the fixed prior"),
        key("ordering", "noise_first", "noise_first | gradient_first"),
        key("trajectory", "false", "write chain positions at every level boundary"),
        key("format", "xyz", "xyz | csv | ply_ascii"),
    ],
];

pub const EXTRACT: &[&[Key]] = &[
    FIELD_SOURCE,
    &[
        key("mode", "contour", "contour | filter"),
        key("sigma", "0.01", "noise level of the field"),
        key("resolution", "256", "grid nodes per axis"),
        key("extent", "1.0", "grid covers [-extent, extent]^2"),
        key("delta", "0.005", "iso-level of the gradient norm"),
        key("candidates", "", "points to filter in mode=filter"),
    ],
];

pub const RENDER: &[&[Key]] = &[
    FIELD_SOURCE,
    &[
        key("sigma", "0.01", "noise level of the field"),
        key("width", "64", "image width"),
        key("height", "64", "image height"),
        key("eye", "0,0,-2", "camera position"),
        key("target", "0,0,0", "camera target"),
        key("up", "0,1,0", "camera up vector"),
        key("fov", "40", "vertical field of view in degrees"),
        key("step_rate", "1.0", "sphere-tracing step rate"),
        key("max_steps", "64", "sphere-tracing steps"),
        key("iso_level", "0.005", "iso-level in the marched quantity's units"),
        key("max_travel", "4.0", "rays travelling farther are misses"),
        key("background", "1,1,1", "background RGB in [0, 1]"),
        key("field_scale", "sigma_squared", "sigma_squared | raw"),
    ],
];

pub const EVAL: &[&[Key]] = &[&[
    key("reference", "", "reference cloud file or directory"),
    key("generated", "", "generated cloud file or directory"),
    key("normalize", "bbox", "bbox | none"),
]];

pub const FIELD_VIZ: &[&[Key]] = &[
    FIELD_SOURCE,
    &[
        key("sigmas", "1,0.1,0.01", "noise levels, one panel each"),
        key("resolution", "48", "heatmap cells per axis"),
        key("arrows", "16", "quiver arrows per axis"),
        key("extent", "1.0", "panels cover [-extent, extent]^2"),
    ],
];

/// All keys of a command, common keys first.
pub fn schema(groups: &[&[Key]]) -> Vec<Key> {
    COMMON
        .iter()
        .chain(groups.iter().flat_map(|g| g.iter()))
        .copied()
        .collect()
}

/// `--help` text listing every key with its default.
pub fn help_text(groups: &[&[Key]]) -> String {
    let keys = schema(groups);
    let width = keys.iter().map(|k| k.name.len() + k.default.len() + 1).max().unwrap_or(0);
    let mut s = String::from("Config keys (key=default):\n");
    for k in keys {
        let kv = format!("{}={}", k.name, k.default);
        s.push_str(&format!("  {kv:<width$}  {}\n", k.help));
    }
    s
}

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
    order: Vec<&'static str>,
}

impl Config {
    pub fn resolve(
        groups: &[&[Key]],
        file: Option<&Path>,
        sets: &[String],
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self, CliError> {
        let keys = schema(groups);
        let mut values: BTreeMap<String, String> = keys
            .iter()
            .map(|k| (k.name.to_string(), k.default.to_string()))
            .collect();
        let known = |name: &str| keys.iter().any(|k| k.name == name);
        let mut assign = |k: &str, v: &str, origin: &str| -> Result<(), CliError> {
            let k = k.trim();
            if !known(k) {
                return Err(CliError::config(format!("{origin}: unknown key '{k}'")));
            }
            values.insert(k.to_string(), v.trim().to_string());
            Ok(())
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    CliError::config(format!("{}:{}: expected key=value", path.display(), i + 1))
                })?;
                assign(k, v, &format!("{}:{}", path.display(), i + 1))?;
            }
        }
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set '{s}': expected key=value")))?;
            assign(k, v, "--set")?;
        }
        if let Some(seed) = seed {
            values.insert("seed".into(), seed.to_string());
        }
        if let Some(out) = out {
            values.insert("out".into(), out.display().to_string());
        }
        Ok(Self {
            values,
            order: keys.iter().map(|k| k.name).collect(),
        })
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("config key '{key}' is not in the schema"))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T, CliError> {
        self.str(key)
            .parse()
            .map_err(|_| CliError::config(format!("{key}: expected {what}, got '{}'", self.str(key))))
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parsed(key, "a number")?;
        if !v.is_finite() {
            return Err(CliError::config(format!("{key}: must be finite")));
        }
        Ok(v)
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        self.parsed(key, "true or false")
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let s = self.str(key);
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| CliError::config(format!("{key}: invalid number '{v}'")))
            })
            .collect()
    }

    pub fn vec3(&self, key: &str) -> Result<[f64; 3], CliError> {
        let v = self.f64_list(key)?;
        v.try_into()
            .map_err(|_| CliError::config(format!("{key}: expected three comma-separated numbers")))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let s = self.str(key);
        (!s.is_empty()).then(|| PathBuf::from(s))
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key)
            .ok_or_else(|| CliError::config(format!("{key}: required")))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.u64("seed")
    }

    pub fn out(&self) -> PathBuf {
        PathBuf::from(self.str("out"))
    }

    /// The resolved configuration in schema order.
    pub fn to_text(&self) -> String {
        self.order
            .iter()
            .map(|k| format!("{k}={}\n", self.values[*k]))
            .collect()
    }
}

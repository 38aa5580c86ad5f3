//! Pipeline parameters and the `key = value` config format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How the neighbor count of per-cube graphs is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KPolicy {
    /// `round(sqrt(m))` for a cube with `m` points, at least 2.
    SqrtM,
    Fixed(usize),
}

impl KPolicy {
    pub fn resolve(self, m: usize) -> usize {
        match self {
            KPolicy::SqrtM => ((m as f64).sqrt().round() as usize).max(2),
            KPolicy::Fixed(k) => k,
        }
    }
}

impl fmt::Display for KPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KPolicy::SqrtM => f.write_str("sqrt-m"),
            KPolicy::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for KPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "sqrt-m" || s == "sqrt_m" {
            return Ok(KPolicy::SqrtM);
        }
        let digits = s.strip_prefix("fixed:").unwrap_or(s);
        match digits.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(KPolicy::Fixed(k)),
            _ => Err(Error::Config(format!(
                "k policy must be `sqrt-m` or a positive integer, got {s:?}"
            ))),
        }
    }
}

/// Form of the direct-component term of the cube similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcMode {
    /// `1 - |<d_t, d_c>|` on unit directions; aligned cubes score high.
    Complement,
    /// `|<d_t, d_c>|` on the raw direct components.
    Literal,
}

impl fmt::Display for DcMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DcMode::Complement => "complement",
            DcMode::Literal => "literal",
        })
    }
}

impl FromStr for DcMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "complement" => Ok(DcMode::Complement),
            "literal" => Ok(DcMode::Literal),
            other => Err(Error::Config(format!(
                "dc mode must be `complement` or `literal`, got {other:?}"
            ))),
        }
    }
}

/// What the Laplacian smoothness term of the fill acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothnessPrior {
    /// The displacement from the registered source; an exact source
    /// reproduces itself.
    Offset,
    /// The solved coordinates themselves. With the default weights this
    /// contracts the patch toward its middle.
    Literal,
}

impl fmt::Display for SmoothnessPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SmoothnessPrior::Offset => "offset",
            SmoothnessPrior::Literal => "literal",
        })
    }
}

impl FromStr for SmoothnessPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "offset" => Ok(SmoothnessPrior::Offset),
            "literal" => Ok(SmoothnessPrior::Literal),
            other => Err(Error::Config(format!(
                "prior must be `offset` or `literal`, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Cube side `M` in cells.
    pub cube_size: usize,
    pub stride: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub candidate_ratio: f64,
    pub min_hole_pixels: usize,
    pub k_policy: KPolicy,
    pub dc_mode: DcMode,
    pub prior: SmoothnessPrior,
    /// Keep the target's known coordinates in the solved cube.
    pub preserve_known: bool,
    pub all_axes: bool,
    pub seed: u64,
    /// Neighbor count for the coordinate normalization scale.
    pub normalize_k: usize,
    /// Neighbor count for normal estimation when the input has none.
    pub normal_k: usize,
    /// How many of the best-ranked registrable sources compete on fit.
    pub source_pool: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cube_size: 20,
            stride: 5,
            alpha: 0.1,
            beta: 10.0,
            sigma: 1.0,
            candidate_ratio: 0.8,
            min_hole_pixels: 4,
            k_policy: KPolicy::SqrtM,
            dc_mode: DcMode::Complement,
            prior: SmoothnessPrior::Offset,
            preserve_known: false,
            all_axes: false,
            seed: 0,
            normalize_k: 1,
            normal_k: 10,
            source_pool: 5,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl PipelineConfig {
    /// Sets one option. Keys accept `-` or `_` separators; `M` is an alias
    /// for `cube_size`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key_norm = key.trim().replace('-', "_").to_ascii_lowercase();
        let value = value.trim();
        match key_norm.as_str() {
            "m" | "cube_size" => self.cube_size = parse_num(key, value)?,
            "stride" => self.stride = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "candidate_ratio" => self.candidate_ratio = parse_num(key, value)?,
            "min_hole_pixels" => self.min_hole_pixels = parse_num(key, value)?,
            "k" | "k_policy" => self.k_policy = value.parse()?,
            "dc_mode" => self.dc_mode = value.parse()?,
            "prior" => self.prior = value.parse()?,
            "preserve_known" => self.preserve_known = parse_bool(key, value)?,
            "all_axes" => self.all_axes = parse_bool(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "normalize_k" => self.normalize_k = parse_num(key, value)?,
            "normal_k" => self.normal_k = parse_num(key, value)?,
            "source_pool" => self.source_pool = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    n + 1
                ))
            })?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = PipelineConfig::default();
        config.apply_text(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.cube_size < 2 {
            return fail(format!(
                "cube size must be at least 2, got {}",
                self.cube_size
            ));
        }
        if self.stride == 0 || self.stride > self.cube_size {
            return fail(format!(
                "stride must be in 1..={}, got {}",
                self.cube_size, self.stride
            ));
        }
        if !(self.alpha >= 0.0)
            || !(self.beta >= 0.0)
            || !self.alpha.is_finite()
            || !self.beta.is_finite()
        {
            return fail(format!(
                "alpha and beta must be finite and non-negative, got {} and {}",
                self.alpha, self.beta
            ));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return fail("alpha = 0 with beta = 0 leaves the missing nodes unconstrained".into());
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.candidate_ratio > 0.0 && self.candidate_ratio <= 1.0) {
            return fail(format!(
                "candidate ratio must be in (0, 1], got {}",
                self.candidate_ratio
            ));
        }
        if self.min_hole_pixels == 0 {
            return fail("min hole pixels must be positive".into());
        }
        if self.normalize_k == 0 || self.normal_k == 0 || self.source_pool == 0 {
            return fail("neighbor counts and the source pool must be positive".into());
        }
        if let KPolicy::Fixed(k) = self.k_policy {
            if k < 2 {
                return fail(format!("a fixed k must be at least 2, got {k}"));
            }
        }
        Ok(())
    }

    /// Renders every option as `key = value` lines; `parse` reads it back.
    pub fn to_text(&self) -> String {
        format!(
            "cube_size = {}\nstride = {}\nalpha = {}\nbeta = {}\nsigma = {}\ncandidate_ratio = {}\n\
             min_hole_pixels = {}\nk_policy = {}\ndc_mode = {}\nprior = {}\npreserve_known = {}\nall_axes = {}\n\
             seed = {}\nnormalize_k = {}\nnormal_k = {}\nsource_pool = {}\n",
            self.cube_size,
            self.stride,
            self.alpha,
            self.beta,
            self.sigma,
            self.candidate_ratio,
            self.min_hole_pixels,
            self.k_policy,
            self.dc_mode,
            self.prior,
            self.preserve_known,
            self.all_axes,
            self.seed,
            self.normalize_k,
            self.normal_k,
            self.source_pool
        )
    }
}

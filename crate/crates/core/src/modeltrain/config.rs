use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fusion::MlbParams;
use crate::layers::{Activation, CellKind, CONV_WIDTHS};
use crate::numcore::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Convolutional intent branch, BiLSTM slot branch, dense addition, CRF.
    Model1a,
    /// As `Model1a` with MLB fusion.
    Model1b,
    /// BiGRU in both branches, dense addition, softmax slot head.
    Model2a,
    /// As `Model2a` with MLB fusion.
    Model2b,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Model1a,
        Variant::Model1b,
        Variant::Model2a,
        Variant::Model2b,
    ];

    pub fn uses_conv_intent(self) -> bool {
        matches!(self, Variant::Model1a | Variant::Model1b)
    }

    pub fn uses_crf(self) -> bool {
        self.uses_conv_intent()
    }

    pub fn uses_mlb(self) -> bool {
        matches!(self, Variant::Model1b | Variant::Model2b)
    }

    pub fn slot_cell(self) -> CellKind {
        if self.uses_conv_intent() {
            CellKind::Lstm
        } else {
            CellKind::Gru
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Model1a => "model1a",
            Variant::Model1b => "model1b",
            Variant::Model2a => "model2a",
            Variant::Model2b => "model2b",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant {s:?}")))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every architectural and training knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Word-vector width (L1).
    pub embed_dim: usize,
    /// Padded sequence length (L2).
    pub max_len: usize,
    /// Recurrent state width per direction.
    pub hidden: usize,
    /// Width of each branch's dense output.
    pub features: usize,
    pub conv_widths: Vec<usize>,
    pub conv_filters: usize,
    pub conv_activation: Activation,
    pub branch_activation: Activation,
    pub dropout: f64,
    /// MLB rank bound k.
    pub mlb_rank: usize,
    /// MLB output width l.
    pub mlb_out: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub precision: Precision,
    pub intent_loss_weight: f64,
    pub slot_loss_weight: f64,
    pub freeze_embeddings: bool,
    /// Half-width of the uniform range for words without a pretrained vector.
    pub unseen_range: f64,
    /// Fixed number of gradient shards per batch; results do not depend on
    /// how many threads evaluate them.
    pub shards: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Model2b,
            embed_dim: 300,
            max_len: 50,
            hidden: 128,
            features: 128,
            conv_widths: CONV_WIDTHS.to_vec(),
            conv_filters: 128,
            conv_activation: Activation::Relu,
            branch_activation: Activation::None,
            dropout: 0.5,
            mlb_rank: 32,
            mlb_out: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            precision: Precision::F32,
            intent_loss_weight: 1.0,
            slot_loss_weight: 1.0,
            freeze_embeddings: false,
            unseen_range: 0.25,
            shards: 4,
        }
    }
}

impl ModelConfig {
    pub fn for_variant(variant: Variant) -> Self {
        ModelConfig {
            variant,
            ..Default::default()
        }
    }

    /// Width of the fused per-position features.
    pub fn fused_width(&self) -> usize {
        if self.variant.uses_mlb() {
            self.mlb_out
        } else {
            self.features
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("max_len", self.max_len),
            ("hidden", self.hidden),
            ("features", self.features),
            ("batch_size", self.batch_size),
            ("shards", self.shards),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return bad("learning_rate and epsilon must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if self.intent_loss_weight < 0.0 || self.slot_loss_weight < 0.0 {
            return bad("loss weights must be non-negative".into());
        }
        if self.branch_activation == Activation::Softmax
            || self.conv_activation == Activation::Softmax
        {
            return bad("branch and conv activations must be none or relu".into());
        }
        if self.variant.uses_conv_intent() {
            if self.conv_widths.is_empty()
                || self.conv_widths.contains(&0)
                || self.conv_filters == 0
            {
                return bad("conv_widths and conv_filters must be positive".into());
            }
            let widest = *self.conv_widths.iter().max().unwrap();
            if self.max_len < widest {
                return bad(format!(
                    "max_len {} is shorter than the widest filter {widest}",
                    self.max_len
                ));
            }
        }
        if self.variant.uses_mlb() {
            MlbParams::validate_dims(self.features, self.features, self.mlb_rank, self.mlb_out)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Set one field from its text form. Lists are comma separated.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut obj = serde_json::to_value(&*self)?;
        let map = obj.as_object_mut().expect("config serialises to an object");
        let current = map
            .get(key)
            .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        let v = value.trim();
        let parsed = match current {
            Value::Array(_) => {
                let items: std::result::Result<Vec<Value>, _> = v
                    .trim_matches(|c| c == '[' || c == ']')
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| serde_json::from_str(s.trim()))
                    .collect();
                Value::Array(items.map_err(|e| Error::Config(format!("{key}: {e}")))?)
            }
            Value::String(_) => Value::String(v.trim_matches('"').to_string()),
            _ => {
                serde_json::from_str(v).map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))?
            }
        };
        map.insert(key.to_string(), parsed);
        *self = serde_json::from_value(obj)
            .map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))?;
        Ok(())
    }

    /// Apply `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ModelConfig::default();
        cfg.apply_text(&text)
            .map_err(|e| e.context(path.display().to_string()))?;
        Ok(cfg)
    }

    /// `key = value` lines sorted by key; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let obj = serde_json::to_value(self).expect("config serialises");
        let mut out = String::new();
        for (k, v) in obj.as_object().expect("object") {
            let text = match v {
                Value::String(s) => s.clone(),
                Value::Array(a) => a
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            out += &format!("{k} = {text}\n");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for v in Variant::ALL {
            ModelConfig::for_variant(v).validate().unwrap();
        }
    }

    #[test]
    fn parses_flat_text() {
        let mut c = ModelConfig::default();
        c.apply_text("# comment\nvariant = model1a\nmax_len=36\nconv_widths = 1, 2, 3\nlearning_rate = 0.01 # inline\nprecision = f64\nfreeze_embeddings = true\n")
            .unwrap();
        assert_eq!(c.variant, Variant::Model1a);
        assert_eq!(c.max_len, 36);
        assert_eq!(c.conv_widths, [1, 2, 3]);
        assert_eq!(c.learning_rate, 0.01);
        assert_eq!(c.precision, Precision::F64);
        assert!(c.freeze_embeddings);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut c = ModelConfig::default();
        assert!(c.set("hiden", "3").is_err());
        assert!(c.set("hidden", "three").is_err());
        assert!(c.set("variant", "model3").is_err());
        assert!(c.apply_text("hidden 3").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = ModelConfig::for_variant(Variant::Model1b);
        c.dropout = 0.25;
        c.seed = 99;
        let mut d = ModelConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn rank_condition_checked() {
        let mut c = ModelConfig::default();
        c.mlb_rank = 128;
        assert!(c.validate().is_err());
        c.variant = Variant::Model2a;
        assert!(c.validate().is_ok());
    }
}

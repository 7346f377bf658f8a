use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Topology of the gated mixture network.
///
/// The prediction side is three fully connected layers
/// (`d_in -> h_size -> h_size -> d_out`, ELU on the hidden layers) whose
/// weights are a gating-weighted blend of `n_experts` parameter sets. The
/// gating side is three fully connected layers
/// (`gating_indices.len() -> g_hidden -> g_hidden -> n_experts`, ELU hidden,
/// softmax output) fed with the listed input columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub d_in: usize,
    pub d_out: usize,
    #[serde(default = "default_h_size")]
    pub h_size: usize,
    #[serde(default = "default_n_experts")]
    pub n_experts: usize,
    #[serde(default = "default_g_hidden")]
    pub g_hidden: usize,
    /// Input columns fed to the gating network.
    pub gating_indices: Vec<usize>,
    /// Keep probability of the inverted dropout applied to layer inputs in
    /// train mode. 1.0 disables dropout.
    #[serde(default = "default_dropout_retention")]
    pub dropout_retention: f64,
}

fn default_h_size() -> usize {
    512
}

fn default_n_experts() -> usize {
    8
}

fn default_g_hidden() -> usize {
    32
}

fn default_dropout_retention() -> f64 {
    0.7
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 {
            return Err(Error::Config("d_in must be positive".into()));
        }
        if self.d_out == 0 {
            return Err(Error::Config("d_out must be positive".into()));
        }
        if self.h_size == 0 {
            return Err(Error::Config("h_size must be positive".into()));
        }
        if self.n_experts == 0 {
            return Err(Error::Config("n_experts must be positive".into()));
        }
        if self.g_hidden == 0 {
            return Err(Error::Config("g_hidden must be positive".into()));
        }
        if self.gating_indices.is_empty() {
            return Err(Error::Config("gating_indices must not be empty".into()));
        }
        if let Some(&bad) = self.gating_indices.iter().find(|&&i| i >= self.d_in) {
            return Err(Error::Config(format!(
                "gating index {bad} out of range for d_in = {}",
                self.d_in
            )));
        }
        if !(self.dropout_retention > 0.0 && self.dropout_retention <= 1.0) {
            return Err(Error::Config(format!(
                "dropout_retention must be in (0, 1], got {}",
                self.dropout_retention
            )));
        }
        Ok(())
    }

    /// Weight and bias dimensions of the gating stack, layer by layer.
    pub fn gating_dims(&self) -> [(usize, usize); 3] {
        [
            (self.g_hidden, self.gating_indices.len()),
            (self.g_hidden, self.g_hidden),
            (self.n_experts, self.g_hidden),
        ]
    }

    /// Weight and bias dimensions of one expert (and of the blended stack).
    pub fn expert_dims(&self) -> [(usize, usize); 3] {
        [
            (self.h_size, self.d_in),
            (self.h_size, self.h_size),
            (self.d_out, self.h_size),
        ]
    }

    /// Closed-form total parameter count:
    /// `K (h d_in + h^2 + d_out h + 2 h + d_out)` for the experts plus the
    /// gating stack.
    pub fn param_count(&self) -> usize {
        let (h, k, g, gi) = (self.h_size, self.n_experts, self.g_hidden, self.gating_indices.len());
        let expert = h * self.d_in + h * h + self.d_out * h + 2 * h + self.d_out;
        let gating = g * gi + g + g * g + g + k * g + k;
        k * expert + gating
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkConfig {
        NetworkConfig {
            d_in: 10,
            d_out: 7,
            h_size: 8,
            n_experts: 3,
            g_hidden: 4,
            gating_indices: vec![0, 2, 4],
            dropout_retention: 0.7,
        }
    }

    #[test]
    fn validate_accepts_tiny() {
        tiny().validate().unwrap();
    }

    #[test]
    fn validate_names_offending_field() {
        let mut c = tiny();
        c.gating_indices = vec![0, 10];
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("gating index 10"), "{msg}");

        let mut c = tiny();
        c.dropout_retention = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("dropout_retention"));

        let mut c = tiny();
        c.h_size = 0;
        assert!(c.validate().unwrap_err().to_string().contains("h_size"));
    }

    #[test]
    fn serde_defaults_and_unknown_key_rejection() {
        let cfg: NetworkConfig =
            serde_json::from_str(r#"{"d_in": 10, "d_out": 7, "gating_indices": [1]}"#).unwrap();
        assert_eq!(cfg.h_size, 512);
        assert_eq!(cfg.n_experts, 8);
        assert_eq!(cfg.g_hidden, 32);
        assert_eq!(cfg.dropout_retention, 0.7);

        let err = serde_json::from_str::<NetworkConfig>(
            r#"{"d_in": 10, "d_out": 7, "gating_indices": [1], "hidden": 4}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn param_count_formula_hand_case() {
        let c = tiny();
        // experts: 3 * (8*10 + 64 + 7*8 + 16 + 7) = 3 * 223 = 669
        // gating: 4*3 + 4 + 16 + 4 + 3*4 + 3 = 51
        assert_eq!(c.param_count(), 669 + 51);
    }
}

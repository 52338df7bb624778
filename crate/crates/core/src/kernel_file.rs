//! JSON kernel definition files.
//!
//! ```json
//! {
//!   "states": ["1", "2"],
//!   "kind": "affine",
//!   "base": [[0.5, 0.5], [0.2, 0.8]],
//!   "coeff": [[[0.1, 0.0], [-0.1, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
//! }
//! ```
//!
//! `coeff[i][j][l]` is the sensitivity of `P_mu(i, j)` to `mu_l`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::AffineKernel;

pub const KIND_AFFINE: &str = "affine";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub states: Vec<String>,
    pub kind: String,
    pub base: Vec<Vec<f64>>,
    pub coeff: Vec<Vec<Vec<f64>>>,
}

impl KernelFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::KernelFile(format!("line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::KernelFile(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks labels and kind, then builds (and thereby validates) the kernel.
    pub fn to_kernel(&self) -> Result<AffineKernel> {
        if self.kind != KIND_AFFINE {
            return Err(Error::KernelFile(format!(
                "field `kind`: unsupported kernel kind {:?}, expected \"{KIND_AFFINE}\"",
                self.kind
            )));
        }
        let mut seen = HashSet::new();
        for label in &self.states {
            if !seen.insert(label) {
                return Err(Error::KernelFile(format!(
                    "field `states`: duplicate label {label:?}"
                )));
            }
        }
        if self.states.len() != self.base.len() {
            return Err(Error::KernelFile(format!(
                "field `states` has {} labels but `base` has {} rows",
                self.states.len(),
                self.base.len()
            )));
        }
        AffineKernel::new(self.base.clone(), self.coeff.clone())
    }

    /// Labels default to `"1"`, `"2"`, ...
    pub fn from_kernel(kernel: &AffineKernel, labels: Option<Vec<String>>) -> Self {
        let states =
            labels.unwrap_or_else(|| (1..=kernel.n_states()).map(|i| i.to_string()).collect());
        Self {
            states,
            kind: KIND_AFFINE.to_string(),
            base: kernel.base_rows(),
            coeff: kernel.coeff_tensor(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casestudy::build_example;
    use proptest::prelude::*;

    #[test]
    fn example_round_trips() {
        let chain = build_example(0.3).unwrap();
        let file = KernelFile::from_kernel(chain.kernel(), None);
        assert_eq!(file.states, vec!["1", "2", "3", "4"]);
        let back = KernelFile::parse(&file.to_json()).unwrap();
        assert_eq!(&back.to_kernel().unwrap(), chain.kernel());
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = KernelFile::parse("{\n  \"states\": [\"a\"],\n  \"kind\": 3\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");

        let err = KernelFile::parse(
            r#"{"states":["a"],"kind":"affine","base":[[1.0]],"coeff":[[[0.0]]],"x":1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn semantic_errors() {
        let mut f = KernelFile::from_kernel(build_example(0.1).unwrap().kernel(), None);
        f.kind = "blackbox".into();
        assert!(f.to_kernel().unwrap_err().to_string().contains("kind"));

        let mut f = KernelFile::from_kernel(build_example(0.1).unwrap().kernel(), None);
        f.states[1] = "1".into();
        assert!(f.to_kernel().unwrap_err().to_string().contains("duplicate"));

        let mut f = KernelFile::from_kernel(build_example(0.1).unwrap().kernel(), None);
        f.base[2] = vec![0.5, 0.0, 0.4, 0.0];
        let msg = f.to_kernel().unwrap_err().to_string();
        assert!(msg.contains("base row 3 sums to 0.9"), "{msg}");
    }

    proptest! {
        #[test]
        fn decimals_survive_json(gamma in 0.0f64..=0.5) {
            let chain = build_example(gamma).unwrap();
            let text = KernelFile::from_kernel(chain.kernel(), None).to_json();
            let back = KernelFile::parse(&text).unwrap().to_kernel().unwrap();
            prop_assert_eq!(&back, chain.kernel());
        }
    }
}

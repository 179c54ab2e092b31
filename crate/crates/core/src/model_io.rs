//! Plain-text model files.
//!
//! ```text
//! pcgrbm-model 1
//! kind pcgrbm                 # or grbm
//! visible <p>
//! hidden <q>
//! epsilon <f64>
//! epochs <usize>
//! batch <full|size>
//! seed <u64>
//! lambda <f64>                # this block only for kind pcgrbm
//! sign-mode <paper-exact|descent>
//! constraint-rate <f64>
//! use-sampled-hidden <true|false>
//! constraints-must <count>
//! constraints-cannot <count>
//! constraints-hash <16 hex digits>
//! weights
//! <p lines, q space-separated values each>
//! visible-bias
//! <p values>
//! hidden-bias
//! <q values>
//! sigma
//! <p values>
//! end
//! ```
//!
//! Header lines are `key value`. Numbers use Rust's shortest round-trip
//! exponent formatting, so a save/load cycle is bit-exact. Blank lines and
//! text after `#` are ignored.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::data::{ConstraintSet, Fingerprint};
use crate::error::{Error, Result};
use crate::grbm::{GrbmParams, TrainConfig};
use crate::pcgrbm::{PcgrbmConfig, SignMode};

pub const MAGIC: &str = "pcgrbm-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintHeader {
    pub lambda: f64,
    pub sign_mode: SignMode,
    pub constraint_rate: f64,
    pub use_sampled_hidden: bool,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: GrbmParams,
    pub train: TrainConfig,
    pub constrained: Option<ConstraintHeader>,
}

impl ModelFile {
    pub fn grbm(params: GrbmParams, train: TrainConfig) -> Self {
        ModelFile {
            params,
            train,
            constrained: None,
        }
    }

    pub fn pcgrbm(params: GrbmParams, cfg: &PcgrbmConfig, constraints: &ConstraintSet) -> Self {
        ModelFile {
            params,
            train: cfg.base.clone(),
            constrained: Some(ConstraintHeader {
                lambda: cfg.lambda,
                sign_mode: cfg.sign_mode,
                constraint_rate: cfg.constraint_rate,
                use_sampled_hidden: cfg.use_sampled_hidden,
                fingerprint: constraints.fingerprint(),
            }),
        }
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        let join = |v: &mut dyn Iterator<Item = &f64>| {
            v.map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
        };
        line(format!("{MAGIC} {VERSION}"));
        line(format!(
            "kind {}",
            if self.constrained.is_some() { "pcgrbm" } else { "grbm" }
        ));
        line(format!("visible {}", p.visible()));
        line(format!("hidden {}", p.hidden()));
        line(format!("epsilon {:e}", self.train.epsilon));
        line(format!("epochs {}", self.train.epochs));
        line(format!("batch {}", self.train.batch_size));
        line(format!("seed {}", self.train.seed));
        if let Some(c) = &self.constrained {
            line(format!("lambda {:e}", c.lambda));
            line(format!("sign-mode {}", c.sign_mode));
            line(format!("constraint-rate {:e}", c.constraint_rate));
            line(format!("use-sampled-hidden {}", c.use_sampled_hidden));
            line(format!("constraints-must {}", c.fingerprint.must));
            line(format!("constraints-cannot {}", c.fingerprint.cannot));
            line(format!("constraints-hash {}", c.fingerprint.hash));
        }
        line("weights".into());
        for row in p.weights.rows() {
            line(join(&mut row.iter()));
        }
        line("visible-bias".into());
        line(join(&mut p.visible_bias.iter()));
        line("hidden-bias".into());
        line(join(&mut p.hidden_bias.iter()));
        line("sigma".into());
        line(join(&mut p.sigma.iter()));
        line("end".into());
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::ModelFormat(format!("unexpected end of file, expected {what}")))
        };

        let magic = next("header")?;
        if magic != format!("{MAGIC} {VERSION}") {
            return Err(Error::ModelFormat(format!("bad header line {magic:?}")));
        }
        let mut kv = |key: &str| -> Result<String> {
            let l = next(key)?;
            match l.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_owned()),
                _ => Err(Error::ModelFormat(format!("expected `{key} <value>`, got {l:?}"))),
            }
        };
        fn num<T: std::str::FromStr>(key: &str, v: String) -> Result<T> {
            v.parse()
                .map_err(|_| Error::ModelFormat(format!("bad value for {key}: {v:?}")))
        }

        let kind = kv("kind")?;
        let visible: usize = num("visible", kv("visible")?)?;
        let hidden: usize = num("hidden", kv("hidden")?)?;
        let train = TrainConfig {
            epsilon: num("epsilon", kv("epsilon")?)?,
            epochs: num("epochs", kv("epochs")?)?,
            batch_size: kv("batch")?.parse()?,
            seed: num("seed", kv("seed")?)?,
        };
        let constrained = match kind.as_str() {
            "grbm" => None,
            "pcgrbm" => Some(ConstraintHeader {
                lambda: num("lambda", kv("lambda")?)?,
                sign_mode: kv("sign-mode")?.parse()?,
                constraint_rate: num("constraint-rate", kv("constraint-rate")?)?,
                use_sampled_hidden: num("use-sampled-hidden", kv("use-sampled-hidden")?)?,
                fingerprint: Fingerprint {
                    must: num("constraints-must", kv("constraints-must")?)?,
                    cannot: num("constraints-cannot", kv("constraints-cannot")?)?,
                    hash: kv("constraints-hash")?,
                },
            }),
            other => return Err(Error::ModelFormat(format!("unknown kind {other:?}"))),
        };

        let mut section = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            let l = next(name)?;
            if l != name {
                return Err(Error::ModelFormat(format!("expected section {name}, got {l:?}")));
            }
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let row: Vec<f64> = next(name)?
                    .split_whitespace()
                    .map(|t| num(name, t.to_owned()))
                    .collect::<Result<_>>()?;
                if row.len() != cols {
                    return Err(Error::ModelFormat(format!(
                        "{name}: expected {cols} values per row, found {}",
                        row.len()
                    )));
                }
                values.extend(row);
            }
            Ok(values)
        };
        let weights = Array2::from_shape_vec((visible, hidden), section("weights", visible, hidden)?)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let visible_bias = Array1::from(section("visible-bias", 1, visible)?);
        let hidden_bias = Array1::from(section("hidden-bias", 1, hidden)?);
        let sigma = Array1::from(section("sigma", 1, visible)?);
        if next("end")? != "end" {
            return Err(Error::ModelFormat("missing end marker".into()));
        }
        let params = GrbmParams::new(weights, visible_bias, hidden_bias, sigma)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        Ok(ModelFile {
            params,
            train,
            constrained,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grbm::BatchSize;
    use proptest::prelude::*;

    fn params_strategy() -> impl Strategy<Value = GrbmParams> {
        (1usize..5, 1usize..5).prop_flat_map(|(p, q)| {
            (
                proptest::collection::vec(-1e3f64..1e3, p * q),
                proptest::collection::vec(-1e3f64..1e3, p),
                proptest::collection::vec(-1e3f64..1e3, q),
                proptest::collection::vec(1e-6f64..10.0, p),
            )
                .prop_map(move |(w, a, b, s)| {
                    GrbmParams::new(
                        Array2::from_shape_vec((p, q), w).unwrap(),
                        Array1::from(a),
                        Array1::from(b),
                        Array1::from(s),
                    )
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(params in params_strategy(), seed in any::<u64>(), constrained in any::<bool>()) {
            let mut train = TrainConfig::new(1e-8, 30, seed);
            train.batch_size = BatchSize::Mini(7);
            let file = if constrained {
                let mut cfg = PcgrbmConfig::new(train);
                cfg.sign_mode = SignMode::Descent;
                let c = ConstraintSet::new([(0, 1)], [(1, 2), (0, 2)]).unwrap();
                ModelFile::pcgrbm(params, &cfg, &c)
            } else {
                ModelFile::grbm(params, train)
            };
            let back = ModelFile::parse(&file.to_text()).unwrap();
            prop_assert_eq!(back, file);
        }
    }

    #[test]
    fn header_records_constraints() {
        let cfg = PcgrbmConfig::new(TrainConfig::new(1e-8, 2, 3));
        let c = ConstraintSet::new([(0, 1)], [(1, 2)]).unwrap();
        let text = ModelFile::pcgrbm(GrbmParams::zeros(2, 1), &cfg, &c).to_text();
        assert!(text.contains("lambda 7e-1\n"));
        assert!(text.contains("sign-mode paper-exact\n"));
        assert!(text.contains("constraints-must 1\n"));
        assert!(text.contains(&format!("constraints-hash {}\n", c.fingerprint().hash)));
    }

    #[test]
    fn rejects_malformed_files() {
        let good = ModelFile::grbm(GrbmParams::zeros(2, 2), TrainConfig::new(0.1, 1, 0)).to_text();
        assert!(ModelFile::parse("").is_err());
        assert!(ModelFile::parse(&good.replace("pcgrbm-model 1", "pcgrbm-model 9")).is_err());
        assert!(ModelFile::parse(&good.replace("hidden 2", "hidden 3")).is_err());
        assert!(ModelFile::parse(&good.replace("end\n", "")).is_err());
        let bad_sigma = good.replace("sigma\n1e0 1e0", "sigma\n1e0 -1e0");
        assert!(ModelFile::parse(&bad_sigma).is_err());
    }
}

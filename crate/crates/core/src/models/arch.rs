//! Network shapes and their parameter plans.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CLASS_COUNT;
use crate::indices::INDEX_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Direct,
    UNet,
    MaskNet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Direct, ModelKind::UNet, ModelKind::MaskNet];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Direct => "direct",
            ModelKind::UNet => "unet",
            ModelKind::MaskNet => "masknet",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown model {s:?} (expected direct, unet or masknet)")))
    }
}

/// A network's full shape. Its textual tag (the `Display` form) is what
/// weight manifests record, e.g. `direct:in=1x64:ch=16-32-64-64:fc=128:out=11`.
///
/// * `Direct`: one conv block per entry of `channels` (conv, ReLU,
///   batch norm, pool), then `fc1` of width `hidden` and a linear `fc2`.
/// * `MaskNet`: the same with conv, batch norm, ReLU order.
/// * `UNet`: `channels` lists the encoder levels followed by the
///   bottleneck width; `hidden` is unused (0).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub kind: ModelKind,
    pub in_channels: usize,
    pub input_size: usize,
    pub channels: Vec<usize>,
    pub hidden: usize,
    pub outputs: usize,
}

/// How a planned tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    FanIn(usize),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    pub trainable: bool,
}

impl Architecture {
    pub fn direct(input_size: usize) -> Self {
        Architecture {
            kind: ModelKind::Direct,
            in_channels: 1,
            input_size,
            channels: vec![16, 32, 64, 64],
            hidden: 128,
            outputs: INDEX_COUNT,
        }
    }

    pub fn unet(input_size: usize) -> Self {
        Architecture {
            kind: ModelKind::UNet,
            in_channels: 1,
            input_size,
            channels: vec![16, 32, 64, 128],
            hidden: 0,
            outputs: CLASS_COUNT,
        }
    }

    pub fn masknet(input_size: usize) -> Self {
        Architecture {
            kind: ModelKind::MaskNet,
            in_channels: CLASS_COUNT,
            input_size,
            channels: vec![16, 32, 64],
            hidden: 64,
            outputs: INDEX_COUNT,
        }
    }

    pub fn default_for(kind: ModelKind, input_size: usize) -> Self {
        match kind {
            ModelKind::Direct => Self::direct(input_size),
            ModelKind::UNet => Self::unet(input_size),
            ModelKind::MaskNet => Self::masknet(input_size),
        }
    }

    /// Number of 2× poolings the input passes through.
    pub fn pool_count(&self) -> usize {
        match self.kind {
            ModelKind::UNet => self.channels.len() - 1,
            _ => self.channels.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(format!("architecture {self}: {m}")));
        let min_levels = if self.kind == ModelKind::UNet { 2 } else { 1 };
        if self.channels.len() < min_levels || self.channels.contains(&0) {
            return fail("channel plan is too short or has a zero width".into());
        }
        if self.in_channels == 0 || self.outputs == 0 {
            return fail("input and output widths must be positive".into());
        }
        if self.kind != ModelKind::UNet && self.hidden == 0 {
            return fail("hidden width must be positive".into());
        }
        let stride = 1usize << self.pool_count();
        if self.input_size == 0 || self.input_size % stride != 0 {
            return fail(format!("input size {} must be a positive multiple of {stride}", self.input_size));
        }
        Ok(())
    }

    /// Every tensor of the network in storage order.
    pub fn plan(&self) -> Vec<PlannedParam> {
        let mut p = Vec::new();
        let conv = |p: &mut Vec<PlannedParam>, name: &str, cin: usize, cout: usize| {
            p.push(param(format!("{name}.weight"), vec![cout, cin, 3, 3], Init::FanIn(cin * 9)));
            p.push(param(format!("{name}.bias"), vec![cout], Init::Zeros));
            p.push(param(format!("{name}.bn.gamma"), vec![cout], Init::Ones));
            p.push(param(format!("{name}.bn.beta"), vec![cout], Init::Zeros));
            p.push(buffer(format!("{name}.bn.running_mean"), vec![cout], Init::Zeros));
            p.push(buffer(format!("{name}.bn.running_var"), vec![cout], Init::Ones));
        };
        match self.kind {
            ModelKind::Direct | ModelKind::MaskNet => {
                let mut cin = self.in_channels;
                for (i, &c) in self.channels.iter().enumerate() {
                    conv(&mut p, &format!("conv{}", i + 1), cin, c);
                    cin = c;
                }
                let side = self.input_size >> self.channels.len();
                let flat = cin * side * side;
                p.push(param("fc1.weight".into(), vec![flat, self.hidden], Init::FanIn(flat)));
                p.push(param("fc1.bias".into(), vec![self.hidden], Init::Zeros));
                // zero head: training starts from the bias, which the
                // trainer sets to the mean target
                p.push(param("fc2.weight".into(), vec![self.hidden, self.outputs], Init::Zeros));
                p.push(param("fc2.bias".into(), vec![self.outputs], Init::Zeros));
            }
            ModelKind::UNet => {
                let levels = self.channels.len() - 1;
                let mut cin = self.in_channels;
                for (i, &c) in self.channels[..levels].iter().enumerate() {
                    conv(&mut p, &format!("enc{}a", i + 1), cin, c);
                    conv(&mut p, &format!("enc{}b", i + 1), c, c);
                    cin = c;
                }
                let bottom = self.channels[levels];
                conv(&mut p, "bottleneck.a", cin, bottom);
                conv(&mut p, "bottleneck.b", bottom, bottom);
                let mut low = bottom;
                for i in (0..levels).rev() {
                    let c = self.channels[i];
                    conv(&mut p, &format!("dec{}a", i + 1), low + c, c);
                    conv(&mut p, &format!("dec{}b", i + 1), c, c);
                    low = c;
                }
                p.push(param("head.weight".into(), vec![self.outputs, low], Init::FanIn(low)));
                p.push(param("head.bias".into(), vec![self.outputs], Init::Zeros));
            }
        }
        p
    }

    /// Names of the activations [`crate::models::export_feature_maps`] can
    /// tap.
    pub fn layer_names(&self) -> Vec<String> {
        match self.kind {
            ModelKind::Direct | ModelKind::MaskNet => {
                (1..=self.channels.len()).map(|i| format!("conv{i}")).collect()
            }
            ModelKind::UNet => {
                let levels = self.channels.len() - 1;
                let mut v: Vec<String> = (1..=levels).map(|i| format!("enc{i}")).collect();
                v.push("bottleneck".into());
                v.extend((1..=levels).rev().map(|i| format!("dec{i}")));
                v
            }
        }
    }
}

fn param(name: String, shape: Vec<usize>, init: Init) -> PlannedParam {
    PlannedParam { name, shape, init, trainable: true }
}

fn buffer(name: String, shape: Vec<usize>, init: Init) -> PlannedParam {
    PlannedParam { name, shape, init, trainable: false }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ch: Vec<String> = self.channels.iter().map(usize::to_string).collect();
        write!(
            f,
            "{}:in={}x{}:ch={}:fc={}:out={}",
            self.kind,
            self.in_channels,
            self.input_size,
            ch.join("-"),
            self.hidden,
            self.outputs
        )
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(tag: &str) -> Result<Self> {
        let bad = |what: &str| Error::Validation(format!("malformed architecture tag {tag:?}: {what}"));
        let mut parts = tag.split(':');
        let kind: ModelKind = parts.next().ok_or_else(|| bad("empty"))?.parse()?;
        let mut field = |key: &str| -> Result<&str> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(key))
                .and_then(|p| p.strip_prefix('='))
                .ok_or_else(|| bad(key))
        };
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(s));
        let (cin, size) = field("in")?.split_once('x').ok_or_else(|| bad("in"))?;
        let (in_channels, input_size) = (num(cin)?, num(size)?);
        let channels = field("ch")?.split('-').map(num).collect::<Result<Vec<_>>>()?;
        let hidden = num(field("fc")?)?;
        let outputs = num(field("out")?)?;
        if parts.next().is_some() {
            return Err(bad("trailing fields"));
        }
        let arch = Architecture { kind, in_channels, input_size, channels, hidden, outputs };
        arch.validate()?;
        Ok(arch)
    }
}

impl Serialize for Architecture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Architecture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tag = String::deserialize(d)?;
        tag.parse().map_err(serde::de::Error::custom)
    }
}

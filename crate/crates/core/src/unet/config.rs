use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Objective;

/// Down-sampling factors of one encoder level. `fx` acts on the trace
/// (width) axis, `fy` on the time (height) axis; code "12" means fx=1, fy=2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KernelFactor {
    pub fx: usize,
    pub fy: usize,
}

impl KernelFactor {
    pub fn new(fx: usize, fy: usize) -> Self {
        KernelFactor { fx, fy }
    }

    /// `(height, width)` factors, the order the tensor ops take.
    pub fn hw(self) -> (usize, usize) {
        (self.fy, self.fx)
    }
}

impl fmt::Display for KernelFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.fx, self.fy)
    }
}

/// Per-level factors of the contracting path; the expanding path applies
/// them in reverse.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KernelSchedule(pub Vec<KernelFactor>);

/// The four kernel arrangements compared in the kernel-size ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelCase {
    A,
    B,
    C,
    D,
}

impl KernelCase {
    pub const ALL: [KernelCase; 4] = [KernelCase::A, KernelCase::B, KernelCase::C, KernelCase::D];

    /// Codes for the standard four-level network.
    pub fn codes(self) -> &'static str {
        match self {
            KernelCase::A => "11 22 22 22",
            KernelCase::B => "12 24 24 24",
            KernelCase::C => "22 22 22 22",
            KernelCase::D => "24 24 24 24",
        }
    }
}

impl KernelSchedule {
    /// The case's schedule adapted to `levels`: truncated for shallower
    /// networks, extended by repeating the last factor for deeper ones.
    pub fn for_case(case: KernelCase, levels: usize) -> Self {
        let base: KernelSchedule = case.codes().parse().expect("built-in codes parse");
        let last = *base.0.last().expect("non-empty");
        KernelSchedule(
            (0..levels)
                .map(|i| base.0.get(i).copied().unwrap_or(last))
                .collect(),
        )
    }

    pub fn levels(&self) -> usize {
        self.0.len()
    }

    pub fn height_product(&self) -> usize {
        self.0.iter().map(|k| k.fy).product()
    }

    pub fn width_product(&self) -> usize {
        self.0.iter().map(|k| k.fx).product()
    }

    /// Checks that an `h x w` (time x trace) input survives every level.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let (ph, pw) = (self.height_product(), self.width_product());
        if h % ph != 0 {
            return Err(Error::Divisibility {
                op: "unet",
                axis: "height (time)",
                size: h,
                factor: ph,
            });
        }
        if w % pw != 0 {
            return Err(Error::Divisibility {
                op: "unet",
                axis: "width (trace)",
                size: w,
                factor: pw,
            });
        }
        Ok(())
    }
}

impl FromStr for KernelSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let factors = s
            .split_whitespace()
            .map(|code| {
                let digits: Vec<usize> = code
                    .chars()
                    .map(|c| c.to_digit(10).map(|d| d as usize))
                    .collect::<Option<_>>()
                    .filter(|d: &Vec<usize>| d.len() == 2 && d.iter().all(|&v| v >= 1))
                    .ok_or_else(|| {
                        Error::Config(format!("bad kernel code {code:?}: expected two digits 1-9"))
                    })?;
                Ok(KernelFactor::new(digits[0], digits[1]))
            })
            .collect::<Result<Vec<_>>>()?;
        if factors.is_empty() {
            return Err(Error::Config("empty kernel schedule".into()));
        }
        Ok(KernelSchedule(factors))
    }
}

impl fmt::Display for KernelSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let codes: Vec<String> = self.0.iter().map(|k| k.to_string()).collect();
        f.write_str(&codes.join(" "))
    }
}

impl Serialize for KernelSchedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for KernelSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownMode {
    #[default]
    Maxpool,
    StridedConv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpMode {
    #[default]
    Bilinear,
    TransposedConv,
}

impl DownMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DownMode::Maxpool => "maxpool",
            DownMode::StridedConv => "strided_conv",
        }
    }
}

impl UpMode {
    pub fn as_str(self) -> &'static str {
        match self {
            UpMode::Bilinear => "bilinear",
            UpMode::TransposedConv => "transposed_conv",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UNetConfig {
    /// Total number of convolutional blocks: encoder + bottleneck + decoder.
    pub n_blocks: usize,
    /// Channels of the first level; doubled at every level below.
    pub base_channels: usize,
    pub kernel_schedule: KernelSchedule,
    pub down_mode: DownMode,
    pub up_mode: UpMode,
    pub objective: Objective,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self::with_blocks(9)
    }
}

impl UNetConfig {
    /// Case-A schedule, base 48, max-pool + bilinear, direct objective.
    pub fn with_blocks(n_blocks: usize) -> Self {
        let levels = n_blocks.saturating_sub(1) / 2;
        UNetConfig {
            n_blocks,
            base_channels: 48,
            kernel_schedule: KernelSchedule::for_case(KernelCase::A, levels.max(1)),
            down_mode: DownMode::Maxpool,
            up_mode: UpMode::Bilinear,
            objective: Objective::Direct,
        }
    }

    pub fn small() -> Self {
        Self::with_blocks(5)
    }

    pub fn standard() -> Self {
        Self::with_blocks(9)
    }

    pub fn big() -> Self {
        Self::with_blocks(13)
    }

    pub fn with_case(mut self, case: KernelCase) -> Self {
        self.kernel_schedule = KernelSchedule::for_case(case, self.levels());
        self
    }

    pub fn levels(&self) -> usize {
        self.n_blocks.saturating_sub(1) / 2
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks < 3 || self.n_blocks % 2 == 0 {
            return Err(Error::Config(format!(
                "n_blocks must be odd and at least 3, got {}",
                self.n_blocks
            )));
        }
        if self.base_channels == 0 {
            return Err(Error::Config("base_channels must be positive".into()));
        }
        if self.kernel_schedule.levels() != self.levels() {
            return Err(Error::Config(format!(
                "kernel schedule has {} levels, {} blocks need {}",
                self.kernel_schedule.levels(),
                self.n_blocks,
                self.levels()
            )));
        }
        Ok(())
    }

    /// Exact number of trainable scalars, computed from the architecture
    /// without instantiating it.
    pub fn param_count(&self) -> u64 {
        let conv = |cin: u64, cout: u64, kh: u64, kw: u64, bias: bool| {
            cin * cout * kh * kw + if bias { cout } else { 0 }
        };
        let block = |cin: u64, cout: u64| conv(cin, cout, 3, 3, true) + conv(cout, cout, 3, 3, true);
        let levels = self.levels();
        let ch = |l: usize| self.channels(l) as u64;
        let mut total = 0;
        let mut cin = 1;
        for (level, k) in self.kernel_schedule.0.iter().enumerate() {
            total += block(cin, ch(level));
            if self.down_mode == DownMode::StridedConv {
                total += conv(ch(level), ch(level), k.fy as u64, k.fx as u64, true);
            }
            cin = ch(level);
        }
        total += block(cin, ch(levels));
        for (level, k) in self.kernel_schedule.0.iter().enumerate().rev() {
            if self.up_mode == UpMode::TransposedConv {
                total += conv(ch(level + 1), ch(level + 1), k.fy as u64, k.fx as u64, false);
            }
            total += block(ch(level + 1) + ch(level), ch(level));
        }
        total + conv(ch(0), 1, 1, 1, true)
    }
}

//! Declarative network description shared by every builder.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::MAX_DIM;

/// Channel count per encoder level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Growth {
    /// `k, 2k, 4k, ...`
    Doubling,
    /// `k, 2k, 3k, ...`
    Linear,
}

/// How far the encoder reduces space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentMode {
    /// Down to `4^d` by stride-2 stages, then one `f=4, s=1` convolution to `1^d`.
    ToPoint,
    /// Stride-2 stages only; the latent keeps spatial extent `N / 2^scales`.
    FixedFactor,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub d: usize,
    /// Base channel count.
    pub k: usize,
    pub in_channels: usize,
    pub growth: Growth,
    /// Registry name of the block style (`ssc` or `res2`).
    pub block: String,
    /// Number of stride-2 downsampling stages.
    pub scales: usize,
    pub mode: LatentMode,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            d: 2,
            k: 8,
            in_channels: 1,
            growth: Growth::Doubling,
            block: "ssc".into(),
            scales: 2,
            mode: LatentMode::ToPoint,
        }
    }
}

/// Geometry of one encoder level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Level {
    pub channels: usize,
    /// `(f, s)` of the strided convolution leaving this level, if any.
    pub down: Option<(usize, usize)>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SpecInvalid(m));
        if !(2..=MAX_DIM).contains(&self.d) {
            return bad(format!("d = {} outside 2..={MAX_DIM}", self.d));
        }
        if self.k == 0 || self.in_channels == 0 {
            return bad("k and in_channels must be positive".into());
        }
        if self.scales == 0 {
            return bad("scales must be at least 1".into());
        }
        if self.scales > 16 {
            return bad(format!("scales = {} is unreasonably deep", self.scales));
        }
        Ok(())
    }

    /// Downsampling factor of a fixed-factor encoder, `2^scales`.
    pub fn factor(&self) -> usize {
        1 << self.scales
    }

    /// Required input extent for a to-point encoder, `4 * 2^scales`.
    pub fn point_input_size(&self) -> usize {
        4 << self.scales
    }

    /// Every level from the input resolution to the latent.
    pub fn levels(&self) -> Vec<Level> {
        let ssc_levels = match self.mode {
            LatentMode::ToPoint => self.scales + 1,
            LatentMode::FixedFactor => self.scales,
        };
        let ch = |i: usize| match self.growth {
            Growth::Doubling => self.k << i,
            Growth::Linear => self.k * (i + 1),
        };
        let mut levels: Vec<Level> = (0..ssc_levels)
            .map(|i| Level {
                channels: ch(i),
                down: Some((2, 2)),
            })
            .collect();
        let latent = match (self.mode, self.growth) {
            (LatentMode::ToPoint, Growth::Doubling) => {
                levels.last_mut().unwrap().down = Some((4, 1));
                4 * ch(ssc_levels - 1)
            }
            (LatentMode::ToPoint, Growth::Linear) => {
                levels.last_mut().unwrap().down = Some((4, 1));
                ch(ssc_levels)
            }
            (LatentMode::FixedFactor, _) => ch(ssc_levels),
        };
        levels.push(Level {
            channels: latent,
            down: None,
        });
        levels
    }

    pub fn channel_sequence(&self) -> Vec<usize> {
        self.levels().iter().map(|l| l.channels).collect()
    }

    pub fn latent_channels(&self) -> usize {
        *self.channel_sequence().last().unwrap()
    }

    /// Checks an input extent against the encoder's geometry.
    pub fn check_input(&self, spatial_size: &[usize]) -> Result<()> {
        if spatial_size.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "network is {}-dimensional, input has {} dimensions",
                self.d,
                spatial_size.len()
            )));
        }
        for &n in spatial_size {
            let ok = match self.mode {
                LatentMode::ToPoint => n == self.point_input_size(),
                LatentMode::FixedFactor => n > 0 && n % self.factor() == 0,
            };
            if !ok {
                return Err(Error::BadGeometry(format!(
                    "input extent {n} does not fit {self}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("d".into(), self.d.to_string());
        m.insert("k".into(), self.k.to_string());
        m.insert("in_channels".into(), self.in_channels.to_string());
        m.insert(
            "growth".into(),
            match self.growth {
                Growth::Doubling => "doubling",
                Growth::Linear => "linear",
            }
            .into(),
        );
        m.insert("block".into(), self.block.clone());
        m.insert("scales".into(), self.scales.to_string());
        m.insert(
            "mode".into(),
            match self.mode {
                LatentMode::ToPoint => "to_point",
                LatentMode::FixedFactor => "fixed_factor",
            }
            .into(),
        );
        m
    }

    /// Reads the keys written by [`NetworkSpec::to_map`]; absent keys keep
    /// their defaults.
    pub fn from_map(m: &BTreeMap<String, String>) -> Result<Self> {
        let mut s = NetworkSpec::default();
        let num = |key: &str, v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::SpecInvalid(format!("{key} = {v} is not a non-negative integer")))
        };
        for (key, v) in m {
            match key.as_str() {
                "d" => s.d = num(key, v)?,
                "k" => s.k = num(key, v)?,
                "in_channels" => s.in_channels = num(key, v)?,
                "scales" => s.scales = num(key, v)?,
                "block" => s.block = v.clone(),
                "growth" => {
                    s.growth = match v.as_str() {
                        "doubling" => Growth::Doubling,
                        "linear" => Growth::Linear,
                        _ => return Err(Error::SpecInvalid(format!("growth = {v}"))),
                    }
                }
                "mode" => {
                    s.mode = match v.as_str() {
                        "to_point" => LatentMode::ToPoint,
                        "fixed_factor" => LatentMode::FixedFactor,
                        _ => return Err(Error::SpecInvalid(format!("mode = {v}"))),
                    }
                }
                _ => {}
            }
        }
        s.validate()?;
        Ok(s)
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            LatentMode::ToPoint => write!(f, "to-point {}^{} encoder", self.point_input_size(), self.d),
            LatentMode::FixedFactor => write!(f, "{}x fixed-factor encoder", self.factor()),
        }?;
        write!(f, " (k={}, block={})", self.k, self.block)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_one_channels() {
        let s = NetworkSpec { k: 16, ..Default::default() };
        assert_eq!(s.channel_sequence(), vec![16, 32, 64, 256]);
        assert_eq!(s.point_input_size(), 16);
        let downs: Vec<_> = s.levels().iter().map(|l| l.down).collect();
        assert_eq!(downs, vec![Some((2, 2)), Some((2, 2)), Some((4, 1)), None]);
    }

    #[test]
    fn linear_growth() {
        let s = NetworkSpec {
            k: 32,
            growth: Growth::Linear,
            scales: 4,
            mode: LatentMode::FixedFactor,
            ..Default::default()
        };
        assert_eq!(s.channel_sequence(), vec![32, 64, 96, 128, 160]);
        assert_eq!(s.factor(), 16);
    }

    #[test]
    fn input_checks() {
        let s = NetworkSpec::default();
        assert!(s.check_input(&[16, 16]).is_ok());
        assert!(s.check_input(&[32, 16]).is_err());
        assert!(s.check_input(&[16, 16, 16]).is_err());
        let f = NetworkSpec { mode: LatentMode::FixedFactor, scales: 4, ..Default::default() };
        assert!(f.check_input(&[64, 48]).is_ok());
        assert!(f.check_input(&[40, 48]).is_err());
    }

    #[test]
    fn map_round_trip() {
        let s = NetworkSpec {
            d: 3,
            k: 5,
            in_channels: 3,
            growth: Growth::Linear,
            block: "res2".into(),
            scales: 3,
            mode: LatentMode::FixedFactor,
        };
        assert_eq!(NetworkSpec::from_map(&s.to_map()).unwrap(), s);
        let mut bad = s.to_map();
        bad.insert("scales".into(), "0".into());
        assert!(NetworkSpec::from_map(&bad).is_err());
    }
}

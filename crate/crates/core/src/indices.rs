use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub const INDEX_COUNT: usize = 11;

pub const INDEX_NAMES: [&str; INDEX_COUNT] = [
    "A1", "A2", "D1", "D2", "D3", "RWT1", "RWT2", "RWT3", "RWT4", "RWT5", "RWT6",
];

/// The three kinds of index, each reported with its own average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexGroup {
    Area,
    Dimension,
    Rwt,
}

impl IndexGroup {
    pub const ALL: [IndexGroup; 3] = [IndexGroup::Area, IndexGroup::Dimension, IndexGroup::Rwt];

    pub fn range(self) -> Range<usize> {
        match self {
            IndexGroup::Area => 0..2,
            IndexGroup::Dimension => 2..5,
            IndexGroup::Rwt => 5..11,
        }
    }

    pub fn of(index: usize) -> IndexGroup {
        match index {
            0..=1 => IndexGroup::Area,
            2..=4 => IndexGroup::Dimension,
            _ => IndexGroup::Rwt,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IndexGroup::Area => "area",
            IndexGroup::Dimension => "dimension",
            IndexGroup::Rwt => "rwt",
        }
    }

    /// Areas scale with the square of the pixel size, everything else linearly.
    pub fn length_power(self) -> i32 {
        match self {
            IndexGroup::Area => 2,
            _ => 1,
        }
    }
}

/// One frame's quantification targets, ordered
/// `[A1, A2, D1, D2, D3, RWT1..RWT6]`.
///
/// Areas are in px², lengths in px. D1–D3 are cavity diameters along the
/// AS–IL, IS–AL and I–AL axes; RWT1–RWT6 are wall thicknesses of six 60°
/// sectors counter-clockwise from the anterior-septal axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IndexVector(pub [f64; INDEX_COUNT]);

impl IndexVector {
    pub fn a1(&self) -> f64 {
        self.0[0]
    }

    pub fn a2(&self) -> f64 {
        self.0[1]
    }

    pub fn dims(&self) -> &[f64] {
        &self.0[2..5]
    }

    pub fn rwt(&self) -> &[f64] {
        &self.0[5..11]
    }

    pub fn values(&self) -> &[f64; INDEX_COUNT] {
        &self.0
    }

    pub fn map(&self, mut f: impl FnMut(usize, f64) -> f64) -> IndexVector {
        let mut out = self.0;
        for (i, v) in out.iter_mut().enumerate() {
            *v = f(i, *v);
        }
        IndexVector(out)
    }

    pub fn clamp_non_negative(&self) -> IndexVector {
        self.map(|_, v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl fmt::Display for IndexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in INDEX_NAMES.iter().zip(self.0).enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{name}={v:.2}")?;
        }
        Ok(())
    }
}

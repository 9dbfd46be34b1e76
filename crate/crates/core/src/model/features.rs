use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::Error;

/// Which per-point channels the classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FeatureSet {
    #[default]
    #[serde(rename = "xyz-hu-p")]
    XyzHuP,
    #[serde(rename = "xyz-p")]
    XyzP,
    #[serde(rename = "xyz-hu")]
    XyzHu,
    #[serde(rename = "xyz")]
    Xyz,
    #[serde(rename = "hu-p")]
    HuP,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::XyzHuP,
        FeatureSet::XyzP,
        FeatureSet::XyzHu,
        FeatureSet::Xyz,
        FeatureSet::HuP,
    ];

    pub fn input_dim(self) -> usize {
        match self {
            FeatureSet::XyzHuP => 5,
            FeatureSet::XyzP | FeatureSet::XyzHu => 4,
            FeatureSet::Xyz => 3,
            FeatureSet::HuP => 2,
        }
    }

    pub fn has_xyz(self) -> bool {
        !matches!(self, FeatureSet::HuP)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::XyzHuP => "xyz-hu-p",
            FeatureSet::XyzP => "xyz-p",
            FeatureSet::XyzHu => "xyz-hu",
            FeatureSet::Xyz => "xyz",
            FeatureSet::HuP => "hu-p",
        }
    }

    pub(crate) fn code(self) -> u8 {
        Self::ALL.iter().position(|&f| f == self).unwrap() as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown feature set {s:?}")))
    }
}

/// `m x input_dim` matrix with columns in `x, y, z, hu, p` order, restricted
/// to the chosen channels.
pub fn select_features(pc: &PointCloud, fs: FeatureSet) -> Array2<f64> {
    let d = fs.input_dim();
    let mut out = Array2::zeros((pc.len(), d));
    for (mut row, p) in out.rows_mut().into_iter().zip(&pc.points) {
        let all = [p.x, p.y, p.z, p.hu, p.p];
        let picked: &[usize] = match fs {
            FeatureSet::XyzHuP => &[0, 1, 2, 3, 4],
            FeatureSet::XyzP => &[0, 1, 2, 4],
            FeatureSet::XyzHu => &[0, 1, 2, 3],
            FeatureSet::Xyz => &[0, 1, 2],
            FeatureSet::HuP => &[3, 4],
        };
        for (c, &src) in picked.iter().enumerate() {
            row[c] = all[src] as f64;
        }
    }
    out
}

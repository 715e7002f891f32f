//! Lesion phenotyping: stroke pattern, vascular territory and multi-class
//! classification scores.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Grid;
use crate::nifti;
use crate::voxel::LesionLabeling;

/// Largest lesion above this share of total volume: single vessel infarct.
pub const SVI_LARGEST_PERCENT: usize = 95;
/// Largest lesion below this share (with >= 3 lesions): scattered infarcts.
pub const SCATTERED_LARGEST_PERCENT: usize = 60;
/// Total volume below this (with >= 3 lesions): scattered infarcts.
pub const SCATTERED_TOTAL_ML: f64 = 5.0;
pub const SCATTERED_MIN_LESIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PatternLabel {
    NoIschemia,
    /// Single vessel infarct.
    Svi,
    ScatteredInfarcts,
    SviWithScattered,
}

impl PatternLabel {
    pub const ALL: [PatternLabel; 4] = [
        PatternLabel::NoIschemia,
        PatternLabel::Svi,
        PatternLabel::ScatteredInfarcts,
        PatternLabel::SviWithScattered,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternLabel::NoIschemia => "NoIschemia",
            PatternLabel::Svi => "SVI",
            PatternLabel::ScatteredInfarcts => "ScatteredInfarcts",
            PatternLabel::SviWithScattered => "SVIWithScattered",
        }
    }
}

impl fmt::Display for PatternLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokePattern {
    pub label: PatternLabel,
    /// Largest lesion volume over total volume; 0 for an empty scan.
    pub largest_fraction: f64,
    pub lesion_count: usize,
    pub total_volume_ml: f64,
}

/// Stroke pattern of a scan. The first matching rule wins:
///
/// 1. no lesion volume: no ischemia;
/// 2. largest lesion above 95% of the total: single vessel infarct;
/// 3. at least three lesions and either the largest below 60% of the total
///    or a total below 5 ml: scattered infarcts;
/// 4. otherwise: single vessel infarct with scattered infarcts.
pub fn classify_pattern(labeling: &LesionLabeling) -> StrokePattern {
    classify_lesion_voxels(labeling.lesion_voxels(), labeling.grid())
}

/// [`classify_pattern`] on per-lesion voxel counts. Ratios are compared in
/// integer voxel arithmetic, so the percentage boundaries are exact.
pub fn classify_lesion_voxels(lesion_voxels: &[usize], grid: &Grid) -> StrokePattern {
    let total: usize = lesion_voxels.iter().sum();
    let largest = lesion_voxels.iter().copied().max().unwrap_or(0);
    let count = lesion_voxels.iter().filter(|&&n| n > 0).count();
    let total_volume_ml = grid.volume_ml(total);

    let label = if total == 0 {
        PatternLabel::NoIschemia
    } else if 100 * largest > SVI_LARGEST_PERCENT * total {
        PatternLabel::Svi
    } else if count >= SCATTERED_MIN_LESIONS
        && (100 * largest < SCATTERED_LARGEST_PERCENT * total
            || total_volume_ml < SCATTERED_TOTAL_ML)
    {
        PatternLabel::ScatteredInfarcts
    } else {
        PatternLabel::SviWithScattered
    };
    StrokePattern {
        label,
        largest_fraction: if total == 0 {
            0.0
        } else {
            largest as f64 / total as f64
        },
        lesion_count: count,
        total_volume_ml,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Territory {
    #[serde(rename = "MCA")]
    Mca,
    #[serde(rename = "ACA")]
    Aca,
    #[serde(rename = "PCA")]
    Pca,
    Cerebellum,
    PonsMedulla,
}

impl Territory {
    pub const ALL: [Territory; 5] = [
        Territory::Mca,
        Territory::Aca,
        Territory::Pca,
        Territory::Cerebellum,
        Territory::PonsMedulla,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Territory::Mca => "MCA",
            Territory::Aca => "ACA",
            Territory::Pca => "PCA",
            Territory::Cerebellum => "Cerebellum",
            Territory::PonsMedulla => "PonsMedulla",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Territory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Territory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "mca" | "middlecerebralartery" => Territory::Mca,
            "aca" | "anteriorcerebralartery" => Territory::Aca,
            "pca" | "posteriorcerebralartery" => Territory::Pca,
            "cerebellum" | "cerebellar" => Territory::Cerebellum,
            "ponsmedulla" | "pons" | "medulla" => Territory::PonsMedulla,
            _ => return Err(Error::UnknownTerritory(s.to_string())),
        })
    }
}

/// Vascular territory label map registered to the mask grid, with a legend
/// mapping integer labels to territories. Label 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct TerritoryAtlas {
    grid: Grid,
    /// Per voxel: territory index + 1, or 0 for background.
    voxels: Vec<u8>,
}

impl TerritoryAtlas {
    pub fn new(grid: Grid, labels: &[i64], legend: &BTreeMap<i64, Territory>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "atlas has {} voxels, grid needs {}",
                labels.len(),
                grid.len()
            )));
        }
        let voxels = labels
            .iter()
            .map(|&l| {
                if l == 0 {
                    Ok(0)
                } else {
                    legend
                        .get(&l)
                        .map(|t| t.index() as u8 + 1)
                        .ok_or(Error::UnknownAtlasLabel(l))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(TerritoryAtlas { grid, voxels })
    }

    /// Load a NIfTI label map and its JSON legend (`{"1": "MCA", ...}`).
    pub fn load(atlas: impl AsRef<Path>, legend: impl AsRef<Path>) -> Result<Self> {
        let legend_path = legend.as_ref();
        let text = std::fs::read_to_string(legend_path).map_err(|e| Error::io(legend_path, e))?;
        let legend = parse_legend(&text)?;
        let volume = nifti::read_volume(atlas)?;
        let grid = volume.grid()?;
        let labels: Vec<i64> = volume
            .scaled_values()
            .into_iter()
            .map(|v| v.round() as i64)
            .collect();
        Self::new(grid, &labels, &legend)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn territory_at(&self, index: usize) -> Option<Territory> {
        match self.voxels[index] {
            0 => None,
            k => Some(Territory::ALL[k as usize - 1]),
        }
    }
}

/// Parse a legend JSON object mapping integer labels to territory names.
pub fn parse_legend(text: &str) -> Result<BTreeMap<i64, Territory>> {
    let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
    raw.into_iter()
        .map(|(k, v)| {
            let label = k
                .trim()
                .parse::<i64>()
                .map_err(|_| Error::InvalidArgument(format!("legend key `{k}` is not an integer")))?;
            Ok((label, v.parse()?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerritoryAssignment {
    pub territory: Territory,
    pub per_territory_load_ml: BTreeMap<Territory, f64>,
    /// Several territories share the maximal load; the first in
    /// [`Territory::ALL`] order was chosen.
    pub tie_flag: bool,
}

/// Assign the territory carrying the largest lesion load. Loads are counted
/// voxel-wise, so a lesion spanning two territories contributes to both.
pub fn territory_assignment(
    labeling: &LesionLabeling,
    atlas: &TerritoryAtlas,
) -> Result<TerritoryAssignment> {
    labeling.grid().ensure_matches(atlas.grid())?;
    let mut counts = [0usize; 5];
    for (i, &label) in labeling.label_map().iter().enumerate() {
        if label != 0 {
            if let Some(t) = atlas.territory_at(i) {
                counts[t.index()] += 1;
            }
        }
    }
    let max = *counts.iter().max().unwrap();
    if max == 0 {
        return Err(Error::NoLesionLoad);
    }
    let winners: Vec<usize> = (0..5).filter(|&k| counts[k] == max).collect();
    let grid = labeling.grid();
    Ok(TerritoryAssignment {
        territory: Territory::ALL[winners[0]],
        per_territory_load_ml: Territory::ALL
            .iter()
            .map(|&t| (t, grid.volume_ml(counts[t.index()])))
            .collect(),
        tie_flag: winners.len() > 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    /// Ground-truth instances of the class.
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `None` when the class never occurs in truth or predictions.
    pub f1: Option<f64>,
    /// `None` when the class has no ground-truth instances.
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<String>,
    pub per_class: Vec<ClassScores>,
    /// Mean recall over classes with ground-truth instances.
    pub balanced_accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Classes without ground-truth instances, excluded from balanced accuracy.
    pub absent_classes: Vec<String>,
}

impl ClassificationReport {
    pub fn f1_of(&self, class: &str) -> Option<f64> {
        self.per_class.iter().find(|c| c.class == class).and_then(|c| c.f1)
    }
}

/// Per-class F1, recall and balanced accuracy.
pub fn classification_report<T: AsRef<str>>(
    truth: &[T],
    predicted: &[T],
    classes: &[T],
) -> Result<ClassificationReport> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let names: Vec<String> = classes.iter().map(|c| c.as_ref().to_string()).collect();
    let index_of = |label: &str| {
        names
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownClass(label.to_string()))
    };
    let k = names.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (t, p) in truth.iter().zip(predicted) {
        confusion[index_of(t.as_ref())?][index_of(p.as_ref())?] += 1;
    }

    let mut per_class = Vec::with_capacity(k);
    let mut absent = Vec::new();
    let mut recalls = Vec::new();
    for c in 0..k {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted_c: usize = (0..k).map(|r| confusion[r][c]).sum();
        let fn_ = support - tp;
        let fp = predicted_c - tp;
        let denom = 2 * tp + fp + fn_;
        let recall = (support > 0).then(|| tp as f64 / support as f64);
        match recall {
            Some(r) => recalls.push(r),
            None => absent.push(names[c].clone()),
        }
        per_class.push(ClassScores {
            class: names[c].clone(),
            support,
            tp,
            fp,
            fn_,
            f1: (denom > 0).then(|| 2.0 * tp as f64 / denom as f64),
            recall,
            precision: (predicted_c > 0).then(|| tp as f64 / predicted_c as f64),
        });
    }
    Ok(ClassificationReport {
        classes: names,
        per_class,
        balanced_accuracy: recalls.iter().sum::<f64>() / recalls.len() as f64,
        confusion,
        absent_classes: absent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::VoxelMask;
    use crate::voxel::{connected_components, Connectivity};

    fn grid() -> Grid {
        Grid::unit([10, 10, 10])
    }

    #[test]
    fn pattern_rules() {
        let g = Grid::unit([100, 100, 10]);
        let p = |v: &[usize]| classify_lesion_voxels(v, &g).label;
        assert_eq!(p(&[]), PatternLabel::NoIschemia);
        assert_eq!(p(&[9600, 400]), PatternLabel::Svi);
        assert_eq!(p(&[1000, 1000, 1000, 1000]), PatternLabel::ScatteredInfarcts);
        assert_eq!(p(&[21000, 9000]), PatternLabel::SviWithScattered);
        // a dominant lesion wins over the scattered clause
        assert_eq!(p(&[960, 20, 20]), PatternLabel::Svi);
    }

    #[test]
    fn pattern_on_labeling() {
        let m = VoxelMask::from_fn(grid(), |x, _, _| x == 0 || x == 2 || x == 4);
        let l = connected_components(&m, Connectivity::TwentySix);
        let p = classify_pattern(&l);
        assert_eq!(p.lesion_count, 3);
        assert_eq!(p.label, PatternLabel::ScatteredInfarcts);
        assert!((p.largest_fraction - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn territory_argmax_and_ties() {
        let g = grid();
        // x < 5: MCA (1), x >= 5: PCA (3)
        let labels: Vec<i64> = (0..g.len()).map(|i| if g.coords(i)[0] < 5 { 1 } else { 3 }).collect();
        let legend: BTreeMap<i64, Territory> = [(1, Territory::Mca), (3, Territory::Pca)].into();
        let atlas = TerritoryAtlas::new(g, &labels, &legend).unwrap();

        let m = VoxelMask::from_fn(g, |x, y, z| z == 0 && y == 0 && x <= 6);
        let a = territory_assignment(&connected_components(&m, Connectivity::TwentySix), &atlas).unwrap();
        assert_eq!(a.territory, Territory::Mca);
        assert!(!a.tie_flag);
        assert!((a.per_territory_load_ml[&Territory::Pca] - 0.002).abs() < 1e-15);

        let m = VoxelMask::from_fn(g, |x, y, z| z == 0 && y == 0 && (3..7).contains(&x));
        let a = territory_assignment(&connected_components(&m, Connectivity::TwentySix), &atlas).unwrap();
        assert_eq!(a.territory, Territory::Mca);
        assert!(a.tie_flag);

        let empty = connected_components(&VoxelMask::zeros(g), Connectivity::TwentySix);
        assert!(matches!(territory_assignment(&empty, &atlas), Err(Error::NoLesionLoad)));
    }

    #[test]
    fn unknown_atlas_label() {
        let g = Grid::unit([2, 1, 1]);
        let legend: BTreeMap<i64, Territory> = [(1, Territory::Mca)].into();
        assert!(matches!(
            TerritoryAtlas::new(g, &[0, 7], &legend),
            Err(Error::UnknownAtlasLabel(7))
        ));
    }

    #[test]
    fn legend_parsing() {
        let l = parse_legend(r#"{"1": "MCA", "2": "aca", "5": "Pons/Medulla"}"#).unwrap();
        assert_eq!(l[&5], Territory::PonsMedulla);
        assert_eq!(l[&2], Territory::Aca);
        assert!(parse_legend(r#"{"x": "MCA"}"#).is_err());
        assert!(parse_legend(r#"{"1": "thalamus"}"#).is_err());
    }

    #[test]
    fn report_two_classes() {
        let truth = ["a", "a", "b", "b"];
        let pred = ["a", "a", "b", "a"];
        let r = classification_report(&truth, &pred, &["a", "b"]).unwrap();
        assert_eq!(r.balanced_accuracy, 0.75);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![1, 1]]);
        assert_eq!(r.f1_of("a"), Some(0.8));
        assert_eq!(r.f1_of("b"), Some(2.0 / 3.0));
    }

    #[test]
    fn report_absent_class_and_errors() {
        let r = classification_report(&["a", "b"], &["a", "b"], &["a", "b", "c"]).unwrap();
        assert_eq!(r.balanced_accuracy, 1.0);
        assert_eq!(r.absent_classes, vec!["c".to_string()]);
        assert_eq!(r.f1_of("c"), None);
        assert!(matches!(
            classification_report(&["a"], &["a", "b"], &["a", "b"]),
            Err(Error::LengthMismatch(1, 2))
        ));
        assert!(matches!(
            classification_report(&["a"], &["z"], &["a"]),
            Err(Error::UnknownClass(_))
        ));
    }
}

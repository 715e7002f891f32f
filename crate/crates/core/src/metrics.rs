//! Per-case segmentation metrics: Dice, absolute volume difference,
//! lesion-wise F1 and absolute lesion count difference.
//!
//! Conventions for empty masks: when both ground truth and prediction are
//! empty, Dice and F1 are 1.0 (absence of ischemia was predicted correctly).
//! An empty ground truth with a non-empty prediction, or the reverse, scores
//! 0.0 on both.
//!
//! Lesions are matched by any-voxel overlap. A ground-truth lesion is a true
//! positive if at least one of its voxels is predicted, otherwise a false
//! negative. A predicted lesion with no voxel inside the ground truth is a
//! false positive. One predicted component covering two ground-truth lesions
//! therefore yields two true positives and no false positive.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mask::VoxelMask;
use crate::voxel::{connected_components, mask_volume_ml, Connectivity, LesionLabeling};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub dsc: f64,
    pub avd_ml: f64,
    pub lesion_f1: f64,
    pub ald: u64,
    pub gt_volume_ml: f64,
    pub pred_volume_ml: f64,
    pub gt_lesion_count: u64,
    pub pred_lesion_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionF1 {
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub fn dice(gt: &VoxelMask, pred: &VoxelMask) -> Result<f64> {
    gt.grid().ensure_matches(pred.grid())?;
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&g, &p) in gt.data().iter().zip(pred.data()) {
        a += g as usize;
        b += p as usize;
        both += (g & p) as usize;
    }
    Ok(if a + b == 0 {
        1.0
    } else {
        2.0 * both as f64 / (a + b) as f64
    })
}

/// Absolute volume difference in ml.
pub fn avd(gt: &VoxelMask, pred: &VoxelMask) -> Result<f64> {
    gt.grid().ensure_matches(pred.grid())?;
    Ok((mask_volume_ml(pred) - mask_volume_ml(gt)).abs())
}

pub fn lesion_f1(gt: &LesionLabeling, pred: &LesionLabeling) -> Result<LesionF1> {
    gt.grid().ensure_matches(pred.grid())?;
    let mut gt_hit = vec![false; gt.lesion_count()];
    let mut pred_hit = vec![false; pred.lesion_count()];
    for (&g, &p) in gt.label_map().iter().zip(pred.label_map()) {
        if g != 0 && p != 0 {
            gt_hit[g as usize - 1] = true;
            pred_hit[p as usize - 1] = true;
        }
    }
    let tp = gt_hit.iter().filter(|&&h| h).count();
    let fn_ = gt_hit.len() - tp;
    let fp = pred_hit.iter().filter(|&&h| !h).count();
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    Ok(LesionF1 { f1, tp, fp, fn_ })
}

/// Absolute lesion count difference.
pub fn ald(gt: &LesionLabeling, pred: &LesionLabeling) -> u64 {
    gt.lesion_count().abs_diff(pred.lesion_count()) as u64
}

/// All four metrics for one (ground truth, prediction) pair.
pub fn evaluate_case(gt: &VoxelMask, pred: &VoxelMask, conn: Connectivity) -> Result<CaseMetrics> {
    gt.grid().ensure_matches(pred.grid())?;
    let gt_labels = connected_components(gt, conn);
    let pred_labels = connected_components(pred, conn);
    evaluate_labeled(gt, pred, &gt_labels, &pred_labels)
}

/// As [`evaluate_case`], reusing labelings the caller already computed.
pub fn evaluate_labeled(
    gt: &VoxelMask,
    pred: &VoxelMask,
    gt_labels: &LesionLabeling,
    pred_labels: &LesionLabeling,
) -> Result<CaseMetrics> {
    let dsc = dice(gt, pred)?;
    let f1 = lesion_f1(gt_labels, pred_labels)?;
    let gt_volume_ml = mask_volume_ml(gt);
    let pred_volume_ml = mask_volume_ml(pred);
    Ok(CaseMetrics {
        dsc,
        avd_ml: (pred_volume_ml - gt_volume_ml).abs(),
        lesion_f1: f1.f1,
        ald: ald(gt_labels, pred_labels),
        gt_volume_ml,
        pred_volume_ml,
        gt_lesion_count: gt_labels.lesion_count() as u64,
        pred_lesion_count: pred_labels.lesion_count() as u64,
    })
}

//! Cascade stages as model files.
//!
//! A stage-one file stores SPP bin ids directly. A stage-two file stores
//! BEV and SPP bins in one id space: BEV bin `i` is `i`, SPP bin `j` is
//! `BEV_ID_SPACE + j`.

use std::path::Path;

use super::binary::{read_model, write_model};
use crate::cascade::{StageOneModel, StageTwoModel};
use crate::error::{Error, Result};
use crate::sparse_svm::BinSelection;

/// Number of BEV bins in the standard bank; first SPP id in a stage-two file.
pub const BEV_ID_SPACE: usize = 1120;

pub fn stage_two_ids(bev: &BinSelection, spp: &BinSelection) -> BinSelection {
    let ids = bev
        .kept()
        .iter()
        .copied()
        .chain(spp.kept().iter().map(|&j| BEV_ID_SPACE + j))
        .collect();
    BinSelection::new(ids, None)
}

pub fn split_stage_two_ids(ids: &BinSelection) -> (BinSelection, BinSelection) {
    let (bev, spp): (Vec<usize>, Vec<usize>) = ids.kept().iter().partition(|&&i| i < BEV_ID_SPACE);
    (
        BinSelection::new(bev, None),
        BinSelection::new(spp.into_iter().map(|i| i - BEV_ID_SPACE).collect(), None),
    )
}

pub fn write_stage_one(path: &Path, m: &StageOneModel) -> Result<()> {
    write_model(path, &m.model, &m.spp_selection)
}

/// Reads a stage-one file; pool and output caps take their defaults.
pub fn read_stage_one(path: &Path) -> Result<StageOneModel> {
    let (model, sel) = read_model(path)?;
    check_dim(path, model.dim(), sel.len(), 0, || StageOneModel::new(model.clone(), sel.clone()))
}

pub fn write_stage_two(path: &Path, m: &StageTwoModel) -> Result<()> {
    write_model(path, &m.model, &stage_two_ids(&m.bev_selection, &m.spp_selection))
}

pub fn read_stage_two(path: &Path) -> Result<StageTwoModel> {
    let (model, ids) = read_model(path)?;
    let (bev_selection, spp_selection) = split_stage_two_ids(&ids);
    let bev = bev_selection.len();
    check_dim(path, model.dim(), spp_selection.len(), bev, || {
        Ok(StageTwoModel {
            model: model.clone(),
            bev_selection: bev_selection.clone(),
            spp_selection: spp_selection.clone(),
        })
    })
}

/// The weight vector must be `4·bev + C·spp + 1` long for some channel
/// count `C`.
fn check_dim<T>(path: &Path, dim: usize, spp: usize, bev: usize, build: impl FnOnce() -> Result<T>) -> Result<T> {
    let rest = dim.checked_sub(4 * bev + 1);
    let ok = match rest {
        Some(0) => spp == 0,
        Some(r) => spp > 0 && r % spp == 0,
        None => false,
    };
    if !ok {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("{dim} weights do not fit {bev} BEV and {spp} SPP bins plus the edge score"),
        });
    }
    build()
}

//! Fitting a table column by column with the core estimator.

use splineband::orthogonal::{
    assemble_design, fit_design, spline_spec_for_df, AdditiveDesign, Covariate,
};
use splineband::{DesignSpec, FitOptions, OrthogonalError, OrthogonalModel, TermSpec};

use crate::data::{DataError, Split};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Model(#[from] OrthogonalError),
}

/// Knot layout for `split`: a spline for the target and for every other
/// column except those named in `linear`, which enter as raw centered values.
pub fn design_spec(
    split: &Split,
    options: &FitOptions,
    linear: &[String],
) -> Result<DesignSpec, PipelineError> {
    if let Some(name) = linear.iter().find(|l| !split.other_names.contains(l)) {
        return Err(DataError::MissingColumn(name.clone()).into());
    }
    let target = spline_spec_for_df(&split.x_target, options.df_own, options.degree).map_err(|source| {
        OrthogonalError::Spline {
            covariate: Covariate::Target,
            source,
        }
    })?;
    let mut others = Vec::with_capacity(split.other_names.len());
    for (j, name) in split.other_names.iter().enumerate() {
        if linear.contains(name) {
            others.push(TermSpec::Linear);
            continue;
        }
        let col: Vec<f64> = split.x_others.column(j).iter().copied().collect();
        let spec = spline_spec_for_df(&col, options.df_other, options.degree).map_err(|source| {
            OrthogonalError::Spline {
                covariate: Covariate::Other(j),
                source,
            }
        })?;
        others.push(TermSpec::Spline(spec));
    }
    Ok(DesignSpec { target, others })
}

/// Design for the rows in `rows` (all rows when `None`) under a fixed layout.
pub fn design_for_rows(
    spec: &DesignSpec,
    split: &Split,
    rows: Option<&[usize]>,
) -> Result<AdditiveDesign, PipelineError> {
    let design = match rows {
        None => assemble_design(spec, &split.x_target, &split.x_others, &split.y)?,
        Some(rows) => {
            let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
            assemble_design(
                spec,
                &pick(&split.x_target),
                &split.x_others.select_rows(rows),
                &pick(&split.y),
            )?
        }
    };
    Ok(design)
}

pub fn fit_split(
    split: &Split,
    options: &FitOptions,
    linear: &[String],
) -> Result<OrthogonalModel, PipelineError> {
    let spec = design_spec(split, options, linear)?;
    let design = design_for_rows(&spec, split, None)?;
    Ok(fit_design(design, options)?)
}

use super::fit::FitResult;
use crate::dct::fd_derivatives;
use crate::error::{Error, Result};
use crate::features::{AamVariant, FeatureKind, FeatureSequence};

/// Builds per-frame AAM features from consecutive fits of one model. The similarity
/// parameters are never included.
pub fn extract_aam_features(fits: &[FitResult], variant: AamVariant, frame_rate: f64) -> Result<FeatureSequence> {
    let Some(first) = fits.first() else {
        return Err(Error::invalid("no fits to build features from"));
    };
    if let Some(bad) = fits
        .iter()
        .find(|f| f.model_id != first.model_id || f.p.len() != first.p.len() || f.c.len() != first.c.len())
    {
        return Err(Error::invalid(format!(
            "fits come from different models ({:016x} vs {:016x})",
            first.model_id, bad.model_id
        )));
    }
    let da = match variant {
        AamVariant::DeltaAppearance | AamVariant::ShapeAppearanceDelta => {
            let c: Vec<Vec<f64>> = fits.iter().map(|f| f.c.clone()).collect();
            Some(fd_derivatives(&c)?.0)
        }
        _ => None,
    };
    let frames = fits
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut v = Vec::new();
            match variant {
                AamVariant::Shape => v.extend(&f.p),
                AamVariant::Appearance => v.extend(&f.c),
                AamVariant::ShapeAppearance => {
                    v.extend(&f.p);
                    v.extend(&f.c);
                }
                AamVariant::DeltaAppearance => v.extend(&da.as_ref().unwrap()[i]),
                AamVariant::ShapeAppearanceDelta => {
                    v.extend(&f.p);
                    v.extend(&f.c);
                    v.extend(&da.as_ref().unwrap()[i]);
                }
            }
            v
        })
        .collect();
    FeatureSequence::new(frames, frame_rate, FeatureKind::Aam(variant))
}

use super::metrics::ExposureResult;
use crate::calibration::{calibrate, CalibrationConfig};
use crate::data::SpikeTrainBatch;
use crate::error::Result;
use crate::network::{Network, Record};
use crate::train::{evaluate, EvalSet};

/// Streams unlabelled `exposure` batches through a copy of `net` with all
/// weights frozen, optionally re-running threshold calibration on that
/// stream, then scores the copy on `eval`. Returns the adapted copy too.
pub fn unsupervised_exposure_eval(
    net: &Network,
    exposure: &[SpikeTrainBatch],
    eval: EvalSet<'_>,
    recalibrate: Option<&CalibrationConfig>,
    eval_batch_size: usize,
) -> Result<(ExposureResult, Network)> {
    let zero_shot = evaluate(net, eval, eval_batch_size)?;
    let mut adapted = net.clone();
    let mut exposure_spikes = 0;
    for batch in exposure {
        exposure_spikes += adapted.forward(batch, Record::Spikes)?.total_spikes();
    }
    if let Some(cfg) = recalibrate {
        let cfg = CalibrationConfig {
            probe_batches: exposure.len().max(1),
            ..*cfg
        };
        calibrate(&mut adapted, exposure, &cfg)?;
    }
    let after = evaluate(&adapted, eval, eval_batch_size)?;
    Ok((
        ExposureResult {
            frequency_hz: eval.encoding.frequency_hz,
            recalibrated: recalibrate.is_some(),
            exposure_spikes,
            zero_shot_accuracy: zero_shot.accuracy,
            accuracy: after.accuracy,
        },
        adapted,
    ))
}

use std::path::Path;

use log::info;

use super::svg::{line_chart, scatter, Series};
use super::{write_file, HarnessError, StudyConfig};
use crate::neural::{
    predict_split, regression_metrics, train, EpochLoss, MlpSpec, ModelFile, ModelMetadata,
    RegressionMetrics, ScenarioDataset, Split,
};

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: ModelFile,
    pub history: Vec<EpochLoss>,
    pub test: RegressionMetrics,
    /// Raw-unit test predictions and labels, for scatter plots.
    pub test_pred: Vec<Vec<f64>>,
    pub test_truth: Vec<Vec<f64>>,
}

pub fn train_model(
    data: &ScenarioDataset,
    cfg: &StudyConfig,
) -> Result<TrainedModel, HarnessError> {
    let spec = MlpSpec::new(data.feature_names.len(), cfg.hidden.clone());
    let mut tcfg = cfg.train.clone();
    tcfg.seed = cfg.seed;
    let out = train::<f64>(&spec, data, &tcfg)?;
    let model = ModelFile::from_parts(
        &out.params,
        out.normalizer.clone(),
        ModelMetadata {
            seed: cfg.seed,
            train_loss: out.best_train_loss,
            val_loss: out.best_val_loss,
            best_epoch: out.best_epoch,
            feature_names: data.feature_names.clone(),
        },
    );
    let split = if data.count(Split::Test) > 0 {
        Split::Test
    } else {
        Split::Train
    };
    let (test_pred, test_truth) = predict_split(&model.folded()?, data, split)?;
    let test = regression_metrics(&test_pred, &test_truth);
    info!(
        "trained {} epochs (best {}); test MAE rocof {:.5} Hz/s, fn {:.5} Hz; R2 {:.4} / {:.4}",
        out.history.len(),
        out.best_epoch,
        test.mae[0],
        test.mae[1],
        test.r2[0],
        test.r2[1]
    );
    Ok(TrainedModel {
        model,
        history: out.history,
        test,
        test_pred,
        test_truth,
    })
}

/// Writes the model, loss history and diagnostic figures.
pub fn write_training_outputs(t: &TrainedModel, out_dir: &Path) -> Result<(), HarnessError> {
    t.model.save(&out_dir.join("model.json"))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in &t.history {
        w.serialize(e)?;
    }
    write_file(
        &out_dir.join("loss_history.csv"),
        &w.into_inner()
            .map_err(|e| HarnessError::Io(e.to_string()))?,
    )?;
    let curve = |f: fn(&EpochLoss) -> f64| {
        t.history
            .iter()
            .map(|e| (e.epoch as f64, f(e).max(1e-12).log10()))
            .collect()
    };
    let svg = line_chart(
        "Training and validation loss",
        "epoch",
        "log10 loss",
        &[
            Series {
                name: "train",
                points: curve(|e| e.train_loss),
            },
            Series {
                name: "validation",
                points: curve(|e| e.val_loss),
            },
        ],
        &[],
    );
    write_file(&out_dir.join("fig_loss.svg"), svg.as_bytes())?;
    for (k, name) in ["rocof", "fn"].iter().enumerate() {
        let truth: Vec<f64> = t.test_truth.iter().map(|y| y[k]).collect();
        let pred: Vec<f64> = t.test_pred.iter().map(|y| y[k]).collect();
        let title = format!(
            "{name}: R2 = {:.4}, MAE = {:.5}",
            t.test.r2[k], t.test.mae[k]
        );
        write_file(
            &out_dir.join(format!("fig_scatter_{name}.svg")),
            scatter(&title, &truth, &pred).as_bytes(),
        )?;
    }
    Ok(())
}

use crate::config::{DataSource, ExperimentConfig};
use crate::data::{downsample_2x, load_idx, make_toy_dataset, EncodingSpec, ImageDataset};
use crate::error::{Error, Result};
use crate::network::Shape3;

/// One domain of the schedule with its own data and encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub name: String,
    pub train: ImageDataset,
    pub test: ImageDataset,
    pub encoding: EncodingSpec,
    pub epochs: usize,
}

impl TaskData {
    pub fn input_shape(&self) -> Shape3 {
        Shape3::new(1, self.train.height, self.train.width)
    }
}

/// Materializes every task's train and test sets. Tasks never share samples:
/// toy tasks draw from independent streams, IDX tasks take disjoint slices.
pub fn build_tasks(cfg: &ExperimentConfig) -> Result<Vec<TaskData>> {
    let d = &cfg.data;
    let n_tasks = cfg.tasks.len();
    let loaded = match d.source {
        DataSource::Toy => None,
        DataSource::Idx => {
            let req = |p: &Option<std::path::PathBuf>, field: &str| {
                p.clone().ok_or_else(|| Error::config(field, "required when data.source = \"idx\""))
            };
            let mut train = load_idx(req(&d.train_images, "data.train_images")?, req(&d.train_labels, "data.train_labels")?)?;
            let mut test = load_idx(req(&d.test_images, "data.test_images")?, req(&d.test_labels, "data.test_labels")?)?;
            if d.downsample {
                train = downsample_2x(&train);
                test = downsample_2x(&test);
            }
            for ds in [&mut train, &mut test] {
                if ds.classes > d.classes {
                    return Err(Error::config(
                        "data.classes",
                        format!("labels need {} classes, config has {}", ds.classes, d.classes),
                    ));
                }
                ds.classes = d.classes;
            }
            Some((train, test))
        }
    };

    let mut out = Vec::with_capacity(n_tasks);
    for (i, task) in cfg.tasks.iter().enumerate() {
        let (mut train, mut test) = match &loaded {
            None => (
                make_toy_dataset(
                    d.classes,
                    d.train_per_class,
                    d.feature_dim,
                    d.separation,
                    cfg.seed,
                    &format!("train-{}", task.name),
                ),
                make_toy_dataset(
                    d.classes,
                    d.test_per_class,
                    d.feature_dim,
                    d.separation,
                    cfg.seed,
                    &format!("test-{}", task.name),
                ),
            ),
            Some((train, test)) => {
                let per_train = d.train_limit.unwrap_or(train.len() / n_tasks);
                let per_test = d.test_limit.unwrap_or(test.len() / n_tasks);
                if per_train * n_tasks > train.len() || per_train == 0 {
                    return Err(Error::config(
                        "data.train_limit",
                        format!("{n_tasks} tasks x {per_train} samples exceeds {} training images", train.len()),
                    ));
                }
                if per_test * n_tasks > test.len() || per_test == 0 {
                    return Err(Error::config(
                        "data.test_limit",
                        format!("{n_tasks} tasks x {per_test} samples exceeds {} test images", test.len()),
                    ));
                }
                (train.slice(i * per_train, per_train), test.slice(i * per_test, per_test))
            }
        };
        train.split = format!("train-{}", task.name);
        test.split = format!("test-{}", task.name);
        out.push(TaskData {
            name: task.name.clone(),
            train,
            test,
            encoding: cfg.task_encoding(i),
            epochs: task.epochs,
        });
    }
    Ok(out)
}

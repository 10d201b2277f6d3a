//! Python bindings: images, datasets, training, attacks, distortions, spectra,
//! metrics and the experiment runner. Structured results cross the boundary
//! as dicts or JSON strings.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use shapeshift::adversarial::{self, AttackConfig, Norm};
use shapeshift::dataset::LabeledSample;
use shapeshift::distortions::{Condition, DistortionKind, Distorter};
use shapeshift::metrics;
use shapeshift::model::{self, ModelParams};
use shapeshift::runner::{self, ExperimentConfig as CoreConfig, ExperimentResult, ModelKey};
use shapeshift::spectrum::{self, ProfileMode};

fn py_err(e: shapeshift::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for shapeshift::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse<T: std::str::FromStr<Err = shapeshift::Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

fn mode(name: &str) -> PyResult<ProfileMode> {
    match name {
        "per_radius" => Ok(ProfileMode::PerRadius),
        "cumulative" => Ok(ProfileMode::Cumulative),
        other => Err(PyValueError::new_err(format!("unknown profile mode `{other}`"))),
    }
}

/// A `channels × height × width` raster with values in `[0, 1]`.
#[pyclass(frozen, skip_from_py_object, module = "shapeshift_py")]
#[derive(Clone)]
struct Image(shapeshift::Image);

#[pymethods]
impl Image {
    #[new]
    fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(Self(shapeshift::Image::new(channels, height, width, data).py()?))
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.0.dims()
    }

    /// Channel-major values.
    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn __repr__(&self) -> String {
        let (c, h, w) = self.0.dims();
        format!("Image({c}x{h}x{w})")
    }
}

#[pyclass(frozen, skip_from_py_object, module = "shapeshift_py")]
#[derive(Clone)]
struct Sample(LabeledSample);

#[pymethods]
impl Sample {
    #[getter]
    fn image(&self) -> Image {
        Image(self.0.image.clone())
    }

    #[getter]
    fn shape_label(&self) -> usize {
        self.0.shape_label
    }

    #[getter]
    fn texture_label(&self) -> usize {
        self.0.texture_label
    }

    #[getter]
    fn condition(&self) -> Option<String> {
        self.0.condition.as_ref().map(Condition::id)
    }
}

fn images(list: &[Bound<'_, Image>]) -> Vec<shapeshift::Image> {
    list.iter().map(|i| i.get().0.clone()).collect()
}

/// Trained classifier parameters.
#[pyclass(frozen, module = "shapeshift_py")]
struct Model(ModelParams<f32>);

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(model::load_checkpoint(&path).py()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model::save_checkpoint(&self.0, &path).py()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.0.num_params()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.0.shape.num_classes
    }

    fn predict(&self, py: Python<'_>, images_in: Vec<Bound<'_, Image>>) -> PyResult<Vec<usize>> {
        let imgs = images(&images_in);
        py.detach(|| model::predict(&self.0, &imgs.iter().collect::<Vec<_>>())).py()
    }

    fn logits(&self, py: Python<'_>, images_in: Vec<Bound<'_, Image>>) -> PyResult<Vec<Vec<f32>>> {
        let imgs = images(&images_in);
        let k = self.0.shape.num_classes;
        let flat = py.detach(|| model::predict_logits(&self.0, &imgs.iter().collect::<Vec<_>>())).py()?;
        Ok(flat.chunks(k).map(<[f32]>::to_vec).collect())
    }
}

#[pyclass(module = "shapeshift_py")]
struct ExperimentConfig(CoreConfig);

#[pymethods]
impl ExperimentConfig {
    #[staticmethod]
    fn desk_default() -> Self {
        Self(CoreConfig::desk_default())
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self(CoreConfig::from_toml(text).py()?))
    }

    fn to_toml(&self) -> String {
        self.0.to_toml()
    }

    fn hash(&self) -> String {
        self.0.hash()
    }

    #[getter]
    fn get_seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.seed = seed;
    }

    #[getter]
    fn get_output_dir(&self) -> PathBuf {
        self.0.output_dir.clone()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: PathBuf) {
        self.0.output_dir = dir;
    }

    #[getter]
    fn training_names(&self) -> Vec<String> {
        self.0.training.iter().map(|e| e.name.clone()).collect()
    }
}

/// `{"train": [...], "test": [...], "cue_conflict": [...]}` for the config's dataset.
#[pyfunction]
fn generate_dataset(py: Python<'_>, config: &ExperimentConfig) -> PyResult<BTreeMap<String, Vec<Sample>>> {
    let ds = py.detach(|| runner::generate_dataset(&config.0)).py()?;
    let wrap = |v: Vec<LabeledSample>| v.into_iter().map(Sample).collect::<Vec<_>>();
    Ok(BTreeMap::from([
        ("train".to_string(), wrap(ds.train)),
        ("test".to_string(), wrap(ds.test)),
        ("cue_conflict".to_string(), wrap(ds.cue_conflict)),
    ]))
}

/// Trains one (entry, replica) of the config; returns the model and its
/// per-epoch `(train_loss, eval_accuracy)` history.
#[pyfunction]
#[pyo3(signature = (config, entry, replica = 0))]
fn train(py: Python<'_>, config: &ExperimentConfig, entry: &str, replica: usize) -> PyResult<(Model, Vec<(f64, f64)>)> {
    let cfg = &config.0;
    let index = cfg
        .training
        .iter()
        .position(|e| e.name == entry)
        .ok_or_else(|| PyValueError::new_err(format!("no training entry named `{entry}`")))?;
    if replica >= cfg.replicas {
        return Err(PyValueError::new_err(format!("replica {replica} out of range")));
    }
    let trained = py
        .detach(|| {
            let ds = runner::generate_dataset(cfg)?;
            runner::train_model(cfg, &ds, ModelKey { entry: index, replica })
        })
        .py()?;
    let history = trained.history.iter().map(|h| (h.train_loss, h.eval_accuracy)).collect();
    Ok((Model(trained.params), history))
}

#[pyfunction]
#[pyo3(signature = (model, images, labels, norm, epsilon, steps = 20, step_size = None, random_start = false, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn pgd_attack(
    py: Python<'_>,
    model: &Model,
    images: Vec<Bound<'_, Image>>,
    labels: Vec<usize>,
    norm: &str,
    epsilon: f64,
    steps: usize,
    step_size: Option<f64>,
    random_start: bool,
    seed: u64,
) -> PyResult<Vec<Image>> {
    let cfg = AttackConfig {
        step_size,
        random_start,
        seed,
        ..AttackConfig::new(parse::<Norm>(norm)?, epsilon, steps)
    };
    cfg.validate().py()?;
    let imgs = self::images(&images);
    let adv = py
        .detach(|| adversarial::pgd_attack(&model.0, &imgs.iter().collect::<Vec<_>>(), &labels, &cfg))
        .py()?;
    Ok(adv.into_iter().map(Image).collect())
}

#[pyfunction]
fn project(delta: Vec<f64>, norm: &str, epsilon: f64) -> PyResult<Vec<f64>> {
    adversarial::project(&delta, parse::<Norm>(norm)?, epsilon).py()
}

/// Distorts one image. `target` images supply the mean amplitude spectrum
/// needed by power equalisation.
#[pyfunction]
#[pyo3(signature = (image, kind, level, seed = None, sample_index = 0, target = None))]
fn distort(
    image: &Image,
    kind: &str,
    level: f64,
    seed: Option<u64>,
    sample_index: u64,
    target: Option<Vec<Bound<'_, Image>>>,
) -> PyResult<Image> {
    let cond = Condition::new(parse::<DistortionKind>(kind)?, level, seed).py()?;
    let distorter = match target {
        Some(t) => Distorter::with_target(shapeshift::distortions::mean_amplitude_spectrum(images(&t).iter()).py()?),
        None => Distorter::default(),
    };
    Ok(Image(distorter.apply(&image.0, &cond, sample_index).py()?))
}

#[pyfunction]
#[pyo3(signature = (images, mode = "per_radius"))]
fn dataset_profile(images: Vec<Bound<'_, Image>>, mode: &str) -> PyResult<Vec<f64>> {
    let imgs = self::images(&images);
    Ok(spectrum::dataset_profile(imgs.iter(), self::mode(mode)?).py()?.bins)
}

/// `{"total", "low", "mid", "high"}` between two unit-integral per-radius profiles.
#[pyfunction]
fn spectral_divergence(p: Vec<f64>, q: Vec<f64>) -> PyResult<BTreeMap<&'static str, f64>> {
    let wrap = |bins| spectrum::SpectrumProfile {
        bins,
        normalization: spectrum::Normalization::UnitIntegral,
        mode: ProfileMode::PerRadius,
    };
    let d = spectrum::spectral_divergence(&wrap(p), &wrap(q)).py()?;
    Ok(BTreeMap::from([("total", d.total), ("low", d.low), ("mid", d.mid), ("high", d.high)]))
}

#[pyfunction]
fn consistency(a: Vec<bool>, b: Vec<bool>) -> PyResult<BTreeMap<&'static str, f64>> {
    let c = metrics::consistency(&a, &b).py()?;
    Ok(BTreeMap::from([
        ("observed_equal", c.observed_equal),
        ("both_correct", c.both_correct),
        ("expected_equal", c.expected_equal),
        ("kappa", c.kappa),
    ]))
}

/// Shape-bias scores from `(predicted, shape_label, texture_label)` triples.
#[pyfunction]
fn shape_bias(predictions: Vec<(usize, usize, usize)>) -> PyResult<BTreeMap<&'static str, f64>> {
    let records: Vec<metrics::PredictionRecord> = predictions
        .into_iter()
        .enumerate()
        .map(|(i, (predicted, shape_label, texture))| metrics::PredictionRecord {
            sample_id: i,
            predicted,
            shape_label,
            texture_label: Some(texture),
            condition: None,
        })
        .collect();
    let b = metrics::shape_bias(&records).py()?;
    Ok(BTreeMap::from([
        ("shape_match_acc", b.shape_match_acc),
        ("texture_match_acc", b.texture_match_acc),
        ("shape_bias_ratio", b.shape_bias_ratio),
    ]))
}

#[pyfunction]
#[pyo3(signature = (model_accuracy, reference_accuracy, threshold = 0.2))]
fn condition_filtered_mean(
    model_accuracy: BTreeMap<String, f64>,
    reference_accuracy: BTreeMap<String, f64>,
    threshold: f64,
) -> PyResult<f64> {
    metrics::condition_filtered_mean(&model_accuracy, &reference_accuracy, threshold).py()
}

/// Runs the full pipeline, writes the report, and returns the result as JSON.
#[pyfunction]
#[pyo3(signature = (config, workers = 1))]
fn run(py: Python<'_>, config: &ExperimentConfig, workers: usize) -> PyResult<String> {
    let cfg = &config.0;
    py.detach(|| {
        let result = runner::run(cfg, workers)?;
        runner::emit_report(&result, &cfg.output_dir)?;
        Ok(result.to_json())
    })
    .py()
}

/// `[(check, subject, status, detail)]` for a result JSON string.
#[pyfunction]
fn check_trends(result_json: &str) -> PyResult<Vec<(String, String, String, String)>> {
    let result = ExperimentResult::from_json(result_json).py()?;
    let report = runner::check_trends(&result).py()?;
    Ok(report
        .checks
        .into_iter()
        .map(|c| (c.check.to_string(), c.subject, c.status.to_string(), c.detail))
        .collect())
}

/// `{model: {column: value or None}}` of the embedded published results, in percent.
#[pyfunction]
fn reference_table() -> BTreeMap<String, BTreeMap<String, Option<f64>>> {
    let t = runner::reference_table();
    t.rows
        .iter()
        .map(|r| {
            let cols = t.columns.iter().zip(r.values).map(|(c, v)| (c.to_string(), v)).collect();
            (r.model.to_string(), cols)
        })
        .collect()
}

#[pymodule]
fn shapeshift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

/// Adds every class and function to `m`; also used to embed the module.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", shapeshift::VERSION)?;
    m.add_class::<Image>()?;
    m.add_class::<Sample>()?;
    m.add_class::<Model>()?;
    m.add_class::<ExperimentConfig>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(pgd_attack, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(distort, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_profile, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(consistency, m)?)?;
    m.add_function(wrap_pyfunction!(shape_bias, m)?)?;
    m.add_function(wrap_pyfunction!(condition_filtered_mean, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(check_trends, m)?)?;
    m.add_function(wrap_pyfunction!(reference_table, m)?)?;
    Ok(())
}

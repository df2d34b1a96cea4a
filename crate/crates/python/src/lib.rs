//! Python bindings: curriculum units and schedules, the tokenizer, corpus
//! preparation, training, checkpoint scoring and the statistics helpers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use curriculum_lm::corpus::{build_age_ordered_corpus, parse_transcripts, TranscriptFormat};
use curriculum_lm::curriculum::{build_schedule, CurriculumName, MaskingPolicy};
use curriculum_lm::eval::{self, MinimalPair, ScoringMethod, UnigramModel};
use curriculum_lm::model::{self, Checkpoint};
use curriculum_lm::tagging::{self, TagVocabulary};
use curriculum_lm::tokenizer::TokenizerModel;
use curriculum_lm::trainer::{self, TrainConfig, TrainOptions};
use curriculum_lm::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(format!("{}: {other}", other.kind())),
    }
}

/// Tag set of a named curriculum unit, sorted.
#[pyfunction]
fn resolve_unit(name: &str) -> PyResult<Vec<String>> {
    let unit = tagging::resolve_unit(name).map_err(py_err)?;
    Ok(unit.tags.into_iter().collect())
}

#[pyfunction]
fn unit_names() -> Vec<&'static str> {
    tagging::UNIT_NAMES.to_vec()
}

/// Stages as `(start_step, end_step, unit, tag_objective)` tuples.
#[pyfunction]
#[pyo3(signature = (name, total_steps, boundaries=None, active_ratio=0.4, base_ratio=0.15))]
fn schedule(
    name: &str,
    total_steps: usize,
    boundaries: Option<Vec<f64>>,
    active_ratio: f64,
    base_ratio: f64,
) -> PyResult<Vec<(usize, usize, String, bool)>> {
    let name: CurriculumName = name.parse().map_err(py_err)?;
    let policy = MaskingPolicy::new(active_ratio, base_ratio).map_err(py_err)?;
    let s = build_schedule(name, total_steps, boundaries.as_deref(), policy, &TagVocabulary::default())
        .map_err(py_err)?;
    Ok(s.stages
        .into_iter()
        .map(|st| (st.start_step, st.end_step, st.unit.name, st.tag_objective))
        .collect())
}

#[pyfunction]
#[pyo3(signature = (step, max_steps=400_000, warmup=100_000, peak=0.001))]
fn lr_at(step: usize, max_steps: usize, warmup: usize, peak: f64) -> f64 {
    model::lr_at(step, max_steps, warmup, peak)
}

/// `(logp_model - logp_unigram) / n_tokens`.
#[pyfunction]
fn slor(logp_model: f64, logp_unigram: f64, n_tokens: usize) -> PyResult<f64> {
    if n_tokens == 0 {
        return Err(PyValueError::new_err("n_tokens must be at least 1"));
    }
    Ok(eval::slor_from_parts(logp_model, logp_unigram, n_tokens))
}

/// Paired t-test; returns a dict with n, df, mean_diff, sd_diff, t, p, degenerate.
#[pyfunction]
fn paired_t_test(py: Python<'_>, a: Vec<f64>, b: Vec<f64>) -> PyResult<Py<PyAny>> {
    let r = eval::paired_t_test(&a, &b).map_err(py_err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("n", r.n)?;
    d.set_item("df", r.df)?;
    d.set_item("mean_diff", r.mean_diff)?;
    d.set_item("sd_diff", r.sd_diff)?;
    d.set_item("t", r.t)?;
    d.set_item("p", r.p)?;
    d.set_item("degenerate", r.degenerate)?;
    Ok(d.into_any().unbind())
}

/// Age-ordered caregiver utterances from transcript files.
#[pyfunction]
#[pyo3(signature = (paths, format="jsonl", cutoff_months=72))]
fn prepare_corpus(paths: Vec<PathBuf>, format: &str, cutoff_months: u32) -> PyResult<Vec<String>> {
    let format: TranscriptFormat = format.parse().map_err(py_err)?;
    let mut utts = Vec::new();
    for p in &paths {
        let f = File::open(p).map_err(|e| PyIOError::new_err(format!("{}: {e}", p.display())))?;
        let source = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        utts.extend(parse_transcripts(BufReader::new(f), format, &source).map_err(py_err)?);
    }
    let corpus = build_age_ordered_corpus(utts, cutoff_months).map_err(py_err)?;
    Ok(corpus.lines().map(str::to_string).collect())
}

/// Trains from a flat `key = value` config; returns the final checkpoint path.
#[pyfunction]
#[pyo3(signature = (config_text, stop_at=None))]
fn train(py: Python<'_>, config_text: &str, stop_at: Option<usize>) -> PyResult<String> {
    let cfg = TrainConfig::parse(config_text).map_err(py_err)?;
    let options = TrainOptions { resume_from: None, stop_at };
    let out = py.detach(|| trainer::train(&cfg, &options)).map_err(py_err)?;
    Ok(out.last_checkpoint.display().to_string())
}

#[pyclass(name = "Tokenizer", module = "pycurriculum")]
struct PyTokenizer {
    inner: TokenizerModel,
}

#[pymethods]
impl PyTokenizer {
    #[staticmethod]
    fn train(lines: Vec<String>, vocab_size: usize) -> PyResult<Self> {
        let inner = TokenizerModel::train(lines.iter().map(String::as_str), vocab_size).map_err(py_err)?;
        Ok(PyTokenizer { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyTokenizer { inner: TokenizerModel::load(&path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        self.inner.encode(text).token_ids
    }

    fn decode(&self, ids: Vec<u32>) -> PyResult<String> {
        self.inner.decode(&ids).map_err(py_err)
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn __len__(&self) -> usize {
        self.inner.vocab_size()
    }
}

#[pyclass(name = "Model", module = "pycurriculum")]
struct PyModel {
    ck: Checkpoint,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { ck: Checkpoint::load(&path).map_err(py_err)? })
    }

    #[getter]
    fn step(&self) -> usize {
        self.ck.header.step
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.ck.params.n_params()
    }

    /// Model config as JSON text.
    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.ck.header.model).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn pll_score(&self, py: Python<'_>, tokenizer: &PyTokenizer, sentence: &str) -> PyResult<f64> {
        py.detach(|| eval::pll_score(&self.ck.params, &tokenizer.inner, sentence)).map_err(py_err)
    }

    /// Scores `(phenomenon, good, bad)` triples. Returns the overall
    /// accuracy, per-phenomenon accuracies and per-pair
    /// `(score_good, score_bad, correct)`.
    #[pyo3(signature = (tokenizer, pairs, method="logprob", unigram_corpus=None, smoothing=1.0))]
    #[allow(clippy::type_complexity)]
    fn score_pairs(
        &self,
        py: Python<'_>,
        tokenizer: &PyTokenizer,
        pairs: Vec<(String, String, String)>,
        method: &str,
        unigram_corpus: Option<Vec<String>>,
        smoothing: f64,
    ) -> PyResult<(f64, BTreeMap<String, f64>, Vec<(f64, f64, bool)>)> {
        let method: ScoringMethod = method.parse().map_err(py_err)?;
        let pairs: Vec<MinimalPair> = pairs
            .into_iter()
            .map(|(phenomenon, good, bad)| MinimalPair { phenomenon, good, bad })
            .collect();
        let tok = &tokenizer.inner;
        let unigram = unigram_corpus
            .map(|lines| UnigramModel::from_lines(tok, lines.iter().map(String::as_str), smoothing))
            .transpose()
            .map_err(py_err)?;
        let results = py
            .detach(|| eval::score_pairs(&self.ck.params, tok, &pairs, method, unigram.as_ref()))
            .map_err(py_err)?;
        let summary = eval::accuracy_by_phenomenon(&results).map_err(py_err)?;
        Ok((
            summary.overall,
            summary.phenomena.into_iter().map(|(k, v)| (k, v.accuracy)).collect(),
            results.iter().map(|r| (r.score_good, r.score_bad, r.correct)).collect(),
        ))
    }
}

#[pymodule]
fn pycurriculum(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(resolve_unit, m)?)?;
    m.add_function(wrap_pyfunction!(unit_names, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(slor, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(prepare_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<PyTokenizer>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}

//! Python module `figtab`: tables, metrics, figure detection, extraction and evaluation.

use std::path::PathBuf;

use ::figtab::bench::{self, EvalOptions, ReportFormat};
use ::figtab::export::{self, ExportFormat, ExportOptions};
use ::figtab::metrics::{self, MatchResult, Tolerance};
use ::figtab::pdf::{self, DetectOptions, PdfDocument};
use ::figtab::table::{self, CellEdit, DataTable};
use ::figtab::vlm::{BackendRegistry, PromptKind, PromptProfile, VlmClient};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

create_exception!(figtab, FigtabError, PyException);
create_exception!(figtab, MalformedPdfError, FigtabError);
create_exception!(figtab, TableError, FigtabError);
create_exception!(figtab, ProviderError, FigtabError);
create_exception!(figtab, ConfigError, FigtabError);

fn err<E: std::fmt::Display>(kind: fn(String) -> PyErr) -> impl Fn(E) -> PyErr {
    move |e| kind(e.to_string())
}

fn table_err(m: String) -> PyErr {
    TableError::new_err(m)
}
fn config_err(m: String) -> PyErr {
    ConfigError::new_err(m)
}
fn base_err(m: String) -> PyErr {
    FigtabError::new_err(m)
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(ConfigError::new_err)
}

/// A parsed table. Cells keep their raw text; `numeric` holds parsed values.
#[pyclass(name = "Table", module = "figtab", from_py_object)]
#[derive(Clone)]
pub struct PyTable {
    inner: DataTable,
}

#[pymethods]
impl PyTable {
    #[new]
    fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        PyTable {
            inner: DataTable::from_raw(header, rows),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        DataTable::from_json_str(text)
            .map(|inner| PyTable { inner })
            .map_err(err(table_err))
    }

    #[getter]
    fn header(&self) -> Vec<String> {
        self.inner.header.clone()
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<String>> {
        self.inner.raw_rows()
    }

    /// Row-major parsed values; `None` for non-numeric cells.
    #[getter]
    fn numeric(&self) -> Vec<Vec<Option<f64>>> {
        self.inner
            .rows
            .iter()
            .map(|r| r.iter().map(|c| c.numeric).collect())
            .collect()
    }

    #[getter]
    fn row_confidence(&self) -> Vec<f64> {
        self.inner.row_confidence.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.height(), self.inner.width())
    }

    fn __len__(&self) -> usize {
        self.inner.height()
    }

    fn __eq__(&self, other: &PyTable) -> bool {
        self.inner.header == other.inner.header && self.inner.rows == other.inner.rows
    }

    fn __repr__(&self) -> String {
        format!("Table(header={:?}, rows={})", self.inner.header, self.inner.height())
    }

    /// A copy with one cell replaced and re-parsed.
    fn apply_edit(&self, row: usize, col: usize, raw: String) -> PyResult<PyTable> {
        self.inner
            .apply_edit(&CellEdit {
                row_index: row,
                col_index: col,
                new_raw: raw,
            })
            .map(|inner| PyTable { inner })
            .map_err(err(table_err))
    }

    fn to_tsv(&self) -> String {
        self.inner.to_tsv()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_json_form()).map_err(err(base_err))
    }

    #[pyo3(signature = (format, include_confidence = false, table_name = "extracted"))]
    fn export<'py>(
        &self,
        py: Python<'py>,
        format: &str,
        include_confidence: bool,
        table_name: &str,
    ) -> PyResult<Bound<'py, PyBytes>> {
        let format: ExportFormat = parse(format)?;
        let opts = ExportOptions {
            include_confidence,
            table_name: table_name.to_string(),
        };
        let bytes = export::export_table(&self.inner, format, &opts).map_err(err(base_err))?;
        Ok(PyBytes::new(py, &bytes))
    }
}

#[pyfunction]
fn parse_reply(text: &str) -> PyResult<PyTable> {
    table::parse_reply(text)
        .map(|inner| PyTable { inner })
        .map_err(err(table_err))
}

#[pyfunction]
fn parse_number(raw: &str) -> Option<f64> {
    table::parse_number(raw).numeric
}

/// Reads csv, tsv or json bytes.
#[pyfunction]
fn import_table(data: &[u8], format: &str) -> PyResult<PyTable> {
    let t = match parse::<ExportFormat>(format)? {
        ExportFormat::Csv => export::import_csv(data),
        ExportFormat::Tsv => export::import_tsv(data),
        ExportFormat::Json => export::import_json(data),
        other => return Err(ConfigError::new_err(format!("cannot import {other}"))),
    };
    t.map(|inner| PyTable { inner }).map_err(err(table_err))
}

fn tolerance(tol: f64) -> PyResult<Tolerance> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(ConfigError::new_err(format!("tolerance must be positive, got {tol}")));
    }
    Ok(Tolerance::relative(tol))
}

#[pyfunction]
#[pyo3(signature = (pred, gt, tol = 0.05))]
fn value_match(pred: f64, gt: f64, tol: f64) -> PyResult<bool> {
    Ok(metrics::value_match(pred, gt, &tolerance(tol)?))
}

/// Precision, recall and f1 of a match.
#[pyclass(name = "Score", module = "figtab", frozen, get_all)]
pub struct PyScore {
    precision: f64,
    recall: f64,
    f1: f64,
    matched: usize,
    pred_total: usize,
    gt_total: usize,
}

#[pymethods]
impl PyScore {
    fn __repr__(&self) -> String {
        format!(
            "Score(precision={}, recall={}, f1={}, matched={})",
            self.precision, self.recall, self.f1, self.matched
        )
    }
}

impl From<MatchResult> for PyScore {
    fn from(m: MatchResult) -> Self {
        PyScore {
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            matched: m.matched,
            pred_total: m.pred_total,
            gt_total: m.gt_total,
        }
    }
}

/// Matrices are lists of columns.
#[pyfunction]
#[pyo3(signature = (pred, gt, tol = 0.05))]
fn rmsf1(pred: Vec<Vec<Option<f64>>>, gt: Vec<Vec<Option<f64>>>, tol: f64) -> PyResult<PyScore> {
    metrics::rmsf1(&pred, &gt, &tolerance(tol)?)
        .map(PyScore::from)
        .map_err(err(base_err))
}

#[pyfunction]
#[pyo3(signature = (pred, gt_series, tol = 0.05))]
fn best_column_rmsf1(pred: Vec<Vec<Option<f64>>>, gt_series: Vec<f64>, tol: f64) -> PyResult<PyScore> {
    metrics::best_column_rmsf1(&pred, &gt_series, &tolerance(tol)?)
        .map(PyScore::from)
        .map_err(err(base_err))
}

#[pyfunction]
#[pyo3(signature = (pred, gt, tol = 0.05))]
fn recall(pred: Vec<f64>, gt: Vec<f64>, tol: f64) -> PyResult<f64> {
    metrics::recall(&pred, &gt, &tolerance(tol)?).map_err(err(base_err))
}

#[pyfunction]
#[pyo3(signature = (scores, level = 0.95, resamples = 10_000, seed = 0))]
fn bootstrap_ci(scores: Vec<f64>, level: f64, resamples: usize, seed: u64) -> PyResult<(f64, f64)> {
    bench::bootstrap_ci(&scores, level, resamples, seed).map_err(err(base_err))
}

#[pyclass(name = "Figure", module = "figtab", frozen, get_all)]
pub struct PyFigure {
    label: String,
    /// 0-based.
    page: usize,
    /// `(x0, y0, x1, y1)` in points, origin top-left.
    crop: (f64, f64, f64, f64),
    caption: String,
    width: u32,
    height: u32,
    dpi: u32,
    png: Py<PyBytes>,
}

#[pymethods]
impl PyFigure {
    fn __repr__(&self) -> String {
        format!("Figure(label={:?}, page={}, size={}x{})", self.label, self.page, self.width, self.height)
    }
}

#[pyfunction]
#[pyo3(signature = (data, dpi = pdf::DEFAULT_DPI))]
fn detect_figures(py: Python<'_>, data: Vec<u8>, dpi: u32) -> PyResult<Vec<PyFigure>> {
    let found = py.detach(move || -> Result<Vec<(pdf::FigureRegion, Vec<u8>)>, String> {
        let doc = PdfDocument::open(&data).map_err(|e| e.to_string())?;
        let regions = pdf::detect_figures(&doc, &DetectOptions { dpi, ..Default::default() }).map_err(|e| e.to_string())?;
        regions
            .into_iter()
            .map(|r| {
                let png = ::figtab::vlm::encode_png(&r.image).map_err(|e| e.to_string())?;
                Ok((r, png))
            })
            .collect()
    });
    let found = found.map_err(MalformedPdfError::new_err)?;
    Ok(found
        .into_iter()
        .map(|(r, png)| PyFigure {
            label: r.caption.label,
            page: r.caption.page_index,
            crop: (r.crop.x0, r.crop.y0, r.crop.x1, r.crop.y1),
            caption: r.caption.caption_text,
            width: r.image.width(),
            height: r.image.height(),
            dpi: r.dpi,
            png: PyBytes::new(py, &png).unbind(),
        })
        .collect())
}

fn runtime() -> PyResult<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(err(base_err))
}

fn registry(backends_file: Option<PathBuf>) -> PyResult<BackendRegistry> {
    match backends_file {
        Some(p) => BackendRegistry::load(&p).map_err(err(config_err)),
        None => Ok(BackendRegistry::builtin()),
    }
}

/// Sends PNG bytes to a named backend; returns the raw reply and its parsed table.
/// API keys come from the environment variable the backend config names.
#[pyfunction]
#[pyo3(signature = (png, backend = None, backends_file = None, prompt = "simple"))]
fn extract(
    py: Python<'_>,
    png: Vec<u8>,
    backend: Option<&str>,
    backends_file: Option<PathBuf>,
    prompt: &str,
) -> PyResult<(String, PyTable)> {
    let kind: PromptKind = parse(prompt)?;
    let cfg = registry(backends_file)?
        .resolve(backend)
        .map_err(err(config_err))?
        .clone();
    let client = VlmClient::new(cfg).map_err(err(config_err))?;
    let rt = runtime()?;
    let raw = py
        .detach(|| rt.block_on(client.extract_png(&png, &PromptProfile::for_kind(kind))))
        .map_err(|e| ProviderError::new_err(format!("{}: {e}", e.code())))?;
    let table = table::parse_reply(&raw.response_text).map_err(err(table_err))?;
    Ok((raw.response_text, PyTable { inner: table }))
}

/// Scores a backend on a manifest and returns the report as JSON text.
/// `backend="echo"` answers each item with its own ground truth, scaled by `1 + perturb`.
#[pyfunction]
#[pyo3(signature = (manifest, backend = "echo", backends_file = None, prompt = "simple", tolerance = 0.05, seed = 0, resamples = 10_000, perturb = None, format = "json"))]
#[allow(clippy::too_many_arguments)]
fn run_eval(
    py: Python<'_>,
    manifest: PathBuf,
    backend: &str,
    backends_file: Option<PathBuf>,
    prompt: &str,
    tolerance: f64,
    seed: u64,
    resamples: usize,
    perturb: Option<f64>,
    format: &str,
) -> PyResult<String> {
    let kind: PromptKind = parse(prompt)?;
    let format: ReportFormat = parse(format)?;
    let (dataset, records) = bench::load_named_dataset(&manifest).map_err(err(config_err))?;
    let client = if backend == "echo" && backends_file.is_none() {
        bench::echo_client(&records, perturb).map_err(err(config_err))?
    } else {
        let cfg = registry(backends_file)?
            .resolve(Some(backend))
            .map_err(err(config_err))?
            .clone();
        VlmClient::new(cfg).map_err(err(config_err))?
    };
    let options = EvalOptions {
        tolerance: self::tolerance(tolerance)?,
        seed,
        resamples,
        dataset,
        ..Default::default()
    };
    let rt = runtime()?;
    let report = py
        .detach(|| rt.block_on(bench::run_eval(&records, &client, &PromptProfile::for_kind(kind), &options)))
        .map_err(err(base_err))?;
    String::from_utf8(bench::render_report(&report, format)).map_err(err(base_err))
}

#[pymodule]
#[pyo3(name = "figtab")]
fn figtab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("FigtabError", py.get_type::<FigtabError>())?;
    m.add("MalformedPdfError", py.get_type::<MalformedPdfError>())?;
    m.add("TableError", py.get_type::<TableError>())?;
    m.add("ProviderError", py.get_type::<ProviderError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add_class::<PyTable>()?;
    m.add_class::<PyScore>()?;
    m.add_class::<PyFigure>()?;
    m.add_function(wrap_pyfunction!(parse_reply, m)?)?;
    m.add_function(wrap_pyfunction!(parse_number, m)?)?;
    m.add_function(wrap_pyfunction!(import_table, m)?)?;
    m.add_function(wrap_pyfunction!(value_match, m)?)?;
    m.add_function(wrap_pyfunction!(recall, m)?)?;
    m.add_function(wrap_pyfunction!(rmsf1, m)?)?;
    m.add_function(wrap_pyfunction!(best_column_rmsf1, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(detect_figures, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(run_eval, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pyo3::types::PyDict;

    fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
        Python::attach(|py| {
            let m = PyModule::new(py, "figtab").unwrap();
            figtab_module(&m).unwrap();
            let globals = PyDict::new(py);
            globals.set_item("figtab", m).unwrap();
            f(py, &globals);
        });
    }

    fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) {
        let code = std::ffi::CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(globals), None) {
            e.display(py);
            panic!("python snippet failed");
        }
    }

    #[test]
    fn table_round_trip_from_python() {
        with_module(|py, g| {
            run(
                py,
                g,
                r#"
t = figtab.parse_reply("Year\tSales\n2020\t1,200\n2021\t2.5k")
assert t.header == ["Year", "Sales"], t.header
assert t.numeric[1][1] == 2500.0
assert t.shape == (2, 2)
e = t.apply_edit(0, 1, "2.3 million")
assert e.numeric[0][1] == 2300000.0 and t.numeric[0][1] == 1200.0
csv = e.export("csv").decode()
assert figtab.import_table(csv.encode(), "csv") == e
try:
    t.apply_edit(9, 0, "x")
    raise AssertionError("no error")
except figtab.TableError:
    pass
"#,
            );
        });
    }

    #[test]
    fn metrics_from_python() {
        with_module(|py, g| {
            run(
                py,
                g,
                r#"
assert figtab.value_match(10.5, 10.0)
assert not figtab.value_match(10.6, 10.0)
s = figtab.rmsf1([[1.0, 2.0]], [[2.0, 1.0]])
assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)
b = figtab.best_column_rmsf1([[9.0, 9.0], [1.0, 2.0]], [1.0, 2.0])
assert b.f1 == 1.0
assert figtab.bootstrap_ci([0.5, 0.5, 0.5], seed=3) == (0.5, 0.5)
"#,
            );
        });
    }

    #[test]
    fn errors_are_typed() {
        with_module(|py, g| {
            run(
                py,
                g,
                r#"
try:
    figtab.detect_figures(b"not a pdf")
    raise AssertionError("no error")
except figtab.MalformedPdfError as e:
    assert isinstance(e, figtab.FigtabError)
try:
    figtab.parse_reply("")
    raise AssertionError("no error")
except figtab.TableError:
    pass
"#,
            );
        });
    }
}

use pyo3::prelude::*;

#[pymodule]
fn sita(_m: &Bound<PyModule>) -> PyResult<()> {
    Ok(())
}

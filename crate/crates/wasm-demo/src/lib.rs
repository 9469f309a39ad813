//! wasm-bindgen bindings for the browser page in `www/`.

mod scene;

pub use scene::Scene;
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct Demo(Scene);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(rate_bpm: f64, chest_mm: f64, snr_db: f64, seed: u32) -> Result<Demo, JsError> {
        Scene::simulate(rate_bpm, chest_mm, snr_db, seed.into())
            .map(Demo)
            .map_err(|e| JsError::new(&e))
    }

    pub fn subcarriers(&self) -> usize {
        self.0.subcarriers()
    }

    pub fn locus(&self, subcarrier: usize) -> Result<Vec<f64>, JsError> {
        self.0.locus(subcarrier).map_err(|e| JsError::new(&e))
    }

    pub fn circle(&self, subcarrier: usize) -> Result<Vec<f64>, JsError> {
        self.0.circle(subcarrier).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = bnrScan)]
    pub fn bnr_scan(&self, subcarrier: usize, theta_step: f64) -> Result<Vec<f64>, JsError> {
        self.0.bnr_scan(subcarrier, theta_step).map_err(|e| JsError::new(&e))
    }

    pub fn estimate(&self) -> String {
        self.0.estimate()
    }
}

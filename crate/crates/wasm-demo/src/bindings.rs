use wasm_bindgen::prelude::*;

use crate::Demo;

fn js<T: serde::Serialize>(value: cfsearch_core::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON array of `[residual, loss]` pairs.
#[wasm_bindgen(js_name = pinballCurve)]
pub fn pinball_curve(tau: f64, lo: f64, hi: f64, n: usize) -> Result<String, JsError> {
    js(crate::pinball_curve(tau, lo, hi, n))
}

#[wasm_bindgen(js_name = Demo)]
pub struct DemoHandle(Demo);

#[wasm_bindgen(js_class = Demo)]
impl DemoHandle {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<DemoHandle, JsError> {
        Demo::new(seed).map(DemoHandle).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn levels(&self) -> Vec<f64> {
        self.0.levels().to_vec()
    }

    pub fn fan(&self, level: usize, horizon: usize) -> Result<String, JsError> {
        js(self.0.fan(level, horizon))
    }

    pub fn search(&self, goal: f64, horizon: usize, population: usize, generations: usize, seed: u64) -> Result<String, JsError> {
        js(self.0.search(goal, horizon, population, generations, seed))
    }
}

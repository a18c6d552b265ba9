//! Criterion benchmarks for the forward pass, Grad-CAM, Kernel SHAP and SSIM.
//! Run with `cargo bench -p salaudit-bench`.

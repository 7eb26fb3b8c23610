//! End-to-end system orchestration, metrics, and reports.

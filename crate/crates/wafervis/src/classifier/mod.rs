//! Minimal trainable CNN engine.

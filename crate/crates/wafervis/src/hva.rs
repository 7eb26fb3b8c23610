//! Higher visual area: one-shot street templates, feature attention, and
//! soft-max pooling.

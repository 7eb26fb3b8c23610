//! Street region-of-interest extraction and canonicalization.

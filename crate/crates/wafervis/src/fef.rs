//! Frontal eye field: spatial competition dynamics and saccade selection.

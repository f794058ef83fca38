//! Named acceptance suite (placeholder).

//! Score-to-score music generation with a stacked LSTM.
//!
//! Scores are read from MusicXML or compressed `.mxl`, flattened into
//! `(sound, duration[, instrument])` tokens, and used to train a next-token
//! LSTM. Generation seeds the model with a training window and predicts
//! greedily under duration, scale, octave and rest constraints, then writes
//! MusicXML and MIDI.

pub mod cli;
pub mod corpus;
pub mod generator;
pub mod neural;
pub mod rng;
pub mod score;

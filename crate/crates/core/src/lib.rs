//! Emotion-intensity regression for tweets.
//!
//! Three prediction legs feed a weighted ensemble:
//!
//! * a character-level language model whose hidden states (last step plus
//!   mean over steps) are regressed with a linear ε-SVR ([`charlm`], [`svr`]),
//! * a word-level bidirectional GRU regressor ([`word`]),
//! * a lexicon and n-gram feature SVR baseline ([`lexicon`], [`svr`]).
//!
//! [`ensemble`] tunes the convex combination weights on a development set and
//! [`metrics`] scores predictions with Pearson and Spearman correlation over
//! the full intensity range and over gold intensities of at least 0.5.

pub mod charlm;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod io_util;
pub mod lexicon;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod svr;
pub mod synthetic;
pub mod word;

pub use data::{DatasetSplit, EmotionCategory, SplitName, TweetRecord};
pub use error::{Error, Result};

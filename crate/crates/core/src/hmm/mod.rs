//! HTK-style viseme recognizer: diagonal GMM emissions, left-to-right class models
//! (silence with skip and back transitions), flat start, embedded Baum-Welch with
//! mixture growth, and Viterbi decoding over a loop of class models.

pub mod decode;
pub mod gmm;
pub mod io;
pub mod model;
pub mod train;

pub use decode::{decode_all, viterbi_decode, viterbi_decode_scored};
pub use gmm::{gmm_logpdf, log_sum_exp, GaussianMixture, MAX_COMPONENTS};
pub use io::{read_transcripts, write_transcripts};
pub use model::{HmmModel, HmmSet, Transcript, Transitions};
pub use train::{
    collect_labels, embedded_reestimate, flat_start, sentence_log_likelihood, split_mixtures, train_hmms, HmmConfig,
    Utterance,
};

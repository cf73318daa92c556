//! Trains a small LMCL model, extracts features for unseen samples and
//! scores verification (accuracy, TAR@FAR) and identification (rank-1).
//!
//! cargo run --release --example verification_eval

use marginlab::eval::{
    rank1_identification, tar_at_far, verification_accuracy, GalleryProbe, PairSet,
};
use marginlab::experiments::{balanced_pairs, margin_spec, Setup};

fn main() {
    let mut setup = Setup::verification();
    setup.model.feature_dim = 8;
    let trained = setup.run(margin_spec(30.0, 0.35).unwrap(), 11).unwrap();
    println!(
        "train accuracy {:.4}, converged {}",
        trained.run.final_accuracy(),
        trained.run.converged
    );

    let unseen = setup.blob_spec(11).sample(42, 50).unwrap();
    let feats = trained.run.model.extract_features(&unseen.samples).unwrap();

    let pairs = PairSet::from_indices(
        &feats,
        &unseen.labels,
        &balanced_pairs(&unseen.labels, 3000, 5).unwrap(),
    )
    .unwrap();
    let v = verification_accuracy(&pairs).unwrap();
    println!(
        "verification accuracy {:.4} at threshold {:.4}",
        v.accuracy, v.threshold
    );
    for far in [0.1, 0.01, 0.001] {
        println!("TAR @ FAR {far}: {:.4}", tar_at_far(&pairs, far).unwrap());
    }

    // first sample of each class as gallery, the rest as probes
    let mut gallery = Vec::new();
    let mut probes = Vec::new();
    for (i, &l) in unseen.labels.iter().enumerate() {
        let entry = (feats.row(i).to_vec(), l.to_string());
        if i == 0 || unseen.labels[i - 1] != l {
            gallery.push(entry);
        } else {
            probes.push(entry);
        }
    }
    let gp = GalleryProbe::new(gallery, probes).unwrap();
    println!(
        "rank-1 identification {:.4}",
        rank1_identification(&gp).unwrap()
    );
}
